"""Block-sharded dataset with an exact storage-query ledger.

The cost model counts one query per access operation against the store,
whether the operation touches a single example or a whole block of b:
chunked object stores charge per object access, not per byte. Reads and
writes are tallied separately for the offline (pre-training) and online
(training) phases; the phase switch is one-way.

On-disk layout (bit-exact round trip):

    <root>/manifest      magic "CRG2", format version u32, then
                         N, b, d, m as little-endian u64
    <root>/<block_id>    one file per block, name = zero-padded decimal
                         id; each record is origin index (u64 LE),
                         label flag (u8), label (f64 LE, iff flag=1),
                         then d payload floats (f64 LE)

The ledger is a per-run measurement and is never persisted.
"""
from __future__ import annotations

import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    BlockNotFoundError,
    ContractError,
    DimensionError,
    EmptyStoreError,
    PhaseError,
    StoreFormatError,
)

MAGIC = b"CRG2"
FORMAT_VERSION = 1

OFFLINE = "offline"
ONLINE = "online"


@dataclass(frozen=True)
class ExampleRecord:
    """One training example: origin index plus float64 payload.

    `index` is the position in the original dataset. Re-sampling during
    the offline shuffle may duplicate records; the origin index rides
    along unchanged.
    """

    index: int
    payload: np.ndarray
    label: Optional[float] = None

    def __post_init__(self):
        payload = np.asarray(self.payload, dtype=np.float64)
        if payload.ndim != 1:
            raise DimensionError(f"payload must be 1-D, got shape {payload.shape}")
        object.__setattr__(self, "payload", payload)

    @property
    def dim(self) -> int:
        return self.payload.shape[0]


@dataclass
class Block:
    """An ordered chunk of exactly b records; the unit of storage access."""

    block_id: Optional[int]
    records: list[ExampleRecord]

    def __len__(self) -> int:
        return len(self.records)

    def payload_matrix(self) -> np.ndarray:
        return np.stack([r.payload for r in self.records])


class QueryLedger:
    """Exact, thread-safe counters of storage access queries.

    Four monotone counters, split by phase. The phase starts offline and
    can be switched to online exactly once per run; offline-phase
    operations attempted afterwards raise `PhaseError` at the call site.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.offline_reads = 0
        self.offline_writes = 0
        self.online_reads = 0
        self.online_writes = 0
        self._phase = OFFLINE

    @property
    def phase(self) -> str:
        return self._phase

    def begin_online(self) -> None:
        """Flip offline -> online. No-op if already online."""
        with self._lock:
            self._phase = ONLINE

    def count_read(self) -> None:
        with self._lock:
            if self._phase == OFFLINE:
                self.offline_reads += 1
            else:
                self.online_reads += 1

    def count_write(self) -> None:
        with self._lock:
            if self._phase == OFFLINE:
                self.offline_writes += 1
            else:
                self.online_writes += 1

    @property
    def total(self) -> int:
        return self.offline_reads + self.offline_writes + self.online_reads + self.online_writes

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "phase": self._phase,
                "offline_reads": self.offline_reads,
                "offline_writes": self.offline_writes,
                "online_reads": self.online_reads,
                "online_writes": self.online_writes,
                "total": self.total,
            }

    def __repr__(self):
        s = self.snapshot()
        return (
            f"QueryLedger(phase={s['phase']}, offline={s['offline_reads']}r/{s['offline_writes']}w, "
            f"online={s['online_reads']}r/{s['online_writes']}w, total={s['total']})"
        )


class BlockStore:
    """N blocks of b records each, with every access metered.

    Single-writer / multi-reader: reads may run concurrently (counter
    increments are atomic); mutations require exclusive access.
    """

    def __init__(self, b: int, d: int, ledger: Optional[QueryLedger] = None):
        if b < 1:
            raise ContractError(f"block size must be >= 1, got {b}")
        if d < 1:
            raise DimensionError(f"payload dimension must be >= 1, got {d}")
        self.b = b
        self.d = d
        self.ledger = ledger if ledger is not None else QueryLedger()
        self._blocks: dict[int, Block] = {}
        self._next_id = 0

    # -- geometry ----------------------------------------------------

    @property
    def N(self) -> int:
        return len(self._blocks)

    @property
    def m(self) -> int:
        return self.N * self.b

    def block_ids(self) -> list[int]:
        return sorted(self._blocks)

    def __contains__(self, block_id: int) -> bool:
        return block_id in self._blocks

    # -- metered access ----------------------------------------------

    def read_block(self, block_id: int) -> Block:
        """Fetch a whole block. Cost: exactly one read query."""
        block = self._blocks.get(block_id)
        if block is None:
            raise BlockNotFoundError(f"no block with id {block_id} (have {self.N} blocks)")
        self.ledger.count_read()
        return block

    def read_example(self, position: int) -> ExampleRecord:
        """Fetch a single example by global position. Cost: one read query.

        Per-example access costs the same as a whole-block read; this is
        what makes random-access training expensive in the cost model.
        """
        if not 0 <= position < self.m:
            raise BlockNotFoundError(f"position {position} out of range [0, {self.m})")
        ids = self.block_ids()
        block = self._blocks[ids[position // self.b]]
        self.ledger.count_read()
        return block.records[position % self.b]

    def write_block(self, block: Block) -> int:
        """Persist a block. Cost: exactly one write query.

        A block with `block_id=None` gets a fresh id; a concrete id
        overwrites that slot (in-place mode).
        """
        if len(block.records) != self.b:
            raise ContractError(f"block must hold exactly b={self.b} records, got {len(block.records)}")
        for r in block.records:
            if r.dim != self.d:
                raise DimensionError(f"record payload dim {r.dim} != store dim {self.d}")
        if block.block_id is None:
            block_id = self._next_id
        else:
            block_id = int(block.block_id)
        stored = Block(block_id=block_id, records=list(block.records))
        self._blocks[block_id] = stored
        self._next_id = max(self._next_id, block_id + 1)
        self.ledger.count_write()
        return block_id

    def delete_block(self, block_id: int) -> None:
        """Remove a block. Counted as a write: it mutates storage."""
        if block_id not in self._blocks:
            raise BlockNotFoundError(f"no block with id {block_id}")
        del self._blocks[block_id]
        self.ledger.count_write()

    def require_offline(self, what: str) -> None:
        if self.ledger.phase != OFFLINE:
            raise PhaseError(f"{what} is an offline operation but the ledger is already online")

    # -- unmetered helpers (construction / measurement, not queries) --

    def peek_block(self, block_id: int) -> Block:
        """Block access for measurement code; does not touch the ledger."""
        block = self._blocks.get(block_id)
        if block is None:
            raise BlockNotFoundError(f"no block with id {block_id}")
        return block

    def iter_payloads(self) -> Iterable[np.ndarray]:
        for bid in self.block_ids():
            for r in self._blocks[bid].records:
                yield r.payload

    def all_payloads(self) -> np.ndarray:
        return np.stack(list(self.iter_payloads()))

    def all_records(self) -> list[ExampleRecord]:
        return [r for bid in self.block_ids() for r in self._blocks[bid].records]

    def clone(self) -> "BlockStore":
        """Deep-enough copy with a fresh, zeroed ledger."""
        out = BlockStore(self.b, self.d)
        for bid in self.block_ids():
            src = self._blocks[bid]
            out._blocks[bid] = Block(block_id=bid, records=list(src.records))
        out._next_id = self._next_id
        return out


def create_store(N: int, b: int, d: int, records: Sequence[ExampleRecord]) -> BlockStore:
    """Lay `records` into N blocks of b, in order; ledger starts zeroed.

    Block i holds records [i*b, (i+1)*b). Initial placement models the
    dataset as it already sits in storage, so it costs no queries.
    """
    if N * b == 0:
        raise EmptyStoreError(f"store must hold at least one record (N={N}, b={b})")
    if len(records) != N * b:
        raise DimensionError(f"expected N*b = {N * b} records, got {len(records)}")
    for r in records:
        if r.dim != d:
            raise DimensionError(f"record {r.index} has payload dim {r.dim}, expected {d}")
    store = BlockStore(b=b, d=d)
    for i in range(N):
        chunk = list(records[i * b : (i + 1) * b])
        store._blocks[i] = Block(block_id=i, records=chunk)
    store._next_id = N
    return store


# -- serialization ---------------------------------------------------

def _pack_record(record: ExampleRecord) -> bytes:
    head = struct.pack("<Q", record.index)
    if record.label is None:
        head += struct.pack("<B", 0)
    else:
        head += struct.pack("<B", 1) + struct.pack("<d", float(record.label))
    return head + record.payload.astype("<f8").tobytes()


def _unpack_records(raw: bytes, b: int, d: int, path: Path) -> list[ExampleRecord]:
    records = []
    offset = 0
    for _ in range(b):
        try:
            (index,) = struct.unpack_from("<Q", raw, offset)
            offset += 8
            (flag,) = struct.unpack_from("<B", raw, offset)
            offset += 1
            label = None
            if flag == 1:
                (label,) = struct.unpack_from("<d", raw, offset)
                offset += 8
            elif flag != 0:
                raise StoreFormatError(f"{path}: bad label flag {flag}")
            payload = np.frombuffer(raw, dtype="<f8", count=d, offset=offset).copy()
            if payload.size != d:
                raise ValueError("short payload")
            offset += 8 * d
        except (struct.error, ValueError) as exc:
            raise StoreFormatError(f"{path}: truncated block file") from exc
        records.append(ExampleRecord(index=index, payload=payload, label=label))
    if offset != len(raw):
        raise StoreFormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return records


def serialize_store(store: BlockStore, root: str | Path) -> Path:
    """Write manifest plus one file per block under `root`."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest = MAGIC + struct.pack("<I", FORMAT_VERSION)
    manifest += struct.pack("<QQQQ", store.N, store.b, store.d, store.m)
    (root / "manifest").write_bytes(manifest)
    for bid in store.block_ids():
        block = store.peek_block(bid)
        (root / f"{bid:08d}").write_bytes(b"".join(_pack_record(r) for r in block.records))
    return root


def deserialize_store(root: str | Path) -> BlockStore:
    """Load a store written by `serialize_store`. Ledger starts zeroed."""
    root = Path(root)
    manifest_path = root / "manifest"
    if not manifest_path.is_file():
        raise StoreFormatError(f"{root}: missing manifest")
    raw = manifest_path.read_bytes()
    if len(raw) < 4 + 4 + 32:
        raise StoreFormatError(f"{manifest_path}: manifest truncated")
    if raw[:4] != MAGIC:
        raise StoreFormatError(f"{manifest_path}: bad magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise StoreFormatError(f"{manifest_path}: unsupported format version {version}")
    N, b, d, m = struct.unpack_from("<QQQQ", raw, 8)
    if m != N * b:
        raise StoreFormatError(f"{manifest_path}: inconsistent geometry m={m} != N*b={N * b}")
    block_files = sorted(p for p in root.iterdir() if p.name.isdigit())
    if len(block_files) != N:
        raise StoreFormatError(f"{root}: manifest promises {N} blocks, found {len(block_files)} block files")
    store = BlockStore(b=int(b), d=int(d))
    for path in block_files:
        records = _unpack_records(path.read_bytes(), int(b), int(d), path)
        bid = int(path.name)
        store._blocks[bid] = Block(block_id=bid, records=records)
    store._next_id = max(store._blocks) + 1 if store._blocks else 0
    return store
