"""Shuffle strategies over a block store.

Two-phase pipeline plus baselines:

* offline_corgi_shuffle — pre-training pass that rebuilds blocks from
  shuffled buffers, cutting blockwise gradient variance. Costs N block
  reads + N block writes per pass.
* corgipile_stream — online-only buffered shuffle: per round, load n
  blocks into a buffer, permute it, emit. Each block is read once per
  epoch.
* corgi2_stream — offline pass(es) followed by the online stream.
* baseline_streams — sequential order (control), shuffle-once
  (single global permutation, per-example offline cost), and full
  per-epoch reshuffle with per-example access.

All randomness derives from (seed, phase, round) so equal seeds give
byte-identical streams and ledgers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

import numpy as np

from . import rng as rngmod
from .errors import ContractError
from .rng import fisher_yates
from .storage import Block, BlockStore, QueryLedger

WITH_REPLACEMENT = "with"
WITHOUT_REPLACEMENT = "without"

SEQUENTIAL = "sequential"
SHUFFLE_ONCE = "shuffle_once"
FULL_SHUFFLE = "full_shuffle"
BASELINE_KINDS = (SEQUENTIAL, SHUFFLE_ONCE, FULL_SHUFFLE)


class StreamItem(NamedTuple):
    origin_index: int
    payload: np.ndarray
    label: Optional[float]


@dataclass
class ShuffleStream:
    """Ordered examples for one training run, with round boundaries.

    `rounds` holds (start, end) index pairs into `items`; a round is one
    buffer's worth of examples trained with a single learning rate.
    `round_block_ids` records which blocks filled each round's buffer
    (None for per-example strategies).
    """

    items: list[StreamItem]
    rounds: list[tuple[int, int]]
    ledger: QueryLedger
    b: int
    n: Optional[int] = None
    round_block_ids: Optional[list[list[int]]] = None
    epoch_length: Optional[int] = None

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[StreamItem]:
        return iter(self.items)

    @property
    def num_rounds(self) -> int:
        return len(self.rounds)

    def round_items(self, t: int) -> list[StreamItem]:
        start, end = self.rounds[t]
        return self.items[start:end]

    def origin_indices(self) -> np.ndarray:
        return np.array([it.origin_index for it in self.items], dtype=np.int64)

    def epoch_origin_indices(self, epoch: int = 0) -> np.ndarray:
        """Origin indices of one epoch's worth of items."""
        if self.epoch_length is None:
            raise ContractError("stream has no epoch structure")
        start = epoch * self.epoch_length
        end = start + self.epoch_length
        if end > len(self.items):
            raise ContractError(f"epoch {epoch} out of range")
        return np.array([it.origin_index for it in self.items[start:end]], dtype=np.int64)


@dataclass(frozen=True)
class ShuffleConfig:
    """Parameters of the two-phase shuffle.

    n: blocks per buffer. replacement: block sampling mode of the
    offline pass ("with" follows the base algorithm; "without" is the
    multiset-preserving variant). in_place: overwrite source blocks
    instead of doubling storage (requires without-replacement, since
    re-reading a consumed block would lose data). offline_passes: how
    many offline passes to run before the online phase (0 = online
    only).
    """

    n: int
    replacement: str = WITH_REPLACEMENT
    in_place: bool = False
    offline_passes: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ContractError(f"buffer block count n must be >= 1, got {self.n}")
        if self.replacement not in (WITH_REPLACEMENT, WITHOUT_REPLACEMENT):
            raise ContractError(f"replacement must be 'with' or 'without', got {self.replacement!r}")
        if self.offline_passes < 0:
            raise ContractError(f"offline_passes must be >= 0, got {self.offline_passes}")
        if self.in_place and self.replacement != WITHOUT_REPLACEMENT:
            raise ContractError("in_place mode requires replacement='without'; "
                                "overwriting with-replacement loses data permanently")


def _buffer_groups(ids: list[int], n: int) -> list[int]:
    """Sizes of successive buffers covering len(ids) blocks: n, n, ...,
    then the remainder (if any) as a final smaller buffer."""
    N = len(ids)
    sizes = [n] * (N // n)
    if N % n:
        sizes.append(N % n)
    return sizes


def offline_corgi_shuffle(
    store: BlockStore,
    cfg: ShuffleConfig,
    rng_seed: Optional[int] = None,
    out_b: Optional[int] = None,
) -> BlockStore:
    """One offline re-mixing pass; returns the rebuilt store.

    Per outer iteration: fill a buffer with n blocks (i.i.d. with
    replacement, or without replacement across the pass in the variant),
    then rebuild the buffer as new blocks. With replacement, each new
    block is b i.i.d. draws from the buffer; without replacement, the
    buffer is uniformly permuted and partitioned. Output blocks get ids
    in creation order, so iteration l owns ids [l*n, l*n + group size)
    when the block size is unchanged. Ledger cost: exactly N reads plus
    m/out_b writes per pass (N of each by default; in-place deletion
    adds N more writes).

    `out_b` re-chunks the data while shuffling (the offline phase can
    double as a restructuring pass); every buffer must split evenly
    into out_b-sized blocks. The returned store shares the input
    store's ledger so a pipeline's query counts accumulate in one
    place; in-place mode returns the input store itself.
    """
    seed = cfg.seed if rng_seed is None else rng_seed
    N = store.N
    if cfg.n > N:
        raise ContractError(f"buffer of n={cfg.n} blocks exceeds store's N={N}")
    if out_b is None:
        out_b = store.b
    if out_b < 1:
        raise ContractError(f"output block size must be >= 1, got {out_b}")
    if cfg.in_place and out_b != store.b:
        raise ContractError("in_place mode cannot change the block size")
    store.require_offline("offline_corgi_shuffle")

    ids = store.block_ids()
    sizes = _buffer_groups(ids, cfg.n)
    for size in sizes:
        if (size * store.b) % out_b:
            raise ContractError(
                f"buffer of {size * store.b} examples does not split into blocks of {out_b}"
            )
    partition = None
    if cfg.replacement == WITHOUT_REPLACEMENT:
        order = list(ids)
        fisher_yates(order, rngmod.substream(seed, rngmod.OFFLINE))
        partition, at = [], 0
        for size in sizes:
            partition.append(order[at : at + size])
            at += size

    out = store if cfg.in_place else BlockStore(out_b, store.d, ledger=store.ledger)
    for l, size in enumerate(sizes):
        gen = rngmod.substream(seed, rngmod.OFFLINE, l)
        if cfg.replacement == WITH_REPLACEMENT:
            group = [ids[int(k)] for k in gen.integers(0, N, size=size)]
        else:
            group = partition[l]
        buffer = []
        for bid in group:
            buffer.extend(store.read_block(bid).records)
        if cfg.in_place:
            for bid in group:
                store.delete_block(bid)
        emitted = (size * store.b) // out_b
        if cfg.replacement == WITH_REPLACEMENT:
            for _ in range(emitted):
                picks = gen.integers(0, len(buffer), size=out_b)
                out.write_block(Block(block_id=None, records=[buffer[int(k)] for k in picks]))
        else:
            fisher_yates(buffer, gen)
            for j in range(emitted):
                out.write_block(Block(block_id=None, records=buffer[j * out_b : (j + 1) * out_b]))
    return out


def corgipile_stream(store: BlockStore, n: int, epochs: int, rng_seed: int) -> ShuffleStream:
    """Online buffered shuffle: per epoch, visit every block exactly once
    in ceil(N/n) buffer rounds; each round's buffer is uniformly
    permuted. Online cost: N block reads per epoch.
    """
    N = store.N
    if n < 1 or n > N:
        raise ContractError(f"buffer block count n={n} must be in [1, N={N}]")
    store.ledger.begin_online()

    items: list[StreamItem] = []
    rounds: list[tuple[int, int]] = []
    round_block_ids: list[list[int]] = []
    ids = store.block_ids()
    round_index = 0
    for e in range(epochs):
        order = list(ids)
        fisher_yates(order, rngmod.substream(rng_seed, rngmod.ONLINE_PICK, e))
        for at in range(0, N, n):
            chunk = order[at : at + n]
            buffer: list[StreamItem] = []
            for bid in chunk:
                block = store.read_block(bid)
                buffer.extend(StreamItem(r.index, r.payload, r.label) for r in block.records)
            fisher_yates(buffer, rngmod.substream(rng_seed, rngmod.ONLINE_PERM, round_index))
            start = len(items)
            items.extend(buffer)
            rounds.append((start, len(items)))
            round_block_ids.append(chunk)
            round_index += 1
    return ShuffleStream(
        items=items,
        rounds=rounds,
        ledger=store.ledger,
        b=store.b,
        n=n,
        round_block_ids=round_block_ids,
        epoch_length=store.m,
    )


def corgi2_stream(
    store: BlockStore, cfg: ShuffleConfig, epochs: int, rng_seed: Optional[int] = None
) -> tuple[BlockStore, ShuffleStream]:
    """Offline pass(es) then the online stream over the rebuilt store.

    Returns (rebuilt store, stream); the store is what the online stage
    actually iterates, so callers can evaluate convergence against its
    empirical objective. Total ledger cost: offline_passes * 2N offline
    queries plus N online reads per epoch.
    """
    seed = cfg.seed if rng_seed is None else rng_seed
    current = store
    for p in range(cfg.offline_passes):
        current = offline_corgi_shuffle(current, cfg, rngmod.derive_seed(seed, rngmod.OFFLINE, p))
    stream = corgipile_stream(current, cfg.n, epochs, rngmod.derive_seed(seed, rngmod.ONLINE_PICK))
    return current, stream


def _chunk_rounds(total_before: int, added: int, round_items: Optional[int], rounds: list[tuple[int, int]]):
    """Append round markers for `added` items, chunked by round_items
    (or one round for the whole batch)."""
    if round_items is None:
        rounds.append((total_before, total_before + added))
        return
    at = total_before
    while at < total_before + added:
        end = min(at + round_items, total_before + added)
        rounds.append((at, end))
        at = end


def baseline_streams(
    store: BlockStore,
    kind: str,
    epochs: int,
    rng_seed: int,
    round_items: Optional[int] = None,
) -> ShuffleStream:
    """Reference strategies for cost and convergence comparisons.

    sequential: blocks in id order, records in stored order (control).
    shuffle_once: one global uniform permutation applied offline with
    per-example reads (m reads + m/b block writes), then sequential
    block reads every epoch. full_shuffle: a fresh uniform permutation
    every epoch, fetched with per-example access (m reads per epoch).

    round_items sets the learning-rate round length for training
    comparisons; by default each epoch is a single round.
    """
    if kind not in BASELINE_KINDS:
        raise ContractError(f"unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")
    m = store.m
    items: list[StreamItem] = []
    rounds: list[tuple[int, int]] = []

    if kind == SEQUENTIAL:
        store.ledger.begin_online()
        for _ in range(epochs):
            start = len(items)
            for bid in store.block_ids():
                block = store.read_block(bid)
                items.extend(StreamItem(r.index, r.payload, r.label) for r in block.records)
            _chunk_rounds(start, m, round_items, rounds)
        source = store

    elif kind == SHUFFLE_ONCE:
        store.require_offline("shuffle_once offline pass")
        gen = rngmod.substream(rng_seed, rngmod.BASELINE)
        perm = gen.permutation(m)
        shuffled = BlockStore(store.b, store.d, ledger=store.ledger)
        pending = []
        for pos in perm:
            pending.append(store.read_example(int(pos)))
            if len(pending) == store.b:
                shuffled.write_block(Block(block_id=None, records=pending))
                pending = []
        store.ledger.begin_online()
        for _ in range(epochs):
            start = len(items)
            for bid in shuffled.block_ids():
                block = shuffled.read_block(bid)
                items.extend(StreamItem(r.index, r.payload, r.label) for r in block.records)
            _chunk_rounds(start, m, round_items, rounds)
        source = shuffled

    else:  # FULL_SHUFFLE
        store.ledger.begin_online()
        for e in range(epochs):
            perm = rngmod.substream(rng_seed, rngmod.BASELINE, e).permutation(m)
            start = len(items)
            for pos in perm:
                r = store.read_example(int(pos))
                items.append(StreamItem(r.index, r.payload, r.label))
            _chunk_rounds(start, m, round_items, rounds)
        source = store

    return ShuffleStream(
        items=items,
        rounds=rounds,
        ledger=source.ledger,
        b=store.b,
        n=None,
        round_block_ids=None,
        epoch_length=m,
    )
