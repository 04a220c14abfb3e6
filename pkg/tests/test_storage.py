"""Block store: layout, exact query counting, serialization round-trip."""
import concurrent.futures

import numpy as np
import pytest

from corgi2.errors import (
    BlockNotFoundError,
    ContractError,
    DimensionError,
    EmptyStoreError,
    PhaseError,
    StoreFormatError,
)
from corgi2.storage import (
    Block,
    BlockStore,
    ExampleRecord,
    create_store,
    deserialize_store,
    serialize_store,
)


def records_1d(values, labels=None):
    out = []
    for i, v in enumerate(values):
        label = labels[i] if labels is not None else None
        out.append(ExampleRecord(index=i, payload=np.array([float(v)]), label=label))
    return out


def test_create_store_layout_order_preserving():
    store = create_store(N=2, b=2, d=1, records=records_1d([0, 1, 2, 3]))
    assert [r.index for r in store.peek_block(0).records] == [0, 1]
    assert [r.index for r in store.peek_block(1).records] == [2, 3]
    assert store.ledger.total == 0


def test_create_store_degenerate_single_record():
    store = create_store(N=1, b=1, d=1, records=records_1d([5]))
    assert store.m == 1
    assert store.peek_block(0).records[0].payload[0] == 5.0


def test_create_store_length_mismatch():
    with pytest.raises(DimensionError):
        create_store(N=2, b=2, d=1, records=records_1d([0, 1, 2]))


def test_create_store_empty():
    with pytest.raises(EmptyStoreError):
        create_store(N=0, b=4, d=1, records=[])


def test_create_store_payload_dim_mismatch():
    recs = [ExampleRecord(index=0, payload=np.zeros(2))]
    with pytest.raises(DimensionError):
        create_store(N=1, b=1, d=1, records=recs)


def test_read_block_counts_one_query_per_access():
    store = create_store(N=2, b=2, d=1, records=records_1d([0, 1, 2, 3]))
    store.read_block(0)
    store.read_block(0)
    assert store.ledger.offline_reads == 2


def test_block_read_cost_independent_of_block_size():
    # one chunk access costs 1, not b
    b = 100
    store = create_store(N=1, b=b, d=1, records=records_1d(range(b)))
    block = store.read_block(0)
    assert len(block) == b
    assert store.ledger.offline_reads == 1


def test_read_block_out_of_range():
    store = create_store(N=2, b=1, d=1, records=records_1d([0, 1]))
    with pytest.raises(BlockNotFoundError):
        store.read_block(2)


def test_read_example_counts_one_query():
    store = create_store(N=2, b=2, d=1, records=records_1d([0, 1, 2, 3]))
    r = store.read_example(3)
    assert r.index == 3
    assert store.ledger.offline_reads == 1


def test_write_block_counting_and_phase():
    store = create_store(N=2, b=2, d=1, records=records_1d([0, 1, 2, 3]))
    new_id = store.write_block(Block(block_id=None, records=records_1d([7, 8])))
    assert new_id == 2
    assert store.ledger.offline_writes == 1
    store.ledger.begin_online()
    store.write_block(Block(block_id=None, records=records_1d([9, 10])))
    assert store.ledger.online_writes == 1
    assert store.ledger.offline_writes == 1


def test_write_block_wrong_size():
    store = create_store(N=2, b=2, d=1, records=records_1d([0, 1, 2, 3]))
    with pytest.raises(ContractError):
        store.write_block(Block(block_id=None, records=records_1d([1])))


def test_write_block_wrong_dim():
    store = create_store(N=1, b=2, d=1, records=records_1d([0, 1]))
    bad = [ExampleRecord(index=0, payload=np.zeros(3)), ExampleRecord(index=1, payload=np.zeros(3))]
    with pytest.raises(DimensionError):
        store.write_block(Block(block_id=None, records=bad))


def test_delete_counts_as_write():
    store = create_store(N=2, b=1, d=1, records=records_1d([0, 1]))
    store.delete_block(0)
    assert store.ledger.offline_writes == 1
    assert store.N == 1


def test_ledger_total_is_reads_plus_writes():
    rng = np.random.default_rng(11)
    store = create_store(N=4, b=2, d=1, records=records_1d(range(8)))
    k = j = 0
    for _ in range(200):
        if rng.random() < 0.5:
            store.read_block(int(rng.integers(0, 4)))
            k += 1
        else:
            store.write_block(Block(block_id=int(rng.integers(0, 4)), records=records_1d([1, 2])))
            j += 1
    assert store.ledger.total == k + j


def test_phase_flip_blocks_offline_operations():
    store = create_store(N=2, b=1, d=1, records=records_1d([0, 1]))
    store.ledger.begin_online()
    with pytest.raises(PhaseError):
        store.require_offline("anything")
    # flipping again is a no-op, not an error
    store.ledger.begin_online()


def test_concurrent_reads_count_atomically():
    store = create_store(N=8, b=2, d=1, records=records_1d(range(16)))
    with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
        list(pool.map(lambda i: store.read_block(i % 8), range(800)))
    assert store.ledger.offline_reads == 800


class TestSerialization:
    def make_store(self, rng):
        values = rng.standard_normal(200)
        labels = [float(v) if i % 3 == 0 else None for i, v in enumerate(rng.standard_normal(200))]
        records = [
            ExampleRecord(index=i, payload=np.array([values[i]]), label=labels[i])
            for i in range(200)
        ]
        return create_store(N=20, b=10, d=1, records=records)

    def test_roundtrip_bit_exact(self, tmp_path):
        store = self.make_store(np.random.default_rng(3))
        serialize_store(store, tmp_path / "s")
        loaded = deserialize_store(tmp_path / "s")
        assert loaded.N == store.N and loaded.b == store.b and loaded.d == store.d
        for bid in store.block_ids():
            orig, back = store.peek_block(bid), loaded.peek_block(bid)
            for a, b in zip(orig.records, back.records):
                assert a.index == b.index
                assert a.payload.tobytes() == b.payload.tobytes()
                assert a.label == b.label
        # ledger is a per-run measurement, never persisted
        assert loaded.ledger.total == 0

    def test_file_count(self, tmp_path):
        store = self.make_store(np.random.default_rng(4))
        root = serialize_store(store, tmp_path / "s")
        files = list(root.iterdir())
        assert len(files) == 21  # 20 block files + 1 manifest

    def test_bad_magic(self, tmp_path):
        store = self.make_store(np.random.default_rng(5))
        root = serialize_store(store, tmp_path / "s")
        manifest = root / "manifest"
        manifest.write_bytes(b"NOPE" + manifest.read_bytes()[4:])
        with pytest.raises(StoreFormatError):
            deserialize_store(root)

    def test_bad_version(self, tmp_path):
        store = self.make_store(np.random.default_rng(6))
        root = serialize_store(store, tmp_path / "s")
        manifest = root / "manifest"
        raw = bytearray(manifest.read_bytes())
        raw[4] = 99
        manifest.write_bytes(bytes(raw))
        with pytest.raises(StoreFormatError):
            deserialize_store(root)

    def test_truncated_block(self, tmp_path):
        store = self.make_store(np.random.default_rng(7))
        root = serialize_store(store, tmp_path / "s")
        victim = root / "00000003"
        victim.write_bytes(victim.read_bytes()[:-5])
        with pytest.raises(StoreFormatError):
            deserialize_store(root)

    def test_missing_block_file(self, tmp_path):
        store = self.make_store(np.random.default_rng(8))
        root = serialize_store(store, tmp_path / "s")
        (root / "00000003").unlink()
        with pytest.raises(StoreFormatError):
            deserialize_store(root)
