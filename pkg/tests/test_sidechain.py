import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from podt.sidechain import (MAGIC, ZERO_HASH, AuthorizationError, BlockTooLarge,
                            ExperienceRecord, SideChain, records_to_array)

FIXTURES = Path(__file__).parent / "fixtures"


def rec(u, c, lt=0.6, gt=0.7, t=3, f=1, L=10, N=20, F=0.8):
    return ExperienceRecord(u, c, lt, gt, t, f, L, N, F)


def chain_of(n_blocks, n=4, h=2, seed=0):
    rng = np.random.default_rng(seed)
    sc = SideChain(n, h)
    sc.authorize([0, 1])
    for k in range(n_blocks):
        rows = [rec(int(rng.integers(n)), int(rng.integers(h)), lt=float(rng.random()),
                    gt=float(rng.random()), F=float(rng.random())) for _ in range(3)]
        sc.append_block(rows, k % 2, k % h)
    return sc


def golden_chain():
    """Fixed three-block chain pinned by the fixture files."""
    sc = SideChain(3, 2, theta=0.5)
    sc.authorize([7])
    sc.append_block([rec(0, 0, 0.75, 0.75, 1, 0, 1, 3, 1.0)], 7, 0)
    sc.append_block([rec(1, 1, 0.25, 0.25, 0, 1, 0, 3, 0.0), rec(2, 1, 0.75, 0.75, 1, 0, 1, 3, 1.0)], 7, 1)
    sc.append_block([], 7, 0)
    return sc


class TestAppend:
    def test_genesis(self):
        sc = chain_of(1)
        assert sc.blocks[0].index == 0 and sc.blocks[0].prev_hash == ZERO_HASH

    def test_link(self):
        sc = chain_of(2)
        assert sc.blocks[1].prev_hash == sc.blocks[0].hash
        assert len(sc) == 2

    def test_empty_body(self):
        sc = SideChain(2, 1)
        sc.authorize([0])
        b = sc.append_block([], 0, 0)
        assert len(b.body) == 0 and sc.verify_chain()

    def test_unauthorised(self):
        sc = SideChain(2, 1)
        sc.authorize([0])
        with pytest.raises(AuthorizationError):
            sc.append_block([rec(0, 0)], 1, 0)

    def test_capacity(self):
        sc = SideChain(2, 1, capacity_mb=0.0001)  # about 100 bytes
        sc.authorize([0])
        with pytest.raises(BlockTooLarge):
            sc.append_block([rec(0, 0)] * 3, 0, 0)
        assert len(sc) == 0


class TestVerify:
    def test_untouched(self):
        assert chain_of(10).verify_chain()

    def test_mutated_record(self):
        sc = chain_of(10)
        sc.blocks[5].body["lt"][0] += 0.01
        assert not sc.verify_chain()

    def test_swapped_blocks(self):
        sc = chain_of(10)
        sc.blocks[2], sc.blocks[3] = sc.blocks[3], sc.blocks[2]
        assert not sc.verify_chain()

    def test_hash_covers_header(self):
        sc = chain_of(3)
        sc.blocks[1].miner_id = 99
        assert not sc.verify_chain()

    def test_sha256_pinned(self):
        b = golden_chain().blocks[0]
        assert b.hash == hashlib.sha256(b.header_bytes() + b.body.tobytes()).digest()


def scan_latest(sc, user, theta=0.5):
    lt = [theta] * sc.h
    gt = theta
    for _, r in sc.records():
        if r.user_id == user:
            lt[r.chain_id] = r.lt_ij
            gt = r.gt_i
    return lt, gt


class TestQueries:
    def test_newcomer(self):
        assert SideChain(3, 2).latest_trust(1) == ([0.5, 0.5], 0.5)

    def test_highest_index_wins(self):
        sc = SideChain(2, 1)
        sc.authorize([0])
        for k in range(8):
            sc.append_block([rec(0, 0, lt=0.1 * (k + 1))] if k in (3, 7) else [rec(1, 0)], 0, 0)
        assert sc.latest_trust(0) == ([pytest.approx(0.8)], 0.7)

    def test_partial_fallback(self):
        sc = SideChain(1, 2)
        sc.authorize([0])
        sc.append_block([rec(0, 0, lt=0.9, gt=0.8)], 0, 0)
        assert sc.latest_trust(0) == ([0.9, 0.5], 0.8)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 15))
    def test_matches_linear_scan(self, seed, n_blocks):
        sc = chain_of(n_blocks, seed=seed)
        for u in range(sc.n):
            assert sc.latest_trust(u) == scan_latest(sc, u)

    def test_duplicate_rows_in_block(self):
        sc = SideChain(1, 1)
        sc.authorize([0])
        sc.append_block([rec(0, 0, lt=0.2), rec(0, 0, lt=0.9)], 0, 0)
        assert sc.latest_trust(0)[0] == [0.9]

    def test_history(self):
        sc = SideChain(1, 1)
        sc.authorize([0])
        assert sc.query_history(0, 0, 3) == []
        for k in range(5):
            sc.append_block([rec(0, 0, t=k)], 0, 0)
        assert [r.t_i for r in sc.query_history(0, 0, 3)] == [2, 3, 4]
        assert [r.t_i for r in sc.query_history(0, 0, 50)] == [0, 1, 2, 3, 4]
        with pytest.raises(ValueError):
            sc.query_history(0, 0, 0)

    def test_feedback_modes(self):
        sc = SideChain(2, 1, feedback_window=2)
        sc.authorize([0])
        for F in (0.0, 0.5, 1.0):
            sc.append_block([rec(0, 0, F=F)], 0, 0)
        assert sc.feedback([0, 1], 0, "latest").tolist() == [1.0, 1.0]
        assert sc.feedback([0, 1], 0, "mean").tolist() == [0.75, 1.0]
        assert sc.feedback_min([0, 1], 0).tolist() == [0.5, 1.0]

    def test_rebuild_index(self):
        sc = chain_of(12)
        before = (sc.last_lt.copy(), sc.last_gt.copy(), sc._F_ring.copy())
        sc.rebuild_index()
        for a, b in zip(before, (sc.last_lt, sc.last_gt, sc._F_ring)):
            assert np.array_equal(a, b, equal_nan=True)


class TestPersistence:
    def test_roundtrip(self, tmp_path):
        sc = chain_of(6)
        sc.save(tmp_path / "sc.bin")
        back = SideChain.load(tmp_path / "sc.bin", 4, 2)
        assert back.verify_chain()
        assert back.head_hash() == sc.head_hash()
        for u in range(4):
            assert back.latest_trust(u) == sc.latest_trust(u)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"nope")
        with pytest.raises(ValueError):
            SideChain.load(tmp_path / "x.bin", 1, 1)

    def test_golden_binary(self, tmp_path):
        golden_chain().save(tmp_path / "g.bin")
        data = (tmp_path / "g.bin").read_bytes()
        assert data.startswith(MAGIC)
        assert data == (FIXTURES / "sidechain_golden.bin").read_bytes()

    def test_golden_head(self):
        expected = (FIXTURES / "sidechain_golden.sha256").read_text().strip()
        assert golden_chain().head_hash().hex() == expected

    def test_golden_jsonl(self, tmp_path):
        golden_chain().export_jsonl(tmp_path / "g.jsonl")
        lines = [json.loads(x) for x in (tmp_path / "g.jsonl").read_text().splitlines()]
        assert lines == [json.loads(x) for x in
                         (FIXTURES / "sidechain_golden.jsonl").read_text().splitlines()]
        assert set(lines[0]) == {"block", "user_id", "chain_id", "lt_ij", "gt_i", "t_i", "f_i",
                                 "L_j", "N_j", "F_k"}


def test_record_array_layout():
    arr = records_to_array([rec(1, 0)])
    assert arr.dtype.itemsize == 72
    assert arr.tobytes()[:8] == (1).to_bytes(8, "little")


def test_golden_layout_by_hand():
    """Decode the fixture with struct alone, following docs/sidechain_format.md."""
    import struct
    data = (FIXTURES / "sidechain_golden.bin").read_bytes()
    assert data[:8] == b"PODTSC01"
    pos, prev, bodies = 8, bytes(32), []
    while pos < len(data):
        (length,) = struct.unpack_from("<I", data, pos)
        payload = data[pos + 4:pos + 4 + length]
        pos += 4 + length
        index, miner, origin, prev_hash, count = struct.unpack_from("<qqq32sI", payload)
        assert struct.calcsize("<qqq32sI") == 60
        assert prev_hash == prev and miner == 7 and index == len(bodies)
        body = payload[60:60 + 72 * count]
        digest = payload[60 + 72 * count:]
        assert digest == hashlib.sha256(payload[:60 + 72 * count]).digest()
        rows = [struct.unpack_from("<qqddqqqqd", body, 72 * k) for k in range(count)]
        bodies.append(rows)
        prev = digest
    assert [len(b) for b in bodies] == [1, 2, 0]
    assert bodies[1][0] == (1, 1, 0.25, 0.25, 0, 1, 0, 3, 0.0)
