"""Hash-linked side chain holding the historical experience of every user.

Each side-chain block carries a header (miner id, originating chain id,
previous hash) and a body of experience records. Bodies are stored as numpy
structured arrays so a block's digest is taken over a fixed little-endian
byte layout; see ``docs/sidechain_format.md`` for the on-disk format.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, astuple
from pathlib import Path

import numpy as np

RECORD_DTYPE = np.dtype([
    ("user_id", "<i8"), ("chain_id", "<i8"),
    ("lt", "<f8"), ("gt", "<f8"),
    ("t", "<i8"), ("f", "<i8"),
    ("L", "<i8"), ("N", "<i8"),
    ("F", "<f8"),
])
ZERO_HASH = bytes(32)
_HEADER = struct.Struct("<qqq32sI")  # index, miner_id, origin_chain_id, prev_hash, n_records
MAGIC = b"PODTSC01"


class AuthorizationError(PermissionError):
    pass


class BlockTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class ExperienceRecord:
    user_id: int
    chain_id: int
    lt_ij: float
    gt_i: float
    t_i: int
    f_i: int
    L_j: int
    N_j: int
    F_k: float

    def as_row(self) -> tuple:
        return astuple(self)

    def to_json(self) -> dict:
        return {"user_id": self.user_id, "chain_id": self.chain_id, "lt_ij": self.lt_ij,
                "gt_i": self.gt_i, "t_i": self.t_i, "f_i": self.f_i, "L_j": self.L_j,
                "N_j": self.N_j, "F_k": self.F_k}


def _record_from_row(row) -> ExperienceRecord:
    return ExperienceRecord(int(row["user_id"]), int(row["chain_id"]), float(row["lt"]),
                            float(row["gt"]), int(row["t"]), int(row["f"]), int(row["L"]),
                            int(row["N"]), float(row["F"]))


def _last_occurrence(keys: np.ndarray) -> np.ndarray:
    _, idx = np.unique(keys[::-1], return_index=True)
    return len(keys) - 1 - idx


def records_to_array(records) -> np.ndarray:
    if isinstance(records, np.ndarray):
        return np.ascontiguousarray(records.astype(RECORD_DTYPE, copy=False))
    return np.array([r.as_row() for r in records], dtype=RECORD_DTYPE)


@dataclass
class SideChainBlock:
    index: int
    miner_id: int
    origin_chain_id: int
    prev_hash: bytes
    body: np.ndarray
    hash: bytes = b""

    def header_bytes(self) -> bytes:
        return _HEADER.pack(self.index, self.miner_id, self.origin_chain_id,
                            self.prev_hash, len(self.body))

    def compute_hash(self) -> bytes:
        h = hashlib.sha256(self.header_bytes())
        h.update(np.ascontiguousarray(self.body).tobytes())
        return h.digest()

    def serialized_size(self) -> int:
        return _HEADER.size + self.body.nbytes + 32

    def records(self) -> list[ExperienceRecord]:
        return [_record_from_row(r) for r in self.body]


class SideChain:
    """Append-only store with an in-memory index for latest-trust lookups.

    The index (last values per user / per user-chain pair) is derived state;
    :meth:`rebuild_index` recreates it from the blocks alone.
    """

    def __init__(self, n_users: int, n_chains: int, theta: float = 0.5,
                 capacity_mb: float = 1.0, feedback_window: int = 5):
        self.n = n_users
        self.h = n_chains
        self.theta = theta
        self.capacity_bytes = int(capacity_mb * 1024 * 1024)
        self.feedback_window = feedback_window
        self.blocks: list[SideChainBlock] = []
        self.trusted = np.zeros(0, dtype=np.int64)  # sorted ids allowed to append
        self._reset_index()

    # -- authorisation ---------------------------------------------------
    def authorize(self, miners) -> None:
        self.trusted = np.unique(np.asarray(miners, dtype=np.int64))

    # -- writes ----------------------------------------------------------
    def append_block(self, records, miner_id: int, origin_chain_id: int) -> SideChainBlock:
        k = int(np.searchsorted(self.trusted, miner_id))
        if k == self.trusted.size or self.trusted[k] != miner_id:
            raise AuthorizationError(f"miner {miner_id} is not a trusted miner")
        body = records_to_array(records)
        prev = self.blocks[-1].hash if self.blocks else ZERO_HASH
        block = SideChainBlock(len(self.blocks), int(miner_id), int(origin_chain_id), prev, body)
        if block.serialized_size() > self.capacity_bytes:
            raise BlockTooLarge(f"block of {block.serialized_size()} bytes exceeds capacity "
                                f"{self.capacity_bytes}")
        block.hash = block.compute_hash()
        self.blocks.append(block)
        self._index_block(block)
        return block

    # -- index -------------------------------------------------------------
    def _reset_index(self):
        n, h = self.n, self.h
        self.last_lt = np.full((n, h), np.nan)
        self.last_F = np.full((n, h), np.nan)
        self.last_gt = np.full(n, np.nan)
        self.last_t = np.zeros(n, dtype=np.int64)
        self.last_f = np.zeros(n, dtype=np.int64)
        self.last_block = np.full(n, -1, dtype=np.int64)
        self._F_ring = np.zeros((n, h, self.feedback_window))
        self._F_count = np.zeros((n, h), dtype=np.int64)

    def _index_block(self, block: SideChainBlock) -> None:
        body = block.body
        if len(body) == 0:
            return
        u = body["user_id"]
        c = body["chain_id"]
        # later rows of the same block win, as in a linear scan
        pair = _last_occurrence(u * self.h + c)
        self.last_lt[u[pair], c[pair]] = body["lt"][pair]
        self.last_F[u[pair], c[pair]] = body["F"][pair]
        last = _last_occurrence(u)
        self.last_gt[u[last]] = body["gt"][last]
        self.last_t[u[last]] = body["t"][last]
        self.last_f[u[last]] = body["f"][last]
        self.last_block[u[last]] = block.index
        if pair.size == len(body):
            slot = self._F_count[u, c] % self.feedback_window
            self._F_ring[u, c, slot] = body["F"]
            self._F_count[u, c] += 1
        else:
            for ui, ci, F in zip(u.tolist(), c.tolist(), body["F"].tolist()):
                self._F_ring[ui, ci, self._F_count[ui, ci] % self.feedback_window] = F
                self._F_count[ui, ci] += 1

    def rebuild_index(self) -> None:
        self._reset_index()
        for block in self.blocks:
            self._index_block(block)

    # -- reads ---------------------------------------------------------------
    def __len__(self) -> int:
        return len(self.blocks)

    def latest_trust(self, user_id: int) -> tuple[list[float], float]:
        """Most recent (local trust per chain, global trust); theta where unrecorded."""
        lt = np.where(np.isnan(self.last_lt[user_id]), self.theta, self.last_lt[user_id])
        gt = self.last_gt[user_id]
        return [float(x) for x in lt], (self.theta if np.isnan(gt) else float(gt))

    def query_history(self, user_id: int, chain_id: int, window: int) -> list[ExperienceRecord]:
        if window < 1:
            raise ValueError("window must be >= 1")
        found = []
        # newest first; stops as soon as the window is full
        for block in reversed(self.blocks):
            body = block.body
            rows = np.flatnonzero((body["user_id"] == user_id) & (body["chain_id"] == chain_id))
            for r in rows[::-1]:
                found.append(_record_from_row(body[r]))
                if len(found) == window:
                    return found[::-1]
        return found[::-1]

    def latest_record(self, user_id: int, chain_id: int) -> ExperienceRecord | None:
        recs = self.query_history(user_id, chain_id, 1)
        return recs[0] if recs else None

    def feedback(self, users, chain_id: int, mode: str = "latest", default: float = 1.0) -> np.ndarray:
        """Feedback feature per user on ``chain_id``: latest value or window mean."""
        users = np.asarray(users, dtype=np.int64)
        if mode == "latest":
            F = self.last_F[users, chain_id]
            return np.where(np.isnan(F), default, F)
        cnt = np.minimum(self._F_count[users, chain_id], self.feedback_window)
        total = self._F_ring[users, chain_id].sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(cnt > 0, total / np.maximum(cnt, 1), default)

    def feedback_min(self, users, chain_id: int, default: float = 1.0) -> np.ndarray:
        """Lowest feedback among each user's last ``feedback_window`` blocks on the chain."""
        users = np.asarray(users, dtype=np.int64)
        cnt = np.minimum(self._F_count[users, chain_id], self.feedback_window)
        ring = self._F_ring[users, chain_id]
        filled = np.arange(self.feedback_window)[None, :] < cnt[:, None]
        low = np.where(filled, ring, np.inf).min(axis=1, initial=np.inf)
        return np.where(cnt > 0, low, default)

    def verify_chain(self) -> bool:
        prev = ZERO_HASH
        for pos, block in enumerate(self.blocks):
            if block.index != pos or block.prev_hash != prev:
                return False
            if block.compute_hash() != block.hash:
                return False
            prev = block.hash
        return True

    def head_hash(self) -> bytes:
        return self.blocks[-1].hash if self.blocks else ZERO_HASH

    def records(self):
        for block in self.blocks:
            for row in block.body:
                yield block.index, _record_from_row(row)

    # -- persistence -------------------------------------------------------
    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            for block in self.blocks:
                payload = block.header_bytes() + block.body.tobytes() + block.hash
                fh.write(struct.pack("<I", len(payload)))
                fh.write(payload)

    @classmethod
    def load(cls, path, n_users: int, n_chains: int, theta: float = 0.5, **kw) -> "SideChain":
        chain = cls(n_users, n_chains, theta, **kw)
        data = Path(path).read_bytes()
        if data[:len(MAGIC)] != MAGIC:
            raise ValueError(f"{path}: not a side-chain file")
        pos = len(MAGIC)
        while pos < len(data):
            (length,) = struct.unpack_from("<I", data, pos)
            pos += 4
            payload = data[pos:pos + length]
            pos += length
            index, miner, origin, prev, count = _HEADER.unpack_from(payload, 0)
            start = _HEADER.size
            body = np.frombuffer(payload, dtype=RECORD_DTYPE, count=count, offset=start).copy()
            digest = payload[start + body.nbytes:start + body.nbytes + 32]
            block = SideChainBlock(index, miner, origin, prev, body, digest)
            chain.blocks.append(block)
        chain.rebuild_index()
        return chain

    def export_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for index, rec in self.records():
                fh.write(json.dumps({"block": index, **rec.to_json()}) + "\n")
