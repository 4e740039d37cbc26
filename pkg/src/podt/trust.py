"""Per-chain (local) and network-wide (global) trust derived from block counters."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np


class IdOutOfRange(IndexError):
    pass


class TrustState(enum.Enum):
    TRUSTWORTHY = "Trustworthy"
    LOW_RISK = "LowRisk"
    MEDIUM_RISK = "MediumRisk"
    HIGH_RISK = "HighRisk"


@dataclass(frozen=True)
class BlockCounters:
    tru: int = 0
    fal: int = 0


def local_trust_value(tru, fal, theta):
    return (tru + theta) / (tru + fal + 1)


def baseline_trust_value(tru, fal, theta):
    # universal beta-expectation trust; note the theta (not 1) in the denominator
    return (tru + theta) / (tru + fal + theta)


def classify_state(gt: float, n_low: int, h: int, theta: float) -> TrustState:
    """Map (global trust, number of low local trusts) to a trust state.

    HighRisk is tested before MediumRisk, otherwise ``n_low == h`` would always
    be swallowed by the ``n_low >= 1`` branch. The region ``gt < theta`` with
    ``n_low == 0`` is not covered by the four named regions and is treated as
    MediumRisk.
    """
    if gt >= theta:
        return TrustState.TRUSTWORTHY if n_low == 0 else TrustState.LOW_RISK
    if n_low == h:
        return TrustState.HIGH_RISK
    return TrustState.MEDIUM_RISK


class TrustLedger:
    """Exact integer block counters for ``n`` users on ``h`` chains.

    Trust values are always recomputed from the counters, never cached.
    """

    def __init__(self, n: int, h: int, theta: float = 0.5):
        if not 0.0 < theta < 1.0:
            raise ValueError(f"theta must lie in (0, 1), got {theta}")
        if n < 1 or h < 1:
            raise ValueError("ledger needs at least one user and one chain")
        self.n = n
        self.h = h
        self.theta = float(theta)
        self.tru = np.zeros((n, h), dtype=np.int64)
        self.fal = np.zeros((n, h), dtype=np.int64)

    def _check(self, user_id: int, chain_id: int | None = None) -> None:
        if not 0 <= user_id < self.n:
            raise IdOutOfRange(f"user_id {user_id} not in [0, {self.n})")
        if chain_id is not None and not 0 <= chain_id < self.h:
            raise IdOutOfRange(f"chain_id {chain_id} not in [0, {self.h})")

    # -- mutation -------------------------------------------------------
    def record_block(self, user_id: int, chain_id: int, was_true: bool) -> BlockCounters:
        self._check(user_id, chain_id)
        if was_true:
            self.tru[user_id, chain_id] += 1
        else:
            self.fal[user_id, chain_id] += 1
        return self.counters(user_id, chain_id)

    def record_blocks(self, user_ids, chain_id: int, was_true) -> None:
        """Vectorised ``record_block`` for one chain; repeated ids accumulate."""
        user_ids = np.asarray(user_ids, dtype=np.int64)
        was_true = np.asarray(was_true, dtype=bool)
        if user_ids.size == 0:
            return
        if user_ids.min() < 0 or user_ids.max() >= self.n:
            raise IdOutOfRange("user id out of range in batch update")
        self._check(0, chain_id)
        np.add.at(self.tru[:, chain_id], user_ids[was_true], 1)
        np.add.at(self.fal[:, chain_id], user_ids[~was_true], 1)

    # -- scalar queries --------------------------------------------------
    def counters(self, user_id: int, chain_id: int) -> BlockCounters:
        self._check(user_id, chain_id)
        return BlockCounters(int(self.tru[user_id, chain_id]), int(self.fal[user_id, chain_id]))

    def local_trust(self, user_id: int, chain_id: int) -> float:
        self._check(user_id, chain_id)
        return local_trust_value(int(self.tru[user_id, chain_id]),
                                 int(self.fal[user_id, chain_id]), self.theta)

    def trust_vector(self, user_id: int) -> list[float]:
        self._check(user_id)
        return [self.local_trust(user_id, j) for j in range(self.h)]

    def global_trust(self, user_id: int) -> float:
        self._check(user_id)
        t = int(self.tru[user_id].sum())
        f = int(self.fal[user_id].sum())
        return local_trust_value(t, f, self.theta)

    def baseline_trust(self, user_id: int) -> float:
        self._check(user_id)
        t = int(self.tru[user_id].sum())
        f = int(self.fal[user_id].sum())
        return baseline_trust_value(t, f, self.theta)

    def count_low_local(self, user_id: int) -> int:
        return sum(1 for lt in self.trust_vector(user_id) if lt < self.theta)

    def classify(self, user_id: int) -> TrustState:
        return classify_state(self.global_trust(user_id), self.count_low_local(user_id),
                              self.h, self.theta)

    def partition(self, users: Iterable[int]):
        """Split users into (trustworthy, low-risk, medium-risk, high-risk) sets."""
        sets = {state: set() for state in TrustState}
        for u in users:
            sets[self.classify(u)].add(u)
        return (sets[TrustState.TRUSTWORTHY], sets[TrustState.LOW_RISK],
                sets[TrustState.MEDIUM_RISK], sets[TrustState.HIGH_RISK])

    # -- whole-population views used by the engine -----------------------
    def local_trust_matrix(self) -> np.ndarray:
        return local_trust_value(self.tru, self.fal, self.theta)

    def local_trust_column(self, chain_id: int) -> np.ndarray:
        return local_trust_value(self.tru[:, chain_id], self.fal[:, chain_id], self.theta)

    def total_true(self) -> np.ndarray:
        return self.tru.sum(axis=1)

    def total_false(self) -> np.ndarray:
        return self.fal.sum(axis=1)

    def global_trust_all(self) -> np.ndarray:
        return local_trust_value(self.total_true(), self.total_false(), self.theta)

    def baseline_trust_all(self) -> np.ndarray:
        return baseline_trust_value(self.total_true(), self.total_false(), self.theta)

    def low_counts_all(self) -> np.ndarray:
        return (self.local_trust_matrix() < self.theta).sum(axis=1)

    def trustworthy_mask(self) -> np.ndarray:
        """Boolean mask of users in the trustworthy cluster (gt >= theta, no low chain)."""
        return (self.global_trust_all() >= self.theta) & (self.low_counts_all() == 0)

    # -- snapshot --------------------------------------------------------
    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["user_id", "chain_id", "tru", "fal"])
            for i in range(self.n):
                for j in range(self.h):
                    w.writerow([i, j, int(self.tru[i, j]), int(self.fal[i, j])])

    @classmethod
    def from_csv(cls, path, theta: float = 0.5) -> "TrustLedger":
        rows = list(csv.DictReader(Path(path).open()))
        n = 1 + max(int(r["user_id"]) for r in rows)
        h = 1 + max(int(r["chain_id"]) for r in rows)
        ledger = cls(n, h, theta)
        for r in rows:
            i, j = int(r["user_id"]), int(r["chain_id"])
            ledger.tru[i, j] = int(r["tru"])
            ledger.fal[i, j] = int(r["fal"])
        return ledger
