"""Per-round outcomes, the metrics derived from them, and their file formats."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .behaviors import Kind

CSV_COLUMNS = ("cycle", "malicious_responses", "attack_success_ratio", "blocks_created",
               "blocks_accepted")


@dataclass
class RoundOutcome:
    """One round of block creation on one chain.

    A round creates ``B`` blocks; block ``b`` is generated by the miners in
    row ``b`` of ``generator_ids`` and validated by row ``b`` of
    ``validator_ids``.
    """
    chain_id: int
    generator_ids: np.ndarray  # (B, g)
    validator_ids: np.ndarray  # (B, V)
    leader_id: int
    block_is_true: np.ndarray  # (B,) ground truth
    accepted: np.ndarray  # (B,)
    feedback: np.ndarray  # (B,) share of validators voting "true"
    messages_sent: int
    intents: np.ndarray | None = None  # (B, g) True = generator meant a true block
    generator_kinds: np.ndarray | None = None  # (B, g)
    replicas: int = 0  # copies kept of each accepted block
    kill_chain: bool = False
    skipped: bool = False

    @classmethod
    def skipped_round(cls, chain_id: int, kill_chain: bool = False) -> "RoundOutcome":
        empty = np.zeros(0, dtype=bool)
        return cls(chain_id, np.zeros((0, 1), dtype=np.int64), np.zeros((0, 1), dtype=np.int64),
                   -1, empty, empty, np.zeros(0), 0, np.zeros((0, 1), dtype=bool),
                   np.zeros((0, 1), dtype=np.int8), 0, kill_chain, True)

    @property
    def n_blocks(self) -> int:
        return int(self.block_is_true.size)

    def __post_init__(self):
        if self.feedback.size and (self.feedback.min() < 0 or self.feedback.max() > 1):
            raise ValueError("feedback must lie in [0, 1]")
        if self.intents is None:
            self.intents = np.repeat(self.block_is_true[:, None], self.generator_ids.shape[1], axis=1)
        if self.generator_kinds is None:
            self.generator_kinds = np.zeros(self.generator_ids.shape, dtype=np.int8)


@dataclass
class MetricsSeries:
    cycle: np.ndarray
    malicious_responses: np.ndarray
    malicious_by_kind: dict  # kind name -> per-cycle counts
    attack_success_ratio: np.ndarray
    blocks_created: np.ndarray
    blocks_accepted: np.ndarray
    blocks_accepted_true: np.ndarray
    accepted_false: np.ndarray
    messages: np.ndarray
    storage_mb_per_cycle: np.ndarray
    skipped_rounds: np.ndarray
    wall_time_per_cycle: np.ndarray = field(default_factory=lambda: np.zeros(0))
    summary: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.cycle.size)

    # -- writers ---------------------------------------------------------
    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for k in range(len(self)):
                w.writerow([int(self.cycle[k]), int(self.malicious_responses[k]),
                            repr(float(self.attack_success_ratio[k])), int(self.blocks_created[k]),
                            int(self.blocks_accepted[k])])

    def write_details_csv(self, path) -> None:
        kinds = sorted(self.malicious_by_kind)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cycle", *(f"malicious_{k}" for k in kinds), "blocks_accepted_true",
                        "accepted_false", "messages", "storage_mb", "skipped_rounds"])
            for k in range(len(self)):
                w.writerow([int(self.cycle[k]), *(int(self.malicious_by_kind[x][k]) for x in kinds),
                            int(self.blocks_accepted_true[k]), int(self.accepted_false[k]),
                            int(self.messages[k]), repr(float(self.storage_mb_per_cycle[k])),
                            int(self.skipped_rounds[k])])

    def write_traces_csv(self, path) -> None:
        if not self.traces:
            return
        names = sorted(self.traces)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cycle", *names])
            for k in range(len(self)):
                w.writerow([int(self.cycle[k]), *(repr(float(self.traces[x][k])) for x in names)])

    def write_summary(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")


def _ratio(num, den):
    return float(num) / float(den) if den else 0.0


def compute_metrics(cycles, block_size_mb: float = 1.0, detection: dict | None = None,
                    wall_times=None) -> MetricsSeries:
    """Fold per-cycle lists of :class:`RoundOutcome` into a :class:`MetricsSeries`.

    ``accuracy`` is the share of created blocks that ended up accepted and
    true; ``acceptance_precision`` is accepted-true over accepted.
    ``detection`` carries flagged / ground-truth user arrays for the
    behaviour-prediction rates.
    """
    n = len(cycles)
    cyc = np.arange(1, n + 1)
    mal = np.zeros(n, dtype=np.int64)
    by_kind = {k.name.lower(): np.zeros(n, dtype=np.int64) for k in Kind if k != Kind.HONEST}
    created = np.zeros(n, dtype=np.int64)
    accepted = np.zeros(n, dtype=np.int64)
    acc_true = np.zeros(n, dtype=np.int64)
    acc_false = np.zeros(n, dtype=np.int64)
    messages = np.zeros(n, dtype=np.int64)
    storage = np.zeros(n)
    skipped = np.zeros(n, dtype=np.int64)
    split = {"kill": [0, 0], "mask": [0, 0]}  # accepted-true, created

    for k, rounds in enumerate(cycles):
        for r in rounds:
            if r.skipped:
                skipped[k] += 1
                continue
            false_intent = ~r.intents
            mal[k] += int(false_intent.sum())
            for kind in by_kind:
                by_kind[kind][k] += int((false_intent & (r.generator_kinds == Kind[kind.upper()])).sum())
            created[k] += r.n_blocks
            accepted[k] += int(r.accepted.sum())
            t = int((r.accepted & r.block_is_true).sum())
            acc_true[k] += t
            acc_false[k] += int((r.accepted & ~r.block_is_true).sum())
            messages[k] += r.messages_sent
            storage[k] += int(r.accepted.sum()) * r.replicas * block_size_mb
            bucket = split["kill" if r.kill_chain else "mask"]
            bucket[0] += t
            bucket[1] += r.n_blocks

    asr = np.array([_ratio(a, c) for a, c in zip(acc_false, created)])
    summary = {
        "cycles": n,
        "blocks_created": int(created.sum()),
        "blocks_accepted": int(accepted.sum()),
        "accuracy": _ratio(acc_true.sum(), created.sum()),
        "acceptance_precision": _ratio(acc_true.sum(), accepted.sum()) if accepted.sum() else 1.0,
        "accuracy_kill_chains": _ratio(*split["kill"]),
        "accuracy_mask_chains": _ratio(*split["mask"]),
        "network_overload": int(messages.sum()),
        "storage_mb": float(storage.sum()),
        "malicious_responses": int(mal.sum()),
    }
    if detection is not None:
        flagged = np.asarray(detection["flagged"], dtype=bool)
        truth = np.asarray(detection["intensive"], dtype=bool)
        others = np.asarray(detection.get("honest", ~truth), dtype=bool)
        summary["detection_rate"] = _ratio((flagged & truth).sum(), truth.sum())
        summary["false_positive_rate"] = _ratio((flagged & others).sum(), others.sum())
    wt = np.asarray(wall_times if wall_times is not None else np.zeros(n), dtype=float)
    summary["wall_time"] = float(wt.sum())
    summary["wall_time_per_cycle"] = float(wt.mean()) if n else 0.0
    return MetricsSeries(cyc, mal, by_kind, asr, created, accepted, acc_true, acc_false,
                         messages, storage, skipped, wt, summary)
