"""Simulation configuration and its JSON scenario file format."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

SCHEMES = ("PoDT", "Baseline", "DiscTrustOnly", "AllMiners", "RandomMiners")
ATTACKER_KINDS = ("ordinary", "normal_dmb", "intensive_dmb")


class ConfigError(ValueError):
    pass


def _default_fractions():
    return {"ordinary": 0.1, "normal_dmb": 0.1, "intensive_dmb": 0.1}


@dataclass
class SimConfig:
    n_users: int = 1000
    n_chains: int = 10
    theta: float = 0.5
    xi1: float = 0.1
    xi2: float = 0.4
    cycles: int = 200
    kill_chain_count: int = 4
    # every DMB attacker shares the same kill-chains unless this is False
    shared_kill_chains: bool = True
    attacker_fractions: dict = field(default_factory=_default_fractions)
    # let Boosting normal DMB attackers create true blocks on kill-chains too
    normal_boost_on_kill: bool = True
    scheme: str = "PoDT"
    rng_seed: int = 0

    # block creation
    block_mode: str = "per_generator"  # or "majority": k_gen miners jointly build one block
    k_gen: int | None = None  # None: gen_fraction of the chain's active users
    gen_fraction: float = 0.12
    k_val: int = 5
    leader_term: int = 10
    activity_rate: float = 1.0  # chance a user is active on a chain in a given cycle
    m_window: int = 0  # rounds over which m_j is the max active count; 0 = whole run
    enforce_rule4: bool = False  # restrict chain-miner padding to network miners

    # dynamic behaviour prediction
    calibration_cycles: int = 20
    retrain_every: int = 0  # 0 keeps the calibrated model frozen
    svm_penalty: float = 1.0
    svm_max_samples: int = 2000
    feedback_mode: str = "latest"  # or "mean"
    feedback_window: int = 5

    block_size_mb: float = 1.0
    sidechain_capacity_mb: float = 1.0

    def validate(self) -> "SimConfig":
        try:
            return self._validate()
        except TypeError as exc:
            raise ConfigError(f"wrongly typed config value ({exc})") from exc

    def _validate(self) -> "SimConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(isinstance(self.n_users, int) and self.n_users >= 2, "n_users must be an integer >= 2")
        need(isinstance(self.n_chains, int) and self.n_chains >= 1, "n_chains must be an integer >= 1")
        need(0.0 < self.theta < 1.0, f"theta must lie in (0, 1), got {self.theta}")
        need(self.xi1 < self.xi2, "xi1 must be below xi2")
        need(self.theta + self.xi2 <= 1.0 + 1e-12, "theta + xi2 must not exceed 1")
        need(isinstance(self.cycles, int) and self.cycles >= 0, "cycles must be a non-negative integer")
        need(0 <= self.kill_chain_count <= self.n_chains,
             f"kill_chain_count must lie in [0, {self.n_chains}]")
        need(self.scheme in SCHEMES, f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        need(self.block_mode in ("per_generator", "majority"), f"unknown block_mode {self.block_mode!r}")
        unknown = set(self.attacker_fractions) - set(ATTACKER_KINDS)
        need(not unknown, f"unknown attacker kinds {sorted(unknown)}")
        fr = [float(v) for v in self.attacker_fractions.values()]
        need(all(f >= 0 for f in fr), "attacker fractions must be non-negative")
        need(sum(fr) <= 1.0 + 1e-9, "attacker fractions must sum to at most 1")
        need(self.k_gen is None or self.k_gen >= 1, "k_gen must be >= 1")
        need(0.0 < self.gen_fraction <= 1.0, "gen_fraction must lie in (0, 1]")
        need(self.k_val >= 1, "k_val must be >= 1")
        need(self.leader_term >= 1, "leader_term must be >= 1")
        need(0.0 < self.activity_rate <= 1.0, "activity_rate must lie in (0, 1]")
        need(self.m_window >= 0, "m_window must be >= 0")
        need(self.calibration_cycles >= 1, "calibration_cycles must be >= 1")
        need(self.retrain_every >= 0, "retrain_every must be >= 0")
        need(self.svm_penalty > 0, "svm_penalty must be positive")
        need(self.svm_max_samples >= 2, "svm_max_samples must be >= 2")
        need(self.feedback_mode in ("latest", "mean"), f"unknown feedback_mode {self.feedback_mode!r}")
        need(self.feedback_window >= 1, "feedback_window must be >= 1")
        return self

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes).validate()

    def fraction(self, kind: str) -> float:
        return float(self.attacker_fractions.get(kind, 0.0))

    def scaled(self, factor: float) -> "SimConfig":
        """Shrink users, cycles and chains by ``factor`` (for quick runs)."""
        if factor <= 0:
            raise ConfigError("scale factor must be positive")
        if factor == 1.0:
            return self.replace()
        h = max(2, round(self.n_chains * factor))
        k = round(self.kill_chain_count * h / self.n_chains)
        if 0 < self.kill_chain_count < self.n_chains:
            k = min(max(k, 1), h - 1)
        return self.replace(
            n_users=max(20, round(self.n_users * factor)),
            cycles=max(40, round(self.cycles * factor)) if self.cycles else 0,
            n_chains=h,
            kill_chain_count=k,
            calibration_cycles=max(5, math.ceil(self.calibration_cycles * factor)),
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def config_from_dict(data: dict) -> SimConfig:
    names = {f.name for f in dataclasses.fields(SimConfig)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = SimConfig().to_dict()
    merged.update(data)
    try:
        cfg = SimConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config(path, overrides: dict | None = None) -> SimConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    data.update(overrides or {})
    return config_from_dict(data)
