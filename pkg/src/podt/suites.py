"""Built-in experiment suites and the runner that writes their outputs.

Each suite is a list of variants (one config per point on the sweep axis).
Every variant runs once per seed in its own directory; the suite directory
also gets ``aggregate.csv`` (sweep axis joined to summary metrics, one column
per seed plus the mean) and, for per-cycle suites, ``curves.csv``.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import SimConfig
from .engine import Simulation

log = logging.getLogger(__name__)


@dataclass
class Variant:
    label: str
    axis: dict
    config: SimConfig


@dataclass
class ScenarioSuite:
    name: str
    variants: list
    metrics: tuple  # summary keys written to aggregate.csv
    curve: str | None = None  # per-cycle series written to curves.csv
    description: str = ""
    seeds: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.variants:
            raise ValueError(f"suite {self.name} has no variants")
        labels = [v.label for v in self.variants]
        if len(set(labels)) != len(labels):
            raise ValueError(f"suite {self.name} has duplicate variant labels")


def _schemes(base: SimConfig, schemes, **axis):
    return [Variant(s, {"scheme": s, **axis}, base.replace(scheme=s)) for s in schemes]


def _mixed(p: float) -> dict:
    return {"ordinary": p / 3, "normal_dmb": p / 3, "intensive_dmb": p / 3}


USER_SWEEP = (1000, 2500, 5000, 7500, 10000)


def _fig12(base):
    out = []
    for n in USER_SWEEP:
        for pct in (10, 30, 50):
            cfg = base.replace(n_users=n, attacker_fractions={"intensive_dmb": pct / 100})
            out.append(Variant(f"n{n}_p{pct}", {"n_users": n, "attacker_pct": pct}, cfg))
    return out


def _fig13(base):
    out = []
    for pct in range(10, 80, 10):
        for s in ("PoDT", "AllMiners", "RandomMiners"):
            cfg = base.replace(scheme=s, attacker_fractions=_mixed(pct / 100))
            out.append(Variant(f"{s}_p{pct}", {"scheme": s, "attacker_pct": pct}, cfg))
    return out


def _user_sweep(base):
    # fewer cycles: these figures measure cost, which is flat across cycles
    out = []
    for n in USER_SWEEP:
        for s in ("PoDT", "AllMiners", "RandomMiners"):
            cfg = base.replace(scheme=s, n_users=n, cycles=50)
            out.append(Variant(f"{s}_n{n}", {"scheme": s, "n_users": n}, cfg))
    return out


def build_suites(base: SimConfig | None = None) -> dict[str, ScenarioSuite]:
    base = (base or SimConfig()).validate()
    large = base.replace(n_chains=100, kill_chain_count=40, cycles=2000)
    S = ScenarioSuite
    suites = [
        S("fig6", _schemes(base, ["PoDT"]), ("accuracy",), "traces",
          "global trust of one attacker of each kind"),
        S("fig7", _schemes(base, ["PoDT"]), ("accuracy",), "traces",
          "local trust of the DMB attackers on their kill chains"),
        S("fig8", _schemes(base, ["Baseline", "DiscTrustOnly"]), ("malicious_responses",),
          "cum_malicious_normal_dmb", "cumulative normal DMB malicious responses"),
        S("fig9", _schemes(base, ["DiscTrustOnly", "PoDT"]), ("malicious_responses",),
          "cum_malicious_intensive_dmb", "cumulative intensive DMB malicious responses"),
        S("fig9_large", _schemes(large, ["DiscTrustOnly", "PoDT"]), ("malicious_responses",),
          "cum_malicious_intensive_dmb", "fig9 with 100 chains and 2000 cycles"),
        S("fig10", _schemes(base.replace(attacker_fractions={"normal_dmb": 0.3}),
                            ["Baseline", "DiscTrustOnly"]),
          ("accuracy",), "attack_success_ratio", "attack success ratio, normal DMB only"),
        S("fig11", _schemes(base.replace(attacker_fractions={"intensive_dmb": 0.3}),
                            ["DiscTrustOnly", "PoDT"]),
          ("accuracy",), "attack_success_ratio", "attack success ratio, intensive DMB only"),
        S("fig12", _fig12(base), ("detection_rate", "false_positive_rate"), None,
          "behaviour-prediction detection rate against users and intensive share"),
        S("fig13", _fig13(base), ("accuracy", "accuracy_kill_chains", "accuracy_mask_chains"),
          None, "accuracy against attacker percentage"),
        S("fig14", _schemes(base, ["PoDT", "AllMiners", "RandomMiners"]), ("network_overload",),
          "cum_messages", "cumulative messages per cycle"),
        S("fig15", _user_sweep(base), ("wall_time_per_cycle",), None, "wall time against users"),
        S("fig16", _user_sweep(base), ("storage_mb",), None, "storage volume against users"),
    ]
    return {s.name: s for s in suites}


SUITE_NAMES = tuple(build_suites())


# -- running -------------------------------------------------------------------

def write_run(sim: Simulation, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    series = sim.metrics()
    series.write_csv(out_dir / "metrics.csv")
    series.write_details_csv(out_dir / "details.csv")
    series.write_traces_csv(out_dir / "traces.csv")
    series.write_summary(out_dir / "summary.json")
    (out_dir / "config.json").write_text(json.dumps(sim.cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    return series


def curve_of(series, name: str) -> dict[str, np.ndarray]:
    if name == "traces":
        return dict(series.traces)
    if name == "attack_success_ratio":
        return {name: series.attack_success_ratio}
    if name == "cum_messages":
        return {name: np.cumsum(series.messages)}
    if name.startswith("cum_malicious_"):
        return {name: np.cumsum(series.malicious_by_kind[name[len("cum_malicious_"):]])}
    raise KeyError(name)


def _run_one(args):
    cfg, out_dir, model = args
    sim = Simulation(cfg, model)
    sim.run()
    series = write_run(sim, Path(out_dir))
    return series.summary, series


def run_suite(suite: ScenarioSuite, out_root, seeds=(0,), scale: float = 1.0, jobs: int = 1,
              plot: bool = False, model=None) -> Path:
    out = Path(out_root) / suite.name
    out.mkdir(parents=True, exist_ok=True)
    tasks, keys = [], []
    for v in suite.variants:
        cfg = v.config.scaled(scale) if scale != 1.0 else v.config
        for s in seeds:
            tasks.append((cfg.replace(rng_seed=int(s)), out / v.label / f"seed{s}", model))
            keys.append((v.label, s))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    by_key = dict(zip(keys, results))
    _write_aggregate(suite, out / "aggregate.csv", by_key, seeds)
    if suite.curve:
        _write_curves(suite, out / "curves.csv", by_key, seeds)
    if plot:
        from .plotting import plot_suite
        plot_suite(suite, out)
    return out


def _write_aggregate(suite, path, by_key, seeds):
    axis = list(dict.fromkeys(k for v in suite.variants for k in v.axis))
    header = ["variant", *axis]
    for m in suite.metrics:
        header += [f"{m}_seed{s}" for s in seeds] + [f"{m}_mean"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for v in suite.variants:
            row = [v.label, *(v.axis.get(a, "") for a in axis)]
            for m in suite.metrics:
                vals = [float(by_key[(v.label, s)][0].get(m, float("nan"))) for s in seeds]
                row += [repr(x) for x in vals] + [repr(float(np.mean(vals)))]
            w.writerow(row)


def _write_curves(suite, path, by_key, seeds):
    cols = {}
    for v in suite.variants:
        per_seed = [curve_of(by_key[(v.label, s)][1], suite.curve) for s in seeds]
        for name in per_seed[0]:
            stack = [c[name] for c in per_seed if name in c]
            length = min(len(x) for x in stack)
            cols[f"{v.label}:{name}"] = np.mean([x[:length] for x in stack], axis=0)
    if not cols:
        return
    length = min(len(c) for c in cols.values())
    names = list(cols)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cycle", *names])
        for k in range(length):
            w.writerow([k + 1, *(repr(float(cols[n][k])) for n in names)])
