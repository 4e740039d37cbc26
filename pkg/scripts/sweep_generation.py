#!/usr/bin/env python3
"""Sweep the per-round generator share and the normal-DMB boosting rule.

For each setting it reports on how many seeds the trust-trend checks (global
trust, local trust on kill chains) and the attack-success check hold. This is
the experiment behind the default ``gen_fraction`` and ``normal_boost_on_kill``.
"""

import argparse

import numpy as np

from podt.config import SimConfig
from podt.engine import Simulation

THETA = 0.5


def checks(boost: bool, gf: float, seed: int):
    base = SimConfig(gen_fraction=gf, rng_seed=seed, normal_boost_on_kill=boost)
    res = {s: Simulation(base.replace(scheme=s)).run() for s in ("PoDT", "Baseline", "DiscTrustOnly")}
    tr = res["PoDT"].traces
    global_ok = ((tr["gt_ordinary"][19:] < THETA).all() and (tr["gt_normal_dmb"][10:] >= THETA).all()
                 and (tr["gt_intensive_dmb"][10:] >= THETA).all())
    local_ok = (all((v[19:] < THETA).all() for k, v in tr.items() if k.startswith("lt_normal"))
                and all((v[10:] >= THETA).all() for k, v in tr.items() if k.startswith("lt_intensive")))
    asr = {k: v.attack_success_ratio[-50:].mean() for k, v in res.items()}
    asr_ok = asr["PoDT"] < 0.05 and asr["PoDT"] < min(asr["Baseline"], asr["DiscTrustOnly"])
    return global_ok, local_ok, asr_ok


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--fractions", type=float, nargs="+", default=[0.12, 0.15, 0.2])
    p.add_argument("--seeds", type=int, default=10)
    args = p.parse_args()
    print("boost_on_kill gen_fraction global local asr all")
    for boost in (True, False):
        for gf in args.fractions:
            r = np.array([checks(boost, gf, s) for s in range(args.seeds)])
            print(f"{boost!s:13s} {gf:12.2f} {r[:, 0].sum():6d} {r[:, 1].sum():5d} "
                  f"{r[:, 2].sum():3d} {r.all(axis=1).sum():3d}", flush=True)


if __name__ == "__main__":
    main()
