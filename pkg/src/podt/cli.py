"""Command-line entry point: run one scenario or a built-in figure suite.

Exit codes: 0 success, 2 invalid configuration, 3 runtime failure,
4 missing input file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, SimConfig, config_from_dict, load_config
from .dbp import SvmModel
from .engine import Simulation
from .suites import SUITE_NAMES, build_suites, run_suite, write_run

OUT_ENV = "PODT_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_MISSING = 0, 2, 3, 4

log = logging.getLogger("podt")


def _override(text: str):
    key, sep, raw = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="podt", description="Distinctive-trust consensus simulator.")
    p.add_argument("--config", type=Path, help="JSON scenario file (fields of SimConfig)")
    p.add_argument("--set", dest="overrides", type=_override, action="append", default=[],
                   metavar="KEY=VALUE", help="override one config field (JSON value)")
    p.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./runs)")
    p.add_argument("--seed", type=int, help="RNG seed (first seed for suites)")
    p.add_argument("--seeds", type=int, default=1, help="seeds per suite variant")
    p.add_argument("--scheme", help="PoDT, Baseline, DiscTrustOnly, AllMiners or RandomMiners")
    p.add_argument("--suite", help=f"built-in suite: {', '.join(SUITE_NAMES)}")
    p.add_argument("--scale", type=float, default=1.0, help="shrink users, cycles and chains")
    p.add_argument("--jobs", type=int, default=1, help="parallel processes for suites")
    p.add_argument("--plot", action="store_true", help="also write PNG plots (needs matplotlib)")
    p.add_argument("--model", type=Path, help="pre-trained behaviour model (JSON)")
    p.add_argument("--save-model", type=Path, help="write the trained behaviour model here")
    p.add_argument("--save-sidechain", action="store_true", help="write sidechain.bin for single runs")
    p.add_argument("--list-suites", action="store_true")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def resolve_config(args, scale: bool = True) -> SimConfig:
    overrides = dict(args.overrides)
    if args.scheme is not None:
        overrides["scheme"] = args.scheme
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    cfg = load_config(args.config, overrides) if args.config else config_from_dict(overrides)
    return cfg.scaled(args.scale) if scale and args.scale != 1.0 else cfg


def _run_single(args, cfg: SimConfig, out: Path, model) -> None:
    sim = Simulation(cfg, model)
    sim.run()
    series = write_run(sim, out)
    if args.save_sidechain:
        sim.sidechain.save(out / "sidechain.bin")
    if args.save_model and sim.model is not None:
        sim.model.save(args.save_model)
    s = series.summary
    print(f"{cfg.scheme}: {len(series)} cycles, accuracy={s['accuracy']:.4f}, "
          f"malicious={s['malicious_responses']}, overload={s['network_overload']} -> {out}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list_suites:
        for name, suite in build_suites().items():
            print(f"{name:11s} {len(suite.variants):3d} variants  {suite.description}")
        return EXIT_OK
    out = args.out or Path(os.environ.get(OUT_ENV, "runs"))
    try:
        cfg = resolve_config(args, scale=not args.suite)
        model = SvmModel.load(args.model) if args.model else None
        if args.suite:
            suites = build_suites(cfg)
            if args.suite not in suites:
                raise ConfigError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITE_NAMES)}")
            if args.seeds < 1:
                raise ConfigError("--seeds must be >= 1")
            seeds = [cfg.rng_seed + k for k in range(args.seeds)]
            where = run_suite(suites[args.suite], out, seeds, args.scale, args.jobs, args.plot, model)
            print(f"suite {args.suite}: {len(suites[args.suite].variants)} variants x "
                  f"{len(seeds)} seeds -> {where}")
        else:
            _run_single(args, cfg, out, model)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and map to the runtime exit code
        log.debug("run failed", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
