"""Command-line entry point: ``stackfl --config run.yaml --scheme aou --out results/``."""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
import time
from pathlib import Path

import yaml

from stackfl.config import SCHEMES, ConfigError, apply_override, config_from_dict
from stackfl.outputs import emit_outputs
from stackfl.simulation import run_simulation

log = logging.getLogger("stackfl")


def _parse_value(text: str):
    return yaml.safe_load(text)


def _sweep_grid(specs):
    """``["system.max_energy=0.01,0.02"]`` -> list of {key: value} combinations."""
    axes = []
    for spec in specs:
        key, sep, grid = spec.partition("=")
        if not sep or not grid:
            raise ConfigError(f"--sweep {spec!r}: expected section.key=v1,v2,...")
        axes.append([(key, _parse_value(v)) for v in grid.split(",")])
    return [dict(combo) for combo in itertools.product(*axes)]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stackfl", description=__doc__)
    p.add_argument("--config", type=Path, help="YAML run configuration (built-in defaults when omitted)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--scheme", choices=SCHEMES, help="device selection scheme")
    p.add_argument("--ra", choices=("mo", "fix"), help="resource allocation: polyblock or fixed")
    p.add_argument("--sa", choices=("match", "random"), help="sub-channel assignment")
    p.add_argument("--rounds", type=int, help="number of communication rounds")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument(
        "--sweep", action="append", default=[], metavar="SECTION.KEY=V1,V2",
        help="run once per grid value (repeatable; the product of all grids is run)",
    )
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = {}
        if args.config is not None:
            if not args.config.is_file():
                raise ConfigError(f"config file not found: {args.config}")
            raw = yaml.safe_load(args.config.read_text()) or {}
        for flag, key in [("seed", "run.seed"), ("scheme", "scheme.name"), ("ra", "scheme.ra"),
                          ("sa", "scheme.sa"), ("rounds", "run.rounds")]:
            value = getattr(args, flag)
            if value is not None:
                raw = apply_override(raw, key, value)
        if args.out is not None:
            raw = apply_override(raw, "output.dir", str(args.out))

        combos = _sweep_grid(args.sweep) if args.sweep else [{}]
        base_out = Path(config_from_dict(raw).out_dir)
        for combo in combos:
            run_raw = raw
            for key, value in combo.items():
                run_raw = apply_override(run_raw, key, value)
            cfg = config_from_dict(run_raw)
            out_dir = base_out
            if combo:
                out_dir = base_out / "_".join(f"{k}={v}" for k, v in combo.items())
            start = time.perf_counter()
            summary = run_simulation(cfg)
            emit_outputs(summary, out_dir)
            print(
                f"{out_dir}: scheme={cfg.scheme.name} rounds={cfg.rounds} "
                f"final_loss={summary.final_loss:.6g} convergence_time={summary.cumulative_time:.6g}s "
                f"({time.perf_counter() - start:.1f}s wall)"
            )
    except ConfigError as exc:
        print(f"stackfl: config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"stackfl: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
