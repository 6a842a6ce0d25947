"""Command line entry point: ``prefdistill {run,sweep-tau,ablate-pairs,baseline-sds}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import PrefDistillError
from .harness import (SUMMARY_COLUMNS, ablate_pairs, load_config, run_experiment, sweep_tau,
                      with_overrides)

log = logging.getLogger("prefdistill")


def _parse_taus(text: str) -> list[float]:
    out = []
    for tok in text.replace(",", " ").split():
        out.append(float("inf") if tok.lower() == "inf" else float(tok))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prefdistill", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", type=Path, help="flat key=value experiment config")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key (repeatable)")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--steps", type=int, default=None)
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    common(sub.add_parser("run", help="run one experiment"))
    sp = common(sub.add_parser("sweep-tau", help="one run per score-gap threshold"))
    sp.add_argument("--taus", required=True, help="comma separated, e.g. 0.01,0.005,0.001,0")
    sp.add_argument("--workers", type=int, default=1)
    sp = common(sub.add_parser("ablate-pairs", help="different noises vs different timesteps"))
    sp.add_argument("--gap", type=int, default=None)
    sp.add_argument("--workers", type=int, default=1)
    common(sub.add_parser("baseline-sds", help="plain score distillation on the same config"))
    return p


def _print_rows(rows) -> None:
    if not rows:
        return
    cols = list(rows[0].keys())
    print(",".join(cols))
    for r in rows:
        print(",".join("" if r[c] is None else str(r[c]) for c in cols))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.steps is not None:
        overrides.append(f"steps={args.steps}")
    if args.out is not None:
        overrides.append(f"output_dir={args.out}")
    try:
        config = load_config(args.config, overrides)
        if args.command == "run":
            row = run_experiment(config)
            _print_rows([{c: getattr(row, c) for c in SUMMARY_COLUMNS}])
        elif args.command == "baseline-sds":
            row = run_experiment(with_overrides(config, ["mode=sds"]), config_id="sds")
            _print_rows([{c: getattr(row, c) for c in SUMMARY_COLUMNS}])
        elif args.command == "sweep-tau":
            _print_rows(sweep_tau(config, _parse_taus(args.taus), workers=args.workers))
        elif args.command == "ablate-pairs":
            _print_rows(ablate_pairs(config, args.gap, workers=args.workers))
    except (PrefDistillError, OSError, ValueError) as exc:
        print(f"prefdistill: error: {exc}", file=sys.stderr)
        return 2
    log.info("outputs written to %s", config.output_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
