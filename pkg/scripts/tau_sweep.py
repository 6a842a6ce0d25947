"""Threshold sweep on the two-mode toy.

Runs one preference-guided run per tau (same seed, so the same random draws) and prints
the branch counts each run produced plus the counts each tau would give on the
first run's recorded score gaps.

    python scripts/tau_sweep.py --out out/tau_sweep
"""

import argparse
import math
from pathlib import Path

from prefdistill.harness import load_config, sweep_tau

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "two_mode_steering.cfg"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--taus", default="0.01,0.005,0.001,0,inf")
    ap.add_argument("--out", default="out/tau_sweep")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()

    base = load_config(args.config, args.set)
    taus = [math.inf if s.strip() == "inf" else float(s) for s in args.taus.split(",")]
    table = sweep_tau(base, taus, args.out, workers=args.workers)
    print("tau,pull_only,push_pull,replay_push_pull,final_distance")
    for row in table:
        print(f"{row['tau']},{row['pull_only']},{row['push_pull']},{row['replay_push_pull']},"
              f"{row['final_distance']:.4f}")


if __name__ == "__main__":
    main()
