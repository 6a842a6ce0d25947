"""Brute-force Monte-Carlo pilot for the two-mode steering experiment.

Runs the preference-guided loop and the SDS baseline over a block of seeds and counts how often
each lands within 0.1 * |mu| of +mu (and of -mu). This is how the hit-rate
thresholds used by the acceptance test were chosen.

    python scripts/steering_pilot.py --seeds 20
    python scripts/steering_pilot.py --seeds 20 --set t_min=1 --set t_max=1000
"""

import argparse
import time
from pathlib import Path

import numpy as np

from prefdistill.harness import execute, load_config

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "two_mode_steering.cfg"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--first-seed", type=int, default=0)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()

    print("mode,seed,theta_x,theta_y,dist_plus,dist_minus")
    hits = {}
    start = time.perf_counter()
    for mode in ("dreamdpo", "sds"):
        plus = minus = 0
        for seed in range(args.first_seed, args.first_seed + args.seeds):
            cfg = load_config(args.config, args.set + [f"seed={seed}", f"mode={mode}",
                                                       "metric_every=0"])
            mu = cfg.target()
            rep, _, _ = execute(cfg)
            theta = rep.get_params()
            dp, dm = np.linalg.norm(theta - mu), np.linalg.norm(theta + mu)
            radius = 0.1 * np.linalg.norm(mu)
            plus += dp <= radius
            minus += dm <= radius
            print(f"{mode},{seed},{theta[0]:.4f},{theta[1]:.4f},{dp:.4f},{dm:.4f}")
        hits[mode] = (plus, minus)
    print()
    for mode, (plus, minus) in hits.items():
        print(f"{mode}: {plus}/{args.seeds} at +mu, {minus}/{args.seeds} at -mu")
    print(f"elapsed {time.perf_counter() - start:.1f}s")


if __name__ == "__main__":
    main()
