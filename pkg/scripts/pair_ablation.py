"""Different-noises vs different-timesteps pairs on matched random draws.

Prints the paired comparison of per-iteration score gaps; a positive z means
timestep pairs are easier for the ranker to tell apart.

    python scripts/pair_ablation.py --gap 200 --set steps=500
"""

import argparse
from pathlib import Path

from prefdistill.harness import ablate_pairs, load_config

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "two_mode_steering.cfg"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--gap", type=int, default=200)
    ap.add_argument("--seeds", type=int, default=1)
    ap.add_argument("--out", default="out/pair_ablation")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()

    print("seed,paired_n,paired_mean_diff,paired_z,final_distance_noises,final_distance_timesteps")
    for seed in range(args.seeds):
        base = load_config(args.config, args.set + [f"seed={seed}", "metric_every=0"])
        table = ablate_pairs(base, gap=args.gap, out_dir=Path(args.out) / f"seed_{seed:02d}")
        s = table[0]
        print(f"{seed},{s['paired_n']},{s['paired_mean_diff']:.4f},{s['paired_z']:.2f},"
              f"{table[0]['final_distance']:.4f},{table[1]['final_distance']:.4f}")


if __name__ == "__main__":
    main()
