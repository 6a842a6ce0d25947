"""LMM-ranked run with a recorded annotation table.

By default the brightness mock answers the questions. Pass ``--endpoint`` to
use a live HTTP model instead; every reply is recorded to ``replies.json`` so
the run can be replayed offline afterwards with ``--replay``.

    python scripts/lmm_demo.py
    python scripts/lmm_demo.py --replay out/lmm_demo/replies.json
"""

import argparse
from pathlib import Path

from prefdistill.harness import load_config, run_experiment
from prefdistill.ranker import RecordingTransport, ReplayTransport, make_transport

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "lmm_ranked.cfg"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--endpoint", default=None, help="transport locator, e.g. mock:brightness")
    ap.add_argument("--replay", default=None, help="replay a recorded replies.json")
    ap.add_argument("--out", default="out/lmm_demo")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()

    cfg = load_config(args.config, args.set)
    out = Path(args.out)
    if args.replay:
        transport = ReplayTransport.load(args.replay)
        out = out / "replayed"
    else:
        # no --endpoint: resolve from the config, then the environment
        inner = make_transport(args.endpoint) if args.endpoint else cfg.reward_spec().transport
        transport = RecordingTransport(inner)
    row = run_experiment(cfg, out, "lmm_demo", transport=transport)
    if isinstance(transport, RecordingTransport):
        transport.save(out / "replies.json")
        print(f"recorded {len(transport.table)} replies to {out / 'replies.json'}")
    print(f"pull_only={row.pull_only} push_pull={row.push_pull} skipped={row.skipped} "
          f"final_avg_reward={row.final_avg_reward}")


if __name__ == "__main__":
    main()
