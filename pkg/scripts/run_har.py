"""Train and evaluate the ten HAR scenarios over several seeds on converted data.

    python3 scripts/convert_adatime.py data/HAR converted/HAR
    python3 scripts/run_har.py converted/HAR --seeds 0,1,2
"""
import argparse
from pathlib import Path

import numpy as np

from unijdot.cli import fit, resolve_tau
from unijdot.config import experiment_from_dict
from unijdot.evaluation import evaluate

SCENARIOS = [(12, 16), (13, 3), (15, 21), (17, 29), (1, 14), (22, 4), (24, 8), (30, 20), (6, 23), (9, 18)]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("root", type=Path, help="directory of converted subjects (<root>/<id>)")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--source-private", type=int, default=5)
    p.add_argument("--target-private", type=int, default=0)
    args = p.parse_args(argv)
    seeds = [int(s) for s in args.seeds.split(",")]
    means = []
    for src, tgt in SCENARIOS:
        cfg = experiment_from_dict({
            "scenario": {
                "source": str(args.root / str(src)),
                "target": str(args.root / str(tgt)),
                "source_private": args.source_private,
                "target_private": args.target_private,
            },
            "seeds": seeds,
        })
        hs = []
        for s in seeds:
            model, _, split = fit(cfg, s)
            tau = resolve_tau(model, split, cfg, s, cfg.mode)
            hs.append(evaluate(model, split.test.target.samples, split.test.target.labels, tau, cfg.mode).h_score)
        means.append(np.mean(hs))
        print(f"{src:>2} -> {tgt:<2}  H {100 * np.mean(hs):5.1f} +/- {100 * np.std(hs) / np.sqrt(len(hs)):4.1f}", flush=True)
    print(f"mean  H {100 * np.mean(means):5.1f}")


if __name__ == "__main__":
    main()
