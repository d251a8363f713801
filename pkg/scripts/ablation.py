"""Eight-way ablation of auto-thresholding, joint decision and the Fourier branch.

    python3 scripts/ablation.py --config configs/synth.json --out runs/ablation
"""
import argparse
from dataclasses import replace
from pathlib import Path

from unijdot.cli import cmd_ablate
from unijdot.config import experiment_from_dict, load_experiment


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out", type=Path, default=Path("runs/ablation"))
    args = p.parse_args(argv)
    cfg = load_experiment(args.config) if args.config else experiment_from_dict({})
    cfg = replace(cfg, seeds=[int(s) for s in args.seeds.split(",")])
    _, text, md = cmd_ablate(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "ablation.csv").write_text(text)
    (args.out / "ablation.md").write_text(md)
    print(md, end="")


if __name__ == "__main__":
    main()
