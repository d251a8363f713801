"""H-score against a fixed threshold on two synthetic scenarios, with the auto-threshold reference.

    python3 scripts/threshold_sensitivity.py --out runs/sensitivity [--plot]
"""
import argparse
from pathlib import Path

from unijdot.cli import best_tau, cmd_sweep_threshold
from unijdot.config import experiment_from_dict


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=Path("runs/sensitivity"))
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--shifts", default="0.5,2.0", help="shift magnitudes, one scenario each")
    p.add_argument("--freq-shift", type=float, default=0.04)
    p.add_argument("--plot", action="store_true", help="also write sweep.png (needs matplotlib)")
    args = p.parse_args(argv)
    cfg = experiment_from_dict({
        "seeds": [int(s) for s in args.seeds.split(",")],
        "sweep_scenarios": [{"synth": {"shift": float(m), "freq_shift": args.freq_shift}} for m in args.shifts.split(",")],
    })
    rows, text = cmd_sweep_threshold(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "sweep.csv").write_text(text)
    scenarios = list(dict.fromkeys(r["scenario"] for r in rows))
    for name in scenarios:
        sel = [r for r in rows if r["scenario"] == name]
        print(f"{name}: best fixed tau {best_tau(rows, name):.2f} (H {max(r['h_score'] for r in sel):.3f}), "
              f"auto H {sel[0]['auto_h_score']:.3f} at mean tau {sel[0]['auto_tau']:.3f}")
        for r in sel:
            print(f"  {r['tau']:6.3f} {r['h_score']:.3f} {'#' * round(40 * r['h_score'])}")
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 3.5))
        for name in scenarios:
            sel = [r for r in rows if r["scenario"] == name]
            line, = ax.plot([r["tau"] for r in sel], [r["h_score"] for r in sel], marker=".", label=name)
            ax.axhline(sel[0]["auto_h_score"], ls=":", color=line.get_color())
        ax.set_xlabel("fixed threshold")
        ax.set_ylabel("H-score")
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.out / "sweep.png", dpi=150)


if __name__ == "__main__":
    main()
