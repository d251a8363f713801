"""Command-line front end.

    unijdot train           --config cfg.json [--seed N] [--out DIR]
    unijdot evaluate        RUN_DIR [--mode last|valbatch]
    unijdot synth           [--config cfg.json] [--seed N] --out DIR
    unijdot sweep-threshold --config cfg.json [--tau-grid 0,0.1,...]
    unijdot ablate          --config cfg.json

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig, experiment_from_dict, load_experiment
from .data import DatasetError, Scenario, SynthConfig, build_unida_scenario, load_dataset, save_dataset, synth_generate, train_test_split
from .evaluation import EvalReport, Mode, evaluate, inference_threshold, report_from_predictions, predict_from_probs
from .pipeline import TrainedModel, train

log = logging.getLogger("unijdot")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
DEFAULT_TAU_GRID = [round(0.05 * i, 2) for i in range(21)] + [1.0 + 1e-6]


# ---------------------------------------------------------------------------
# scenarios

@dataclass
class ScenarioSplit:
    train: Scenario
    test: Scenario
    name: str


def build_scenario(spec: dict, seed: int) -> ScenarioSplit:
    """Materialize a scenario spec; synthetic data is regenerated from ``synth.seed + seed``."""
    src_priv = spec.get("source_private", 5)
    tgt_priv = spec.get("target_private", 0)
    frac = spec.get("train_fraction", 0.7)
    if "synth" in spec:
        sc = SynthConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in spec["synth"].items()})
        source, target = synth_generate(replace(sc, seed=sc.seed + seed))
        name = spec.get("name", f"synth-shift{sc.shift:g}")
    else:
        source, target = load_dataset(spec["source"]), load_dataset(spec["target"])
        name = spec.get("name", f"{Path(spec['source']).name}->{Path(spec['target']).name}")
    s_tr, s_te = train_test_split(source, frac, seed)
    t_tr, t_te = train_test_split(target, frac, seed)
    try:
        return ScenarioSplit(
            build_unida_scenario(s_tr, t_tr, src_priv, tgt_priv, name),
            build_unida_scenario(s_te, t_te, src_priv, tgt_priv, name),
            name,
        )
    except ValueError as e:
        raise DatasetError(str(e)) from e


def validation_batch(split: ScenarioSplit, size: int, seed: int) -> np.ndarray:
    """Seeded draw of unlabeled target training samples (no labels leave the scenario)."""
    x = split.train.target_unlabeled().samples
    rng = np.random.default_rng([seed, 7])
    return x[rng.choice(len(x), size=min(size, len(x)), replace=False)]


def resolve_tau(model: TrainedModel, split: ScenarioSplit, cfg: ExperimentConfig, seed: int, mode: str) -> float:
    vb = validation_batch(split, cfg.train.valbatch_size, seed) if Mode(mode) is Mode.VALBATCH else None
    return inference_threshold(model, mode, vb, model.last_tau)


def _with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(cfg, train=replace(cfg.train, seed=seed))


def fit(cfg: ExperimentConfig, seed: int, scenario: dict | None = None, on_step=None):
    split = build_scenario(scenario or cfg.scenario, seed)
    c = _with_seed(cfg, seed)
    model, reports = train(split.train, c.train, c.ot, c.arch, on_step=on_step)
    return model, reports, split


# ---------------------------------------------------------------------------
# commands

def run_dir(cfg: ExperimentConfig, seed: int) -> Path:
    return Path(cfg.out) / cfg.digest() / f"seed{seed}"


def cmd_train(cfg: ExperimentConfig) -> list[Path]:
    dirs = []
    for seed in cfg.seeds:
        d = run_dir(cfg, seed)
        d.mkdir(parents=True, exist_ok=True)
        log_path = d / "train_log.jsonl"
        with open(log_path, "w") as fh:
            def on_step(rep):
                fh.write(json.dumps(rep.to_dict()) + "\n")

            model, reports, split = fit(cfg, seed, on_step=on_step)
        summary = {
            "seed": seed,
            "scenario": split.name,
            "steps": len(reports),
            "final_tau": model.last_tau,
            "final_loss": reports[-1].loss_total if reports else None,
        }
        (d / "config.json").write_text(json.dumps(cfg.to_dict() | {"seeds": [seed]}, indent=2, sort_keys=True))
        (d / "summary.json").write_text(json.dumps(summary, indent=2))
        save_checkpoint(model, d / "model.ujdt", extra={"seed": seed, "digest": cfg.digest()})
        log.info("seed %d -> %s (final tau %s)", seed, d, model.last_tau)
        dirs.append(d)
    return dirs


def cmd_evaluate(path, mode: str = "valbatch") -> EvalReport:
    d = Path(path)
    ckpt = d / "model.ujdt"
    if not ckpt.exists():
        raise CheckpointError("file", f"no checkpoint at {ckpt}")
    model, extra = load_checkpoint(ckpt)
    cfg = load_experiment(d / "config.json")
    seed = extra.get("seed", cfg.seeds[0])
    split = build_scenario(cfg.scenario, seed)
    tau = resolve_tau(model, split, cfg, seed, mode)
    report = evaluate(model, split.test.target.samples, split.test.target.labels, tau, Mode(mode).value)
    for name in ("report", f"report-{Mode(mode).value}"):
        (d / f"{name}.json").write_text(report.to_json())
        (d / f"{name}.csv").write_text(report.to_csv())
    log.info("%s: mode=%s tau=%.4f H=%.4f", d, mode, tau, report.h_score)
    return report


def cmd_synth(cfg: ExperimentConfig, out) -> tuple[Path, Path]:
    spec = cfg.scenario.get("synth", {})
    sc = SynthConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in spec.items()})
    sc = replace(sc, seed=sc.seed + cfg.seeds[0])
    source, target = synth_generate(sc)
    out = Path(out)
    return save_dataset(source, out / "source"), save_dataset(target, out / "target")


def sweep_scores(model: TrainedModel, split: ScenarioSplit, grid) -> list[EvalReport]:
    """Evaluate one trained model at every fixed threshold of ``grid``."""
    probs = model.decision_probs(split.test.target.samples)
    labels = split.test.target.labels
    return [report_from_predictions(labels, predict_from_probs(probs, t), float(t), "fixed") for t in grid]


SWEEP_FIELDS = ("scenario", "tau", "h_score", "a_common", "a_unknown", "auto_h_score", "auto_tau")


def cmd_sweep_threshold(cfg: ExperimentConfig, tau_grid=None) -> tuple[list[dict], str]:
    """Fixed-threshold sweep per scenario, averaged over seeds, with the auto-threshold reference."""
    grid = list(tau_grid if tau_grid is not None else (cfg.tau_grid or DEFAULT_TAU_GRID))
    if not grid:
        raise ConfigError("tau grid is empty")
    scenarios = cfg.sweep_scenarios or [cfg.scenario]
    rows = []
    for spec in scenarios:
        per_tau = {t: [] for t in grid}
        auto_h, auto_tau, name = [], [], None
        for seed in cfg.seeds:
            model, _, split = fit(cfg, seed, spec)
            name = split.name
            tau = resolve_tau(model, split, cfg, seed, cfg.mode)
            auto = evaluate(model, split.test.target.samples, split.test.target.labels, tau, cfg.mode)
            auto_h.append(auto.h_score)
            auto_tau.append(tau)
            if cfg.sweep_retrain:
                for t in grid:
                    c = replace(cfg, train=replace(cfg.train, auto_threshold=False, fixed_tau=float(t)))
                    m, _, sp = fit(c, seed, spec)
                    per_tau[t].append(sweep_scores(m, sp, [t])[0])
            else:
                for t, rep in zip(grid, sweep_scores(model, split, grid)):
                    per_tau[t].append(rep)
        for t in grid:
            reps = per_tau[t]
            rows.append({
                "scenario": name,
                "tau": float(t),
                "h_score": float(np.mean([r.h_score for r in reps])),
                "a_common": _mean_opt([r.a_common for r in reps]),
                "a_unknown": _mean_opt([r.a_unknown for r in reps]),
                "auto_h_score": float(np.mean(auto_h)),
                "auto_tau": float(np.mean(auto_tau)),
            })
    return rows, _to_csv(rows, SWEEP_FIELDS)


def best_tau(rows: list[dict], scenario: str | None = None) -> float:
    """Argmax of H over a sweep (lowest τ on ties)."""
    sel = [r for r in rows if scenario is None or r["scenario"] == scenario]
    return max(sel, key=lambda r: (r["h_score"], -r["tau"]))["tau"]


ABLATION_FIELDS = ("auto_threshold", "joint_decision", "fourier", "tau", "h_score", "h_std", "a_common", "a_unknown", "label")


def cmd_ablate(cfg: ExperimentConfig) -> tuple[list[dict], str, str]:
    """All 8 combinations of {auto-threshold, joint decision, Fourier branch}.

    Rows without auto-thresholding train and evaluate with the best fixed τ of a
    threshold sweep over their auto-thresholded counterpart.
    """
    grid = cfg.tau_grid or DEFAULT_TAU_GRID
    rows = []
    for joint, fourier in itertools.product((True, False), repeat=2):
        base = replace(cfg, train=replace(cfg.train, joint_decision=joint, auto_threshold=True, fixed_tau=None), arch=replace(cfg.arch, fourier=fourier))
        reps_on, sweep = [], {t: [] for t in grid}
        for seed in cfg.seeds:
            model, _, split = fit(base, seed)
            tau = resolve_tau(model, split, base, seed, base.mode)
            reps_on.append((tau, evaluate(model, split.test.target.samples, split.test.target.labels, tau, base.mode)))
            for t, rep in zip(grid, sweep_scores(model, split, grid)):
                sweep[t].append(rep.h_score)
        tau_star = float(max(grid, key=lambda t: (np.mean(sweep[t]), -t)))
        off = replace(base, train=replace(base.train, auto_threshold=False, fixed_tau=tau_star))
        reps_off = []
        for seed in cfg.seeds:
            model, _, split = fit(off, seed)
            reps_off.append((tau_star, evaluate(model, split.test.target.samples, split.test.target.labels, tau_star, "fixed")))
        for auto, reps in ((True, reps_on), (False, reps_off)):
            hs = [r.h_score for _, r in reps]
            rows.append({
                "auto_threshold": auto,
                "joint_decision": joint,
                "fourier": fourier,
                "tau": float(np.mean([t for t, _ in reps])),
                "h_score": float(np.mean(hs)),
                "h_std": float(np.std(hs)),
                "a_common": _mean_opt([r.a_common for _, r in reps]),
                "a_unknown": _mean_opt([r.a_unknown for _, r in reps]),
                "label": "full method" if (auto and joint and fourier) else ("all off" if not (auto or joint or fourier) else ""),
            })
    rows.sort(key=lambda r: (not r["auto_threshold"], not r["joint_decision"], not r["fourier"]))
    return rows, _to_csv(rows, ABLATION_FIELDS), ablation_markdown(rows)


def ablation_markdown(rows: list[dict]) -> str:
    mark = lambda b: "x" if b else ""
    lines = [
        "| Auto-thresh. | Joint decision | Fourier | tau | H-score | A_C | A_U | |",
        "|:-:|:-:|:-:|--:|--:|--:|--:|:--|",
    ]
    for r in rows:
        lines.append(
            f"| {mark(r['auto_threshold'])} | {mark(r['joint_decision'])} | {mark(r['fourier'])} | {r['tau']:.3f} | "
            f"{100 * r['h_score']:.1f} ± {100 * r['h_std']:.1f} | {_pct(r['a_common'])} | {_pct(r['a_unknown'])} | {r['label']} |"
        )
    return "\n".join(lines) + "\n"


def _pct(v):
    return "n/a" if v is None else f"{100 * v:.1f}"


def _mean_opt(vals):
    vals = [v for v in vals if v is not None]
    return float(np.mean(vals)) if vals else None


def _to_csv(rows: list[dict], fieldnames) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# argument handling

def _parse_grid(text: str) -> list[float]:
    try:
        grid = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as e:
        raise ConfigError(f"--tau-grid: {e}") from e
    if not grid:
        raise ConfigError("--tau-grid is empty")
    return grid


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unijdot", description="Universal domain adaptation for time series with joint decisions and unbalanced OT.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--config", type=Path, help="JSON experiment config")
        sp.add_argument("--seed", type=int, help="run a single seed instead of the config's list")
        sp.add_argument("--out", type=Path, required=out_required, help="output root")

    common(sub.add_parser("train", help="pretrain + adapt, write run directories"))
    ev = sub.add_parser("evaluate", help="evaluate a run directory")
    ev.add_argument("run_dir", type=Path)
    ev.add_argument("--mode", choices=[m.value for m in Mode], default="valbatch")
    common(sub.add_parser("synth", help="write a synthetic source/target dataset pair"), out_required=True)
    sw = sub.add_parser("sweep-threshold", help="H-score as a function of a fixed threshold")
    common(sw)
    sw.add_argument("--tau-grid", type=_parse_grid)
    sw.add_argument("--mode", choices=[m.value for m in Mode])
    ab = sub.add_parser("ablate", help="2^3 ablation table")
    common(ab)
    ab.add_argument("--mode", choices=[m.value for m in Mode])
    return p


def _experiment(args) -> ExperimentConfig:
    cfg = load_experiment(args.config) if args.config else experiment_from_dict({})
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seeds=[args.seed])
    if getattr(args, "out", None) is not None:
        cfg = replace(cfg, out=str(args.out))
    if getattr(args, "mode", None):
        cfg = replace(cfg, mode=args.mode)
    if getattr(args, "tau_grid", None):
        cfg = replace(cfg, tau_grid=args.tau_grid)
    return cfg


def _output_dir(cfg: ExperimentConfig, kind: str) -> Path:
    d = Path(cfg.out) / cfg.digest() / kind
    d.mkdir(parents=True, exist_ok=True)
    return d


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.command == "evaluate":
            rep = cmd_evaluate(args.run_dir, args.mode)
            print(rep.to_csv(), end="")
            return EXIT_OK
        cfg = _experiment(args)
        if args.command == "train":
            for d in cmd_train(cfg):
                print(d)
        elif args.command == "synth":
            for d in cmd_synth(cfg, args.out):
                print(d)
        elif args.command == "sweep-threshold":
            rows, text = cmd_sweep_threshold(cfg)
            out = _output_dir(cfg, "sweep")
            (out / "sweep.csv").write_text(text)
            print(text, end="")
            for name in dict.fromkeys(r["scenario"] for r in rows):
                log.info("%s: best fixed tau %.3f", name, best_tau(rows, name))
        elif args.command == "ablate":
            rows, text, md = cmd_ablate(cfg)
            out = _output_dir(cfg, "ablation")
            (out / "ablation.csv").write_text(text)
            (out / "ablation.md").write_text(md)
            print(md, end="")
    except ConfigError as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except (DatasetError, CheckpointError) as e:
        log.error("data error: %s", e)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001 - last-resort exit code
        log.exception("runtime failure: %s", e)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
