"""Training and experiment configuration."""
from __future__ import annotations

import hashlib
import json
import types
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import jsonschema

from .model import ArchConfig
from .ot import OTConfig
from .thresholding import Method


@dataclass
class TrainConfig:
    lam: float = 0.6  # weight of source cross-entropy vs alignment
    mu: float = 1.0  # feature-distance weight inside the transport cost
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_source: int = 32
    batch_target: int = 32
    pretrain_epochs: int = 20
    epochs: int = 20
    seed: int = 0
    memory_capacity: int = 128
    n_anchors: int = 3
    anchor_momentum: float = 0.1
    threshold_method: str = "yen"
    bin_count: int | None = None  # None: twice the batch size
    auto_threshold: bool = True
    fixed_tau: float | None = None
    joint_decision: bool = True
    label_term: str = "logits"  # or "onehot"
    softmax_unknown: bool = False
    xi_policy: str | float = "double"
    valbatch_size: int = 256
    normalize_cost: bool = True  # solve the plan on C / max(C)
    scale_align_loss: bool = True  # also divide the alignment loss by max(C)

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise ValueError(f"lam must lie in (0, 1], got {self.lam}")
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if self.batch_source < 2 or self.batch_target < 2:
            raise ValueError("batch sizes must be >= 2")
        Method(self.threshold_method)
        if self.label_term not in ("logits", "onehot"):
            raise ValueError("label_term must be 'logits' or 'onehot'")
        if not self.auto_threshold and self.fixed_tau is None:
            raise ValueError("fixed_tau is required when auto_threshold is off")
        if self.n_anchors < 1:
            raise ValueError("n_anchors must be >= 1")


# ---------------------------------------------------------------------------
# Experiment configuration (JSON file + CLI overrides)

class ConfigError(ValueError):
    """Invalid experiment configuration; ``line`` points into the JSON file when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = f"{source or 'config'}:{line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line


_ABLATION_KEYS = ("auto_threshold", "fixed_tau", "joint_decision", "fourier")


@dataclass
class ExperimentConfig:
    scenario: dict = field(default_factory=lambda: {"synth": {}})
    train: TrainConfig = field(default_factory=TrainConfig)
    ot: OTConfig = field(default_factory=OTConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)
    seeds: list = field(default_factory=lambda: [0])
    out: str = "runs"
    mode: str = "valbatch"
    tau_grid: list | None = None
    sweep_scenarios: list | None = None  # extra scenario specs for sweep-threshold
    sweep_retrain: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["arch"]["conv_channels"] = list(self.arch.conv_channels)
        d["arch"]["kernel_sizes"] = list(self.arch.kernel_sizes)
        return d

    def digest(self) -> str:
        """Content hash of everything that influences results (the output root excluded)."""
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _schema_for(annotation) -> dict:
    origin = typing.get_origin(annotation)
    if origin in (typing.Union, types.UnionType):
        return {"anyOf": [_schema_for(a) for a in typing.get_args(annotation)]}
    if origin is tuple:
        args = [a for a in typing.get_args(annotation) if a is not Ellipsis]
        return {"type": "array", "items": _schema_for(args[0])}
    if origin is list or annotation is list:
        return {"type": "array"}
    return {
        int: {"type": "integer"},
        float: {"type": "number"},
        bool: {"type": "boolean"},
        str: {"type": "string"},
        dict: {"type": "object"},
        type(None): {"type": "null"},
    }[annotation]


def dataclass_schema(cls) -> dict:
    hints = typing.get_type_hints(cls)
    props = {f.name: _schema_for(hints[f.name]) for f in fields(cls)}
    return {"type": "object", "properties": props, "additionalProperties": False}


def _scenario_schema() -> dict:
    from .data import SynthConfig

    return {
        "type": "object",
        "properties": {
            "name": {"type": "string"},
            "synth": dataclass_schema(SynthConfig),
            "source": {"type": "string"},
            "target": {"type": "string"},
            "source_private": {"type": ["integer", "null"], "minimum": 0},
            "target_private": {"type": ["integer", "null"], "minimum": 0},
            "train_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        },
        "additionalProperties": False,
        "oneOf": [{"required": ["synth"]}, {"required": ["source", "target"]}],
    }


def experiment_schema() -> dict:
    return {
        "type": "object",
        "properties": {
            "scenario": _scenario_schema(),
            "train": dataclass_schema(TrainConfig),
            "ot": dataclass_schema(OTConfig),
            "arch": dataclass_schema(ArchConfig),
            "ablation": {
                "type": "object",
                "properties": {
                    "auto_threshold": {"type": "boolean"},
                    "fixed_tau": {"type": ["number", "null"]},
                    "joint_decision": {"type": "boolean"},
                    "fourier": {"type": "boolean"},
                },
                "additionalProperties": False,
            },
            "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
            "out": {"type": "string"},
            "mode": {"enum": ["last", "valbatch"]},
            "tau_grid": {"type": ["array", "null"], "items": {"type": "number"}, "minItems": 1},
            "sweep_scenarios": {"type": ["array", "null"], "items": _scenario_schema()},
            "sweep_retrain": {"type": "boolean"},
        },
        "additionalProperties": False,
    }


def _line_of(text: str, path) -> int | None:
    """Best-effort line number of a JSON path: walk successive key occurrences."""
    pos, found = 0, False
    for key in path:
        if isinstance(key, str):
            i = text.find(f'"{key}"', pos)
            if i < 0:
                break
            pos, found = i, True
    return text.count("\n", 0, pos) + 1 if found else None


def experiment_from_dict(raw: dict, text: str | None = None, source: str | None = None) -> ExperimentConfig:
    validator = jsonschema.Draft202012Validator(experiment_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        line = _line_of(text, list(e.absolute_path)) if text else None
        raise ConfigError(f"{path}: {e.message}", line, source)
    raw = json.loads(json.dumps(raw))  # private copy
    train = dict(raw.get("train", {}))
    arch = dict(raw.get("arch", {}))
    abl = raw.get("ablation", {})
    for k in ("auto_threshold", "fixed_tau", "joint_decision"):
        if k in abl:
            train[k] = abl[k]
    if "fourier" in abl:
        arch["fourier"] = abl["fourier"]
    try:
        cfg = ExperimentConfig(
            scenario=raw.get("scenario", {"synth": {}}),
            train=TrainConfig(**train),
            ot=OTConfig(**raw.get("ot", {})),
            arch=ArchConfig(**arch),
            seeds=list(raw.get("seeds", [0])),
            out=raw.get("out", "runs"),
            mode=raw.get("mode", "valbatch"),
            tau_grid=raw.get("tau_grid"),
            sweep_scenarios=raw.get("sweep_scenarios"),
            sweep_retrain=raw.get("sweep_retrain", False),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), None, source) from e
    if cfg.tau_grid is not None and not cfg.tau_grid:
        raise ConfigError("tau_grid must not be empty", _line_of(text or "", ["tau_grid"]), source)
    return cfg


def load_experiment(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e.strerror}") from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(e.msg, e.lineno, str(path)) from e
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", 1, str(path))
    return experiment_from_dict(raw, text, str(path))
