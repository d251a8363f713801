"""H-score evaluation and the two inference-threshold modes."""
from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import UNKNOWN
from .pseudo_label import pseudo_label_batch


class Mode(str, enum.Enum):
    LAST = "last"
    VALBATCH = "valbatch"


def h_score(a_common: float, a_unknown: float) -> float:
    """Harmonic mean of common-class and unknown-detection accuracy."""
    for v in (a_common, a_unknown):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"accuracy {v} outside [0, 1]")
    s = a_common + a_unknown
    return 0.0 if s == 0 else 2.0 * a_common * a_unknown / s


def predict_from_probs(probs: np.ndarray, tau: float) -> np.ndarray:
    """Argmax class, or UNKNOWN where the max probability is below ``tau``."""
    probs = np.atleast_2d(probs)
    pred = probs.argmax(axis=1).astype(np.int64)
    pred[probs.max(axis=1) < tau] = UNKNOWN
    return pred


def infer(model, sample, tau: float) -> int:
    """Predicted label for one sample (UNKNOWN = -1)."""
    x = np.asarray(sample)[None] if np.asarray(sample).ndim == 2 else np.asarray(sample)
    return int(predict_from_probs(model.decision_probs(x), tau)[0])


def inference_threshold(model, mode: Mode | str, validation_batch=None, last_train_tau: float | None = None, min_batch: int = 64) -> float:
    mode = Mode(mode)
    if getattr(model, "fixed_tau", None) is not None:
        return float(model.fixed_tau)
    if mode is Mode.LAST:
        if last_train_tau is None:
            raise ValueError("no training threshold was recorded")
        return float(last_train_tau)
    if validation_batch is None:
        raise ValueError("validation-batch mode needs a validation batch")
    x = np.asarray(validation_batch)
    if x.shape[0] < min_batch:
        raise ValueError(f"validation batch must hold >= {min_batch} samples, got {x.shape[0]}")
    feats, logits = model.embed(x)
    return pseudo_label_batch(logits, feats, model.memory, model.threshold_method, model.bin_count, joint=model.joint_decision).tau


@dataclass
class EvalReport:
    a_common: float | None
    a_unknown: float | None
    h_score: float
    tau_used: float
    mode: str
    per_class: dict = field(default_factory=dict)  # true label -> accuracy
    confusion: dict = field(default_factory=dict)  # "true,pred" -> count
    undefined: list = field(default_factory=list)
    n_samples: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    CSV_FIELDS = ("mode", "tau_used", "a_common", "a_unknown", "h_score", "n_samples")

    def csv_row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_FIELDS}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.CSV_FIELDS)
        w.writeheader()
        w.writerow(self.csv_row())
        return buf.getvalue()


def _opt_float(s: str):
    return None if s in ("", "None") else float(s)


def read_report_csv(text: str) -> list[dict]:
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append({
            "mode": r["mode"],
            "tau_used": float(r["tau_used"]),
            "a_common": _opt_float(r["a_common"]),
            "a_unknown": _opt_float(r["a_unknown"]),
            "h_score": float(r["h_score"]),
            "n_samples": int(r["n_samples"]),
        })
    return rows


def report_from_predictions(labels, preds, tau: float, mode: str = "valbatch") -> EvalReport:
    """Common accuracy counts Unknown-on-common as an error; unknown accuracy is
    the fraction of target-private samples predicted Unknown."""
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    is_common = labels != UNKNOWN
    undefined = []
    a_c = a_u = None
    if is_common.any():
        a_c = float(np.mean(preds[is_common] == labels[is_common]))
    else:
        undefined.append("a_common")
    if (~is_common).any():
        a_u = float(np.mean(preds[~is_common] == UNKNOWN))
    else:
        undefined.append("a_unknown")
    h = 0.0 if undefined else h_score(a_c, a_u)
    per_class = {}
    for c in np.unique(labels):
        m = labels == c
        per_class[int(c)] = float(np.mean(preds[m] == c))
    pairs, counts = np.unique(np.stack([labels, preds], axis=1), axis=0, return_counts=True)
    confusion = {f"{int(t)},{int(p)}": int(n) for (t, p), n in zip(pairs, counts)}
    return EvalReport(a_c, a_u, h, float(tau), str(mode), per_class, confusion, undefined, int(labels.size))


def evaluate(model, test_samples, test_labels, tau: float, mode: str = "valbatch") -> EvalReport:
    preds = predict_from_probs(model.decision_probs(test_samples), tau)
    return report_from_predictions(test_labels, preds, tau, mode)
