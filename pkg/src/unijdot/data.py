"""Time-series datasets: on-disk container, UniDA scenarios, a synthetic
frequency-coded generator and seeded batch iteration.

Dataset directory layout::

    meta.json    {"version": 1, "n", "channels", "t", "classes", "dtype": "f32le", "split"}
    samples.bin  n*channels*t little-endian float32, (sample, channel, time) order
    labels.bin   n little-endian int32
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
UNKNOWN = -1


class DatasetError(Exception):
    code = "dataset"


class MetadataError(DatasetError):
    code = "bad-metadata"


class VersionError(DatasetError):
    code = "unknown-version"


class SizeMismatchError(DatasetError):
    code = "size-mismatch"


class LabelRangeError(DatasetError):
    code = "label-range"


@dataclass
class TimeSeriesDataset:
    samples: np.ndarray  # (N, C, T) float32
    labels: np.ndarray  # (N,) int32
    class_names: list[str]
    split: str = "train"

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int32)
        if self.samples.ndim != 3:
            raise ValueError(f"samples must be (N, C, T), got {self.samples.shape}")
        if self.labels.shape != (self.samples.shape[0],):
            raise ValueError("one label per sample required")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    @property
    def length(self) -> int:
        return self.samples.shape[2]

    def subset(self, idx) -> "TimeSeriesDataset":
        return TimeSeriesDataset(self.samples[idx], self.labels[idx], list(self.class_names), self.split)


def save_dataset(ds: TimeSeriesDataset, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": FORMAT_VERSION,
        "n": len(ds),
        "channels": ds.channels,
        "t": ds.length,
        "classes": list(ds.class_names),
        "dtype": "f32le",
        "split": ds.split,
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=2))
    (path / "samples.bin").write_bytes(ds.samples.astype("<f4", copy=False).tobytes())
    (path / "labels.bin").write_bytes(ds.labels.astype("<i4", copy=False).tobytes())
    return path


def _read_exact(path: Path, expected: int) -> bytes:
    if not path.exists():
        raise SizeMismatchError(f"{path.name} is missing (expected {expected} bytes)")
    raw = path.read_bytes()
    if len(raw) != expected:
        raise SizeMismatchError(f"{path.name}: expected {expected} bytes, found {len(raw)}")
    return raw


def load_dataset(path) -> TimeSeriesDataset:
    path = Path(path)
    try:
        meta = json.loads((path / "meta.json").read_text())
    except FileNotFoundError as e:
        raise MetadataError(f"{path}: meta.json not found") from e
    except json.JSONDecodeError as e:
        raise MetadataError(f"{path}/meta.json: {e}") from e
    if meta.get("version") != FORMAT_VERSION:
        raise VersionError(f"unsupported dataset version {meta.get('version')!r}")
    for key, kind in (("n", int), ("channels", int), ("t", int), ("classes", list), ("split", str)):
        if not isinstance(meta.get(key), kind):
            raise MetadataError(f"meta.json field {key!r} missing or not {kind.__name__}")
    if meta.get("dtype") != "f32le":
        raise MetadataError(f"unsupported dtype {meta.get('dtype')!r}")
    if meta["split"] not in ("train", "test"):
        raise MetadataError(f"split must be 'train' or 'test', got {meta['split']!r}")
    n, c, t = meta["n"], meta["channels"], meta["t"]
    samples = np.frombuffer(_read_exact(path / "samples.bin", 4 * n * c * t), dtype="<f4").reshape(n, c, t)
    labels = np.frombuffer(_read_exact(path / "labels.bin", 4 * n), dtype="<i4")
    k = len(meta["classes"])
    if n and (labels.min() < 0 or labels.max() >= k):
        raise LabelRangeError(f"labels span [{labels.min()}, {labels.max()}] but metadata lists {k} classes")
    return TimeSeriesDataset(samples.astype(np.float32), labels.astype(np.int32), list(meta["classes"]), meta["split"])


class UnlabeledView:
    """Target samples exposed to training code. Deliberately carries no labels."""

    __slots__ = ("_samples",)

    def __init__(self, samples: np.ndarray):
        self._samples = samples

    @property
    def samples(self) -> np.ndarray:
        return self._samples

    def __len__(self) -> int:
        return self._samples.shape[0]


@dataclass
class Scenario:
    source: TimeSeriesDataset  # labels remapped to [0, K)
    target: TimeSeriesDataset  # labels remapped; target-private samples carry UNKNOWN
    common_labels: frozenset
    source_private: frozenset
    target_private: frozenset
    label_map: dict  # original class id -> contiguous source index
    name: str = "scenario"
    extra: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.label_map)

    def target_unlabeled(self) -> UnlabeledView:
        return UnlabeledView(self.target.samples)


def build_unida_scenario(source: TimeSeriesDataset, target: TimeSeriesDataset, source_private: int | None, target_private: int | None, name: str = "scenario") -> Scenario:
    """Make a UniDA task: one class only in the source, another only in the target.

    ``None`` for either side keeps every class on that side common.
    """
    if source_private is not None and source_private == target_private:
        raise ValueError("source-private and target-private classes must differ")
    privates = [c for c in (source_private, target_private) if c is not None]
    for ds, role in ((source, "source"), (target, "target")):
        present = set(np.unique(ds.labels).tolist())
        for c in privates:
            if c not in present:
                raise ValueError(f"class {c} is absent from the {role} dataset")
    src = source if target_private is None else source.subset(source.labels != target_private)
    tgt = target if source_private is None else target.subset(target.labels != source_private)
    src_classes = sorted(set(np.unique(src.labels).tolist()))
    tgt_classes = set(np.unique(tgt.labels).tolist())
    common = frozenset(src_classes) & frozenset(tgt_classes)
    s_priv = frozenset(src_classes) - common
    t_priv = frozenset(tgt_classes) - common
    assert common | s_priv == set(src_classes) and common | t_priv == tgt_classes
    assert not (s_priv & common) and not (t_priv & common)
    label_map = {c: i for i, c in enumerate(src_classes)}
    names = [source.class_names[c] for c in src_classes]
    src_labels = np.array([label_map[c] for c in src.labels], dtype=np.int32)
    tgt_labels = np.array([label_map.get(c, UNKNOWN) if c in common else UNKNOWN for c in tgt.labels], dtype=np.int32)
    return Scenario(
        source=TimeSeriesDataset(src.samples, src_labels, names, source.split),
        target=TimeSeriesDataset(tgt.samples, tgt_labels, names, target.split),
        common_labels=common,
        source_private=s_priv,
        target_private=t_priv,
        label_map=label_map,
        name=name,
    )


def train_test_split(ds: TimeSeriesDataset, train_fraction: float = 0.7, seed: int = 0):
    """Stratified split, ``train_fraction`` of each class to train."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in np.unique(ds.labels):
        idx = rng.permutation(np.flatnonzero(ds.labels == c))
        cut = int(round(train_fraction * idx.size))
        train_idx.append(idx[:cut])
        test_idx.append(idx[cut:])
    tr = np.sort(np.concatenate(train_idx))
    te = np.sort(np.concatenate(test_idx))
    train = ds.subset(tr)
    test = ds.subset(te)
    train.split, test.split = "train", "test"
    return train, test


@dataclass
class SynthConfig:
    n_classes: int = 6
    channels: int = 3
    length: int = 128
    samples_per_class: int = 100
    freqs_per_class: int = 2
    max_freq: int = 7
    source_noise: float = 0.1
    target_noise: float = 0.15
    amp_scale: tuple[float, float] = (0.8, 1.25)  # per-channel target gain range
    phase_noise: float = 0.2  # per-sample phase noise (radians, std), both domains
    phase_jitter: float = 0.5  # systematic target phase offset bound (radians)
    freq_shift: float = 0.0  # relative frequency drift in the target
    shift: float = 1.0  # multiplies every domain-shift parameter above
    seed: int = 0


def _class_bank(cfg: SynthConfig, rng: np.random.Generator):
    """Per class: distinct frequency sets, per-channel amplitudes and phases."""
    freqs = []
    seen = set()
    pool = np.arange(1, cfg.max_freq + 1)
    while len(freqs) < cfg.n_classes:
        f = tuple(sorted(rng.choice(pool, size=cfg.freqs_per_class, replace=False).tolist()))
        if f not in seen:
            seen.add(f)
            freqs.append(f)
    amps = rng.uniform(0.5, 1.5, size=(cfg.n_classes, cfg.freqs_per_class, cfg.channels))
    phases = rng.uniform(0, 2 * np.pi, size=(cfg.n_classes, cfg.freqs_per_class, cfg.channels))
    return np.array(freqs, dtype=np.float64), amps, phases


def _render(cfg: SynthConfig, bank, rng, noise: float, gain, phase_off, freq_mult) -> TimeSeriesDataset:
    freqs, amps, phases = bank
    t = np.arange(cfg.length) / cfg.length
    n = cfg.n_classes * cfg.samples_per_class
    x = np.empty((n, cfg.channels, cfg.length), dtype=np.float64)
    labels = np.repeat(np.arange(cfg.n_classes), cfg.samples_per_class)
    for i, c in enumerate(labels):
        jit = cfg.phase_noise * rng.standard_normal((cfg.freqs_per_class, 1, 1))
        amp_j = rng.uniform(0.85, 1.15, size=(cfg.freqs_per_class, 1))
        arg = (2 * np.pi * freqs[c][:, None, None] * freq_mult * t[None, None, :]
               + phases[c][:, :, None] + phase_off[c][:, :, None] + jit)
        sig = (amps[c][:, :, None] * amp_j[:, :, None] * np.sin(arg)).sum(axis=0)
        x[i] = gain[:, None] * sig + noise * rng.standard_normal((cfg.channels, cfg.length))
    names = [f"class{c}" for c in range(cfg.n_classes)]
    return TimeSeriesDataset(x.astype(np.float32), labels, names)


def synth_generate(cfg: SynthConfig | None = None) -> tuple[TimeSeriesDataset, TimeSeriesDataset]:
    """Generate a (source, target) pair of frequency-coded multichannel signals.

    Classes share the generative bank across domains; the target applies
    per-channel gains, phase jitter, frequency drift and stronger noise, each
    scaled by ``cfg.shift`` (``shift=0`` gives identically distributed domains).
    """
    cfg = cfg or SynthConfig()
    root = np.random.SeedSequence(cfg.seed)
    bank_seed, dom_seed, src_seed, tgt_seed = root.spawn(4)
    bank = _class_bank(cfg, np.random.default_rng(bank_seed))
    dom = np.random.default_rng(dom_seed)
    s = cfg.shift
    lo, hi = cfg.amp_scale
    gain = np.exp(dom.uniform(s * np.log(lo), s * np.log(hi), size=cfg.channels))
    phase_off = s * cfg.phase_jitter * dom.uniform(-1, 1, size=(cfg.n_classes, cfg.freqs_per_class, cfg.channels))
    freq_mult = 1.0 + s * cfg.freq_shift
    target_noise = cfg.source_noise + s * (cfg.target_noise - cfg.source_noise)
    ones = np.ones(cfg.channels)
    zeros = np.zeros_like(phase_off)
    source = _render(cfg, bank, np.random.default_rng(src_seed), cfg.source_noise, ones, zeros, 1.0)
    target = _render(cfg, bank, np.random.default_rng(tgt_seed), target_noise, gain, phase_off, freq_mult)
    return source, target


def batch_iter(n: int, batch_size: int, seed: int = 0, epoch: int = 0, train: bool = True):
    """Index batches. Training: seeded shuffle per epoch, partial tail dropped.
    Evaluation: sequential order, tail kept.
    """
    if train:
        if batch_size < 2:
            raise ValueError("training batches need at least 2 samples")
        order = np.random.default_rng([seed, epoch]).permutation(n)
        for start in range(0, n - batch_size + 1, batch_size):
            yield order[start : start + batch_size]
    else:
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        for start in range(0, n, batch_size):
            yield np.arange(start, min(n, start + batch_size))
