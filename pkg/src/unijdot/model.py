"""The network h = f(g(x)): a 1D CNN feature extractor, optionally fused with the
Fourier layer, followed by a linear classifier. Pure numpy with explicit backward.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .fourier import SpectralWeights, fourier_layer_backward, fourier_layer_forward
from .numerics import log_softmax, softmax

_NORM_EPS = 1e-12


@dataclass
class ArchConfig:
    conv_channels: tuple[int, ...] = (32, 64, 64)
    kernel_sizes: tuple[int, ...] = (7, 5, 3)
    fourier: bool = True
    fourier_modes: int = 8
    fourier_out_channels: int = 1
    smoothing: bool = True
    fourier_scale: str = "forward"  # "forward": branch sees x / T; "none": raw x
    normalize_features: bool = True  # project g(x) onto a sphere of radius feature_radius
    feature_radius: float = 4.0

    def __post_init__(self):
        self.conv_channels = tuple(self.conv_channels)
        self.kernel_sizes = tuple(self.kernel_sizes)
        if len(self.conv_channels) != len(self.kernel_sizes) or not self.conv_channels:
            raise ValueError("conv_channels and kernel_sizes must be non-empty and aligned")

    def feature_dim(self) -> int:
        d = self.conv_channels[-1]
        if self.fourier:
            d += 2 * self.fourier_out_channels * self.fourier_modes
        return d


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Stride-1 'same' convolution. x: (B, C, T), w: (O, C, k)."""
    B, C, T = x.shape
    O, _, k = w.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, k - 1 - p)))
    cols = sliding_window_view(xp, k, axis=2)  # (B, C, T, k)
    cols = cols.transpose(0, 2, 1, 3).reshape(B * T, C * k)
    out = cols @ w.reshape(O, C * k).T + b
    return out.reshape(B, T, O).transpose(0, 2, 1), cols


def conv1d_backward(dout: np.ndarray, cols: np.ndarray, w: np.ndarray, x_shape):
    B, C, T = x_shape
    O, _, k = w.shape
    p = k // 2
    dflat = dout.transpose(0, 2, 1).reshape(B * T, O)
    dw = (dflat.T @ cols).reshape(w.shape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ w.reshape(O, C * k)).reshape(B, T, C, k)
    dxp = np.zeros((B, C, T + k - 1), dtype=dout.dtype)
    for j in range(k):
        dxp[:, :, j : j + T] += dcols[:, :, :, j].transpose(0, 2, 1)
    return dxp[:, :, p : p + T], dw, db


@dataclass
class ForwardCache:
    x_shape: tuple
    conv: list = field(default_factory=list)  # (cols, pre-activation) per block
    fourier: object = None
    norm: object = None  # (unnormalized features, their norms)


class Network:
    """Parameters live in ``self.params`` (name -> array); gradients use the same keys."""

    def __init__(self, arch: ArchConfig, in_channels: int, n_classes: int, seed: int = 0, dtype=np.float32):
        self.arch = arch
        self.in_channels = in_channels
        self.n_classes = n_classes
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        params: dict[str, np.ndarray] = {}
        c_in = in_channels
        for i, (c_out, k) in enumerate(zip(arch.conv_channels, arch.kernel_sizes)):
            bound = np.sqrt(6.0 / (c_in * k))
            params[f"conv{i}.weight"] = rng.uniform(-bound, bound, (c_out, c_in, k))
            params[f"conv{i}.bias"] = np.zeros(c_out)
            c_in = c_out
        if arch.fourier:
            sw = SpectralWeights.init(in_channels, arch.fourier_out_channels, arch.fourier_modes, rng, dtype=np.float64)
            params["fourier.real"] = sw.real
            params["fourier.imag"] = sw.imag
        D = arch.feature_dim()
        bound = 1.0 / np.sqrt(D)
        params["fc.weight"] = rng.uniform(-bound, bound, (n_classes, D))
        params["fc.bias"] = np.zeros(n_classes)
        self.params = {k: v.astype(self.dtype) for k, v in params.items()}

    @property
    def feature_dim(self) -> int:
        return self.arch.feature_dim()

    def astype(self, dtype) -> "Network":
        other = Network.__new__(Network)
        other.arch, other.in_channels, other.n_classes = self.arch, self.in_channels, self.n_classes
        other.dtype = np.dtype(dtype)
        other.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return other

    def copy(self) -> "Network":
        return self.astype(self.dtype)

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    # feature extractor g
    def features(self, x) -> tuple[np.ndarray, ForwardCache]:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 3 or x.shape[1] != self.in_channels:
            raise ValueError(f"expected input (batch, {self.in_channels}, T), got {x.shape}")
        cache = ForwardCache(x_shape=x.shape)
        h = x
        for i in range(len(self.arch.conv_channels)):
            pre, cols = conv1d_forward(h, self.params[f"conv{i}.weight"], self.params[f"conv{i}.bias"])
            cache.conv.append((cols, pre, h.shape))
            h = np.maximum(pre, 0)
        feat = h.mean(axis=2)
        if self.arch.fourier:
            sw = SpectralWeights(self.params["fourier.real"], self.params["fourier.imag"])
            xf = x / x.shape[2] if self.arch.fourier_scale == "forward" else x
            out, fcache = fourier_layer_forward(xf, sw, smoothing=self.arch.smoothing)
            cache.fourier = fcache
            feat = np.concatenate([feat, out.features.astype(self.dtype)], axis=1)
        if self.arch.normalize_features:
            n = (np.sqrt((feat * feat).sum(axis=1, keepdims=True)) + _NORM_EPS) / self.arch.feature_radius
            cache.norm = (feat, n)
            feat = feat / n
        return feat, cache

    def features_backward(self, dfeat: np.ndarray, cache: ForwardCache, grads: dict | None = None) -> dict:
        grads = self.zero_grads() if grads is None else grads
        d_cnn = self.arch.conv_channels[-1]
        dfeat = np.asarray(dfeat, dtype=self.dtype)
        if cache.norm is not None:
            z, n = cache.norm
            u = z / (n * self.arch.feature_radius)
            dfeat = (dfeat - u * (u * dfeat).sum(axis=1, keepdims=True)) / n
        if self.arch.fourier:
            B = dfeat.shape[0]
            O, M = self.arch.fourier_out_channels, self.arch.fourier_modes
            dfour = dfeat[:, d_cnn:]
            g_amp = dfour[:, : O * M].reshape(B, O, M)
            g_phase = dfour[:, O * M :].reshape(B, O, M)
            _, gre, gim = fourier_layer_backward(g_amp, g_phase, cache.fourier)
            grads["fourier.real"] += gre.astype(self.dtype)
            grads["fourier.imag"] += gim.astype(self.dtype)
        T = cache.x_shape[2]
        dh = np.repeat(dfeat[:, :d_cnn, None] / T, T, axis=2)
        for i in reversed(range(len(self.arch.conv_channels))):
            cols, pre, in_shape = cache.conv[i]
            dpre = dh * (pre > 0)
            w = self.params[f"conv{i}.weight"]
            dh, dw, db = conv1d_backward(dpre, cols, w, in_shape)
            grads[f"conv{i}.weight"] += dw
            grads[f"conv{i}.bias"] += db
        return grads

    # classifier f
    def logits(self, feat: np.ndarray) -> np.ndarray:
        feat = np.asarray(feat)
        if feat.ndim != 2 or feat.shape[1] != self.feature_dim:
            raise ValueError(f"expected features (batch, {self.feature_dim}), got {feat.shape}")
        return feat @ self.params["fc.weight"].T + self.params["fc.bias"]

    def logits_backward(self, dlogits: np.ndarray, feat: np.ndarray, grads: dict) -> np.ndarray:
        grads["fc.weight"] += dlogits.T @ feat
        grads["fc.bias"] += dlogits.sum(axis=0)
        return dlogits @ self.params["fc.weight"]

    def forward(self, x):
        feat, cache = self.features(x)
        return feat, self.logits(feat), cache

    def backward(self, feat, cache, dlogits=None, dfeat=None, grads=None) -> dict:
        """Accumulate parameter gradients from upstream gradients on logits and/or features."""
        grads = self.zero_grads() if grads is None else grads
        total = np.zeros_like(feat) if dfeat is None else np.asarray(dfeat, dtype=self.dtype).copy()
        if dlogits is not None:
            total += self.logits_backward(np.asarray(dlogits, dtype=self.dtype), feat, grads)
        return self.features_backward(total, cache, grads)


def feature_forward(x, net: Network) -> np.ndarray:
    return net.features(x)[0]


def classifier_forward(features, net: Network) -> np.ndarray:
    return net.logits(features)


def cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient ``(softmax - onehot) / batch``."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    B, K = logits.shape
    if labels.shape != (B,):
        raise ValueError("labels must have one entry per row")
    if np.any(labels < 0) or np.any(labels >= K):
        raise ValueError(f"labels must lie in [0, {K})")
    rows = np.arange(B)
    loss = -float(log_softmax(logits)[rows, labels].mean())
    grad = softmax(logits)
    grad[rows, labels] -= 1.0
    return loss, grad / B


class SGD:
    """SGD with heavy-ball momentum: ``v <- m v + g; p <- p - lr v``."""

    def __init__(self, lr: float, momentum: float = 0.9, weight_decay: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> None:
        for name, p in params.items():
            g = grads[name]
            if self.weight_decay:
                g = g + self.weight_decay * p
            if self.momentum:
                v = self.velocity.get(name)
                v = g.copy() if v is None else self.momentum * v + g
                self.velocity[name] = v
                g = v
            p -= (self.lr * g).astype(p.dtype)


def optimizer_step(params: dict, grads: dict, lr: float, momentum: float = 0.0, state: SGD | None = None) -> dict:
    opt = state or SGD(lr, momentum)
    opt.step(params, grads)
    return params
