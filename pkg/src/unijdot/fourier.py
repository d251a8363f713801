"""Fourier feature layer: low-mode spectral mixing with a polar (amplitude, phase) readout.

Forward, per sample:
    X = rfft(x)[..., :M] * s              # s_k = cos(pi k / (2(M-1)))
    Z[o, k] = sum_c X[c, k] W[c, o, k]    # complex weights
    out = [|Z| flattened, angle(Z) flattened]

The backward pass is written out by hand; the adjoint of the truncated rfft is
applied with explicit cosine/sine bases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def rfft(x) -> np.ndarray:
    """Unnormalized real-input DFT along the last axis (length ``T//2 + 1``)."""
    x = np.asarray(x)
    if x.shape[-1] < 2:
        raise ValueError("rfft needs at least 2 samples")
    return np.fft.rfft(x, axis=-1)


def smoothing_window(M: int, dtype=np.float64) -> np.ndarray:
    """Quarter-cosine taper, exactly 1 at mode 0 and 0 at mode ``M-1``."""
    if M == 1:
        return np.ones(1, dtype=dtype)
    k = np.arange(M)
    s = np.cos(np.pi * k / (2 * (M - 1)))
    s[-1] = 0.0
    return s.astype(dtype)


@dataclass
class SpectralWeights:
    """Complex mixing weights stored as real/imag arrays of shape (C_in, C_out, M)."""

    real: np.ndarray
    imag: np.ndarray

    @property
    def modes(self) -> int:
        return self.real.shape[2]

    @property
    def in_channels(self) -> int:
        return self.real.shape[0]

    @property
    def out_channels(self) -> int:
        return self.real.shape[1]

    @classmethod
    def init(cls, in_channels: int, out_channels: int, modes: int, rng: np.random.Generator, dtype=np.float32):
        scale = 1.0 / (in_channels * out_channels)
        shape = (in_channels, out_channels, modes)
        return cls(
            real=(scale * rng.random(shape)).astype(dtype),
            imag=(scale * rng.random(shape)).astype(dtype),
        )


@dataclass
class FourierLayerOutput:
    amplitudes: np.ndarray  # (B, C_out, M)
    phases: np.ndarray  # (B, C_out, M), in (-pi, pi]

    @property
    def features(self) -> np.ndarray:
        B = self.amplitudes.shape[0]
        return np.concatenate([self.amplitudes.reshape(B, -1), self.phases.reshape(B, -1)], axis=1)


@dataclass
class FourierCache:
    T: int
    window: np.ndarray
    spec: np.ndarray  # windowed truncated spectrum, (B, C, M)
    z: np.ndarray  # mixed coefficients, (B, O, M)
    w: np.ndarray  # complex weights, (C, O, M)


def _complex_weights(w: SpectralWeights) -> np.ndarray:
    return w.real.astype(np.float64) + 1j * w.imag.astype(np.float64)


def fourier_layer_forward(x, w: SpectralWeights, smoothing: bool = True) -> tuple[FourierLayerOutput, FourierCache]:
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"expected (batch, channels, T), got {x.shape}")
    B, C, T = x.shape
    M = w.modes
    if C != w.in_channels:
        raise ValueError(f"input has {C} channels, weights expect {w.in_channels}")
    if M > T // 2 + 1:
        raise ValueError(f"{M} modes exceed T//2+1 = {T // 2 + 1}")
    window = smoothing_window(M) if smoothing else np.ones(M)
    spec = rfft(x.astype(np.float64))[..., :M] * window
    cw = _complex_weights(w)
    z = np.einsum("bck,cok->bok", spec, cw)
    amp = np.abs(z)
    phase = np.arctan2(z.imag, z.real)
    phase = np.where(amp == 0, 0.0, phase)
    phase = np.where(phase <= -np.pi, np.pi, phase)
    out = FourierLayerOutput(amplitudes=amp.astype(x.dtype), phases=phase.astype(x.dtype))
    return out, FourierCache(T=T, window=window, spec=spec, z=z, w=cw)


def _dft_bases(T: int, M: int) -> tuple[np.ndarray, np.ndarray]:
    ang = 2 * np.pi * np.outer(np.arange(M), np.arange(T)) / T
    return np.cos(ang), np.sin(ang)


def fourier_layer_backward(grad_amp, grad_phase, cache: FourierCache):
    """Gradients w.r.t. the input and the real/imag weights.

    ``grad_amp`` and ``grad_phase`` have shape (B, C_out, M). Coefficients
    with zero modulus get a zero subgradient.
    """
    z = cache.z
    r2 = np.abs(z) ** 2
    nz = r2 > 0
    r = np.sqrt(r2)
    safe_r = np.where(nz, r, 1.0)
    safe_r2 = np.where(nz, r2, 1.0)
    ga = np.asarray(grad_amp, dtype=np.float64)
    gp = np.asarray(grad_phase, dtype=np.float64)
    # dL/dRe z + i dL/dIm z
    g_re = np.where(nz, ga * z.real / safe_r - gp * z.imag / safe_r2, 0.0)
    g_im = np.where(nz, ga * z.imag / safe_r + gp * z.real / safe_r2, 0.0)
    gz = g_re + 1j * g_im
    gw = np.einsum("bck,bok->cok", np.conj(cache.spec), gz)
    gspec = np.einsum("cok,bok->bck", np.conj(cache.w), gz) * cache.window
    cos_b, sin_b = _dft_bases(cache.T, gspec.shape[-1])
    # Re X_k = sum_t x_t cos, Im X_k = -sum_t x_t sin
    gx = np.einsum("bck,kt->bct", gspec.real, cos_b) - np.einsum("bck,kt->bct", gspec.imag, sin_b)
    return gx, gw.real, gw.imag
