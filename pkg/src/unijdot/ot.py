"""Entropic optimal transport solvers (balanced and unbalanced) and a small exact LP oracle."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np



@dataclass
class OTConfig:
    epsilon: float = 0.01
    max_iters: int = 1000
    tol: float = 1e-6
    tau1: float = 1.0
    tau2: float = 1.0
    check_every: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise ValueError("tau1 and tau2 must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class TransportPlan:
    gamma: np.ndarray
    cost_value: float
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    iterations_used: int
    converged: bool
    meta: dict = field(default_factory=dict)

    @property
    def mass(self) -> float:
        return float(self.gamma.sum())


def _plan(gamma: np.ndarray, C: np.ndarray, iters: int, converged: bool, **meta) -> TransportPlan:
    return TransportPlan(
        gamma=gamma,
        cost_value=float(np.sum(gamma * C)),
        row_marginal=gamma.sum(axis=1),
        col_marginal=gamma.sum(axis=0),
        iterations_used=iters,
        converged=converged,
        meta=meta,
    )


def _validate(a, b, C) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    C = np.asarray(C, dtype=np.float64)
    if C.shape != (a.size, b.size):
        raise ValueError(f"cost shape {C.shape} does not match masses ({a.size}, {b.size})")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix has non-finite entries")
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("masses must be strictly positive")
    return a, b, C


ABSORB_AT = 30.0  # |log u|, |log v| beyond this move into the potentials


class _Scaling:
    """Stabilized scaling-domain state for entropic OT.

    Potentials ``f = f0 + eps*log(u)`` and ``g = g0 + eps*log(v)``; the kernel
    ``K = exp((f0 + g0 - C)/eps)`` is rebuilt whenever a scaling gets large,
    so iterations are plain matrix-vector products without overflow.
    """

    def __init__(self, C: np.ndarray, eps: float):
        self.C, self.eps = C, eps
        self.f0 = C.min(axis=1)
        self.g0 = (C - self.f0[:, None]).min(axis=0)  # every row and column of K keeps an entry 1
        self.u = np.ones(C.shape[0])
        self.v = np.ones(C.shape[1])
        self._rebuild()

    def _rebuild(self):
        self.K = np.exp((self.f0[:, None] + self.g0[None, :] - self.C) / self.eps)

    def set_log_u(self, log_u: np.ndarray):
        if np.abs(log_u).max() > ABSORB_AT:
            self.f0 = self.f0 + self.eps * log_u
            self.u = np.ones_like(log_u)
            self._rebuild()
        else:
            self.u = np.exp(log_u)

    def set_log_v(self, log_v: np.ndarray):
        if np.abs(log_v).max() > ABSORB_AT:
            self.g0 = self.g0 + self.eps * log_v
            self.v = np.ones_like(log_v)
            self._rebuild()
        else:
            self.v = np.exp(log_v)

    @property
    def f(self) -> np.ndarray:
        return self.f0 + self.eps * np.log(self.u)

    @property
    def g(self) -> np.ndarray:
        return self.g0 + self.eps * np.log(self.v)

    def gamma(self) -> np.ndarray:
        return np.exp((self.f[:, None] + self.g[None, :] - self.C) / self.eps)


def sinkhorn(a, b, C, cfg: OTConfig | None = None) -> TransportPlan:
    """Entropic OT with plan ``exp((f_i + g_j - C_ij)/eps)``.

    Stops when the L1 row-marginal violation drops to ``cfg.tol`` (columns are
    exact right after each g-update). Non-convergence is reported through
    ``converged=False`` rather than raised.
    """
    cfg = cfg or OTConfig()
    a, b, C = _validate(a, b, C)
    if abs(a.sum() - b.sum()) > 1e-6:
        raise ValueError(f"mass mismatch: sum(a)={a.sum()} vs sum(b)={b.sum()}")
    log_a, log_b = np.log(a), np.log(b)
    st = _Scaling(C, cfg.epsilon)
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        st.set_log_u(log_a - np.log(st.K @ st.v))
        st.set_log_v(log_b - np.log(st.K.T @ st.u))
        if it % cfg.check_every == 0 or it == cfg.max_iters:
            row = st.u * (st.K @ st.v)
            if np.abs(row - a).sum() <= cfg.tol:
                converged = True
                break
    gamma = st.gamma()
    return _plan(gamma, C, it, converged, f=st.f, g=st.g)


def _kl(x: np.ndarray, y: np.ndarray) -> float:
    """Generalized KL divergence between non-negative vectors."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(x > 0, x * np.log(x / y), 0.0)
    return float(np.sum(t - x + y))


def uot_objective(gamma, a, b, C, cfg: OTConfig) -> float:
    """Entropic UOT objective ``<C,γ> + ε Σγ(logγ-1) + τ1 KL(γ1|a) + τ2 KL(γᵀ1|b)``."""
    gamma = np.asarray(gamma, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(gamma > 0, gamma * (np.log(gamma) - 1.0), 0.0).sum()
    return float(
        np.sum(gamma * C)
        + cfg.epsilon * ent
        + cfg.tau1 * _kl(gamma.sum(axis=1), np.asarray(a, float))
        + cfg.tau2 * _kl(gamma.sum(axis=0), np.asarray(b, float))
    )


def sinkhorn_unbalanced(a, b, C, cfg: OTConfig | None = None) -> TransportPlan:
    """Scaling iterations for KL-relaxed (unbalanced) entropic OT.

    Each dual update is damped by ``tau/(tau+eps)``. Convergence is declared
    when the L1 change of both potentials over one iteration falls below
    ``cfg.tol``. ``meta`` carries the weighted KL marginal penalties.
    """
    cfg = cfg or OTConfig()
    a, b, C = _validate(a, b, C)
    eps = cfg.epsilon
    fi1 = cfg.tau1 / (cfg.tau1 + eps)
    fi2 = cfg.tau2 / (cfg.tau2 + eps)
    log_a, log_b = np.log(a), np.log(b)
    st = _Scaling(C, eps)
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        check = it % cfg.check_every == 0 or it == cfg.max_iters
        if check:
            f_old, g_old = st.f, st.g
        # damped update written relative to the absorbed potentials
        st.set_log_u(fi1 * (log_a - np.log(st.K @ st.v)) + (fi1 - 1.0) * st.f0 / eps)
        st.set_log_v(fi2 * (log_b - np.log(st.K.T @ st.u)) + (fi2 - 1.0) * st.g0 / eps)
        if check and np.abs(st.f - f_old).sum() + np.abs(st.g - g_old).sum() < cfg.tol:
            converged = True
            break
    gamma = st.gamma()
    return _plan(
        gamma,
        C,
        it,
        converged,
        f=st.f,
        g=st.g,
        kl_row=cfg.tau1 * _kl(gamma.sum(axis=1), a),
        kl_col=cfg.tau2 * _kl(gamma.sum(axis=0), b),
    )


MAX_EXACT_CELLS = 36
_TOL = 1e-12


def _northwest_corner(a: np.ndarray, b: np.ndarray):
    n, m = a.size, b.size
    x = np.zeros((n, m))
    basis = []
    s, d = a.copy(), b.copy()
    i = j = 0
    while i < n and j < m:
        q = min(s[i], d[j])
        x[i, j] = q
        basis.append((i, j))
        s[i] -= q
        d[j] -= q
        if i == n - 1 and j == m - 1:
            break
        row_done = s[i] <= _TOL
        col_done = d[j] <= _TOL
        if row_done and (not col_done or i < n - 1):
            i += 1
        else:
            j += 1
    return x, basis


def _potentials(C: np.ndarray, basis: list[tuple[int, int]]):
    n, m = C.shape
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    u[0] = 0.0
    pending = list(basis)
    while pending:
        rest = []
        for i, j in pending:
            if not np.isnan(u[i]):
                v[j] = C[i, j] - u[i]
            elif not np.isnan(v[j]):
                u[i] = C[i, j] - v[j]
            else:
                rest.append((i, j))
                continue
        if len(rest) == len(pending):
            raise RuntimeError("basis is not a spanning tree")
        pending = rest
    return u, v


def _cycle(basis: list[tuple[int, int]], enter: tuple[int, int]) -> list[tuple[int, int]]:
    """Alternating cycle through ``enter`` and basic cells (tree path row->col)."""
    adj: dict[tuple[str, int], list[tuple[str, int]]] = {}
    for i, j in basis:
        adj.setdefault(("r", i), []).append(("c", j))
        adj.setdefault(("c", j), []).append(("r", i))
    start, goal = ("c", enter[1]), ("r", enter[0])
    prev = {start: None}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for nb in adj.get(node, []):
            if nb not in prev:
                prev[nb] = node
                stack.append(nb)
    path = []
    node = goal
    while node is not None:
        path.append(node)
        node = prev[node]
    # path runs row(enter) -> ... -> col(enter); consecutive nodes are cells
    cells = [enter]
    for u_, w_ in zip(path[:-1], path[1:]):
        i = u_[1] if u_[0] == "r" else w_[1]
        j = u_[1] if u_[0] == "c" else w_[1]
        cells.append((i, j))
    return cells


def exact_ot_small(a, b, C, max_pivots: int = 10_000) -> TransportPlan:
    """Exact balanced OT by the transportation simplex (MODI) method.

    Intended as a test oracle; limited to ``n*m <= 36``.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    C = np.asarray(C, dtype=np.float64)
    if a.size * b.size > MAX_EXACT_CELLS:
        raise ValueError(f"instance too large for the exact solver ({a.size}x{b.size})")
    if C.shape != (a.size, b.size):
        raise ValueError("cost shape does not match masses")
    if abs(a.sum() - b.sum()) > 1e-9:
        raise ValueError("mass mismatch")
    x, basis = _northwest_corner(a, b)
    pivots = 0
    while True:
        u, v = _potentials(C, basis)
        reduced = C - u[:, None] - v[None, :]
        for i, j in basis:
            reduced[i, j] = 0.0
        enter = np.unravel_index(np.argmin(reduced), reduced.shape)
        if reduced[enter] >= -1e-12 or pivots >= max_pivots:
            break
        enter = (int(enter[0]), int(enter[1]))
        cells = _cycle(basis, enter)
        minus = cells[1::2]
        theta = min(x[c] for c in minus)
        leave = next(c for c in minus if x[c] <= theta + _TOL)
        for k, c in enumerate(cells):
            x[c] += theta if k % 2 == 0 else -theta
        x[leave] = 0.0
        basis.remove(leave)
        basis.append(enter)
        pivots += 1
    x = np.maximum(x, 0.0)
    return _plan(x, C, pivots, reduced[enter] >= -1e-12)
