"""Joint feature/decision-space transport costs, the padded block cost matrix,
the unbalanced-OT alignment loss and one alternating training step.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .anchors import AnchorSet, update_anchors
from .config import TrainConfig
from .model import SGD, Network, cross_entropy
from .numerics import pairwise_sq_dist, softmax
from .ot import OTConfig, TransportPlan, sinkhorn_unbalanced
from .pseudo_label import ClassMemory, memory_update, pseudo_label_batch


def _f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def common_cost(g_s, g_t, h_s, h_t, mu: float) -> np.ndarray:
    """``mu |g_s[i]-g_t[j]|^2 + |h_s[i]-h_t[j]|^2``."""
    g_s, g_t, h_s, h_t = map(_f64, (g_s, g_t, h_s, h_t))
    if g_s.shape[0] != h_s.shape[0] or g_t.shape[0] != h_t.shape[0]:
        raise ValueError("feature and logit batches differ in length")
    return mu * pairwise_sq_dist(g_s, g_t) + pairwise_sq_dist(h_s, h_t)


def unknown_cost(anchors, g_t_u, r, h_t_u, mu: float, softmax_logits: bool = False) -> np.ndarray:
    """``mu |a_k - g_t[j]|^2 + |r - h_t[j]|^2`` for feature anchors ``a`` and decision anchor ``r``.

    ``softmax_logits`` compares ``r`` with ``softmax(h_t)`` instead of raw logits.
    """
    anchors, g_t_u, h_t_u = map(_f64, (anchors, g_t_u, h_t_u))
    r = _f64(r).reshape(1, -1)
    if g_t_u.shape[0] != h_t_u.shape[0]:
        raise ValueError("feature and logit batches differ in length")
    if h_t_u.shape[0] and h_t_u.shape[1] != r.shape[1]:
        raise ValueError("decision anchor and logits differ in dimension")
    h = softmax(h_t_u) if (softmax_logits and h_t_u.shape[0]) else h_t_u
    label = pairwise_sq_dist(np.repeat(r, anchors.shape[0], axis=0), h.reshape(-1, r.shape[1]))
    return mu * pairwise_sq_dist(anchors, g_t_u) + label


@dataclass
class CostInputs:
    g_s: np.ndarray
    h_s: np.ndarray  # logits, or one-hot labels when label_term == "onehot"
    g_t: np.ndarray
    h_t: np.ndarray
    anchors: np.ndarray
    r: np.ndarray
    mu: float
    onehot_source: bool = False
    softmax_unknown: bool = False


@dataclass
class BlockCost:
    C_common: np.ndarray  # (n_s, n_tc)
    C_unknown: np.ndarray  # (L, n_tu)
    xi: float
    assembled: np.ndarray  # (n_s + L, n_tc + n_tu)
    column_permutation: np.ndarray  # assembled column -> batch index
    inputs: CostInputs | None = None

    @property
    def n_source(self) -> int:
        return self.C_common.shape[0]

    @property
    def n_common(self) -> int:
        return self.C_common.shape[1]

    @property
    def n_unknown(self) -> int:
        return self.C_unknown.shape[1]

    def to_batch_order(self, per_column: np.ndarray) -> np.ndarray:
        out = np.empty_like(per_column)
        out[self.column_permutation] = per_column
        return out


def xi_value(C_common: np.ndarray, C_unknown: np.ndarray, policy="double") -> float:
    """Padding cost. ``"double"``: ``2*max + 1e-6``; ``"max"``: the block maximum; a number is used as-is."""
    peaks = [float(b.max()) for b in (C_common, C_unknown) if b.size]
    peak = max(peaks)
    if policy == "double":
        return 2.0 * peak + 1e-6
    if policy == "max":
        return peak
    xi = float(policy)
    if xi < peak:
        raise ValueError(f"xi={xi} is below the block maximum {peak}")
    return xi


def assemble_block_cost(C_common, C_unknown, xi_policy="double", common_idx=None, unknown_idx=None) -> BlockCost:
    C_common, C_unknown = _f64(C_common), _f64(C_unknown)
    if C_common.ndim != 2 or C_unknown.ndim != 2:
        raise ValueError("cost blocks must be 2-d")
    if C_common.size == 0 and C_unknown.size == 0:
        raise ValueError("both cost blocks are empty")
    xi = xi_value(C_common, C_unknown, xi_policy)
    n_s, n_tc = C_common.shape
    L, n_tu = C_unknown.shape
    top = np.hstack([C_common, np.full((n_s, n_tu), xi)])
    bottom = np.hstack([np.full((L, n_tc), xi), C_unknown])
    if common_idx is None:
        common_idx = np.arange(n_tc)
    if unknown_idx is None:
        unknown_idx = np.arange(n_tc, n_tc + n_tu)
    perm = np.concatenate([np.asarray(common_idx, int), np.asarray(unknown_idx, int)])
    return BlockCost(C_common, C_unknown, xi, np.vstack([top, bottom]), perm)


def build_block_cost(
    g_s, h_s, g_t, h_t, unknown_mask, anchors: AnchorSet, mu: float,
    xi_policy="double", onehot_source=None, softmax_unknown: bool = False,
) -> BlockCost:
    """Assemble the padded cost for a source batch, a pseudo-labelled target batch and anchors.

    ``onehot_source`` (n_s×K one-hot labels) replaces source logits in the
    common label term.
    """
    unknown_mask = np.asarray(unknown_mask, dtype=bool)
    ci, ui = np.flatnonzero(~unknown_mask), np.flatnonzero(unknown_mask)
    g_t, h_t = _f64(g_t), _f64(h_t)
    src_label = _f64(onehot_source) if onehot_source is not None else _f64(h_s)
    Cc = common_cost(g_s, g_t[ci], src_label, h_t[ci], mu)
    Cu = unknown_cost(anchors.centroids, g_t[ui], anchors.decision_anchor, h_t[ui], mu, softmax_unknown)
    block = assemble_block_cost(Cc, Cu, xi_policy, ci, ui)
    block.inputs = CostInputs(
        g_s=_f64(g_s), h_s=src_label, g_t=g_t, h_t=h_t, anchors=_f64(anchors.centroids),
        r=_f64(anchors.decision_anchor), mu=mu, onehot_source=onehot_source is not None,
        softmax_unknown=softmax_unknown,
    )
    return block


@dataclass
class AlignmentLoss:
    loss: float
    gamma: np.ndarray
    grads: dict  # g_s, h_s, g_t, h_t -> arrays matching the inputs
    plan: TransportPlan | None = None

    @property
    def converged(self) -> bool:
        return True if self.plan is None else self.plan.converged


def _sq_dist_grads(G: np.ndarray, X: np.ndarray, Y: np.ndarray):
    """Gradients of ``sum_ij G_ij |X_i - Y_j|^2`` w.r.t. X and Y."""
    gx = 2.0 * (X * G.sum(axis=1, keepdims=True) - G @ Y)
    gy = 2.0 * (Y * G.sum(axis=0)[:, None] - G.T @ X)
    return gx, gy


def block_gradients(block: BlockCost, gamma: np.ndarray) -> dict:
    """Gradients of ``sum gamma * C_bar`` w.r.t. features and logits with gamma and xi held fixed."""
    inp = block.inputs
    if inp is None:
        raise ValueError("block was assembled without its inputs; cannot differentiate")
    n_s, n_tc = block.n_source, block.n_common
    perm = block.column_permutation
    ci, ui = perm[:n_tc], perm[n_tc:]
    G_c = gamma[:n_s, :n_tc]
    G_u = gamma[n_s:, n_tc:]
    grads = {k: np.zeros_like(getattr(inp, k)) for k in ("g_s", "h_s", "g_t", "h_t")}
    gxs, gxt = _sq_dist_grads(G_c, inp.g_s, inp.g_t[ci])
    grads["g_s"] += inp.mu * gxs
    grads["g_t"][ci] += inp.mu * gxt
    ghs, ght = _sq_dist_grads(G_c, inp.h_s, inp.h_t[ci])
    if not inp.onehot_source:
        grads["h_s"] += ghs
    grads["h_t"][ci] += ght
    if ui.size:
        _, gut = _sq_dist_grads(G_u, inp.anchors, inp.g_t[ui])
        grads["g_t"][ui] += inp.mu * gut
        col = G_u.sum(axis=0)[:, None]
        if inp.softmax_unknown:
            p = softmax(inp.h_t[ui])
            dp = 2.0 * col * (p - inp.r[None, :])
            grads["h_t"][ui] += p * (dp - (p * dp).sum(axis=1, keepdims=True))
        else:
            grads["h_t"][ui] += 2.0 * col * (inp.h_t[ui] - inp.r[None, :])
    return grads


def alignment_loss(block: BlockCost, cfg: OTConfig | None = None, gamma=None, normalize_cost: bool = False, scale_loss: bool = False) -> AlignmentLoss:
    """Uniform-mass unbalanced OT on the assembled cost; loss ``sum gamma * C_bar``.

    Passing ``gamma`` skips the solve (the plan is treated as frozen).
    ``normalize_cost`` solves for the plan on ``C_bar / max(C_bar)``, which
    makes epsilon and the KL weights relative to the cost scale; the loss
    uses the raw costs unless ``scale_loss`` also divides it (and its
    gradient) by that constant.
    """
    C = block.assembled
    scale = float(C.max()) if (normalize_cost or scale_loss) and C.max() > 0 else 1.0
    plan = None
    if gamma is None:
        n_rows, n_cols = C.shape
        a = np.full(n_rows, 1.0 / n_rows)
        b = np.full(n_cols, 1.0 / n_cols)
        plan = sinkhorn_unbalanced(a, b, C / scale if normalize_cost else C, cfg or OTConfig())
        gamma = plan.gamma
    gamma = _f64(gamma)
    w = 1.0 / scale if scale_loss else 1.0
    loss = w * float(np.sum(gamma * C))
    grads = block_gradients(block, gamma) if block.inputs is not None else {}
    if scale_loss:
        grads = {k: w * v for k, v in grads.items()}
    return AlignmentLoss(loss=loss, gamma=gamma, grads=grads, plan=plan)


@dataclass
class TrainState:
    net: Network
    optimizer: SGD
    memory: ClassMemory
    anchors: AnchorSet
    step: int = 0
    last_tau: float | None = None


@dataclass
class StepReport:
    step: int
    tau: float
    n_common: int
    n_unknown: int
    degenerate: bool
    loss_ce: float
    loss_align: float
    loss_total: float
    converged: bool
    transported_mass: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(d.pop("extra"))
        return d


def pretrain_step(xs, ys, net: Network, optimizer: SGD) -> float:
    """One pure source cross-entropy step."""
    fs, ls, cs = net.forward(xs)
    loss, dlogits = cross_entropy(ls, ys)
    grads = net.backward(fs, cs, dlogits=dlogits)
    optimizer.step(net.params, grads)
    return loss


def training_step(xs, ys, xt, state: TrainState, cfg: TrainConfig, ot_cfg: OTConfig | None = None) -> StepReport:
    """Forward, pseudo-label, update memory and anchors, solve UOT, take one gradient step."""
    net = state.net
    lam = cfg.lam
    fs, ls, cs = net.forward(xs)
    ft, lt, ct = net.forward(xt)

    pl = pseudo_label_batch(
        lt, ft, state.memory,
        method=cfg.threshold_method,
        bin_count=cfg.bin_count,
        joint=cfg.joint_decision,
        fixed_tau=None if cfg.auto_threshold else cfg.fixed_tau,
    )
    memory_update(state.memory, fs, ys)
    state.anchors = update_anchors(state.anchors, ft[pl.unknown])

    onehot = np.eye(net.n_classes)[ys] if cfg.label_term == "onehot" else None
    block = build_block_cost(
        fs, ls, ft, lt, pl.unknown, state.anchors, cfg.mu,
        xi_policy=cfg.xi_policy, onehot_source=onehot, softmax_unknown=cfg.softmax_unknown,
    )
    align = alignment_loss(block, ot_cfg, normalize_cost=cfg.normalize_cost, scale_loss=cfg.scale_align_loss)

    ce, dce = cross_entropy(ls, ys)
    w = 1.0 - lam
    dt = net.dtype
    grads = net.backward(
        fs, cs,
        dlogits=lam * dce + (w * align.grads["h_s"]).astype(dt),
        dfeat=(w * align.grads["g_s"]).astype(dt),
    )
    if w != 0.0:
        net.backward(
            ft, ct,
            dlogits=(w * align.grads["h_t"]).astype(dt),
            dfeat=(w * align.grads["g_t"]).astype(dt),
            grads=grads,
        )
    state.optimizer.step(net.params, grads)
    state.step += 1
    state.last_tau = pl.tau
    return StepReport(
        step=state.step,
        tau=pl.tau,
        n_common=pl.n_common,
        n_unknown=pl.n_unknown,
        degenerate=pl.degenerate,
        loss_ce=ce,
        loss_align=align.loss,
        loss_total=lam * ce + w * align.loss,
        converged=align.converged,
        transported_mass=float(align.gamma.sum()),
    )
