import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unijdot.alignment import (
    TrainState,
    alignment_loss,
    assemble_block_cost,
    build_block_cost,
    common_cost,
    pretrain_step,
    training_step,
    unknown_cost,
)
from unijdot.anchors import AnchorSet, decision_anchor, init_anchors
from unijdot.config import TrainConfig
from unijdot.data import SynthConfig, build_unida_scenario, synth_generate
from unijdot.model import SGD, ArchConfig, Network
from unijdot.ot import OTConfig
from unijdot.pseudo_label import memory_init


def sq(u, v):
    return sum((a - b) ** 2 for a, b in zip(u, v))


def test_common_cost_examples(rng):
    g, h = rng.normal(size=(1, 4)), rng.normal(size=(1, 3))
    assert common_cost(g, g, h, h, 1.0)[0, 0] == 0
    g_s, g_t = rng.normal(size=(4, 5)), rng.normal(size=(3, 5))
    h_s, h_t = rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
    C0 = common_cost(g_s, g_t, h_s, h_t, 0.0)
    C = common_cost(g_s, g_t, h_s, h_t, 0.7)
    for i in range(4):
        for j in range(3):
            assert abs(C0[i, j] - sq(h_s[i], h_t[j])) < 1e-12
            assert abs(C[i, j] - (0.7 * sq(g_s[i], g_t[j]) + sq(h_s[i], h_t[j]))) < 1e-5
    with pytest.raises(ValueError):
        common_cost(g_s, g_t, h_s[:3], h_t, 1.0)


def test_unknown_cost_examples(rng):
    K = 4
    r = decision_anchor(K)
    a = rng.normal(size=(2, 3))
    C = unknown_cost(a, a[1:2], r, r[None, :], 1.0)
    assert C[1, 0] == 0
    g, h = rng.normal(size=(5, 3)), rng.normal(size=(5, K))
    C0 = unknown_cost(a, g, r, h, 0.0)
    assert np.all(C0 == C0[0])
    C = unknown_cost(a, g, r, h, 1.3)
    for k in range(2):
        for j in range(5):
            assert abs(C[k, j] - (1.3 * sq(a[k], g[j]) + sq(r, h[j]))) < 1e-5
    with pytest.raises(ValueError):
        unknown_cost(a, g, r, h[:4], 1.0)
    with pytest.raises(ValueError):
        unknown_cost(a, g, np.full(3, 1 / 3), h, 1.0)


def test_assemble_examples():
    b = assemble_block_cost([[1.0]], [[3.0]])
    np.testing.assert_array_equal(b.assembled, [[1.0, 6 + 1e-6], [6 + 1e-6, 3.0]])
    Cc = np.array([[1.0, 2.0], [0.5, 4.0]])
    b = assemble_block_cost(Cc, np.zeros((3, 0)))
    np.testing.assert_array_equal(b.assembled, np.vstack([Cc, np.full((3, 2), 8 + 1e-6)]))
    with pytest.raises(ValueError):
        assemble_block_cost(np.zeros((2, 0)), np.zeros((3, 0)))


def test_xi_dominates_on_100_assemblies(rng):
    for _ in range(100):
        n_s, n_tc, L, n_tu = (int(v) for v in rng.integers(1, 8, 4))
        n_tc = n_tc if rng.random() > 0.1 else 0
        Cc = rng.exponential(scale=rng.uniform(0.01, 100), size=(n_s, n_tc))
        Cu = rng.exponential(scale=rng.uniform(0.01, 100), size=(L, n_tu))
        b = assemble_block_cost(Cc, Cu)
        inner = np.concatenate([Cc.ravel(), Cu.ravel()])
        off = np.concatenate([b.assembled[:n_s, n_tc:].ravel(), b.assembled[n_s:, :n_tc].ravel()])
        assert np.all(off == b.xi) and b.xi > inner.max()


@given(st.integers(0, 2**32 - 1))
def test_column_permutation_restores_batch_order(seed):
    r = np.random.default_rng(seed)
    n_t, D, K = 9, 3, 4
    mask = r.random(n_t) < 0.4
    anchors = AnchorSet(r.normal(size=(2, D)), 0.1, decision_anchor(K))
    b = build_block_cost(r.normal(size=(5, D)), r.normal(size=(5, K)), r.normal(size=(n_t, D)), r.normal(size=(n_t, K)), mask, anchors, 1.0)
    cols = np.arange(n_t, dtype=float)[b.column_permutation]
    np.testing.assert_array_equal(b.to_batch_order(cols), np.arange(n_t))
    assert sorted(b.column_permutation.tolist()) == list(range(n_t))
    assert np.all(mask[b.column_permutation[b.n_common :]])


def _instance(rng, onehot=False, softmax_unknown=False):
    n_s, n_t, D, K, L = 4, 6, 3, 3, 2
    g_s, h_s = rng.normal(size=(n_s, D)), rng.normal(size=(n_s, K))
    if onehot:
        h_s = np.eye(K)[rng.integers(0, K, n_s)]
    g_t, h_t = rng.normal(size=(n_t, D)), rng.normal(size=(n_t, K))
    mask = np.array([False, True, False, True, False, False])
    anchors = AnchorSet(rng.normal(size=(L, D)), 0.1, decision_anchor(K))
    args = dict(anchors=anchors, mu=0.8, onehot_source=h_s if onehot else None, softmax_unknown=softmax_unknown)
    return (g_s, h_s, g_t, h_t), mask, args


@pytest.mark.parametrize("variant", [{}, {"onehot": True}, {"softmax_unknown": True}])
def test_alignment_gradient_with_frozen_plan(rng, variant):
    for _ in range(10):
        x, mask, args = _instance(rng, **variant)
        n_rows = x[0].shape[0] + args["anchors"].L
        gamma = rng.random((n_rows, x[2].shape[0])) / 10
        # xi is a constant of the frozen step, so pin it while perturbing
        xi = build_block_cost(*x, mask, **args).xi
        args_fixed = dict(args, xi_policy=xi * 10)
        base = alignment_loss(build_block_cost(*x, mask, **args_fixed), gamma=gamma)
        h = 1e-6
        for name, idx in (("g_s", 0), ("h_s", 1), ("g_t", 2), ("h_t", 3)):
            if name == "h_s" and variant.get("onehot"):
                assert np.all(base.grads["h_s"] == 0)
                continue
            fd = np.zeros_like(x[idx])
            for pos in np.ndindex(x[idx].shape):
                vals = [v.copy() for v in x]
                vals[idx][pos] += h
                lp = alignment_loss(build_block_cost(*vals, mask, **args_fixed), gamma=gamma).loss
                vals[idx][pos] -= 2 * h
                lm = alignment_loss(build_block_cost(*vals, mask, **args_fixed), gamma=gamma).loss
                fd[pos] = (lp - lm) / (2 * h)
            np.testing.assert_allclose(base.grads[name], fd, rtol=1e-4, atol=1e-6, err_msg=name)


def test_alignment_loss_trivial_cases(rng):
    g, h = rng.normal(size=(1, 3)), rng.normal(size=(1, 2))
    anchors = AnchorSet(np.zeros((0, 3)), 0.1, decision_anchor(2))
    b = build_block_cost(g, h, g, h, [False], anchors, 1.0)
    assert alignment_loss(b).loss == 0
    # zero logit distances: the cost is pure feature term, linear in mu
    gs, gt, hs = rng.normal(size=(4, 3)), rng.normal(size=(6, 3)), rng.normal(size=(4, 2))
    ht = hs[[0, 1, 2, 3, 0, 1]]
    gamma = np.diag(np.ones(4))[:, [0, 1, 2, 3, 0, 1]] * rng.random((4, 6))
    l1 = alignment_loss(assemble_block_cost(common_cost(gs, gt, hs, ht, 1.0), np.zeros((0, 0))), gamma=gamma).loss
    l2 = alignment_loss(assemble_block_cost(common_cost(gs, gt, hs, ht, 2.0), np.zeros((0, 0))), gamma=gamma).loss
    assert l1 > 0 and l2 == 2 * l1


def test_alignment_solve_uses_uniform_masses(rng):
    x, mask, args = _instance(rng)
    b = build_block_cost(*x, mask, **args)
    res = alignment_loss(b, OTConfig(tau1=1e4, tau2=1e4, epsilon=0.05, max_iters=20000), normalize_cost=True)
    n_rows, n_cols = b.assembled.shape
    np.testing.assert_allclose(res.gamma.sum(axis=1), 1 / n_rows, atol=5e-3)
    np.testing.assert_allclose(res.gamma.sum(axis=0), 1 / n_cols, atol=5e-3)
    assert res.loss == pytest.approx(float(np.sum(res.gamma * b.assembled)))


def test_scaled_loss_divides_by_cost_peak(rng):
    x, mask, args = _instance(rng)
    b = build_block_cost(*x, mask, **args)
    gamma = rng.random(b.assembled.shape)
    raw = alignment_loss(b, gamma=gamma)
    scaled = alignment_loss(b, gamma=gamma, scale_loss=True)
    peak = b.assembled.max()
    assert scaled.loss == pytest.approx(raw.loss / peak, rel=1e-12)
    for k in raw.grads:
        np.testing.assert_allclose(scaled.grads[k], raw.grads[k] / peak, rtol=1e-12)


def _scenario(seed=0, per_class=30):
    src, tgt = synth_generate(SynthConfig(samples_per_class=per_class, seed=seed))
    return build_unida_scenario(src, tgt, 5, 0)


def _state(sc, cfg, arch=None, seed=0):
    xs, ys = sc.source.samples, sc.source.labels
    xt = sc.target_unlabeled().samples
    net = Network(arch or ArchConfig(), xs.shape[1], sc.n_classes, seed=seed)
    mem = memory_init(net.features(xs)[0], ys, sc.n_classes, cfg.memory_capacity, seed=seed)
    anchors = init_anchors(net.features(xt)[0], cfg.n_anchors, sc.n_classes, seed=seed)
    return TrainState(net=net, optimizer=SGD(cfg.lr, cfg.momentum), memory=mem, anchors=anchors)


def test_lambda_one_equals_pure_cross_entropy_step():
    sc = _scenario()
    cfg = TrainConfig(lam=1.0)
    state = _state(sc, cfg)
    ref = state.net.copy()
    xs, ys = sc.source.samples[:32], sc.source.labels[:32]
    xt = sc.target_unlabeled().samples[:32]
    training_step(xs, ys, xt, state, cfg)
    pretrain_step(xs, ys, ref, SGD(cfg.lr, cfg.momentum))
    for k in ref.params:
        np.testing.assert_array_equal(state.net.params[k], ref.params[k], err_msg=k)


def test_degenerate_batch_runs_with_empty_unknown_block():
    sc = _scenario()
    cfg = TrainConfig(auto_threshold=False, fixed_tau=0.0)
    state = _state(sc, cfg)
    rep = training_step(sc.source.samples[:16], sc.source.labels[:16], sc.target_unlabeled().samples[:16], state, cfg)
    assert rep.n_unknown == 0 and rep.n_common == 16 and np.isfinite(rep.loss_total)


def test_training_step_is_deterministic():
    sc = _scenario()
    cfg = TrainConfig()
    reps = []
    for _ in range(2):
        state = _state(sc, cfg)
        rep = training_step(sc.source.samples[:32], sc.source.labels[:32], sc.target_unlabeled().samples[:32], state, cfg)
        reps.append((rep.to_dict(), {k: v.tobytes() for k, v in state.net.params.items()}))
    assert reps[0] == reps[1]


def test_two_hundred_steps_halve_the_loss():
    sc = _scenario(per_class=60)
    cfg = TrainConfig()
    state = _state(sc, cfg)
    xs, ys = sc.source.samples, sc.source.labels
    xt = sc.target_unlabeled().samples
    r = np.random.default_rng(0)
    losses = []
    for _ in range(200):
        si = r.choice(len(xs), cfg.batch_source, replace=False)
        ti = r.choice(len(xt), cfg.batch_target, replace=False)
        losses.append(training_step(xs[si], ys[si], xt[ti], state, cfg).loss_total)
    assert np.mean(losses[-10:]) < 0.5 * losses[0]
