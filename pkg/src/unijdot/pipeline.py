"""End-to-end training: source pretraining, memory/anchor initialization and
the alternating adaptation loop."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace

import numpy as np

from .alignment import StepReport, TrainState, pretrain_step, training_step
from .anchors import AnchorSet, init_anchors
from .config import TrainConfig
from .data import Scenario, UnlabeledView, batch_iter
from .model import SGD, ArchConfig, Network
from .ot import OTConfig
from .pseudo_label import ClassMemory, decision_probs, memory_init

log = logging.getLogger(__name__)


@dataclass
class TrainedModel:
    net: Network
    memory: ClassMemory
    anchors: AnchorSet
    last_tau: float | None
    joint_decision: bool = True
    threshold_method: str = "yen"
    bin_count: int | None = None
    fixed_tau: float | None = None

    def embed(self, x, batch_size: int = 256):
        feats, logits = [], []
        for idx in batch_iter(len(x), batch_size, train=False):
            f, l, _ = self.net.forward(x[idx])
            feats.append(f)
            logits.append(l)
        return np.concatenate(feats), np.concatenate(logits)

    def decision_probs(self, x) -> np.ndarray:
        feats, logits = self.embed(np.asarray(x))
        return decision_probs(logits, feats, self.memory, self.joint_decision)


def _embed(net: Network, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    return np.concatenate([net.features(x[idx])[0] for idx in batch_iter(len(x), batch_size, train=False)])


def pretrain(net: Network, opt: SGD, xs: np.ndarray, ys: np.ndarray, cfg: TrainConfig, epochs: int | None = None) -> list[float]:
    losses = []
    for epoch in range(cfg.pretrain_epochs if epochs is None else epochs):
        for idx in batch_iter(len(xs), cfg.batch_source, seed=cfg.seed, epoch=epoch):
            losses.append(pretrain_step(xs[idx], ys[idx], net, opt))
    return losses


def train(
    scenario: Scenario,
    cfg: TrainConfig,
    ot_cfg: OTConfig | None = None,
    arch: ArchConfig | None = None,
    on_step=None,
) -> tuple[TrainedModel, list[StepReport]]:
    """Train on the scenario's labelled source and unlabelled target view.

    ``on_step`` receives every StepReport (e.g. to append to a JSONL log).
    """
    arch = arch or ArchConfig()
    ot_cfg = ot_cfg or OTConfig()
    xs, ys = scenario.source.samples, scenario.source.labels
    target: UnlabeledView = scenario.target_unlabeled()
    xt = target.samples
    K = scenario.n_classes
    net = Network(arch, xs.shape[1], K, seed=cfg.seed)
    opt = SGD(cfg.lr, cfg.momentum, cfg.weight_decay)

    pre = pretrain(net, opt, xs, ys, cfg)
    if pre:
        log.info("pretraining done: last loss %.4f", pre[-1])

    memory = memory_init(_embed(net, xs), ys, K, cfg.memory_capacity, seed=cfg.seed)
    anchors = init_anchors(_embed(net, xt), cfg.n_anchors, K, seed=cfg.seed, momentum=cfg.anchor_momentum)
    state = TrainState(net=net, optimizer=opt, memory=memory, anchors=anchors)

    reports = []
    for epoch in range(cfg.epochs):
        src_batches = list(batch_iter(len(xs), cfg.batch_source, seed=cfg.seed, epoch=cfg.pretrain_epochs + epoch))
        tgt_batches = list(batch_iter(len(xt), cfg.batch_target, seed=cfg.seed + 1, epoch=epoch))
        for i in range(max(len(src_batches), len(tgt_batches))):
            si = src_batches[i % len(src_batches)]
            ti = tgt_batches[i % len(tgt_batches)]
            rep = training_step(xs[si], ys[si], xt[ti], state, cfg, ot_cfg)
            rep.extra["epoch"] = epoch
            reports.append(rep)
            if on_step is not None:
                on_step(rep)
    # anchors are float64 during training; ship them at checkpoint precision
    anchors = replace(
        state.anchors,
        centroids=state.anchors.centroids.astype(np.float32),
        decision_anchor=state.anchors.decision_anchor.astype(np.float32),
    )
    model = TrainedModel(
        net=net,
        memory=state.memory,
        anchors=anchors,
        last_tau=state.last_tau,
        joint_decision=cfg.joint_decision,
        threshold_method=cfg.threshold_method,
        bin_count=cfg.bin_count,
        fixed_tau=None if cfg.auto_threshold else cfg.fixed_tau,
    )
    return model, reports


def write_jsonl(path, reports) -> None:
    with open(path, "w") as fh:
        for r in reports:
            fh.write(json.dumps(r.to_dict()) + "\n")
