"""Training: ground-truth displacements, per-step losses, gradients, fit loop.

The loss has three parts, each averaged over recurrent steps: the mean
absolute error between predicted and target displacements, the mean absolute
difference between neighbor distances of the predicted and target shifted
positions, and (in multiclass mode) a categorical cross-entropy weighted by
``alpha``. In multiscale mode the targets switch from the fine to the coarse
field at step ``k_star``. Gradients are exact reverse-mode derivatives with
the subgradient at kinks taken as 0.
"""

from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from ._kernels import segment_sum
from .core import NOISE, LabeledCloud, centroid
from .graph import GraphConfig, LocGraph, build_graph, normalized_view, scaled_config
from .model import (ModelConfig, ModelParams, StepOutputs, forward,
                    init_params, load_checkpoint, save_checkpoint)

__all__ = [
    "TrainConfig",
    "DisplacementTargets",
    "LossBreakdown",
    "TrainingDiverged",
    "gt_displacements",
    "loss",
    "gradients",
    "fit",
    "FitResult",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    learning_rate: float = 1e-3
    optimizer: str = "adam"          # "adam" | "sgd"
    momentum: float = 0.9            # sgd only
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    k_star: Optional[int] = None
    alpha: float = 1.0
    seed: int = 0
    checkpoint_every: int = 10
    displacement_norm: str = "l1"    # "l1" | "l2" reading of the MAE term
    clip_norm: Optional[float] = None
    class_weighting: str = "none"    # "none" | "inverse"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.displacement_norm not in ("l1", "l2"):
            raise ValueError(f"unknown displacement_norm {self.displacement_norm!r}")
        if self.class_weighting not in ("none", "inverse"):
            raise ValueError(f"unknown class_weighting {self.class_weighting!r}")


@dataclass(frozen=True)
class DisplacementTargets:
    """Per-node target displacement vectors; background nodes stay at zero."""

    fine: np.ndarray                 # (n, 2)
    coarse: Optional[np.ndarray] = None


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    l_r: float
    l_d: float
    l_class: float


class TrainingDiverged(RuntimeError):
    def __init__(self, graph_index: int):
        super().__init__(f"divergence: non-finite loss on graph {graph_index}")
        self.graph_index = graph_index


def _labels_to_displacements(labels: np.ndarray, coords: np.ndarray) -> np.ndarray:
    out = np.zeros_like(coords)
    for cid in np.unique(labels):
        if cid == NOISE:
            continue
        idx = np.flatnonzero(labels == cid)
        out[idx] = centroid(coords[idx]) - coords[idx]
    return out


def gt_displacements(labeled: LabeledCloud) -> DisplacementTargets:
    """Targets pointing each clustered node at its cluster centroid."""
    if labeled.truth is None:
        raise ValueError("labeled cloud has no truth partition")
    coords = labeled.cloud.coords
    fine = _labels_to_displacements(labeled.truth.labels, coords)
    coarse = None
    if labeled.coarse_truth is not None:
        coarse = _labels_to_displacements(labeled.coarse_truth.labels, coords)
    return DisplacementTargets(fine=fine, coarse=coarse)


def _step_targets(targets: DisplacementTargets, k: int, k_star: Optional[int]) -> np.ndarray:
    if k_star is not None and k >= k_star:
        if targets.coarse is None:
            raise ValueError("multiscale training requires coarse targets")
        return targets.coarse
    return targets.fine


def _target_distances(coords, tgt, src, dst):
    p = coords + tgt
    return np.linalg.norm(p[src] - p[dst], axis=1)


def _class_weights(class_truth: np.ndarray, n_classes: int, mode: str) -> np.ndarray:
    w = np.ones(len(class_truth))
    if mode == "inverse":
        counts = np.bincount(class_truth, minlength=n_classes).astype(float)
        safe = np.where(counts > 0, counts, 1.0)
        w = (len(class_truth) / (n_classes * safe))[class_truth]
    return w


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=1, keepdims=True))


def loss(outputs: StepOutputs, graph: LocGraph, targets: DisplacementTargets,
         class_truth: Optional[np.ndarray] = None,
         cfg: Optional[TrainConfig] = None, scale: float = 1.0) -> LossBreakdown:
    """Combined per-step loss; ``scale`` divides both displacement terms."""
    cfg = cfg or TrainConfig()
    bk, _ = _loss_and_head_grads(outputs, graph, targets, class_truth, cfg, scale,
                                 want_grads=False)
    return bk


def _loss_and_head_grads(outputs, graph, targets, class_truth, cfg, scale, want_grads):
    K = outputs.n_steps
    coords = graph.coords
    n = coords.shape[0]
    src, dst = (graph.edges[:, 0], graph.edges[:, 1]) if graph.n_edges else (None, None)
    n_e = graph.n_edges
    l2 = cfg.displacement_norm == "l2"

    l_r = 0.0
    l_d = 0.0
    l_class = 0.0
    g_disp = np.zeros_like(outputs.displacements) if want_grads else None
    g_logit = (np.zeros_like(outputs.class_logits)
               if want_grads and outputs.class_logits is not None else None)

    dist_cache: dict[int, np.ndarray] = {}

    for k in range(K):
        tgt = _step_targets(targets, k, cfg.k_star)
        key = id(tgt)
        diff = outputs.displacements[k] - tgt
        if l2:
            norms = np.linalg.norm(diff, axis=1)
            l_r += norms.mean() / (K * scale) if n else 0.0
            if want_grads and n:
                safe = np.where(norms > 0, norms, 1.0)
                g_disp[k] += np.where(norms[:, None] > 0, diff / safe[:, None], 0.0) \
                    / (K * n * scale)
        else:
            l_r += np.abs(diff).sum(axis=1).mean() / (K * scale) if n else 0.0
            if want_grads and n:
                g_disp[k] += np.sign(diff) / (K * n * scale)

        if n_e:
            if key not in dist_cache:
                dist_cache[key] = _target_distances(coords, tgt, src, dst)
            d_t = dist_cache[key]
            ph = coords + outputs.displacements[k]
            dvec = ph[src] - ph[dst]
            dh = np.linalg.norm(dvec, axis=1)
            l_d += np.abs(dh - d_t).mean() / (K * scale)
            if want_grads:
                sgn = np.sign(dh - d_t) / (K * n_e * scale)
                safe = np.where(dh > 0, dh, 1.0)
                unit = np.where(dh[:, None] > 0, dvec / safe[:, None], 0.0)
                contrib = sgn[:, None] * unit
                gph = segment_sum(contrib, src, n) - segment_sum(contrib, dst, n)
                g_disp[k] += gph

        if outputs.class_logits is not None and class_truth is not None and cfg.alpha > 0:
            z = outputs.class_logits[k]
            logp = _log_softmax(z)
            w = _class_weights(class_truth, z.shape[1], cfg.class_weighting)
            ce = -logp[np.arange(n), class_truth]
            wsum = w.sum()
            l_class += cfg.alpha * float((w * ce).sum() / wsum) / K
            if want_grads:
                probs = np.exp(logp)
                onehot = np.zeros_like(probs)
                onehot[np.arange(n), class_truth] = 1.0
                g_logit[k] += (probs - onehot) * (w / wsum)[:, None] * (cfg.alpha / K)

    bk = LossBreakdown(total=float(l_r + l_d + l_class),
                       l_r=float(l_r), l_d=float(l_d), l_class=float(l_class))
    return bk, (g_disp, g_logit)


def _zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(t) for name, t in params.tensors().items()}


def _backward(params: ModelParams, graph: LocGraph, tape: dict,
              g_disp: np.ndarray, g_logit: Optional[np.ndarray],
              grads: dict[str, np.ndarray]) -> None:
    """Accumulate reverse-mode gradients for one graph into ``grads``."""
    cfg = params.config
    L = cfg.latent_dim
    n = graph.n_nodes
    src, dst = tape["src"], tape["dst"]
    v_lat, e_lat = tape["v_lat"], tape["e_lat"]
    steps = tape["steps"]
    out_scale = tape["out_scale"]
    n_e = len(src)

    g_v = np.zeros((n, L))
    g_e = np.zeros((n_e, L))
    g_u_next = np.zeros((n, L))          # dL/du^{k+1} via later steps
    g_f_next = np.zeros((n_e, L))        # dL/df^{k+1} via later steps

    for k in range(cfg.n_steps - 1, -1, -1):
        st = steps[k]
        u_next = st["u_next"]
        g_raw = g_disp[k] * out_scale    # displacement head is scaled by the span
        g_u = g_u_next + g_raw @ params.disp_w
        grads["disp_w"] += g_raw.T @ u_next
        grads["disp_b"] += g_raw.sum(axis=0)
        if g_logit is not None:
            g_u = g_u + g_logit[k] @ params.class_w
            grads["class_w"] += g_logit[k].T @ u_next
            grads["class_b"] += g_logit[k].sum(axis=0)

        gzu = np.where(st["mask_u"], g_u, 0.0)
        grads["psi_w"] += gzu.T @ st["agg"]
        grads["psi_b"] += gzu.sum(axis=0)
        if n_e == 0:
            g_u_next = np.zeros((n, L))
            g_f_next = np.zeros((0, L))
            continue
        gagg = gzu @ params.psi_w
        gf = g_f_next + gagg[dst]
        gzf = np.where(st["mask_f"], gf, 0.0)
        x_e = np.concatenate([v_lat[src], st["u_prev"][src],
                              v_lat[dst], st["u_prev"][dst],
                              e_lat, st["f_prev"]], axis=1)
        grads["phi_w"] += gzf.T @ x_e
        grads["phi_b"] += gzf.sum(axis=0)
        gx = gzf @ params.phi_w
        g_v += segment_sum(gx[:, :L], src, n) + segment_sum(gx[:, 2 * L:3 * L], dst, n)
        g_u_next = segment_sum(gx[:, L:2 * L], src, n) + segment_sum(gx[:, 3 * L:4 * L], dst, n)
        g_e += gx[:, 4 * L:5 * L]
        g_f_next = gx[:, 5 * L:6 * L]

    grads["node_w"] += g_v.T @ graph.node_feats
    grads["node_b"] += g_v.sum(axis=0)
    grads["edge_w"] += g_e.T @ graph.edge_feats
    grads["edge_b"] += g_e.sum(axis=0)


@dataclass(frozen=True)
class TrainItem:
    """One prepared training example."""

    graph: LocGraph
    targets: DisplacementTargets
    class_truth: Optional[np.ndarray] = None
    scale: float = 1.0


def gradients(params: ModelParams, batch: Sequence[TrainItem],
              cfg: Optional[TrainConfig] = None
              ) -> tuple[dict[str, np.ndarray], LossBreakdown]:
    """Exact gradients of the mean loss over a batch of graphs."""
    if not batch:
        raise ValueError("empty batch")
    cfg = cfg or TrainConfig()
    grads = _zero_grads(params)
    totals = np.zeros(4)
    for idx, item in enumerate(batch):
        outputs, tape = forward(item.graph, params, record_tape=True)
        bk, (g_disp, g_logit) = _loss_and_head_grads(
            outputs, item.graph, item.targets, item.class_truth, cfg, item.scale,
            want_grads=True)
        if not np.isfinite(bk.total):
            raise TrainingDiverged(idx)
        _backward(params, item.graph, tape, g_disp, g_logit, grads)
        totals += (bk.total, bk.l_r, bk.l_d, bk.l_class)
    inv = 1.0 / len(batch)
    for g in grads.values():
        g *= inv
    totals *= inv
    return grads, LossBreakdown(*(float(v) for v in totals))


def _clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor


class _Adam:
    def __init__(self, cfg: TrainConfig, tensors: dict[str, np.ndarray]):
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for name, p in tensors.items():
            g = grads[name]
            self.m[name] = c.beta1 * self.m[name] + (1 - c.beta1) * g
            self.v[name] = c.beta2 * self.v[name] + (1 - c.beta2) * g * g
            mhat = self.m[name] / bc1
            vhat = self.v[name] / bc2
            p -= c.learning_rate * mhat / (np.sqrt(vhat) + c.eps_opt)

    def state(self) -> dict:
        return {"t": self.t,
                "m": {k: v.ravel().tolist() for k, v in self.m.items()},
                "v": {k: v.ravel().tolist() for k, v in self.v.items()}}

    def load_state(self, state: dict, tensors: dict[str, np.ndarray]) -> None:
        self.t = state["t"]
        for k, p in tensors.items():
            self.m[k] = np.asarray(state["m"][k], dtype=np.float64).reshape(p.shape)
            self.v[k] = np.asarray(state["v"][k], dtype=np.float64).reshape(p.shape)


class _SGDMomentum:
    def __init__(self, cfg: TrainConfig, tensors: dict[str, np.ndarray]):
        self.cfg = cfg
        self.vel = {k: np.zeros_like(v) for k, v in tensors.items()}

    def step(self, tensors, grads) -> None:
        for name, p in tensors.items():
            self.vel[name] = self.cfg.momentum * self.vel[name] + grads[name]
            p -= self.cfg.learning_rate * self.vel[name]

    def state(self) -> dict:
        return {"vel": {k: v.ravel().tolist() for k, v in self.vel.items()}}

    def load_state(self, state, tensors) -> None:
        for k, p in tensors.items():
            self.vel[k] = np.asarray(state["vel"][k], dtype=np.float64).reshape(p.shape)


def prepare_items(dataset: Sequence[LabeledCloud], model_cfg: ModelConfig,
                  train_cfg: TrainConfig, graph_cfg: GraphConfig) -> list[TrainItem]:
    """Graphs, targets and class labels for training.

    Each cloud is moved to its zero-mean, extent-normalized frame (targets
    divided by the same scale), so feature and target magnitudes are O(1)
    regardless of the field-of-view size. The inference pipeline applies the
    matching normalization.
    """
    items = []
    for labeled in dataset:
        norm_cloud, _, scale = normalized_view(labeled.cloud)
        graph = build_graph(norm_cloud, scaled_config(graph_cfg, scale))
        raw = gt_displacements(labeled)
        targets = DisplacementTargets(
            fine=raw.fine / scale,
            coarse=raw.coarse / scale if raw.coarse is not None else None)
        class_truth = None
        if model_cfg.n_classes > 0:
            if labeled.shape_class is None:
                raise ValueError("classification training requires class labels")
            class_truth = labeled.shape_class
        items.append(TrainItem(graph, targets, class_truth, 1.0))
    return items


@dataclass
class FitResult:
    params: ModelParams
    history: list[LossBreakdown]


def _effective_k_star(model_cfg: ModelConfig, train_cfg: TrainConfig) -> Optional[int]:
    if train_cfg.k_star is not None and model_cfg.k_star is not None \
            and train_cfg.k_star != model_cfg.k_star:
        raise ValueError("k_star differs between model and train configs")
    return train_cfg.k_star if train_cfg.k_star is not None else model_cfg.k_star


def fit(dataset: Sequence[LabeledCloud], model_cfg: ModelConfig,
        train_cfg: TrainConfig, graph_cfg: Optional[GraphConfig] = None,
        run_dir: Optional[str] = None, resume_from: Optional[str] = None,
        start_params: Optional[ModelParams] = None) -> FitResult:
    """Mini-batch training over labeled clouds.

    Shuffling is derived per epoch from the run seed, so a run resumed from
    a checkpoint reproduces the uninterrupted run exactly.
    """
    if not dataset:
        raise ValueError("empty dataset")
    graph_cfg = graph_cfg or GraphConfig()
    k_star = _effective_k_star(model_cfg, train_cfg)
    if k_star != model_cfg.k_star:
        model_cfg = replace(model_cfg, k_star=k_star)
    train_cfg = replace(train_cfg, k_star=k_star)

    items = prepare_items(dataset, model_cfg, train_cfg, graph_cfg)
    if k_star is not None and any(it.targets.coarse is None for it in items):
        raise ValueError("multiscale training requires coarse truth on every cloud")

    start_epoch = 0
    history: list[LossBreakdown] = []
    if resume_from is not None:
        params, extra = load_checkpoint(resume_from)
        model_cfg = params.config
    elif start_params is not None:
        params = start_params.copy()
        extra = {}
    else:
        params = init_params(model_cfg, seed=train_cfg.seed)
        extra = {}

    tensors = params.tensors()
    opt = _Adam(train_cfg, tensors) if train_cfg.optimizer == "adam" \
        else _SGDMomentum(train_cfg, tensors)
    if extra.get("optimizer"):
        opt.load_state(extra["optimizer"], tensors)
        start_epoch = int(extra.get("epoch", 0))

    loss_path = ckpt_dir = None
    if run_dir is not None:
        os.makedirs(run_dir, exist_ok=True)
        ckpt_dir = os.path.join(run_dir, "checkpoints")
        os.makedirs(ckpt_dir, exist_ok=True)
        with open(os.path.join(run_dir, "config.json"), "w", encoding="utf-8") as fh:
            json.dump({"model": model_cfg.__dict__, "train": train_cfg.__dict__,
                       "graph": graph_cfg.__dict__}, fh, indent=2)
        loss_path = os.path.join(run_dir, "loss.csv")
        if start_epoch == 0 or not os.path.exists(loss_path):
            with open(loss_path, "w", encoding="utf-8", newline="") as fh:
                csv.writer(fh).writerow(["epoch", "L_total", "L_r", "L_d", "L_class"])

    n_items = len(items)
    bs = max(1, train_cfg.batch_size)
    for epoch in range(start_epoch, train_cfg.epochs):
        order = np.random.default_rng([train_cfg.seed, epoch]).permutation(n_items)
        sums = np.zeros(4)
        for lo in range(0, n_items, bs):
            batch = [items[i] for i in order[lo:lo + bs]]
            grads, bk = gradients(params, batch, train_cfg)
            if train_cfg.clip_norm is not None:
                _clip_by_global_norm(grads, train_cfg.clip_norm)
            opt.step(tensors, grads)
            sums += np.asarray([bk.total, bk.l_r, bk.l_d, bk.l_class]) * len(batch)
        mean = sums / n_items
        history.append(LossBreakdown(*(float(v) for v in mean)))
        if loss_path is not None:
            with open(loss_path, "a", encoding="utf-8", newline="") as fh:
                csv.writer(fh).writerow([epoch + 1] + [f"{v:.10g}" for v in mean])
        if ckpt_dir is not None and (
                (epoch + 1) % max(1, train_cfg.checkpoint_every) == 0
                or epoch + 1 == train_cfg.epochs):
            save_checkpoint(os.path.join(ckpt_dir, f"epoch_{epoch + 1:05d}.json"),
                            params, extra={"epoch": epoch + 1, "optimizer": opt.state()})

    quarter = [h.total for h in history[-max(1, len(history) // 4):]]
    if len(quarter) >= 2 and np.mean(np.diff(quarter)) > 0:
        warnings.warn("training loss increased on average over the final quarter "
                      "of epochs", RuntimeWarning, stacklevel=2)
    return FitResult(params=params, history=history)
