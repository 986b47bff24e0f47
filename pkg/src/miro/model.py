"""The recurrent graph network.

Linear encoders lift node and edge features to a latent space; a single
recurrent block is applied K times, refining hidden edge then node states;
shared linear decoders read a 2D displacement (and class logits in
multiclass mode) from the hidden node state after every step. The forward
pass depends only on graph features, never on absolute coordinates, so it
is exactly invariant to translations of the input cloud.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._kernels import segment_sum
from .graph import LocGraph

__all__ = [
    "ModelConfig",
    "ModelParams",
    "StepOutputs",
    "init_params",
    "forward",
    "collapse",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture settings.

    ``n_steps`` is the number of recurrent block applications (K).
    ``k_star`` splits the steps for multiscale training: steps before it
    target the fine scale, the rest the coarse scale; None = single scale.
    ``n_classes`` = 0 disables the classification decoder.
    """

    latent_dim: int = 256
    n_steps: int = 8
    n_classes: int = 0
    n_eigs: int = 5
    k_star: Optional[int] = None

    def __post_init__(self):
        if self.latent_dim < 1 or self.n_steps < 1 or self.n_eigs < 1:
            raise ValueError("latent_dim, n_steps and n_eigs must be >= 1")
        if self.n_classes < 0:
            raise ValueError("n_classes must be >= 0")
        if self.k_star is not None and not 1 <= self.k_star < self.n_steps:
            raise ValueError("k_star must satisfy 1 <= k_star < n_steps")


@dataclass
class ModelParams:
    """All learnable weights. phi consumes [u~_i, u~_j, f~_ij] = 6*latent."""

    node_w: np.ndarray   # (latent, n_eigs)
    node_b: np.ndarray   # (latent,)
    edge_w: np.ndarray   # (latent, 3)
    edge_b: np.ndarray
    phi_w: np.ndarray    # (latent, 6*latent)
    phi_b: np.ndarray
    psi_w: np.ndarray    # (latent, latent)
    psi_b: np.ndarray
    disp_w: np.ndarray   # (2, latent)
    disp_b: np.ndarray
    class_w: Optional[np.ndarray] = None  # (n_classes, latent)
    class_b: Optional[np.ndarray] = None
    config: ModelConfig = field(default_factory=ModelConfig)

    def tensors(self) -> dict[str, np.ndarray]:
        out = {
            "node_w": self.node_w, "node_b": self.node_b,
            "edge_w": self.edge_w, "edge_b": self.edge_b,
            "phi_w": self.phi_w, "phi_b": self.phi_b,
            "psi_w": self.psi_w, "psi_b": self.psi_b,
            "disp_w": self.disp_w, "disp_b": self.disp_b,
        }
        if self.class_w is not None:
            out["class_w"] = self.class_w
            out["class_b"] = self.class_b
        return out

    def copy(self) -> "ModelParams":
        t = {k: v.copy() for k, v in self.tensors().items()}
        return ModelParams(config=self.config, **t)

    def validate(self) -> None:
        cfg = self.config
        L = cfg.latent_dim
        expected = {
            "node_w": (L, cfg.n_eigs), "node_b": (L,),
            "edge_w": (L, 3), "edge_b": (L,),
            "phi_w": (L, 6 * L), "phi_b": (L,),
            "psi_w": (L, L), "psi_b": (L,),
            "disp_w": (2, L), "disp_b": (2,),
        }
        if cfg.n_classes > 0:
            expected["class_w"] = (cfg.n_classes, L)
            expected["class_b"] = (cfg.n_classes,)
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr is None or arr.shape != shape:
                raise ValueError(f"parameter {name} has shape "
                                 f"{None if arr is None else arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name} contains non-finite values")


@dataclass(frozen=True)
class StepOutputs:
    """Per-step decoded outputs: displacements in nm, optional class logits."""

    displacements: np.ndarray            # (K, n, 2)
    class_logits: Optional[np.ndarray] = None  # (K, n, n_classes)

    @property
    def n_steps(self) -> int:
        return self.displacements.shape[0]


def init_params(cfg: ModelConfig, seed: int = 0) -> ModelParams:
    """Uniform weights bounded by 1/sqrt(fan_in); zero biases; deterministic."""
    rng = np.random.default_rng(seed)
    L = cfg.latent_dim

    def lin(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray]:
        bound = 1.0 / np.sqrt(n_in)
        return rng.uniform(-bound, bound, size=(n_out, n_in)), np.zeros(n_out)

    node_w, node_b = lin(L, cfg.n_eigs)
    edge_w, edge_b = lin(L, 3)
    phi_w, phi_b = lin(L, 6 * L)
    psi_w, psi_b = lin(L, L)
    disp_w, disp_b = lin(2, L)
    class_w = class_b = None
    if cfg.n_classes > 0:
        class_w, class_b = lin(cfg.n_classes, L)
    params = ModelParams(node_w, node_b, edge_w, edge_b, phi_w, phi_b,
                         psi_w, psi_b, disp_w, disp_b, class_w, class_b, cfg)
    params.validate()
    return params


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def forward(graph: LocGraph, params: ModelParams, record_tape: bool = False):
    """Run the recurrent network over a graph.

    Returns :class:`StepOutputs`; with ``record_tape=True`` returns
    ``(outputs, tape)`` where the tape holds the per-step activations needed
    for the backward pass. Inference overwrites the hidden state in place,
    keeping peak memory independent of the step count.
    """
    cfg = params.config
    n, L, K = graph.n_nodes, cfg.latent_dim, cfg.n_steps
    edges = graph.edges
    src, dst = (edges[:, 0], edges[:, 1]) if edges.shape[0] else (
        np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    if graph.node_feats.shape[1] != cfg.n_eigs:
        raise ValueError(f"graph has {graph.node_feats.shape[1]} node features, "
                         f"model expects {cfg.n_eigs}")

    v_lat = graph.node_feats @ params.node_w.T + params.node_b        # (n, L)
    e_lat = graph.edge_feats @ params.edge_w.T + params.edge_b        # (E, L)
    u = np.zeros((n, L))
    f = np.zeros((len(src), L))
    # the decoder works in span-relative units; outputs are reported in nm
    out_scale = graph.scale

    disp = np.empty((K, n, 2))
    logits = np.empty((K, n, cfg.n_classes)) if cfg.n_classes > 0 else None
    tape = [] if record_tape else None

    for k in range(K):
        x_e = np.concatenate(
            [v_lat[src], u[src], v_lat[dst], u[dst], e_lat, f], axis=1)  # (E, 6L)
        z_f = x_e @ params.phi_w.T + params.phi_b
        f_next = _relu(z_f)
        agg = segment_sum(f_next, dst, n) if len(src) else np.zeros((n, L))
        z_u = agg @ params.psi_w.T + params.psi_b
        u_next = _relu(z_u)
        disp[k] = (u_next @ params.disp_w.T + params.disp_b) * out_scale
        if logits is not None:
            logits[k] = u_next @ params.class_w.T + params.class_b
        if tape is not None:
            tape.append({"u_prev": u, "f_prev": f, "mask_f": z_f > 0,
                         "f_next": f_next, "agg": agg, "mask_u": z_u > 0,
                         "u_next": u_next})
        u, f = u_next, f_next

    outputs = StepOutputs(displacements=disp, class_logits=logits)
    if record_tape:
        return outputs, {"steps": tape, "v_lat": v_lat, "e_lat": e_lat,
                         "src": src, "dst": dst, "out_scale": out_scale}
    return outputs


def collapse(cloud, outputs: StepOutputs, step: int) -> np.ndarray:
    """Coordinates shifted by the displacements of one recurrent step."""
    if not 0 <= step < outputs.n_steps:
        raise ValueError(f"step {step} out of range [0, {outputs.n_steps - 1}]")
    coords = cloud.coords if hasattr(cloud, "coords") else np.asarray(cloud, dtype=np.float64)
    return coords + outputs.displacements[step]


def _fmt(x: float) -> float:
    # 17 significant digits round-trip float64 exactly through JSON text
    return float(f"{x:.17g}")


def save_checkpoint(path, params: ModelParams, extra: Optional[dict] = None) -> None:
    """Write parameters as JSON; float64 values round-trip exactly."""
    cfg = params.config
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config": {
            "latent_dim": cfg.latent_dim, "n_steps": cfg.n_steps,
            "n_classes": cfg.n_classes, "n_eigs": cfg.n_eigs,
            "k_star": cfg.k_star,
        },
        "tensors": {
            name: {"shape": list(arr.shape),
                   "data": [_fmt(v) for v in arr.ravel()]}
            for name, arr in params.tensors().items()
        },
    }
    if extra:
        doc["extra"] = extra
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    """Read a checkpoint; returns (params, extra-dict)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    cfg = ModelConfig(**doc["config"])
    tensors = {name: np.asarray(t["data"], dtype=np.float64).reshape(t["shape"])
               for name, t in doc["tensors"].items()}
    params = ModelParams(config=cfg, **tensors)
    params.validate()
    return params, doc.get("extra", {})
