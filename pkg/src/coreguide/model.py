"""Weighted GCN core predictor with hand-derived gradients.

Per formula the forward pass is::

    H0    = X @ W_init + b_init                         X = (degree, type) per node
    H_l+1 = relu([A' @ H_l, flip(H_l)] @ W_out_l + b_out_l)
    u_i   = [H_L[i], H_L[partner_i]]                     one row per variable
    z_i   = relu(u_i @ W1 + b1) @ W2 + b2                2 logits (not-core, core)
    p_i   = softmax(z_i)[1]

All arithmetic is float64.
"""

from __future__ import annotations

import json
import logging
import struct
import time
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .cnf import Cnf
from .graph import Encoded, encode

log = logging.getLogger(__name__)

EPS = 1e-7
MAGIC = b"IBNW"
FORMAT_VERSION = 1


class NumericalOverflow(FloatingPointError):
    def __init__(self, tensor: str):
        super().__init__(f"non-finite values in {tensor}")
        self.tensor = tensor


class CheckpointError(ValueError):
    pass


class BadMagic(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class TruncatedCheckpoint(CheckpointError):
    pass


class ShapeMismatch(CheckpointError):
    pass


@dataclass
class ModelConfig:
    d: int = 32
    L: int = 3
    hidden: int = 64
    shared_weights: bool = False
    alpha: float = 0.25
    gamma: float = 2.0
    lr: float = 1e-3
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    loss_kind: str = "focal"  # focal | cross_entropy | kl
    target_kind: str = "core"  # core | satisfiability
    pairing: str = "half"  # half | mirror
    graph: str = "wlig"  # wlig | lcg
    norm: str = "global"  # global | row
    degree: str = "weighted"  # weighted | simple
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.d < 1 or self.L < 1 or self.hidden < 1:
            raise ValueError("d, L and hidden must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.loss_kind not in ("focal", "cross_entropy", "kl"):
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")
        if self.target_kind not in ("core", "satisfiability"):
            raise ValueError(f"unknown target_kind {self.target_kind!r}")
        if self.pairing not in ("half", "mirror"):
            raise ValueError(f"unknown pairing {self.pairing!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def layer_names(self) -> list[int]:
        return [0] if self.shared_weights else list(range(self.L))


Params = dict  # name -> np.ndarray, insertion order is the canonical tensor order


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    d2, d4 = 2 * cfg.d, 4 * cfg.d
    shapes = {"W_init": (2, d2), "b_init": (d2,)}
    for l in cfg.layer_names():
        shapes[f"W_out.{l}"] = (d4, d2)
        shapes[f"b_out.{l}"] = (d2,)
    shapes.update({"W1": (d4, cfg.hidden), "b1": (cfg.hidden,), "W2": (cfg.hidden, 2), "b2": (2,)})
    return shapes


def init_params(cfg: ModelConfig, seed: int | None = None) -> Params:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    params: Params = {}
    for name, shape in param_shapes(cfg).items():
        if len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            lim = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-lim, lim, size=shape)
    return params


def _w_out(params: Params, cfg: ModelConfig, l: int) -> tuple[str, str]:
    k = 0 if cfg.shared_weights else l
    return f"W_out.{k}", f"b_out.{k}"


# ------------------------------------------------------------------- forward


def embed_nodes(params: Params, features: np.ndarray) -> np.ndarray:
    # non-finite results are reported by the caller, not as numpy warnings
    with np.errstate(invalid="ignore", over="ignore"):
        return np.asarray(features, dtype=np.float64) @ params["W_init"] + params["b_init"]


def flip(H: np.ndarray) -> np.ndarray:
    """Swap the first and second halves of the rows."""
    N = H.shape[0]
    if N % 2:
        raise ValueError(f"flip needs an even number of rows, got {N}")
    h = N // 2
    return np.concatenate([H[h:], H[:h]], axis=0)


def _gather(H: np.ndarray, partner: np.ndarray) -> np.ndarray:
    out = np.zeros_like(H)
    has = partner >= 0
    out[has] = H[partner[has]]
    return out


def _scatter(G: np.ndarray, partner: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`_gather` (partner is injective on its support)."""
    out = np.zeros_like(G)
    has = partner >= 0
    out[partner[has]] = G[has]
    return out


def head_pairs(n_vars: int, num_nodes: int, pairing: str = "half") -> tuple[np.ndarray, np.ndarray]:
    """Row indices of the two literal embeddings concatenated for each variable."""
    pos = np.arange(n_vars)
    if pairing == "half":
        return pos, pos + n_vars
    if pairing == "mirror":
        return pos, 2 * n_vars - 1 - pos
    raise ValueError(f"unknown pairing {pairing!r}")


def wgcn_forward(params: Params, adj, H0: np.ndarray, cfg: ModelConfig, partner: np.ndarray | None = None,
                 cache: list | None = None) -> np.ndarray:
    N = H0.shape[0]
    if adj.shape != (N, N):
        raise ValueError(f"adjacency shape {adj.shape} does not match {N} nodes")
    if H0.shape[1] != 2 * cfg.d:
        raise ValueError(f"embedding width {H0.shape[1]} != 2d = {2 * cfg.d}")
    H = H0
    for l in range(cfg.L):
        wn, bn = _w_out(params, cfg, l)
        F = flip(H) if partner is None else _gather(H, partner)
        C = np.concatenate([adj @ H, F], axis=1)
        Z = C @ params[wn] + params[bn]
        if cache is not None:
            cache.append((C, Z))
        H = np.maximum(Z, 0.0)
    return H


@dataclass
class Prediction:
    probs: np.ndarray  # P(core) per variable
    wall_ms: float = 0.0

    @property
    def not_core(self) -> np.ndarray:
        return 1.0 - self.probs

    def __len__(self) -> int:
        return len(self.probs)


def head_logits(params: Params, HL: np.ndarray, n_vars: int, pairing: str = "half", cache: dict | None = None):
    a_idx, b_idx = head_pairs(n_vars, HL.shape[0], pairing)
    U = np.concatenate([HL[a_idx], HL[b_idx]], axis=1)
    A1 = U @ params["W1"] + params["b1"]
    R = np.maximum(A1, 0.0)
    z = R @ params["W2"] + params["b2"]
    if cache is not None:
        cache.update(U=U, A1=A1, R=R, a_idx=a_idx, b_idx=b_idx)
    return z


def softmax_core(z: np.ndarray) -> np.ndarray:
    """P(class 1) of a 2-way softmax over the last axis."""
    return expit(z[..., 1] - z[..., 0])


def head_forward(params: Params, HL: np.ndarray, n_vars: int, pairing: str = "half") -> Prediction:
    return Prediction(softmax_core(head_logits(params, HL, n_vars, pairing)))


# --------------------------------------------------------------------- losses


def _clamp(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pc = np.clip(p, EPS, 1 - EPS)
    return pc, (p >= EPS) & (p <= 1 - EPS)


def _check_lengths(p, y):
    if len(p) != len(y):
        raise ValueError(f"prediction length {len(p)} != label length {len(y)}")


def focal_loss(p, y, alpha: float, gamma: float) -> tuple[float, np.ndarray]:
    """Summed focal loss and its gradient with respect to ``p``."""
    p = np.asarray(getattr(p, "probs", p), dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_lengths(p, y)
    pc, inside = _clamp(p)
    q = 1.0 - pc
    lp, lq = np.log(pc), np.log(q)
    pos = -alpha * q**gamma * lp
    neg = -(1 - alpha) * pc**gamma * lq
    loss = float(np.sum(y * pos + (1 - y) * neg))
    # gamma * x**(gamma-1) is written as gamma * x**gamma / x so gamma=0 stays finite
    dpos = alpha * gamma * q**gamma / q * lp - alpha * q**gamma / pc
    dneg = -(1 - alpha) * (gamma * pc**gamma / pc * lq - pc**gamma / q)
    grad = (y * dpos + (1 - y) * dneg) * inside
    return loss, grad


def cross_entropy_loss(p, y) -> tuple[float, np.ndarray]:
    p = np.asarray(getattr(p, "probs", p), dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_lengths(p, y)
    pc, inside = _clamp(p)
    loss = float(-np.sum(y * np.log(pc) + (1 - y) * np.log(1 - pc)))
    grad = (-y / pc + (1 - y) / (1 - pc)) * inside
    return loss, grad


def kl_loss(p, y) -> tuple[float, np.ndarray]:
    """KL(target || prediction) summed over variables, target = (1-y, y) clamped to [eps, 1-eps]."""
    p = np.asarray(getattr(p, "probs", p), dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_lengths(p, y)
    pc, inside = _clamp(p)
    t = np.clip(y, EPS, 1 - EPS)
    loss = float(np.sum(t * (np.log(t) - np.log(pc)) + (1 - t) * (np.log(1 - t) - np.log(1 - pc))))
    grad = (-t / pc + (1 - t) / (1 - pc)) * inside
    return loss, grad


def loss_and_grad(p, y, cfg: ModelConfig) -> tuple[float, np.ndarray]:
    if cfg.loss_kind == "focal":
        return focal_loss(p, y, cfg.alpha, cfg.gamma)
    if cfg.loss_kind == "cross_entropy":
        return cross_entropy_loss(p, y)
    return kl_loss(p, y)


# ------------------------------------------------------------------- backward


@dataclass
class Sample:
    enc: Encoded
    labels: np.ndarray  # per-variable 0/1 core labels
    graph_label: float | None = None  # 1 = UNSAT, for target_kind="satisfiability"
    name: str = ""


def _finite(name: str, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericalOverflow(name)


def forward_backward(params: Params, sample: Sample, cfg: ModelConfig) -> tuple[float, Params]:
    enc = sample.enc
    n = enc.n_vars
    X = enc.features
    H0 = embed_nodes(params, X)
    _finite("H0", H0)
    layers: list = []
    HL = wgcn_forward(params, enc.adj, H0, cfg, enc.partner, cache=layers)
    _finite("H_L", HL)
    hc: dict = {}
    z = head_logits(params, HL, n, cfg.pairing, cache=hc)
    _finite("logits", z)

    if cfg.target_kind == "core":
        p = softmax_core(z)
        loss, dp = loss_and_grad(p, sample.labels, cfg)
        s = dp * p * (1 - p)
        dz = np.column_stack([-s, s])
    else:
        if sample.graph_label is None:
            raise ValueError(f"sample {sample.name!r} lacks a graph label")
        zg = z.mean(axis=0)
        pg = softmax_core(zg)
        loss, dp = loss_and_grad(np.array([pg]), np.array([sample.graph_label]), cfg)
        s = dp[0] * pg * (1 - pg)
        dz = np.tile(np.array([-s, s]) / n, (n, 1))
    if not np.isfinite(loss):
        raise NumericalOverflow("loss")

    grads: Params = {k: np.zeros_like(v) for k, v in params.items()}
    grads["W2"] = hc["R"].T @ dz
    grads["b2"] = dz.sum(axis=0)
    dA1 = (dz @ params["W2"].T) * (hc["A1"] > 0)
    grads["W1"] = hc["U"].T @ dA1
    grads["b1"] = dA1.sum(axis=0)
    dU = dA1 @ params["W1"].T
    w = 2 * cfg.d
    dH = np.zeros_like(HL)
    np.add.at(dH, hc["a_idx"], dU[:, :w])
    np.add.at(dH, hc["b_idx"], dU[:, w:])

    adjT = enc.adj.T
    for l in reversed(range(cfg.L)):
        C, Z = layers[l]
        wn, bn = _w_out(params, cfg, l)
        dZ = dH * (Z > 0)
        grads[wn] += C.T @ dZ
        grads[bn] += dZ.sum(axis=0)
        dC = dZ @ params[wn].T
        dH = adjT @ dC[:, :w] + _scatter(dC[:, w:], enc.partner)
    grads["W_init"] = X.T @ dH
    grads["b_init"] = dH.sum(axis=0)
    for k, g in grads.items():
        _finite(f"grad {k}", g)
    return loss, grads


def instance_loss(params: Params, sample: Sample, cfg: ModelConfig) -> float:
    enc = sample.enc
    HL = wgcn_forward(params, enc.adj, embed_nodes(params, enc.features), cfg, enc.partner)
    z = head_logits(params, HL, enc.n_vars, cfg.pairing)
    if cfg.target_kind == "core":
        return loss_and_grad(softmax_core(z), sample.labels, cfg)[0]
    pg = softmax_core(z.mean(axis=0))
    return loss_and_grad(np.array([pg]), np.array([sample.graph_label]), cfg)[0]


def finite_difference_grads(params: Params, sample: Sample, cfg: ModelConfig, step: float = 1e-4) -> Params:
    """Central differences of :func:`instance_loss`, one coordinate at a time."""
    out: Params = {}
    for name, P in params.items():
        g = np.zeros_like(P)
        flat, gflat = P.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + step
            up = instance_loss(params, sample, cfg)
            flat[k] = old - step
            down = instance_loss(params, sample, cfg)
            flat[k] = old
            gflat[k] = (up - down) / (2 * step)
        out[name] = g
    return out


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - b| scaled by the larger of the two tensors' max magnitudes."""
    scale = max(np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0), floor)
    return float(np.max(np.abs(a - b), initial=0.0) / scale)


# ------------------------------------------------------------------- training


class Adam:
    def __init__(self, params: Params, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: Params, grads: Params) -> None:
        if self.lr == 0:
            return
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1 - b1**self.t, 1 - b2**self.t
        for k in params:
            self.m[k] = b1 * self.m[k] + (1 - b1) * grads[k]
            self.v[k] = b2 * self.v[k] + (1 - b2) * grads[k] ** 2
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


def split_validation(n: int, frac: float, seed: int) -> tuple[list[int], list[int]]:
    if n < 2 or frac <= 0:
        idx = list(range(n))
        return idx, idx
    order = np.random.default_rng(seed + 7919).permutation(n).tolist()
    k = min(max(1, int(round(frac * n))), n - 1)
    return sorted(order[k:]), sorted(order[:k])


def train(dataset: Sequence[Sample], cfg: ModelConfig, params: Params | None = None,
          progress=None) -> tuple[Params, list[EpochRecord]]:
    """Mini-batch Adam; returns the parameters with the best validation loss."""
    if not dataset:
        raise ValueError("empty dataset")
    if cfg.target_kind == "core" and cfg.loss_kind == "focal" and not any(np.any(s.labels > 0) for s in dataset):
        warnings.warn("dataset has no positive labels", RuntimeWarning, stacklevel=2)
    params = init_params(cfg) if params is None else {k: v.copy() for k, v in params.items()}
    tr_idx, va_idx = split_validation(len(dataset), cfg.val_fraction, cfg.seed)
    opt = Adam(params, cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    best = {k: v.copy() for k, v in params.items()}
    best_val = np.inf
    history: list[EpochRecord] = []
    bs = max(1, cfg.batch_size)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(tr_idx))
        total = 0.0
        for start in range(0, len(order), bs):
            batch = [dataset[tr_idx[i]] for i in order[start:start + bs]]
            acc = {k: np.zeros_like(v) for k, v in params.items()}
            for s in batch:
                loss, g = forward_backward(params, s, cfg)
                total += loss
                for k in acc:
                    acc[k] += g[k]
            for k in acc:
                acc[k] /= len(batch)
            opt.step(params, acc)
        val = float(np.mean([instance_loss(params, dataset[i], cfg) for i in va_idx]))
        rec = EpochRecord(epoch, total / len(tr_idx), val)
        history.append(rec)
        if val < best_val:
            best_val = val
            best = {k: v.copy() for k, v in params.items()}
        if progress is not None:
            progress(rec)
        log.debug("epoch %d train %.6f val %.6f", epoch, rec.train_loss, rec.val_loss)
    return best, history


# ------------------------------------------------------------------ inference


def predict_encoded(params: Params, cfg: ModelConfig, enc: Encoded) -> np.ndarray:
    if enc.edgeless:
        return np.full(enc.n_vars, 0.5)
    HL = wgcn_forward(params, enc.adj, embed_nodes(params, enc.features), cfg, enc.partner)
    return softmax_core(head_logits(params, HL, enc.n_vars, cfg.pairing))


def predict(params: Params, cfg: ModelConfig, cnf: Cnf) -> Prediction:
    t0 = time.perf_counter()
    enc = encode(cnf, cfg.graph, cfg.norm, cfg.degree)
    if enc.edgeless:
        log.info("%s: edgeless graph, predicting 0.5 for every variable", cnf.name or "instance")
    probs = predict_encoded(params, cfg, enc)
    return Prediction(probs, wall_ms=(time.perf_counter() - t0) * 1000.0)


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(params: Params, cfg: ModelConfig, path) -> None:
    blob = cfg.to_json().encode("utf-8")
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", len(blob)), blob]
    for name, arr in params.items():
        nb = name.encode("utf-8")
        a = np.ascontiguousarray(arr, dtype="<f8")
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, k: int, what: str) -> bytes:
        if self.pos + k > len(self.data):
            raise TruncatedCheckpoint(f"truncated while reading {what}")
        out = self.data[self.pos:self.pos + k]
        self.pos += k
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    @property
    def done(self) -> bool:
        return self.pos >= len(self.data)


def load_checkpoint(path, expect: ModelConfig | None = None) -> tuple[Params, ModelConfig]:
    r = _Reader(Path(path).read_bytes())
    if r.take(4, "magic") != MAGIC:
        raise BadMagic(f"{path}: not a checkpoint")
    (version,) = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    (blen,) = r.unpack("<I", "config length")
    cfg = ModelConfig.from_dict(json.loads(r.take(blen, "config").decode("utf-8")))
    params: Params = {}
    while not r.done:
        (nlen,) = r.unpack("<H", "name length")
        name = r.take(nlen, "name").decode("utf-8")
        (rank,) = r.unpack("<B", f"{name} rank")
        shape = r.unpack(f"<{rank}I", f"{name} dims") if rank else ()
        count = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(r.take(8 * count, f"{name} payload"), dtype="<f8").astype(np.float64).reshape(shape)
        params[name] = arr
    want = param_shapes(expect if expect is not None else cfg)
    if set(want) != set(params):
        raise ShapeMismatch(f"tensor names {sorted(params)} do not match config {sorted(want)}")
    for name, shape in want.items():
        if params[name].shape != shape:
            raise ShapeMismatch(f"{name}: stored {params[name].shape}, config implies {shape}")
    return {k: params[k] for k in param_shapes(cfg)}, cfg
