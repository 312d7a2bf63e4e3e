"""Two-layer graph-convolutional autoencoder with a hand-written backward pass.

Encoder: ``Z = W · (relu(W · X · W0)) · W1`` where ``W`` is the aggregation
operator (motif weights or the symmetric renormalized adjacency). Decoder:
``sigmoid(z_i · z_j)``. Training minimizes weighted binary cross-entropy
against ``A + I``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .graph import Graph
from .motif import agg_weights, identity_weights, motif_matrix

log = logging.getLogger(__name__)

MODES = ("motif", "symnorm")
DENSE_DECODE_LIMIT = 5000


@dataclass
class TrainConfig:
    hidden1: int = 32
    hidden2: int = 16
    epochs: int = 200
    learning_rate: float = 0.01
    seed: int = 0
    mode: str = "motif"
    negative_sampling: bool = False
    optimizer: str = "adam"

    def __post_init__(self):
        if self.hidden1 < 1 or self.hidden2 < 1:
            raise ValueError("hidden sizes must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class GcnParams:
    W0: np.ndarray
    W1: np.ndarray
    init_seed: int | None = None

    @classmethod
    def glorot(cls, in_dim: int, hidden1: int, hidden2: int, seed: int) -> "GcnParams":
        rng = np.random.default_rng(seed)

        def uniform(fan_in, fan_out):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        return cls(uniform(in_dim, hidden1), uniform(hidden1, hidden2), seed)


@dataclass
class Embedding:
    values: np.ndarray
    mode: str
    training_meta: dict = field(default_factory=dict)

    @property
    def node_count(self) -> int:
        return self.values.shape[0]


def aggregation_operator(g: Graph, mode: str) -> sp.csr_matrix:
    if mode == "motif":
        return agg_weights(motif_matrix(g), g)
    if mode == "symnorm":
        return identity_weights(g)
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _input_dim(g: Graph, x: np.ndarray | None) -> int:
    return g.node_count if x is None else x.shape[1]


def _check_shapes(g: Graph, x, w, p: GcnParams) -> None:
    n = g.node_count
    if w.shape != (n, n):
        raise ValueError(f"aggregation operator has shape {w.shape}, expected {(n, n)}")
    if x is not None and x.shape[0] != n:
        raise ValueError(f"feature matrix has {x.shape[0]} rows, graph has {n} nodes")
    if p.W0.shape[0] != _input_dim(g, x):
        raise ValueError(f"W0 has {p.W0.shape[0]} rows, input dim is {_input_dim(g, x)}")
    if p.W1.shape[0] != p.W0.shape[1]:
        raise ValueError(f"W1 has {p.W1.shape[0]} rows, W0 has {p.W0.shape[1]} columns")


def _encode(x, w, p: GcnParams):
    # featureless: X is the identity, so X @ W0 is W0 itself
    h0 = p.W0 if x is None else x @ p.W0
    pre1 = w @ h0
    z1 = np.maximum(pre1, 0.0)
    z = w @ (z1 @ p.W1)
    return pre1, z1, z


def forward(g: Graph, x: np.ndarray | None, w: sp.spmatrix, p: GcnParams, mode: str = "motif") -> Embedding:
    _check_shapes(g, x, w, p)
    return Embedding(_encode(x, w, p)[2], mode)


class InnerProductDecoder:
    """Edge probabilities ``sigmoid(z_i · z_j)`` computed on demand."""

    def __init__(self, z):
        self.z = z.values if isinstance(z, Embedding) else np.asarray(z, dtype=np.float64)

    def logits(self, i, j):
        return np.einsum("...d,...d->...", self.z[i], self.z[j])

    def __call__(self, i, j):
        return expit(self.logits(i, j))

    def dense(self) -> np.ndarray:
        n = self.z.shape[0]
        if n > DENSE_DECODE_LIMIT:
            raise MemoryError(f"refusing to materialize a {n}x{n} probability matrix")
        return expit(self.z @ self.z.T)


def decode(z) -> InnerProductDecoder:
    return InnerProductDecoder(z)


@dataclass(frozen=True)
class PairSample:
    """Ordered (row, col) pairs with 0/1 targets for sampled reconstruction loss."""

    rows: np.ndarray
    cols: np.ndarray
    targets: np.ndarray


def _positive_keys(g: Graph) -> np.ndarray:
    n = g.node_count
    rows = np.repeat(np.arange(n), g.degrees())
    keys = np.concatenate([rows * n + g.indices, np.arange(n) * (n + 1)])
    return np.sort(keys)


def sample_pairs(g: Graph, rng: np.random.Generator) -> PairSample:
    """All positives of A + I plus an equal number of uniformly drawn non-edges."""
    n = g.node_count
    pos = _positive_keys(g)
    n_neg_avail = n * n - len(pos)
    want = len(pos) if n_neg_avail > 0 else 0
    neg = np.empty(0, dtype=np.int64)
    while len(neg) < want:
        cand = rng.integers(0, n * n, size=2 * (want - len(neg)) + 16)
        idx = np.searchsorted(pos, cand)
        idx[idx == len(pos)] = 0
        cand = cand[pos[idx] != cand]
        neg = np.concatenate([neg, cand[: want - len(neg)]])
    keys = np.concatenate([pos, neg])
    targets = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    return PairSample(keys // n, keys % n, targets)


def _pos_weight(n: int, n_pos: int) -> float:
    n_neg = n * n - n_pos
    return n_neg / n_pos if n_neg > 0 else 1.0


def _dense_targets(g: Graph) -> np.ndarray:
    y = g.adjacency.toarray()
    np.fill_diagonal(y, 1.0)
    return y


def _softplus(s):
    return np.maximum(s, 0.0) + np.log1p(np.exp(-np.abs(s)))


def _softplus_sigmoid(s):
    """softplus(s) and sigmoid(s) sharing one exp."""
    e = np.exp(-np.abs(s))
    inv = 1.0 / (1.0 + e)
    sig = np.where(s >= 0, inv, e * inv)
    return np.maximum(s, 0.0) + np.log1p(e), sig


class _DenseTargets:
    """A + I with its per-entry BCE weights, built once per training run."""

    def __init__(self, g: Graph):
        n = g.node_count
        self.y = _dense_targets(g)
        pw = _pos_weight(n, 2 * g.edge_count + n)
        self.pos = pw * self.y
        self.weight = self.pos + 1.0 - self.y
        self.count = n * n


def _dense_loss_grad(t: _DenseTargets, z: np.ndarray, need_grad: bool = True):
    s = z @ z.T
    sp_s, sig = _softplus_sigmoid(s)
    # -[pw*y*log(sig(s)) + (1-y)*log(1-sig(s))], using softplus(-s) = softplus(s) - s
    loss = float((t.weight * sp_s - t.pos * s).sum() / t.count)
    if not need_grad:
        return loss, None
    dlds = (sig * t.weight - t.pos) / t.count
    # s = z z^T and dlds is symmetric
    return loss, 2.0 * (dlds @ z)


def _sampled_loss_grad(z: np.ndarray, sample: PairSample, need_grad: bool = True):
    s = np.einsum("ij,ij->i", z[sample.rows], z[sample.cols])
    y = sample.targets
    m = len(y)
    if m == 0:
        return 0.0, np.zeros_like(z) if need_grad else None
    loss = float(np.mean(y * _softplus(-s) + (1.0 - y) * _softplus(s)))
    if not need_grad:
        return loss, None
    gs = (expit(s) - y) / m
    n = z.shape[0]
    gmat = sp.csr_matrix((gs, (sample.rows, sample.cols)), shape=(n, n))
    return loss, gmat @ z + gmat.T @ z


def loss(g: Graph, z, sample: PairSample | None = None) -> float:
    """Reconstruction loss of embedding ``z`` against ``A + I``.

    Without ``sample`` this is the positive-weighted BCE averaged over all
    N^2 ordered entries; with one, the plain mean BCE over the sampled pairs.
    """
    z = z.values if isinstance(z, Embedding) else np.asarray(z, dtype=np.float64)
    if sample is None:
        return _dense_loss_grad(_DenseTargets(g), z, need_grad=False)[0]
    return _sampled_loss_grad(z, sample, need_grad=False)[0]


def loss_and_grad(g: Graph, x, w, p: GcnParams, sample: PairSample | None = None, _targets=None):
    """Loss plus analytic gradients with respect to ``W0`` and ``W1``."""
    pre1, z1, z = _encode(x, w, p)
    if sample is None:
        value, dz = _dense_loss_grad(_targets or _DenseTargets(g), z)
    else:
        value, dz = _sampled_loss_grad(z, sample)
    wt = w.T.tocsr()
    dh1 = wt @ dz
    dW1 = z1.T @ dh1
    dpre1 = (dh1 @ p.W1.T) * (pre1 > 0)
    dh0 = wt @ dpre1
    dW0 = dh0 if x is None else x.T @ dh0
    return value, dW0, dW1


class _Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] = []
        self.v: list[np.ndarray] = []

    def step(self, params, grads):
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, gr, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * gr
            v *= self.b2
            v += (1.0 - self.b2) * gr * gr
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(g: Graph, x: np.ndarray | None, w: sp.spmatrix, cfg: TrainConfig) -> Embedding:
    """Full-batch training from a Glorot init seeded by ``cfg.seed``."""
    n = g.node_count
    p = GcnParams.glorot(_input_dim(g, x), cfg.hidden1, cfg.hidden2, cfg.seed)
    _check_shapes(g, x, w, p)
    w = w.tocsr()
    sampled = cfg.negative_sampling
    if not sampled and n > DENSE_DECODE_LIMIT:
        log.warning("N=%d exceeds the dense decoding limit (%d); switching to negative sampling",
                    n, DENSE_DECODE_LIMIT)
        sampled = True
    rng = np.random.default_rng([cfg.seed, 1])
    opt = _Adam(cfg.learning_rate) if cfg.optimizer == "adam" else None
    targets = None if sampled else _DenseTargets(g)
    history = []
    sample = None
    for epoch in range(cfg.epochs):
        if sampled:
            sample = sample_pairs(g, rng)
        value, dW0, dW1 = loss_and_grad(g, x, w, p, sample, targets)
        if not np.isfinite(value):
            raise FloatingPointError(
                f"non-finite loss {value} at epoch {epoch} (mode={cfg.mode}, lr={cfg.learning_rate})")
        history.append(value)
        if opt is None:
            p.W0 -= cfg.learning_rate * dW0
            p.W1 -= cfg.learning_rate * dW1
        else:
            opt.step([p.W0, p.W1], [dW0, dW1])
    z = _encode(x, w, p)[2]
    if sampled:
        final = _sampled_loss_grad(z, sample, need_grad=False)[0]
    else:
        final = _dense_loss_grad(targets, z, need_grad=False)[0]
    if not np.isfinite(final) or not np.all(np.isfinite(z)):
        raise FloatingPointError(f"training diverged: final loss {final}")
    meta = {
        "epochs": cfg.epochs,
        "initial_loss": history[0],
        "final_loss": final,
        "negative_sampling": sampled,
        "optimizer": cfg.optimizer,
        "seed": cfg.seed,
    }
    return Embedding(z, cfg.mode, meta)


def embed_graph(g: Graph, cfg: TrainConfig, x: np.ndarray | None = None) -> Embedding:
    return train(g, x, aggregation_operator(g, cfg.mode), cfg)


def write_embedding(z: Embedding, path: str | Path) -> None:
    vals = z.values
    header = ",".join(["node"] + [f"d{i}" for i in range(vals.shape[1])])
    table = np.column_stack([np.arange(vals.shape[0]), vals])
    fmt = ["%d"] + ["%.17g"] * vals.shape[1]
    np.savetxt(path, table, fmt=fmt, delimiter=",", header=header, comments="")


def read_embedding(path: str | Path, mode: str = "unknown") -> Embedding:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "node":
        raise ValueError(f"{path}: expected header starting with 'node'")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    dims = len(header) - 1
    if table.size == 0:
        return Embedding(np.zeros((0, dims)), mode)
    order = table[:, 0].astype(np.int64)
    if not np.array_equal(np.sort(order), np.arange(len(order))):
        raise ValueError(f"{path}: node column must cover 0..N-1 exactly once")
    vals = np.empty((len(order), dims))
    vals[order] = table[:, 1:]
    return Embedding(vals, mode)
