"""Factorized substructure-substructure-type scorer and its trainer.

A drug pair ``(p, q)`` under interaction type ``k`` is scored as::

    score = ((e_q A) * (e_p A) * C[k]) . W + bias

where ``e_p`` is the 0/1 fingerprint of drug ``p``, ``A`` (n x R) holds the
substructure embeddings (shared by both substructure axes), ``C`` (f x R) the
interaction-type embeddings and ``W`` (R) the rank-one weights.  Scores are raw
and unbounded; training minimises the summed squared error against 0/1 labels.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import seeding

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"STNN"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class ConfigError(ValueError):
    pass


class CheckpointFormatError(ValueError):
    pass


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, learning_rate: float):
        super().__init__(
            f"loss became non-finite in epoch {epoch} (learning rate {learning_rate:g})"
        )
        self.epoch = epoch
        self.learning_rate = learning_rate


@dataclass
class TrainConfig:
    rank: int = 400
    learning_rate: float = 0.01
    epochs: int = 100
    batch_size: int = 1024
    init_scale: float = 1.0
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    negative_ratio: float = 1.0

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigError(f"rank must be >= 1, got {self.rank}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch size must be >= 1, got {self.batch_size}")
        if self.init_scale < 0:
            raise ConfigError(f"init scale must be >= 0, got {self.init_scale}")
        if not self.negative_ratio > 0:
            raise ConfigError(f"negative ratio must be > 0, got {self.negative_ratio}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


@dataclass
class FactorModel:
    A: np.ndarray
    C: np.ndarray
    W_lambda: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.C = np.asarray(self.C, dtype=np.float64)
        self.W_lambda = np.asarray(self.W_lambda, dtype=np.float64)
        self.bias = float(self.bias)
        if self.A.ndim != 2 or self.C.ndim != 2 or self.W_lambda.ndim != 1:
            raise ConfigError("A and C must be matrices and W_lambda a vector")
        R = self.W_lambda.shape[0]
        if self.A.shape[1] != R or self.C.shape[1] != R:
            raise ConfigError(
                f"rank mismatch: A {self.A.shape}, C {self.C.shape}, W {self.W_lambda.shape}"
            )

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def f(self) -> int:
        return self.C.shape[0]

    @property
    def rank(self) -> int:
        return self.W_lambda.shape[0]

    def copy(self) -> "FactorModel":
        return FactorModel(self.A.copy(), self.C.copy(), self.W_lambda.copy(), self.bias)

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.A))
            and np.all(np.isfinite(self.C))
            and np.all(np.isfinite(self.W_lambda))
            and np.isfinite(self.bias)
        )


@dataclass
class Gradients:
    dA: np.ndarray
    dC: np.ndarray
    dW: np.ndarray
    dbias: float


@dataclass
class TrainReport:
    loss_history: list = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1][1] if self.loss_history else float("nan")

    def to_dict(self) -> dict:
        return {
            "loss_history": [{"epoch": e, "loss": l} for e, l in self.loss_history],
            "final_loss": self.final_loss if self.loss_history else None,
        }


def init_model(n: int, f: int, cfg: TrainConfig) -> FactorModel:
    if n < 1 or f < 1:
        raise ConfigError(f"model dims must be positive, got n={n}, f={f}")
    R = cfg.rank
    rng = seeding.stream(cfg.seed, seeding.INIT)
    bound = cfg.init_scale / np.sqrt(R)
    A = rng.uniform(-bound, bound, size=(n, R))
    C = rng.uniform(-bound, bound, size=(f, R))
    return FactorModel(A, C, np.full(R, 1.0 / np.sqrt(R)), 0.0)


def _check_bits(model: FactorModel, fp) -> np.ndarray:
    bits = np.asarray(fp, dtype=np.int64).reshape(-1)
    if bits.size and (bits.min() < 0 or bits.max() >= model.n):
        raise IndexError(f"substructure index out of range for n={model.n}: {bits.tolist()}")
    return bits


def drug_embedding(model: FactorModel, fp) -> np.ndarray:
    """Sum of the rows of ``A`` selected by the fingerprint bits (``e^T A``)."""
    bits = _check_bits(model, fp)
    return model.A[bits].sum(axis=0)


def _check_type(model: FactorModel, k) -> None:
    k = np.asarray(k)
    if k.size and (k.min() < 0 or k.max() >= model.f):
        raise IndexError(f"type index out of range for f={model.f}")


def score(model: FactorModel, fp_p, fp_q, k: int) -> float:
    _check_type(model, k)
    u = drug_embedding(model, fp_q)
    v = drug_embedding(model, fp_p)
    z = u * v * model.C[k]
    return float(np.dot(z, model.W_lambda) + model.bias)


def fingerprint_matrix(fps: Sequence, n: int) -> np.ndarray:
    """Dense ``len(fps) x n`` 0/1 float matrix; rows are drug fingerprints."""
    if isinstance(fps, np.ndarray) and fps.ndim == 2:
        if fps.shape[1] != n:
            raise IndexError(f"fingerprint matrix has {fps.shape[1]} columns, model has n={n}")
        return np.asarray(fps, dtype=np.float64)
    X = np.zeros((len(fps), n))
    for row, fp in enumerate(fps):
        bits = np.asarray(fp, dtype=np.int64)
        if bits.size and (bits.min() < 0 or bits.max() >= n):
            raise IndexError(f"fingerprint {row} has an index out of range for n={n}")
        X[row, bits] = 1.0
    return X


def embeddings(model: FactorModel, X: np.ndarray) -> np.ndarray:
    return X @ model.A


def _as_batch(batch) -> np.ndarray:
    arr = np.asarray(batch, dtype=np.int64)
    if arr.size == 0:
        raise ValueError("batch must contain at least one triple")
    if arr.ndim != 2 or arr.shape[1] not in (3, 4):
        raise ValueError(f"batch must be (N, 4) rows of p, q, k, label; got shape {arr.shape}")
    return arr


def score_triples(model: FactorModel, fps, triples) -> np.ndarray:
    """Scores for rows ``(p, q, k[, label])`` against a fingerprint table."""
    t = _as_batch(triples)
    E = embeddings(model, fingerprint_matrix(fps, model.n))
    _check_type(model, t[:, 2])
    return _scores_from_embeddings(model, E, t)


def _scores_from_embeddings(model, E, t):
    z = E[t[:, 1]] * E[t[:, 0]] * model.C[t[:, 2]]
    return z @ model.W_lambda + model.bias


def _labels(t: np.ndarray) -> np.ndarray:
    if t.shape[1] != 4:
        raise ValueError("labelled triples need four columns (p, q, k, label)")
    y = t[:, 3]
    if np.any((y != 0) & (y != 1)):
        raise ValueError("labels must be 0 or 1")
    return y.astype(np.float64)


def loss_batch(model: FactorModel, batch, fps) -> float:
    t = _as_batch(batch)
    y = _labels(t)
    s = score_triples(model, fps, t)
    return float(np.sum((y - s) ** 2))


def _grad(model, X, E, t, y):
    p, q, k = t[:, 0], t[:, 1], t[:, 2]
    u, v, w = E[q], E[p], model.C[k]
    s = (u * v * w) @ model.W_lambda + model.bias
    g = 2.0 * (s - y)
    W = model.W_lambda
    gW = g[:, None] * W
    dW = g @ (u * v * w)
    dC = np.zeros_like(model.C)
    np.add.at(dC, k, gW * u * v)
    # A = B, so each drug side contributes to the same substructure rows
    G = np.zeros((X.shape[0], model.rank))
    np.add.at(G, q, gW * v * w)
    np.add.at(G, p, gW * u * w)
    dA = X.T @ G
    return Gradients(dA, dC, dW, float(g.sum())), s


def grad_batch(model: FactorModel, batch, fps) -> Gradients:
    """Gradient of :func:`loss_batch`, summed over the batch."""
    t = _as_batch(batch)
    y = _labels(t)
    _check_type(model, t[:, 2])
    X = fingerprint_matrix(fps, model.n)
    grads, _ = _grad(model, X, X @ model.A, t, y)
    return grads


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, model: FactorModel, grads: Gradients):
        model.A -= self.lr * grads.dA
        model.C -= self.lr * grads.dC
        model.W_lambda -= self.lr * grads.dW
        model.bias -= self.lr * grads.dbias


class Adam:
    def __init__(self, model: FactorModel, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m = [np.zeros_like(x) for x in self._params(model)]
        self.v = [np.zeros_like(x) for x in self._params(model)]

    @staticmethod
    def _params(model):
        # bias is carried as a 1-element array so all parameters update alike
        return [model.A, model.C, model.W_lambda, np.array([model.bias])]

    def step(self, model: FactorModel, grads: Gradients):
        self.t += 1
        b1, b2 = self.b1, self.b2
        params = self._params(model)
        gs = [grads.dA, grads.dC, grads.dW, np.array([grads.dbias])]
        for i, (param, g) in enumerate(zip(params, gs)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1**self.t)
            v_hat = self.v[i] / (1 - b2**self.t)
            param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        model.bias = float(params[3][0])


def train(dataset, train_triples, cfg: TrainConfig):
    """Fit a fresh model on labelled triples ``(p, q, k, label)``.

    ``dataset`` supplies ``n``, ``f`` and ``fingerprints``.  Each epoch visits
    the triples in a seeded random order in mini-batches of ``cfg.batch_size``;
    every step follows the gradient of the batch-mean squared error.
    """
    t = _as_batch(train_triples)
    y = _labels(t)
    model = init_model(dataset.n, dataset.f, cfg)
    _check_type(model, t[:, 2])
    X = fingerprint_matrix(dataset.fingerprints, dataset.n)
    if t[:, :2].max() >= X.shape[0] or t[:, :2].min() < 0:
        raise IndexError("triple references an unknown drug")
    if cfg.optimizer == "adam":
        opt = Adam(model, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon)
    else:
        opt = SGD(cfg.learning_rate)
    rng = seeding.stream(cfg.seed, seeding.SHUFFLE)
    report = TrainReport()
    N = len(t)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(N)
        total = 0.0
        for start in range(0, N, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            grads, s = _grad(model, X, X @ model.A, t[idx], y[idx])
            total += float(np.sum((y[idx] - s) ** 2))
            scale = 1.0 / len(idx)
            grads.dA *= scale
            grads.dC *= scale
            grads.dW *= scale
            grads.dbias *= scale
            opt.step(model, grads)
        mean_loss = total / N
        if not np.isfinite(mean_loss) or not model.is_finite():
            raise TrainingDivergedError(epoch, cfg.learning_rate)
        report.loss_history.append((epoch, mean_loss))
        log.debug("epoch %d loss %.6f", epoch, mean_loss)
    return model, report


def save_model(model: FactorModel, path) -> None:
    buf = bytearray(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, model.n, model.f, model.rank))
    for arr in (model.A, model.C, model.W_lambda, np.array([model.bias])):
        buf += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(buf))


def checkpoint_size(n: int, f: int, rank: int) -> int:
    return _HEADER.size + 8 * (n * rank + f * rank + rank + 1)


def load_model(path) -> FactorModel:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointFormatError(f"{path}: file too short for a checkpoint header")
    magic, version, n, f, R = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}")
    if n < 1 or f < 1 or R < 1:
        raise CheckpointFormatError(f"{path}: degenerate dims n={n} f={f} R={R}")
    if len(data) != checkpoint_size(n, f, R):
        raise CheckpointFormatError(
            f"{path}: expected {checkpoint_size(n, f, R)} bytes for n={n} f={f} R={R}, "
            f"found {len(data)}"
        )
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    a_end = n * R
    c_end = a_end + f * R
    return FactorModel(
        values[:a_end].reshape(n, R),
        values[a_end:c_end].reshape(f, R),
        values[c_end:c_end + R].copy(),
        float(values[-1]),
    )

