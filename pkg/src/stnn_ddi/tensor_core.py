"""Dense 3-order tensor arithmetic.

Small explicit tensors are used as a ground-truth oracle for the factorized
scorer and for reconstructing substructure x substructure x type entries.
Storage is C order over ``(I, J, K)``, so the flat index of ``(i, j, k)`` is
``(i * J + j) * K + k``.

Modes are numbered 1, 2, 3 for the axes ``i``, ``j``, ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_DENSE_ENTRIES = 10**7


class DimensionError(ValueError):
    """Shapes of tensors, factors or vectors do not line up."""


@dataclass(frozen=True)
class DenseTensor3:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise DimensionError(f"expected a 3-order array, got ndim={values.ndim}")
        if min(values.shape) < 1:
            raise DimensionError(f"all dims must be positive, got {values.shape}")
        if values.size > MAX_DENSE_ENTRIES:
            raise DimensionError(
                f"dense tensor with {values.size} entries exceeds the "
                f"{MAX_DENSE_ENTRIES} entry guard"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("tensor values must be finite")
        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    @classmethod
    def from_flat(cls, dims, flat) -> "DenseTensor3":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.ndim != 1 or flat.size != int(np.prod(dims)):
            raise DimensionError(f"{flat.size} values do not fill dims {tuple(dims)}")
        return cls(flat.reshape(tuple(dims)))

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __getitem__(self, idx):
        return self.values[idx]


@dataclass(frozen=True)
class RankOneFactors:
    """Weighted CP factors: ``X[i,j,k] = sum_r lam[r] a[i,r] b[j,r] c[k,r]``."""

    lam: np.ndarray
    a_cols: np.ndarray
    b_cols: np.ndarray
    c_cols: np.ndarray

    def __post_init__(self):
        for name in ("lam", "a_cols", "b_cols", "c_cols"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.lam.ndim != 1:
            raise DimensionError("lambda must be a vector")
        rank = self.lam.shape[0]
        for name in ("a_cols", "b_cols", "c_cols"):
            mat = getattr(self, name)
            if mat.ndim != 2 or mat.shape[1] != rank:
                raise DimensionError(
                    f"{name} has shape {mat.shape}, expected (*, {rank})"
                )

    @property
    def rank(self) -> int:
        return self.lam.shape[0]


def cp_reconstruct(factors: RankOneFactors) -> DenseTensor3:
    f = factors
    dims = (f.a_cols.shape[0], f.b_cols.shape[0], f.c_cols.shape[0])
    if int(np.prod(dims)) > MAX_DENSE_ENTRIES:
        raise DimensionError(f"reconstruction of dims {dims} exceeds the dense guard")
    return DenseTensor3(np.einsum("r,ir,jr,kr->ijk", f.lam, f.a_cols, f.b_cols, f.c_cols))


def mode_product_vec(t, v, mode: int):
    """Contract ``t`` with vector ``v`` along ``mode`` (1-based).

    ``t`` may be a :class:`DenseTensor3` or a plain array of order 1 to 3;
    the result has one order less (a 0-d contraction returns a float).
    """
    arr = t.values if isinstance(t, DenseTensor3) else np.asarray(t, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not 1 <= mode <= arr.ndim:
        raise DimensionError(f"mode {mode} invalid for an order-{arr.ndim} operand")
    axis = mode - 1
    if v.ndim != 1 or v.shape[0] != arr.shape[axis]:
        raise DimensionError(
            f"vector of length {v.shape} cannot contract mode {mode} of size {arr.shape[axis]}"
        )
    out = np.tensordot(arr, v, axes=([axis], [0]))
    return float(out) if out.ndim == 0 else out


def frontal_slice(t: DenseTensor3, k: int) -> np.ndarray:
    K = t.dims[2]
    if not 0 <= k < K:
        raise IndexError(f"slice index {k} out of range for K={K}")
    return np.array(t.values[:, :, k])


def basis(size: int, k: int) -> np.ndarray:
    e = np.zeros(size)
    e[k] = 1.0
    return e


def indicator(bits, size: int) -> np.ndarray:
    """0/1 vector of length ``size`` with ones at ``bits``."""
    e = np.zeros(size)
    e[np.asarray(list(bits), dtype=np.int64)] = 1.0
    return e


def dense_score(t: DenseTensor3, e_p, e_q, k: int) -> float:
    """``sum_ij t[i,j,k] e_p[i] e_q[j]`` via chained mode products.

    The type axis is contracted first with the one-hot ``v_k``, then ``e_p``
    against the first substructure axis and ``e_q`` against what remains.
    ``e_p``/``e_q`` are real vectors of length ``n`` (fingerprint indicators
    in the usual case).
    """
    n1, n2, K = t.dims
    if not 0 <= k < K:
        raise IndexError(f"type index {k} out of range for f={K}")
    st_k = mode_product_vec(t, basis(K, k), 3)
    st_pk = mode_product_vec(st_k, e_p, 1)
    return mode_product_vec(st_pk, e_q, 1)
