"""Substructure-pair attributions reconstructed from trained factors.

The reconstructed entry for substructures ``(i, j)`` under type ``k`` is
``sum_r W[r] A[i,r] A[j,r] C[k,r]``.  For a drug pair these entries, summed
over the cross product of the two fingerprints, add up to the score minus the
bias, so ranking them shows which pairs drive a prediction.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .model import FactorModel, score

SHARE_EPS = 1e-12


class SubstructurePairScore(NamedTuple):
    i: int
    j: int
    k: int
    value: float


@dataclass
class Explanation:
    context: dict
    pairs: list
    cumulative_share: float | None = None
    bottom: list = field(default_factory=list)

    def to_dict(self, labels: dict | None = None) -> dict:
        def row(pair):
            out = {"i": pair.i, "j": pair.j, "value": pair.value}
            if labels is not None:
                out["i_label"] = labels.get(pair.i, "")
                out["j_label"] = labels.get(pair.j, "")
            return out

        doc = {
            "context": self.context,
            "pairs": [row(p) for p in self.pairs],
            "cumulative_share": self.cumulative_share,
        }
        if self.bottom:
            doc["bottom"] = [row(p) for p in self.bottom]
        return doc

    def to_json(self, labels: dict | None = None) -> str:
        return json.dumps(self.to_dict(labels), indent=2)


def _check(model: FactorModel, *, k=None, idx=()):
    if k is not None and not 0 <= k < model.f:
        raise IndexError(f"type index {k} out of range for f={model.f}")
    for i in idx:
        if not 0 <= i < model.n:
            raise IndexError(f"substructure index {i} out of range for n={model.n}")


def ssi_value(model: FactorModel, i: int, j: int, k: int) -> float:
    _check(model, k=k, idx=(i, j))
    # A[i] * A[j] first: the product commutes exactly, so (i, j) and (j, i) agree bit for bit
    return float(np.dot(model.A[i] * model.A[j], model.W_lambda * model.C[k]))


def ssi_block(model: FactorModel, rows, cols, k: int) -> np.ndarray:
    """Reconstructed entries for ``rows x cols`` under type ``k``."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    _check(model, k=k, idx=np.concatenate([rows, cols]).tolist())
    weights = model.W_lambda * model.C[k]
    return (model.A[rows] * weights) @ model.A[cols].T


def _rank(rows, cols, values, k, top_k, descending=True):
    ii, jj = np.meshgrid(rows, cols, indexing="ij")
    ii, jj, vals = ii.ravel(), jj.ravel(), values.ravel()
    return _rank_flat(ii, jj, vals, k, top_k, descending)


def _rank_flat(ii, jj, vals, k, top_k, descending=True):
    key = -vals if descending else vals
    order = np.lexsort((jj, ii, key))[:top_k]
    return [SubstructurePairScore(int(ii[o]), int(jj[o]), int(k), float(vals[o])) for o in order]


def top_pairs_for_type(model: FactorModel, k: int, top_k: int = 10, universe=None,
                       bottom_k: int = 0) -> Explanation:
    """Largest reconstructed entries of slice ``k``.

    Without ``universe`` the whole symmetric slice is scanned and each pair is
    reported once with ``i <= j``.  ``universe=(rows, cols)`` restricts the
    scan to ordered pairs from the two index sets.  ``bottom_k`` adds the most
    negative entries as ``Explanation.bottom``.
    """
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    _check(model, k=k)
    if universe is None:
        full = ssi_block(model, np.arange(model.n), np.arange(model.n), k)
        ii, jj = np.triu_indices(model.n)
        vals = full[ii, jj]
        pairs = _rank_flat(ii, jj, vals, k, top_k)
        bottom = _rank_flat(ii, jj, vals, k, bottom_k, descending=False) if bottom_k else []
        context = {"mode": "type-global", "k": int(k)}
    else:
        rows, cols = (np.unique(np.asarray(list(u), dtype=np.int64)) for u in universe)
        if rows.size == 0 or cols.size == 0:
            raise ValueError("universe index sets must be non-empty")
        block = ssi_block(model, rows, cols, k)
        pairs = _rank(rows, cols, block, k, top_k)
        bottom = _rank(rows, cols, block, k, bottom_k, descending=False) if bottom_k else []
        context = {"mode": "type-universe", "k": int(k)}
    return Explanation(context, pairs, None, bottom)


def explain_pair(model: FactorModel, fp_p, fp_q, k: int, top_k: int | None = None,
                 bottom_k: int = 0, context: dict | None = None) -> Explanation:
    """Rank the ``fp_p x fp_q`` substructure pairs of one drug pair under type ``k``.

    ``cumulative_share`` is the listed values' sum over ``score - bias``;
    it is ``None`` when that denominator is numerically zero.
    """
    rows = np.unique(np.asarray(list(fp_p), dtype=np.int64))
    cols = np.unique(np.asarray(list(fp_q), dtype=np.int64))
    if rows.size == 0 or cols.size == 0:
        raise ValueError("both fingerprints must be non-empty")
    if top_k is None:
        top_k = rows.size * cols.size
    if top_k < 1:
        raise ValueError("top_k must be at least 1")
    block = ssi_block(model, rows, cols, k)
    pairs = _rank(rows, cols, block, k, top_k)
    bottom = _rank(rows, cols, block, k, bottom_k, descending=False) if bottom_k else []
    attributable = score(model, rows, cols, k) - model.bias
    share = None
    if abs(attributable) >= SHARE_EPS:
        share = float(sum(p.value for p in pairs) / attributable)
    ctx = {"mode": "drug-pair", "k": int(k)}
    ctx.update(context or {})
    ctx["score"] = attributable + model.bias
    return Explanation(ctx, pairs, share, bottom)


def load_labels(path) -> dict:
    """``index<TAB>description`` lines to a dict; ``#`` lines are skipped."""
    labels = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            idx, _, desc = line.partition("\t")
            try:
                labels[int(idx)] = desc
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad substructure index {idx!r}") from None
    return labels
