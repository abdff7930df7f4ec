"""Datasets, TSV ingestion, negative sampling, fold splitters, planted data.

Positive interactions are unordered: a triple ``(p, q, k)`` is always stored
with ``p < q``.  Labelled triples travel as ``(N, 4)`` int arrays with columns
``p, q, k, label``.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import seeding
from .model import FactorModel, fingerprint_matrix, score_triples

log = logging.getLogger(__name__)

PUBCHEM_BITS = 881
_NBITS_RE = re.compile(r"^#\s*n_bits\s*=\s*(\d+)\s*$")


class IngestionError(ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


class SamplingExhaustedError(RuntimeError):
    pass


class SplitError(ValueError):
    pass


class LabeledTriple(NamedTuple):
    p: int
    q: int
    k: int
    label: int


def make_fingerprint(bits, n: int) -> tuple[int, ...]:
    """Sorted, de-duplicated tuple of substructure indices, bounds-checked."""
    out = tuple(sorted({int(b) for b in bits}))
    if out and (out[0] < 0 or out[-1] >= n):
        raise IndexError(f"substructure index out of range [0, {n}): {out}")
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    n: int
    drug_ids: tuple
    fingerprints: tuple
    type_ids: tuple
    positives: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "drug_ids", tuple(self.drug_ids))
        object.__setattr__(self, "type_ids", tuple(self.type_ids))
        object.__setattr__(
            self, "fingerprints", tuple(make_fingerprint(fp, self.n) for fp in self.fingerprints)
        )
        if len(self.fingerprints) != len(self.drug_ids):
            raise ValueError("one fingerprint per drug is required")
        pos = np.asarray(self.positives, dtype=np.int64).reshape(-1, 3)
        if len(pos):
            if np.any(pos[:, 0] >= pos[:, 1]):
                raise ValueError("positive triples must be canonical (p < q, no self pairs)")
            if pos[:, 0].min() < 0 or pos[:, 1].max() >= self.m:
                raise ValueError("positive triple references an unknown drug")
            if pos[:, 2].min() < 0 or pos[:, 2].max() >= self.f:
                raise ValueError("positive triple references an unknown type")
        keys = self.encode(pos)
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        if np.any(keys[1:] == keys[:-1]):
            raise ValueError("duplicate positive triples")
        pos = pos[order]
        pos.setflags(write=False)
        keys.setflags(write=False)
        object.__setattr__(self, "positives", pos)
        object.__setattr__(self, "_keys", keys)

    @property
    def m(self) -> int:
        return len(self.drug_ids)

    @property
    def f(self) -> int:
        return len(self.type_ids)

    @property
    def positive_keys(self) -> np.ndarray:
        """Sorted integer codes of the positive triples."""
        return self._keys

    def encode(self, triples) -> np.ndarray:
        t = np.asarray(triples, dtype=np.int64)
        if t.size == 0:
            return np.zeros(0, dtype=np.int64)
        t = t.reshape(-1, t.shape[-1])
        return (t[:, 0] * self.m + t[:, 1]) * self.f + t[:, 2]

    def is_positive(self, triples) -> np.ndarray:
        return np.isin(self.encode(triples), self._keys)

    def fingerprint_matrix(self) -> np.ndarray:
        return fingerprint_matrix(self.fingerprints, self.n)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.n == other.n
            and self.drug_ids == other.drug_ids
            and self.fingerprints == other.fingerprints
            and self.type_ids == other.type_ids
            and np.array_equal(self.positives, other.positives)
        )


@dataclass
class FoldSplit:
    task: str
    fold_index: int
    train: np.ndarray
    test: np.ndarray
    new_drugs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    skipped: bool = False


def _count(ratio: float, n: int) -> int:
    # round first so 0.1 * 90 style products do not creep past an integer
    return math.ceil(round(ratio * n, 9))


def labelled(triples: np.ndarray, label: int) -> np.ndarray:
    t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return np.column_stack([t, np.full(len(t), label, dtype=np.int64)])


# --------------------------------------------------------------------------- #
# File formats
# --------------------------------------------------------------------------- #
def _lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            yield lineno, raw.rstrip("\r\n")


def read_n_bits(path) -> int | None:
    """Universe size from a leading ``# n_bits=N`` comment, if present."""
    for _, line in _lines(path):
        if not line.startswith("#"):
            return None
        m = _NBITS_RE.match(line)
        if m:
            return int(m.group(1))
    return None


def load_fingerprints(path, n: int | None = None):
    """Read ``drug_id<TAB>i,j,k`` lines; returns ``(drug_ids, fingerprints)``."""
    if n is None:
        n = read_n_bits(path) or PUBCHEM_BITS
    drug_ids, fps, seen = [], [], set()
    dup_bits = 0
    for lineno, line in _lines(path):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise IngestionError(path, lineno, "expected 'drug_id<TAB>bit,bit,...'")
        drug, field_ = parts
        if drug in seen:
            raise IngestionError(path, lineno, f"duplicate drug id {drug!r}")
        try:
            bits = [int(tok) for tok in field_.split(",") if tok.strip()]
        except ValueError:
            raise IngestionError(path, lineno, f"non-integer bit index in {field_!r}") from None
        bad = [b for b in bits if not 0 <= b < n]
        if bad:
            raise IngestionError(path, lineno, f"bit index {bad[0]} outside [0, {n})")
        unique = sorted(set(bits))
        dup_bits += len(bits) - len(unique)
        seen.add(drug)
        drug_ids.append(drug)
        fps.append(tuple(unique))
    if dup_bits:
        log.warning("%s: dropped %d duplicate bit indices", path, dup_bits)
    return drug_ids, fps


def load_types(path) -> list[str]:
    types = []
    for lineno, line in _lines(path):
        tid = line.strip()
        if not tid:
            raise IngestionError(path, lineno, "empty type id")
        if tid in types:
            raise IngestionError(path, lineno, f"duplicate type id {tid!r}")
        types.append(tid)
    return types


def load_triples(path, drug_ids, type_ids) -> np.ndarray:
    """Positive triples as a sorted ``(P, 3)`` array with ``p < q``."""
    drug_index = {d: i for i, d in enumerate(drug_ids)}
    type_index = {t: i for i, t in enumerate(type_ids)}
    rows = []
    for lineno, line in _lines(path):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise IngestionError(path, lineno, "expected 'drug_a<TAB>drug_b<TAB>type'")
        a, b, t = parts
        for ident in (a, b):
            if ident not in drug_index:
                raise IngestionError(path, lineno, f"unknown drug id {ident!r}")
        if t not in type_index:
            raise IngestionError(path, lineno, f"unknown type id {t!r}")
        p, q = drug_index[a], drug_index[b]
        if p == q:
            raise IngestionError(path, lineno, f"self pair {a!r}")
        rows.append((min(p, q), max(p, q), type_index[t]))
    arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
    uniq = np.unique(arr, axis=0)
    if len(uniq) < len(arr):
        log.warning("%s: collapsed %d duplicate triples", path, len(arr) - len(uniq))
    return uniq


def load_dataset(fingerprints_path, triples_path, types_path, n: int | None = None) -> Dataset:
    if n is None:
        n = read_n_bits(fingerprints_path) or PUBCHEM_BITS
    drug_ids, fps = load_fingerprints(fingerprints_path, n)
    type_ids = load_types(types_path)
    pos = load_triples(triples_path, drug_ids, type_ids)
    return Dataset(n, drug_ids, fps, type_ids, pos)


def write_fingerprints(path, dataset: Dataset) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# n_bits={dataset.n}\n")
        for drug, fp in zip(dataset.drug_ids, dataset.fingerprints):
            fh.write(f"{drug}\t{','.join(map(str, fp))}\n")


def write_types(path, dataset: Dataset) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tid in dataset.type_ids:
            fh.write(f"{tid}\n")


def write_triples(path, dataset: Dataset) -> None:
    d, t = dataset.drug_ids, dataset.type_ids
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p, q, k in dataset.positives:
            fh.write(f"{d[p]}\t{d[q]}\t{t[k]}\n")


# --------------------------------------------------------------------------- #
# Negative sampling
# --------------------------------------------------------------------------- #
def _scope(dataset, drugs_a, drugs_b):
    a = np.arange(dataset.m) if drugs_a is None else np.unique(np.asarray(drugs_a, dtype=np.int64))
    b = a if drugs_b is None else np.unique(np.asarray(drugs_b, dtype=np.int64))
    same = np.array_equal(a, b)
    if not same and np.intersect1d(a, b).size:
        raise ValueError("drug groups must be identical or disjoint")
    if same:
        n_pairs = len(a) * (len(a) - 1) // 2
    else:
        n_pairs = len(a) * len(b)
    return a, b, same, n_pairs


def _in_scope(dataset, keys, a, b, same):
    f, m = dataset.f, dataset.m
    pair = keys // f
    p, q = pair // m, pair % m
    in_a = np.zeros(m, bool)
    in_a[a] = True
    in_b = np.zeros(m, bool)
    in_b[b] = True
    if same:
        return in_a[p] & in_a[q]
    return (in_a[p] & in_b[q]) | (in_b[p] & in_a[q])


def sample_negatives(dataset: Dataset, positives_in_scope, ratio: float, seed,
                     drugs_a=None, drugs_b=None, exclude=None) -> np.ndarray:
    """Uniformly sample ``ceil(ratio * len(positives_in_scope))`` negatives.

    Candidates are canonical triples whose pair is drawn from ``drugs_a``
    (pairs within the group) or from ``drugs_a x drugs_b`` (disjoint groups);
    no dataset positive and no key in ``exclude`` is ever returned.  ``seed``
    is an int or a ``numpy.random.Generator``.  Returns labelled rows.
    """
    if not ratio > 0:
        raise ValueError("ratio must be positive")
    count = _count(ratio, len(positives_in_scope))
    rng = seed if isinstance(seed, np.random.Generator) else seeding.stream(seed, seeding.NEG_TRAIN)
    a, b, same, n_pairs = _scope(dataset, drugs_a, drugs_b)
    forbidden = dataset.positive_keys
    if exclude is not None and len(exclude):
        forbidden = np.union1d(forbidden, np.asarray(exclude, dtype=np.int64))
    blocked = int(_in_scope(dataset, forbidden, a, b, same).sum())
    available = n_pairs * dataset.f - blocked
    if count > available:
        raise SamplingExhaustedError(
            f"requested {count} negatives but only {available} non-positive triples are in scope"
        )
    if count == 0:
        return labelled(np.zeros((0, 3), np.int64), 0)
    if count * 4 > available:
        keys = _enumerate_scope(dataset, a, b, same)
        keys = keys[~np.isin(keys, forbidden)]
        chosen = rng.choice(keys, size=count, replace=False)
    else:
        chosen = _rejection(dataset, rng, a, b, forbidden, count)
    chosen = np.sort(chosen)
    f, m = dataset.f, dataset.m
    pair = chosen // f
    return labelled(np.column_stack([pair // m, pair % m, chosen % f]), 0)


def _enumerate_scope(dataset, a, b, same):
    if same:
        i, j = np.triu_indices(len(a), 1)
        p, q = a[i], a[j]
    else:
        p, q = np.repeat(a, len(b)), np.tile(b, len(a))
        p, q = np.minimum(p, q), np.maximum(p, q)
    pair = p * dataset.m + q
    return (pair[:, None] * dataset.f + np.arange(dataset.f)).reshape(-1)


def _rejection(dataset, rng, a, b, forbidden, count):
    got = np.zeros(0, dtype=np.int64)
    while len(got) < count:
        draw = 2 * (count - len(got)) + 16
        p = rng.choice(a, size=draw)
        q = rng.choice(b, size=draw)
        k = rng.integers(0, dataset.f, size=draw)
        ok = p != q
        p, q, k = np.minimum(p, q)[ok], np.maximum(p, q)[ok], k[ok]
        keys = (p * dataset.m + q) * dataset.f + k
        keys = keys[~np.isin(keys, forbidden) & ~np.isin(keys, got)]
        _, first = np.unique(keys, return_index=True)
        keys = keys[np.sort(first)]
        got = np.concatenate([got, keys[: count - len(got)]])
    return got


# --------------------------------------------------------------------------- #
# Cross-validation splits
# --------------------------------------------------------------------------- #
def split_c1(dataset: Dataset, folds: int = 10, seed: int = 0, neg_ratio: float = 1.0):
    """Transductive folds: positive triples partitioned into ``folds`` parts."""
    P = len(dataset.positives)
    if folds < 2:
        raise SplitError("at least two folds are required")
    if P < folds:
        raise SplitError(f"{P} positive triples cannot fill {folds} folds")
    perm = seeding.stream(seed, seeding.SPLIT).permutation(P)
    parts = np.array_split(perm, folds)
    out = []
    for i, part in enumerate(parts):
        test_pos = dataset.positives[np.sort(part)]
        train_pos = dataset.positives[np.sort(np.concatenate(parts[:i] + parts[i + 1:]))]
        train_neg = sample_negatives(
            dataset, train_pos, neg_ratio, seeding.stream(seed, seeding.NEG_TRAIN, i)
        )
        test_neg = sample_negatives(
            dataset, test_pos, 1.0, seeding.stream(seed, seeding.NEG_TEST, i),
            exclude=dataset.encode(train_neg[:, :3]),
        )
        out.append(FoldSplit(
            "C1", i,
            np.concatenate([labelled(train_pos, 1), train_neg]),
            np.concatenate([labelled(test_pos, 1), test_neg]),
        ))
    return out


def drug_partition(m: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded partition of drug indices shared by the C2 and C3 splitters."""
    perm = seeding.stream(seed, seeding.SPLIT).permutation(m)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def split_by_drug(dataset: Dataset, folds: int = 10, seed: int = 0, task: str = "C2",
                  neg_ratio: float = 1.0):
    """Inductive folds: each fold's drug part plays the new drugs.

    Training keeps only triples among known drugs.  The C2 test set holds the
    triples with exactly one new drug, C3 those with two.  A fold without any
    such positive is returned with ``skipped=True`` and empty test data.
    """
    task = task.upper()
    if task not in ("C2", "C3"):
        raise SplitError(f"unknown inductive task {task!r}")
    if folds < 2:
        raise SplitError("at least two folds are required")
    if dataset.m < folds:
        raise SplitError(f"{dataset.m} drugs cannot fill {folds} folds")
    pos = dataset.positives
    out = []
    for i, new in enumerate(drug_partition(dataset.m, folds, seed)):
        is_new = np.zeros(dataset.m, bool)
        is_new[new] = True
        n_new = is_new[pos[:, 0]].astype(int) + is_new[pos[:, 1]]
        known = np.flatnonzero(~is_new)
        train_pos = pos[n_new == 0]
        test_pos = pos[n_new == (1 if task == "C2" else 2)]
        if len(train_pos) == 0:
            raise SplitError(f"fold {i} has no training positives among known drugs")
        train_neg = sample_negatives(
            dataset, train_pos, neg_ratio, seeding.stream(seed, seeding.NEG_TRAIN, i),
            drugs_a=known,
        )
        train = np.concatenate([labelled(train_pos, 1), train_neg])
        if len(test_pos) == 0:
            log.warning("%s fold %d has no test positives; skipping it", task, i)
            out.append(FoldSplit(task, i, train, labelled(np.zeros((0, 3)), 1), new, True))
            continue
        test_neg = sample_negatives(
            dataset, test_pos, 1.0, seeding.stream(seed, seeding.NEG_TEST, i),
            drugs_a=new, drugs_b=known if task == "C2" else None,
        )
        out.append(FoldSplit(
            task, i, train, np.concatenate([labelled(test_pos, 1), test_neg]), new,
        ))
    return out


def split(dataset: Dataset, task: str, folds: int = 10, seed: int = 0, neg_ratio: float = 1.0):
    task = task.upper()
    if task == "C1":
        return split_c1(dataset, folds, seed, neg_ratio)
    return split_by_drug(dataset, folds, seed, task, neg_ratio)


# --------------------------------------------------------------------------- #
# Planted synthetic data
# --------------------------------------------------------------------------- #
def _planted_fingerprints(rng, n, m):
    lo, hi = min(3, n), min(12, n)
    fps, seen = [], set()
    for _ in range(m):
        for _attempt in range(100):
            size = int(rng.integers(lo, hi + 1))
            fp = tuple(sorted(int(b) for b in rng.choice(n, size=size, replace=False)))
            if fp not in seen:
                break
        seen.add(fp)
        fps.append(fp)
    return fps


def generate_planted(n: int, m: int, f: int, rank: int, density: float, seed: int = 0):
    """Synthetic dataset labelled by a random ground-truth model.

    Every canonical triple is scored by the planted model and the top
    ``ceil(density * total)`` become positives.  Returns ``(dataset, model)``.
    """
    from .model import ConfigError

    if min(n, f, rank) < 1 or m < 2:
        raise ConfigError(f"degenerate planted dims n={n} m={m} f={f} rank={rank}")
    if not 0 < density < 1:
        raise ConfigError(f"density must lie in (0, 1), got {density}")
    rng = seeding.stream(seed, seeding.PLANTED)
    fps = _planted_fingerprints(rng, n, m)
    planted = FactorModel(
        rng.standard_normal((n, rank)),
        rng.standard_normal((f, rank)),
        np.ones(rank),
        0.0,
    )
    p, q = np.triu_indices(m, 1)
    k = np.tile(np.arange(f), len(p))
    triples = np.column_stack([np.repeat(p, f), np.repeat(q, f), k])
    scores = score_triples(planted, fps, triples)
    count = _count(density, len(triples))
    # descending score, ties resolved by triple order
    top = np.lexsort((np.arange(len(triples)), -scores))[:count]
    dataset = Dataset(
        n,
        [f"D{i}" for i in range(m)],
        fps,
        [f"T{i}" for i in range(f)],
        triples[np.sort(top)],
    )
    return dataset, planted
