"""V-statistic prefix series, the maximal statistic and the combined bound.

``V_k(f_p)`` sums a level-``p`` evaluator over all ``p``-tuples of indices
up to ``k``.  The naive path enumerates tuples; the feature path uses
partial sums of centered bases, ``V_k = sum_u W_u prod_l S[k, J_ul]``,
which is exact for tensor components and costs ``O(n K)``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NumericError, ResourceError, ValidationError
from .mixing import SamplePath

NAIVE_MAX_TUPLES = 10 ** 8
NAIVE_MAX_P = 3
TABLE_MAX_ENTRIES = 2 * 10 ** 8
_CHUNK = 2_000_000


def _as_path(path):
    return path if isinstance(path, SamplePath) else SamplePath(path)


@dataclass
class VStatSeries:
    """``V_1..V_n`` for one level ``p``."""

    values: np.ndarray
    p: int
    mode: str

    @property
    def n(self):
        return self.values.size

    def scaled(self):
        return np.abs(self.values) / float(self.n) ** self.p

    def to_csv(self, fh, header=()):
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "V_k", "scaled_abs", "running_max"])
        sc = self.scaled()
        run = np.maximum.accumulate(sc)
        for k, (v, s, r) in enumerate(zip(self.values, sc, run), start=1):
            w.writerow([k, repr(float(v)), repr(float(s)), repr(float(r))])


@dataclass
class PartialSumTable:
    """``S[k-1, j] = sum_{i <= k} e~_j(X_i)`` and ``Z_j = max_k |S[k, j]|``."""

    S: np.ndarray
    increments: np.ndarray = field(repr=False)

    @property
    def Z(self):
        return np.max(np.abs(self.S), axis=0)


@dataclass(frozen=True)
class MaximalStatistic:
    value: float
    argmax: int
    p: int
    n: int


def _arity(f):
    return int(getattr(f, "p", getattr(f, "m", 0)))


def v_naive(f, path, p=None, max_tuples=NAIVE_MAX_TUPLES):
    """Enumerate every ``p``-tuple; each tuple is credited to the prefix of
    its largest index, then prefix sums give ``V_k`` for all ``k``."""
    path = _as_path(path)
    p = _arity(f) if p is None else int(p)
    if p != _arity(f):
        raise ValidationError(f"evaluator takes {_arity(f)} arguments, not p={p}", "p")
    n = path.n
    if p > NAIVE_MAX_P or float(n) ** p > max_tuples:
        raise ResourceError(f"naive enumeration of {n}^{p} tuples exceeds the cap; "
                            "use feature mode (v_features)")
    X = path.points
    per_max = np.zeros(n)
    if p == 1:
        per_max = np.asarray(f(X), dtype=float).reshape(n)
    else:
        rows = max(1, _CHUNK // n ** (p - 1))
        grids = np.indices((n,) * (p - 1)).reshape(p - 1, -1)
        for lo in range(0, n, rows):
            hi = min(n, lo + rows)
            first = np.arange(lo, hi)
            idx = [np.repeat(first, grids.shape[1])] + [np.tile(g, hi - lo) for g in grids]
            vals = np.asarray(f(*[X[i] for i in idx]), dtype=float).ravel()
            top = np.maximum.reduce(idx)
            per_max += np.bincount(top, weights=vals, minlength=n)
    return VStatSeries(np.cumsum(per_max), p, "naive")


def partial_sums(comp, path):
    """Partial-sum table of centered bases along the path."""
    path = _as_path(path)
    size = float(path.n) * comp.exp.n_bases
    if size > TABLE_MAX_ENTRIES:
        raise ResourceError(f"partial-sum table of {size:.3g} entries exceeds the cap; "
                            "reduce n or the feature count")
    inc = comp.centered_bases(path.points)
    return PartialSumTable(np.cumsum(inc, axis=0), inc)


def v_features(comp, path, table=None):
    """Feature-mode series for a tensor component, plus its partial sums."""
    if not hasattr(comp, "J"):
        raise ValidationError("feature mode needs a tensor component")
    table = table or partial_sums(comp, path)
    S = table.S
    n = S.shape[0]
    out = np.empty(n)
    U = len(comp.W)
    diagonal = comp.p == 2 and np.array_equal(comp.J[:, 0], comp.J[:, 1])
    step = max(1, _CHUNK // max(1, U))
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        first = S[lo:hi, comp.J[:, 0]]
        if diagonal:
            prod = first * first
        else:
            prod = first
            for l in range(1, comp.p):
                prod = prod * S[lo:hi, comp.J[:, l]]
        out[lo:hi] = prod @ comp.W
    return VStatSeries(out, comp.p, "features"), table


def vstat_series(comp, path, mode="auto"):
    if mode == "features" or (mode == "auto" and hasattr(comp, "J")):
        return v_features(comp, path)[0]
    return v_naive(comp, path)


def u_naive(f, path, m=None):
    """Sum of ``f`` over ordered tuples of distinct indices."""
    path = _as_path(path)
    m = _arity(f) if m is None else int(m)
    n = path.n
    if n < m:
        raise ValidationError(f"U-statistic of order {m} needs n >= {m}", "n")
    if m > NAIVE_MAX_P or float(n) ** m > NAIVE_MAX_TUPLES:
        raise ResourceError("U-statistic enumeration exceeds the cap")
    X = path.points
    total = 0.0
    for first in range(n):
        rest = np.indices((n,) * (m - 1)).reshape(m - 1, -1)
        idx = [np.full(rest.shape[1], first)] + list(rest)
        keep = np.ones(rest.shape[1], dtype=bool)
        for a, b in itertools.combinations(range(m), 2):
            keep &= idx[a] != idx[b]
        if not keep.any():
            continue
        idx = [i[keep] for i in idx]
        total += float(np.sum(f(*[X[i] for i in idx])))
    return total


def maximal_statistic(series, n=None, p=None):
    """``T_p = n^{-p} max_k |V_k|``."""
    n = series.n if n is None else int(n)
    p = series.p if p is None else int(p)
    if series.n != n:
        raise ValidationError("series length must equal n", "n")
    absv = np.abs(series.values)
    k = int(np.argmax(absv))
    return MaximalStatistic(float(absv[k]) / float(n) ** p, k + 1, p, n)


@dataclass
class CombinedResult:
    statistic: float
    bound: float
    T: dict
    r: int
    direct: Optional[float] = None

    def to_dict(self):
        return {"statistic": self.statistic, "bound": self.bound, "r": self.r,
                "T": {str(k): v for k, v in self.T.items()}, "direct": self.direct}


def combined_centered_vstat(decomp, path, m=None, r=None, kernel=None, mode="auto"):
    """``n^{-m} max_k |sum_{i <= k} (f - theta)|`` and its bound
    ``sum_{p >= r} C(m, p) T_p``.

    The centered sum is assembled from the components as
    ``sum_p C(m, p) k^{m-p} V_k(f_p)``, keeping levels ``p >= r``.  When
    ``kernel`` is given the direct enumeration is reported as well.
    """
    path = _as_path(path)
    m = decomp.m if m is None else int(m)
    r = decomp.r if r is None else int(r)
    n = path.n
    k = np.arange(1, n + 1, dtype=float)
    total = np.zeros(n)
    T = {}
    for comp in decomp.components:
        if comp.p < r:
            continue
        series = vstat_series(comp, path, mode)
        T[comp.p] = maximal_statistic(series).value
        total += math.comb(m, comp.p) * k ** (m - comp.p) * series.values
    stat = float(np.max(np.abs(total))) / float(n) ** m
    bound = float(sum(math.comb(m, p) * t for p, t in T.items()))
    if stat > bound * (1.0 + 1e-12) + 1e-300:
        raise NumericError("combined statistic exceeds its bound", residual=stat - bound)
    direct = None
    if kernel is not None:
        v = v_naive(kernel, path).values - k ** m * decomp.theta.value
        direct = float(np.max(np.abs(v))) / float(n) ** m
    return CombinedResult(stat, bound, T, r, direct)
