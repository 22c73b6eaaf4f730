"""Seeded stationary processes with geometric alpha-mixing.

Each generator starts in its stationary law and documents the mixing
constants ``(gamma1, gamma2)`` with ``alpha(i) <= gamma1 exp(-gamma2 i)``.
Finite-state chains also get an enumeration oracle that lower-bounds
``alpha(i)`` with events on finitely many coordinates.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .errors import UnsupportedKernelError, ValidationError

KINDS = ("iid", "iid-uniform", "ar1", "two-state-chain", "moving-average")
_ALIASES = {"iid-normal": "iid", "normal": "iid", "two-state": "two-state-chain",
            "ma": "moving-average", "uniform": "iid-uniform"}

# substream ids under one master seed
STREAM_PATH = 0
STREAM_FEATURES = 1
STREAM_MARGINAL = 2
STREAM_PILOT = 3


@dataclass(frozen=True)
class SeedSpec:
    """Master seed plus counter-based substreams.

    Stream ``(s, r)`` is ``SeedSequence(master, spawn_key=(s, r))``, so
    replication ``r`` gets the same stream whatever the total count.
    """

    master: int

    def __post_init__(self):
        if not 0 <= int(self.master) < 2 ** 64:
            raise ValidationError("master seed must fit in 64 bits", "seed")

    def sequence(self, stream, r=0):
        return np.random.SeedSequence(int(self.master), spawn_key=(int(stream), int(r)))

    def rng(self, stream, r=0):
        return np.random.default_rng(self.sequence(stream, r))


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class ProcessSpec:
    """A stationary sequence generator.

    Parameters
    ----------
    kind : str
        ``iid`` (standard normal), ``iid-uniform`` (on [-1, 1]), ``ar1``,
        ``two-state-chain`` or ``moving-average``.
    params : dict
        ``rho`` for ar1, ``q`` (flip probability) for the chain, ``order``
        for the moving average.
    d : int
        Coordinates are independent copies of the scalar process.
    clip : float, optional
        Clip coordinates to ``[-clip, clip]``; the fraction of clipped points
        is recorded on the path.
    """

    kind: str = "iid"
    params: dict = field(default_factory=dict)
    d: int = 1
    clip: Optional[float] = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", dict(self.params))
        if kind not in KINDS:
            raise ValidationError(f"unknown process {self.kind!r}", "process")
        if int(self.d) < 1:
            raise ValidationError("dimension must be positive", "d")
        if kind == "ar1":
            rho = float(self.params.get("rho", 0.5))
            if not 0.0 <= rho < 1.0:
                raise ValidationError("ar1 needs rho in [0, 1)", "rho")
            self.params["rho"] = rho
        elif kind == "two-state-chain":
            q = float(self.params.get("q", 0.1))
            if not 0.0 < q < 1.0:
                raise ValidationError("two-state chain needs q in (0, 1)", "q")
            self.params["q"] = q
        elif kind == "moving-average":
            order = int(self.params.get("order", 1))
            if order < 0:
                raise ValidationError("moving-average order must be >= 0", "order")
            self.params["order"] = order
        if self.clip is not None and not float(self.clip) > 0:
            raise ValidationError("clip half-width must be positive", "clip")

    @property
    def marginal(self):
        """Name of the stationary marginal, as understood by hoeffding."""
        return {"iid": "standard-normal", "ar1": "standard-normal",
                "moving-average": "standard-normal", "iid-uniform": "uniform",
                "two-state-chain": "two-point"}[self.kind]

    @property
    def gammas(self):
        """Documented ``(gamma1, gamma2)``; ``gamma2 = inf`` means independent."""
        if self.kind in ("iid", "iid-uniform"):
            return 1.0, math.inf
        if self.kind == "ar1":
            rho = self.params["rho"]
            # Gaussian maximal correlation at lag i is rho^i and bounds alpha(i)
            return 1.0, (math.inf if rho == 0 else -math.log(rho))
        if self.kind == "two-state-chain":
            lam = abs(1.0 - 2.0 * self.params["q"])
            return 1.0, (math.inf if lam == 0 else -math.log(lam))
        # k-dependent: alpha(i) <= 1/4 for i <= k and 0 afterwards
        k = self.params["order"]
        return math.exp(k) / 4.0, 1.0

    @property
    def gamma_source(self):
        return {
            "iid": "independent sequence",
            "iid-uniform": "independent sequence",
            "ar1": "alpha(i) <= maximal correlation rho^i of a Gaussian AR(1)",
            "two-state-chain": "second eigenvalue |1 - 2q| of the transition matrix",
            "moving-average": "order-k dependence with alpha <= 1/4",
        }[self.kind]

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params), "d": int(self.d),
                "clip": self.clip}


@dataclass
class SamplePath:
    """Points ``X_1..X_n`` in ``R^d`` plus generator metadata."""

    points: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValidationError("a path needs at least one point")
        self.points = pts

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def __len__(self):
        return self.n

    def prefix(self, k):
        return SamplePath(self.points[:k], dict(self.meta, n=int(k)))

    def to_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index"] + [f"x{j + 1}" for j in range(self.d)])
        for i, row in enumerate(self.points, start=1):
            w.writerow([i] + [repr(float(v)) for v in row])


def _ar1(rng, n, d, rho):
    eps = rng.standard_normal((n, d))
    x = np.empty((n, d))
    x[0] = eps[0]
    s = math.sqrt(1.0 - rho * rho)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + s * eps[t]
    return x


def _two_state(rng, n, d, q):
    start = rng.integers(0, 2, size=(1, d))
    flips = (rng.uniform(size=(n - 1, d)) < q).astype(np.int64)
    steps = np.concatenate([start, flips], axis=0)
    return (np.cumsum(steps, axis=0) % 2).astype(float)


def _moving_average(rng, n, d, k):
    eps = rng.standard_normal((n + k, d))
    kernel = np.full(k + 1, 1.0 / math.sqrt(k + 1))
    return np.stack([np.convolve(eps[:, j], kernel, mode="valid") for j in range(d)],
                    axis=1)


def generate_path(spec, n, seed):
    """Simulate ``n`` consecutive points of the process from stationarity."""
    n = int(n)
    if n < 1:
        raise ValidationError("path length must be positive", "n")
    rng = _rng(seed)
    d = int(spec.d)
    if spec.kind == "iid":
        x = rng.standard_normal((n, d))
    elif spec.kind == "iid-uniform":
        x = rng.uniform(-1.0, 1.0, size=(n, d))
    elif spec.kind == "ar1":
        x = _ar1(rng, n, d, spec.params["rho"])
    elif spec.kind == "two-state-chain":
        x = _two_state(rng, n, d, spec.params["q"])
    else:
        x = _moving_average(rng, n, d, spec.params["order"])
    meta = {"process": spec.kind, "n": n, "d": d}
    if isinstance(seed, (int, np.integer)):
        meta["seed"] = int(seed)
    if spec.clip is not None:
        c = float(spec.clip)
        outside = np.any(np.abs(x) > c, axis=1)
        meta["clipped_fraction"] = float(outside.mean())
        meta["left_box"] = bool(outside.any())
        x = np.clip(x, -c, c)
    return SamplePath(x, meta)


def clip_for_quantile(spec, level):
    """Box half-width at the two-sided marginal quantile ``level``."""
    if not 0.0 < level < 1.0:
        raise ValidationError("quantile level must lie in (0, 1)", "clip")
    if spec.marginal == "standard-normal":
        return float(stats.norm.ppf(0.5 + level / 2.0))
    return 1.0


# ---------------------------------------------------------------------------
# alpha-mixing oracle


def _block_law(q, i, depth):
    """Joint law of (past block, future block) for the stationary chain.

    Returns an array ``P[a, b]`` over ``2**depth`` past and future outcomes.
    """
    T = np.array([[1.0 - q, q], [q, 1.0 - q]])
    Ti = np.linalg.matrix_power(T, i)
    outcomes = list(itertools.product((0, 1), repeat=depth))

    def path_prob(seq):
        pr = 1.0
        for a, b in zip(seq[:-1], seq[1:]):
            pr *= T[a, b]
        return pr

    P = np.empty((len(outcomes), len(outcomes)))
    for ia, a in enumerate(outcomes):
        pa = 0.5 * path_prob(a)
        for ib, b in enumerate(outcomes):
            P[ia, ib] = pa * Ti[a[-1], b[0]] * path_prob(b)
    return P


def alpha_lower_bound(spec, i, depth=1):
    """Exact ``max |P(A n B) - P(A)P(B)|`` over events on ``depth`` past and
    future coordinates separated by lag ``i``.

    For a fixed past event ``A`` the best future event collects the outcomes
    where ``P(A, b) - P(A)P(b)`` is positive (or negative), so only the
    ``2**(2**depth)`` past events need enumerating.
    """
    if spec.kind != "two-state-chain" or spec.d != 1:
        raise UnsupportedKernelError("alpha enumeration needs a scalar finite-state chain")
    if not 1 <= int(depth) <= 3:
        raise ValidationError("depth must be in 1..3", "depth")
    if int(i) < 1:
        raise ValidationError("lag must be at least 1", "i")
    P = _block_law(spec.params["q"], int(i), int(depth))
    pb = P.sum(axis=0)
    best = 0.0
    for mask in itertools.product((False, True), repeat=P.shape[0]):
        sel = np.array(mask)
        if not sel.any():
            continue
        joint = P[sel].sum(axis=0)
        delta = joint - joint.sum() * pb
        best = max(best, delta[delta > 0].sum(), -delta[delta < 0].sum())
    return float(best)


def alpha_brute_force(spec, i, depth=1):
    """Double enumeration over past and future events (small depth only)."""
    P = _block_law(spec.params["q"], int(i), int(depth))
    pa, pb = P.sum(axis=1), P.sum(axis=0)
    k = P.shape[0]
    best = 0.0
    for A in itertools.product((False, True), repeat=k):
        A = np.array(A)
        for B in itertools.product((False, True), repeat=k):
            B = np.array(B)
            gap = P[np.ix_(A, B)].sum() - pa[A].sum() * pb[B].sum()
            best = max(best, abs(gap))
    return float(best)
