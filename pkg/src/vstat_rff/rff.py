"""Random Fourier feature expansions of kernels.

The transform of a kernel is split as ``fhat = g + i h`` and each of ``g``
and ``h`` into positive and negative parts.  Normalizing a part by its mass
gives a probability density over frequencies; averaging cosines (for ``g``)
or sines (for ``h``) at sampled frequencies gives an unbiased Monte Carlo
approximation of the kernel.  Multi-argument cosines and sines are then
expanded into products of one-argument bases, which yields a tensor
expansion with bases bounded by one.
"""

from __future__ import annotations

import functools
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels as K
from .errors import (DegenerateKernelError, NumericError,
                     UnsupportedKernelError, ValidationError)

PARTS = ("g+", "g-", "h+", "h-")
_PART_1D = {"g+": "re+", "g-": "re-", "h+": "im+", "h-": "im-"}
# sign of each part's contribution to the kernel and its trig function
_PART_SIGN = {"g+": 1.0, "g-": -1.0, "h+": -1.0, "h-": 1.0}
_PART_TRIG = {"g+": 0, "g-": 0, "h+": 1, "h-": 1}
COS, SIN = 0, 1

REJECTION_GRID = 2 ** 12
ENVELOPE_SAFETY = 1.2


# ---------------------------------------------------------------------------
# frequency samplers


def _cauchy_pdf(u, s):
    return 1.0 / (math.pi * s * (1.0 + (u / s) ** 2))


class RejectionSampler:
    """Rejection sampling from an unnormalized 1-d density with a Cauchy
    proposal.

    The envelope constant is ``1.2`` times the largest density/proposal ratio
    over a ``2**12`` point grid on ``[-64 s, 64 s]`` and a log-spaced tail
    grid; every proposal is re-checked against it and a violation raises
    :class:`NumericError` instead of silently biasing the draws.
    """

    def __init__(self, target, scale):
        self.target = target
        self.scale = float(scale)
        R = 64.0 * self.scale
        grid = np.linspace(-R, R, REJECTION_GRID)
        tail = np.geomspace(R, 1e4 * R, 1024)
        probe = np.concatenate([grid, tail, -tail])
        ratio = target(probe) / _cauchy_pdf(probe, self.scale)
        self.envelope = ENVELOPE_SAFETY * float(np.max(ratio))
        if not self.envelope > 0:
            raise DegenerateKernelError("rejection target has no mass")

    def __call__(self, rng, size):
        out = np.empty(size)
        filled = 0
        batch = max(1024, 4 * size)
        while filled < size:
            u = self.scale * rng.standard_cauchy(batch)
            dens = self.target(u)
            env = self.envelope * _cauchy_pdf(u, self.scale)
            if np.any(dens > env * (1.0 + 1e-9)):
                raise NumericError("rejection envelope violated",
                                   residual=float(np.max(dens / env)))
            keep = u[rng.uniform(size=batch) * env <= dens]
            take = min(keep.size, size - filled)
            out[filled:filled + take] = keep[:take]
            filled += take
        return out


def _part_target(profile, part):
    if part == "re+":
        return lambda u: np.maximum(np.real(profile.ft(u)), 0.0)
    if part == "re-":
        return lambda u: np.maximum(-np.real(profile.ft(u)), 0.0)
    if part == "im+":
        return lambda u: np.maximum(np.imag(profile.ft(u)), 0.0)
    return lambda u: np.maximum(-np.imag(profile.ft(u)), 0.0)


@functools.lru_cache(maxsize=64)
def _sampler_1d(profile, part):
    if part == "re+" and type(profile).sample_positive is not K.Profile.sample_positive:
        return profile.sample_positive
    return RejectionSampler(_part_target(profile, part), profile.proposal_scale)


# ---------------------------------------------------------------------------
# sign measure decomposition


@dataclass
class SignMeasureParts:
    """Masses of the four sign parts of a kernel transform, with samplers."""

    kernel: K.KernelSpec
    A_g_plus: float
    A_g_minus: float
    A_h_plus: float
    A_h_minus: float
    masses_1d: dict = field(repr=False, default_factory=dict)

    def mass(self, which):
        return {"g+": self.A_g_plus, "g-": self.A_g_minus,
                "h+": self.A_h_plus, "h-": self.A_h_minus}[which]

    @property
    def masses(self):
        return {p: self.mass(p) for p in PARTS}

    @property
    def total(self):
        return self.A_g_plus + self.A_g_minus + self.A_h_plus + self.A_h_minus

    def sample(self, which, D, rng):
        if which not in PARTS:
            raise ValidationError(f"unknown part {which!r}", "which")
        if self.mass(which) <= 0.0:
            raise ValidationError(f"part {which} has zero mass", "which")
        if D < 1:
            raise ValidationError("sample size must be positive", "D")
        prof = self.kernel.profile
        k = self.kernel.fourier_dim
        if k == 1:
            return _sampler_1d(prof, _PART_1D[which])(rng, D)[:, None]
        # product transform: the sign of a product is fixed by the parity of
        # its negative factors
        P, N = self.masses_1d["re+"], self.masses_1d["re-"]
        patterns = np.array(list(itertools.product((0, 1), repeat=k)))
        parity = patterns.sum(axis=1) % 2
        want = 0 if which == "g+" else 1
        patterns = patterns[parity == want]
        w = np.prod(np.where(patterns == 1, N, P), axis=1)
        choice = rng.choice(len(patterns), size=D, p=w / w.sum())
        neg = patterns[choice]
        out = np.empty((D, k))
        for col in range(k):
            mask = neg[:, col] == 1
            npos, nneg = int((~mask).sum()), int(mask.sum())
            if npos:
                out[~mask, col] = _sampler_1d(prof, "re+")(rng, npos)
            if nneg:
                out[mask, col] = _sampler_1d(prof, "re-")(rng, nneg)
        return out


def decompose_sign_measure(spec):
    """Split the kernel transform into four sign parts and compute masses."""
    if not isinstance(spec, K.KernelSpec):
        raise UnsupportedKernelError("sign decomposition needs a catalog kernel")
    m1 = K.profile_masses(spec.profile)
    k = spec.fourier_dim
    if k == 1:
        A = (m1["re+"], m1["re-"], m1["im+"], m1["im-"])
    else:
        if not spec.profile.even:
            raise UnsupportedKernelError(
                "complex transforms are supported in one Fourier dimension only")
        P, N = m1["re+"], m1["re-"]
        A = (((P + N) ** k + (P - N) ** k) / 2.0,
             ((P + N) ** k - (P - N) ** k) / 2.0, 0.0, 0.0)
    if sum(A) <= 0.0:
        raise DegenerateKernelError("all sign masses vanish")
    return SignMeasureParts(spec, *A, masses_1d=m1)


def sample_frequencies(parts, which, D, seed):
    """Draw ``D`` i.i.d. frequencies from the normalized part ``which``."""
    rng = np.random.default_rng(seed)
    return parts.sample(which, int(D), rng)


# ---------------------------------------------------------------------------
# budgets


@dataclass
class ApproxBudget:
    """Sample sizes per sign part and the inputs they were derived from."""

    D: tuple
    t: Optional[float] = None
    M: Optional[float] = None
    q: Optional[float] = None
    r: Optional[float] = None
    multipliers: tuple = (1.0, 1.0, 1.0, 1.0)

    @property
    def total(self):
        return int(sum(self.D))

    @classmethod
    def from_total(cls, parts, D_total):
        """Split ``D_total`` features across parts in proportion to mass."""
        masses = np.array([parts.mass(p) for p in PARTS])
        share = masses / masses.sum() * int(D_total)
        D = np.floor(share).astype(int)
        D[(masses > 0) & (D == 0)] = 1
        short = int(D_total) - int(D.sum())
        if short > 0:
            order = np.argsort(-(share - np.floor(share)), kind="stable")
            for i in order[:short]:
                if masses[i] > 0:
                    D[i] += 1
        return cls(D=tuple(int(x) for x in D))


def required_sample_size(t, M, q, mu_q, masses, m, d, multipliers=(1, 1, 1, 1)):
    """Sample sizes from the covering-argument displays.

    ``mu_q`` is the raw moment ``int |fhat| |u|^q``; the displays use its
    ``1/q`` root.  The calibration ``multipliers`` stand in for the
    unspecified "sufficiently large" constants.  The second display carries
    an extra factor 8 inside the logarithm; it is kept as printed.
    """
    if not (t > 0 and M > 0):
        raise ValidationError("t and M must be positive")
    if q < 1:
        raise ValidationError("moment order q must be at least 1", "q")
    if not math.isfinite(mu_q):
        raise UnsupportedKernelError(
            "Fourier moment diverges; mollify the kernel first (kernels.mollify)")
    md = m * d
    diam = 2.0 * M * math.sqrt(md)
    c = 3.0 * math.sqrt(md / math.pi)
    root = mu_q ** (1.0 / q)
    if isinstance(masses, dict):
        masses = [masses[p] for p in PARTS]
    factors = (1.0, 8.0, 1.0, 1.0)
    D = []
    for A, C, fac in zip(masses, multipliers, factors):
        if A <= 0:
            D.append(0)
            continue
        arg = fac * math.pi * c * diam * A ** (1.0 - 1.0 / q) * root / t
        val = C * md * A * A / (t * t) * math.log(arg)
        D.append(max(1, math.ceil(val)))
    # covering radius balancing kappa1 r^{-md} against kappa2 r^q
    lead = int(np.argmax(masses))
    A = masses[lead]
    log_k1 = md * math.log(c * diam) - D[lead] * t * t / 128.0
    log_k2 = q * math.log(32.0 * math.pi / t) + math.log(mu_q / A)
    r = math.exp((log_k1 - log_k2) / (q + md))
    return ApproxBudget(D=tuple(D), t=t, M=M, q=q, r=r,
                        multipliers=tuple(float(x) for x in multipliers))


# ---------------------------------------------------------------------------
# tensor expansions


@dataclass
class FeatureExpansion:
    """``sum_t coef_t prod_l e_{index[t, l]}(x_l)`` with trigonometric bases.

    Basis ``j`` is ``cos(2 pi freq_j . x)`` when ``trig[j] == 0`` and
    ``sin(2 pi freq_j . x)`` otherwise, so every basis is bounded by one.
    """

    m: int
    d: int
    freq: np.ndarray
    trig: np.ndarray
    index: np.ndarray
    coef: np.ndarray
    symmetrized: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.freq = np.asarray(self.freq, dtype=float).reshape(-1, self.d)
        self.trig = np.asarray(self.trig, dtype=np.int8).ravel()
        self.index = np.asarray(self.index, dtype=np.int64).reshape(-1, self.m)
        self.coef = np.asarray(self.coef, dtype=float).ravel()
        if self.trig.size != self.freq.shape[0]:
            raise ValidationError("trig tags must match frequencies")
        if self.index.shape[0] != self.coef.size:
            raise ValidationError("term indices must match coefficients")

    @property
    def order(self):
        return self.m

    @property
    def n_bases(self):
        return self.freq.shape[0]

    @property
    def K(self):
        return self.n_bases

    @property
    def n_terms(self):
        return self.coef.size

    @property
    def F(self):
        """Coefficient budget ``sum |coef|``."""
        return float(np.sum(np.abs(self.coef)))

    B = 1.0

    def bases(self, x):
        """Evaluate all bases at points ``x`` of shape (N, d) -> (N, K)."""
        x = K._as_points(x, self.d)
        flat = x.reshape(-1, self.d)
        phase = 2.0 * math.pi * (flat @ self.freq.T)
        out = np.empty_like(phase)
        c = self.trig == COS
        out[:, c] = np.cos(phase[:, c])
        out[:, ~c] = np.sin(phase[:, ~c])
        return out.reshape(x.shape[:-1] + (self.n_bases,))

    def __call__(self, *args):
        if len(args) != self.m:
            raise ValidationError(f"expansion of order {self.m} got {len(args)} arguments")
        pts = [K._as_points(a, self.d) for a in args]
        shape = np.broadcast_shapes(*(p.shape[:-1] for p in pts))
        pts = [np.broadcast_to(p, shape + (self.d,)).reshape(-1, self.d) for p in pts]
        n = pts[0].shape[0]
        out = np.empty(n)
        step = max(1, int(4_000_000 // max(1, self.n_terms)))
        for lo in range(0, n, step):
            hi = min(n, lo + step)
            prod = np.broadcast_to(self.coef, (hi - lo, self.n_terms)).copy()
            for l, p in enumerate(pts):
                prod *= self.bases(p[lo:hi])[:, self.index[:, l]]
            out[lo:hi] = prod.sum(axis=1)
        return out.reshape(shape)

    def pair_matrix(self, x, y):
        """For ``m = 2``: the matrix ``[f(x_a, y_b)]`` via one matrix product."""
        if self.m != 2:
            raise ValidationError("pair_matrix needs an order-2 expansion")
        ex, ey = self.bases(x), self.bases(y)
        return (ex[:, self.index[:, 0]] * self.coef) @ ey[:, self.index[:, 1]].T

    def is_symmetric(self, tol=1e-12):
        """Whether the coefficient tensor is invariant under index permutation."""
        if self.m == 1 or self.symmetrized:
            return True
        table = {}
        for idx, c in zip(map(tuple, self.index), self.coef):
            table[idx] = table.get(idx, 0.0) + c
        for idx, c in table.items():
            for perm in itertools.permutations(idx):
                if abs(table.get(perm, 0.0) - c) > tol:
                    return False
        return True

    # -- serialization --------------------------------------------------------

    def to_dict(self):
        samples = self.meta.get("samples")
        doc = {
            "kernel": self.meta.get("kernel"),
            "seed": self.meta.get("seed"),
            "masses": self.meta.get("masses"),
            "m": self.m,
            "d": self.d,
            "symmetrized": self.symmetrized,
            "frequencies": self.freq.tolist(),
            "trig": ["cos" if t == COS else "sin" for t in self.trig],
            "terms": self.index.tolist(),
            "weights": self.coef.tolist(),
        }
        if samples is not None:
            doc["samples"] = samples
        return doc

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, doc):
        trig = [COS if t == "cos" else SIN for t in doc["trig"]]
        meta = {k: doc.get(k) for k in ("kernel", "seed", "masses", "samples")}
        return cls(m=doc["m"], d=doc["d"], freq=np.array(doc["frequencies"], dtype=float),
                   trig=np.array(trig), index=np.array(doc["terms"], dtype=np.int64),
                   coef=np.array(doc["weights"], dtype=float),
                   symmetrized=doc["symmetrized"], meta=meta)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _expand_general(freqs, weights, trigs, m, d):
    """Tensorize ``w cos/sin(2 pi sum_l u_l . x_l)`` into one-argument bases
    and symmetrize over the ``m!`` argument orders."""
    D = freqs.shape[0]
    blocks = freqs.reshape(D, m, d)
    base_freq = np.repeat(blocks.reshape(D * m, d), 2, axis=0)
    base_trig = np.tile([COS, SIN], D * m)
    idx_rows, coef_rows = [], []
    subsets = [S for r in range(m + 1) for S in itertools.combinations(range(m), r)]
    perms = list(itertools.permutations(range(m)))
    for S in subsets:
        s = len(S)
        # cos(sum a_l) = Re prod(cos a_l + i sin a_l); sin(...) = Im(...)
        if s % 2 == 0:
            sign, which = (-1.0) ** (s // 2), COS
        else:
            sign, which = (-1.0) ** ((s - 1) // 2), SIN
        sel = trigs == which
        if not np.any(sel):
            continue
        rows = np.flatnonzero(sel)
        tags = np.array([SIN if l in S else COS for l in range(m)])
        base = (rows[:, None] * m + np.arange(m)) * 2 + tags
        for perm in perms:
            idx_rows.append(base[:, perm])
            coef_rows.append(sign * weights[rows] / len(perms))
    index = np.concatenate(idx_rows, axis=0)
    coef = np.concatenate(coef_rows)
    return base_freq, base_trig, index, coef


def expansion_from_samples(spec, freqs, weights, trigs, meta=None):
    """Build the tensor expansion for sampled frequencies and signed weights."""
    freqs = np.asarray(freqs, dtype=float)
    weights = np.asarray(weights, dtype=float)
    trigs = np.asarray(trigs, dtype=np.int8)
    m, d = spec.m, spec.d
    meta = dict(meta or {})
    if m == 1:
        return FeatureExpansion(1, d, freqs, trigs, np.arange(len(weights))[:, None],
                                weights, symmetrized=True, meta=meta)
    if spec.shift_invariant:
        if np.any(trigs != COS):
            raise UnsupportedKernelError("shift-invariant kernels need an even base")
        D = freqs.shape[0]
        bf = np.repeat(freqs, 2, axis=0)
        bt = np.tile([COS, SIN], D)
        j = np.arange(2 * D)
        return FeatureExpansion(2, d, bf, bt, np.stack([j, j], axis=1),
                                np.repeat(weights, 2), symmetrized=True, meta=meta)
    if m > 4:
        raise UnsupportedKernelError("symmetrization is limited to m <= 4")
    bf, bt, index, coef = _expand_general(freqs, weights, trigs, m, d)
    return FeatureExpansion(m, d, bf, bt, index, coef, symmetrized=True, meta=meta)


def _seed_doc(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": int(seed.entropy), "spawn_key": list(seed.spawn_key)}
    return seed


def build_expansion(spec, budget, seed, parts=None):
    """Sample frequencies for each sign part and assemble the expansion.

    ``budget`` is an :class:`ApproxBudget` or a total feature count, which
    is split across parts in proportion to their masses.
    """
    parts = parts or decompose_sign_measure(spec)
    if not isinstance(budget, ApproxBudget):
        budget = ApproxBudget.from_total(parts, int(budget))
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = ss.spawn(len(PARTS))
    freqs, weights, trigs, tags = [], [], [], []
    for part, D, stream in zip(PARTS, budget.D, streams):
        A = parts.mass(part)
        if D <= 0 or A <= 0:
            continue
        u = parts.sample(part, int(D), np.random.default_rng(stream))
        freqs.append(u)
        weights.append(np.full(int(D), _PART_SIGN[part] * A / D))
        trigs.append(np.full(int(D), _PART_TRIG[part], dtype=np.int8))
        tags.extend([part] * int(D))
    if not freqs:
        raise DegenerateKernelError("budget assigns no features to positive-mass parts")
    freqs = np.concatenate(freqs)
    weights = np.concatenate(weights)
    trigs = np.concatenate(trigs)
    meta = {"kernel": spec.kind, "seed": _seed_doc(seed), "masses": parts.masses,
            "samples": {"frequencies": freqs.tolist(), "weights": weights.tolist(),
                        "parts": tags}}
    return expansion_from_samples(spec, freqs, weights, trigs, meta)


def feature_map(exp, x):
    """Explicit features ``phi`` with ``exp(x, y) = phi(x) . phi(y)``.

    Only for expansions whose terms are all diagonal ``(j, j)`` with positive
    weights, which is what a PD shift-invariant kernel of order two gives.
    """
    if exp.m != 2 or np.any(exp.index[:, 0] != exp.index[:, 1]) or np.any(exp.coef < 0):
        raise UnsupportedKernelError(
            "feature_map needs a PD shift-invariant order-2 expansion")
    j = exp.index[:, 0]
    return exp.bases(x)[..., j] * np.sqrt(exp.coef)


def _grid(M, g, dim):
    axis = np.linspace(-M, M, int(g))
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([a.ravel() for a in mesh], axis=-1)


def uniform_error(exp, spec, M, grid_points_per_axis):
    """Max of ``|exp - spec|`` over a tensor grid on ``[-M, M]^{md}``.

    A lower bound on the sup over the box.
    """
    g = int(grid_points_per_axis)
    if g < 2:
        raise ValidationError("need at least two grid points per axis")
    pts = _grid(M, g, exp.d)
    if exp.m == 1:
        return float(np.max(np.abs(exp(pts) - spec(pts))))
    if exp.m == 2:
        approx = exp.pair_matrix(pts, pts)
        exact = spec(pts[:, None, :], pts[None, :, :])
        return float(np.max(np.abs(approx - exact)))
    worst = 0.0
    n = pts.shape[0]
    for combo in itertools.product(range(n), repeat=exp.m - 1):
        args = [pts] + [np.broadcast_to(pts[i], pts.shape) for i in combo]
        worst = max(worst, float(np.max(np.abs(exp(*args) - spec(*args)))))
    return worst
