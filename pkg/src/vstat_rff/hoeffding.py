"""Hoeffding decomposition of a symmetric kernel under a marginal law.

Two evaluators are provided for the level-``p`` component ``f_p``:

* ``MCComponent`` estimates the conditional means ``g_p`` by Monte Carlo
  over a fixed bank of i.i.d. tuples (common random numbers across levels)
  and combines them by the inclusion-exclusion form of the recursion.
* ``TensorComponent`` is exact for a tensor expansion: with centered bases
  ``e~ = e - E e`` the component is a weighted sum of products of the
  last ``p`` centered bases, weighted by the means of the first ``m - p``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels as K
from .errors import ValidationError

MARGINALS = ("point-mass", "standard-normal", "uniform", "custom")
DEGENERACY_SIGMAS = 3.0
DEGENERACY_ATOL = 1e-12
_CHUNK = 2_000_000


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float = 0.0

    def to_dict(self):
        return {"value": float(self.value), "stderr": float(self.stderr)}


# ---------------------------------------------------------------------------
# marginals


@dataclass(frozen=True, eq=False)
class MarginalSampler:
    """Law of a single observation.

    ``kind`` is one of ``point-mass`` (``loc``), ``standard-normal``,
    ``uniform`` (on ``[low, high]^d``) or ``custom`` with discrete ``atoms``
    and ``probs``.
    """

    kind: str = "standard-normal"
    d: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MARGINALS:
            raise ValidationError(f"unknown marginal {self.kind!r}", "marginal")
        if self.kind == "custom":
            atoms = np.asarray(self.params.get("atoms"), dtype=float)
            atoms = atoms.reshape(-1, self.d)
            probs = np.asarray(self.params.get("probs",
                                               np.full(len(atoms), 1.0 / len(atoms))))
            if probs.shape != (len(atoms),) or np.any(probs < 0) or \
                    not math.isclose(probs.sum(), 1.0, rel_tol=1e-12):
                raise ValidationError("custom marginal needs a probability vector", "probs")
            object.__setattr__(self, "_atoms", atoms)
            object.__setattr__(self, "_probs", probs)

    @classmethod
    def for_process(cls, process):
        """The stationary marginal of a :class:`mixing.ProcessSpec`."""
        name = process.marginal
        if name == "two-point":
            return cls("custom", process.d, {"atoms": [[0.0] * process.d, [1.0] * process.d]}) \
                if process.d == 1 else cls._two_point_product(process.d)
        if name == "uniform":
            return cls("uniform", process.d, {"low": -1.0, "high": 1.0})
        return cls(name, process.d)

    @classmethod
    def _two_point_product(cls, d):
        atoms = np.array(list(itertools.product((0.0, 1.0), repeat=d)))
        return cls("custom", d, {"atoms": atoms.tolist()})

    @property
    def loc(self):
        return np.broadcast_to(np.asarray(self.params.get("loc", 0.0), dtype=float),
                               (self.d,)).copy()

    @property
    def is_point_mass(self):
        return self.kind == "point-mass"

    def draw(self, seed, count):
        """``count`` i.i.d. points of shape (count, d)."""
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        count = int(count)
        if self.kind == "point-mass":
            return np.tile(self.loc, (count, 1))
        if self.kind == "standard-normal":
            return rng.standard_normal((count, self.d))
        if self.kind == "uniform":
            lo, hi = self.params.get("low", -1.0), self.params.get("high", 1.0)
            return rng.uniform(lo, hi, size=(count, self.d))
        idx = rng.choice(len(self._atoms), size=count, p=self._probs)
        return self._atoms[idx]

    def char_fn(self, freq):
        """``E exp(2 pi i v . X)`` for each row ``v`` of ``freq``."""
        v = np.atleast_2d(np.asarray(freq, dtype=float))
        if self.kind == "point-mass":
            return np.exp(2j * math.pi * (v @ self.loc))
        if self.kind == "standard-normal":
            return np.exp(-2.0 * math.pi ** 2 * np.sum(v * v, axis=1)).astype(complex)
        if self.kind == "uniform":
            lo, hi = self.params.get("low", -1.0), self.params.get("high", 1.0)
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            # E exp(2 pi i v X) = exp(2 pi i v mid) sinc(2 v half)
            return np.prod(np.exp(2j * math.pi * v * mid) * np.sinc(2.0 * v * half), axis=1)
        return np.exp(2j * math.pi * (v @ self._atoms.T)) @ self._probs

    def basis_means(self, exp):
        """Exact ``E e_j(X)`` for every basis of a trigonometric expansion."""
        cf = self.char_fn(exp.freq)
        return np.where(exp.trig == 0, cf.real, cf.imag)

    def support_grid(self, count=5):
        """``count`` points inside the (empirical) support, shape (count, d)."""
        t = np.linspace(-1.0, 1.0, int(count))[:, None]
        if self.kind == "point-mass":
            # the components vanish off the support too; spread for coverage
            return self.loc + 2.0 * t
        if self.kind == "standard-normal":
            return np.repeat(1.96 * t, self.d, axis=1)
        if self.kind == "uniform":
            lo, hi = self.params.get("low", -1.0), self.params.get("high", 1.0)
            return np.repeat(lo + (hi - lo) * (t + 1.0) / 2.0, self.d, axis=1)
        return self._atoms[np.arange(int(count)) % len(self._atoms)]

    def to_dict(self):
        return {"kind": self.kind, "d": self.d, "params": _jsonable(self.params)}


def _seed_doc(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": int(seed.entropy), "spawn_key": list(seed.spawn_key)}
    return seed


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return np.asarray(obj).tolist()
    return obj


# ---------------------------------------------------------------------------
# theta


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def theta(spec, marginal, N, seed):
    """Monte Carlo mean of the kernel over ``N`` i.i.d. tuples."""
    if int(N) < 2:
        raise ValidationError("theta needs N >= 2", "N")
    m = spec.m
    if marginal.is_point_mass:
        x = marginal.loc[None, :]
        return Estimate(float(spec(*([x] * m))[0]), 0.0)
    Y = marginal.draw(seed, int(N) * m).reshape(int(N), m, marginal.d)
    vals = spec(*[Y[:, l] for l in range(m)])
    return Estimate(*_mean_se(vals))


# ---------------------------------------------------------------------------
# Monte Carlo components


def _key(arrays):
    h = hashlib.blake2b(digest_size=16)
    for a in arrays:
        a = np.ascontiguousarray(a, dtype=float)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


class _ConditionalMeans:
    """``g_s(x_1..x_s) = E f(x_1..x_s, X_{s+1}..X_m) - theta`` from one bank."""

    def __init__(self, spec, marginal, N, seed):
        self.spec = spec
        self.m = spec.m
        self.d = marginal.d
        if marginal.is_point_mass:
            N = 1
        self.N = int(N)
        self.bank = marginal.draw(seed, self.N * self.m).reshape(self.N, self.m, self.d)
        vals = spec(*[self.bank[:, l] for l in range(self.m)])
        if self.N > 1:
            self.theta = Estimate(*_mean_se(vals))
        else:
            self.theta = Estimate(float(vals[0]), 0.0)
        self._cache = {}

    def __call__(self, xs):
        s = len(xs)
        if s == 0:
            n = 1
            return np.zeros(n), np.zeros(n)
        key = (s, _key(xs))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        n = xs[0].shape[0]
        if s == self.m:
            val = self.spec(*xs) - self.theta.value
            se = np.full(n, self.theta.stderr)
        else:
            rest = self.bank[:, s:]
            val = np.empty(n)
            se = np.empty(n)
            step = max(1, _CHUNK // self.N)
            for lo in range(0, n, step):
                hi = min(n, lo + step)
                args = [x[lo:hi, None, :] for x in xs]
                args += [rest[None, :, l] for l in range(self.m - s)]
                f = self.spec(*args)
                val[lo:hi] = f.mean(axis=1) - self.theta.value
                if self.N > 1:
                    se[lo:hi] = f.std(axis=1, ddof=1) / math.sqrt(self.N)
                else:
                    se[lo:hi] = 0.0
        if len(self._cache) > 256:
            self._cache.clear()
        self._cache[key] = (val, se)
        return val, se


class MCComponent:
    """``f_p`` via ``f_S = sum_{T subset S} (-1)^{|S|-|T|} g_T``.

    This is the recursion ``f_S = g_S - sum_{T proper} f_T`` solved by
    inclusion-exclusion.  All levels share one bank of tuples.  The reported
    standard error is the triangle bound ``sum_T se(g_T)``.
    """

    mode = "mc-recursion"

    def __init__(self, means, p):
        self.means = means
        self.p = int(p)
        self.m = means.m
        self.d = means.d

    @property
    def mc_budget(self):
        return self.means.N

    def _points(self, xs):
        if len(xs) != self.p:
            raise ValidationError(f"component of level {self.p} got {len(xs)} arguments")
        pts = [K._as_points(x, self.d) for x in xs]
        shape = np.broadcast_shapes(*(q.shape[:-1] for q in pts))
        pts = [np.broadcast_to(q, shape + (self.d,)).reshape(-1, self.d) for q in pts]
        return pts, shape

    def evaluate(self, *xs):
        """Values and standard errors at the given points."""
        pts, shape = self._points(xs)
        n = pts[0].shape[0]
        val = np.zeros(n)
        se = np.zeros(n)
        for size in range(1, self.p + 1):
            sign = (-1.0) ** (self.p - size)
            for T in itertools.combinations(range(self.p), size):
                g, s = self.means([pts[i] for i in T])
                val += sign * g
                se += s
        return val.reshape(shape), se.reshape(shape)

    def __call__(self, *xs):
        return self.evaluate(*xs)[0]

    def stderr(self, *xs):
        return self.evaluate(*xs)[1]


def component(spec, marginal, p, N, seed, _means=None):
    """Monte Carlo recursion evaluator for level ``p``."""
    if not 1 <= int(p) <= spec.m:
        raise ValidationError(f"level p must be in 1..{spec.m}", "p")
    means = _means or _ConditionalMeans(spec, marginal, N, seed)
    return MCComponent(means, p)


# ---------------------------------------------------------------------------
# tensor components


class TensorComponent:
    """Closed-form ``f_p`` of a symmetric tensor expansion."""

    mode = "tensor-closed-form"

    def __init__(self, exp, means, p, influence=None):
        if not exp.is_symmetric():
            raise ValidationError("tensor components need a symmetric expansion")
        self.exp = exp
        self.p = int(p)
        self.m = exp.m
        self.d = exp.d
        self.means = np.asarray(means, dtype=float)
        lead = self.m - self.p
        w = exp.coef.copy()
        for l in range(lead):
            w = w * self.means[exp.index[:, l]]
        tail = exp.index[:, lead:]
        # merge terms that share the same centered-basis tuple
        uniq, inv = np.unique(tail, axis=0, return_inverse=True)
        self.J = uniq.reshape(-1, self.p)
        self.W = np.bincount(inv.ravel(), weights=w, minlength=len(uniq))
        self._influence = influence
        self.mc_budget = 0 if influence is None else influence[0].shape[0]

    def centered_bases(self, x):
        return self.exp.bases(x) - self.means

    def evaluate(self, *xs):
        if len(xs) != self.p:
            raise ValidationError(f"component of level {self.p} got {len(xs)} arguments")
        pts = [K._as_points(x, self.d) for x in xs]
        shape = np.broadcast_shapes(*(q.shape[:-1] for q in pts))
        pts = [np.broadcast_to(q, shape + (self.d,)).reshape(-1, self.d) for q in pts]
        n = pts[0].shape[0]
        out = np.empty(n)
        step = max(1, _CHUNK // max(1, len(self.W)))
        for lo in range(0, n, step):
            hi = min(n, lo + step)
            prod = np.broadcast_to(self.W, (hi - lo, len(self.W))).copy()
            for l, q in enumerate(pts):
                prod *= self.centered_bases(q[lo:hi])[:, self.J[:, l]]
            out[lo:hi] = prod.sum(axis=1)
        se = self._stderr(pts, n)
        return out.reshape(shape), se.reshape(shape)

    def _stderr(self, pts, n):
        if self._influence is None:
            return np.zeros(n)
        # delta method: X_k perturbs the m - p mean factors and the p
        # centering constants
        draws, upper, same = self._influence
        N = draws.shape[0]
        se = np.empty(n)
        for a in range(n):
            xa = [q[a:a + 1] for q in pts]
            psi = np.zeros(N)
            if upper is not None:
                psi += (self.m - self.p) * upper(*(np.repeat(x, N, 0) for x in xa), draws)
            for b in range(self.p):
                args = [np.repeat(x, N, 0) for i, x in enumerate(xa) if i != b]
                psi -= same(*args, draws)
            se[a] = psi.std(ddof=1) / math.sqrt(N)
        return se

    def __call__(self, *xs):
        return self.evaluate(*xs)[0]

    def stderr(self, *xs):
        return self.evaluate(*xs)[1]


def _has_closed_means(marginal):
    return marginal.kind in MARGINALS


def expansion_means(exp, marginal, N=None, seed=None):
    """Basis means: exact when the marginal allows, else Monte Carlo."""
    if N is None:
        return marginal.basis_means(exp), None
    X = marginal.draw(seed, int(N))
    E = exp.bases(X)
    return E.mean(axis=0), X


def tensor_component(exp, marginal, p, N=None, seed=None):
    """Closed-form level-``p`` evaluator.

    With ``N`` given, basis means are estimated from ``N`` draws and
    standard errors follow from the delta method; otherwise the means are
    computed exactly from the marginal's characteristic function.
    """
    if not 1 <= int(p) <= exp.m:
        raise ValidationError(f"level p must be in 1..{exp.m}", "p")
    means, draws = expansion_means(exp, marginal, N, seed)
    influence = None
    if draws is not None:
        same = TensorComponent(exp, means, p)
        upper = TensorComponent(exp, means, p + 1) if p < exp.m else None
        influence = (draws, upper, same)
    return TensorComponent(exp, means, p, influence)


def tensor_theta(exp, means):
    w = exp.coef.copy()
    for l in range(exp.m):
        w = w * means[exp.index[:, l]]
    return float(w.sum())


def basis_moments(exp, marginal, a, N, seed):
    """``sup_j (E |e_j(X)|^a)^{1/a}`` by Monte Carlo, with a stderr."""
    if a < 1:
        raise ValidationError("moment order a must be >= 1", "a")
    X = marginal.draw(seed, int(N))
    E = np.abs(exp.bases(X)) ** a
    mom = E.mean(axis=0)
    j = int(np.argmax(mom))
    val = mom[j] ** (1.0 / a)
    if int(N) > 1 and mom[j] > 0:
        se_raw = E[:, j].std(ddof=1) / math.sqrt(int(N))
        se = se_raw * mom[j] ** (1.0 / a - 1.0) / a
    else:
        se = 0.0
    return Estimate(float(val), float(se))


# ---------------------------------------------------------------------------
# degeneracy


@dataclass
class DegeneracyReport:
    p: int
    estimates: np.ndarray
    stderr: np.ndarray
    flags: np.ndarray
    sigmas: float = DEGENERACY_SIGMAS

    @property
    def passed(self):
        return not bool(np.any(self.flags))

    def to_dict(self):
        return {"p": self.p, "estimates": self.estimates.tolist(),
                "stderr": self.stderr.tolist(), "flags": self.flags.tolist(),
                "passed": self.passed, "sigmas": self.sigmas}


def _grid_tuples(grid, p, d):
    g = np.asarray(grid, dtype=float)
    if p == 1:
        return np.zeros((1, 0, d))
    if g.ndim == 1:
        g = g[:, None]
    if g.ndim == 2:
        if p == 2 or g.shape[1] == d:
            # one grid of points; build (p-1)-tuples by cycling through it
            G = g.shape[0]
            idx = (np.arange(G)[:, None] + np.arange(p - 1)[None, :]) % G
            return g.reshape(G, d)[idx]
    if g.ndim == 3 and g.shape[1] == p - 1:
        return g
    raise ValidationError("grid must have shape (G, d) or (G, p-1, d)", "grid")


def check_degeneracy(comp, marginal, grid, N, seed, sigmas=DEGENERACY_SIGMAS,
                     atol=DEGENERACY_ATOL):
    """Estimate ``E f_p(x_1..x_{p-1}, X)`` at grid points and flag nonzero ones.

    The tolerance combines the check's own Monte Carlo error with the mean
    reported standard error of the component.
    """
    p = int(getattr(comp, "p", getattr(comp, "m", 1)))
    d = marginal.d
    tuples = _grid_tuples(grid, p, d)
    if tuples.shape[0] == 0:
        raise ValidationError("grid must be nonempty", "grid")
    X = marginal.draw(seed, int(N))
    est, ses = [], []
    for tup in tuples:
        args = [np.broadcast_to(tup[l], X.shape) for l in range(p - 1)] + [X]
        if hasattr(comp, "evaluate"):
            vals, se_comp = comp.evaluate(*args)
        else:
            vals, se_comp = comp(*args), np.zeros(X.shape[0])
        mean, se_check = _mean_se(vals)
        est.append(mean)
        ses.append(math.sqrt(se_check ** 2 + float(np.mean(se_comp)) ** 2))
    est, ses = np.array(est), np.array(ses)
    flags = np.abs(est) > sigmas * ses + atol
    return DegeneracyReport(p, est, ses, flags, sigmas)


# ---------------------------------------------------------------------------
# full decomposition


@dataclass
class DecompositionResult:
    theta: Estimate
    components: list
    r: int
    grid: Optional[np.ndarray] = None
    degeneracy: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def m(self):
        return len(self.components)

    def to_dict(self):
        out = {"theta": self.theta.to_dict(), "r": int(self.r), "m": self.m,
               "meta": _jsonable(self.meta), "components": []}
        for comp in self.components:
            entry = {"p": comp.p, "mode": comp.mode, "mc_budget": int(comp.mc_budget)}
            if self.grid is not None:
                tuples = _grid_tuples(self.grid, comp.p + 1, comp.d)
                args = [tuples[:, l] for l in range(comp.p)]
                vals, se = comp.evaluate(*args)
                entry["grid_points"] = tuples.tolist()
                entry["values"] = np.asarray(vals).tolist()
                entry["stderr"] = np.asarray(se).tolist()
            out["components"].append(entry)
        out["degeneracy"] = [rep.to_dict() for rep in self.degeneracy]
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _vanishes(comp, grid, sigmas, atol):
    tuples = _grid_tuples(grid, comp.p + 1, comp.d)
    vals, se = comp.evaluate(*[tuples[:, l] for l in range(comp.p)])
    return bool(np.all(np.abs(vals) <= sigmas * se + atol))


def decompose(kernel, marginal, N, seed, grid=None, r=None, check_N=None,
              sigmas=DEGENERACY_SIGMAS):
    """Components ``f_1..f_m`` of ``kernel`` (a kernel or a tensor expansion).

    The degeneracy level ``r`` is taken from the argument when given;
    otherwise it is one plus the number of leading components that vanish on
    the grid within ``sigmas`` standard errors (a heuristic).
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_bank, s_check = ss.spawn(2)
    m = kernel.m
    if grid is None:
        grid = marginal.support_grid(5)
    if hasattr(kernel, "coef"):
        means = marginal.basis_means(kernel)
        comps = [tensor_component(kernel, marginal, p) for p in range(1, m + 1)]
        th = Estimate(tensor_theta(kernel, means), 0.0)
    else:
        cm = _ConditionalMeans(kernel, marginal, N, s_bank)
        comps = [MCComponent(cm, p) for p in range(1, m + 1)]
        th = cm.theta
    if r is None:
        r = 1
        for comp in comps[:-1]:
            if not _vanishes(comp, grid, sigmas, DEGENERACY_ATOL):
                break
            r += 1
    if not 1 <= int(r) <= m:
        raise ValidationError(f"degeneracy level r must be in 1..{m}", "r")
    reports = []
    if check_N:
        for comp in comps[1:]:
            reports.append(check_degeneracy(comp, marginal, grid, check_N, s_check, sigmas))
    return DecompositionResult(th, comps, int(r), np.asarray(grid), reports,
                               {"marginal": marginal.to_dict(), "N": None if N is None else int(N),
                                "seed": _seed_doc(seed)})
