"""Monte Carlo experiments on maximal V-statistics.

Every replication draws its path from its own substream of the master seed,
so results do not depend on thread scheduling or on the replication count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from . import bounds, hoeffding, kernels, mixing, rff, vstat
from .config import ExperimentConfig
from .errors import ResourceError, ValidationError

C_CAP = 1e6
AUTO_GRID_POINTS = 30
AUTO_GRID_QUANTILES = (0.5, 0.995)
AUDIT_N = 50
AUDIT_REPLICATIONS = 5
AUDIT_RTOL = 1e-10
MAX_WORK = 5e11


def worker_count():
    env = os.environ.get("VSTAT_THREADS")
    cap = int(env) if env and env.isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    return max(1, cap)


def _map(func, items):
    items = list(items)
    workers = min(worker_count(), len(items)) or 1
    if workers == 1:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


# ---------------------------------------------------------------------------
# setup shared by experiments


@dataclass
class Setup:
    """Kernel, process, expansion and component derived from a config."""

    cfg: ExperimentConfig
    kernel: kernels.KernelSpec
    process: mixing.ProcessSpec
    marginal: hoeffding.MarginalSampler
    expansion: rff.FeatureExpansion
    seeds: mixing.SeedSpec
    components: dict = field(default_factory=dict)

    def component(self, p):
        if p not in self.components:
            self.components[p] = hoeffding.tensor_component(self.expansion, self.marginal, p)
        return self.components[p]


def setup(cfg):
    kernel = kernels.make_kernel(cfg.kernel, m=cfg.m, d=cfg.d, **cfg.kernelParams)
    process = mixing.ProcessSpec(cfg.process, cfg.processParams, cfg.d, cfg.clip)
    marginal = hoeffding.MarginalSampler.for_process(process)
    seeds = mixing.SeedSpec(cfg.seed)
    exp = rff.build_expansion(kernel, cfg.D, seeds.sequence(mixing.STREAM_FEATURES))
    return Setup(cfg, kernel, process, marginal, exp, seeds)


def replicate_T(st, n, p, reps, stream=mixing.STREAM_PATH):
    """``T_p`` for replications ``reps`` at path length ``n``.

    ``p`` may be a level or a tuple of levels; levels share the path and
    the partial-sum table, and a dict keyed by level is returned then.
    """
    levels = (p,) if np.isscalar(p) else tuple(p)
    comps = [st.component(q) for q in levels]
    work = float(n) * st.expansion.n_bases * len(reps)
    if work > MAX_WORK:
        raise ResourceError(f"experiment needs about {work:.2g} operations; "
                            "reduce R, n or D")

    def one(r):
        path = mixing.generate_path(st.process, n, st.seeds.rng(stream, r))
        table = vstat.partial_sums(comps[0], path)
        T = [vstat.maximal_statistic(vstat.v_features(c, path, table)[0]).value
             for c in comps]
        return T, bool(path.meta.get("left_box", False))

    out = _map(one, reps)
    T = np.array([t for t, _ in out]).reshape(len(out), len(levels))
    left = np.array([b for _, b in out], dtype=bool)
    if np.isscalar(p):
        return T[:, 0], left
    return {q: T[:, i] for i, q in enumerate(levels)}, left


def audit(st, n, p, reps=AUDIT_REPLICATIONS):
    """Max relative gap between feature and naive series on short prefixes."""
    comp = st.component(p)
    k = min(int(n), AUDIT_N)
    worst = 0.0
    for r in range(reps):
        path = mixing.generate_path(st.process, k, st.seeds.rng(mixing.STREAM_PATH, r))
        a = vstat.v_features(comp, path)[0].values
        b = vstat.v_naive(comp, path).values
        scale = max(float(np.max(np.abs(b))), 1e-300)
        worst = max(worst, float(np.max(np.abs(a - b) / (np.abs(b) + AUDIT_RTOL * scale))))
    return worst


def auto_grid(T):
    lo, hi = np.quantile(T, AUTO_GRID_QUANTILES)
    if not hi > 0:
        return np.array([0.0])
    lo = lo if lo > 0 else hi * 1e-3
    if hi <= lo:
        hi = lo * 1.0001
    return np.geomspace(lo, hi, AUTO_GRID_POINTS)


# ---------------------------------------------------------------------------
# empirical tails


@dataclass
class EmpiricalTail:
    """Survival estimates ``P(T_p >= x)`` with Wilson 95% intervals."""

    x: np.ndarray
    phat: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    T: np.ndarray
    n: int
    p: int
    R: int
    clip_rate: float = 0.0
    audit: Optional[float] = None

    @classmethod
    def from_values(cls, T, x, n, p, **kw):
        T = np.asarray(T, dtype=float)
        x = np.asarray(x, dtype=float)
        counts = np.array([(T >= xv).sum() for xv in x])
        R = T.size
        lo, hi = proportion_confint(counts, R, alpha=0.05, method="wilson")
        phat = counts / R
        # keep the interval around the estimate despite rounding at 0 and 1
        lo = np.minimum(np.asarray(lo, dtype=float), phat)
        hi = np.maximum(np.asarray(hi, dtype=float), phat)
        return cls(x, phat, lo, hi, T, int(n), int(p), R, **kw)

    def rows(self):
        return list(zip(self.x, self.phat, self.lo, self.hi))


def run_tail_experiment(cfg, n=None, R=None, x_grid=None, st=None):
    """Empirical tail of ``T_p`` over ``R`` replications at length ``n``."""
    st = st or setup(cfg)
    n = int(n if n is not None else cfg.nList[0])
    R = int(R if R is not None else cfg.R)
    p = cfg.level
    if x_grid is None:
        x_grid = cfg.xGrid
    if isinstance(x_grid, str):
        pilot, _ = replicate_T(st, n, p, range(max(5, R // 10)), mixing.STREAM_PILOT)
        x_grid = auto_grid(pilot)
    T, left = replicate_T(st, n, p, range(R))
    return EmpiricalTail.from_values(T, x_grid, n, p, clip_rate=float(left.mean()),
                                     audit=audit(st, n, p))


# ---------------------------------------------------------------------------
# bound constants for a config


def config_gammas(cfg, process=None):
    process = process or mixing.ProcessSpec(cfg.process, cfg.processParams, cfg.d, cfg.clip)
    g1, g2 = process.gammas
    return (cfg.gamma1 if cfg.gamma1 is not None else g1,
            cfg.gamma2 if cfg.gamma2 is not None else g2)


def config_constants(cfg, n, p, st=None, kernel=None):
    """Bound constants for the config's kernel at ``(n, p)``."""
    kernel = kernel or (st.kernel if st else
                        kernels.make_kernel(cfg.kernel, m=cfg.m, d=cfg.d, **cfg.kernelParams))
    g1, g2 = config_gammas(cfg)
    variant = cfg.bound
    if variant == "auto":
        if kernel.m == 2 and kernel.shift_invariant:
            variant = "cor2" if kernel.pd else "cor1"
        else:
            variant = "theorem1"
    common = dict(m=cfg.m, p=p, n=n, gamma1=g1, gamma2=g2, C=cfg.C)
    if variant == "cor2":
        return bounds.constants_for("cor2", f0_zero=kernel.value_at_zero(), **common)
    if variant == "cor1":
        return bounds.constants_for("cor1", fhat0_l1=kernels.fourier_l1_norm(kernel), **common)
    if variant == "theorem1":
        return bounds.constants_for("theorem1", fhat_l1=kernels.fourier_l1_norm(kernel), **common)
    if variant in ("cor3", "cor4"):
        if cfg.L is None or cfg.eps is None:
            raise ValidationError(f"{variant} needs L and eps in the config", "L")
        return bounds.constants_for(variant, L=cfg.L, eps=cfg.eps, d=cfg.d, **common)
    st = st or setup(cfg)
    exp = st.expansion
    mu1 = hoeffding.basis_moments(exp, st.marginal, 1, 20000,
                                  st.seeds.sequence(mixing.STREAM_MARGINAL, 1)).value
    mu3 = hoeffding.basis_moments(exp, st.marginal, 3, 20000,
                                  st.seeds.sequence(mixing.STREAM_MARGINAL, 3)).value
    return bounds.lemma3_constants(exp.F, exp.B, mu1, mu3, g1, g2, n, p, cfg.m, C=cfg.C)


# ---------------------------------------------------------------------------
# calibration


@dataclass
class CalibrationReport:
    C: float
    capped: bool
    binding_x: Optional[float]
    per_x: np.ndarray
    x: np.ndarray
    constants: bounds.BoundConstants

    def dominates(self, tail, bc=None, use="phat"):
        """Whether the bound with ``C`` lies above ``tail`` at every grid x."""
        bc = (bc or self.constants).with_C(self.C)
        curve = np.atleast_1d(bounds.tail_bound(bc, x=tail.x))
        target = tail.phat if use == "phat" else tail.hi
        return bool(np.all(curve >= target)), curve


def _c_for(bc, n, p, x, level):
    return (math.log(6.0 / level) * (bc.A ** (1.0 / p) + x ** (1.0 / p) * bc.M ** (1.0 / p))
            / (n * x ** (2.0 / p)))


def calibrate_C(tail, bc, n=None, p=None):
    """Largest ``C`` whose bound stays above the upper Wilson limit.

    The exponent is linear in ``C``, so each grid point gives the closed-form
    ``C_x = log(6 / U(x)) (A^{1/p} + x^{1/p} M^{1/p}) / (n x^{2/p})``.
    """
    n = tail.n if n is None else int(n)
    p = tail.p if p is None else int(p)
    per_x = np.full(tail.x.shape, np.inf)
    use = (tail.phat > 0) & (tail.x > 0)
    for i in np.flatnonzero(use):
        per_x[i] = _c_for(bc, n, p, tail.x[i], tail.hi[i])
    if not np.any(use):
        return CalibrationReport(C_CAP, True, None, per_x, tail.x, bc.with_C(C_CAP))
    i = int(np.argmin(per_x))
    C = float(min(per_x[i], C_CAP))
    return CalibrationReport(C, C >= C_CAP, float(tail.x[i]), per_x, tail.x, bc.with_C(C))


@dataclass
class DominanceResult:
    calibration: CalibrationReport
    calibration_tail: EmpiricalTail
    fresh: list
    checks: list

    @property
    def passed(self):
        return all(ok for ok, _ in self.checks)


def dominance_study(cfg, n_cal=None, n_fresh=None, R=None):
    """Calibrate ``C`` at ``n_cal`` and test the same ``C`` on fresh tails."""
    st = setup(cfg)
    n_cal = int(n_cal or cfg.nList[0])
    fresh_ns = [int(n_fresh)] if n_fresh else [int(n) for n in cfg.nList[1:]]
    p = cfg.level
    tail = run_tail_experiment(cfg, n_cal, R, st=st)
    report = calibrate_C(tail, config_constants(cfg, n_cal, p, st), n_cal, p)
    fresh, checks = [], []
    for j, n in enumerate(fresh_ns):
        # fresh replications: a disjoint block of substream ids
        offset = (j + 1) * 10 ** 6
        R_ = int(R or cfg.R)
        pilot, _ = replicate_T(st, n, p, range(offset, offset + max(5, R_ // 10)),
                               mixing.STREAM_PILOT)
        T, _ = replicate_T(st, n, p, range(offset, offset + R_))
        ft = EmpiricalTail.from_values(T, auto_grid(pilot), n, p)
        fresh.append(ft)
        checks.append(report.dominates(ft, config_constants(cfg, n, p, st)))
    return DominanceResult(report, tail, fresh, checks)


# ---------------------------------------------------------------------------
# scaling and approximation studies


@dataclass
class ScalingReport:
    n: np.ndarray
    median: np.ndarray
    scaled: np.ndarray
    p: int

    @property
    def spread(self):
        pos = self.scaled[self.scaled > 0]
        if pos.size < self.scaled.size or pos.size == 0:
            return float("nan") if pos.size else 1.0
        return float(pos.max() / pos.min())


def scaling_study(cfg, p=None, st=None):
    """Median ``T_p`` per ``n`` and its rescaling by ``n^{p/2}``."""
    ns = [int(n) for n in cfg.nList]
    if len(ns) < 3:
        raise ValidationError("scaling study needs at least three values of n", "nList")
    st = st or setup(cfg)
    p = int(p or cfg.level)
    med = []
    for j, n in enumerate(ns):
        reps = range(j * 10 ** 6, j * 10 ** 6 + cfg.R)
        T, _ = replicate_T(st, n, p, reps)
        med.append(float(np.median(T)))
    med = np.array(med)
    n_arr = np.array(ns)
    return ScalingReport(n_arr, med, med * n_arr.astype(float) ** (p / 2.0), p)


@dataclass
class ConvergenceTable:
    D: np.ndarray
    median: np.ndarray
    errors: np.ndarray
    slope: float


def rff_convergence_study(kernel, D_list, M, seeds, grid_points=41, builder=None,
                          master=0):
    """Median sup-grid error per feature count and the log-log slope."""
    D_list = [int(D) for D in D_list]
    if len(D_list) < 3:
        raise ValidationError("need at least three feature counts", "DList")
    build = builder or (lambda D, s: rff.build_expansion(kernel, D, s))
    parts = rff.decompose_sign_measure(kernel) if builder is None else None
    if parts is not None:
        build = lambda D, s: rff.build_expansion(kernel, D, s, parts=parts)  # noqa: E731
    errs = np.array([[rff.uniform_error(build(D, np.random.SeedSequence(master, spawn_key=(D, s))),
                                        kernel, M, grid_points)
                      for s in range(int(seeds))] for D in D_list])
    med = np.median(errs, axis=1)
    if np.all(med > 0):
        slope = float(np.polyfit(np.log(D_list), np.log(med), 1)[0])
    else:
        slope = float("nan")
    return ConvergenceTable(np.array(D_list), med, errs, slope)
