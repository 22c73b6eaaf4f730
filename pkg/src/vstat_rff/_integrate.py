"""Half-line quadrature with a range-doubling tail test.

Integrals of nonnegative functions over ``[0, inf)`` are accumulated over
the segments ``[0, 1], [1, 2], [2, 4], ...``. The loop stops when

* the latest increment is below ``abs_tol`` (converged), or
* two consecutive Aitken extrapolations of the partial sums agree to
  ``ACCEL_TOL`` (power-law tails give increments with an asymptotically
  constant ratio ``2**(1 - s)``, which Aitken's process sums exactly), or
* the ratio stays at or above ``DIVERGENCE_RATIO``: the integral is
  reported as ``inf``.
"""

import math
import warnings

import numpy as np
from scipy import integrate

from .errors import NumericError

DIVERGENCE_RATIO = 0.985
RATIO_STABILITY = 0.02
ACCEL_TOL = 1e-7
MAX_DOUBLINGS = 14


def _segment(func, a, b, epsabs):
    limit = int(min(max(200, 60 * (b - a)), 50000))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err = integrate.quad(func, a, b, limit=limit, epsabs=epsabs,
                                    epsrel=1e-11)
    return value, err


def _aitken(s0, s1, s2):
    d2 = s2 - 2.0 * s1 + s0
    if d2 == 0.0:
        return s2
    return s2 - (s2 - s1) ** 2 / d2


def _doubling(core, shell, abs_tol):
    total, residual = core()
    incs, sums = [], []
    a = 1.0
    for _ in range(MAX_DOUBLINGS + 1):
        inc, err = shell(a, 2.0 * a)
        total += inc
        residual += err
        incs.append(abs(inc))
        sums.append(total)
        a *= 2.0
        if abs(inc) < abs_tol:
            return total, residual
        if len(incs) < 5:
            continue
        prev2, prev1, last = incs[-3:]
        if prev1 == 0.0 or prev2 == 0.0:
            continue
        r1, r2 = last / prev1, prev1 / prev2
        if r1 >= DIVERGENCE_RATIO and r2 >= DIVERGENCE_RATIO:
            return math.inf, residual
        # Aitken extrapolation of the dyadic partial sums; stop once two
        # consecutive extrapolations agree
        older = _aitken(*sums[-4:-1])
        newer = _aitken(*sums[-3:])
        gap = abs(newer - older)
        if r1 < DIVERGENCE_RATIO and gap < ACCEL_TOL * max(1.0, abs(newer)):
            return newer, residual + gap
    if r1 < DIVERGENCE_RATIO and abs(r1 - r2) < RATIO_STABILITY:
        return newer, residual + gap
    raise NumericError(
        f"tail test did not settle by radius {a:g}", residual=incs[-1])


def half_line(func, abs_tol=1e-10, epsabs=1e-13):
    """Integrate a nonnegative scalar function over ``[0, inf)``.

    Returns ``(value, residual)``; ``value`` is ``math.inf`` when the tail
    test classifies the integral as divergent.
    """
    return _doubling(lambda: _segment(func, 0.0, 1.0, epsabs),
                     lambda a, b: _segment(func, a, b, epsabs), abs_tol)


def real_line(func, abs_tol=1e-10, even=False):
    """Integrate a nonnegative scalar function over the real line."""
    right, res_r = half_line(func, abs_tol)
    if even:
        return 2.0 * right, 2.0 * res_r
    left, res_l = half_line(lambda u: func(-u), abs_tol)
    return right + left, res_r + res_l


def finite(func, a, b, points=None, epsabs=1e-12):
    """Plain adaptive quadrature on a finite interval."""
    if points is not None:
        points = [p for p in points if a < p < b] or None
    limit = int(min(max(200, 60 * (b - a)), 50000))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err = integrate.quad(func, a, b, points=points, limit=limit,
                                    epsabs=epsabs, epsrel=1e-11)
    return value, err


def whole_space(func, k, abs_tol=1e-8):
    """Integrate a nonnegative function of ``k`` scalar arguments over R^k.

    Shells ``W < max|u_l| <= 2W`` are split into ``2k`` boxes (the first
    coordinate leaving ``[-W, W]`` picks the box) and integrated with
    ``scipy.integrate.nquad``. Only practical for smooth integrands and
    ``k <= 3``.
    """
    opts = {"limit": 200, "epsabs": 1e-12, "epsrel": 1e-9}

    def box(ranges):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            return integrate.nquad(func, ranges, opts=[opts] * k)

    def core():
        return box([(-1.0, 1.0)] * k)

    def shell(a, b):
        value = err = 0.0
        for lead in range(k):
            for side in ((a, b), (-b, -a)):
                ranges = ([(-a, a)] * lead + [side]
                          + [(-b, b)] * (k - lead - 1))
                v, e = box(ranges)
                value += v
                err += e
        return value, err

    return _doubling(core, shell, abs_tol)
