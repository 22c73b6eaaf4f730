"""Catalog of symmetric kernels and their Fourier-side quantities.

Every built-in kernel is generated by a one-dimensional *profile* and extended
to several coordinates as a product, ``f0(z) = prod_l profile(z_l)``.  A
:class:`KernelSpec` then turns the profile into a kernel of order ``m``:

* shift-invariant (``m = 2``): ``f(x, y) = f0(x - y)`` with ``f0`` on R^d;
* order one: ``f(x) = f0(x)``;
* otherwise: ``f(x_1, ..., x_m) = f0(x_1, ..., x_m)`` on R^{md}, which is
  symmetric under permutation of the ``m`` blocks because ``f0`` is a
  coordinate-wise product.

Fourier transforms follow ``fhat(u) = int f(x) exp(-2 pi i u.x) dx``.  For a
shift-invariant kernel all Fourier quantities refer to the base ``f0`` on R^d
(the full kernel is not integrable on R^{2d}); otherwise they refer to ``f``
on R^{md}.  :meth:`KernelSpec.fourier_dim` gives the dimension in use.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import integrate, special

from . import _integrate
from .errors import NumericError, UnsupportedKernelError, ValidationError

KERNEL_NAMES = ("gaussian", "cauchy", "laplacian", "hat", "cosine")
KINDS = KERNEL_NAMES + ("custom-grid",)

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# one-dimensional profiles


class Profile:
    """A one-dimensional building block ``phi`` and its Fourier transform."""

    name = "profile"
    pd = False
    even = True
    lipschitz = None
    sup = 1.0
    kinks: tuple = ()
    support: Optional[tuple] = None
    #: rejection proposal scale (Cauchy envelope) for frequency sampling
    proposal_scale = 1.0

    def value(self, x):
        raise NotImplementedError

    def ft(self, u):
        raise NotImplementedError

    def at_zero(self):
        return float(self.value(np.zeros(1))[0])

    def sample_positive(self, rng, size):
        """Draw from ``ft+ / mass`` analytically; ``None`` if unavailable."""
        return None


class GaussianProfile(Profile):
    name = "gaussian"
    pd = True
    lipschitz = math.exp(-0.5)

    def value(self, x):
        return np.exp(-0.5 * np.square(x))

    def ft(self, u):
        return math.sqrt(TWO_PI) * np.exp(-2.0 * math.pi ** 2 * np.square(u))

    def sample_positive(self, rng, size):
        return rng.normal(0.0, 1.0 / TWO_PI, size)


class CauchyProfile(Profile):
    name = "cauchy"
    pd = True
    sup = 2.0
    # max of |d/dx 2/(1+x^2)| is attained at x = 1/sqrt(3)
    lipschitz = 3.0 * math.sqrt(3.0) / 4.0

    def value(self, x):
        return 2.0 / (1.0 + np.square(x))

    def ft(self, u):
        return TWO_PI * np.exp(-TWO_PI * np.abs(u))

    def sample_positive(self, rng, size):
        return rng.laplace(0.0, 1.0 / TWO_PI, size)


class LaplacianProfile(Profile):
    name = "laplacian"
    pd = True
    lipschitz = 1.0
    kinks = (0.0,)

    def value(self, x):
        return np.exp(-np.abs(x))

    def ft(self, u):
        return 2.0 / (1.0 + (TWO_PI * np.asarray(u, dtype=float)) ** 2)

    def sample_positive(self, rng, size):
        return rng.standard_cauchy(size) / TWO_PI


class HatProfile(Profile):
    name = "hat"
    pd = True
    lipschitz = 1.0
    kinks = (-1.0, 0.0, 1.0)
    support = (-1.0, 1.0)

    def value(self, x):
        return np.maximum(0.0, 1.0 - np.abs(x))

    def ft(self, u):
        # (1 - cos 2 pi u) / (2 pi^2 u^2) == sinc(u)^2
        return np.square(np.sinc(u))


class CosineProfile(Profile):
    name = "cosine"
    pd = False
    lipschitz = 1.0
    kinks = (-math.pi / 2, math.pi / 2)
    support = (-math.pi / 2, math.pi / 2)
    proposal_scale = 0.25

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(np.abs(x) <= math.pi / 2, np.cos(x), 0.0)

    def ft(self, u):
        u = np.asarray(u, dtype=float)
        den = 1.0 - 4.0 * math.pi ** 2 * np.square(u)
        near = np.abs(den) < 1e-7
        safe = np.where(near, 1.0, den)
        out = 2.0 * np.cos(math.pi ** 2 * u) / safe
        # removable singularity at |u| = 1/(2 pi): int cos^2 = pi/2
        return np.where(near, math.pi / 2, out)


class GridProfile(Profile):
    """Tabulated profile on a uniform grid, linearly interpolated.

    The interpolant is a sum of scaled hat functions, so its transform is
    available in closed form; it is the transform of the interpolant, not of
    whatever function the table was sampled from (``certified = False``).
    """

    name = "custom-grid"
    certified = False

    def __init__(self, xs, values):
        xs = np.asarray(xs, dtype=float)
        values = np.asarray(values, dtype=float)
        if xs.ndim != 1 or xs.shape != values.shape or xs.size < 2:
            raise ValidationError("grid kernel needs matching 1-d xs/values")
        steps = np.diff(xs)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9):
            raise ValidationError("grid kernel needs a uniform increasing grid")
        self.xs = xs
        self.values = values
        self.step = float(steps[0])
        self.even = bool(np.allclose(xs, -xs[::-1])
                         and np.allclose(values, values[::-1]))
        slopes = np.abs(np.diff(np.concatenate([[0.0], values, [0.0]])))
        self.lipschitz = float(slopes.max() / self.step)
        self.sup = float(np.abs(values).max())
        self.kinks = tuple(xs.tolist())
        self.support = (float(xs[0] - self.step), float(xs[-1] + self.step))
        self.proposal_scale = 1.0 / self.step

    def value(self, x):
        return np.interp(x, self.xs, self.values, left=0.0, right=0.0)

    def ft(self, u):
        u = np.asarray(u, dtype=float)
        env = self.step * np.square(np.sinc(u * self.step))
        phase = np.exp(-2j * math.pi * u[..., None] * self.xs)
        out = env * (phase @ self.values)
        if self.even:
            return out.real
        return out


_PROFILES = {
    "gaussian": GaussianProfile,
    "cauchy": CauchyProfile,
    "laplacian": LaplacianProfile,
    "hat": HatProfile,
    "cosine": CosineProfile,
}


# ---------------------------------------------------------------------------
# kernel specifications


def _as_points(x, d):
    a = np.asarray(x, dtype=float)
    if d == 1 and (a.ndim == 0 or a.shape[-1] != 1):
        a = a[..., None]
    if a.shape[-1] != d:
        raise ValidationError(f"expected points of dimension {d}, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A symmetric kernel of order ``m`` on inputs in R^d.

    Use :func:`make_kernel` rather than constructing directly.
    """

    kind: str
    m: int
    d: int
    shift_invariant: bool
    pd: bool
    lipschitz_constant: Optional[float]
    params: Mapping = field(default_factory=dict)
    profile: Profile = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown kernel kind {self.kind!r}", "kernel")
        if self.m < 1 or self.d < 1:
            raise ValidationError("m and d must be positive integers")
        if self.shift_invariant and self.m not in (1, 2):
            raise ValidationError("shift-invariant kernels have order 2")
        if self.shift_invariant and not self.profile.even:
            raise ValidationError("shift-invariant kernels need an even base")

    @property
    def name(self):
        return self.kind

    @property
    def order(self):
        return self.m

    @property
    def fourier_dim(self):
        return self.d if (self.shift_invariant or self.m == 1) else self.m * self.d

    # -- space domain -------------------------------------------------------

    def base(self, z):
        """Evaluate the product base ``f0`` on points ``z`` of shape (..., k)."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] == 1:
            return self.profile.value(z[..., 0])
        return np.prod(self.profile.value(z), axis=-1)

    def __call__(self, *args):
        """Vectorized evaluation; each argument has shape (..., d)."""
        if len(args) != self.m:
            raise ValidationError(f"kernel of order {self.m} got {len(args)} arguments")
        pts = [_as_points(a, self.d) for a in args]
        if self.m == 1:
            return self.base(pts[0])
        if self.shift_invariant:
            return self.base(pts[0] - pts[1])
        return self.base(np.concatenate(np.broadcast_arrays(*pts), axis=-1))

    def value_at_zero(self):
        """``f0(0)`` for shift-invariant kernels, ``f(0, ..., 0)`` otherwise."""
        return self.profile.at_zero() ** self.fourier_dim

    # -- Fourier domain -----------------------------------------------------

    def transform(self, u):
        u = np.asarray(u, dtype=float)
        k = self.fourier_dim
        if k == 1 and (u.ndim == 0 or u.shape[-1] != 1):
            u = u[..., None]
        if u.shape[-1] != k:
            raise ValidationError(f"frequency must have dimension {k}")
        return np.prod(self.profile.ft(u), axis=-1)


_PROFILE_INSTANCES = {}


def make_kernel(name, m=2, d=1, shift_invariant=None, **params):
    """Build a :class:`KernelSpec` from a registry name.

    ``custom-grid`` kernels take ``xs`` and ``values`` keyword arguments that
    tabulate the one-dimensional profile.

    >>> make_kernel("gaussian")(0.0, 0.0)
    1.0
    """
    if name == "custom-grid":
        if "xs" not in params or "values" not in params:
            raise ValidationError("custom-grid kernels need xs and values", "kernel")
        profile = GridProfile(params["xs"], params["values"])
    elif name in _PROFILES:
        # catalog profiles are stateless; sharing one instance per name lets
        # the quadrature caches hit across kernels
        profile = _PROFILE_INSTANCES.setdefault(name, _PROFILES[name]())
    else:
        raise ValidationError(f"unknown kernel {name!r}; expected one of {KINDS}", "kernel")
    if shift_invariant is None:
        shift_invariant = m == 2
    k = d if (shift_invariant or m == 1) else m * d
    lip = None
    if profile.lipschitz is not None:
        lip = math.sqrt(k) * profile.lipschitz * profile.sup ** (k - 1)
    return KernelSpec(kind=name, m=int(m), d=int(d),
                      shift_invariant=bool(shift_invariant), pd=profile.pd,
                      lipschitz_constant=lip, params=dict(params), profile=profile)


@dataclass(frozen=True)
class FunctionKernel:
    """Wrap a plain vectorized callable as a kernel of order ``m``.

    Used for zero/constant kernels and hand-built test kernels; Fourier-side
    operations are not available.
    """

    func: Callable
    m: int
    d: int = 1
    name: str = "function"

    @property
    def order(self):
        return self.m

    def __call__(self, *args):
        if len(args) != self.m:
            raise ValidationError(f"kernel of order {self.m} got {len(args)} arguments")
        pts = [_as_points(a, self.d) for a in args]
        shape = np.broadcast_shapes(*(p.shape[:-1] for p in pts))
        return np.broadcast_to(np.asarray(self.func(*pts), dtype=float), shape)


def constant_kernel(c, m=2, d=1):
    return FunctionKernel(lambda *xs: np.full(np.broadcast_shapes(*(x.shape[:-1] for x in xs)), float(c)),
                          m, d, name=f"constant({c})")


def zero_kernel(m=2, d=1):
    return constant_kernel(0.0, m, d)


def eval_kernel(spec, *points):
    """Evaluate a kernel at a single tuple of points and return a float."""
    order = getattr(spec, "m", None)
    if len(points) != order:
        raise ValidationError(f"kernel of order {order} needs {order} points, got {len(points)}")
    pts = []
    for p in points:
        a = np.atleast_1d(np.asarray(p, dtype=float))
        if a.shape != (spec.d,):
            raise ValidationError(f"each point must have dimension {spec.d}, got {a.shape}")
        pts.append(a)
    return float(spec(*pts))


# ---------------------------------------------------------------------------
# Fourier quantities


def fourier_transform(spec, u, method="analytic"):
    """Fourier transform of the kernel (or of its base when shift-invariant).

    ``method="quadrature"`` integrates the space-domain profile numerically,
    coordinate by coordinate, and is used as an independent check of the
    analytic forms.
    """
    if method == "analytic":
        val = spec.transform(u)
        return complex(val) if np.ndim(val) == 0 else val
    if method != "quadrature":
        raise ValidationError(f"unknown method {method!r}")
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (spec.fourier_dim,):
        raise ValidationError(f"frequency must have dimension {spec.fourier_dim}")
    out = 1.0 + 0.0j
    for ul in u:
        out *= profile_transform_quad(spec.profile, float(ul))
    return out


def _space_limits(profile):
    if profile.support is not None:
        return profile.support
    return (-math.inf, math.inf)


def profile_transform_quad(profile, u, tol=1e-10):
    """Quadrature of ``int phi(x) exp(-2 pi i u x) dx`` for a 1-d profile."""
    lo, hi = _space_limits(profile)
    w = TWO_PI * u
    f = lambda x: float(profile.value(np.array([x]))[0])
    parts = []
    for weight in ("cos", "sin"):
        if weight == "sin" and (profile.even or u == 0.0):
            parts.append((0.0, 0.0))
            continue
        if math.isinf(lo):
            # oscillatory Fourier integrals on half lines
            if u == 0.0:
                res = integrate.quad(f, -math.inf, math.inf, epsabs=tol, limit=500)
            else:
                pos = integrate.quad(f, 0, math.inf, weight=weight, wvar=w,
                                     epsabs=tol, limlst=200)
                neg = integrate.quad(lambda x: f(-x), 0, math.inf, weight=weight,
                                     wvar=w, epsabs=tol, limlst=200)
                sign = 1.0 if weight == "cos" else -1.0
                res = (pos[0] + sign * neg[0], pos[1] + neg[1])
        else:
            pts = [p for p in profile.kinks if lo < p < hi]
            if u == 0.0:
                res = integrate.quad(f, lo, hi, points=pts or None, epsabs=tol, limit=500)
            else:
                g = (lambda x: f(x) * math.cos(w * x)) if weight == "cos" else \
                    (lambda x: f(x) * math.sin(w * x))
                limit = int(max(200, 40 * abs(u) * (hi - lo)))
                res = integrate.quad(g, lo, hi, points=pts or None, epsabs=tol,
                                     limit=limit)
        if res[1] > 1e3 * tol + 1e-8:
            raise NumericError(f"Fourier quadrature did not converge at u={u}",
                               residual=res[1])
        parts.append(res)
    re, im = parts[0][0], -parts[1][0]
    return complex(re, im)


def _abs_ft_1d(profile, q=0.0, part=None):
    """Scalar integrand ``|phi_hat(u)| |u|^q`` (or a sign part of it)."""

    def g(u):
        v = profile.ft(np.array([u]))[0]
        if part == "re+":
            v = max(float(np.real(v)), 0.0)
        elif part == "re-":
            v = max(-float(np.real(v)), 0.0)
        elif part == "im+":
            v = max(float(np.imag(v)), 0.0)
        elif part == "im-":
            v = max(-float(np.imag(v)), 0.0)
        else:
            v = abs(v)
        return v * abs(u) ** q if q else v

    return g


@functools.lru_cache(maxsize=256)
def _profile_integral(profile, q=0.0, part=None):
    val, _ = _integrate.real_line(_abs_ft_1d(profile, q, part), even=profile.even)
    return val


def profile_masses(profile):
    """Masses of the positive/negative parts of Re and Im of ``phi_hat``."""
    if profile.even:
        return {"re+": _profile_integral(profile, 0.0, "re+"),
                "re-": _profile_integral(profile, 0.0, "re-"),
                "im+": 0.0, "im-": 0.0}
    return {p: _profile_integral(profile, 0.0, p) for p in ("re+", "re-", "im+", "im-")}


def fourier_l1_norm(spec, method="auto"):
    """``||fhat||_{L1}``; ``auto`` uses the Bochner shortcut for PD kernels."""
    if method not in ("auto", "quadrature"):
        raise ValidationError(f"unknown method {method!r}")
    k = spec.fourier_dim
    if method == "auto" and spec.pd:
        return spec.value_at_zero()
    one = _profile_integral(spec.profile, 0.0, None)
    return one ** k


def fourier_moment(spec, q, method="auto"):
    """``mu_q = int |fhat(u)| ||u||^q du``; ``math.inf`` when divergent."""
    q = float(q)
    if q < 0:
        raise ValidationError("moment order must be nonnegative", "q")
    if q == 0.0:
        return fourier_l1_norm(spec, method)
    k = spec.fourier_dim
    prof = spec.profile
    if method == "auto" and isinstance(prof, GaussianProfile):
        # radial closed form: (2 pi)^{k/2} |S^{k-1}| Gamma(s/2) / (2 a^{s/2})
        s, a = q + k, 2.0 * math.pi ** 2
        surface = 2.0 * math.pi ** (k / 2) / math.gamma(k / 2)
        return (TWO_PI ** (k / 2) * surface * math.gamma(s / 2)
                / (2.0 * a ** (s / 2)))
    if k == 1:
        return _profile_integral(prof, q, None)
    one = _profile_integral(prof, 0.0, None)
    if q == 2.0:
        # ||u||^2 = sum_l u_l^2 factorizes over the product transform
        second = _profile_integral(prof, 2.0, None)
        return k * second * one ** (k - 1)
    if k > 3:
        raise UnsupportedKernelError("moments in more than 3 Fourier dimensions")

    def integrand(*u):
        v = abs(complex(spec.transform(np.array(u))))
        return v * math.sqrt(sum(x * x for x in u)) ** q

    val, _ = _integrate.whole_space(integrand, k)
    return val


def fourier_moment_truncated(spec, q, radius):
    """``int_{|u| <= radius} |fhat(u)| |u|^q du`` for one-dimensional transforms."""
    if spec.fourier_dim != 1:
        raise UnsupportedKernelError("truncated moments are one-dimensional only")
    g = _abs_ft_1d(spec.profile, float(q))
    right, _ = _integrate.finite(g, 0.0, float(radius))
    if spec.profile.even:
        return 2.0 * right
    left, _ = _integrate.finite(lambda u: g(-u), 0.0, float(radius))
    return right + left


def _double_factorial(n):
    if n <= 0:
        return 1
    return math.prod(range(n, 0, -2))


def polar_constant(n):
    """Surface constant of the unit sphere in R^n from polar integration."""
    if int(n) != n or n < 1:
        raise ValidationError("polar constant needs a positive integer", "n")
    n = int(n)
    if n % 2 == 0:
        return TWO_PI ** (n // 2) / _double_factorial(n - 2)
    return 2.0 * TWO_PI ** ((n - 1) // 2) / _double_factorial(n - 2)


# ---------------------------------------------------------------------------
# mollification


def _gauss_smooth_1d(profile, h, x):
    """``int phi(x - h t) N(t) dt`` with the standard normal density ``N``."""
    f = lambda t: float(profile.value(np.array([x - h * t]))[0]) * \
        math.exp(-0.5 * t * t) / math.sqrt(TWO_PI)
    pts = [(x - k) / h for k in profile.kinks]
    lo, hi = -12.0, 12.0
    if profile.support is not None:
        lo = max(lo, (x - profile.support[1]) / h)
        hi = min(hi, (x - profile.support[0]) / h)
        if hi <= lo:
            return 0.0
    val, _ = _integrate.finite(f, lo, hi, points=pts, epsabs=1e-13)
    return val


@dataclass(frozen=True, eq=False)
class MollifiedKernel:
    """Gaussian smoothing of a kernel's base at scale ``h``.

    The transform is the parent transform damped by ``exp(-2 pi^2 h^2 |u|^2)``;
    space-domain values come from one-dimensional quadrature of the
    convolution, one coordinate at a time.
    """

    parent: KernelSpec
    h: float

    @property
    def fourier_dim(self):
        return self.parent.fourier_dim

    def transform(self, u):
        u = np.asarray(u, dtype=float)
        k = self.fourier_dim
        if k == 1 and (u.ndim == 0 or u.shape[-1] != 1):
            u = u[..., None]
        damp = np.exp(-2.0 * math.pi ** 2 * self.h ** 2 * np.sum(u * u, axis=-1))
        return self.parent.transform(u) * damp

    def base(self, z):
        z = np.asarray(z, dtype=float)
        k = self.fourier_dim
        if k == 1 and (z.ndim == 0 or z.shape[-1] != 1):
            z = z[..., None]
        flat = z.reshape(-1, k)
        vals = np.array([[_gauss_smooth_1d(self.parent.profile, self.h, float(c))
                          for c in row] for row in flat])
        return np.prod(vals, axis=-1).reshape(z.shape[:-1])


def mollify(spec, h):
    if not h > 0:
        raise ValidationError("mollifier scale must be positive", "h")
    return MollifiedKernel(spec, float(h))


def transform_of_smoothed_quad(mk, u):
    """Independent route: Fourier transform by quadrature of the space-domain
    convolution (one Fourier dimension only)."""
    if mk.fourier_dim != 1:
        raise UnsupportedKernelError("one-dimensional only")
    prof, h = mk.parent.profile, mk.h
    lo, hi = -math.inf, math.inf
    if prof.support is not None:
        lo, hi = prof.support[0] - 12.0 * h, prof.support[1] + 12.0 * h
    else:
        lo, hi = -60.0, 60.0
    w = TWO_PI * float(u)
    g = lambda x: _gauss_smooth_1d(prof, h, x) * math.cos(w * x)
    pts = list(prof.kinks)
    re, _ = _integrate.finite(g, lo, hi, points=pts, epsabs=1e-12)
    if prof.even:
        return complex(re, 0.0)
    gs = lambda x: _gauss_smooth_1d(prof, h, x) * math.sin(w * x)
    im, _ = _integrate.finite(gs, lo, hi, points=pts, epsabs=1e-12)
    return complex(re, -im)


# ---------------------------------------------------------------------------
# tail condition


@dataclass
class TailCheck:
    passed: bool
    worst_ratio: float
    worst_radius: float


def check_fourier_tail(spec, L, eps, grid):
    """Check ``|fhat(u)| <= L / (1 + |u|^{k + eps})`` along a radial grid.

    Each radius is probed along every coordinate axis (both signs) and the
    normalized diagonal.
    """
    radii = np.asarray(grid, dtype=float).ravel()
    if radii.size == 0:
        raise ValidationError("radial grid is empty", "grid")
    k = spec.fourier_dim
    dirs = [np.eye(k)[i] * s for i in range(k) for s in (1.0, -1.0)]
    if k > 1:
        dirs.append(np.ones(k) / math.sqrt(k))
    worst, at = -math.inf, float(radii[0])
    for dvec in dirs:
        u = radii[:, None] * dvec
        vals = np.abs(spec.transform(u))
        ratio = vals * (1.0 + np.abs(radii) ** (k + eps)) / L
        i = int(np.argmax(ratio))
        if ratio[i] > worst:
            worst, at = float(ratio[i]), float(radii[i])
    return TailCheck(passed=worst <= 1.0 + 1e-12, worst_ratio=worst, worst_radius=at)


def kernel_info(spec):
    """Summary dictionary used by the CLI ``kernel-info`` command."""
    info = {
        "kernel": spec.kind,
        "m": spec.m,
        "d": spec.d,
        "shift_invariant": spec.shift_invariant,
        "pd": spec.pd,
        "lipschitz": spec.lipschitz_constant,
        "f0(0)": spec.value_at_zero(),
        "fourier_l1": fourier_l1_norm(spec),
        "fourier_l1_quadrature": fourier_l1_norm(spec, "quadrature"),
        "fhat(0)": float(np.real(spec.transform(np.zeros(spec.fourier_dim)))),
    }
    return info
