"""Explicit constants and tail bounds for maximal V-statistics.

All bounds share the bracket ``64 gamma1^{1/3} / (1 - exp(-gamma2/3)) +
(log n)^4 / n`` raised to the power ``p``; logarithms are natural.  The
constant ``C`` in the exponent is not given in closed form and is carried
as an explicit field (default 1) to be calibrated empirically.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ValidationError
from .kernels import polar_constant

VARIANTS = ("theorem1", "cor1", "cor2", "cor3", "cor4", "lemma3")


@dataclass(frozen=True)
class MixingConstants:
    gamma1: float
    gamma2: float

    def __post_init__(self):
        if not (self.gamma1 > 0 and self.gamma2 > 0):
            raise ValidationError("mixing constants must be positive", "gamma")

    @property
    def geometric(self):
        """``64 gamma1^{1/3} / (1 - exp(-gamma2/3))``; ``gamma2 = inf`` is allowed."""
        return 64.0 * self.gamma1 ** (1.0 / 3.0) / -math.expm1(-self.gamma2 / 3.0)


@dataclass(frozen=True)
class BoundConstants:
    A: float
    M: float
    p: int
    n: int
    provenance: str
    C: float = 1.0
    inputs: dict = field(default_factory=dict)

    def with_C(self, C):
        return BoundConstants(self.A, self.M, self.p, self.n, self.provenance, float(C),
                              dict(self.inputs))

    def to_dict(self):
        return asdict(self)


def _check_common(m, p, n):
    if int(n) < 3:
        raise ValidationError("n must be at least 3 so that log n > 1", "n")
    if not 1 <= int(p) <= int(m):
        raise ValidationError("need 1 <= p <= m", "p")


def bracket(gamma1, gamma2, n):
    return MixingConstants(gamma1, gamma2).geometric + math.log(n) ** 4 / n


def constants_for(variant, m, p, n, gamma1, gamma2, fhat_l1=None, fhat0_l1=None,
                  f0_zero=None, L=None, eps=None, d=None, C=1.0):
    """``(A_{p,n}, M_{p,n})`` for a named variant.

    ``theorem1`` takes ``fhat_l1``; ``cor1`` ``fhat0_l1``; ``cor2`` ``f0_zero``
    (PD case, ``m = 2``); ``cor3`` and ``cor4`` the Fourier tail constants
    ``L`` and ``eps`` plus ``d``.
    """
    _check_common(m, p, n)
    m, p, n = int(m), int(p), int(n)
    br = bracket(gamma1, gamma2, n) ** p
    logs = math.log(n) ** (2 * p)

    def need(name, value):
        if value is None or not value > 0:
            raise ValidationError(f"{variant} needs a positive {name}", name)
        return float(value)

    if variant == "theorem1":
        L1 = need("fhat_l1", fhat_l1)
        scale = 2.0 ** m * L1
    elif variant in ("cor1", "cor2", "cor4") and m != 2:
        raise ValidationError(f"{variant} is stated for m = 2", "m")
    elif variant == "cor1":
        scale = 4.0 * need("fhat0_l1", fhat0_l1)
    elif variant == "cor2":
        scale = 2.0 * need("f0_zero", f0_zero)
    elif variant in ("cor3", "cor4"):
        Lc, e, dd = need("L", L), need("eps", eps), int(need("d", d))
        if variant == "cor3":
            scale = (1.0 + 1.0 / e) * 2.0 ** m * polar_constant(m * dd) * Lc
        else:
            scale = 4.0 * (1.0 + 1.0 / e) * polar_constant(dd) * Lc
    else:
        raise ValidationError(f"unknown bound variant {variant!r}", "variant")
    inputs = {k: v for k, v in dict(m=m, gamma1=gamma1, gamma2=gamma2, fhat_l1=fhat_l1,
                                     fhat0_l1=fhat0_l1, f0_zero=f0_zero, L=L, eps=eps,
                                     d=d).items() if v is not None}
    return BoundConstants(scale * scale * br, scale * logs, p, n, variant, float(C), inputs)


def lemma3_constants(F, B, mu1, mu3, gamma1, gamma2, n, p, m, C=1.0):
    """Constants for a bounded tensor expansion.

    ``sigma^2 = 64 gamma1^{1/3} mu3^2 / (1 - exp(-gamma2/3))``,
    ``A = mu1^{2(m-p)} F^2 (sigma^2 + B^2 (log n)^4 / n)^p`` and
    ``M = mu1^{m-p} F B^p (log n)^{2p}``.
    """
    _check_common(m, p, n)
    if not (F > 0 and B > 0):
        raise ValidationError("F and B must be positive", "F")
    if mu1 < 0 or mu3 < 0:
        raise ValidationError("basis moments must be nonnegative", "mu")
    sigma2 = MixingConstants(gamma1, gamma2).geometric * mu3 ** 2
    ln = math.log(n)
    A = mu1 ** (2 * (m - p)) * F ** 2 * (sigma2 + B ** 2 * ln ** 4 / n) ** p
    M = mu1 ** (m - p) * F * B ** p * ln ** (2 * p)
    inputs = dict(F=F, B=B, mu1=mu1, mu3=mu3, gamma1=gamma1, gamma2=gamma2, m=m,
                  sigma2=sigma2)
    return BoundConstants(A, M, int(p), int(n), "lemma3", float(C), inputs)


def tail_bound(bc, n=None, p=None, x=0.0):
    """``6 exp(-C n x^{2/p} / (A^{1/p} + x^{1/p} M^{1/p}))``, vectorized in x."""
    n = bc.n if n is None else int(n)
    p = bc.p if p is None else int(p)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValidationError("x must be nonnegative", "x")
    expo = bc.C * n * x ** (2.0 / p) / (bc.A ** (1.0 / p) + x ** (1.0 / p) * bc.M ** (1.0 / p))
    out = 6.0 * np.exp(-expo)
    return float(out) if out.ndim == 0 else out


def combined_tail_bound(bcs, r, m, n, x):
    """Sum of the per-level bounds for ``p = r..m``."""
    if not 1 <= int(r) <= int(m):
        raise ValidationError("need 1 <= r <= m", "r")
    terms = [tail_bound(bcs[p], n, p, x) for p in range(int(r), int(m) + 1)]
    return np.sum(terms, axis=0) if np.ndim(x) else float(sum(terms))


@dataclass
class TailCurve:
    x: np.ndarray
    values: np.ndarray
    constants: BoundConstants

    @classmethod
    def build(cls, bc, x):
        x = np.asarray(x, dtype=float)
        return cls(x, np.atleast_1d(tail_bound(bc, x=x)), bc)

    def to_csv(self, fh, header=()):
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "bound"])
        for a, b in zip(self.x, self.values):
            w.writerow([repr(float(a)), repr(float(b))])

    def to_dict(self):
        return {"x": self.x.tolist(), "bound": self.values.tolist(),
                "constants": self.constants.to_dict()}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)
