"""JSON experiment configuration."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Union

from .errors import ValidationError
from .kernels import KINDS as KERNEL_KINDS
from .mixing import KINDS as PROCESS_KINDS, _ALIASES as PROCESS_ALIASES

BOUND_VARIANTS = ("auto", "theorem1", "cor1", "cor2", "cor3", "cor4", "lemma3")
MIN_REPLICATIONS = 50


@dataclass
class ExperimentConfig:
    """One experiment; field names follow the JSON keys."""

    kernel: str = "gaussian"
    process: str = "iid"
    m: int = 2
    p: Optional[int] = 2
    nList: list = field(default_factory=lambda: [128])
    R: int = 100
    seed: int = 0
    r: Optional[int] = None
    d: int = 1
    D: int = 1000
    xGrid: Union[str, list] = "auto"
    out: str = "out"
    kernelParams: dict = field(default_factory=dict)
    processParams: dict = field(default_factory=dict)
    clip: Optional[float] = None
    bound: str = "auto"
    gamma1: Optional[float] = None
    gamma2: Optional[float] = None
    C: float = 1.0
    L: Optional[float] = None
    eps: Optional[float] = None
    t: float = 0.1
    M: float = 2.0
    q: float = 2.0
    gridPoints: int = 41
    DList: list = field(default_factory=lambda: [250, 1000, 4000, 16000])
    seeds: int = 20

    def __post_init__(self):
        self.validate()

    def validate(self):
        def fail(name, msg):
            raise ValidationError(f"config field {name!r}: {msg}", name)

        if self.kernel not in KERNEL_KINDS:
            fail("kernel", f"unknown kernel {self.kernel!r}")
        if PROCESS_ALIASES.get(self.process, self.process) not in PROCESS_KINDS:
            fail("process", f"unknown process {self.process!r}")
        for name in ("m", "d", "R", "D", "seed", "gridPoints", "seeds"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                fail(name, "must be an integer")
        if not 1 <= self.m <= 4:
            fail("m", "must be in 1..4")
        if self.d < 1:
            fail("d", "must be positive")
        if self.R < MIN_REPLICATIONS:
            fail("R", f"must be at least {MIN_REPLICATIONS}")
        if self.D < 1:
            fail("D", "must be positive")
        if not 0 <= self.seed < 2 ** 64:
            fail("seed", "must be a 64-bit unsigned integer")
        if self.p is None and self.r is None:
            fail("p", "give p or r")
        if self.p is not None and not (isinstance(self.p, int) and 1 <= self.p <= self.m):
            fail("p", "must be an integer in 1..m")
        if self.r is not None and not (isinstance(self.r, int) and 1 <= self.r <= self.m):
            fail("r", "must be an integer in 1..m")
        if not isinstance(self.nList, list) or not self.nList or \
                any(isinstance(n, bool) or not isinstance(n, int) or n < 3 for n in self.nList):
            fail("nList", "must be a nonempty list of integers >= 3")
        if isinstance(self.xGrid, str):
            if self.xGrid != "auto":
                fail("xGrid", "must be 'auto' or a list of numbers")
        else:
            xs = list(self.xGrid)
            if not xs or any(not isinstance(x, (int, float)) or x < 0 for x in xs):
                fail("xGrid", "must hold nonnegative numbers")
            if xs != sorted(xs):
                fail("xGrid", "must be sorted ascending")
        if self.bound not in BOUND_VARIANTS:
            fail("bound", f"must be one of {BOUND_VARIANTS}")
        for name in ("gamma1", "gamma2", "clip", "L", "eps"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                fail(name, "must be positive")
        for name in ("C", "t", "M"):
            if not getattr(self, name) > 0:
                fail(name, "must be positive")
        if self.q < 1:
            fail("q", "must be at least 1")
        if self.seeds < 1:
            fail("seeds", "must be positive")

    @property
    def level(self):
        return self.p if self.p is not None else self.r

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def sha256(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        extra = sorted(set(doc) - known)
        if extra:
            raise ValidationError(f"unknown config field {extra[0]!r}", extra[0])
        return cls(**doc)


def load_config(path):
    """Read and validate a JSON config; missing fields take defaults."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})", "config") from exc
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object", "config")
    return ExperimentConfig.from_dict(doc)


def apply_overrides(cfg, pairs):
    """Apply ``key=value`` overrides; values are parsed as JSON when possible."""
    doc = cfg.to_dict()
    for pair in pairs or ():
        if "=" not in pair:
            raise ValidationError(f"override {pair!r} is not key=value", "set")
        key, raw = pair.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        doc[key.strip()] = value
    return ExperimentConfig.from_dict(doc)
