import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vstat_rff import bounds, experiments, kernels, mixing, rff
from vstat_rff.config import ExperimentConfig
from vstat_rff.errors import ValidationError


def _cfg(**kw):
    base = dict(kernel="gaussian", process="iid", m=2, p=2, nList=[64], R=60, seed=3, D=100)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def small_tail():
    return experiments.run_tail_experiment(_cfg(xGrid=[0.0, 1e-3, 1e-2, 0.1]))


def _zero_setup(cfg):
    st_ = experiments.setup(cfg)
    zero = rff.FeatureExpansion(2, 1, np.zeros((1, 1)), [rff.COS], [[0, 0]], [0.0])
    return replace(st_, expansion=zero, components={})


def test_tail_at_zero_is_one(small_tail):
    assert small_tail.phat[0] == 1.0
    assert np.all(np.diff(small_tail.phat) <= 0)
    assert np.all((small_tail.lo <= small_tail.phat) & (small_tail.phat <= small_tail.hi))
    assert small_tail.audit < 1e-10
    assert small_tail.T.size == 60


def test_zero_kernel_tail():
    cfg = _cfg(xGrid=[1e-9, 0.5])
    tail = experiments.run_tail_experiment(cfg, st=_zero_setup(cfg))
    assert np.all(tail.phat == 0.0)


def test_prefix_reproducibility():
    st_ = experiments.setup(_cfg())
    a, _ = experiments.replicate_T(st_, 64, 2, range(50))
    b, _ = experiments.replicate_T(st_, 64, 2, range(100))
    assert np.array_equal(a, b[:50])


def test_thread_count_does_not_change_results(monkeypatch):
    st_ = experiments.setup(_cfg())
    monkeypatch.setenv("VSTAT_THREADS", "1")
    a, _ = experiments.replicate_T(st_, 64, (1, 2), range(20))
    monkeypatch.setenv("VSTAT_THREADS", "3")
    b, _ = experiments.replicate_T(st_, 64, (1, 2), range(20))
    assert all(np.array_equal(a[p], b[p]) for p in (1, 2))


def test_auto_grid():
    T = np.random.default_rng(0).exponential(size=500)
    g = experiments.auto_grid(T)
    assert g.size == 30 and np.all(np.diff(g) > 0)
    assert g[0] == pytest.approx(np.quantile(T, 0.5))
    assert g[-1] == pytest.approx(np.quantile(T, 0.995))


@given(st.lists(st.floats(0, 10), min_size=5, max_size=80))
def test_empirical_tail_invariants(values):
    x = np.linspace(0, 10, 15)
    tail = experiments.EmpiricalTail.from_values(values, x, 10, 1)
    assert np.all(np.diff(tail.phat) <= 0)
    assert np.all((0 <= tail.lo) & (tail.lo <= tail.phat) & (tail.phat <= tail.hi) & (tail.hi <= 1))


def test_wilson_interval_values():
    tail = experiments.EmpiricalTail.from_values([1.0] * 3 + [0.0] * 7, [0.5], 10, 1)
    # Wilson 95% for 3/10
    assert tail.lo[0] == pytest.approx(0.10779126740630265, rel=1e-9)
    assert tail.hi[0] == pytest.approx(0.6032218525388546, rel=1e-9)


def test_calibration_dominates_by_construction(small_tail):
    cfg = _cfg()
    bc = experiments.config_constants(cfg, 64, 2)
    tail = experiments.EmpiricalTail.from_values(small_tail.T, experiments.auto_grid(small_tail.T), 64, 2)
    rep = experiments.calibrate_C(tail, bc)
    assert 0 < rep.C < experiments.C_CAP
    ok, curve = rep.dominates(tail, use="hi")
    assert ok
    # binding point: a slightly larger C breaks dominance there
    worse = bounds.tail_bound(bc.with_C(rep.C * 1.01), x=rep.binding_x)
    assert worse < tail.hi[list(tail.x).index(rep.binding_x)]


def test_calibration_sentinel():
    bc = bounds.constants_for("cor2", m=2, p=2, n=64, gamma1=1, gamma2=math.inf, f0_zero=1)
    tail = experiments.EmpiricalTail.from_values(np.zeros(60), [0.1, 0.2], 64, 2)
    rep = experiments.calibrate_C(tail, bc)
    assert rep.capped and rep.C == experiments.C_CAP


def test_config_constants_variants():
    cfg = _cfg()
    assert experiments.config_constants(cfg, 100, 2).provenance == "cor2"
    cfg = _cfg(kernel="cosine")
    assert experiments.config_constants(cfg, 100, 2).provenance == "cor1"
    cfg = _cfg(kernel="gaussian", m=3, p=2)
    assert experiments.config_constants(cfg, 100, 2).provenance == "theorem1"
    cfg = _cfg(bound="lemma3", D=50)
    bc = experiments.config_constants(cfg, 100, 2)
    assert bc.provenance == "lemma3" and bc.inputs["mu3"] <= 1.0
    with pytest.raises(ValidationError):
        experiments.config_constants(_cfg(bound="cor3"), 100, 2)


def test_config_gammas_use_process_then_overrides():
    assert experiments.config_gammas(_cfg(process="ar1", processParams={"rho": 0.5})) == \
        pytest.approx((1.0, math.log(2)))
    assert experiments.config_gammas(_cfg(gamma1=2.0, gamma2=0.3)) == (2.0, 0.3)


def test_scaling_zero_kernel():
    cfg = _cfg(nList=[16, 32, 64], R=50)
    rep = experiments.scaling_study(cfg, st=_zero_setup(cfg))
    assert np.all(rep.median == 0.0)
    with pytest.raises(ValidationError):
        experiments.scaling_study(_cfg(nList=[16, 32]))


def test_convergence_exact_expansion():
    k = kernels.make_kernel("gaussian")
    exact_fn = lambda x, y: np.cos(2 * math.pi * 0.3 * (x - y)).sum(axis=-1)
    exact_fn.m = 2
    builder = lambda D, s: rff.expansion_from_samples(k, np.array([[0.3]]), np.array([1.0]),
                                                      np.array([rff.COS]))
    table = experiments.rff_convergence_study(exact_fn, [1, 2, 3], 2.0, 3, builder=builder)
    assert np.all(table.errors < 1e-14)
    with pytest.raises(ValidationError):
        experiments.rff_convergence_study(k, [10, 20], 2.0, 2)


def test_convergence_endpoints_ordered():
    k = kernels.make_kernel("gaussian")
    table = experiments.rff_convergence_study(k, [100, 400, 1600], 2.0, 5, grid_points=21)
    assert table.median[-1] < table.median[0]
    assert -0.8 < table.slope < -0.2
