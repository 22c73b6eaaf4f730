import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from vstat_rff import mixing
from vstat_rff.errors import UnsupportedKernelError, ValidationError


def _lag1(x):
    x = x.ravel()
    return np.corrcoef(x[:-1], x[1:])[0, 1]


def test_ar1_rho_zero_is_standard_normal():
    x = mixing.generate_path(mixing.ProcessSpec("ar1", {"rho": 0.0}), 100_000, 0).points
    assert abs(x.mean()) < 4 / math.sqrt(1e5)
    assert x.var() == pytest.approx(1.0, abs=0.02)
    assert stats.kstest(x.ravel(), "norm").pvalue > 1e-3


def test_ar1_autocorrelation():
    x = mixing.generate_path(mixing.ProcessSpec("ar1", {"rho": 0.5}), 100_000, 1).points
    assert _lag1(x) == pytest.approx(0.5, abs=0.02)


def test_fair_coin_chain_is_uncorrelated():
    x = mixing.generate_path(mixing.ProcessSpec("two-state-chain", {"q": 0.5}), 100_000, 2).points
    assert abs(_lag1(x)) < 0.02
    assert set(np.unique(x)) <= {0.0, 1.0}


def test_chain_flip_rate():
    x = mixing.generate_path(mixing.ProcessSpec("two-state-chain", {"q": 0.1}), 100_000, 3).points
    flips = np.mean(x[1:] != x[:-1])
    assert flips == pytest.approx(0.1, abs=0.005)
    assert _lag1(x) == pytest.approx(0.8, abs=0.02)


def test_moving_average_dependence():
    x = mixing.generate_path(mixing.ProcessSpec("moving-average", {"order": 2}), 100_000, 4).points
    assert x.var() == pytest.approx(1.0, abs=0.03)
    x = x.ravel()
    assert abs(np.corrcoef(x[:-3], x[3:])[0, 1]) < 0.02


@pytest.mark.parametrize("kind,params", [
    ("iid", {}), ("ar1", {"rho": 0.5}), ("two-state-chain", {"q": 0.1}),
    ("moving-average", {"order": 3}), ("iid-uniform", {}),
])
def test_stationarity_across_windows(kind, params):
    x = mixing.generate_path(mixing.ProcessSpec(kind, params), 100_000, 5).points.ravel()
    a, b = x[:50_000], x[50_000:]
    # inflate the iid standard error by the long-run variance factor
    inflation = {"ar1": 3.0, "two-state-chain": 3.0, "moving-average": 2.0}.get(kind, 1.0)
    se = inflation * math.sqrt(a.var() / a.size + b.var() / b.size)
    assert abs(a.mean() - b.mean()) <= 4 * se
    assert abs(a.var() - b.var()) <= 4 * inflation * math.sqrt(2.0 / a.size) * max(a.var(), 0.25)


@given(st.sampled_from(["iid", "ar1", "two-state-chain", "moving-average"]),
       st.integers(1, 200), st.integers(0, 2 ** 32))
def test_reproducible(kind, n, seed):
    spec = mixing.ProcessSpec(kind)
    a = mixing.generate_path(spec, n, seed).points
    b = mixing.generate_path(spec, n, seed).points
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kind,params", [
    ("ar1", {"rho": 1.0}), ("ar1", {"rho": -0.1}),
    ("two-state-chain", {"q": 0.0}), ("two-state-chain", {"q": 1.0}),
    ("moving-average", {"order": -1}), ("garch", {}),
])
def test_parameter_errors(kind, params):
    with pytest.raises(ValidationError):
        mixing.ProcessSpec(kind, params)


def test_path_length_error():
    with pytest.raises(ValidationError):
        mixing.generate_path(mixing.ProcessSpec(), 0, 0)


def test_substreams_are_distinct_and_stable():
    seeds = mixing.SeedSpec(7)
    a = seeds.rng(0, 1).standard_normal(4)
    b = seeds.rng(0, 2).standard_normal(4)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, mixing.SeedSpec(7).rng(0, 1).standard_normal(4))


def test_clipping_is_recorded():
    spec = mixing.ProcessSpec("iid", clip=1.0)
    path = mixing.generate_path(spec, 1000, 0)
    assert np.max(np.abs(path.points)) <= 1.0
    assert path.meta["left_box"] is True
    assert path.meta["clipped_fraction"] == pytest.approx(0.317, abs=0.05)
    assert mixing.clip_for_quantile(spec, 0.95) == pytest.approx(1.959964, rel=1e-6)


def test_path_csv():
    path = mixing.generate_path(mixing.ProcessSpec("iid", d=2), 3, 0)
    buf = io.StringIO()
    path.to_csv(buf)
    lines = buf.getvalue().strip().splitlines()
    assert len([l for l in lines if not l.startswith("#")]) == 4


# alpha-mixing oracle

@pytest.mark.parametrize("i", [1, 2, 5])
def test_alpha_fair_coin_is_zero(i):
    spec = mixing.ProcessSpec("two-state-chain", {"q": 0.5})
    assert mixing.alpha_lower_bound(spec, i) == pytest.approx(0.0, abs=1e-15)


def test_alpha_example():
    spec = mixing.ProcessSpec("two-state-chain", {"q": 0.1})
    assert mixing.alpha_lower_bound(spec, 1, depth=1) == pytest.approx(0.2, abs=1e-12)


def test_alpha_nonincreasing():
    spec = mixing.ProcessSpec("two-state-chain", {"q": 0.1})
    vals = [mixing.alpha_lower_bound(spec, i) for i in (1, 2, 3)]
    assert vals[0] >= vals[1] >= vals[2]


@pytest.mark.parametrize("q", [0.1, 0.3, 0.7])
@pytest.mark.parametrize("depth", [1, 2])
def test_alpha_matches_brute_force(q, depth):
    spec = mixing.ProcessSpec("two-state-chain", {"q": q})
    for i in (1, 2, 4):
        assert mixing.alpha_lower_bound(spec, i, depth) == pytest.approx(
            mixing.alpha_brute_force(spec, i, depth), abs=1e-14)


@pytest.mark.parametrize("q", [0.05, 0.1, 0.25, 0.6, 0.9])
def test_alpha_envelope(q):
    spec = mixing.ProcessSpec("two-state-chain", {"q": q})
    g1, g2 = spec.gammas
    for i in range(1, 7):
        assert mixing.alpha_lower_bound(spec, i, depth=2) <= g1 * math.exp(-g2 * i) + 1e-15


def test_alpha_guards():
    with pytest.raises(UnsupportedKernelError):
        mixing.alpha_lower_bound(mixing.ProcessSpec("ar1"), 1)
    spec = mixing.ProcessSpec("two-state-chain")
    with pytest.raises(ValidationError):
        mixing.alpha_lower_bound(spec, 1, depth=4)
    with pytest.raises(ValidationError):
        mixing.alpha_lower_bound(spec, 0)


def test_documented_gammas():
    assert mixing.ProcessSpec("iid").gammas == (1.0, math.inf)
    assert mixing.ProcessSpec("ar1", {"rho": 0.5}).gammas[1] == pytest.approx(math.log(2))
    assert mixing.ProcessSpec("two-state-chain", {"q": 0.1}).gammas[1] == pytest.approx(
        -math.log(0.8))
    for kind in mixing.KINDS:
        assert mixing.ProcessSpec(kind).gamma_source
