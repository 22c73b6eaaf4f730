import itertools
import math

import numpy as np
import pytest
from scipy import integrate

from vstat_rff import hoeffding, kernels, rff
from vstat_rff.errors import ValidationError

NORMAL = hoeffding.MarginalSampler("standard-normal")
POINT = hoeffding.MarginalSampler("point-mass")


def test_theta_examples():
    g = kernels.make_kernel("gaussian")
    assert hoeffding.theta(g, POINT, 10, 0).value == 1.0
    est = hoeffding.theta(g, NORMAL, 200_000, 1)
    assert abs(est.value - 1 / math.sqrt(3)) <= 3 * est.stderr
    c = hoeffding.theta(kernels.constant_kernel(0.3), NORMAL, 100, 2)
    assert c.value == pytest.approx(0.3, abs=1e-15) and c.stderr == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValidationError):
        hoeffding.theta(g, NORMAL, 1, 0)


def test_point_mass_components():
    g = kernels.make_kernel("gaussian")
    f1 = hoeffding.component(g, POINT, 1, 100, 0)
    f2 = hoeffding.component(g, POINT, 2, 100, 0)
    assert f1(np.zeros((1, 1)))[0] == 0.0
    x = np.linspace(-3, 3, 13)[:, None]
    np.testing.assert_allclose(f1(x), np.exp(-x[:, 0] ** 2 / 2) - 1, atol=1e-15)
    np.testing.assert_allclose(f2(x, np.zeros_like(x)), 0.0, atol=1e-15)


def test_first_component_closed_form():
    g = kernels.make_kernel("gaussian")
    f1 = hoeffding.component(g, NORMAL, 1, 200_000, 3)
    x = np.array([[0.0], [1.0], [2.0]])
    val, se = f1.evaluate(x)
    exact = np.exp(-x[:, 0] ** 2 / 4) / math.sqrt(2) - 1 / math.sqrt(3)
    assert np.all(np.abs(val - exact) <= 3 * se)


def test_component_level_range():
    with pytest.raises(ValidationError):
        hoeffding.component(kernels.make_kernel("gaussian"), NORMAL, 3, 10, 0)


@pytest.mark.parametrize("m", [2, 3])
def test_reconstruction(m):
    k = kernels.make_kernel("laplacian", m=m)
    means = hoeffding._ConditionalMeans(k, NORMAL, 500, 4)
    comps = {p: hoeffding.component(k, NORMAL, p, None, None, _means=means)
             for p in range(1, m + 1)}
    x = np.random.default_rng(5).normal(size=(m, 50, 1))
    total = np.zeros(50)
    for p in range(1, m + 1):
        for S in itertools.combinations(range(m), p):
            total += comps[p](*[x[i] for i in S])
    np.testing.assert_allclose(total, k(*x) - means.theta.value, atol=1e-12)


def test_component_symmetry():
    k = kernels.make_kernel("cauchy", m=3)
    f2 = hoeffding.component(k, NORMAL, 2, 400, 6)
    x, y = np.random.default_rng(7).normal(size=(2, 20, 1))
    np.testing.assert_allclose(f2(x, y), f2(y, x), atol=1e-14)


def _expansion(D=50, seed=0, name="gaussian"):
    return rff.build_expansion(kernels.make_kernel(name), D, seed)


def test_tensor_matches_recursion():
    exp = _expansion()
    tc = hoeffding.tensor_component(exp, NORMAL, 2)
    mc = hoeffding.component(exp, NORMAL, 2, 2000, 8)
    x, y = np.random.default_rng(9).uniform(-2, 2, size=(2, 50, 1))
    a, sa = tc.evaluate(x, y)
    b, sb = mc.evaluate(x, y)
    assert np.all(np.abs(a - b) <= 3 * (sa + sb) + 1e-12)


def test_tensor_with_estimated_means():
    exp = _expansion()
    exact = hoeffding.tensor_component(exp, NORMAL, 1)
    est = hoeffding.tensor_component(exp, NORMAL, 1, N=20_000, seed=10)
    x = np.linspace(-2, 2, 9)[:, None]
    a = exact(x)
    b, se = est.evaluate(x)
    assert np.all(se > 0)
    assert np.all(np.abs(a - b) <= 4 * se)


def test_zero_means_kill_lower_levels():
    exp = _expansion()
    zeros = np.zeros(exp.n_bases)
    f1 = hoeffding.TensorComponent(exp, zeros, 1)
    f2 = hoeffding.TensorComponent(exp, zeros, 2)
    x, y = np.random.default_rng(11).normal(size=(2, 10, 1))
    np.testing.assert_allclose(f1(x), 0.0, atol=1e-15)
    np.testing.assert_allclose(f2(x, y), exp(x, y), atol=1e-12)


def test_constant_basis_vanishes():
    k = kernels.make_kernel("gaussian")
    exp = rff.expansion_from_samples(k, np.zeros((1, 1)), np.ones(1), np.array([rff.COS]))
    x, y = np.random.default_rng(12).normal(size=(2, 10, 1))
    for marginal in (NORMAL, POINT):
        assert np.all(hoeffding.tensor_component(exp, marginal, 1)(x) == 0.0)
        assert np.all(hoeffding.tensor_component(exp, marginal, 2)(x, y) == 0.0)


def test_basis_means_exact():
    exp = _expansion(20)
    X = NORMAL.draw(13, 400_000)
    np.testing.assert_allclose(NORMAL.basis_means(exp), exp.bases(X).mean(axis=0), atol=0.005)
    uni = hoeffding.MarginalSampler("uniform", 1, {"low": -1.0, "high": 2.0})
    X = uni.draw(14, 400_000)
    np.testing.assert_allclose(uni.basis_means(exp), exp.bases(X).mean(axis=0), atol=0.005)


def test_basis_moments():
    exp = _expansion(6)
    est = hoeffding.basis_moments(exp, NORMAL, 1, 200_000, 15)
    assert est.value <= 1 + 3 * est.stderr

    def abs_mean(j):
        u, trig = exp.freq[j, 0], exp.trig[j]
        fn = math.cos if trig == rff.COS else math.sin
        g = lambda x: abs(fn(2 * math.pi * u * x)) * math.exp(-x * x / 2) / math.sqrt(2 * math.pi)
        return integrate.quad(g, -12, 12, limit=500)[0]

    oracle = max(abs_mean(j) for j in range(exp.n_bases))
    assert abs(est.value - oracle) <= 3 * est.stderr + 1e-12
    k = kernels.make_kernel("gaussian")
    one = rff.expansion_from_samples(k, np.zeros((1, 1)), np.ones(1), np.array([rff.COS]))
    for a in (1, 3):
        assert hoeffding.basis_moments(one, NORMAL, a, 100, 0).value == 1.0


def test_degeneracy_checks():
    g = kernels.make_kernel("gaussian")
    grid = NORMAL.support_grid(5)
    f2 = hoeffding.component(g, NORMAL, 2, 500, 16)
    assert hoeffding.check_degeneracy(f2, NORMAL, grid, 20_000, 17).passed
    raw = hoeffding.check_degeneracy(g, NORMAL, grid, 20_000, 18)
    assert not raw.passed
    zero = hoeffding.check_degeneracy(kernels.zero_kernel(), NORMAL, grid, 1000, 19)
    assert zero.passed


def test_decompose_json_and_r():
    g = kernels.make_kernel("gaussian")
    res = hoeffding.decompose(g, POINT, 100, 20, check_N=1000)
    # the default point-mass grid leaves the support, where f1 is nonzero
    assert res.r == 1
    on_support = hoeffding.decompose(g, POINT, 100, 20, grid=np.zeros((3, 1)))
    assert on_support.r == 2
    doc = res.to_dict()
    assert doc["components"][0]["stderr"] is not None
    assert all(rep["passed"] for rep in doc["degeneracy"])
    res = hoeffding.decompose(g, NORMAL, 300, 21, r=1)
    assert res.r == 1
    with pytest.raises(ValidationError):
        hoeffding.decompose(g, NORMAL, 300, 21, r=3)


def test_two_point_marginal_for_chain():
    from vstat_rff import mixing
    m = hoeffding.MarginalSampler.for_process(mixing.ProcessSpec("two-state-chain"))
    x = m.draw(0, 1000)
    assert set(np.unique(x)) == {0.0, 1.0}
    exp = _expansion(10)
    means = m.basis_means(exp)
    np.testing.assert_allclose(means, 0.5 * (exp.bases(np.zeros((1, 1)))[0]
                                             + exp.bases(np.ones((1, 1)))[0]), atol=1e-15)
