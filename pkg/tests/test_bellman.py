import numpy as np
import pytest

from monoflow.bellman import (
    HarmonicSum,
    Linear,
    LqNormP,
    Power,
    WeightedGeomMean,
    hypercontractive_wgm,
    theta_hessian,
)

ALL_SPECS = [
    Power(2),
    Power(1.5),
    WeightedGeomMean([0.5, 0.5]),
    WeightedGeomMean([0.75, 0.5]),
    HarmonicSum(2),
    HarmonicSum(3),
    LqNormP(2, 1),
    LqNormP(3, 1.5),
    LqNormP(1.5, 3),
    Linear([1.0, 2.0]),
]


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.name)
def test_gradient_matches_finite_differences(spec):
    rng = np.random.default_rng(0)
    h = 1e-6
    for _ in range(5):
        x = rng.uniform(0.5, 2.0, size=spec.m)
        g = spec.grad(x)
        for j in range(spec.m):
            e = np.zeros(spec.m)
            e[j] = h
            fd = (spec.value(x + e) - spec.value(x - e)) / (2 * h)
            assert abs(g[j] - fd) < 1e-6 * max(1.0, abs(fd))


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.name)
def test_hessian_matches_finite_differences(spec):
    rng = np.random.default_rng(1)
    h = 1e-5
    for _ in range(3):
        x = rng.uniform(0.5, 2.0, size=spec.m)
        H = spec.hess(x)
        for j in range(spec.m):
            e = np.zeros(spec.m)
            e[j] = h
            fd = (spec.grad(x + e) - spec.grad(x - e)) / (2 * h)
            assert np.allclose(H[:, j], fd, rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.name)
def test_theta_consistent_with_value(spec):
    rng = np.random.default_rng(2)
    S = rng.uniform(-1.0, 1.0, size=(6, spec.m))
    th = spec.theta(S)
    direct = np.array([np.log(spec.value(np.exp(s))) for s in S])
    assert np.allclose(th, direct, atol=1e-12)


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.name)
def test_theta_derivatives_match_finite_differences(spec):
    rng = np.random.default_rng(3)
    h = 1e-6
    s = rng.uniform(-0.5, 0.5, size=(1, spec.m))
    g = spec.grad_theta(s)[0]
    H = spec.hess_theta(s)[0]
    for j in range(spec.m):
        e = np.zeros((1, spec.m))
        e[0, j] = h
        fd = (spec.theta(s + e) - spec.theta(s - e))[0] / (2 * h)
        assert abs(g[j] - fd) < 1e-6
        fdh = (spec.grad_theta(s + e) - spec.grad_theta(s - e))[0] / (2 * h)
        assert np.allclose(H[:, j], fdh, atol=1e-5)


def test_theta_hessian_examples():
    # geometric means have a linear log companion
    z = theta_hessian(WeightedGeomMean([0.3, 0.7]), [0.2, -0.1])
    assert np.allclose(z.a, 0.0)
    # harmonic sum at the symmetric point
    h = theta_hessian(HarmonicSum(2), [0.0, 0.0])
    assert np.allclose(h.a, -0.25 * np.array([[1, -1], [-1, 1]]), atol=1e-14)
    # single power: log companion is linear too
    p = theta_hessian(Power(2), [0.4])
    assert np.allclose(p.a, 0.0)


def test_harmonic_sum_second_derivative_formula():
    # h''(z) = -e^z / (1+e^z)^2 along the homogeneous direction
    spec = HarmonicSum(2)
    for z in (-2.0, -0.3, 0.0, 0.7, 2.5):
        H = spec.hess_theta(np.array([[0.0, z]]))[0]
        want = -np.exp(z) / (1 + np.exp(z)) ** 2
        assert abs(H[1, 1] - want) < 1e-12
        assert np.allclose(H, H[1, 1] * np.array([[1, -1], [-1, 1]]), atol=1e-12)


def test_flags():
    assert Power(1).concave and Power(1).is_linear
    assert Power(2).lambda_min == 1 and not Power(2).concave
    assert Power(2).theta_convex
    w = WeightedGeomMean([0.5, 0.5])
    assert w.concave and w.lambda_min == 0 and w.theta_convex
    w2 = WeightedGeomMean([0.75, 0.5])
    assert not w2.concave and float(w2.lambda_min) == 0.25
    assert HarmonicSum(2).concave and not HarmonicSum(2).theta_convex
    assert LqNormP(2, 1).lambda_admissible and float(LqNormP(2, 1).lambda_min) == 1
    assert not LqNormP(1.5, 3).lambda_admissible
    assert Linear([1.0]).is_linear


def test_hypercontractive_exponents():
    w = hypercontractive_wgm(2, 4)
    assert [float(p) for p in w.exponents] == [0.75, 0.5]
    with pytest.raises(ValueError):
        hypercontractive_wgm(4, 2)
