from fractions import Fraction

import numpy as np
import pytest

from monoflow.certify import certify
from monoflow.nodes import (
    aniso_geom_mean,
    geom_mean,
    harmonic_sum,
    heat_atom,
)
from monoflow.quad import BoxQuadrature
from monoflow.symmat import LinearMap, SymMatrix, identity
from monoflow.verify import (
    Density1D,
    bl_residual_decomposition,
    blachman_check,
    check_pointwise,
    conv_nonnegativity_witness,
    density_from_node,
    dirichlet_energy_trace,
    entropy,
    entropy_trace,
    epi_check,
    explicit_counterexample_laplacian,
    fisher_info,
    li_yau_gap,
    qp_trace,
    supersolution_residual,
)


def kernel1d(center=0.0, t0=0.0, a=1.0):
    return heat_atom([[a]], [(1.0, center, t0)])


def counterexample():
    return harmonic_sum(kernel1d(0.0), kernel1d(1.0))


# --------------------------------------------------------------------------
# pointwise verifiers


def test_kernel_residual_is_zero():
    node = kernel1d()
    cert = certify(node)
    for t, x in ((0.3, 0.2), (1.0, -0.7), (2.0, 1.5)):
        assert abs(supersolution_residual(node, cert, t, [x])) < 1e-12


def test_counterexample_is_a_supersolution_with_strict_points():
    node = counterexample()
    cert = certify(node)
    rng = np.random.default_rng(0)
    strict = 0
    for _ in range(100):
        t = float(rng.uniform(0.1, 2.0))
        x = float(rng.uniform(-2.0, 3.0))
        r = supersolution_residual(node, cert, t, [x])
        assert r >= -1e-12
        strict += r > 1e-12
    assert strict > 50  # generically strict


def test_geom_mean_residual_strictly_positive_at_generic_points():
    node = geom_mean([(0.5, kernel1d(0.0)), (0.5, kernel1d(1.0))])
    cert = certify(node)
    assert supersolution_residual(node, cert, 1.0, [0.5]) > 1e-6


def test_li_yau_gap_examples():
    node = kernel1d()
    cert = certify(node)
    assert abs(li_yau_gap(node, cert, 0.7, [0.4])) < 1e-12
    ce = counterexample()
    gap = li_yau_gap(ce, None, 0.5, [0.5], K=identity(1))
    assert abs(gap + 0.25) < 1e-12


def test_counterexample_fails_log_convexity_everywhere():
    ce = counterexample()
    rng = np.random.default_rng(1)
    for _ in range(100):
        t = float(rng.uniform(0.1, 2.0))
        x = float(rng.uniform(-2.0, 3.0))
        assert li_yau_gap(ce, None, t, [x], K=identity(1)) < -1e-6


def test_explicit_laplacian_values():
    assert abs(explicit_counterexample_laplacian(0.5, [0.5], [0.0], [1.0], 1)
               + 1.25) < 1e-12
    # coincident centers reduce to the kernel value -n/(2t)
    assert abs(explicit_counterexample_laplacian(0.4, [0.3], [0.7], [0.7], 2)
               + 2 / (2 * 0.4)) < 1e-12
    # swapping the centers is symmetric
    a = explicit_counterexample_laplacian(0.8, [0.5], [0.0], [1.0], 1)
    b = explicit_counterexample_laplacian(0.8, [0.5], [1.0], [0.0], 1)
    assert abs(a - b) < 1e-14


def test_explicit_laplacian_matches_jets():
    ce = counterexample()
    rng = np.random.default_rng(2)
    for _ in range(20):
        t = float(rng.uniform(0.1, 2.0))
        x = float(rng.uniform(-1.0, 2.0))
        j = ce.log_jets(t, np.array([[x]]))
        want = explicit_counterexample_laplacian(t, [x], [0.0], [1.0], 1)
        assert abs(j.lh[0, 0, 0] - want) < 1e-8


def test_check_pointwise_sign_conventions():
    node = kernel1d()
    cert = certify(node)
    s = check_pointwise(node, cert, (0.1, 2.0), [(-3.0, 3.0)],
                        n_space=32, n_time=4, keep_reports=True)
    assert s.count == 128
    assert s.passed(1e-7)
    assert all(r.ok for r in s.reports)
    assert abs(s.worst_residual) < 1e-10
    assert s.worst_liyau_gap > -1e-11


# --------------------------------------------------------------------------
# traces on solutions


def test_qp_trace_closed_form_p2():
    u1, u2 = kernel1d(0.0), kernel1d(1.0)
    q = BoxQuadrature([(-20.0, 21.0, 801)])
    times = np.linspace(0.2, 2.0, 8)
    tr = qp_trace(u1, u2, 2.0, times, q)
    want = np.exp(-1.0 / (8.0 * times)) - 1.0
    assert np.allclose(tr.values, want, atol=1e-9)
    assert tr.worst_violation > 0
    assert np.all(tr.values <= 0)


def test_qp_trace_identical_inputs_vanish():
    u = kernel1d()
    q = BoxQuadrature([(-15.0, 15.0, 401)])
    tr = qp_trace(u, u, 1.5, np.linspace(0.3, 1.0, 4), q)
    assert np.max(np.abs(tr.values)) < 1e-13


def test_qp_requires_admissible_exponent():
    with pytest.raises(ValueError):
        qp_trace(kernel1d(), kernel1d(1.0), 3.0, [0.5, 1.0],
                 BoxQuadrature([(-8.0, 8.0, 41)]))


def test_dirichlet_energy_scaling_law():
    node = kernel1d()
    q = BoxQuadrature([(-25.0, 25.0, 1001)])
    times = np.linspace(0.3, 2.0, 6)
    tr = dirichlet_energy_trace(node, times, q)
    want = np.sqrt(2 * np.pi) / (16 * np.pi) * times**-1.5
    assert np.allclose(tr.values, want, rtol=1e-8)
    assert tr.direction == "nonincreasing" and tr.worst_violation > 0


def test_entropy_closed_form():
    node = kernel1d()
    q = BoxQuadrature([(-25.0, 25.0, 1001)])
    times = np.linspace(0.3, 2.0, 6)
    tr = entropy_trace(node, times, q)
    want = 0.5 * np.log(4 * np.pi * times) + 0.5
    assert np.allclose(tr.values, want, atol=1e-10)
    assert tr.worst_violation > 0


# --------------------------------------------------------------------------
# gridded densities


def gaussian_density(v, count=4001, width=14.0):
    x = np.linspace(-width, width, count)
    f = np.exp(-(x**2) / (2 * v)) / np.sqrt(2 * np.pi * v)
    return Density1D(x, f)


def test_density_validation():
    x = np.linspace(-5, 5, 101)
    with pytest.raises(ValueError):
        Density1D(x, np.exp(-(x**2)))  # mass != 1
    with pytest.raises(ValueError):
        Density1D(x[::-1][:50], np.full(50, 0.1))


def test_fisher_info_gaussian():
    for v in (0.5, 1.0, 2.0):
        d = gaussian_density(v)
        assert abs(fisher_info(d) - 1.0 / v) < 1e-4 / v


def test_entropy_gaussian():
    d = gaussian_density(1.3)
    want = 0.5 * np.log(2 * np.pi * np.e * 1.3)
    assert abs(entropy(d) - want) < 1e-8


def test_epi_gaussian_equality():
    out = epi_check(gaussian_density(0.8), gaussian_density(1.7))
    assert out["ok"]
    assert abs(out["lhs"] / out["rhs"] - 1.0) < 1e-4


def test_blachman_equality_at_variances():
    v1, v2 = 0.8, 1.7
    out = blachman_check(gaussian_density(v1), gaussian_density(v2), v1, v2)
    assert out["ok"]
    assert abs(out["lhs"] / out["rhs"] - 1.0) < 1e-4
    assert abs(out["lhs"] - (v1 + v2)) < 1e-3


def test_density_from_node():
    d = density_from_node(kernel1d(), 0.5, -12.0, 12.0, 2001)
    assert abs(fisher_info(d) - 1.0) < 1e-4  # variance 2t = 1


# --------------------------------------------------------------------------
# convolution witness and the geometric-mean decomposition


def test_witness_dual_weights():
    from monoflow.verify import _dual_exponent_weights

    lam1, lam2 = _dual_exponent_weights(4.0 / 3.0, 4.0 / 3.0)
    assert abs(lam1 - 0.25) < 1e-14 and abs(lam2 - 0.25) < 1e-14
    assert abs(np.sqrt(lam1) + np.sqrt(lam2) - 1.0) < 1e-14


def test_witness_two_forms_agree_and_nonnegative():
    sa = [[16.0 / 3.0]]
    u1 = heat_atom(sa, [(1.0, 0.0, 0.0), (0.5, 0.7, 0.2)])
    u2 = heat_atom(sa, [(1.0, -0.3, 0.0)])
    q = BoxQuadrature([(-10.0, 10.0, 601)])
    rng = np.random.default_rng(3)
    for _ in range(5):
        t = float(rng.uniform(0.3, 1.2))
        x = float(rng.uniform(-0.8, 0.8))
        Xdir = float(rng.uniform(-2.0, 2.0))
        out = conv_nonnegativity_witness(u1, u2, Fraction(2), Fraction(4, 3),
                                         Fraction(4, 3), [Xdir], t, [x], q)
        assert out["single"] >= -1e-9
        assert out["double"] >= -1e-12
        assert abs(out["single"] - out["double"]) < 1e-6 * (
            abs(out["double"]) + 1e-9
        ) + 1e-10


def test_witness_zero_direction_degenerates():
    sa = [[16.0 / 3.0]]
    u = heat_atom(sa, [(1.0, 0.0, 0.0)])
    q = BoxQuadrature([(-8.0, 8.0, 201)])
    out = conv_nonnegativity_witness(u, u, Fraction(2), Fraction(4, 3),
                                     Fraction(4, 3), [0.0], 0.5, [0.2], q)
    assert abs(out["single"]) < 1e-15 and abs(out["double"]) < 1e-15


def hyper_node():
    one = SymMatrix([[1.0]])
    return aniso_geom_mean([
        (Fraction(3, 4), LinearMap([[1.0, 0.0]]), one, kernel1d(0.2, 0.3)),
        (Fraction(1, 2), LinearMap([[0.0, 1.0]]), one, kernel1d(-0.1, 0.2)),
        (Fraction(3, 4), LinearMap([[1.0, -2.0 / np.sqrt(3.0)]]), one,
         kernel1d(0.0, 0.5)),
    ])


def test_bl_decomposition_equality_case():
    node = hyper_node()
    d = bl_residual_decomposition(node, 0.8, [0.3, -0.2])
    assert abs(d["lhs"] - d["total"]) < 1e-12
    assert abs(d["terms"][2]) < 1e-12  # rank-one defect vanishes on equality
    assert abs(d["terms"][3]) < 1e-12  # trace defect vanishes on equality
    assert abs(d["beta"]) < 1e-12
    # on equality data the variance term equals the projection-variance form
    assert abs(d["terms"][1] - d["variance_w_form"]) < 1e-12
    assert d["terms"][1] >= 0


def test_bl_decomposition_identical_children_identity_maps():
    A = SymMatrix([[1.4]])
    child = heat_atom(A, [(1.0, 0.3, 0.1)])
    node = aniso_geom_mean([
        (Fraction(1, 2), LinearMap([[1.0]]), A, child),
        (Fraction(1, 2), LinearMap([[1.0]]), A, child),
    ])
    d = bl_residual_decomposition(node, 0.6, [0.4])
    assert abs(d["variance_w_form"]) < 1e-14  # w_j = wbar
    assert abs(d["terms"][1]) < 1e-14
    assert abs(d["lhs"] - d["total"]) < 1e-12


def test_bl_decomposition_inequality_case_signs():
    a1, a2 = SymMatrix([[1.0]]), SymMatrix([[2.0]])
    node = aniso_geom_mean([
        (Fraction(1), LinearMap([[1.0]]), a1,
         heat_atom(a1, [(1.0, 0.0, 0.0), (0.5, 0.7, 0.2)])),
        (Fraction(1), LinearMap([[1.0]]), a2, heat_atom(a2, [(1.0, -0.3, 0.0)])),
    ])
    rng = np.random.default_rng(4)
    for _ in range(10):
        t = float(rng.uniform(0.3, 1.5))
        x = float(rng.uniform(-1.0, 1.0))
        d = bl_residual_decomposition(node, t, [x])
        assert abs(d["lhs"] - d["total"]) < 1e-10
        assert d["terms"][0] >= -1e-12      # children are exact solutions
        assert d["terms"][2] >= -1e-12      # rank-one defect
        assert d["terms"][3] >= -1e-12      # trace defect
        assert d["variance_w_form"] >= -1e-12
        assert abs(d["beta"] - 0.5) < 1e-12
