from fractions import Fraction

import numpy as np
import pytest

from monoflow.bellman import LqNormP, Power, WeightedGeomMean
from monoflow.certify import (
    GammaSpec,
    certify,
    check_bl_datum,
    check_gamma_concave,
    check_lambda_concavity,
    monotone_functional,
)
from monoflow.errors import RuleError, SubharmonicWeightError
from monoflow.nodes import (
    BellmanNode,
    aniso_geom_mean,
    compose_linear,
    convolve_power,
    geom_mean,
    group_average,
    harmonic_sum,
    heat_atom,
    lq_norm,
    positive_sum,
    power,
    tensor_product,
    time_power,
)
from monoflow.quad import CoshWeight, halton_points
from monoflow.symmat import LinearMap, SymMatrix, identity


def kernel1d(center=0.0, a=1.0, t0=0.0):
    return heat_atom([[a]], [(1.0, center, t0)])


def test_atom_certificate():
    c = certify(kernel1d())
    assert c.kind == "exact" and c.n == 1
    assert c.diffusion.allclose(identity(1))
    assert c.li_yau.allclose(identity(1))
    assert c.time_power == 0


def test_sum_requires_matching_diffusion():
    with pytest.raises(RuleError) as err:
        certify(positive_sum([(1.0, kernel1d(a=1.0)), (1.0, kernel1d(a=2.0))]))
    assert err.value.rule == "sum"


def test_sum_certificate_order_independent():
    a, b, c = kernel1d(0.0), kernel1d(1.0), kernel1d(-1.0, t0=0.3)
    c1 = certify(positive_sum([(1.0, a), (2.0, b), (0.5, c)]))
    c2 = certify(positive_sum([(0.5, c), (1.0, a), (2.0, b)]))
    assert c1.kind == c2.kind == "exact"
    assert c1.diffusion.allclose(c2.diffusion)
    assert c1.li_yau.allclose(c2.li_yau)


def test_tensor_certificate():
    c = certify(tensor_product(kernel1d(a=2.0), kernel1d(a=3.0)))
    assert np.allclose(c.diffusion.a, np.diag([2.0, 3.0]))
    assert np.allclose(c.li_yau.a, np.diag([2.0, 3.0]))
    assert c.kind == "exact"


def test_compose_certificate():
    L = [[0.5]]
    c = certify(compose_linear(L, kernel1d(a=2.0)))
    assert abs(c.diffusion.a[0, 0] - 0.5) < 1e-14
    assert c.kind == "exact"


def test_geom_mean_rule():
    c = certify(geom_mean([(Fraction(1, 2), kernel1d(0.0)),
                           (Fraction(1, 2), kernel1d(1.0))]))
    assert c.kind == "super"
    assert c.diffusion.allclose(identity(1))
    assert c.li_yau.allclose(identity(1))
    assert c.time_power == 0


def test_harmonic_sum_never_carries_log_convexity():
    c = certify(harmonic_sum(kernel1d(0.0), kernel1d(1.0)))
    assert c.kind == "super" and c.li_yau is None


def test_bare_superlinear_power_rejected():
    with pytest.raises(RuleError) as err:
        certify(power(2, kernel1d()))
    assert err.value.rule == "concave-image"


def test_relaxed_rule_scales_diffusion():
    c = certify(time_power(Fraction(1, 2), power(2, kernel1d())))
    assert c.kind == "super"
    assert abs(c.diffusion.a[0, 0] - 2.0) < 1e-14
    assert abs(c.li_yau.a[0, 0] - 2.0) < 1e-14
    assert float(c.time_power) == 0.5


def test_relaxed_rule_checks_exponent():
    with pytest.raises(RuleError) as err:
        certify(time_power(Fraction(1, 3), power(2, kernel1d())))
    assert err.value.rule == "relaxed-concavity"


def test_inadmissible_qnorm_rejected():
    with pytest.raises(RuleError) as err:
        certify(time_power(Fraction(1, 4),
                           lq_norm(Fraction(3, 2), 3, kernel1d(0.0), kernel1d(1.0))))
    assert err.value.rule == "relaxed-concavity"


def test_mixed_kinds_rejected():
    sup = geom_mean([(0.5, kernel1d(0.0, a=0.5)), (0.5, kernel1d(1.0, a=0.5))])
    sb = [[4.0 / 3.0]]
    sub = convolve_power(Fraction(1, 2), Fraction(2, 3), Fraction(2, 3),
                         heat_atom(sb, [(1.0, 0.0, 0.0), (0.5, 1.0, 0.1)]),
                         heat_atom(sb, [(1.0, 0.0, 0.0)]), quad_count=31)
    assert certify(sub).kind == "sub"
    with pytest.raises(RuleError) as err:
        certify(positive_sum([(1.0, sup), (1.0, sub)]))
    assert err.value.rule == "sum"


# --------------------------------------------------------------------------
# the hypercontractivity datum


def hyper_tree():
    one = SymMatrix([[1.0]])
    return aniso_geom_mean([
        (Fraction(3, 4), LinearMap([[1.0, 0.0]]), one, kernel1d(0.2, t0=0.3)),
        (Fraction(1, 2), LinearMap([[0.0, 1.0]]), one, kernel1d(-0.1, t0=0.2)),
        (Fraction(3, 4), LinearMap([[1.0, -2.0 / np.sqrt(3.0)]]), one,
         kernel1d(0.0, t0=0.5)),
    ])


def test_hyper_datum_equality_certificate():
    c = certify(hyper_tree())
    r = np.sqrt(3.0) / 2.0
    assert np.allclose(c.diffusion.a, [[1.5, -r], [-r, 1.5]], atol=1e-14)
    minv = np.linalg.inv(c.diffusion.a)
    rho = 1.0 / np.sqrt(3.0)
    assert np.allclose(minv, [[1.0, rho], [rho, 1.0]], atol=1e-12)
    assert c.kind == "super" and c.decoupled
    assert c.li_yau.allclose(c.diffusion)
    assert float(c.time_power) == 0.0


def test_check_bl_datum_loomis_whitney():
    rep = check_bl_datum([1.0, 1.0],
                         [LinearMap([[1.0, 0.0]]), LinearMap([[0.0, 1.0]])],
                         [SymMatrix([[1.0]]), SymMatrix([[1.0]])])
    assert rep.status == "equality"
    assert np.allclose(rep.M.a, np.eye(2), atol=1e-14)
    assert abs(rep.scaling_gap) < 1e-12


def test_check_bl_datum_halved_exponents_fail():
    rep = check_bl_datum([0.5, 0.5],
                         [LinearMap([[1.0, 0.0]]), LinearMap([[0.0, 1.0]])],
                         [SymMatrix([[1.0]]), SymMatrix([[1.0]])])
    assert rep.status == "fail"
    assert np.allclose(rep.M.a, 0.5 * np.eye(2))
    assert rep.margins == pytest.approx([-1.0, -1.0], abs=1e-12)


def test_check_bl_datum_scan_finds_inequality_instances():
    # coordinate projections never pass with halved exponents, whatever the
    # scalar matrices; overlapping identity maps with full exponents do
    maps = [LinearMap([[1.0, 0.0]]), LinearMap([[0.0, 1.0]])]
    for a in (0.25, 0.5, 1.0, 2.0, 4.0):
        rep = check_bl_datum([0.5, 0.5], maps,
                             [SymMatrix([[a]]), SymMatrix([[a]])])
        assert rep.status == "fail"
    hits = []
    for a in (0.25, 0.5, 1.0, 2.0, 4.0):
        rep = check_bl_datum([1.0, 1.0],
                             [LinearMap([[1.0]]), LinearMap([[1.0]])],
                             [SymMatrix([[a]]), SymMatrix([[2.0 * a]])])
        if rep.status == "inequality" and min(rep.margins) > 0:
            hits.append(a)
    assert hits  # strict-inequality instances exist in the scanned family


def test_check_bl_datum_singular():
    rep = check_bl_datum([1.0, 1.0],
                         [LinearMap([[1.0, 0.0]]), LinearMap([[1.0, 0.0]])],
                         [SymMatrix([[1.0]]), SymMatrix([[1.0]])])
    assert rep.status == "fail" and "singular" in rep.detail


def test_gmean_inequality_needs_prefactor_and_log_convexity():
    a1, a2 = SymMatrix([[1.0]]), SymMatrix([[2.0]])
    base = aniso_geom_mean([
        (Fraction(1), LinearMap([[1.0]]), a1, kernel1d(0.0, a=1.0)),
        (Fraction(1), LinearMap([[1.0]]), a2, kernel1d(0.5, a=2.0)),
    ])
    with pytest.raises(RuleError) as err:
        certify(base)
    assert err.value.rule == "geometric-mean-data"
    c = certify(time_power(Fraction(1, 2), base))
    assert c.kind == "super"
    assert np.allclose(c.diffusion.a, [[3.0]])
    assert c.li_yau.allclose(c.diffusion)
    assert float(c.time_power) == 0.5
    assert not c.decoupled


def test_gmean_declared_diffusion_mismatch():
    wrong = SymMatrix([[2.0]])
    with pytest.raises(RuleError) as err:
        certify(aniso_geom_mean([
            (Fraction(1, 2), LinearMap([[1.0]]), wrong, kernel1d(0.0)),
            (Fraction(1, 2), LinearMap([[1.0]]), wrong, kernel1d(1.0)),
        ]))
    assert err.value.rule == "geometric-mean-data"


# --------------------------------------------------------------------------
# convolution rule


def test_conv_rule_forward():
    sa = [[16.0 / 3.0]]
    node = convolve_power(Fraction(2), Fraction(4, 3), Fraction(4, 3),
                          heat_atom(sa, [(1.0, 0.0, 0.0)]),
                          heat_atom(sa, [(1.0, 0.3, 0.0)]), quad_count=61)
    c = certify(node)
    assert c.kind == "super"
    assert np.allclose(c.diffusion.a, [[4.0]])  # sigma = 1/4
    assert c.li_yau.allclose(c.diffusion)


def test_conv_rule_exponent_identity():
    sa = [[16.0 / 3.0]]
    with pytest.raises(RuleError) as err:
        certify(convolve_power(Fraction(2), Fraction(4, 3), Fraction(3, 2),
                               heat_atom(sa, [(1.0, 0.0, 0.0)]),
                               heat_atom(sa, [(1.0, 0.0, 0.0)]), quad_count=31))
    assert err.value.rule == "convolution"


def test_conv_rule_rejects_anisotropic():
    A = SymMatrix([[1.0, 0.0], [0.0, 2.0]])
    node = convolve_power(Fraction(2), Fraction(4, 3), Fraction(4, 3),
                          heat_atom(A, [(1.0, [0, 0], 0.0)]),
                          heat_atom(A, [(1.0, [0, 0], 0.0)]), quad_count=31)
    with pytest.raises(RuleError) as err:
        certify(node)
    assert err.value.rule == "convolution"
    assert "isotropically" in err.value.condition


def test_conv_rule_sigma_relation():
    with pytest.raises(RuleError) as err:
        certify(convolve_power(Fraction(2), Fraction(4, 3), Fraction(4, 3),
                               heat_atom([[4.0]], [(1.0, 0.0, 0.0)]),
                               heat_atom([[8.0]], [(1.0, 0.0, 0.0)]),
                               quad_count=31))
    assert err.value.rule == "convolution"
    assert "sigma" in err.value.condition


def test_conv_plain_convolution_of_solutions_is_exact():
    node = convolve_power(Fraction(1), Fraction(1), Fraction(1),
                          kernel1d(0.0, a=2.0), kernel1d(0.5, a=2.0),
                          quad_count=61)
    c = certify(node)
    assert c.kind == "exact"
    assert np.allclose(c.diffusion.a, [[1.0]])  # sigma = 1/2 + 1/2


# --------------------------------------------------------------------------
# directional concavity rule


def test_gamma_rule_accepts_critical_correlation():
    rho = 1.0 / np.sqrt(3.0)
    spec = WeightedGeomMean([Fraction(3, 4), Fraction(1, 2)])
    node = BellmanNode(spec, [kernel1d(0.0), kernel1d(0.4)],
                       maps=[LinearMap([[1.0, 0.0]]),
                             LinearMap([[rho, np.sqrt(1 - rho**2)]])])
    c = certify(node)
    assert c.kind == "super" and c.n == 2
    assert np.allclose(c.diffusion.a, np.eye(2))
    assert c.li_yau is None


def test_gamma_rule_rejects_supercritical():
    rho = 0.99
    spec = WeightedGeomMean([Fraction(3, 4), Fraction(1, 2)])
    node = BellmanNode(spec, [kernel1d(0.0), kernel1d(0.4)],
                       maps=[LinearMap([[1.0, 0.0]]),
                             LinearMap([[rho, np.sqrt(1 - rho**2)]])])
    with pytest.raises(RuleError) as err:
        certify(node)
    assert err.value.rule == "gamma-concavity"


def test_group_average_certifies_through_desugaring():
    u2 = heat_atom(np.eye(2), [(1.0, [0.0, 0.0], 0.0)])
    c = certify(group_average(2, tensor_product(u2, u2)))
    assert c.kind == "super" and c.n == 4
    assert np.allclose(c.diffusion.a, np.eye(4), atol=1e-12)
    assert c.li_yau is not None


# --------------------------------------------------------------------------
# side-condition checkers


def test_check_lambda_concavity_power():
    samples = halton_points(32, [(0.2, 4.0)], offset=5)
    out = check_lambda_concavity(Power(2), 1.0, samples)
    assert out["ok"]
    assert abs(out["worst_eigenvalue"]) < 1e-12  # identically zero difference


def test_check_lambda_concavity_lqnorm():
    samples = halton_points(32, [(0.2, 4.0)] * 2, offset=9)
    ok = check_lambda_concavity(LqNormP(2, 1), 1.0, samples)
    assert ok["ok"] and ok["worst_eigenvalue"] <= 1e-10
    bad = check_lambda_concavity(LqNormP(1.5, 3), 0.5, [(1.0, 1.0)])
    assert not bad["ok"] and bad["worst_eigenvalue"] > 0


def test_check_gamma_concave_classical_reduction():
    # identity blocks: reduces to ordinary concavity of the outer map
    spec = WeightedGeomMean([Fraction(1, 2), Fraction(1, 2)])
    gamma = GammaSpec([[np.eye(2), np.eye(2)], [np.eye(2), np.eye(2)]])
    rng = np.random.default_rng(0)
    samples = [
        (rng.uniform(0.2, 4.0, 2), [rng.standard_normal(2), rng.standard_normal(2)])
        for _ in range(200)
    ]
    out = check_gamma_concave(spec, gamma, samples)
    assert not out["falsified"]


def test_check_gamma_concave_hyper_cases():
    spec = WeightedGeomMean([Fraction(3, 4), Fraction(1, 2)])
    rng = np.random.default_rng(1)
    samples = [
        (rng.uniform(0.1, 6.0, 2), [rng.standard_normal(1), rng.standard_normal(1)])
        for _ in range(1000)
    ]
    rho = 1.0 / np.sqrt(3.0)
    crit = GammaSpec([[np.eye(1), rho * np.eye(1)], [rho * np.eye(1), np.eye(1)]])
    out = check_gamma_concave(spec, crit, samples)
    assert out["certificate_known"] and not out["falsified"]
    sup = GammaSpec([[np.eye(1), 0.99 * np.eye(1)], [0.99 * np.eye(1), np.eye(1)]])
    out2 = check_gamma_concave(spec, sup, samples)
    assert out2["falsified"] and not out2["certificate_known"]


def test_gamma_spec_validation():
    with pytest.raises(ValueError):
        GammaSpec([[np.eye(1), np.array([[2.0]])],
                   [np.array([[3.0]]), np.eye(1)]])


# --------------------------------------------------------------------------
# monotone functionals


def test_monotone_functional_directions():
    exact = kernel1d()
    sup = geom_mean([(0.5, kernel1d(0.0)), (0.5, kernel1d(1.0))])
    assert monotone_functional(exact, certify(exact)).direction == "constant"
    assert monotone_functional(sup, certify(sup)).direction == "nondecreasing"
    sb = [[4.0 / 3.0]]
    sub = convolve_power(Fraction(1, 2), Fraction(2, 3), Fraction(2, 3),
                         heat_atom(sb, [(1.0, 0.0, 0.0), (0.4, 0.5, 0.1)]),
                         heat_atom(sb, [(1.0, 0.0, 0.0)]), quad_count=31)
    assert monotone_functional(sub, certify(sub)).direction == "nonincreasing"


def test_weighted_functional_requires_subharmonicity():
    node = kernel1d()
    cert = certify(node)
    spec = monotone_functional(node, cert, weight=CoshWeight(0))
    assert spec.direction == "nondecreasing"

    class BadWeight(CoshWeight):
        name = "minus-cosh"

        def hessians(self, X):
            return -super().hessians(X)

    with pytest.raises(SubharmonicWeightError) as err:
        monotone_functional(node, cert, weight=BadWeight(0))
    assert err.value.worst_point is not None


def test_weighted_subsolution_refused():
    sb = [[4.0 / 3.0]]
    sub = convolve_power(Fraction(1, 2), Fraction(2, 3), Fraction(2, 3),
                         heat_atom(sb, [(1.0, 0.0, 0.0), (0.4, 0.5, 0.1)]),
                         heat_atom(sb, [(1.0, 0.0, 0.0)]), quad_count=31)
    with pytest.raises(SubharmonicWeightError):
        monotone_functional(sub, certify(sub), weight=CoshWeight(0))
