from fractions import Fraction

import numpy as np
import pytest

from monoflow.errors import DimensionMismatch, EvalError, EvalRangeError
from monoflow.nodes import (
    aniso_geom_mean,
    compose_linear,
    convolve_power,
    eval_jet,
    geom_mean,
    group_average,
    harmonic_sum,
    heat_atom,
    heat_kernel_jet,
    log_hessian,
    positive_sum,
    power,
    tensor_product,
    time_power,
)
from monoflow.symmat import LinearMap, SymMatrix, random_spd


def kernel1d(center=0.0, t0=0.0, a=1.0):
    return heat_atom([[a]], [(1.0, center, t0)])


# --------------------------------------------------------------------------
# closed-form kernel jets


def test_kernel_jet_reference_values():
    j = heat_kernel_jet([[1.0]], 1.0, [0.0])
    v = (4 * np.pi) ** -0.5
    assert abs(j.value - v) < 1e-15
    assert abs(j.dt + v / 2) < 1e-15
    assert np.allclose(j.grad, 0.0)
    assert np.allclose(log_hessian(j).a, [[-0.5]], atol=1e-13)


def test_kernel_pde_residual_is_machine_zero():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3):
        A = random_spd(n, rng)
        node = heat_atom(A, [(1.0, rng.uniform(-1, 1, n), 0.3)])
        for _ in range(5):
            t = float(rng.uniform(0.1, 2.0))
            x = rng.uniform(-2, 2, n)
            j = node.log_jets(t, x[None])
            ainv = np.linalg.inv(A.a)
            rel = j.lt[0] - np.einsum(
                "ij,ij->", ainv, j.lh[0] + np.outer(j.lg[0], j.lg[0])
            )
            assert abs(rel) < 1e-12


def test_kernel_mass_is_one():
    from monoflow.quad import BoxQuadrature, integrate

    rng = np.random.default_rng(1)
    A = random_spd(2, rng)
    node = heat_atom(A, [(1.0, [0.2, -0.4], 0.0)])
    lo, hi = node.support_box(1.0)
    q = BoxQuadrature([(l, h, 201) for l, h in zip(lo, hi)])
    res = integrate(node, 1.0, q)
    assert abs(res.value - 1.0) < 1e-6


def test_nonpositive_effective_time_rejected():
    node = kernel1d()
    with pytest.raises(EvalRangeError):
        node.log_values(-0.5, np.array([[0.0]]))
    with pytest.raises(EvalRangeError):
        eval_jet(node, 0.0, [0.0])


def test_value_underflow_rejected_in_jets():
    node = kernel1d()
    with pytest.raises(EvalRangeError):
        eval_jet(node, 0.01, [60.0])
    # log-space evaluation still works out there
    lv = node.log_values(0.01, np.array([[60.0]]))
    assert np.isfinite(lv[0])


def test_mixture_log_convexity_bound():
    rng = np.random.default_rng(2)
    A = random_spd(2, rng)
    node = heat_atom(A, [(1.0, [0.0, 0.0], 0.0), (0.7, [1.0, -0.5], 0.4)])
    for _ in range(20):
        t = float(rng.uniform(0.05, 2.0))
        x = rng.uniform(-2, 2, 2)
        j = node.log_jets(t, x[None])
        w = np.linalg.eigvalsh(j.lh[0] + A.a / (2 * t))
        assert w[0] >= -1e-11


# --------------------------------------------------------------------------
# finite-difference consistency of every node type


def _fd_check(node, t, x, rtol=1e-5):
    x = np.asarray(x, dtype=float)
    j = node.log_jets(t, x[None])
    v0 = float(np.exp(j.lv[0]))
    grad = v0 * j.lg[0]
    hess = v0 * (j.lh[0] + np.outer(j.lg[0], j.lg[0]))
    dt = v0 * float(j.lt[0])

    ht = 1e-5 * max(t, 1.0)
    vp = float(node.values(t + ht, x[None])[0])
    vm = float(node.values(t - ht, x[None])[0])
    assert abs((vp - vm) / (2 * ht) - dt) <= rtol * max(abs(dt), 1e-3 * v0)

    n = len(x)
    h = 1e-4
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        vp = float(node.values(t, (x + e)[None])[0])
        vm = float(node.values(t, (x - e)[None])[0])
        fd = (vp - vm) / (2 * h)
        assert abs(fd - grad[i]) <= rtol * max(abs(grad[i]), 1e-3 * v0)
        for k in range(i, n):
            ek = np.zeros(n)
            ek[k] = h
            vpp = float(node.values(t, (x + e + ek)[None])[0])
            vpm = float(node.values(t, (x + e - ek)[None])[0])
            vmp = float(node.values(t, (x - e + ek)[None])[0])
            vmm = float(node.values(t, (x - e - ek)[None])[0])
            fd2 = (vpp - vpm - vmp + vmm) / (4 * h * h)
            assert abs(fd2 - hess[i, k]) <= 20 * rtol * max(abs(hess[i, k]), v0)


def _sample_nodes():
    u0 = kernel1d(0.0)
    u1 = kernel1d(1.0, t0=0.2)
    mix = heat_atom([[1.3]], [(1.0, 0.0, 0.0), (0.6, 0.8, 0.3)])
    A2 = SymMatrix([[1.2, 0.2], [0.2, 0.9]])
    atom2 = heat_atom(A2, [(1.0, [0.1, -0.3], 0.1)])
    yield "atom", mix, 0.7, [0.4]
    yield "sum", positive_sum([(1.0, u0), (0.5, u1)]), 0.6, [0.3]
    yield "tensor", tensor_product(mix, u0), 0.8, [0.2, -0.4]
    yield "compose", compose_linear([[0.8, 0.3], [-0.2, 1.1]], atom2), 0.9, [0.3, 0.5]
    yield "wgm", geom_mean([(0.5, u0), (0.5, u1)]), 0.75, [0.6]
    yield "hsum", harmonic_sum(u0, u1), 0.5, [0.5]
    yield "pow", power(2, mix), 0.7, [0.2]
    yield "tpow", time_power(0.5, power(2, kernel1d(0.0, 0.0, 2.0))), 0.7, [0.2]
    one = SymMatrix([[1.0]])
    gm = aniso_geom_mean([
        (Fraction(3, 4), LinearMap([[1.0, 0.0]]), one, u0),
        (Fraction(1, 2), LinearMap([[0.0, 1.0]]), one, u1),
        (Fraction(3, 4), LinearMap([[1.0, -2.0 / np.sqrt(3)]]), one,
         kernel1d(0.0, 0.5)),
    ])
    yield "gmean", gm, 0.8, [0.3, -0.2]
    sa = [[16.0 / 3.0]]
    conv = convolve_power(Fraction(2), Fraction(4, 3), Fraction(4, 3),
                          heat_atom(sa, [(1.0, 0.0, 0.0), (0.5, 0.7, 0.2)]),
                          heat_atom(sa, [(1.0, -0.3, 0.0)]))
    yield "conv", conv, 0.6, [0.4]


@pytest.mark.parametrize("name,node,t,x", list(_sample_nodes()),
                         ids=lambda v: v if isinstance(v, str) else "")
def test_jets_match_finite_differences(name, node, t, x):
    _fd_check(node, t, x)


# --------------------------------------------------------------------------
# structural identities


def test_sum_doubles_value_keeps_log_hessian():
    u = kernel1d()
    s = positive_sum([(1.0, u), (1.0, u)])
    X = np.array([[0.37]])
    ju = u.log_jets(0.9, X)
    js = s.log_jets(0.9, X)
    assert abs(np.exp(js.lv[0]) - 2 * np.exp(ju.lv[0])) < 1e-14
    assert np.allclose(js.lh, ju.lh, atol=1e-13)


def test_geometric_mean_closed_form_value():
    u0, u1 = kernel1d(0.0), kernel1d(1.0)
    gm = geom_mean([(0.5, u0), (0.5, u1)])
    got = float(gm.values(1.0, np.array([[0.5]]))[0])
    want = (4 * np.pi) ** -0.5 * np.exp(-1.0 / 16.0)
    assert abs(got - want) < 1e-15
    assert abs(want - 0.2650) < 5e-5


def test_convolution_of_matched_kernels_is_a_kernel():
    sa = [[16.0 / 3.0]]
    k1 = heat_atom(sa, [(1.0, 0.0, 0.0)])
    k2 = heat_atom(sa, [(1.0, 0.0, 0.0)])
    node = convolve_power(Fraction(2), Fraction(4, 3), Fraction(4, 3), k1, k2)
    target = heat_atom([[4.0]], [(1.0, 0.0, 0.0)])
    X = np.linspace(-2, 2, 7)[:, None]
    for t in (0.4, 1.0):
        ratio = np.exp(node.log_values(t, X) - target.log_values(t, X))
        assert np.allclose(ratio, (4.0 / 3.0) ** 1.5 / 2.0, atol=1e-10)
        j = node.log_jets(t, X)
        rel = j.lt - 0.25 * (j.lh[:, 0, 0] + j.lg[:, 0] ** 2)
        assert np.max(np.abs(rel * np.exp(j.lv))) < 1e-7


def test_exponent_identity_for_matched_kernels():
    # 1/p1 + 1/p2 = 1 + 1/p for the matched example
    assert Fraction(3, 4) + Fraction(3, 4) == 1 + Fraction(1, 2)


def test_compose_transports_residual_exactly():
    # strict supersolution composed with an invertible map keeps its sign
    u0, u1 = kernel1d(0.0), kernel1d(1.0)
    sup = geom_mean([(0.5, u0), (0.5, u1)])
    L = np.array([[0.7]])
    comp = compose_linear(L, sup)
    X = np.array([[0.4]])
    t = 0.8
    js = sup.log_jets(t, (X @ L.T))
    jc = comp.log_jets(t, X)
    a_eff = 0.49  # L^T A L with A = 1
    rel_sup = js.lt[0] - (js.lh[0, 0, 0] + js.lg[0, 0] ** 2)
    rel_comp = jc.lt[0] - (jc.lh[0, 0, 0] + jc.lg[0, 0] ** 2) / a_eff
    assert abs(rel_sup - rel_comp) < 1e-12
    assert rel_sup > 0


def test_shift_translates_atoms():
    u = kernel1d(0.0)
    v = u.shifted([1.0])
    X = np.array([[1.3]])
    assert abs(v.values(0.7, X)[0] - u.values(0.7, X - 1.0)[0]) < 1e-15
    gm = geom_mean([(0.5, u), (0.5, kernel1d(1.0))]).shifted([0.5])
    got = gm.values(0.7, X)[0]
    want = geom_mean([(0.5, kernel1d(0.5)), (0.5, kernel1d(1.5))]).values(0.7, X)[0]
    assert abs(got - want) < 1e-15


def test_group_average_cannot_shift():
    u2 = heat_atom(np.eye(2), [(1.0, [0.0, 0.0], 0.0)])
    g = group_average(1, tensor_product(u2, u2))
    with pytest.raises(ValueError):
        g.shifted([1.0, 0.0, 0.0, 0.0])


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionMismatch):
        positive_sum([(1.0, kernel1d()),
                      (1.0, heat_atom(np.eye(2), [(1.0, [0, 0], 0.0)]))])
    with pytest.raises(DimensionMismatch):
        compose_linear([[1.0, 0.0]], kernel1d())


def test_eval_error_carries_node_path():
    u = kernel1d()
    s = positive_sum([(1.0, u), (1.0, kernel1d(1.0))])
    with pytest.raises(EvalError) as err:
        s.log_values(-1.0, np.array([[0.0]]))
    assert "sum[0]" in str(err.value)


def test_immutability_of_tree():
    u = kernel1d()
    assert u.atom.weights.flags.writeable is False
    assert u.atom.centers.flags.writeable is False
