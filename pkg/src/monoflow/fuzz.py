"""Random program generators for certificate soundness fuzzing.

``random_well_typed`` emits trees the rules must accept; every accepted tree
is then checked pointwise (residual, log-convexity) and along its trace by
the caller.  ``ill_typed_cases`` emits trees with one planted defect each,
together with the rule expected to name the rejection.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List

import numpy as np

from .bellman import WeightedGeomMean
from .nodes import (
    BellmanNode,
    Node,
    aniso_geom_mean,
    compose_linear,
    convolve_power,
    geom_mean,
    harmonic_sum,
    heat_atom,
    lq_norm,
    positive_sum,
    power,
    tensor_product,
    time_power,
)
from .symmat import LinearMap, SymMatrix, random_spd

#: (exponent r, sigma) pairs with sigma = 1/(r |r'|) for the forward path
_CONV_SUPER = [
    (Fraction(4, 3), Fraction(3, 16)),
    (Fraction(3, 2), Fraction(2, 9)),
    (Fraction(5, 4), Fraction(4, 25)),
]
#: and for the reverse path (r < 1)
_CONV_SUB = [
    (Fraction(2, 3), Fraction(3, 4)),
    (Fraction(3, 4), Fraction(4, 9)),
]


def _conv_pair(rng, sub: bool):
    r, sigma = (_CONV_SUB if sub else _CONV_SUPER)[
        int(rng.integers(0, len(_CONV_SUB if sub else _CONV_SUPER)))
    ]
    # 1/p = 2/r - 1
    p = 1 / (2 / r - 1)
    return r, sigma, p


def _atom(rng, n: int, A: SymMatrix) -> Node:
    m = int(rng.integers(1, 4))
    terms = []
    for _ in range(m):
        terms.append((
            float(rng.uniform(0.5, 2.0)),
            rng.uniform(-1.0, 1.0, size=n),
            float(rng.uniform(0.0, 0.5)),
        ))
    return heat_atom(A, terms)


def _with_diffusion(rng, depth: int, n: int, A: SymMatrix,
                    need_li: bool = True) -> Node:
    """A tree whose certificate diffusion equals A exactly.

    With ``need_li`` the tree also carries the log-convexity matrix A, which
    excludes the harmonic-sum map (its log companion is concave).
    """
    if depth <= 1:
        return _atom(rng, n, A)
    pick = rng.random()
    if pick < 0.25:
        k = int(rng.integers(2, 4))
        return positive_sum([
            (float(rng.uniform(0.5, 2.0)),
             _with_diffusion(rng, depth - 1, n, A, need_li))
            for _ in range(k)
        ])
    if pick < 0.45:
        th = Fraction(int(rng.integers(1, 4)), 4)
        return geom_mean([
            (th, _with_diffusion(rng, depth - 1, n, A, need_li)),
            (1 - th, _with_diffusion(rng, depth - 1, n, A, need_li)),
        ])
    if pick < 0.6 and not need_li:
        return harmonic_sum(
            _with_diffusion(rng, depth - 1, n, A, False),
            _with_diffusion(rng, depth - 1, n, A, False),
        )
    if pick < 0.75:
        # t^{lambda n/2} u^p certifies with diffusion (1+lambda) A_child
        p = [Fraction(5, 4), Fraction(3, 2), Fraction(2)][int(rng.integers(0, 3))]
        lam = p - 1
        inner_A = A.scaled(1.0 / float(1 + lam))
        child = _with_diffusion(rng, depth - 1, n, inner_A, True)
        return time_power(lam * Fraction(n, 2), power(p, child))
    if pick < 0.85:
        p, q = [(Fraction(2), Fraction(1)), (Fraction(2), Fraction(2)),
                (Fraction(3), Fraction(3, 2))][int(rng.integers(0, 3))]
        lam = p - 1
        inner_A = A.scaled(1.0 / float(1 + lam))
        return time_power(
            lam * Fraction(n, 2),
            lq_norm(p, q,
                    _with_diffusion(rng, depth - 1, n, inner_A, True),
                    _with_diffusion(rng, depth - 1, n, inner_A, True)),
        )
    # identity-map geometric-mean datum: M = (th + (1-th)) A = A
    th = Fraction(int(rng.integers(1, 4)), 4)
    eye = LinearMap(np.eye(n))
    return aniso_geom_mean([
        (th, eye, A, _with_diffusion(rng, depth - 1, n, A, need_li)),
        (1 - th, eye, A, _with_diffusion(rng, depth - 1, n, A, need_li)),
    ])


def _hyper_tree(rng, depth: int) -> Node:
    """The correlated two-projection datum on R^2 (equality case)."""
    rho = 1.0 / np.sqrt(3.0)
    one = SymMatrix([[1.0]])
    L1 = LinearMap([[1.0, 0.0]])
    L2 = LinearMap([[0.0, 1.0]])
    L3 = LinearMap([[1.0, -2.0 / np.sqrt(3.0)]])
    kids = [_with_diffusion(rng, depth - 1, 1, one, True) for _ in range(3)]
    del rho
    return aniso_geom_mean([
        (Fraction(3, 4), L1, one, kids[0]),
        (Fraction(1, 2), L2, one, kids[1]),
        (Fraction(3, 4), L3, one, kids[2]),
    ])


def _inflated_gmean(rng, depth: int, n: int) -> Node:
    """Inequality-case datum: inflate the exponents of an equality datum."""
    A = random_spd(n, rng)
    th = Fraction(1, 2)
    kappa = Fraction(int(rng.integers(11, 17)), 10)
    ps = [kappa * th, kappa * (1 - th)]
    eye = LinearMap(np.eye(n))
    node = aniso_geom_mean([
        (ps[0], eye, A, _with_diffusion(rng, depth - 1, n, A, True)),
        (ps[1], eye, A, _with_diffusion(rng, depth - 1, n, A, True)),
    ])
    beta = (ps[0] + ps[1]) * Fraction(n) - Fraction(n)
    return time_power(beta / 2, node)


def random_well_typed(rng, max_depth: int = 4, max_dim: int = 3,
                      allow_sub: bool = True) -> Node:
    n = int(rng.integers(1, max_dim + 1))
    pick = rng.random()
    if pick < 0.12 and n >= 2:
        # tensor children must not mix super- with subsolutions
        n1 = int(rng.integers(1, n))
        return tensor_product(
            random_well_typed(rng, max_depth - 1, n1, allow_sub=False),
            random_well_typed(rng, max_depth - 1, n - n1, allow_sub=False),
        )
    if pick < 0.24:
        A = random_spd(n, rng)
        q_mat, _ = np.linalg.qr(rng.standard_normal((n, n)))
        L = LinearMap(q_mat * rng.uniform(0.5, 2.0, size=n))
        return compose_linear(L, _with_diffusion(rng, max_depth - 1, n, A, False))
    if pick < 0.38 and n == 1:
        sub = allow_sub and rng.random() < 0.4
        r, sigma, p = _conv_pair(rng, sub)
        A = SymMatrix([[1.0 / float(sigma)]])
        left = _atom(rng, 1, A)
        right = _atom(rng, 1, A)
        return convolve_power(p, r, r, left, right, quad_count=161)
    if pick < 0.46 and n == 2:
        return _hyper_tree(rng, max_depth)
    if pick < 0.58:
        return _inflated_gmean(rng, max_depth, n)
    if pick < 0.66:
        A = random_spd(n, rng)
        return time_power(Fraction(int(rng.integers(0, 3)), 4),
                          _with_diffusion(rng, max_depth - 1, n, A, False))
    return _with_diffusion(rng, max_depth, n, random_spd(n, rng), False)


@dataclass
class IllTyped:
    label: str
    build: Callable[[], Node]
    expected_rule: str


def ill_typed_cases(rng, count: int = 50) -> List[IllTyped]:
    """Planted-defect programs cycling through the rejection catalogue."""
    one = SymMatrix([[1.0]])
    eye2 = SymMatrix(np.eye(2))

    def atom1(center=0.0, a=1.0):
        return heat_atom([[a]], [(1.0, center, 0.0)])

    def mk_broken_bl():
        # coordinate projections with exponents 1/2: PSD comparison fails
        return aniso_geom_mean([
            (Fraction(1, 2), LinearMap([[1.0, 0.0]]), one, atom1()),
            (Fraction(1, 2), LinearMap([[0.0, 1.0]]), one, atom1(0.5)),
        ])

    def mk_declared_mismatch():
        return aniso_geom_mean([
            (Fraction(1, 2), LinearMap([[1.0]]), SymMatrix([[2.0]]), atom1()),
            (Fraction(1, 2), LinearMap([[1.0]]), SymMatrix([[2.0]]), atom1(1.0)),
        ])

    def mk_exponent_mismatch():
        sa = [[16.0 / 3.0]]
        return convolve_power(Fraction(2), Fraction(4, 3), Fraction(3, 2),
                              heat_atom(sa, [(1.0, 0.0, 0.0)]),
                              heat_atom(sa, [(1.0, 0.0, 0.0)]), quad_count=31)

    def mk_aniso_conv():
        A = SymMatrix([[1.0, 0.0], [0.0, 2.0]])
        left = heat_atom(A, [(1.0, [0.0, 0.0], 0.0)])
        right = heat_atom(A, [(1.0, [0.0, 0.0], 0.0)])
        return convolve_power(Fraction(2), Fraction(4, 3), Fraction(4, 3),
                              left, right, quad_count=31)

    def mk_sigma_mismatch():
        left = heat_atom([[4.0]], [(1.0, 0.0, 0.0)])
        right = heat_atom([[8.0]], [(1.0, 0.0, 0.0)])
        return convolve_power(Fraction(2), Fraction(4, 3), Fraction(4, 3),
                              left, right, quad_count=31)

    def mk_sum_mismatch():
        return positive_sum([(1.0, atom1(a=1.0)), (1.0, atom1(a=2.0))])

    def mk_mixed_kinds():
        # a strict supersolution plus a strict subsolution of the same flow
        sup = geom_mean([(Fraction(1, 2), heat_atom([[0.5]], [(1.0, 0.0, 0.0)])),
                         (Fraction(1, 2), heat_atom([[0.5]], [(1.0, 1.0, 0.0)]))])
        r, sigma = _CONV_SUB[0]
        A = SymMatrix([[1.0 / float(sigma)]])
        subp = 1 / (2 / r - 1)
        sub = convolve_power(
            subp, r, r,
            heat_atom(A, [(1.0, 0.0, 0.0), (0.5, 1.0, 0.1)]),
            heat_atom(A, [(1.0, 0.0, 0.0)]), quad_count=31,
        )
        # reverse-path sigma: sigma p = sigma_1 p_1 + sigma_2 p_2 gives 2,
        # so the subsolution flows with diffusion matrix [[1/2]]
        return positive_sum([(1.0, sup), (1.0, sub)])

    def mk_bare_power():
        return power(2, atom1())

    def mk_wrong_beta():
        return time_power(Fraction(1, 3), power(2, atom1()))

    def mk_lqnorm_bad():
        return time_power(Fraction(1, 4),
                          lq_norm(Fraction(3, 2), 3, atom1(), atom1(1.0)))

    def mk_gmean_missing_tpow():
        A = SymMatrix([[1.0]])
        return aniso_geom_mean([
            (Fraction(1), LinearMap([[1.0]]), A, atom1()),
            (Fraction(1), LinearMap([[1.0]]), A, atom1(1.0)),
        ])

    def mk_negative_tpow():
        # strict supersolution: a negative prefactor has indeterminate sign
        strict = geom_mean([(Fraction(1, 2), atom1()),
                            (Fraction(1, 2), atom1(1.0))])
        return time_power(Fraction(-1, 2), strict)

    def mk_gamma_supercritical():
        rho = 0.99
        L1 = LinearMap([[1.0, 0.0]])
        L2 = LinearMap([[rho, np.sqrt(1.0 - rho**2)]])
        spec = WeightedGeomMean([Fraction(3, 4), Fraction(1, 2)])
        return BellmanNode(spec, [atom1(), atom1(0.5)], maps=[L1, L2])

    def mk_gamma_not_isometry():
        L1 = LinearMap([[2.0, 0.0]])
        L2 = LinearMap([[0.0, 1.0]])
        spec = WeightedGeomMean([Fraction(1, 2), Fraction(1, 2)])
        return BellmanNode(spec, [atom1(), atom1(0.5)], maps=[L1, L2])

    def mk_bellman_on_sub():
        r, sigma = _CONV_SUB[0]
        A = SymMatrix([[1.0 / float(sigma)]])
        subp = 1 / (2 / r - 1)
        sub = convolve_power(
            subp, r, r,
            heat_atom(A, [(1.0, 0.0, 0.0), (0.7, 0.5, 0.2)]),
            heat_atom(A, [(1.0, 0.0, 0.0)]), quad_count=31,
        )
        return geom_mean([(Fraction(1, 2), sub), (Fraction(1, 2), sub)])

    catalogue = [
        IllTyped("broken-bl-psd", mk_broken_bl, "geometric-mean-data"),
        IllTyped("declared-diffusion-mismatch", mk_declared_mismatch,
                 "geometric-mean-data"),
        IllTyped("conv-exponent-mismatch", mk_exponent_mismatch, "convolution"),
        IllTyped("conv-anisotropic", mk_aniso_conv, "convolution"),
        IllTyped("conv-sigma-relation", mk_sigma_mismatch, "convolution"),
        IllTyped("sum-diffusion-mismatch", mk_sum_mismatch, "sum"),
        IllTyped("sum-mixed-kinds", mk_mixed_kinds, "sum"),
        IllTyped("bare-superlinear-power", mk_bare_power, "concave-image"),
        IllTyped("wrong-prefactor", mk_wrong_beta, "relaxed-concavity"),
        IllTyped("lqnorm-inadmissible", mk_lqnorm_bad, "relaxed-concavity"),
        IllTyped("gmean-missing-prefactor", mk_gmean_missing_tpow,
                 "geometric-mean-data"),
        IllTyped("negative-tpow-on-super", mk_negative_tpow, "time-power"),
        IllTyped("gamma-supercritical", mk_gamma_supercritical,
                 "gamma-concavity"),
        IllTyped("gamma-not-isometry", mk_gamma_not_isometry,
                 "gamma-concavity"),
        IllTyped("outer-map-on-subsolution", mk_bellman_on_sub,
                 "concave-image"),
    ]
    out = []
    i = 0
    while len(out) < count:
        out.append(catalogue[i % len(catalogue)])
        i += 1
    return out
