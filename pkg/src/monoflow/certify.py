"""Certificate derivation: closure theorems applied as typing rules.

``certify`` walks an expression tree bottom-up and either produces a
Certificate (diffusion matrix, super/sub/exact kind, optional log-convexity
matrix, time-power exponent) or raises a RuleError naming the first side
condition that fails, with its numeric margin.

Rule names used in rejections:
  sum, tensor, compose           elementary closures
  concave-image                  concave increasing outer maps
  relaxed-concavity              time-weighted outer maps (t^{lambda n/2})
  geometric-mean-data            anisotropic geometric means
  convolution                    sharp-Young convolution closure
  gamma-concavity                directional concavity through isometries
  time-power                     generic prefactor bookkeeping
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional

import numpy as np

from .bellman import BellmanSpec, WeightedGeomMean
from .errors import RuleError, SingularMatrixError, SubharmonicWeightError
from .nodes import (
    AtomNode,
    BellmanNode,
    ComposeNode,
    ConvolutionNode,
    GeomMeanNode,
    GroupAverageNode,
    Node,
    SumNode,
    TensorNode,
    TimePowerNode,
)
from .quad import Weight, halton_points
from .symmat import LinearMap, SymMatrix, congruence, det, direct_sum, inverse, is_psd

SUPER, SUB, EXACT = "super", "sub", "exact"

#: absolute eigenvalue tolerance for PSD side conditions
PSD_TOL = 1e-10
#: entrywise tolerance for matrix equality side conditions
EQ_TOL = 1e-12


@dataclass(frozen=True)
class Certificate:
    """Machine-derived facts about a node.

    ``diffusion`` is the SPD matrix M with d_t u >= div(M^{-1} grad u) for
    kind super (reversed for sub, equality for exact).  ``li_yau``, when
    present, is the PSD matrix K with D^2 log u >= -K/(2t).  ``time_power``
    is the prefactor exponent already applied inside the node tree.
    ``decoupled`` records whether the geometric-mean rule applied in its
    decoupling regime (equality data with matched scaling).
    """

    n: int
    diffusion: SymMatrix
    kind: str
    li_yau: Optional[SymMatrix] = None
    time_power: float = 0.0
    decoupled: bool = False

    def __post_init__(self):
        if self.kind not in (SUPER, SUB, EXACT):
            raise ValueError(f"unknown certificate kind {self.kind!r}")
        if self.diffusion.min_eig() <= 0:
            raise ValueError("certificate diffusion matrix must be SPD")
        if self.li_yau is not None and not is_psd(self.li_yau, PSD_TOL):
            raise ValueError("certificate log-convexity matrix must be PSD")

    @property
    def is_supersolution(self) -> bool:
        return self.kind in (SUPER, EXACT)

    @property
    def is_subsolution(self) -> bool:
        return self.kind in (SUB, EXACT)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "kind": self.kind,
            "diffusion": self.diffusion.tolist(),
            "li_yau": None if self.li_yau is None else self.li_yau.tolist(),
            "time_power": float(self.time_power),
            "decoupled": self.decoupled,
        }


@dataclass(frozen=True)
class GammaSpec:
    """Block matrix Gamma_{jk} (n_j x n_k) describing directional concavity."""

    blocks: tuple

    def __init__(self, blocks):
        blocks = tuple(tuple(np.asarray(b, dtype=float) for b in row) for row in blocks)
        m = len(blocks)
        for j in range(m):
            if len(blocks[j]) != m:
                raise ValueError("gamma blocks must form a square grid")
            for k in range(m):
                if not np.allclose(blocks[j][k], blocks[k][j].T, atol=1e-12):
                    raise ValueError("gamma blocks must satisfy G_jk = G_kj^T")
        object.__setattr__(self, "blocks", blocks)

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def dims(self):
        return tuple(self.blocks[j][j].shape[0] for j in range(self.m))


@dataclass
class FunctionalSpec:
    """What to integrate, against which weight, and the expected direction."""

    node: Node
    direction: str
    weight: Optional[Weight] = None
    certificate: Optional[Certificate] = None


@dataclass
class BLDatumReport:
    M: SymMatrix
    status: str  # equality | inequality | fail
    margins: List[float]
    scaling_gap: float
    detail: str = ""


def _frac(x):
    return x if isinstance(x, Fraction) else None


def _combine_beta(betas, weights=None):
    """Weighted sum of child time powers, exact when everything is rational."""
    if weights is None:
        weights = [1] * len(betas)
    if all(_frac(b) is not None or isinstance(b, int) for b in betas) and all(
        _frac(w) is not None or isinstance(w, (int, Fraction)) for w in weights
    ):
        return sum(Fraction(w) * Fraction(b) for w, b in zip(weights, betas))
    return float(sum(float(w) * float(b) for w, b in zip(weights, betas)))


def _common_beta(betas):
    first = betas[0]
    if all(float(b) == float(first) for b in betas):
        return first
    return 0.0


def _merge_kinds(kinds, rule, path):
    if all(k == EXACT for k in kinds):
        return EXACT
    has_super = any(k == SUPER for k in kinds)
    has_sub = any(k == SUB for k in kinds)
    if has_super and has_sub:
        raise RuleError(rule, "children mix super- and subsolutions",
                        {"kinds": list(kinds)}, path)
    return SUPER if has_super else SUB


def _common_diffusion(certs, rule, path):
    base = certs[0].diffusion
    for i, c in enumerate(certs[1:], start=1):
        if not base.allclose(c.diffusion, EQ_TOL):
            gap = float(np.max(np.abs(base.a - c.diffusion.a))) if base.dim == c.diffusion.dim else float("nan")
            raise RuleError(
                rule,
                "children must satisfy the same equation "
                "(diffusion matrices differ)",
                {"child": i, "max_entry_gap": gap},
                path,
            )
    return base


def _common_li_yau(certs):
    mats = [c.li_yau for c in certs]
    if any(m is None for m in mats):
        return None
    base = mats[0]
    for m in mats[1:]:
        if not base.allclose(m, EQ_TOL):
            return None
    return base


def _li_yau_dominated(certs, bound: SymMatrix) -> bool:
    """All children carry a log-convexity matrix below ``bound``."""
    for c in certs:
        if c.li_yau is None or not is_psd(bound - c.li_yau, PSD_TOL):
            return False
    return True


# --------------------------------------------------------------------------
# side-condition checkers (also part of the public API)


def check_bl_datum(ps, Ls, As, tol: float = PSD_TOL) -> BLDatumReport:
    """Classify a geometric-mean datum by the PSD comparison
    L_j M^{-1} L_j* vs A_j^{-1}, where M = sum_j p_j L_j* A_j L_j."""
    ps = [float(p) for p in ps]
    Ls = [L if isinstance(L, LinearMap) else LinearMap(L) for L in Ls]
    As = [A if isinstance(A, SymMatrix) else SymMatrix(A) for A in As]
    if not (len(ps) == len(Ls) == len(As)) or not ps:
        raise ValueError("need matching nonempty exponent/map/matrix lists")
    if any(p < 0 for p in ps):
        raise ValueError("exponents must be nonnegative")
    n = Ls[0].cols
    scaling_gap = sum(p * L.rows for p, L in zip(ps, Ls)) - n

    M = SymMatrix(sum(p * (L.a.T @ A.a @ L.a) for p, L, A in zip(ps, Ls, As)))
    try:
        Minv = inverse(M)
    except SingularMatrixError:
        return BLDatumReport(M, "fail", [], scaling_gap,
                             detail=f"M is singular (det = {det(M):.3e})")

    margins, max_gap = [], 0.0
    for L, A in zip(Ls, As):
        D = inverse(A).a - L.a @ Minv.a @ L.a.T
        margins.append(float(np.linalg.eigvalsh(D)[0]))
        max_gap = max(max_gap, float(np.max(np.abs(D))))
    if max_gap <= tol:
        status = "equality"
    elif min(margins) >= -tol:
        status = "inequality"
    else:
        j = int(np.argmin(margins))
        return BLDatumReport(
            M, "fail", margins, scaling_gap,
            detail=(f"PSD condition: min eigenvalue of A_j^-1 - L_j M^-1 L_j* "
                    f"= {margins[j]:.3g} at j={j + 1}"),
        )
    return BLDatumReport(M, status, margins, scaling_gap)


def check_lambda_concavity(spec: BellmanSpec, lam, samples) -> dict:
    """Relaxed concavity D^2 B <= lambda diag(d_j B / x_j) on the orthant.

    For the built-in family the verdict comes from the analytic flag; the
    samples only cross-check it, reporting the most positive eigenvalue of
    the difference matrix encountered.
    """
    lam_f = float(lam)
    if lam_f < 0:
        raise ValueError("relaxation parameter must be nonnegative")
    ok = spec.lambda_admissible and lam_f >= float(spec.lambda_min) - 1e-12
    worst = -np.inf
    for x in samples:
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("sample points must be strictly positive")
        diff = spec.hess(x) - lam_f * np.diag(spec.grad(x) / x)
        worst = max(worst, float(np.linalg.eigvalsh(diff)[-1]))
    return {"ok": ok, "worst_eigenvalue": worst}


def _gamma_certificate_known(spec: BellmanSpec, gamma: GammaSpec) -> bool:
    # analytic certificate: two-input geometric-mean map with scalar blocks
    # [[I, rho I], [rho I, I]] and rho^2 (1-a1)(1-a2) >= ... see below
    if not isinstance(spec, WeightedGeomMean) or spec.m != 2 or gamma.m != 2:
        return False
    n1, n2 = gamma.dims
    if n1 != n2:
        return False
    eye = np.eye(n1)
    g11, g12, g22 = gamma.blocks[0][0], gamma.blocks[0][1], gamma.blocks[1][1]
    if not (np.allclose(g11, eye, atol=1e-12) and np.allclose(g22, eye, atol=1e-12)):
        return False
    rho = float(g12[0, 0])
    if not np.allclose(g12, rho * eye, atol=1e-12):
        return False
    a1, a2 = (float(p) for p in spec.exponents)
    if not (0 < a1 < 1 and 0 < a2 < 1):
        return False
    # negative semidefiniteness of the 2x2 log-coordinate form:
    # a1(1-a1) a2(1-a2) >= rho^2 a1^2 a2^2
    return rho**2 * a1 * a2 <= (1 - a1) * (1 - a2) + 1e-12


def check_gamma_concave(spec: BellmanSpec, gamma: GammaSpec, samples) -> dict:
    """Numeric falsifier for directional concavity, plus the analytic flag.

    ``samples`` is an iterable of (x, [v_1, ..., v_m]) pairs with x in the
    positive orthant and v_j in R^{n_j}.  The analytic certificate is only
    available for the built-in two-input geometric-mean map with blocks
    [[I, rho I], [rho I, I]] below the critical correlation.
    """
    falsified = False
    worst = -np.inf
    for x, vs in samples:
        x = np.asarray(x, dtype=float)
        h = spec.hess(x)
        q = 0.0
        scale = 0.0
        for j in range(gamma.m):
            vj = np.asarray(vs[j], dtype=float)
            for k in range(gamma.m):
                vk = np.asarray(vs[k], dtype=float)
                q += h[j, k] * float(vj @ (gamma.blocks[j][k] @ vk))
                scale += abs(h[j, k]) * float(np.linalg.norm(vj) * np.linalg.norm(vk))
        worst = max(worst, q)
        if q > 1e-10 * (scale + 1e-30):
            falsified = True
    return {
        "falsified": falsified,
        "certificate_known": _gamma_certificate_known(spec, gamma),
        "worst": worst,
    }


# --------------------------------------------------------------------------
# the rules


def certify(node: Node) -> Certificate:
    """Derive a certificate for the tree or raise RuleError."""
    return _certify(node, ())


def _kids(node, path):
    out = []
    for i, child in enumerate(node.children):
        try:
            out.append(_certify(child, path + (f"{node.kind}[{i}]",)))
        except RuleError:
            raise
    return out


def _certify(node: Node, path) -> Certificate:
    if isinstance(node, AtomNode):
        A = node.atom.A
        return Certificate(n=node.n, diffusion=A, kind=EXACT, li_yau=A)

    if isinstance(node, SumNode):
        certs = _kids(node, path)
        diffusion = _common_diffusion(certs, "sum", path)
        kind = _merge_kinds([c.kind for c in certs], "sum", path)
        return Certificate(
            n=node.n, diffusion=diffusion, kind=kind,
            li_yau=_common_li_yau(certs),
            time_power=_common_beta([c.time_power for c in certs]),
        )

    if isinstance(node, TensorNode):
        certs = _kids(node, path)
        kind = _merge_kinds([c.kind for c in certs], "tensor", path)
        li = None
        if all(c.li_yau is not None for c in certs):
            li = direct_sum(certs[0].li_yau, certs[1].li_yau)
        return Certificate(
            n=node.n,
            diffusion=direct_sum(certs[0].diffusion, certs[1].diffusion),
            kind=kind,
            li_yau=li,
            time_power=_combine_beta([c.time_power for c in certs]),
        )

    if isinstance(node, ComposeNode):
        cert = _kids(node, path)[0]
        li = None if cert.li_yau is None else congruence(node.L, cert.li_yau)
        return Certificate(
            n=node.n,
            diffusion=congruence(node.L, cert.diffusion),
            kind=cert.kind,
            li_yau=li,
            time_power=cert.time_power,
        )

    if isinstance(node, BellmanNode):
        if node.maps is not None:
            return _certify_gamma(node, path)
        return _certify_bellman(node, path, wrapped_beta=None)

    if isinstance(node, GeomMeanNode):
        return _certify_gmean(node, path, wrapped_beta=None)

    if isinstance(node, ConvolutionNode):
        return _certify_conv(node, path)

    if isinstance(node, TimePowerNode):
        child = node.children[0]
        if isinstance(child, BellmanNode) and child.maps is None and (
            not child.spec.concave
        ):
            return _certify_bellman(child, path + ("tpow",), wrapped_beta=node.beta)
        if isinstance(child, GeomMeanNode):
            report = check_bl_datum(child.exponents, child.maps, child.diffusions)
            if report.status == "inequality":
                return _certify_gmean(child, path + ("tpow",), wrapped_beta=node.beta)
        return _certify_tpow_generic(node, path)

    if isinstance(node, GroupAverageNode):
        try:
            return _certify(node.inner, path + ("gavg",))
        except RuleError as e:
            raise e

    raise RuleError("unknown", f"no rule for node kind {node.kind!r}", {}, path)


def _certify_bellman(node: BellmanNode, path, wrapped_beta) -> Certificate:
    spec = node.spec
    certs = _kids(node, path)
    rule = "concave-image" if wrapped_beta is None else "relaxed-concavity"

    if not spec.increasing:
        raise RuleError(rule, f"{spec.name} is not increasing in each variable",
                        {}, path)
    for i, c in enumerate(certs):
        if not c.is_supersolution:
            raise RuleError(rule, "outer maps only apply to supersolutions",
                            {"child": i, "kind": c.kind}, path)
    A = _common_diffusion(certs, rule, path)

    if wrapped_beta is None:
        if not spec.concave:
            lam = spec.lambda_min
            hint = (
                f"wrap with a t^(lambda*n/2) prefactor, lambda={lam}"
                if spec.lambda_admissible
                else "no admissible relaxation parameter exists"
            )
            raise RuleError(
                "concave-image",
                f"{spec.name} is not concave; {hint}",
                {"lambda_min": None if lam is None else float(lam)},
                path,
            )
        kind = EXACT if spec.is_linear and all(c.kind == EXACT for c in certs) else SUPER
        li = A if (spec.theta_convex and _li_yau_dominated(certs, A)) else None
        if isinstance(spec, (WeightedGeomMean,)):
            beta = _combine_beta([c.time_power for c in certs], list(spec.exponents))
        else:
            beta = _common_beta([c.time_power for c in certs])
        return Certificate(n=node.n, diffusion=A, kind=kind, li_yau=li,
                           time_power=beta)

    # relaxed rule: t^{lambda n / 2} B(u_1, ..., u_m)
    if not spec.lambda_admissible:
        raise RuleError(
            "relaxed-concavity",
            f"{spec.name} admits no relaxation parameter "
            "(hessian condition fails for every lambda >= 0)",
            {}, path,
        )
    lam = spec.lambda_min
    expected = _combine_beta([lam], [Fraction(node.n, 2)])
    if abs(float(wrapped_beta) - float(expected)) > 1e-12:
        raise RuleError(
            "relaxed-concavity",
            f"time-power exponent must equal lambda*n/2 = {expected} "
            f"for {spec.name}, got {wrapped_beta}",
            {"expected": float(expected), "got": float(wrapped_beta)},
            path,
        )
    if not _li_yau_dominated(certs, A):
        raise RuleError(
            "relaxed-concavity",
            "children must carry the log-convexity estimate matching their "
            "diffusion matrix",
            {}, path,
        )
    scale = 1 + (lam if isinstance(lam, Fraction) else float(lam))
    grown = A.scaled(float(scale))
    li = grown if spec.theta_convex else None
    beta = _combine_beta(
        [wrapped_beta, _common_beta([c.time_power for c in certs])]
    )
    return Certificate(n=node.n, diffusion=grown, kind=SUPER, li_yau=li,
                       time_power=beta)


def _certify_gmean(node: GeomMeanNode, path, wrapped_beta) -> Certificate:
    certs = _kids(node, path)
    rule = "geometric-mean-data"

    for i, (c, A, L) in enumerate(zip(certs, node.diffusions, node.maps)):
        if not c.is_supersolution:
            raise RuleError(rule, "geometric means consume supersolutions",
                            {"child": i, "kind": c.kind}, path)
        if not c.diffusion.allclose(A, EQ_TOL):
            raise RuleError(
                rule,
                f"declared diffusion at term {i + 1} does not match the "
                "child certificate",
                {"child": i}, path,
            )
        if not L.is_surjective():
            raise RuleError(rule, f"map at term {i + 1} is not surjective",
                            {"child": i}, path)

    report = check_bl_datum(node.exponents, node.maps, node.diffusions)
    if report.status == "fail":
        raise RuleError(rule, report.detail,
                        {"margins": report.margins,
                         "scaling_gap": report.scaling_gap}, path)

    beta_children = _combine_beta([c.time_power for c in certs],
                                  list(node.exponents))
    li_in = all(
        c.li_yau is not None and c.li_yau.allclose(A, EQ_TOL)
        for c, A in zip(certs, node.diffusions)
    )

    if report.status == "equality":
        li = report.M if li_in else None
        beta = beta_children if wrapped_beta is None else _combine_beta(
            [wrapped_beta, beta_children]
        )
        return Certificate(n=node.n, diffusion=report.M, kind=SUPER, li_yau=li,
                           time_power=beta, decoupled=True)

    # inequality path: needs the t^{(sum p_j n_j - n)/2} prefactor and the
    # log-convexity estimate on every child
    expected = report.scaling_gap / 2.0
    if wrapped_beta is None:
        raise RuleError(
            rule,
            "relaxed datum needs the time-power prefactor "
            f"t^beta with beta = (sum p_j n_j - n)/2 = {expected}",
            {"expected_beta": expected, "margins": report.margins},
            path,
        )
    if abs(float(wrapped_beta) - expected) > 1e-12:
        raise RuleError(
            rule,
            f"time-power exponent {wrapped_beta} does not match "
            f"(sum p_j n_j - n)/2 = {expected}",
            {"expected_beta": expected, "got": float(wrapped_beta)},
            path,
        )
    if not li_in:
        raise RuleError(
            rule,
            "relaxed datum requires every child to carry the log-convexity "
            "estimate matching its declared diffusion",
            {"margins": report.margins}, path,
        )
    beta = _combine_beta([wrapped_beta, beta_children])
    return Certificate(n=node.n, diffusion=report.M, kind=SUPER,
                       li_yau=report.M, time_power=beta, decoupled=False)


def _isotropic_sigma(cert: Certificate, rule, path, which):
    A = cert.diffusion.a
    n = A.shape[0]
    c = float(np.trace(A)) / n
    if not np.all(np.abs(A - c * np.eye(n)) <= max(EQ_TOL, EQ_TOL * abs(c))):
        raise RuleError(
            rule,
            f"child {which} must flow isotropically (diffusion a positive "
            "multiple of the identity); anisotropic convolution closures "
            "would contradict the sharp Young extremisers",
            {"diffusion": cert.diffusion.tolist()},
            path,
        )
    return 1.0 / c


def _certify_conv(node: ConvolutionNode, path) -> Certificate:
    rule = "convolution"
    p, p1, p2 = node.p, node.p1, node.p2

    if all(isinstance(v, Fraction) for v in (p, p1, p2)):
        balanced = (1 / p1 + 1 / p2) == 1 + 1 / p
        gap = float(1 / p1 + 1 / p2 - 1 - 1 / p)
    else:
        gap = 1.0 / float(p1) + 1.0 / float(p2) - 1.0 - 1.0 / float(p)
        balanced = abs(gap) <= 1e-12
    if not balanced:
        raise RuleError(
            rule, "exponents must satisfy 1/p1 + 1/p2 = 1 + 1/p",
            {"gap": gap, "p": float(p), "p1": float(p1), "p2": float(p2)}, path,
        )

    certs = _kids(node, path)
    s1 = _isotropic_sigma(certs[0], rule, path, 1)
    s2 = _isotropic_sigma(certs[1], rule, path, 2)
    if node.sigmas is not None:
        for declared, derived, which in ((node.sigmas[0], s1, 1), (node.sigmas[1], s2, 2)):
            if abs(declared - derived) > 1e-12 * max(1.0, abs(derived)):
                raise RuleError(
                    rule,
                    f"declared sigma_{which} = {declared} does not match the "
                    f"child certificate ({derived})",
                    {}, path,
                )

    # sigma_1 p_1 p_1' = sigma_2 p_2 p_2', cross-multiplied so that p_j = 1
    # (where p_j' blows up) stays finite
    lhs = s1 * float(p1) ** 2 * (float(p2) - 1.0)
    rhs = s2 * float(p2) ** 2 * (float(p1) - 1.0)
    if abs(lhs - rhs) > 1e-12 * max(1.0, abs(lhs), abs(rhs)):
        raise RuleError(
            rule,
            "diffusion strengths must satisfy sigma_1 p_1 p_1' = sigma_2 p_2 p_2'",
            {"lhs": lhs, "rhs": rhs, "sigma1": s1, "sigma2": s2}, path,
        )
    sigma = (s1 * float(p1) + s2 * float(p2)) / float(p)

    fp1, fp2 = float(p1), float(p2)
    super_ok = fp1 >= 1.0 and fp2 >= 1.0 and all(c.is_supersolution for c in certs)
    sub_ok = fp1 <= 1.0 and fp2 <= 1.0 and all(c.is_subsolution for c in certs)
    if not (super_ok or sub_ok):
        if fp1 >= 1.0 and fp2 >= 1.0:
            raise RuleError(rule, "forward closure (p_j >= 1) consumes supersolutions",
                            {"kinds": [c.kind for c in certs]}, path)
        if fp1 <= 1.0 and fp2 <= 1.0:
            raise RuleError(rule, "reverse closure (p_j <= 1) consumes subsolutions",
                            {"kinds": [c.kind for c in certs]}, path)
        raise RuleError(rule, "exponents must lie on one side of 1",
                        {"p1": fp1, "p2": fp2}, path)

    if super_ok and sub_ok and all(c.kind == EXACT for c in certs):
        kind = EXACT  # p = p1 = p2 = 1: plain convolution of solutions
    else:
        kind = SUPER if super_ok else SUB

    li = None
    if super_ok:
        want1 = SymMatrix(np.eye(node.n) / s1)
        want2 = SymMatrix(np.eye(node.n) / s2)
        if (
            certs[0].li_yau is not None and certs[0].li_yau.allclose(want1, EQ_TOL)
            and certs[1].li_yau is not None and certs[1].li_yau.allclose(want2, EQ_TOL)
        ):
            li = SymMatrix(np.eye(node.n) / sigma)

    beta = _combine_beta(
        [certs[0].time_power, certs[1].time_power],
        [p / p1, p / p2] if all(isinstance(v, Fraction) for v in (p, p1, p2))
        else [float(p) / fp1, float(p) / fp2],
    )
    return Certificate(
        n=node.n, diffusion=SymMatrix(np.eye(node.n) / sigma), kind=kind,
        li_yau=li, time_power=beta,
    )


def _certify_gamma(node: BellmanNode, path) -> Certificate:
    rule = "gamma-concavity"
    spec = node.spec
    certs = _kids(node, path)
    if not spec.increasing:
        raise RuleError(rule, f"{spec.name} is not increasing", {}, path)
    for i, (c, L) in enumerate(zip(certs, node.maps)):
        if not c.is_supersolution:
            raise RuleError(rule, "the directional rule consumes supersolutions",
                            {"child": i, "kind": c.kind}, path)
        if not L.is_isometry():
            raise RuleError(rule, f"map at input {i + 1} is not an isometry "
                            "(rows must be orthonormal)", {"child": i}, path)

    sigmas = [_isotropic_sigma(c, rule, path, i + 1) for i, c in enumerate(certs)]
    if max(sigmas) - min(sigmas) > 1e-12 * max(sigmas):
        raise RuleError(rule, "children must share one isotropic diffusion strength",
                        {"sigmas": sigmas}, path)
    sigma = sigmas[0]

    gamma = GammaSpec(
        [[Li.a @ Lk.a.T for Lk in node.maps] for Li in node.maps]
    )
    rng_pts = halton_points(64, [(0.2, 5.0)] * spec.m, offset=101)
    dirs = halton_points(64, [(-1.0, 1.0)] * sum(gamma.dims), offset=401)
    samples = []
    for x, v in zip(rng_pts, dirs):
        vs, at = [], 0
        for nj in gamma.dims:
            vs.append(v[at:at + nj])
            at += nj
        samples.append((x, vs))
    res = check_gamma_concave(spec, gamma, samples)
    if res["falsified"]:
        raise RuleError(
            rule,
            "directional concavity falsified on sampled points",
            {"worst": res["worst"]}, path,
        )
    if not res["certificate_known"]:
        raise RuleError(
            rule,
            f"no analytic directional-concavity certificate for {spec.name} "
            "with this geometry",
            {}, path,
        )
    beta = _combine_beta([c.time_power for c in certs], list(spec.exponents))
    return Certificate(
        n=node.n, diffusion=SymMatrix(np.eye(node.n) / sigma), kind=SUPER,
        li_yau=None, time_power=beta,
    )


def _certify_tpow_generic(node: TimePowerNode, path) -> Certificate:
    cert = _kids(node, path)[0]
    b = float(node.beta)
    beta = _combine_beta([node.beta, cert.time_power])
    if b == 0.0:
        return Certificate(n=cert.n, diffusion=cert.diffusion, kind=cert.kind,
                           li_yau=cert.li_yau, time_power=beta,
                           decoupled=cert.decoupled)
    if b > 0.0:
        if not cert.is_supersolution:
            raise RuleError(
                "time-power",
                "a positive time power over a subsolution has indeterminate sign",
                {"beta": b, "kind": cert.kind}, path,
            )
        kind = SUPER
    else:
        if not cert.is_subsolution:
            raise RuleError(
                "time-power",
                "a negative time power over a supersolution has indeterminate sign",
                {"beta": b, "kind": cert.kind}, path,
            )
        kind = SUB
    return Certificate(n=cert.n, diffusion=cert.diffusion, kind=kind,
                       li_yau=cert.li_yau, time_power=beta)


# --------------------------------------------------------------------------
# from certificates to monotone functionals


def monotone_functional(node: Node, cert: Certificate, weight: Optional[Weight] = None,
                        t_ref: float = 1.0, n_check: int = 256) -> FunctionalSpec:
    """Build the monotone-functional spec licensed by a certificate.

    A nontrivial weight must pass a sampled subharmonicity check
    tr(M^{-1} D^2 w) >= 0 over the node's support box; failures raise with
    the worst point.  Weighted subsolution functionals are refused: the two
    inequalities pull in opposite directions there.
    """
    trivial = weight is None or getattr(weight, "is_trivial", False)
    if not trivial:
        if cert.kind == SUB:
            raise SubharmonicWeightError(
                "weighted functionals require a supersolution certificate"
            )
        lo, hi = node.support_box(t_ref)
        X = halton_points(n_check, list(zip(lo, hi)), offset=7)
        margins = weight.subharmonic_margin(cert.diffusion, X)
        worst = int(np.argmin(margins))
        scale = float(np.max(np.abs(margins))) + 1e-30
        if margins[worst] < -1e-10 * scale:
            raise SubharmonicWeightError(
                f"weight {weight.name} fails subharmonicity: "
                f"tr(M^-1 D^2 w) = {margins[worst]:.3g} at x = {X[worst]}",
                worst_point=X[worst],
                worst_value=float(margins[worst]),
            )

    if cert.kind == EXACT and trivial:
        direction = "constant"
    elif cert.is_supersolution:
        direction = "nondecreasing"
    else:
        direction = "nonincreasing"
    return FunctionalSpec(node=node, direction=direction,
                          weight=None if weight is None else weight,
                          certificate=cert)
