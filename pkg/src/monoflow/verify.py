"""Pointwise inequality verifiers, monotonicity traces, and deep tests.

Margins are always signed and never clamped; verifiers report how far a
condition is from failing, not just a boolean.  The negative controls
(Dirichlet energy, entropy, the two-flow difference functional) live here as
explicit operations on solution atoms: they are not certificate-generated
and the certificate engine is never blamed for them.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .certify import Certificate
from .errors import DimensionMismatch
from .nodes import GeomMeanNode, Node
from .quad import (
    BoxQuadrature,
    FunctionalTrace,
    geometric_times,
    halton_points,
    integrate_values,
)
from .symmat import SymMatrix, inverse


@dataclass(frozen=True)
class PointReport:
    """Signed margins at one (t, x) sample."""

    t: float
    x: np.ndarray
    residual: float          # absolute supersolution margin (sign-adjusted)
    residual_rel: float      # margin relative to the derivative scale
    liyau_gap: Optional[float]      # min eigenvalue of D^2 log u + K/(2t)
    liyau_rel: Optional[float]
    ok: bool


@dataclass
class PointCheckSummary:
    count: int
    worst_residual: float
    worst_residual_rel: float
    worst_liyau_gap: Optional[float]
    worst_liyau_rel: Optional[float]
    reports: List[PointReport] = field(default_factory=list)

    def passed(self, rel_tol: float = 1e-7) -> bool:
        ok = self.worst_residual_rel >= -rel_tol
        if self.worst_liyau_rel is not None:
            ok = ok and self.worst_liyau_rel >= -rel_tol
        return ok

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "worst_residual": self.worst_residual,
            "worst_residual_rel": self.worst_residual_rel,
            "worst_liyau_gap": self.worst_liyau_gap,
            "worst_liyau_rel": self.worst_liyau_rel,
        }


def _relative_residuals(node: Node, cert: Certificate, t: float, X: np.ndarray):
    """Residual (d_t u - tr(M^{-1} D^2 u)) / u and its magnitude scale."""
    j = node.log_jets(t, X)
    minv = inverse(cert.diffusion).a
    div_term = np.einsum(
        "ij,nij->n", minv, j.lh + j.lg[:, :, None] * j.lg[:, None, :]
    )
    rel = j.lt - div_term
    scale = np.abs(j.lt) + np.abs(div_term) + 1e-30
    return rel, scale, j


def supersolution_residual(node: Node, cert: Certificate, t: float, x) -> float:
    """Signed absolute residual d_t u - tr(M^{-1} D^2 u) at one point."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    rel, _, j = _relative_residuals(node, cert, t, x[None, :])
    return float(np.exp(j.lv[0]) * rel[0])


def li_yau_gap(node: Node, cert: Optional[Certificate], t: float, x,
               K: Optional[SymMatrix] = None) -> float:
    """Min eigenvalue of D^2 log u + K/(2t); falsifier mode with explicit K."""
    if K is None:
        if cert is None or cert.li_yau is None:
            raise ValueError("no log-convexity matrix available; pass K")
        K = cert.li_yau
    x = np.atleast_1d(np.asarray(x, dtype=float))
    j = node.log_jets(t, x[None, :])
    return float(np.linalg.eigvalsh(j.lh[0] + K.a / (2.0 * t))[0])


def check_pointwise(node: Node, cert: Certificate, t_range, box,
                    n_space: int = 128, n_time: int = 16,
                    offset: int = 0, threads: int = 1,
                    rel_tol: float = 1e-7,
                    keep_reports: bool = False) -> PointCheckSummary:
    """Residual and log-convexity margins over low-discrepancy samples.

    Space points are Halton samples in the box, crossed with a geometric
    time grid.  The residual margin is sign-adjusted by the certificate kind
    (negated for subsolutions, absolute for exact solutions), so negative
    margins always mean violation.
    """
    times = geometric_times(t_range[0], t_range[1], n_time)
    X = halton_points(n_space, box, offset=offset)
    K = cert.li_yau

    def one(i):
        t = times[i]
        rel, scale, j = _relative_residuals(node, cert, t, X)
        if cert.kind == "sub":
            rel = -rel
        elif cert.kind == "exact":
            rel = -np.abs(rel)
        absres = np.exp(np.maximum(j.lv, -700.0)) * rel
        gaps = rels = None
        if K is not None:
            shifted = j.lh + K.a[None, :, :] / (2.0 * t)
            gaps = np.linalg.eigvalsh(shifted)[:, 0]
            lh_scale = np.abs(np.linalg.eigvalsh(j.lh)).max(axis=1)
            k_scale = float(np.abs(np.linalg.eigvalsh(K.a)).max()) / (2.0 * t)
            rels = gaps / (lh_scale + k_scale + 1e-30)
        return rel, scale, absres, gaps, rels

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(one, range(len(times))))
    else:
        rows = [one(i) for i in range(len(times))]

    worst_res = np.inf
    worst_rel = np.inf
    worst_gap = np.inf if K is not None else None
    worst_gap_rel = np.inf if K is not None else None
    reports: List[PointReport] = []
    for i, (rel, scale, absres, gaps, rels) in enumerate(rows):
        worst_res = min(worst_res, float(absres.min()))
        worst_rel = min(worst_rel, float((rel / scale).min()))
        if K is not None:
            worst_gap = min(worst_gap, float(gaps.min()))
            worst_gap_rel = min(worst_gap_rel, float(rels.min()))
        if keep_reports:
            for k in range(X.shape[0]):
                ok = rel[k] / scale[k] >= -rel_tol
                if K is not None:
                    ok = ok and rels[k] >= -rel_tol
                reports.append(PointReport(
                    t=float(times[i]), x=X[k].copy(),
                    residual=float(absres[k]),
                    residual_rel=float(rel[k] / scale[k]),
                    liyau_gap=None if gaps is None else float(gaps[k]),
                    liyau_rel=None if rels is None else float(rels[k]),
                    ok=bool(ok),
                ))
    return PointCheckSummary(
        count=len(times) * X.shape[0],
        worst_residual=worst_res,
        worst_residual_rel=worst_rel,
        worst_liyau_gap=worst_gap,
        worst_liyau_rel=worst_gap_rel,
        reports=reports,
    )


# --------------------------------------------------------------------------
# the two-kernel harmonic-mean counterexample


def hprime2(z):
    """Second derivative of h(z) = -log(1 + e^{-z}): always negative."""
    z = np.asarray(z, dtype=float)
    return -np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))) ** 2


def explicit_counterexample_laplacian(t: float, x, a1, a2, n: int) -> float:
    """Closed-form Laplacian of log of the harmonic mean of two kernels.

      Delta log u~ = -n/(2t) + h''((|x-a1|^2 - |x-a2|^2)/(4t)) |a1-a2|^2/(4t^2)
    """
    if t <= 0:
        raise ValueError("t must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    a1 = np.atleast_1d(np.asarray(a1, dtype=float))
    a2 = np.atleast_1d(np.asarray(a2, dtype=float))
    z = (np.sum((x - a1) ** 2) - np.sum((x - a2) ** 2)) / (4.0 * t)
    sep = float(np.sum((a1 - a2) ** 2))
    return float(-n / (2.0 * t) + hprime2(z) * sep / (4.0 * t**2))


# --------------------------------------------------------------------------
# difference functionals on genuine solutions (negative controls)


def qp_trace(u1: Node, u2: Node, p: float, times, q: BoxQuadrature) -> FunctionalTrace:
    """Q_p(t) = (int u1^{1/p} u2^{1/p})^2 - int u1^{2/p} int u2^{2/p}.

    Defined for genuine solution atoms with 1 <= p <= 2; nonpositive by the
    Cauchy-Schwarz inequality and nondecreasing along the flow.  This is a
    scenario operation, not a certified combinator: the quantity involves a
    difference and fails on general supersolutions.
    """
    if not 1.0 <= float(p) <= 2.0:
        raise ValueError("q_p trace needs 1 <= p <= 2")
    times = np.asarray(times, dtype=float)
    X = q.points()
    vals, truncs = [], []
    for t in times:
        l1 = u1.log_values(t, X)
        l2 = u2.log_values(t, X)
        cross = integrate_values(np.exp((l1 + l2) / p), q)
        m1 = integrate_values(np.exp(2.0 * l1 / p), q)
        m2 = integrate_values(np.exp(2.0 * l2 / p), q)
        vals.append(cross.value**2 - m1.value * m2.value)
        truncs.append(
            2.0 * abs(cross.value) * cross.truncation
            + abs(m2.value) * m1.truncation
            + abs(m1.value) * m2.truncation
        )
    return FunctionalTrace(
        times=times, values=np.array(vals), direction="nondecreasing",
        truncation=np.array(truncs), meta={"functional": f"q_{p}"},
    )


def dirichlet_energy_trace(node: Node, times, q: BoxQuadrature) -> FunctionalTrace:
    """int |grad u|^2 over the box: decreasing along genuine heat flow."""
    times = np.asarray(times, dtype=float)
    X = q.points()
    vals, truncs = [], []
    for t in times:
        j = node.log_jets(t, X)
        u = np.exp(j.lv)
        integrand = u**2 * np.einsum("ni,ni->n", j.lg, j.lg)
        res = integrate_values(integrand, q)
        vals.append(res.value)
        truncs.append(res.truncation)
    return FunctionalTrace(
        times=times, values=np.array(vals), direction="nonincreasing",
        truncation=np.array(truncs), meta={"functional": "dirichlet"},
    )


def entropy_trace(node: Node, times, q: BoxQuadrature) -> FunctionalTrace:
    """-int u log u: nondecreasing on genuine solutions.

    Restricted to solution atoms by convention; the entropy functional is
    not monotone on general supersolutions and no certificate is claimed.
    """
    times = np.asarray(times, dtype=float)
    X = q.points()
    vals, truncs = [], []
    for t in times:
        lv = node.log_values(t, X)
        u = np.exp(lv)
        res = integrate_values(-u * lv, q)
        vals.append(res.value)
        truncs.append(res.truncation)
    return FunctionalTrace(
        times=times, values=np.array(vals), direction="nondecreasing",
        truncation=np.array(truncs), meta={"functional": "entropy"},
    )


# --------------------------------------------------------------------------
# Fisher information / entropy power on gridded densities


@dataclass
class Density1D:
    """A probability density sampled on a uniform 1D grid."""

    x: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if self.x.ndim != 1 or self.x.shape != self.f.shape:
            raise DimensionMismatch("grid and values must be equal-length 1D")
        h = np.diff(self.x)
        if np.any(np.abs(h - h[0]) > 1e-9 * abs(h[0])):
            raise ValueError("grid must be uniform")
        if np.any(self.f < 0):
            raise ValueError("density must be nonnegative")
        mass = float(np.trapezoid(self.f, self.x))
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"density mass {mass} is not 1 within 1e-6")

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])


def density_from_node(node: Node, t: float, lo: float, hi: float,
                      count: int) -> Density1D:
    x = np.linspace(lo, hi, count)
    return Density1D(x, node.values(t, x[:, None]))


def fisher_info(d: Density1D) -> float:
    """I(f) = int (f')^2 / f by central differences and the trapezoid rule."""
    fp = np.gradient(d.f, d.h, edge_order=2)
    integrand = np.where(d.f > 1e-300, fp**2 / np.maximum(d.f, 1e-300), 0.0)
    return float(np.trapezoid(integrand, d.x))


def entropy(d: Density1D) -> float:
    """H(f) = -int f log f."""
    integrand = np.where(d.f > 1e-300, d.f * np.log(np.maximum(d.f, 1e-300)), 0.0)
    return float(-np.trapezoid(integrand, d.x))


def convolve_densities(d1: Density1D, d2: Density1D) -> Density1D:
    if abs(d1.h - d2.h) > 1e-9 * d1.h:
        raise ValueError("densities must share the grid spacing")
    f = np.convolve(d1.f, d2.f) * d1.h
    x0 = d1.x[0] + d2.x[0]
    x = x0 + d1.h * np.arange(len(f))
    return Density1D(x, f)


def epi_check(d1: Density1D, d2: Density1D) -> dict:
    """Entropy-power inequality e^{2H(Y1+Y2)} >= e^{2H(Y1)} + e^{2H(Y2)}."""
    conv = convolve_densities(d1, d2)
    lhs = float(np.exp(2.0 * entropy(conv)))
    rhs = float(np.exp(2.0 * entropy(d1)) + np.exp(2.0 * entropy(d2)))
    return {"lhs": lhs, "rhs": rhs, "ok": lhs >= rhs * (1.0 - 1e-6)}


def blachman_check(d1: Density1D, d2: Density1D, a1: float, a2: float) -> dict:
    """a1^2 I(f1) + a2^2 I(f2) >= (a1+a2)^2 I(f1*f2)."""
    conv = convolve_densities(d1, d2)
    lhs = a1**2 * fisher_info(d1) + a2**2 * fisher_info(d2)
    rhs = (a1 + a2) ** 2 * fisher_info(conv)
    return {"lhs": lhs, "rhs": rhs, "ok": lhs >= rhs * (1.0 - 1e-6)}


# --------------------------------------------------------------------------
# convolution-closure deep tests


def _dual_exponent_weights(p1: float, p2: float):
    c1 = 1.0 - 1.0 / p1
    c2 = 1.0 - 1.0 / p2
    lam1 = (c1 / (c1 + c2)) ** 2
    lam2 = (c2 / (c1 + c2)) ** 2
    return lam1, lam2


def conv_nonnegativity_witness(u1: Node, u2: Node, p, p1, p2, X, t: float,
                               x, q: BoxQuadrature) -> dict:
    """The nonnegative function controlling the convolution log-convexity
    closure, computed two ways.

    ``single`` assembles it from one quadrature pass (four moment integrals
    of the integrand against the direction vector X); ``double`` evaluates
    the equivalent double integral of the squared difference, which makes
    nonnegativity manifest.  The two must agree and both must be >= 0 up to
    quadrature error.
    """
    p1f, p2f = float(p1), float(p2)
    lam1, lam2 = _dual_exponent_weights(p1f, p2f)
    Xv = np.atleast_1d(np.asarray(X, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))

    Y = q.points()
    w = q.weights()
    j2 = u2.log_jets(t, Y)
    j1 = u1.log_jets(t, np.ascontiguousarray(x[None, :] - Y))
    K = np.exp(j1.lv / p1f + j2.lv / p2f)
    g1dir = j1.lg @ Xv   # <grad log u1 (x - y), X>
    g2dir = j2.lg @ Xv

    conv = float(w @ K)
    m1 = float(w @ (K * g1dir**2))
    m2 = float(w @ (K * g2dir**2))
    m12 = float(w @ (K * g1dir * g2dir))
    grad_dir = float(w @ (K * g1dir)) / p1f  # derivative on the first factor

    single = (
        lam1 / p1f**2 * conv * m1
        + lam2 / p2f**2 * conv * m2
        + (1.0 - lam1 - lam2) / (p1f * p2f) * conv * m12
        - grad_dir**2
    )

    g1 = np.sqrt(lam1) / p1f * g1dir
    g2 = np.sqrt(lam2) / p2f * g2dir
    s = g1 + g2
    wk = w * K
    # 2N = sum_{q,r} w_q w_r K_q K_r (s_q - s_r)^2, expanded for O(Q) cost
    tot = float(wk.sum())
    s1m = float(wk @ s)
    s2m = float(wk @ s**2)
    double = tot * s2m - s1m**2

    return {
        "single": single,
        "double": double,
        "lambda1": lam1,
        "lambda2": lam2,
        "sqrt_sum": np.sqrt(lam1) + np.sqrt(lam2),
    }


def bl_residual_decomposition(node: GeomMeanNode, t: float, x) -> dict:
    """Four-term decomposition of the geometric-mean relative residual.

    For the time-weighted flow t^beta prod (u_j . L_j)^{p_j} with
    beta = (sum p_j n_j - n)/2, the relative residual against the combined
    diffusion matrix M splits exactly into

      [child residuals] + [variance of the v_j = L_j^T grad log u_j in the
      M^{-1} metric] + [rank-one defect <D_j grad log u_j, grad log u_j>]
      + [trace defect tr(D_j (D^2 log u_j + A_j/(2t)))],

    with D_j = A_j^{-1} - L_j M^{-1} L_j^T.  The last two terms are
    nonnegative under the rule's hypotheses and vanish on equality data; the
    variance term reduces on equality data to the projection-variance form
    sum p_j <L_j^T A_j L_j (w_j - wbar), (w_j - wbar)> (returned as
    ``variance_w_form``), which also dominates the sum of the second and
    third terms in general.
    """
    if not isinstance(node, GeomMeanNode):
        raise TypeError("decomposition applies to anisotropic geometric means")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    X = x[None, :]
    M = node.effective_diffusion()
    Minv = inverse(M).a
    n = node.n
    beta = (sum(p * L.rows for p, L in zip(node._pf, node.maps)) - n) / 2.0

    j = node.log_jets(t, X)
    lhs = beta / t + float(
        j.lt[0] - np.einsum("ij,ij->", Minv, j.lh[0] + np.outer(j.lg[0], j.lg[0]))
    )

    t1 = t2 = t3 = t4 = 0.0
    vs, ws, mats = [], [], []
    for p, L, A, child in zip(node._pf, node.maps, node.diffusions, node.children):
        jc = child.log_jets(t, np.ascontiguousarray(X @ L.a.T))
        Ainv = inverse(A).a
        grad_log = jc.lg[0]
        vs.append((p, L.a.T @ grad_log))
        ws.append(L.a.T @ np.linalg.inv(L.a @ L.a.T) @ (Ainv @ grad_log))
        mats.append((p, L, A, Ainv, jc))
        t1 += p * float(
            jc.lt[0] - np.einsum("ij,ij->", Ainv,
                                 jc.lh[0] + np.outer(grad_log, grad_log))
        )
    G = sum(p * v for p, v in vs)
    t2 = sum(p * float(v @ Minv @ v) for p, v in vs) - float(G @ Minv @ G)
    wbar = Minv @ G
    t2w = 0.0
    for (p, L, A, Ainv, jc), wj in zip(mats, ws):
        diff = wj - wbar
        t2w += p * float(diff @ (L.a.T @ A.a @ L.a) @ diff)
        D = Ainv - L.a @ Minv @ L.a.T
        grad_log = jc.lg[0]
        t3 += p * float(grad_log @ D @ grad_log)
        t4 += p * float(np.einsum("ij,ij->", D, jc.lh[0] + A.a / (2.0 * t)))

    return {
        "lhs": lhs,
        "terms": [t1, t2, t3, t4],
        "total": t1 + t2 + t3 + t4,
        "variance_w_form": t2w,
        "beta": beta,
    }
