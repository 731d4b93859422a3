"""Expression trees over heat atoms with exact pointwise jet propagation.

Every node evaluates *log-space* jets: the log of the value, the time
derivative of the log, and the spatial gradient and hessian of the log.
Working in log coordinates keeps gaussian tails finite (no underflow inside
the engine), makes the outer-map chain rule a statement about
``Theta(s) = log B(exp s)``, and delivers machine-precision cancellation in
the residual checks that certificates rely on.

Jets are exact (closed form) for atom-only subtrees and quadrature-accurate
for convolution subtrees, whose rule is fixed per node at construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import _kernels
from .bellman import BellmanSpec, HarmonicSum, LqNormP, Power, WeightedGeomMean
from .bellman import theta_hessian  # re-exported  # noqa: F401
from .errors import DimensionMismatch, EvalError, EvalRangeError
from .quad import group_o2_elements
from .symmat import COND_LIMIT, LinearMap, SymMatrix

LOG_FLOOR = -690.0  # log(1e-300), the smallest jet value we hand out

__all__ = [
    "GaussianMixtureAtom", "Jet2", "LogJetBatch", "Node",
    "heat_atom", "heat_kernel_jet", "eval_jet", "log_hessian", "theta_hessian",
    "positive_sum", "tensor_product", "compose_linear", "bellman_image",
    "power", "geom_mean", "harmonic_sum", "lq_norm", "aniso_geom_mean",
    "convolve_power", "time_power", "group_average",
]


class LogJetBatch(NamedTuple):
    """Batched log-space jets: shapes (N,), (N,), (N,n), (N,n,n)."""

    lv: np.ndarray
    lt: np.ndarray
    lg: np.ndarray
    lh: np.ndarray


@dataclass(frozen=True)
class Jet2:
    """Pointwise value, time derivative, gradient and hessian at (t, x)."""

    value: float
    dt: float
    grad: np.ndarray
    hess: SymMatrix

    def __post_init__(self):
        if not self.value > 0.0:
            raise EvalRangeError("jet value must be positive")


def log_hessian(j: Jet2) -> SymMatrix:
    """Hessian of log u from a value-space jet: (u D^2u - grad grad^T)/u^2."""
    g = j.grad
    return SymMatrix((j.value * j.hess.a - np.outer(g, g)) / j.value**2)


def _num(x):
    if isinstance(x, (Fraction, int)):
        return Fraction(x)
    return float(x)


def _as_points(x, n):
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=float)))
    if X.shape[1] != n:
        raise DimensionMismatch(f"points have dim {X.shape[1]}, node has dim {n}")
    return X


# --------------------------------------------------------------------------
# atoms


class GaussianMixtureAtom:
    """Positive superposition of translated, time-delayed heat kernels.

    Each term is ``w_i * H(t + t0_i, x - a_i)`` for the unit-mass kernel

        H(t, x) = det(A / (4 pi t))^(1/2) * exp(-<A x, x> / (4 t)),

    which solves ``d_t u = div(A^{-1} grad u)`` with unit mass; the mixture
    is therefore an exact solution, and its log-hessian is bounded below by
    ``-A / (2t)`` at every point.
    """

    def __init__(self, A: SymMatrix, weights, centers, t0s):
        if not isinstance(A, SymMatrix):
            A = SymMatrix(A)
        n = A.dim
        weights = np.asarray(weights, dtype=float).reshape(-1)
        centers = np.ascontiguousarray(
            np.asarray(centers, dtype=float).reshape(len(weights), n)
        )
        t0s = np.asarray(t0s, dtype=float).reshape(-1)
        if len(weights) < 1:
            raise ValueError("mixture needs at least one term")
        if len(t0s) != len(weights):
            raise DimensionMismatch("weights and time offsets disagree")
        if np.any(weights <= 0):
            raise ValueError("mixture weights must be positive")
        if np.any(t0s < 0):
            raise ValueError("time offsets must be nonnegative")
        w = A.eigenvalues()
        if w[0] <= 0:
            raise ValueError("diffusion matrix must be positive definite")
        self.A = A
        self.weights = weights
        self.centers = centers
        self.t0s = t0s
        self.n = n
        self._logdet = float(np.sum(np.log(w)))
        for arr in (self.weights, self.centers, self.t0s):
            arr.setflags(write=False)

    @property
    def nterms(self) -> int:
        return len(self.weights)

    def _consts(self, t: float):
        taus = t + self.t0s
        if np.any(taus <= 0):
            raise EvalRangeError(f"nonpositive effective time at t={t}")
        consts = (
            np.log(self.weights)
            + 0.5 * self._logdet
            - 0.5 * self.n * np.log(4.0 * np.pi * taus)
        )
        inv4tau = 1.0 / (4.0 * taus)
        return np.ascontiguousarray(consts), np.ascontiguousarray(inv4tau)

    def translated(self, v) -> "GaussianMixtureAtom":
        v = np.asarray(v, dtype=float).reshape(self.n)
        return GaussianMixtureAtom(self.A, self.weights, self.centers + v, self.t0s)


# --------------------------------------------------------------------------
# nodes


class Node:
    """Immutable expression-tree node; every node knows its spatial dim."""

    kind = "node"
    children: tuple = ()

    @property
    def n(self) -> int:
        raise NotImplementedError

    def log_values(self, t: float, X) -> np.ndarray:
        raise NotImplementedError

    def log_jets(self, t: float, X) -> LogJetBatch:
        raise NotImplementedError

    def support_box(self, t: float):
        raise NotImplementedError

    def shifted(self, v) -> "Node":
        raise NotImplementedError

    def values(self, t: float, X) -> np.ndarray:
        return np.exp(self.log_values(t, X))

    def _child(self, i: int, method: str, *args):
        try:
            return getattr(self.children[i], method)(*args)
        except EvalError as e:
            raise EvalError(e.args[0], (f"{self.kind}[{i}]",) + e.path) from None
        except EvalRangeError as e:
            raise EvalError(str(e), (f"{self.kind}[{i}]",)) from None

    def __repr__(self):
        return f"<{self.kind} node, n={self.n}>"


class AtomNode(Node):
    kind = "heat"

    def __init__(self, atom: GaussianMixtureAtom):
        self.atom = atom

    @property
    def n(self):
        return self.atom.n

    def log_values(self, t, X):
        X = _as_points(X, self.n)
        consts, inv4tau = self.atom._consts(t)
        return _kernels.mixture_log_values(
            self.atom.A.a, consts, inv4tau, self.atom.centers, X
        )

    def log_jets(self, t, X):
        X = _as_points(X, self.n)
        consts, inv4tau = self.atom._consts(t)
        return LogJetBatch(
            *_kernels.mixture_log_jets(
                self.atom.A.a, consts, inv4tau, self.atom.centers, X
            )
        )

    def support_box(self, t):
        lam = 1.0 / self.atom.A.min_eig()
        h = 8.0 * np.sqrt(2.0 * (t + float(self.atom.t0s.max())) * lam)
        lo = self.atom.centers.min(axis=0) - h
        hi = self.atom.centers.max(axis=0) + h
        return lo, hi

    def shifted(self, v):
        return AtomNode(self.atom.translated(v))


class SumNode(Node):
    kind = "sum"

    def __init__(self, coeffs, children):
        coeffs = [float(c) for c in coeffs]
        if len(coeffs) != len(children) or not children:
            raise ValueError("need one positive coefficient per child")
        if any(c <= 0 for c in coeffs):
            raise ValueError("sum coefficients must be positive")
        dims = {c.n for c in children}
        if len(dims) != 1:
            raise DimensionMismatch(f"sum children have mixed dims {sorted(dims)}")
        self.coeffs = tuple(coeffs)
        self.children = tuple(children)
        self._logc = np.log(np.array(coeffs))

    @property
    def n(self):
        return self.children[0].n

    def log_values(self, t, X):
        X = _as_points(X, self.n)
        L = np.stack(
            [self._logc[j] + self._child(j, "log_values", t, X)
             for j in range(len(self.children))],
            axis=1,
        )
        m = L.max(axis=1)
        return m + np.log(np.exp(L - m[:, None]).sum(axis=1))

    def log_jets(self, t, X):
        X = _as_points(X, self.n)
        jets = [self._child(j, "log_jets", t, X) for j in range(len(self.children))]
        L = np.stack([self._logc[j] + jets[j].lv for j in range(len(jets))], axis=1)
        m = L.max(axis=1)
        E = np.exp(L - m[:, None])
        Z = E.sum(axis=1)
        P = E / Z[:, None]
        lv = m + np.log(Z)
        lt = sum(P[:, j] * jets[j].lt for j in range(len(jets)))
        lg = sum(P[:, j, None] * jets[j].lg for j in range(len(jets)))
        lh = sum(
            P[:, j, None, None]
            * (jets[j].lh + jets[j].lg[:, :, None] * jets[j].lg[:, None, :])
            for j in range(len(jets))
        ) - lg[:, :, None] * lg[:, None, :]
        return LogJetBatch(lv, lt, lg, lh)

    def support_box(self, t):
        boxes = [c.support_box(t) for c in self.children]
        lo = np.min([b[0] for b in boxes], axis=0)
        hi = np.max([b[1] for b in boxes], axis=0)
        return lo, hi

    def shifted(self, v):
        return SumNode(self.coeffs, [c.shifted(v) for c in self.children])


class TensorNode(Node):
    kind = "tensor"

    def __init__(self, left: Node, right: Node):
        self.children = (left, right)

    @property
    def n(self):
        return self.children[0].n + self.children[1].n

    def _split(self, X):
        n1 = self.children[0].n
        return np.ascontiguousarray(X[:, :n1]), np.ascontiguousarray(X[:, n1:])

    def log_values(self, t, X):
        X = _as_points(X, self.n)
        X1, X2 = self._split(X)
        return self._child(0, "log_values", t, X1) + self._child(1, "log_values", t, X2)

    def log_jets(self, t, X):
        X = _as_points(X, self.n)
        X1, X2 = self._split(X)
        j1 = self._child(0, "log_jets", t, X1)
        j2 = self._child(1, "log_jets", t, X2)
        N, n1 = X.shape[0], self.children[0].n
        lg = np.concatenate([j1.lg, j2.lg], axis=1)
        lh = np.zeros((N, self.n, self.n))
        lh[:, :n1, :n1] = j1.lh
        lh[:, n1:, n1:] = j2.lh
        return LogJetBatch(j1.lv + j2.lv, j1.lt + j2.lt, lg, lh)

    def support_box(self, t):
        b1 = self.children[0].support_box(t)
        b2 = self.children[1].support_box(t)
        return np.concatenate([b1[0], b2[0]]), np.concatenate([b1[1], b2[1]])

    def shifted(self, v):
        v = np.asarray(v, dtype=float).reshape(self.n)
        n1 = self.children[0].n
        return TensorNode(self.children[0].shifted(v[:n1]),
                          self.children[1].shifted(v[n1:]))


class ComposeNode(Node):
    """Spatial composition u(L x) with an invertible square map."""

    kind = "compose"

    def __init__(self, L: LinearMap, child: Node):
        if not isinstance(L, LinearMap):
            L = LinearMap(L)
        if L.rows != L.cols:
            raise DimensionMismatch("composition map must be square")
        if L.rows != child.n:
            raise DimensionMismatch(
                f"map acts on R^{L.rows} but child has dim {child.n}"
            )
        s = np.linalg.svd(L.a, compute_uv=False)
        if s[-1] <= 0 or s[0] / s[-1] > COND_LIMIT:
            raise ValueError("composition map must be invertible")
        self.L = L
        self._Linv = np.linalg.inv(L.a)
        self.children = (child,)

    @property
    def n(self):
        return self.L.cols

    def log_values(self, t, X):
        X = _as_points(X, self.n)
        return self._child(0, "log_values", t, np.ascontiguousarray(X @ self.L.a.T))

    def log_jets(self, t, X):
        X = _as_points(X, self.n)
        j = self._child(0, "log_jets", t, np.ascontiguousarray(X @ self.L.a.T))
        lg = j.lg @ self.L.a
        lh = np.einsum("ki,nkl,lj->nij", self.L.a, j.lh, self.L.a)
        return LogJetBatch(j.lv, j.lt, lg, lh)

    def support_box(self, t):
        lo, hi = self.children[0].support_box(t)
        corners = np.stack(
            np.meshgrid(*[(l, h) for l, h in zip(lo, hi)], indexing="ij"), axis=-1
        ).reshape(-1, self.n)
        pre = corners @ self._Linv.T
        return pre.min(axis=0), pre.max(axis=0)

    def shifted(self, v):
        v = np.asarray(v, dtype=float).reshape(self.n)
        return ComposeNode(self.L, self.children[0].shifted(self.L.a @ v))


class BellmanNode(Node):
    """Outer map applied to child flows, optionally through isometries.

    With maps present the node realises ``B(u_1(L_1 x), ..., u_m(L_m x))``;
    the maps must have orthonormal rows and are only certifiable through the
    directional-concavity rule.  The jets use the log-coordinate companion
    Theta of B, which is both numerically stable and exactly the chain rule
    the closure identities are written in.
    """

    kind = "bellman"

    def __init__(self, spec: BellmanSpec, children, maps: Optional[Sequence] = None):
        if len(children) != spec.m:
            raise DimensionMismatch(
                f"{spec.name} takes {spec.m} inputs, got {len(children)}"
            )
        if maps is not None:
            maps = tuple(m if isinstance(m, LinearMap) else LinearMap(m) for m in maps)
            if len(maps) != len(children):
                raise DimensionMismatch("need one map per child")
            dims = {m.cols for m in maps}
            if len(dims) != 1:
                raise DimensionMismatch("maps must share the source dimension")
            for m, c in zip(maps, children):
                if m.rows != c.n:
                    raise DimensionMismatch("map target must match child dim")
        else:
            dims = {c.n for c in children}
            if len(dims) != 1:
                raise DimensionMismatch("children of an outer map must share a dim")
        self.spec = spec
        self.children = tuple(children)
        self.maps = maps
        self._n = dims.pop()

    @property
    def n(self):
        return self._n

    def _child_points(self, X):
        if self.maps is None:
            return [X] * len(self.children)
        return [np.ascontiguousarray(X @ m.a.T) for m in self.maps]

    def log_values(self, t, X):
        X = _as_points(X, self.n)
        pts = self._child_points(X)
        S = np.stack(
            [self._child(j, "log_values", t, pts[j]) for j in range(len(self.children))],
            axis=-1,
        )
        return self.spec.theta(S)

    def log_jets(self, t, X):
        X = _as_points(X, self.n)
        pts = self._child_points(X)
        jets = [self._child(j, "log_jets", t, pts[j]) for j in range(len(self.children))]
        S = np.stack([j.lv for j in jets], axis=-1)
        gTh = self.spec.grad_theta(S)     # (N, m)
        hTh = self.spec.hess_theta(S)     # (N, m, m)
        N, m = S.shape

        if self.maps is None:
            grads = [j.lg for j in jets]
            hesss = [j.lh for j in jets]
        else:
            grads = [jets[j].lg @ self.maps[j].a for j in range(m)]
            hesss = [
                np.einsum("ki,nkl,lj->nij", self.maps[j].a, jets[j].lh, self.maps[j].a)
                for j in range(m)
            ]

        lv = self.spec.theta(S)
        lt = sum(gTh[:, j] * jets[j].lt for j in range(m))
        lg = sum(gTh[:, j, None] * grads[j] for j in range(m))
        lh = sum(gTh[:, j, None, None] * hesss[j] for j in range(m))
        for j in range(m):
            for k in range(m):
                lh = lh + hTh[:, j, k, None, None] * (
                    grads[j][:, :, None] * grads[k][:, None, :]
                )
        return LogJetBatch(lv, lt, lg, lh)

    def support_box(self, t):
        if self.maps is None:
            boxes = [c.support_box(t) for c in self.children]
            lo = np.min([b[0] for b in boxes], axis=0)
            hi = np.max([b[1] for b in boxes], axis=0)
            return lo, hi
        r = 0.0
        for m, c in zip(self.maps, self.children):
            lo, hi = c.support_box(t)
            bound = float(np.max(np.abs(np.concatenate([lo, hi]))))
            pinv = m.a.T @ np.linalg.inv(m.a @ m.a.T)
            r = max(r, bound * float(np.linalg.norm(pinv, 2)))
        return np.full(self.n, -r), np.full(self.n, r)

    def shifted(self, v):
        v = np.asarray(v, dtype=float).reshape(self.n)
        if self.maps is None:
            kids = [c.shifted(v) for c in self.children]
        else:
            kids = [c.shifted(m.a @ v) for m, c in zip(self.maps, self.children)]
        return BellmanNode(self.spec, kids, self.maps)


class GeomMeanNode(Node):
    """Anisotropic geometric mean: prod_j u_j(L_j x)^{p_j}.

    Each term declares the map L_j (surjective onto the child's space) and
    the diffusion matrix A_j the child is supposed to flow under; the
    declarations are cross-checked against child certificates during
    certification, not here.
    """

    kind = "gmean"

    def __init__(self, terms):
        if not terms:
            raise ValueError("geometric mean needs at least one term")
        ps, Ls, As, kids = [], [], [], []
        for p, L, A, child in terms:
            p = _num(p)
            if p < 0:
                raise ValueError("exponents must be nonnegative")
            L = L if isinstance(L, LinearMap) else LinearMap(L)
            A = A if isinstance(A, SymMatrix) else SymMatrix(A)
            if L.rows != child.n:
                raise DimensionMismatch("map target must match child dim")
            if A.dim != child.n:
                raise DimensionMismatch("declared diffusion must match child dim")
            ps.append(p)
            Ls.append(L)
            As.append(A)
            kids.append(child)
        dims = {L.cols for L in Ls}
        if len(dims) != 1:
            raise DimensionMismatch("maps must share the source dimension")
        self.exponents = tuple(ps)
        self.maps = tuple(Ls)
        self.diffusions = tuple(As)
        self.children = tuple(kids)
        self._n = dims.pop()
        self._pf = np.array([float(p) for p in ps])

    @property
    def n(self):
        return self._n

    def log_values(self, t, X):
        X = _as_points(X, self.n)
        out = np.zeros(X.shape[0])
        for j, (p, L) in enumerate(zip(self._pf, self.maps)):
            out += p * self._child(j, "log_values", t, np.ascontiguousarray(X @ L.a.T))
        return out

    def log_jets(self, t, X):
        X = _as_points(X, self.n)
        N = X.shape[0]
        lv = np.zeros(N)
        lt = np.zeros(N)
        lg = np.zeros((N, self.n))
        lh = np.zeros((N, self.n, self.n))
        for j, (p, L) in enumerate(zip(self._pf, self.maps)):
            jj = self._child(j, "log_jets", t, np.ascontiguousarray(X @ L.a.T))
            lv += p * jj.lv
            lt += p * jj.lt
            lg += p * (jj.lg @ L.a)
            lh += p * np.einsum("ki,nkl,lj->nij", L.a, jj.lh, L.a)
        return LogJetBatch(lv, lt, lg, lh)

    def effective_diffusion(self) -> SymMatrix:
        """M = sum_j p_j L_j^* A_j L_j, the diffusion of the combined flow."""
        out = np.zeros((self.n, self.n))
        for p, L, A in zip(self._pf, self.maps, self.diffusions):
            out += p * (L.a.T @ A.a @ L.a)
        return SymMatrix(out)

    def support_box(self, t):
        M = self.effective_diffusion()
        w = M.eigenvalues()
        if w[0] <= 0:
            h = 8.0 * np.sqrt(2.0 * t / max(w[-1], 1e-12))
        else:
            h = 8.0 * np.sqrt(2.0 * t / w[0])
        r = 0.0
        for L, c in zip(self.maps, self.children):
            lo, hi = c.support_box(t)
            bound = float(np.max(np.abs(np.concatenate([lo, hi]))))
            pinv = L.a.T @ np.linalg.inv(L.a @ L.a.T)
            r = max(r, bound * float(np.linalg.norm(pinv, 2)))
        return np.full(self.n, -(r + h)), np.full(self.n, r + h)

    def shifted(self, v):
        v = np.asarray(v, dtype=float).reshape(self.n)
        terms = [
            (p, L, A, c.shifted(L.a @ v))
            for p, L, A, c in zip(self.exponents, self.maps, self.diffusions, self.children)
        ]
        return GeomMeanNode(terms)


class ConvolutionNode(Node):
    """Spatial convolution closure: u~ with u~^{1/p} = u1^{1/p1} * u2^{1/p2}.

    The y-integral is a trapezoid rule over the right child's support with a
    point count fixed at construction; x-derivatives fall on the left factor
    of the integrand and the t-derivative splits by the product rule.
    """

    kind = "conv"

    def __init__(self, p, p1, p2, left: Node, right: Node,
                 quad_count: int = 201, sigmas=None):
        if left.n != right.n:
            raise DimensionMismatch("convolution children must share a dim")
        p, p1, p2 = _num(p), _num(p1), _num(p2)
        if min(p, p1, p2) <= 0:
            raise ValueError("convolution exponents must be positive")
        if quad_count < 3 or quad_count % 2 == 0:
            raise ValueError("quadrature count must be odd and >= 3")
        self.p, self.p1, self.p2 = p, p1, p2
        self.children = (left, right)
        self.quad_count = int(quad_count)
        self.sigmas = None if sigmas is None else (float(sigmas[0]), float(sigmas[1]))

    @property
    def n(self):
        return self.children[0].n

    @staticmethod
    def _widened_box(child, t, pexp):
        # raising to 1/p widens a gaussian profile by sqrt(p)
        lo, hi = child.support_box(t)
        mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0
        half = half * np.sqrt(max(1.0, pexp))
        return mid - half, mid + half

    def _ygrid(self, t):
        # the grid must cover supp(u2) and, for every x in the node's own
        # support, the set x - supp(u1); otherwise tail truncation pollutes
        # the relative accuracy of jets far from the centre
        lo1, hi1 = self._widened_box(self.children[0], t, float(self.p1))
        lo2, hi2 = self._widened_box(self.children[1], t, float(self.p2))
        lo = np.minimum(lo2, (lo1 + lo2) - hi1)
        hi = np.maximum(hi2, (hi1 + hi2) - lo1)
        grids = [np.linspace(l, h, self.quad_count) for l, h in zip(lo, hi)]
        mesh = np.meshgrid(*grids, indexing="ij")
        Y = np.stack([g.reshape(-1) for g in mesh], axis=-1)
        w = np.array([1.0])
        for g in grids:
            wg = np.full(len(g), g[1] - g[0])
            wg[0] = wg[-1] = 0.5 * (g[1] - g[0])
            w = np.multiply.outer(w, wg).reshape(-1)
        return np.ascontiguousarray(Y), np.log(w)

    def log_values(self, t, X):
        X = _as_points(X, self.n)
        Y, logw = self._ygrid(t)
        l2 = self._child(1, "log_values", t, Y)
        base = l2 / float(self.p2) + logw
        out = np.empty(X.shape[0])
        chunk = max(1, 2_000_000 // len(Y))
        for s in range(0, X.shape[0], chunk):
            XB = X[s:s + chunk]
            D = (XB[:, None, :] - Y[None, :, :]).reshape(-1, self.n)
            l1 = self._child(0, "log_values", t, np.ascontiguousarray(D))
            T = l1.reshape(len(XB), len(Y)) / float(self.p1) + base[None, :]
            m = T.max(axis=1)
            out[s:s + chunk] = m + np.log(np.exp(T - m[:, None]).sum(axis=1))
        return float(self.p) * out

    def log_jets(self, t, X):
        X = _as_points(X, self.n)
        p, p1, p2 = float(self.p), float(self.p1), float(self.p2)
        Y, logw = self._ygrid(t)
        j2 = self._child(1, "log_jets", t, Y)
        base = j2.lv / p2 + logw
        N, n = X.shape
        lv = np.empty(N)
        lt = np.empty(N)
        lg = np.empty((N, n))
        lh = np.empty((N, n, n))
        chunk = max(1, 500_000 // len(Y))
        for s in range(0, N, chunk):
            XB = X[s:s + chunk]
            nb = len(XB)
            D = (XB[:, None, :] - Y[None, :, :]).reshape(-1, n)
            j1 = self._child(0, "log_jets", t, np.ascontiguousarray(D))
            T = j1.lv.reshape(nb, -1) / p1 + base[None, :]
            m = T.max(axis=1)
            E = np.exp(T - m[:, None])
            Z = E.sum(axis=1)
            P = E / Z[:, None]
            logg = m + np.log(Z)

            G1 = j1.lg.reshape(nb, -1, n)
            H1 = j1.lh.reshape(nb, -1, n, n)
            gl = np.einsum("nq,nqi->ni", P, G1) / p1
            hl = (
                np.einsum("nq,nqij->nij", P, H1) / p1
                + np.einsum("nq,nqi,nqj->nij", P, G1, G1) / p1**2
                - gl[:, :, None] * gl[:, None, :]
            )
            tl = np.einsum("nq,nq->n", P,
                           j1.lt.reshape(nb, -1) / p1 + j2.lt[None, :] / p2)
            lv[s:s + chunk] = p * logg
            lt[s:s + chunk] = p * tl
            lg[s:s + chunk] = p * gl
            lh[s:s + chunk] = p * hl
        return LogJetBatch(lv, lt, lg, lh)

    def support_box(self, t):
        lo1, hi1 = self.children[0].support_box(t)
        lo2, hi2 = self.children[1].support_box(t)
        return lo1 + lo2, hi1 + hi2

    def shifted(self, v):
        return ConvolutionNode(
            self.p, self.p1, self.p2,
            self.children[0].shifted(v), self.children[1],
            self.quad_count, self.sigmas,
        )


class TimePowerNode(Node):
    """Prefactor t^beta applied inside the tree: u~(t, x) = t^beta u(t, x)."""

    kind = "tpow"

    def __init__(self, beta, child: Node):
        self.beta = _num(beta)
        self.children = (child,)

    @property
    def n(self):
        return self.children[0].n

    def log_values(self, t, X):
        if t <= 0:
            raise EvalRangeError("time power requires t > 0")
        return float(self.beta) * np.log(t) + self._child(0, "log_values", t, X)

    def log_jets(self, t, X):
        if t <= 0:
            raise EvalRangeError("time power requires t > 0")
        j = self._child(0, "log_jets", t, X)
        b = float(self.beta)
        return LogJetBatch(j.lv + b * np.log(t), j.lt + b / t, j.lg, j.lh)

    def support_box(self, t):
        return self.children[0].support_box(t)

    def shifted(self, v):
        return TimePowerNode(self.beta, self.children[0].shifted(v))


class GroupAverageNode(Node):
    """Haar average of sqrt(u(rho x) u(x)) over the 4D isometry group fixing
    (1,0,1,0) and (0,1,0,1), sampled with k rotations (2k elements).

    Structurally this is a positive sum of geometric means of orthogonal
    compositions, and it is evaluated and certified through exactly that
    desugared tree.
    """

    kind = "gavg"

    def __init__(self, k: int, child: Node):
        if child.n != 4:
            raise DimensionMismatch("group average is defined on dim-4 nodes")
        self.k = int(k)
        self.children = (child,)
        sampler = group_o2_elements(self.k)
        half = WeightedGeomMean([Fraction(1, 2), Fraction(1, 2)])
        parts = [
            BellmanNode(half, [ComposeNode(LinearMap(rho), child), child])
            for rho in sampler.elements
        ]
        self.sampler = sampler
        self.inner = SumNode([1.0 / sampler.size] * sampler.size, parts)

    @property
    def n(self):
        return 4

    def log_values(self, t, X):
        return self.inner.log_values(t, X)

    def log_jets(self, t, X):
        return self.inner.log_jets(t, X)

    def support_box(self, t):
        return self.inner.support_box(t)

    def shifted(self, v):
        raise ValueError("group-average nodes cannot be shifted")


# --------------------------------------------------------------------------
# constructors and pointwise operations


def heat_atom(A, terms) -> AtomNode:
    """Mixture atom from (weight, center, t0) triples; centers may be scalars."""
    A = A if isinstance(A, SymMatrix) else SymMatrix(A)
    ws, cs, t0s = [], [], []
    for w, c, t0 in terms:
        ws.append(float(w))
        cs.append(np.atleast_1d(np.asarray(c, dtype=float)))
        t0s.append(float(t0))
    return AtomNode(GaussianMixtureAtom(A, ws, np.stack(cs), t0s))


def heat_kernel_jet(A, t, x, center=None, t0=0.0) -> Jet2:
    """Closed-form jet of a single translated, delayed kernel."""
    A = A if isinstance(A, SymMatrix) else SymMatrix(A)
    if center is None:
        center = np.zeros(A.dim)
    node = heat_atom(A, [(1.0, center, t0)])
    return eval_jet(node, t, x)


def eval_jet(node: Node, t: float, x) -> Jet2:
    """Value-space jet of a node at a single point (t, x).

    Points where the value underflows 1e-300 are rejected with a range error
    rather than returning subnormal jets; use log_jets for tail work.
    """
    if t <= 0:
        raise EvalRangeError("evaluation requires t > 0")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    j = node.log_jets(t, x[None, :])
    lv = float(j.lv[0])
    if lv < LOG_FLOOR:
        raise EvalRangeError(
            f"value underflow (log value {lv:.1f} < {LOG_FLOOR}) at t={t}"
        )
    v = float(np.exp(lv))
    grad = v * j.lg[0]
    hess = SymMatrix(v * (j.lh[0] + np.outer(j.lg[0], j.lg[0])))
    return Jet2(value=v, dt=v * float(j.lt[0]), grad=grad, hess=hess)


def positive_sum(pairs) -> SumNode:
    coeffs, kids = zip(*pairs)
    return SumNode(coeffs, kids)


def tensor_product(left: Node, right: Node) -> TensorNode:
    return TensorNode(left, right)


def compose_linear(L, child: Node) -> ComposeNode:
    return ComposeNode(L, child)


def bellman_image(spec: BellmanSpec, children, maps=None) -> BellmanNode:
    return BellmanNode(spec, children, maps)


def power(p, child: Node) -> BellmanNode:
    return BellmanNode(Power(p), [child])


def geom_mean(pairs) -> BellmanNode:
    """Weighted geometric mean of same-equation flows."""
    ps, kids = zip(*pairs)
    return BellmanNode(WeightedGeomMean(list(ps)), list(kids))


def harmonic_sum(a: Node, b: Node) -> BellmanNode:
    return BellmanNode(HarmonicSum(2), [a, b])


def lq_norm(p, q, a: Node, b: Node) -> BellmanNode:
    return BellmanNode(LqNormP(p, q), [a, b])


def aniso_geom_mean(terms) -> GeomMeanNode:
    return GeomMeanNode(terms)


def convolve_power(p, p1, p2, left: Node, right: Node,
                   quad_count: int = 201, sigmas=None) -> ConvolutionNode:
    return ConvolutionNode(p, p1, p2, left, right, quad_count, sigmas)


def time_power(beta, child: Node) -> TimePowerNode:
    return TimePowerNode(beta, child)


def group_average(k: int, child: Node) -> GroupAverageNode:
    return GroupAverageNode(k, child)
