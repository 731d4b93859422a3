"""Built-in outer maps applied to tuples of flows, with analytic oracles.

Each member knows its value/gradient/hessian in the original coordinates,
the same data for the log-coordinate companion ``Theta(s) = log B(exp s)``,
and the flags the certificate rules consume: monotonicity, concavity,
convexity of Theta, and the smallest admissible relaxation parameter for the
time-weighted concavity condition

    D^2 B(x) <= lambda * diag(d_j B(x) / x_j)  on the positive orthant.

Only this analytic family is supported; certificate rules need trustworthy
flags, which sampled falsifiers alone cannot provide.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .symmat import SymMatrix


def _as_number(x):
    """Keep Fractions exact, coerce everything else to float."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return float(x)


def _softmax(S):
    M = S.max(axis=-1, keepdims=True)
    E = np.exp(S - M)
    return E / E.sum(axis=-1, keepdims=True)


class BellmanSpec:
    """Common interface; concrete members fill in oracles and flags."""

    name: str
    m: int
    increasing: bool = True
    concave: bool = False
    theta_convex: bool = False
    is_linear: bool = False
    #: smallest admissible relaxation parameter, or None when no finite
    #: parameter makes the relaxed concavity condition hold
    lambda_min = None

    # -- x-space oracles (single point, x in the open positive orthant) --
    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    # -- log-space oracles; S has shape (..., m) --
    def theta(self, S):
        raise NotImplementedError

    def grad_theta(self, S):
        raise NotImplementedError

    def hess_theta(self, S):
        raise NotImplementedError

    @property
    def lambda_admissible(self) -> bool:
        return self.lambda_min is not None

    def __repr__(self):
        return f"{self.name}"


class Power(BellmanSpec):
    """B(x) = x^p on a single input."""

    m = 1

    def __init__(self, p):
        p = _as_number(p)
        if p <= 0:
            raise ValueError("power exponent must be positive")
        self.p = p
        self.name = f"pow({p})"
        self.concave = p <= 1
        self.theta_convex = True
        self.lambda_min = max(p - 1, 0 * p)
        self.is_linear = p == 1

    def value(self, x):
        return float(x[0]) ** float(self.p)

    def grad(self, x):
        p = float(self.p)
        return np.array([p * float(x[0]) ** (p - 1)])

    def hess(self, x):
        p = float(self.p)
        return np.array([[p * (p - 1) * float(x[0]) ** (p - 2)]])

    def theta(self, S):
        return float(self.p) * S[..., 0]

    def grad_theta(self, S):
        out = np.empty_like(S)
        out[...] = float(self.p)
        return out

    def hess_theta(self, S):
        return np.zeros(S.shape + (1,))


class WeightedGeomMean(BellmanSpec):
    """B(x) = prod x_j^{p_j} with nonnegative exponents."""

    def __init__(self, exponents):
        ps = [_as_number(p) for p in exponents]
        if len(ps) < 1 or any(p < 0 for p in ps):
            raise ValueError("exponents must be nonnegative")
        self.exponents = tuple(ps)
        self.m = len(ps)
        total = sum(ps)
        self.total = total
        self.name = "wgm(" + ",".join(str(p) for p in ps) + ")"
        self.concave = total <= 1
        self.theta_convex = True
        self.lambda_min = max(total - 1, 0 * total)
        self._pf = np.array([float(p) for p in ps])

    def value(self, x):
        return float(np.prod(np.asarray(x, dtype=float) ** self._pf))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return self.value(x) * self._pf / x

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        b = self.value(x)
        r = self._pf / x
        h = b * np.outer(r, r)
        h[np.diag_indices_from(h)] -= b * self._pf / x**2
        return h

    def theta(self, S):
        return S @ self._pf

    def grad_theta(self, S):
        return np.broadcast_to(self._pf, S.shape).copy()

    def hess_theta(self, S):
        return np.zeros(S.shape + (self.m,))


class HarmonicSum(BellmanSpec):
    """B(x) = (x_1^-1 + ... + x_m^-1)^-1, the harmonic-mean-type map."""

    concave = True
    theta_convex = False
    lambda_min = Fraction(0)

    def __init__(self, m=2):
        if m < 2:
            raise ValueError("harmonic sum needs at least two inputs")
        self.m = m
        self.name = f"hsum[{m}]"

    def value(self, x):
        return 1.0 / float(np.sum(1.0 / np.asarray(x, dtype=float)))

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        b = self.value(x)
        return b**2 / x**2

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        b = self.value(x)
        h = 2.0 * b**3 * np.outer(1.0 / x**2, 1.0 / x**2)
        h[np.diag_indices_from(h)] -= 2.0 * b**2 / x**3
        return h

    def theta(self, S):
        # Theta(s) = -log sum exp(-s)
        M = (-S).max(axis=-1)
        return -(M + np.log(np.exp(-S - M[..., None]).sum(axis=-1)))

    def grad_theta(self, S):
        return _softmax(-S)

    def hess_theta(self, S):
        P = _softmax(-S)
        return P[..., :, None] * P[..., None, :] - P[..., None] * np.eye(self.m)


class LqNormP(BellmanSpec):
    """B(x) = (x_1^q + x_2^q)^{p/q} for positive p, q."""

    m = 2
    theta_convex = True

    def __init__(self, p, q):
        p, q = _as_number(p), _as_number(q)
        if p <= 0 or q <= 0:
            raise ValueError("exponents must be positive")
        self.p, self.q = p, q
        self.name = f"lqnorm({p},{q})"
        self.concave = p <= 1 and q >= 1
        # relaxed concavity holds with lambda = p-1 exactly when p >= max(1, q)
        self.lambda_min = p - 1 if p >= max(1, q) else None

    def value(self, x):
        p, q = float(self.p), float(self.q)
        x = np.asarray(x, dtype=float)
        return float(np.sum(x**q) ** (p / q))

    def grad(self, x):
        p, q = float(self.p), float(self.q)
        x = np.asarray(x, dtype=float)
        s = np.sum(x**q)
        return p * s ** (p / q - 1) * x ** (q - 1)

    def hess(self, x):
        p, q = float(self.p), float(self.q)
        x = np.asarray(x, dtype=float)
        s = np.sum(x**q)
        v = x ** (q - 1)
        h = p * (p - q) * s ** (p / q - 2) * np.outer(v, v)
        h[np.diag_indices_from(h)] += p * (q - 1) * s ** (p / q - 1) * x ** (q - 2)
        return h

    def theta(self, S):
        p, q = float(self.p), float(self.q)
        qs = q * S
        M = qs.max(axis=-1)
        return (p / q) * (M + np.log(np.exp(qs - M[..., None]).sum(axis=-1)))

    def grad_theta(self, S):
        p, q = float(self.p), float(self.q)
        return p * _softmax(q * S)

    def hess_theta(self, S):
        p, q = float(self.p), float(self.q)
        P = _softmax(q * S)
        return p * q * (P[..., None] * np.eye(self.m) - P[..., :, None] * P[..., None, :])


class Linear(BellmanSpec):
    """B(x) = sum w_j x_j with positive weights."""

    concave = True
    theta_convex = True
    is_linear = True
    lambda_min = Fraction(0)

    def __init__(self, weights):
        w = [float(v) for v in weights]
        if len(w) < 1 or any(v <= 0 for v in w):
            raise ValueError("weights must be positive")
        self.weights = np.array(w)
        self.m = len(w)
        self.name = "linear(" + ",".join(repr(v) for v in w) + ")"

    def value(self, x):
        return float(self.weights @ np.asarray(x, dtype=float))

    def grad(self, x):
        return self.weights.copy()

    def hess(self, x):
        return np.zeros((self.m, self.m))

    def theta(self, S):
        T = S + np.log(self.weights)
        M = T.max(axis=-1)
        return M + np.log(np.exp(T - M[..., None]).sum(axis=-1))

    def grad_theta(self, S):
        return _softmax(S + np.log(self.weights))

    def hess_theta(self, S):
        P = self.grad_theta(S)
        return P[..., None] * np.eye(self.m) - P[..., :, None] * P[..., None, :]


def theta_hessian(spec: BellmanSpec, s) -> SymMatrix:
    """Hessian of Theta at a log-coordinate point, as a SymMatrix."""
    s = np.asarray(s, dtype=float)
    return SymMatrix(spec.hess_theta(s[None, :])[0])


def hypercontractive_wgm(p, q) -> WeightedGeomMean:
    """The two-input geometric-mean map with exponents (1/q', 1/p)."""
    p, q = _as_number(p), _as_number(q)
    if not (1 < p < q):
        raise ValueError("need 1 < p < q")
    return WeightedGeomMean([1 - 1 / q, 1 / p])
