"""Ornstein-Uhlenbeck flows, gaussian measures, and the change of variables
to heat flow.

Fields are represented by their base function plus a flow time and evaluated
on demand through the averaging formula

    e^{s L_sigma} F(x) = integral F(e^{-s} x + sqrt(1 - e^{-2s}) y) dgamma_sigma(y),

with gamma_sigma the invariant gaussian measure of L_sigma = sigma Delta - <x, grad>.
The quadrature weights are normalised against the sampled measure mass, so
constants flow to constants exactly.

The time change onto heat flow sends OU time t to heat time tau = e^{2t}/2;
heat-side atoms are expressed in the shifted variable tau' = tau - 1/2 so
that their per-term time offsets stay nonnegative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bellman import BellmanSpec
from .errors import RuleError
from .nodes import AtomNode, GaussianMixtureAtom
from .quad import BoxQuadrature
from .symmat import SymMatrix


def gauss_density(sigma: float, X: np.ndarray) -> np.ndarray:
    """Density of gamma_sigma, the N(0, sigma I) measure."""
    X = np.atleast_2d(X)
    n = X.shape[1]
    norm = (2.0 * np.pi * sigma) ** (-n / 2.0)
    return norm * np.exp(-np.einsum("ni,ni->n", X, X) / (2.0 * sigma))


@dataclass
class OUField:
    """Base function for an OU flow: positive, vectorised over points.

    ``log_convex`` is the certificate-relevant flag (D^2 log F >= 0); it is
    preserved by the flow, since the averaging formula is a positive
    superposition of affine precompositions of F.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    n: int
    sigma: float = 1.0
    log_convex: bool = False
    name: str = "field"

    def values(self, X) -> np.ndarray:
        return self.fn(np.atleast_2d(np.asarray(X, dtype=float)))


@dataclass(frozen=True)
class OUGaussMixture:
    """F(x) = c0 + sum_i c_i exp(-|x - b_i|^2 / (2 s_i)), all c_i > 0."""

    terms: tuple  # ((c, b-vector, s), ...)
    constant: float = 0.0
    n: int = 1

    def __post_init__(self):
        for c, b, s in self.terms:
            if c <= 0 or s <= 0:
                raise ValueError("mixture terms need positive weight and variance")
        if self.constant < 0:
            raise ValueError("constant part must be nonnegative")
        if self.constant == 0 and not self.terms:
            raise ValueError("mixture must be positive somewhere")

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.full(X.shape[0], float(self.constant))
        for c, b, s in self.terms:
            d = X - np.asarray(b, dtype=float)[None, :]
            out += c * np.exp(-np.einsum("ni,ni->n", d, d) / (2.0 * s))
        return out

    def as_field(self, sigma: float = 1.0, name: str = "F") -> OUField:
        return OUField(fn=self, n=self.n, sigma=sigma, log_convex=False, name=name)


@dataclass(frozen=True)
class OUExpMixture:
    """F(x) = sum_i c_i exp(<b_i, x>): log-convex (log-sum-exp of affine)."""

    terms: tuple  # ((c, b-vector), ...)
    n: int = 1

    def __post_init__(self):
        for c, b in self.terms:
            if c <= 0:
                raise ValueError("weights must be positive")

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.zeros(X.shape[0])
        for c, b in self.terms:
            out += c * np.exp(X @ np.asarray(b, dtype=float))
        return out

    def as_field(self, sigma: float = 1.0, name: str = "F") -> OUField:
        return OUField(fn=self, n=self.n, sigma=sigma, log_convex=True, name=name)


def ou_flow(field: OUField, s: float, X, q: BoxQuadrature) -> np.ndarray:
    """Values of e^{s L_sigma} F at the rows of X; exact at s = 0."""
    if s < 0:
        raise ValueError("flow time must be nonnegative")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if s == 0.0:
        return field.values(X)
    Y = q.points()
    w = q.weights() * gauss_density(field.sigma, Y)
    w = w / w.sum()  # normalised: constants flow to constants exactly
    decay = np.exp(-s)
    spread = np.sqrt(1.0 - np.exp(-2.0 * s))
    out = np.empty(X.shape[0])
    chunk = max(1, 4_000_000 // len(Y))
    for i in range(0, X.shape[0], chunk):
        XB = X[i:i + chunk]
        pts = decay * XB[:, None, :] + spread * Y[None, :, :]
        vals = field.values(pts.reshape(-1, field.n)).reshape(len(XB), -1)
        out[i:i + chunk] = vals @ w
    return out


def flowed(field: OUField, s: float, q: BoxQuadrature, name: Optional[str] = None) -> OUField:
    """The field advanced by flow time s (evaluated lazily by quadrature)."""

    def fn(X):
        return ou_flow(field, s, X, q)

    return OUField(fn=fn, n=field.n, sigma=field.sigma,
                   log_convex=field.log_convex,
                   name=name or f"{field.name}+flow({s})")


def lp_gamma_norm(values: np.ndarray, p: float, sigma: float,
                  q: BoxQuadrature) -> float:
    """L^p norm against gamma_sigma of a function sampled on the grid of q."""
    w = q.weights() * gauss_density(sigma, q.points())
    return float((w @ values**p)) ** (1.0 / p)


# --------------------------------------------------------------------------
# the change of variables between OU flow and heat flow


def tau_of_t(t):
    """Heat time for OU time t."""
    return 0.5 * np.exp(2.0 * np.asarray(t, dtype=float))


def shifted_tau_of_t(t):
    """Heat time in the shifted variable tau' = tau - 1/2 (so t=0 -> 0)."""
    return 0.5 * (np.exp(2.0 * np.asarray(t, dtype=float)) - 1.0)


def ou_to_heat_values(U: Callable[[float, np.ndarray], np.ndarray],
                      sigma: float, n: int):
    """Turn an OU-side evaluator U(t, X) into the heat-side u(tau, Y)."""

    def u(tau, Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        t = 0.5 * np.log(2.0 * tau)
        Xb = np.exp(-t) * Y
        quad = np.einsum("ni,ni->n", Xb, Xb)
        return np.exp(-n * t - quad / (2.0 * sigma)) * U(t, Xb)

    return u


def heat_to_ou_values(u: Callable[[float, np.ndarray], np.ndarray],
                      sigma: float, n: int):
    """Inverse map: U(t, X) = e^{nt} e^{|X|^2/(2 sigma)} u(e^{2t}/2, e^t X)."""

    def U(t, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        quad = np.einsum("ni,ni->n", X, X)
        return np.exp(n * t + quad / (2.0 * sigma)) * u(
            0.5 * np.exp(2.0 * t), np.exp(t) * X
        )

    return U


def mixture_to_heat_atom(mix: OUGaussMixture, sigma: float = 1.0) -> AtomNode:
    """Exact heat-side atom for the OU initial datum F, in shifted time.

    The returned atom, evaluated at tau' = (e^{2t} - 1)/2, equals the
    transformed field u(tau' + 1/2, .) obtained from U(t, .) = e^{t L_sigma} F
    through the change of variables; each gaussian term of
    e^{-|x|^2/(2 sigma)} F(x) becomes one kernel term with its own delay.
    """
    n = mix.n
    weights, centers, t0s = [], [], []

    def add_term(c, b, s):
        b = np.asarray(b, dtype=float).reshape(n)
        v = s * sigma / (s + sigma)
        m = b * sigma / (s + sigma)
        amp = c * np.exp(-float(b @ b) / (2.0 * (s + sigma)))
        tau_e = v / (2.0 * sigma)
        weights.append(amp * (4.0 * np.pi * sigma * tau_e) ** (n / 2.0))
        centers.append(m)
        t0s.append(tau_e)

    for c, b, s in mix.terms:
        add_term(c, b, s)
    if mix.constant > 0:
        # a constant is the s -> infinity limit: v = sigma, center 0
        weights.append(mix.constant * (2.0 * np.pi * sigma) ** (n / 2.0))
        centers.append(np.zeros(n))
        t0s.append(0.5)

    A = SymMatrix(np.eye(n) / sigma)
    return AtomNode(GaussianMixtureAtom(A, weights, np.stack(centers), t0s))


# --------------------------------------------------------------------------
# the OU certificate rule


@dataclass(frozen=True)
class OUCertificate:
    """Conclusion of the OU closure: drift parameter and log-convexity flag."""

    n: int
    drift_sigma: float
    kind: str
    log_convex: bool


def ou_certify(fields: Sequence[OUField], spec: BellmanSpec, lam) -> OUCertificate:
    """Certify B(U_1, ..., U_m) for OU supersolutions with log-convex inputs.

    The conclusion is a supersolution of the slower flow L_{sigma/(1+lambda)};
    the output is log-convex exactly when Theta is convex.
    """
    if len(fields) != spec.m:
        raise RuleError("ou-concavity",
                        f"{spec.name} takes {spec.m} inputs, got {len(fields)}")
    if not spec.increasing:
        raise RuleError("ou-concavity", f"{spec.name} is not increasing")
    lam_f = float(lam)
    if not spec.lambda_admissible or lam_f < float(spec.lambda_min) - 1e-12:
        raise RuleError(
            "ou-concavity",
            f"relaxation parameter {lam} is not admissible for {spec.name} "
            f"(needs lambda >= {spec.lambda_min})",
        )
    sigmas = {f.sigma for f in fields}
    if len(sigmas) != 1:
        raise RuleError("ou-concavity", "fields must share one drift parameter",
                        {"sigmas": sorted(sigmas)})
    for i, f in enumerate(fields):
        if not f.log_convex:
            raise RuleError(
                "ou-concavity",
                "inputs must be log-convex (the OU closure imposes "
                "D^2 log U >= 0)",
                {"field": i, "name": f.name},
            )
    sigma = sigmas.pop()
    return OUCertificate(
        n=fields[0].n,
        drift_sigma=sigma / (1.0 + lam_f),
        kind="super",
        log_convex=spec.theta_convex,
    )
