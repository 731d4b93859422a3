"""Deterministic quadrature for functionals, convolutions and group averages.

Trapezoid rules on uniform grids are the default everywhere: integrands in
this package are smooth with gaussian decay, so trapezoid converges
spectrally once the box covers the effective support, and uniform grids keep
derivative propagation and determinism trivial.  Accumulation uses numpy's
fixed pairwise summation, so results are identical run to run and do not
depend on any worker-pool configuration.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import DimensionMismatch, TailMassWarning
from .symmat import SymMatrix, inverse

TAIL_THRESHOLD = 1e-9

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19)


class Axis(NamedTuple):
    lo: float
    hi: float
    count: int


@dataclass(frozen=True)
class BoxQuadrature:
    """Tensor-product trapezoid rule on an axis-aligned box.

    Per-dimension counts must be odd (>= 3) so that the stride-2 subgrid is
    itself a trapezoid rule; the comparison between the two powers the
    returned truncation estimate.
    """

    axes: tuple

    def __init__(self, axes):
        axes = tuple(Axis(float(lo), float(hi), int(c)) for lo, hi, c in axes)
        for ax in axes:
            if ax.count < 3 or ax.count % 2 == 0:
                raise ValueError(f"grid count must be odd and >= 3, got {ax.count}")
            if not ax.hi > ax.lo:
                raise ValueError("box upper bound must exceed lower bound")
        object.__setattr__(self, "axes", axes)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def npoints(self) -> int:
        out = 1
        for ax in self.axes:
            out *= ax.count
        return out

    @property
    def shape(self):
        return tuple(ax.count for ax in self.axes)

    def grids(self):
        return [np.linspace(ax.lo, ax.hi, ax.count) for ax in self.axes]

    def points(self) -> np.ndarray:
        """All nodes as an (N, ndim) array in fixed row-major order."""
        mesh = np.meshgrid(*self.grids(), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    def _axis_weights(self, grid):
        h = grid[1] - grid[0]
        w = np.full(len(grid), h)
        w[0] = w[-1] = h / 2.0
        return w

    def weights(self) -> np.ndarray:
        w = np.array([1.0])
        for g in self.grids():
            w = np.multiply.outer(w, self._axis_weights(g)).reshape(-1)
        return w

    def coarse_weights(self) -> np.ndarray:
        w = np.array([1.0])
        for g in self.grids():
            w = np.multiply.outer(w, self._axis_weights(g[::2])).reshape(-1)
        return w

    def boundary_mask(self) -> np.ndarray:
        masks = []
        for ax in self.axes:
            m = np.zeros(ax.count, dtype=bool)
            m[0] = m[-1] = True
            masks.append(m)
        out = np.zeros(self.shape, dtype=bool)
        for d, m in enumerate(masks):
            sl = [None] * self.ndim
            sl[d] = slice(None)
            out |= m[tuple(sl)]
        return out.reshape(-1)


class IntegralResult(NamedTuple):
    value: float
    truncation: float
    tail_ratio: float


def integrate_values(vals: np.ndarray, q: BoxQuadrature) -> IntegralResult:
    """Integrate precomputed grid values (row-major order of q.points())."""
    w = q.weights()
    total = float(w @ vals)
    abs_total = float(w @ np.abs(vals))
    grid_vals = vals.reshape(q.shape)
    coarse = grid_vals[tuple(slice(None, None, 2) for _ in range(q.ndim))]
    coarse_total = float(q.coarse_weights() @ coarse.reshape(-1))
    # Richardson gap plus a pairwise-summation roundoff floor
    truncation = abs(total - coarse_total) / 3.0 + 1e-14 * abs_total + 1e-300
    peak = float(np.max(np.abs(vals)))
    bmax = float(np.max(np.abs(vals[q.boundary_mask()])))
    return IntegralResult(total, truncation, bmax / peak if peak > 0 else 0.0)


def integrate(node, t: float, q: BoxQuadrature, weight=None) -> IntegralResult:
    """Integrate node values (optionally against a static weight) over the box.

    The truncation estimate is the Richardson-style gap to the stride-2
    subgrid; doubling the resolution moves the result by less than this.
    A tail-mass warning fires when the boundary integrand is not negligible
    relative to the peak.
    """
    if q.ndim != node.n:
        raise DimensionMismatch(
            f"quadrature box has {q.ndim} dims but node has {node.n}"
        )
    vals = node.values(t, q.points())
    if weight is not None:
        vals = vals * weight.values(q.points())
    res = integrate_values(vals, q)
    total, truncation = res.value, res.truncation

    peak = float(np.max(np.abs(vals)))
    bmax = float(np.max(np.abs(vals[q.boundary_mask()])))
    tail_ratio = bmax / peak if peak > 0 else 0.0
    if tail_ratio > TAIL_THRESHOLD:
        warnings.warn(
            f"boundary integrand is {tail_ratio:.2e} of peak; "
            "the quadrature box may truncate the support",
            TailMassWarning,
            stacklevel=2,
        )
    return IntegralResult(total, truncation, tail_ratio)


# --------------------------------------------------------------------------
# functional traces


@dataclass
class FunctionalTrace:
    """Sampled values of t -> F(t) with monotonicity metadata."""

    times: np.ndarray
    values: np.ndarray
    direction: str
    truncation: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.values)

    @property
    def worst_violation(self) -> float:
        """Signed margin of the expected direction; negative means violated."""
        d = self.deltas
        if len(d) == 0:
            return 0.0
        if self.direction == "nondecreasing":
            return float(d.min())
        if self.direction == "nonincreasing":
            return float((-d).min())
        return float(-np.abs(d).max())

    @property
    def max_abs_value(self) -> float:
        return float(np.max(np.abs(self.values))) if len(self.values) else 0.0

    def direction_ok(self, rel_tol: float = 1e-7) -> bool:
        """Direction check with quadrature noise subtracted.

        The tolerance is relative to max |F| over the trace, plus per-step
        truncation estimates, so coarse grids cannot manufacture violations.
        """
        noise = self.truncation[1:] + self.truncation[:-1] if len(self.truncation) > 1 else 0.0
        slack = rel_tol * self.max_abs_value + (np.max(noise) if np.ndim(noise) else noise)
        return self.worst_violation >= -slack

    def to_csv(self, path):
        rows = ["t,F,delta,truncation_estimate"]
        deltas = np.concatenate([[0.0], self.deltas])
        for t, f, d, e in zip(self.times, self.values, deltas, self.truncation):
            rows.append(f"{t:.17g},{f:.17g},{d:.17g},{e:.17g}")
        text = "\n".join(rows) + "\n"
        with open(path, "w") as fh:
            fh.write(text)
        return text


def functional_trace(spec, times, q: BoxQuadrature, threads: int = 1) -> FunctionalTrace:
    """Sample the certified functional at the given times.

    ``spec`` carries the integrand node (any time-power prefactor is already
    inside the tree), an optional weight and the expected direction.  Results
    are merged by time index, so the outcome is independent of ``threads``.
    """
    times = np.asarray(times, dtype=float)
    if len(times) and (np.any(np.diff(times) <= 0) or times[0] <= 0):
        raise ValueError("times must be strictly increasing and positive")

    def one(i):
        return integrate(spec.node, times[i], q, weight=spec.weight)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, range(len(times))))
    else:
        results = [one(i) for i in range(len(times))]

    values = np.array([r.value for r in results])
    trunc = np.array([r.truncation for r in results])
    return FunctionalTrace(times=times, values=values,
                           direction=spec.direction, truncation=trunc)


# --------------------------------------------------------------------------
# the 4D isometry group used by the dispersive scenario


@dataclass(frozen=True)
class GroupSampler:
    """Finite equal-weight sample of a compact group of orthogonal matrices."""

    elements: np.ndarray  # (m, d, d)

    @property
    def size(self) -> int:
        return self.elements.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.size, 1.0 / self.size)


def group_o2_elements(k: int) -> GroupSampler:
    """Isometries of R^4 fixing (1,0,1,0) and (0,1,0,1).

    The group is a copy of O(2) acting on the orthogonal complement of the
    two fixed directions; it is sampled by k equispaced rotations, each taken
    with and without the reflection, 2k elements of weight 1/(2k).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    r = 1.0 / np.sqrt(2.0)
    p = np.array([
        [r, 0.0, r, 0.0],
        [0.0, r, 0.0, r],
        [r, 0.0, -r, 0.0],
        [0.0, r, 0.0, -r],
    ]).T  # columns: e, f, g, h
    flip = np.diag([1.0, -1.0])
    mats = []
    for j in range(k):
        th = 2.0 * np.pi * j / k
        rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        for tail in (rot, rot @ flip):
            blk = np.eye(4)
            blk[2:, 2:] = tail
            mats.append(p @ blk @ p.T)
    out = np.array(mats)
    out.setflags(write=False)
    return GroupSampler(out)


# --------------------------------------------------------------------------
# static weights for weighted functionals


class Weight:
    """Static spatial weight w(x) with enough derivatives for the
    subharmonicity side condition tr(M^{-1} D^2 w) >= 0."""

    name = "weight"

    def values(self, X):
        raise NotImplementedError

    def hessians(self, X):
        raise NotImplementedError

    def subharmonic_margin(self, diffusion: SymMatrix, X) -> np.ndarray:
        minv = inverse(diffusion).a
        return np.einsum("ij,nij->n", minv, self.hessians(X))


class OneWeight(Weight):
    name = "one"
    is_trivial = True

    def values(self, X):
        return np.ones(X.shape[0])

    def hessians(self, X):
        n = X.shape[1]
        return np.zeros((X.shape[0], n, n))


class CoshWeight(Weight):
    """w(x) = cosh(x_axis); subharmonic for every SPD diffusion matrix."""

    is_trivial = False

    def __init__(self, axis: int = 0):
        self.axis = axis
        self.name = f"cosh_{axis + 1}"

    def values(self, X):
        return np.cosh(X[:, self.axis])

    def hessians(self, X):
        n = X.shape[1]
        out = np.zeros((X.shape[0], n, n))
        out[:, self.axis, self.axis] = np.cosh(X[:, self.axis])
        return out


class ExpWeight(Weight):
    """w(x) = exp(<b, x>)."""

    is_trivial = False

    def __init__(self, b):
        self.b = np.asarray(b, dtype=float)
        self.name = "exp"

    def values(self, X):
        return np.exp(X @ self.b)

    def hessians(self, X):
        v = self.values(X)
        bb = np.outer(self.b, self.b)
        return v[:, None, None] * bb[None, :, :]


def builtin_weight(name: str, ndim: int) -> Optional[Weight]:
    """Resolve a reserved weight name used by the DSL, or None."""
    if name == "one":
        return OneWeight()
    if name.startswith("cosh_"):
        try:
            axis = int(name.split("_", 1)[1]) - 1
        except ValueError:
            return None
        if 0 <= axis < ndim:
            return CoshWeight(axis)
    return None


# --------------------------------------------------------------------------
# box sizing and low-discrepancy sampling


def auto_halfwidth(diffusion: SymMatrix, t_max: float, factor: float = 8.0) -> float:
    """Halfwidth covering the gaussian support of a flow at time t_max."""
    lam = 1.0 / diffusion.min_eig()  # largest eigenvalue of the inverse
    return factor * np.sqrt(2.0 * t_max * lam)


def box_for(node, t_max: float, count: int, pad: float = 0.0) -> BoxQuadrature:
    """Quadrature box from a node's support estimate at the final time."""
    lo, hi = node.support_box(t_max)
    return BoxQuadrature([(l - pad, h + pad, count) for l, h in zip(lo, hi)])


def _radical_inverse(i: int, base: int) -> float:
    f, out = 1.0, 0.0
    while i > 0:
        f /= base
        out += f * (i % base)
        i //= base
    return out


def halton_points(count: int, bounds, offset: int = 0) -> np.ndarray:
    """Deterministic low-discrepancy points inside the box ``bounds``.

    ``bounds`` is a sequence of (lo, hi); the offset shifts the start index
    so different callers draw disjoint streams.
    """
    ndim = len(bounds)
    if ndim > len(_PRIMES):
        raise ValueError("too many dimensions for the Halton bases")
    out = np.empty((count, ndim))
    for j, (lo, hi) in enumerate(bounds):
        b = _PRIMES[j]
        col = np.array(
            [_radical_inverse(i + offset + 1, b) for i in range(count)]
        )
        out[:, j] = lo + (hi - lo) * col
    return out


def geometric_times(t0: float, t1: float, count: int) -> np.ndarray:
    if not (0 < t0 < t1):
        raise ValueError("need 0 < t0 < t1")
    return np.exp(np.linspace(np.log(t0), np.log(t1), count))
