"""Discrete probability measures and log-concave reference measures.

The state space is R^k with k in {1, 2}. Reference measures are built from a
catalog of convex potentials V via gamma = exp(-V)/Z on a uniform grid;
relative entropy, its duality lower bounds, and the discrete log-concavity
structure are computed against that grid.

All values are plain floats / numpy arrays; relative entropy is an extended
real, with ``math.inf`` the legitimate value for measures that charge points
where the reference vanishes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "NormSpec",
    "ConvexPotential",
    "QuadraticPotential",
    "QuarticPotential",
    "AbsPotential",
    "BoxPotential",
    "AffineMaxPotential",
    "TabulatedPotential",
    "quadratic",
    "quartic",
    "abs_potential",
    "box",
    "affine_max",
    "tabulated",
    "potential_from_descriptor",
    "ReferenceMeasure",
    "discretize_reference",
    "suggested_bounds",
    "DiscreteMeasure",
    "grid_measure",
    "gaussian_on_grid",
    "dirac_on_grid",
    "relative_entropy",
    "entropy_duality_bound",
    "second_moment",
    "entropy_set_bound_check",
    "SetBoundResult",
    "discrete_log_concavity_ok",
    "bin_to_grid",
    "rebin_measure",
]

WEIGHT_SUM_TOL = 1e-9
TAIL_MASS_TOL = 1e-12
TRUNCATION_LEVEL = 40.0  # bounds must reach V >= min V + this


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class NormSpec:
    """Symmetric positive-definite quadratic form ||h||_A = sqrt(h' A h).

    ``kappa`` is the smallest constant with (1/kappa)||h|| <= ||h||_A <=
    kappa ||h|| for all h, derived from the eigenvalues of A.
    """

    matrix: np.ndarray
    kappa: float

    @classmethod
    def from_matrix(cls, matrix) -> "NormSpec":
        a = np.atleast_2d(np.asarray(matrix, dtype=float))
        if a.shape[0] != a.shape[1]:
            raise ValueError("norm matrix must be square")
        if not np.allclose(a, a.T, atol=1e-12):
            raise ValueError("norm matrix must be symmetric")
        eig = np.linalg.eigvalsh(a)
        if eig[0] <= 0:
            raise ValueError("norm matrix must be positive definite")
        kappa = max(math.sqrt(eig[-1]), 1.0 / math.sqrt(eig[0]), 1.0)
        a = a.copy()
        a.setflags(write=False)
        return cls(matrix=a, kappa=float(kappa))

    @classmethod
    def scaled_identity(cls, factor: float, dim: int = 1) -> "NormSpec":
        return cls.from_matrix(factor * np.eye(dim))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def norm(self, h) -> np.ndarray | float:
        """Evaluate ||h||_A; h may be one vector or a stack of rows."""
        v = np.atleast_2d(np.asarray(h, dtype=float))
        q = np.einsum("ni,ij,nj->n", v, self.matrix, v)
        out = np.sqrt(np.maximum(q, 0.0))
        return float(out[0]) if np.ndim(h) <= 1 else out


# ---------------------------------------------------------------------------
# Convex potential catalog (1-D)
# ---------------------------------------------------------------------------
class ConvexPotential:
    """Convex lower-semicontinuous potential on R with +inf allowed.

    Subclasses provide vectorized ``value`` and one-sided derivatives. The
    effective domain is an interval; outside it the value is +inf.
    """

    kind: str = "abstract"

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, x, side: str = "right") -> np.ndarray:
        """One-sided derivative; ``side`` in {"left", "right"}."""
        raise NotImplementedError

    def drift(self, x) -> np.ndarray:
        """Subgradient selection used as SDE drift: 0 at kinks."""
        x = np.asarray(x, dtype=float)
        dr = self.derivative(x, "right")
        dl = self.derivative(x, "left")
        g = 0.5 * (dr + dl)
        # where the subdifferential brackets zero, pick zero
        bracket = (dl <= 0.0) & (dr >= 0.0)
        return np.where(bracket, 0.0, g)

    def finite_interval(self) -> tuple[float, float]:
        """Closure of the effective domain {V < +inf}."""
        return (-math.inf, math.inf)

    def kinks(self) -> np.ndarray:
        """Interior points where the derivative jumps."""
        return np.array([])

    def argmin(self) -> float:
        raise NotImplementedError

    def min_value(self) -> float:
        return float(self.value(np.array([self.argmin()]))[0])

    def is_smooth(self) -> bool:
        """C^1 on the interior of the effective domain."""
        return len(self.kinks()) == 0

    def descriptor(self) -> dict:
        raise NotImplementedError

    def antiderivative(self, x) -> np.ndarray:
        """Exact antiderivative of V on the effective domain."""
        raise NotImplementedError

    def integral_pairs(self, a, b) -> np.ndarray:
        """Exact integrals of V over the intervals [a_i, b_i].

        Intervals leaving the effective domain integrate to +inf.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        out = self.antiderivative(b) - self.antiderivative(a)
        lo, hi = self.finite_interval()
        slack = 1e-9 * max(1.0, abs(lo) if math.isfinite(lo) else 0.0,
                           abs(hi) if math.isfinite(hi) else 0.0)
        bad = (a < lo - slack) | (b > hi + slack)
        return np.where(bad, np.inf, out)

    def check_integrable(self) -> None:
        """Reject potentials with exp(-V) not integrable.

        Convexity makes linear growth at infinity equivalent to
        integrability, so it suffices to test the one-sided slopes far out.
        """
        lo, hi = self.finite_interval()
        if math.isfinite(lo) and math.isfinite(hi):
            return
        m = self.argmin()
        span = max(1.0, abs(m))
        if not math.isfinite(hi):
            s = float(self.derivative(np.array([m + 50.0 * span]), "right")[0])
            if s <= 0.0:
                raise ValueError(f"{self.kind} potential: exp(-V) not integrable (flat right tail)")
        if not math.isfinite(lo):
            s = float(self.derivative(np.array([m - 50.0 * span]), "left")[0])
            if s >= 0.0:
                raise ValueError(f"{self.kind} potential: exp(-V) not integrable (flat left tail)")


@dataclass(frozen=True)
class QuadraticPotential(ConvexPotential):
    """V(x) = a (x - m)^2 / 2 with a > 0; gamma = N(m, 1/a)."""

    a: float
    m: float = 0.0
    kind: str = field(default="quadratic", init=False)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.a * (x - self.m) ** 2

    def derivative(self, x, side="right"):
        x = np.asarray(x, dtype=float)
        return self.a * (x - self.m)

    def argmin(self):
        return self.m

    def antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        return self.a * (x - self.m) ** 3 / 6.0

    def descriptor(self):
        return {"kind": "quadratic", "a": self.a, "m": self.m}


@dataclass(frozen=True)
class QuarticPotential(ConvexPotential):
    """V(x) = a x^4 / 4 + b x^2 / 2 with a > 0, b >= 0."""

    a: float
    b: float = 0.0
    kind: str = field(default="quartic", init=False)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.25 * self.a * x**4 + 0.5 * self.b * x**2

    def derivative(self, x, side="right"):
        x = np.asarray(x, dtype=float)
        return self.a * x**3 + self.b * x

    def argmin(self):
        return 0.0

    def antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        return self.a * x**5 / 20.0 + self.b * x**3 / 6.0

    def descriptor(self):
        return {"kind": "quartic", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class AbsPotential(ConvexPotential):
    """V(x) = a |x| + c with a > 0 (Laplace reference)."""

    a: float
    c: float = 0.0
    kind: str = field(default="abs", init=False)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.a * np.abs(x) + self.c

    def derivative(self, x, side="right"):
        x = np.asarray(x, dtype=float)
        d = self.a * np.sign(x)
        at_zero = x == 0.0
        return np.where(at_zero, self.a if side == "right" else -self.a, d)

    def kinks(self):
        return np.array([0.0])

    def argmin(self):
        return 0.0

    def antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.a * x * np.abs(x) + self.c * x

    def descriptor(self):
        return {"kind": "abs", "a": self.a, "c": self.c}


@dataclass(frozen=True)
class BoxPotential(ConvexPotential):
    """V = inner on [lo, hi], +inf outside; inner convex (default 0)."""

    lo: float
    hi: float
    inner: ConvexPotential | None = None
    kind: str = field(default="box", init=False)

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("box potential needs lo < hi")

    def _inner_value(self, x):
        if self.inner is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        return self.inner.value(x)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        v = self._inner_value(x)
        out = np.where((x < self.lo) | (x > self.hi), np.inf, v)
        return out

    def derivative(self, x, side="right"):
        x = np.asarray(x, dtype=float)
        if self.inner is None:
            d = np.zeros_like(x)
        else:
            d = self.inner.derivative(x, side)
        return np.where((x < self.lo) | (x > self.hi), np.nan, d)

    def finite_interval(self):
        return (self.lo, self.hi)

    def kinks(self):
        if self.inner is None:
            return np.array([])
        ks = self.inner.kinks()
        return ks[(ks > self.lo) & (ks < self.hi)]

    def argmin(self):
        if self.inner is None:
            return 0.5 * (self.lo + self.hi)
        m = self.inner.argmin()
        return min(max(m, self.lo), self.hi)

    def is_smooth(self):
        return self.inner is None or len(self.kinks()) == 0

    def antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.lo, self.hi)
        if self.inner is None:
            return np.zeros_like(xc)
        return self.inner.antiderivative(xc)

    def descriptor(self):
        d = {"kind": "box", "lo": self.lo, "hi": self.hi}
        if self.inner is not None:
            d["inner"] = self.inner.descriptor()
        return d


@dataclass(frozen=True)
class AffineMaxPotential(ConvexPotential):
    """V(x) = max_k (slope_k x + intercept_k) over at least two lines."""

    slopes: np.ndarray
    intercepts: np.ndarray
    kind: str = field(default="affine_max", init=False)

    @classmethod
    def from_pieces(cls, pieces) -> "AffineMaxPotential":
        arr = np.asarray(pieces, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
            raise ValueError("affine_max needs >= 2 (slope, intercept) pairs")
        order = np.argsort(arr[:, 0], kind="stable")
        s, b = arr[order, 0].copy(), arr[order, 1].copy()
        s.setflags(write=False)
        b.setflags(write=False)
        return cls(slopes=s, intercepts=b)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.max(np.outer(x, self.slopes) + self.intercepts, axis=-1).reshape(x.shape)

    def derivative(self, x, side="right"):
        x = np.asarray(x, dtype=float)
        vals = np.outer(np.ravel(x), self.slopes) + self.intercepts
        top = vals >= np.max(vals, axis=1, keepdims=True) - 1e-12
        masked = np.where(top, self.slopes, -np.inf if side == "right" else np.inf)
        d = masked.max(axis=1) if side == "right" else masked.min(axis=1)
        return d.reshape(x.shape)

    def kinks(self):
        # envelope breakpoints: intersections of consecutive active lines
        xs = []
        s, b = self.slopes, self.intercepts
        for i in range(len(s) - 1):
            if s[i + 1] == s[i]:
                continue
            t = (b[i] - b[i + 1]) / (s[i + 1] - s[i])
            v = float(self.value(np.array([t]))[0])
            if v <= s[i] * t + b[i] + 1e-10:
                xs.append(t)
        return np.unique(np.asarray(xs, dtype=float))

    def argmin(self):
        ks = self.kinks()
        candidates = list(ks) if len(ks) else [0.0]
        vals = [float(self.value(np.array([c]))[0]) for c in candidates]
        return float(candidates[int(np.argmin(vals))])

    def _segments(self):
        """Envelope segments: boundaries and the active line per segment."""
        ks = self.kinks()
        bounds = np.concatenate([[-np.inf], ks, [np.inf]])
        probes = []
        for i in range(len(bounds) - 1):
            lo, hi = bounds[i], bounds[i + 1]
            if not math.isfinite(lo):
                probes.append(hi - 1.0 if math.isfinite(hi) else 0.0)
            elif not math.isfinite(hi):
                probes.append(lo + 1.0)
            else:
                probes.append(0.5 * (lo + hi))
        active = np.argmax(
            np.outer(np.asarray(probes), self.slopes) + self.intercepts, axis=1
        )
        return bounds, active

    def antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        bounds, active = self._segments()
        ks = bounds[1:-1]
        s = self.slopes[active]
        b = self.intercepts[active]

        def raw(seg, t):
            return 0.5 * s[seg] * t * t + b[seg] * t

        # continuity constants accumulated across breakpoints
        shifts = np.zeros(len(active))
        for i in range(1, len(active)):
            k = ks[i - 1]
            shifts[i] = shifts[i - 1] + raw(i - 1, k) - raw(i, k)
        seg = np.searchsorted(ks, x, side="right")
        return 0.5 * s[seg] * x * x + b[seg] * x + shifts[seg]

    def descriptor(self):
        return {
            "kind": "affine_max",
            "pieces": [[float(s), float(b)] for s, b in zip(self.slopes, self.intercepts)],
        }


@dataclass(frozen=True)
class TabulatedPotential(ConvexPotential):
    """Piecewise-linear potential from (x, V(x)) samples; +inf outside range.

    Convexity is validated from second differences at construction.
    """

    xs: np.ndarray
    vals: np.ndarray
    kind: str = field(default="tabulated", init=False)

    @classmethod
    def from_table(cls, xs, vals) -> "TabulatedPotential":
        xs = np.asarray(xs, dtype=float)
        vals = np.asarray(vals, dtype=float)
        if xs.ndim != 1 or xs.shape != vals.shape or len(xs) < 3:
            raise ValueError("tabulated potential needs >= 3 aligned samples")
        if not np.all(np.diff(xs) > 0):
            raise ValueError("tabulated grid must be strictly increasing")
        slopes = np.diff(vals) / np.diff(xs)
        if np.any(np.diff(slopes) < -1e-10 * max(1.0, np.abs(slopes).max())):
            raise ValueError("tabulated values are not convex")
        xs, vals = xs.copy(), vals.copy()
        xs.setflags(write=False)
        vals.setflags(write=False)
        return cls(xs=xs, vals=vals)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        v = np.interp(x, self.xs, self.vals)
        return np.where((x < self.xs[0]) | (x > self.xs[-1]), np.inf, v)

    def derivative(self, x, side="right"):
        x = np.asarray(x, dtype=float)
        slopes = np.diff(self.vals) / np.diff(self.xs)
        idx = np.searchsorted(self.xs, x, side="right" if side == "right" else "left") - 1
        idx = np.clip(idx, 0, len(slopes) - 1)
        d = slopes[idx]
        return np.where((x < self.xs[0]) | (x > self.xs[-1]), np.nan, d)

    def finite_interval(self):
        return (float(self.xs[0]), float(self.xs[-1]))

    def kinks(self):
        slopes = np.diff(self.vals) / np.diff(self.xs)
        jump = np.abs(np.diff(slopes)) > 1e-12 * max(1.0, np.abs(slopes).max())
        return self.xs[1:-1][jump]

    def argmin(self):
        return float(self.xs[int(np.argmin(self.vals))])

    def antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        slopes = np.diff(self.vals) / np.diff(self.xs)
        pieces = 0.5 * (self.vals[1:] + self.vals[:-1]) * np.diff(self.xs)
        cum = np.concatenate([[0.0], np.cumsum(pieces)])
        xc = np.clip(x, self.xs[0], self.xs[-1])
        i = np.clip(np.searchsorted(self.xs, xc, side="right") - 1, 0, len(slopes) - 1)
        t = xc - self.xs[i]
        return cum[i] + self.vals[i] * t + 0.5 * slopes[i] * t * t

    def descriptor(self):
        return {"kind": "tabulated", "xs": self.xs.tolist(), "vals": self.vals.tolist()}


def quadratic(a: float, m: float = 0.0) -> QuadraticPotential:
    if a <= 0:
        raise ValueError("quadratic potential needs a > 0")
    return QuadraticPotential(a=float(a), m=float(m))


def quartic(a: float, b: float = 0.0) -> QuarticPotential:
    if a <= 0 or b < 0:
        raise ValueError("quartic potential needs a > 0, b >= 0")
    return QuarticPotential(a=float(a), b=float(b))


def abs_potential(a: float, c: float = 0.0) -> AbsPotential:
    if a <= 0:
        raise ValueError("abs potential needs a > 0")
    return AbsPotential(a=float(a), c=float(c))


def box(lo: float, hi: float, inner: ConvexPotential | None = None) -> BoxPotential:
    return BoxPotential(lo=float(lo), hi=float(hi), inner=inner)


def affine_max(pieces) -> AffineMaxPotential:
    pot = AffineMaxPotential.from_pieces(pieces)
    pot.check_integrable()
    return pot


def tabulated(xs, vals) -> TabulatedPotential:
    return TabulatedPotential.from_table(xs, vals)


def potential_from_descriptor(desc: dict) -> ConvexPotential:
    """Rebuild a catalog potential from its JSON descriptor."""
    kind = desc.get("kind")
    if kind == "quadratic":
        return quadratic(desc["a"], desc.get("m", 0.0))
    if kind == "quartic":
        return quartic(desc["a"], desc.get("b", 0.0))
    if kind == "abs":
        return abs_potential(desc["a"], desc.get("c", 0.0))
    if kind == "box":
        inner = desc.get("inner")
        return box(desc["lo"], desc["hi"], potential_from_descriptor(inner) if inner else None)
    if kind == "affine_max":
        return affine_max(desc["pieces"])
    if kind == "tabulated":
        return tabulated(desc["xs"], desc["vals"])
    raise ValueError(f"unknown potential kind: {kind!r}")


# ---------------------------------------------------------------------------
# Reference measures
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ReferenceMeasure:
    """Log-concave reference gamma = exp(-V)/Z discretized on a uniform grid.

    ``weights`` sum to one and vanish exactly where V = +inf;
    ``log_partition`` is ln Z for the continuum normalization, estimated by
    midpoint quadrature on the same grid.
    """

    potential: ConvexPotential
    grid: np.ndarray
    weights: np.ndarray
    log_partition: float
    cell_width: float
    bounds: tuple[float, float]

    @property
    def n(self) -> int:
        return len(self.grid)

    @property
    def support_mask(self) -> np.ndarray:
        return self.weights > 0.0

    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0.0)

    def as_measure(self) -> "DiscreteMeasure":
        mask = self.support_mask
        return DiscreteMeasure.from_atoms(self.grid[mask], self.weights[mask])

    def mean(self) -> float:
        return float(np.dot(self.weights, self.grid))

    def second_moment(self) -> float:
        return float(np.dot(self.weights, self.grid**2))

    def locate(self, points, tol: float | None = None) -> np.ndarray:
        """Map coordinates to grid indices; -1 where no cell center matches."""
        x = np.ravel(np.asarray(points, dtype=float))
        if tol is None:
            tol = 1e-9 * max(1.0, abs(self.bounds[0]), abs(self.bounds[1]))
        idx = np.rint((x - self.grid[0]) / self.cell_width).astype(int)
        ok = (idx >= 0) & (idx < self.n)
        safe = np.clip(idx, 0, self.n - 1)
        ok &= np.abs(self.grid[safe] - x) <= tol
        return np.where(ok, safe, -1)


def discretize_reference(
    potential: ConvexPotential,
    n: int,
    bounds: tuple[float, float],
) -> ReferenceMeasure:
    """Discretize gamma = exp(-V)/Z on n uniform cells over ``bounds``.

    The truncated continuum tail mass outside the bounds must be below
    1e-12 relative to Z; convexity turns the one-sided slopes at the bounds
    into rigorous tail bounds, so violations are rejected, as are
    non-integrable potentials.
    """
    if n < 2:
        raise ValueError("discretization needs n >= 2")
    lo, hi = float(bounds[0]), float(bounds[1])
    if not lo < hi:
        raise ValueError("bounds must satisfy lo < hi")
    potential.check_integrable()

    h = (hi - lo) / n
    grid = lo + (np.arange(n) + 0.5) * h
    vals = potential.value(grid)
    finite = np.isfinite(vals)
    if not finite.any():
        raise ValueError("empty effective support: V = +inf on the whole grid")

    vmin_grid = float(vals[finite].min())
    shifted = np.where(finite, vals - vmin_grid, np.inf)
    w = np.zeros(n)
    w[finite] = np.exp(-shifted[finite])
    total = w.sum()
    weights = w / total
    log_partition = float(logsumexp(-vals[finite]) + math.log(h))

    _check_tail_mass(potential, lo, hi, log_partition)

    g = grid.copy()
    g.setflags(write=False)
    weights.setflags(write=False)
    return ReferenceMeasure(
        potential=potential,
        grid=g,
        weights=weights,
        log_partition=log_partition,
        cell_width=h,
        bounds=(lo, hi),
    )


def _check_tail_mass(potential: ConvexPotential, lo: float, hi: float, log_z: float) -> None:
    # convexity: V(x) >= V(b) + slope (x - b) beyond a bound b, so the
    # truncated tail is at most exp(-V(b)) / |slope|
    dom_lo, dom_hi = potential.finite_interval()
    tail = 0.0
    if hi < dom_hi:
        v_hi = float(potential.value(np.array([hi]))[0])
        slope = float(potential.derivative(np.array([hi]), "right")[0])
        if slope <= 0.0:
            raise ValueError("bounds too tight: V must increase at the right bound")
        tail += math.exp(-v_hi) / slope
    if lo > dom_lo:
        v_lo = float(potential.value(np.array([lo]))[0])
        slope = float(potential.derivative(np.array([lo]), "left")[0])
        if slope >= 0.0:
            raise ValueError("bounds too tight: V must decrease at the left bound")
        tail += math.exp(-v_lo) / (-slope)
    if tail > 0.0 and tail > TAIL_MASS_TOL * math.exp(log_z):
        raise ValueError(
            f"truncated tail mass {tail:.3e} exceeds {TAIL_MASS_TOL:.0e} of the total"
        )


def suggested_bounds(potential: ConvexPotential, level: float = TRUNCATION_LEVEL):
    """Bounds covering the sublevel set {V <= min V + level}.

    Found by doubling steps plus bisection from the argmin; infinite domain
    directions only.
    """
    m = potential.argmin()
    vtarget = potential.min_value() + level
    dom_lo, dom_hi = potential.finite_interval()

    def push(direction: float, dom_edge: float) -> float:
        step = max(1.0, abs(m))
        x = m
        while True:
            nxt = x + direction * step
            if direction > 0 and nxt >= dom_edge:
                return dom_edge
            if direction < 0 and nxt <= dom_edge:
                return dom_edge
            if float(potential.value(np.array([nxt]))[0]) >= vtarget:
                return nxt
            x = nxt
            step *= 2.0

    return (push(-1.0, dom_lo), push(1.0, dom_hi))


# ---------------------------------------------------------------------------
# Discrete measures
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud: probabilities on finitely many points of R^k."""

    support: np.ndarray  # (n, k)
    weights: np.ndarray  # (n,)
    norm: NormSpec | None = None

    @classmethod
    def from_atoms(cls, points, weights, norm: NormSpec | None = None) -> "DiscreteMeasure":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(weights, dtype=float).ravel()
        if len(pts) != len(w):
            raise ValueError("points and weights must align")
        if not np.all(np.isfinite(pts)):
            raise ValueError("support coordinates must be finite")
        if np.any(w < -1e-15):
            raise ValueError("weights must be nonnegative")
        w = np.maximum(w, 0.0)
        total = w.sum()
        if total <= 0.0:
            raise ValueError("total mass must be positive")
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}; normalize to 1 first")
        w = w / total

        keep = w > 0.0
        pts, w = pts[keep], w[keep]
        order = np.lexsort(pts.T[::-1])
        pts, w = pts[order], w[order]
        # merge exactly coincident atoms so support points stay distinct
        if len(pts) > 1:
            same = np.all(pts[1:] == pts[:-1], axis=1)
            if same.any():
                group = np.concatenate([[0], np.cumsum(~same)])
                n_groups = group[-1] + 1
                merged_w = np.zeros(n_groups)
                np.add.at(merged_w, group, w)
                first = np.concatenate([[True], ~same])
                pts, w = pts[first], merged_w
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        w.setflags(write=False)
        return cls(support=pts, weights=w, norm=norm)

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    @property
    def x(self) -> np.ndarray:
        """Flat coordinates, only valid in one dimension."""
        if self.dim != 1:
            raise ValueError("x is defined for 1-D measures only")
        return self.support[:, 0]

    def with_norm(self, norm: NormSpec | None) -> "DiscreteMeasure":
        return replace(self, norm=norm)


def grid_measure(gamma: ReferenceMeasure, weights) -> DiscreteMeasure:
    """Probability measure living on gamma's grid from a weight vector."""
    w = np.asarray(weights, dtype=float).ravel()
    if len(w) != gamma.n:
        raise ValueError("weight vector must match the grid")
    total = w.sum()
    if total <= 0:
        raise ValueError("total mass must be positive")
    return DiscreteMeasure.from_atoms(gamma.grid, w / total)


def gaussian_on_grid(gamma: ReferenceMeasure, mean: float, std: float) -> DiscreteMeasure:
    """Discretized N(mean, std^2) restricted to gamma's support cells."""
    if std <= 0:
        raise ValueError("std must be positive")
    z = (gamma.grid - mean) / std
    logw = np.where(gamma.support_mask, -0.5 * z**2, -np.inf)
    w = np.exp(logw - logw.max())
    return grid_measure(gamma, w)


def dirac_on_grid(gamma: ReferenceMeasure, x: float) -> DiscreteMeasure:
    """Unit mass on the support cell closest to x."""
    idx = gamma.support_indices()
    j = idx[int(np.argmin(np.abs(gamma.grid[idx] - x)))]
    w = np.zeros(gamma.n)
    w[j] = 1.0
    return grid_measure(gamma, w)


# ---------------------------------------------------------------------------
# Entropy and bounds
# ---------------------------------------------------------------------------
def _match_to_grid(mu: DiscreteMeasure, gamma: ReferenceMeasure) -> np.ndarray | None:
    """Indices of mu's atoms in gamma's grid, or None if any atom is off-grid."""
    if mu.dim != 1:
        return None
    idx = gamma.locate(mu.x)
    if np.any(idx < 0):
        return None
    return idx


def relative_entropy(mu: DiscreteMeasure, gamma: ReferenceMeasure) -> float:
    """Relative entropy of mu against gamma: sum of mu_i ln(mu_i / gamma_i).

    Returns +inf when mu charges points off gamma's grid or cells where
    gamma vanishes; the value is an extended real, never an error.
    """
    idx = _match_to_grid(mu, gamma)
    if idx is None:
        return math.inf
    gw = gamma.weights[idx]
    if np.any(gw <= 0.0):
        return math.inf
    val = float(np.sum(mu.weights * (np.log(mu.weights) - np.log(gw))))
    if -1e-10 < val < 0.0:  # float noise around the Jensen floor
        return 0.0
    return val


def entropy_duality_bound(mu: DiscreteMeasure, gamma: ReferenceMeasure, s) -> float:
    """Duality lower bound int S dmu - int (e^S - 1) dgamma <= H(mu|gamma).

    ``s`` is either a callable on coordinates or an array aligned with
    gamma's grid (then mu must live on that grid).
    """
    if callable(s):
        s_mu = np.asarray(s(mu.x), dtype=float)
        s_gamma = np.asarray(s(gamma.grid), dtype=float)
    else:
        s_gamma = np.asarray(s, dtype=float).ravel()
        if len(s_gamma) != gamma.n:
            raise ValueError("grid test function must match gamma's grid")
        idx = _match_to_grid(mu, gamma)
        if idx is None:
            raise ValueError("mu must live on gamma's grid for grid test functions")
        s_mu = s_gamma[idx]
    if not (np.all(np.isfinite(s_mu)) and np.all(np.isfinite(s_gamma))):
        raise ValueError("test function must be finite on the grid")
    return float(np.dot(mu.weights, s_mu) - np.dot(gamma.weights, np.expm1(s_gamma)))


def second_moment(mu: DiscreteMeasure, norm: NormSpec | None = None) -> float:
    """Sum of w_i ||x_i||^2, optionally in a NormSpec metric."""
    norm = norm if norm is not None else mu.norm
    if norm is None:
        return float(np.dot(mu.weights, np.einsum("ij,ij->i", mu.support, mu.support)))
    v = norm.norm(mu.support)
    return float(np.dot(mu.weights, np.asarray(v) ** 2))


@dataclass(frozen=True)
class SetBoundResult:
    lhs: float
    rhs: float
    holds: bool


def entropy_set_bound_check(
    nu: DiscreteMeasure, gamma: ReferenceMeasure, e_indices
) -> SetBoundResult:
    """Check nu(E) ln(nu(E)/gamma(E)) <= H(nu|gamma) + gamma(E^c)/e.

    ``e_indices`` selects grid cells. Mass of nu outside gamma's grid makes
    H infinite, in which case the inequality holds trivially.
    """
    e = np.zeros(gamma.n, dtype=bool)
    e[np.asarray(e_indices, dtype=int)] = True
    h = relative_entropy(nu, gamma)
    idx = _match_to_grid(nu, gamma)
    if idx is None:
        nu_e = 0.0  # off-grid mass: H already infinite
    else:
        nu_e = float(nu.weights[e[idx]].sum())
    gamma_e = float(gamma.weights[e].sum())
    if nu_e > 0.0 and gamma_e == 0.0:
        lhs = math.inf
    elif nu_e == 0.0:
        lhs = 0.0
    else:
        lhs = nu_e * math.log(nu_e / gamma_e)
    rhs = h + (1.0 - gamma_e) / math.e
    holds = lhs <= rhs or (math.isinf(lhs) and math.isinf(h))
    return SetBoundResult(lhs=lhs, rhs=rhs, holds=bool(holds))


def discrete_log_concavity_ok(gamma: ReferenceMeasure, rel_tol: float = 1e-12) -> bool:
    """Midpoint log-concavity of the grid weights on a contiguous support."""
    idx = gamma.support_indices()
    if len(idx) == 0 or np.any(np.diff(idx) != 1):
        return False
    w = gamma.weights[idx]
    if len(w) < 3:
        return True
    left, mid, right = w[:-2], w[1:-1], w[2:]
    return bool(np.all(mid**2 >= left * right * (1.0 - rel_tol)))


# ---------------------------------------------------------------------------
# Grid projection
# ---------------------------------------------------------------------------
def bin_to_grid(points, masses, grid: np.ndarray) -> np.ndarray:
    """Project atoms onto a uniform grid by linear mass splitting.

    Each atom's mass is shared between the two neighboring cell centers in
    proportion to proximity; atoms beyond the ends collapse onto the end
    cells. Mass is preserved exactly.
    """
    x = np.ravel(np.asarray(points, dtype=float))
    m = np.ravel(np.asarray(masses, dtype=float))
    h = grid[1] - grid[0]
    pos = (x - grid[0]) / h
    left = np.floor(pos).astype(int)
    frac = pos - left
    left_c = np.clip(left, 0, len(grid) - 1)
    right_c = np.clip(left + 1, 0, len(grid) - 1)
    frac = np.where(left < 0, 0.0, np.where(left >= len(grid) - 1, 0.0, frac))
    out = np.zeros(len(grid))
    np.add.at(out, left_c, m * (1.0 - frac))
    np.add.at(out, right_c, m * frac)
    return out


def rebin_measure(mu: DiscreteMeasure, gamma: ReferenceMeasure) -> DiscreteMeasure:
    """Project a 1-D measure onto gamma's grid by linear mass splitting."""
    w = bin_to_grid(mu.x, mu.weights, gamma.grid)
    return grid_measure(gamma, w)
