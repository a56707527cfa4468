"""Converging families of log-concave references and flow stability checks.

Three constructions produce sequences gamma_n -> gamma: growing envelopes
of tangent lines (increasing to the potential), smoothing at scale 1/n,
and variance perturbations of Gaussian references. Checkers compare
entropies along the sequence against duality witnesses and recovery
measures, run the proximal flow under every member, and verify the
metric-convergence equivalences used throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from .measures import (
    AffineMaxPotential,
    BoxPotential,
    ConvexPotential,
    DiscreteMeasure,
    NormSpec,
    QuadraticPotential,
    ReferenceMeasure,
    discretize_reference,
    quadratic,
    rebin_measure,
    relative_entropy,
    second_moment,
    suggested_bounds,
    tabulated,
)
from .jko import JkoConfig, QuantileLattice, jko_trajectory
from .measures import dirac_on_grid, entropy_duality_bound, grid_measure
from .report import CheckReport
from .transport import w2, w2_quantile_knots

__all__ = [
    "ReferenceSequence",
    "build_sequence",
    "affine_envelope_potential",
    "mollified_potential",
    "bounded_lipschitz_dictionary",
    "gamma_convergence_check",
    "flow_stability_run",
    "FlowStabilityResult",
    "moments_convergence_check",
    "MomentsConvergenceResult",
    "w2_lsc_check",
]


@dataclass
class ReferenceSequence:
    """Members gamma_n converging to a limit reference."""

    members: list[ReferenceMeasure]
    limit: ReferenceMeasure
    ns: tuple[int, ...]
    kind: str
    norms: list[NormSpec] | None = None

    def weak_convergence_gaps(self, dictionary=None) -> np.ndarray:
        """Sup over a bounded-Lipschitz dictionary of integral gaps per member."""
        dictionary = dictionary if dictionary is not None else bounded_lipschitz_dictionary()
        gaps = []
        for member in self.members:
            worst = 0.0
            for f in dictionary:
                a = float(np.dot(member.weights, f(member.grid)))
                b = float(np.dot(self.limit.weights, f(self.limit.grid)))
                worst = max(worst, abs(a - b))
            gaps.append(worst)
        return np.asarray(gaps)


# ---------------------------------------------------------------------------
# Constructions
# ---------------------------------------------------------------------------
def _van_der_corput(count: int) -> np.ndarray:
    out = []
    i = 1
    while len(out) < count:
        u, denom, k = 0.0, 1.0, i
        while k:
            denom *= 2.0
            k, rem = divmod(k, 2)
            u += rem / denom
        out.append(u)
        i += 1
    return np.asarray(out)


def affine_envelope_potential(base: ConvexPotential, points) -> AffineMaxPotential:
    """Envelope of tangent lines of the base potential at given points."""
    pts = np.asarray(points, dtype=float)
    vals = base.value(pts)
    slopes = base.drift(pts)
    pieces = [(float(s), float(v - s * p)) for p, v, s in zip(pts, vals, slopes)]
    pot = AffineMaxPotential.from_pieces(pieces)
    pot.check_integrable()
    return pot


def _envelope_tangency_points(base: ConvexPotential, n: int) -> np.ndarray:
    """First n points of a nested low-discrepancy spread over the base.

    Nesting (each set contains the previous) makes the envelopes increase
    monotonically toward the base potential. The leading pair straddles the
    minimum so every envelope is integrable.
    """
    lo, hi = suggested_bounds(base, 12.0)
    u = np.concatenate([[0.25, 0.75], _van_der_corput(max(n, 2))])
    seen: list[float] = []
    for v in u:
        if len(seen) >= n:
            break
        if all(abs(v - s) > 1e-12 for s in seen):
            seen.append(float(v))
    return lo + (hi - lo) * np.asarray(seen)


def mollified_potential(base: ConvexPotential, sigma: float, samples: int = 2001) -> ConvexPotential:
    """Smoothing of the base at scale sigma, as a tabulated potential.

    Finite potentials are convolved with a Gaussian kernel directly (the
    standard increasing-regularity approximation); box potentials convolve
    the density instead, which keeps the result log-concave and covers the
    +inf walls. The box case uses the closed form of the smoothed
    indicator.
    """
    if isinstance(base, BoxPotential) and base.inner is None:
        lo, hi = base.lo, base.hi
        span = 8.0 * sigma
        xs = np.linspace(lo - span, hi + span, samples)
        # log(Phi((hi-x)/sigma) - Phi((lo-x)/sigma)) evaluated stably
        a = (hi - xs) / sigma
        b = (lo - xs) / sigma
        log_top = log_ndtr(a)
        log_bot = log_ndtr(b)
        diff = np.minimum(log_bot - log_top, -1e-300)
        log_dens = log_top + np.log(-np.expm1(diff))
        return tabulated(xs, -log_dens)
    lo, hi = suggested_bounds(base, 50.0)
    xs = np.linspace(lo - 8.0 * sigma, hi + 8.0 * sigma, samples)
    k = np.arange(-6.0, 6.0 + 1e-9, 0.05)
    kernel = np.exp(-0.5 * k * k)
    kernel /= kernel.sum()
    vals = np.array(
        [float(np.dot(kernel, base.value(xx + sigma * k))) for xx in xs]
    )
    return tabulated(xs, vals)


def build_sequence(
    kind: str,
    base: ConvexPotential,
    ns: tuple[int, ...] = (4, 16, 64),
    grid_n: int = 400,
    norms: list[NormSpec] | None = None,
) -> ReferenceSequence:
    """Sequence of discretized references converging to the base's law.

    ``affine_envelope`` grows nested tangent envelopes (potentials increase
    to the base), ``mollified`` smooths at scale 1/n, and
    ``variance_perturbed`` scales a Gaussian's variance by 1 + 1/n.
    """
    members = []
    if kind == "affine_envelope":
        for n in ns:
            pot = affine_envelope_potential(base, _envelope_tangency_points(base, n))
            members.append(discretize_reference(pot, grid_n, suggested_bounds(pot)))
        limit_pot = base
    elif kind == "mollified":
        # kernel of scale 1/n, i.e. standard deviation 1/(2n)
        for n in ns:
            pot = mollified_potential(base, 0.5 / n)
            bounds = pot.finite_interval()
            members.append(discretize_reference(pot, grid_n, bounds))
        limit_pot = base
    elif kind == "variance_perturbed":
        if not isinstance(base, QuadraticPotential):
            raise ValueError("variance_perturbed needs a quadratic base")
        for n in ns:
            pot = quadratic(base.a / (1.0 + 1.0 / n), base.m)
            members.append(discretize_reference(pot, grid_n, suggested_bounds(pot)))
        limit_pot = base
    else:
        raise ValueError(f"unknown sequence kind {kind!r}")

    lim_bounds = (
        limit_pot.finite_interval()
        if all(map(math.isfinite, limit_pot.finite_interval()))
        else suggested_bounds(limit_pot)
    )
    limit = discretize_reference(limit_pot, grid_n, lim_bounds)
    return ReferenceSequence(members=members, limit=limit, ns=tuple(ns), kind=kind, norms=norms)


# ---------------------------------------------------------------------------
# Weak-convergence dictionary
# ---------------------------------------------------------------------------
def bounded_lipschitz_dictionary(size: int = 64, seed: int = 12345):
    """Fixed dictionary of bounded-Lipschitz test functions on the line.

    Half are sines of varying frequency and phase, half clipped cubics; all
    take values in [-2, 2].
    """
    rng = np.random.default_rng(seed)
    fns = []
    n_sines = size // 2
    for j in range(n_sines):
        freq = 0.15 + 0.1 * j
        phase = float(rng.uniform(0, 2 * math.pi))

        def f(x, freq=freq, phase=phase):
            return np.sin(freq * np.asarray(x, dtype=float) + phase)

        fns.append(f)
    for _ in range(size - n_sines):
        c = rng.uniform(-0.5, 0.5, size=4)

        def g(x, c=c):
            x = np.asarray(x, dtype=float)
            return np.clip(c[0] + c[1] * x + c[2] * x**2 / 4 + c[3] * x**3 / 16, -2.0, 2.0)

        fns.append(g)
    return fns


# ---------------------------------------------------------------------------
# Entropy convergence
# ---------------------------------------------------------------------------
def _density_vs_limit(probe: DiscreteMeasure, limit: ReferenceMeasure, clip: float):
    """Clipped log-density of the probe against the limit, as a callable."""
    w = np.zeros(limit.n)
    idx = limit.locate(probe.x)
    if np.any(idx < 0):
        raise ValueError("probes must live on the limit's grid")
    w[idx] = probe.weights
    with np.errstate(divide="ignore", invalid="ignore"):
        log_rho = np.where(
            (w > 0) & (limit.weights > 0),
            np.log(np.maximum(w, 1e-300)) - np.log(np.maximum(limit.weights, 1e-300)),
            -clip,
        )
    log_rho = np.clip(log_rho, -clip, clip)
    grid, span = limit.grid, limit.cell_width

    def s(x):
        x = np.asarray(x, dtype=float)
        inside = (x >= grid[0] - span) & (x <= grid[-1] + span)
        vals = np.interp(x, grid, log_rho)
        return np.where(inside, vals, -clip)

    return s, log_rho


def gamma_convergence_check(
    seq: ReferenceSequence,
    probes: list[DiscreteMeasure],
    clip: float = 30.0,
    recovery_eps: tuple[float, ...] = (0.1, 0.01),
    tol: float = 0.01,
) -> CheckReport:
    """Two-sided entropy convergence along the sequence.

    For each probe, the clipped log-density against the limit is a bounded
    duality witness, so its duality value under every member lower-bounds
    H(probe | gamma_n) and converges to H(probe | limit); the recovery
    measures Z^-1 exp(-eps x^2) rho gamma_n certify the matching upper
    bound. Probes with infinite limit entropy are reported as a divergence
    trend instead.
    """
    report = CheckReport()
    for p_idx, probe in enumerate(probes):
        h_limit = relative_entropy(probe, seq.limit)
        if not math.isfinite(h_limit):
            h_last = relative_entropy(
                rebin_measure(probe, seq.members[-1]), seq.members[-1]
            )
            h_first = relative_entropy(
                rebin_measure(probe, seq.members[0]), seq.members[0]
            )
            report.add(
                f"probe{p_idx}_divergence_trend",
                h_first,
                h_last,
                0.0,
                "limit entropy infinite; member entropies must grow",
            )
            continue

        s_fn, log_rho = _density_vs_limit(probe, seq.limit, clip)
        witness_limit = float(
            np.dot(probe.weights, np.clip(log_rho[seq.limit.locate(probe.x)], -clip, clip))
            - np.dot(seq.limit.weights, np.expm1(log_rho))
        )
        # witness value under the last member certifies the liminf side
        member = seq.members[-1]
        value_n = entropy_duality_bound(
            rebin_measure(probe, member), member, s_fn
        )
        h_n = relative_entropy(rebin_measure(probe, member), member)
        report.add(
            f"probe{p_idx}_liminf_witness_certifies",
            value_n,
            h_n,
            1e-12,
            "duality bound below member entropy",
        )
        report.add(
            f"probe{p_idx}_liminf_witness_converges",
            abs(value_n - witness_limit),
            0.0,
            tol,
            f"witness drift; H(limit)={h_limit:.6f}",
        )

        # recovery (limsup) side
        best_gap = math.inf
        for eps in recovery_eps:
            member = seq.members[-1]
            rho_member = np.exp(s_fn(member.grid))
            g = np.exp(-eps * member.grid**2) * rho_member
            w = member.weights * g
            if w.sum() <= 0:
                continue
            rec = grid_measure(member, w)
            h_rec = relative_entropy(rec, member)
            best_gap = min(best_gap, h_rec - h_limit)
        report.add(
            f"probe{p_idx}_limsup_recovery",
            best_gap,
            0.0,
            tol,
            "recovery entropy minus limit entropy",
        )
    return report


# ---------------------------------------------------------------------------
# Flow stability
# ---------------------------------------------------------------------------
@dataclass
class FlowStabilityResult:
    ns: tuple[int, ...]
    times: np.ndarray
    gaps: np.ndarray  # (len(ns),) sup over times of W2(member flow, limit flow)
    report: CheckReport


def flow_stability_run(
    seq: ReferenceSequence,
    x_n,
    x: float,
    T: float,
    cfg: JkoConfig,
    final_gap_tol: float = 0.05,
    monotone_slack: float = 1e-3,
) -> FlowStabilityResult:
    """Transition flows under every member against the limit flow.

    Starts the flow at x_n under gamma_n (with the member norm as a cost
    weight when norms are supplied) and at x under the limit, then reports
    the sup over step times of the cross-lattice distance. The gap ladder
    must shrink to ``final_gap_tol`` and be monotone within
    ``monotone_slack``.
    """
    x_n = list(x_n)
    if len(x_n) != len(seq.members):
        raise ValueError("one start point per member required")
    lat_limit = QuantileLattice(seq.limit)
    traj_limit = jko_trajectory(
        seq.limit, dirac_on_grid(seq.limit, x), cfg, T, lattice=lat_limit
    )
    times = traj_limit.times[1:]
    gaps = []
    for i, member in enumerate(seq.members):
        scale = 1.0
        if seq.norms is not None:
            scale = float(seq.norms[i].matrix[0, 0])
        lat = QuantileLattice(member)
        traj = jko_trajectory(
            member, dirac_on_grid(member, x_n[i]), cfg, T, cost_scale=scale, lattice=lat
        )
        worst = 0.0
        for t in times:
            worst = max(
                worst,
                w2_quantile_knots(
                    (lat.levels, traj.edges_at(t)),
                    (lat_limit.levels, traj_limit.edges_at(t)),
                ),
            )
        gaps.append(worst)
    gaps = np.asarray(gaps)
    report = CheckReport()
    report.add("flow_gap_final", float(gaps[-1]), final_gap_tol, 0.0, f"n={seq.ns[-1]}")
    worst_increase = float(np.max(np.diff(gaps))) if len(gaps) > 1 else 0.0
    report.add("flow_gap_monotone", worst_increase, 0.0, monotone_slack)
    return FlowStabilityResult(ns=seq.ns, times=times, gaps=gaps, report=report)


# ---------------------------------------------------------------------------
# Metric convergence equivalences
# ---------------------------------------------------------------------------
@dataclass
class MomentsConvergenceResult:
    weak_gaps: np.ndarray
    moment_gaps: np.ndarray
    w2_gaps: np.ndarray
    converges_weakly: bool
    moments_converge: bool
    w2_converges: bool

    @property
    def equivalence_holds(self) -> bool:
        return (self.converges_weakly and self.moments_converge) == self.w2_converges


def moments_convergence_check(
    mu_seq: list[DiscreteMeasure],
    mu: DiscreteMeasure,
    norms: list[NormSpec] | None = None,
    tol: float = 1e-2,
) -> MomentsConvergenceResult:
    """Weak + second-moment convergence against Wasserstein convergence.

    All three gap ladders are computed numerically; convergence of the
    first two is equivalent to convergence of the third.
    """
    dictionary = bounded_lipschitz_dictionary()
    weak, mom, wass = [], [], []
    m_ref = second_moment(mu)
    for i, m in enumerate(mu_seq):
        worst = 0.0
        for f in dictionary:
            a = float(np.dot(m.weights, f(m.x)))
            b = float(np.dot(mu.weights, f(mu.x)))
            worst = max(worst, abs(a - b))
        weak.append(worst)
        norm = norms[i] if norms is not None else None
        mom.append(abs(second_moment(m, norm) - m_ref))
        wass.append(w2(m, mu))
    weak, mom, wass = map(np.asarray, (weak, mom, wass))
    return MomentsConvergenceResult(
        weak_gaps=weak,
        moment_gaps=mom,
        w2_gaps=wass,
        converges_weakly=bool(weak[-1] <= tol),
        moments_converge=bool(mom[-1] <= tol),
        w2_converges=bool(wass[-1] <= math.sqrt(tol)),
    )


def w2_lsc_check(
    mu_seq: list[DiscreteMeasure],
    nu_seq: list[DiscreteMeasure],
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    norms: list[NormSpec] | None = None,
    tol: float = 1e-2,
) -> CheckReport:
    """Lower semicontinuity and convergence of weighted distances.

    (i) the liminf of the member distances dominates the limit distance;
    (ii) when both sequences converge with second moments, the weighted
    distances converge to the limit distance.
    """
    report = CheckReport()
    dists = []
    for i in range(len(mu_seq)):
        norm = norms[i] if norms is not None else None
        dists.append(w2(mu_seq[i], nu_seq[i], norm))
    dists = np.asarray(dists)
    target = w2(mu, nu)
    tail = dists[len(dists) // 2 :]
    report.add("w2_liminf", target, float(tail.min()), tol, "limit <= liminf of members")

    mom_mu = moments_convergence_check(mu_seq, mu, norms, tol)
    mom_nu = moments_convergence_check(nu_seq, nu, norms, tol)
    if (
        mom_mu.converges_weakly
        and mom_mu.moments_converge
        and mom_nu.converges_weakly
        and mom_nu.moments_converge
    ):
        report.add("w2_convergence", abs(float(dists[-1]) - target), 0.0, tol)
    return report
