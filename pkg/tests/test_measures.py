import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

import entroflow as ef
from conftest import random_grid_measure


class TestPotentialCatalog:
    def test_quadratic_is_gaussian_density(self, gaussian_ref):
        # weights proportional to the standard normal density
        dens = norm.pdf(gaussian_ref.grid)
        ratio = gaussian_ref.weights / (dens / dens.sum())
        assert np.abs(ratio - 1.0).max() < 1e-12

    def test_box_uniform_weights(self):
        gam = ef.discretize_reference(ef.box(0.0, 1.0), 200, (0.0, 1.0))
        assert np.allclose(gam.weights, 1.0 / 200.0, atol=1e-15)

    def test_quartic_partition_vs_quadrature(self, quartic_ref):
        # independent oracle: adaptive quadrature of exp(-x^4/4 - x^2/2)
        z, _ = integrate.quad(lambda x: math.exp(-0.25 * x**4 - 0.5 * x**2), -10, 10)
        assert abs(quartic_ref.log_partition - math.log(z)) < 1e-6

    def test_log_partition_stable_under_refinement(self):
        # midpoint sums of smooth decaying densities are spectrally accurate;
        # kinked potentials only converge at second order in the cell width
        for pot in (ef.quadratic(1.0), ef.quartic(1.0, 1.0)):
            bounds = ef.suggested_bounds(pot)
            a = ef.discretize_reference(pot, 400, bounds).log_partition
            b = ef.discretize_reference(pot, 800, bounds).log_partition
            assert abs(a - b) < 1e-6
        pot = ef.abs_potential(1.0)
        bounds = ef.suggested_bounds(pot)
        h = (bounds[1] - bounds[0]) / 400
        a = ef.discretize_reference(pot, 400, bounds).log_partition
        b = ef.discretize_reference(pot, 800, bounds).log_partition
        z_exact = math.log(2.0)  # int exp(-|x|) = 2
        assert abs(a - b) < h * h
        assert abs(b - z_exact) < h * h

    def test_normalization(self):
        for pot, bounds in [
            (ef.quadratic(2.0, 0.5), (-6, 7)),
            (ef.quartic(1.0, 0.0), (-4.5, 4.5)),
            (ef.abs_potential(0.7), (-60, 60)),
            (ef.box(-1.0, 2.0, ef.quadratic(1.0)), (-1.0, 2.0)),
        ]:
            gam = ef.discretize_reference(pot, 300, bounds)
            assert abs(gam.weights.sum() - 1.0) < 1e-12

    def test_catalog_log_concavity(self):
        pots = [
            (ef.quadratic(1.0), (-8, 8)),
            (ef.quartic(1.0, 1.0), (-4.5, 4.5)),
            (ef.abs_potential(1.0), (-50, 50)),
            (ef.box(0.0, 1.0), (0.0, 1.0)),
            (ef.affine_max([(-1.0, 0.0), (1.0, 0.0), (2.0, -3.0)]), (-50, 30)),
        ]
        for pot, bounds in pots:
            gam = ef.discretize_reference(pot, 400, bounds)
            assert ef.discrete_log_concavity_ok(gam), pot.kind

    def test_tabulated_requires_convexity(self):
        xs = np.linspace(-1, 1, 21)
        with pytest.raises(ValueError):
            ef.tabulated(xs, -np.abs(xs))
        pot = ef.tabulated(xs, xs**2)
        assert pot.value(np.array([0.35]))[0] == pytest.approx(0.35**2, abs=5e-3)

    def test_non_integrable_rejected(self):
        flat = ef.affine_max.__wrapped__ if hasattr(ef.affine_max, "__wrapped__") else None
        with pytest.raises(ValueError):
            ef.affine_max([(0.0, 0.0), (1.0, -1.0)])  # flat left tail
        with pytest.raises(ValueError):
            ef.discretize_reference(ef.quadratic(1.0), 400, (-2.0, 8.0))  # fat tail cut

    def test_empty_support_rejected(self):
        with pytest.raises(ValueError):
            ef.discretize_reference(ef.box(10.0, 11.0), 100, (0.0, 1.0))

    def test_antiderivatives_match_quadrature(self):
        pots = [
            ef.quadratic(1.3, 0.4),
            ef.quartic(0.8, 0.5),
            ef.abs_potential(1.2, 0.3),
            ef.affine_max([(-2.0, 0.1), (0.5, 0.0), (3.0, -2.0)]),
            ef.tabulated(np.linspace(-3, 3, 40), np.linspace(-3, 3, 40) ** 2),
        ]
        for pot in pots:
            for a, b in [(-1.5, 0.3), (0.1, 2.2), (-2.5, 2.5)]:
                got = float(pot.integral_pairs([a], [b])[0])
                pts = sorted({a, b, *pot.kinks().tolist()})
                ref = sum(
                    integrate.quad(
                        lambda x: float(pot.value(np.array([x]))[0]), lo, hi, limit=200
                    )[0]
                    for lo, hi in zip(pts, pts[1:])
                    if a <= lo < hi <= b
                )
                tol = 5e-6 if pot.kind == "tabulated" else 1e-8
                assert abs(got - ref) < tol * max(1.0, abs(ref)), pot.kind

    def test_descriptor_round_trip(self):
        pots = [
            ef.quadratic(2.0, -1.0),
            ef.quartic(1.0, 0.2),
            ef.abs_potential(0.5, 1.0),
            ef.box(0.0, 2.0, ef.quadratic(1.0)),
            ef.affine_max([(-1.0, 0.0), (2.0, -1.0)]),
        ]
        xs = np.linspace(-0.5, 1.5, 11)
        for pot in pots:
            clone = ef.potential_from_descriptor(pot.descriptor())
            assert np.allclose(clone.value(xs), pot.value(xs), equal_nan=True)


class TestEntropy:
    def test_reference_entropy_zero(self, gaussian_ref):
        assert ef.relative_entropy(gaussian_ref.as_measure(), gaussian_ref) == 0.0

    def test_mass_off_support_is_infinite(self, uniform_ref):
        mu = ef.DiscreteMeasure.from_atoms([0.5, 3.0], [0.5, 0.5])
        assert math.isinf(ef.relative_entropy(mu, uniform_ref))

    def test_gaussian_closed_form(self, gaussian_ref):
        # H(N(0.5, 0.25) | N(0,1)) = (s^2 + m^2 - 1 - ln s^2) / 2
        mu = ef.gaussian_on_grid(gaussian_ref, 0.5, 0.5)
        expected = 0.5 * (0.25 + 0.25 - 1.0 - math.log(0.25))
        assert ef.relative_entropy(mu, gaussian_ref) == pytest.approx(expected, abs=2e-4)

    def test_entropy_nonnegative_and_zero_iff_equal(self, gaussian_ref, rng):
        for _ in range(50):
            mu = random_grid_measure(gaussian_ref, rng)
            h = ef.relative_entropy(mu, gaussian_ref)
            assert h >= 0.0
            assert h > 1e-6  # distinct from gamma
        assert ef.relative_entropy(gaussian_ref.as_measure(), gaussian_ref) == 0.0


class TestDualityBound:
    def test_zero_witness(self, gaussian_ref, rng):
        mu = random_grid_measure(gaussian_ref, rng)
        val = ef.entropy_duality_bound(mu, gaussian_ref, np.zeros(gaussian_ref.n))
        assert val == pytest.approx(0.0, abs=1e-14)
        assert val <= ef.relative_entropy(mu, gaussian_ref)

    def test_optimal_witness_attains(self, gaussian_ref):
        mu = ef.gaussian_on_grid(gaussian_ref, 0.5, 0.5)
        h = ef.relative_entropy(mu, gaussian_ref)
        idx = gaussian_ref.locate(mu.x)
        s = np.full(gaussian_ref.n, -30.0)
        s[idx] = np.clip(
            np.log(mu.weights) - np.log(gaussian_ref.weights[idx]), -30.0, 30.0
        )
        val = ef.entropy_duality_bound(mu, gaussian_ref, s)
        assert val <= h + 1e-12
        assert abs(val - h) < 1e-3

    def test_random_witnesses_never_exceed(self, gaussian_ref, rng):
        mu = random_grid_measure(gaussian_ref, rng)
        h = ef.relative_entropy(mu, gaussian_ref)
        for _ in range(1000):
            s = rng.uniform(-3.0, 3.0) * np.sin(
                rng.uniform(0.2, 3.0) * gaussian_ref.grid + rng.uniform(0, 6.3)
            )
            assert ef.entropy_duality_bound(mu, gaussian_ref, s) <= h + 1e-10


class TestSecondMoment:
    def test_dirac_at_origin(self):
        mu = ef.DiscreteMeasure.from_atoms([0.0], [1.0])
        assert ef.second_moment(mu) == 0.0

    def test_standard_gaussian(self, gaussian_ref):
        mu = ef.gaussian_on_grid(gaussian_ref, 0.0, 1.0)
        assert ef.second_moment(mu) == pytest.approx(1.0, abs=1e-4)

    def test_two_dimensional(self):
        mu = ef.DiscreteMeasure.from_atoms([[0.0, 0.0], [3.0, 4.0]], [0.5, 0.5])
        assert ef.second_moment(mu) == pytest.approx(12.5)

    def test_weighted_norm(self):
        mu = ef.DiscreteMeasure.from_atoms([[1.0, 0.0]], [1.0])
        norm_spec = ef.NormSpec.from_matrix([[4.0, 0.0], [0.0, 1.0]])
        assert ef.second_moment(mu, norm_spec) == pytest.approx(4.0)


class TestSetBound:
    def test_full_grid(self, gaussian_ref, rng):
        nu = random_grid_measure(gaussian_ref, rng)
        res = ef.entropy_set_bound_check(nu, gaussian_ref, np.arange(gaussian_ref.n))
        assert res.lhs == pytest.approx(0.0, abs=1e-12)
        assert res.holds

    def test_reference_itself(self, gaussian_ref):
        res = ef.entropy_set_bound_check(
            gaussian_ref.as_measure(), gaussian_ref, np.arange(100, 300)
        )
        assert res.lhs <= res.rhs
        assert res.holds

    def test_half_line(self, gaussian_ref):
        nu = ef.gaussian_on_grid(gaussian_ref, 0.5, 0.5)
        e_set = np.flatnonzero(gaussian_ref.grid >= 0.0)
        res = ef.entropy_set_bound_check(nu, gaussian_ref, e_set)
        # direct evaluation oracle
        idx = gaussian_ref.locate(nu.x)
        mask = np.isin(idx, e_set)
        nu_e = nu.weights[mask].sum()
        gam_e = gaussian_ref.weights[e_set].sum()
        assert res.lhs == pytest.approx(nu_e * math.log(nu_e / gam_e), rel=1e-12)
        assert res.holds

    def test_random_pairs(self, gaussian_ref, rng):
        for _ in range(500):
            nu = random_grid_measure(gaussian_ref, rng)
            size = int(rng.integers(1, gaussian_ref.n))
            e_set = rng.choice(gaussian_ref.n, size=size, replace=False)
            assert ef.entropy_set_bound_check(nu, gaussian_ref, e_set).holds


class TestGridProjection:
    def test_bin_preserves_mass_and_mean(self, gaussian_ref, rng):
        pts = rng.uniform(-3, 3, size=50)
        masses = rng.dirichlet(np.ones(50))
        w = ef.bin_to_grid(pts, masses, gaussian_ref.grid)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        # linear splitting preserves the first moment exactly for interior atoms
        assert np.dot(w, gaussian_ref.grid) == pytest.approx(np.dot(masses, pts), abs=1e-12)

    def test_rebin_identity_on_grid(self, gaussian_ref):
        mu = ef.gaussian_on_grid(gaussian_ref, 0.3, 0.7)
        reb = ef.rebin_measure(mu, gaussian_ref)
        assert np.allclose(reb.x, mu.x)
        assert np.allclose(reb.weights, mu.weights, atol=1e-15)


class TestNormSpec:
    def test_kappa_from_eigenvalues(self):
        spec = ef.NormSpec.from_matrix([[4.0, 0.0], [0.0, 0.25]])
        assert spec.kappa == pytest.approx(2.0)
        h = np.array([1.0, 0.0])
        assert spec.norm(h) == pytest.approx(2.0)

    def test_equivalence_bounds(self, rng):
        a = rng.normal(size=(2, 2))
        spec = ef.NormSpec.from_matrix(a @ a.T + 0.5 * np.eye(2))
        for _ in range(100):
            h = rng.normal(size=2)
            base = float(np.linalg.norm(h))
            weighted = spec.norm(h)
            assert weighted <= spec.kappa * base + 1e-12
            assert weighted >= base / spec.kappa - 1e-12

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            ef.NormSpec.from_matrix([[1.0, 2.0], [2.0, 1.0]])


class TestDiscreteMeasure:
    def test_merges_duplicates(self):
        mu = ef.DiscreteMeasure.from_atoms([0.0, 0.0, 1.0], [0.25, 0.25, 0.5])
        assert mu.n == 2
        assert mu.weights[0] == pytest.approx(0.5)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            ef.DiscreteMeasure.from_atoms([0.0, 1.0], [0.5, 0.6])

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            ef.DiscreteMeasure.from_atoms([0.0, 1.0], [1.5, -0.5])
