import math

import numpy as np
import pytest
from scipy.stats import norm

import entroflow as ef
import entroflow.oracles as orc
from entroflow.jko import QuantileLattice
from entroflow.transport import histogram_quantile_knots, w2_knots_to_gaussian, w2_quantile_knots


def _full_edges(gamma):
    return np.concatenate(
        [gamma.grid - gamma.cell_width / 2, [gamma.grid[-1] + gamma.cell_width / 2]]
    )


class TestFpSolve:
    def test_reference_is_stationary(self, gaussian_ref):
        sol = orc.fp_solve(gaussian_ref.potential, gaussian_ref.as_measure(), 1.0, 1e-3)
        drift = np.abs(sol.densities[-1] - gaussian_ref.weights).sum()
        assert drift < 1e-6

    def test_mass_conserved(self, gaussian_ref):
        start = ef.dirac_on_grid(gaussian_ref, 1.0)
        sol = orc.fp_solve(gaussian_ref.potential, start, 0.3, 1e-3, grid=gaussian_ref.grid)
        assert np.abs(sol.densities.sum(axis=1) - 1.0).max() < 1e-9
        assert sol.min_density > -1e-10

    def test_ou_dirac_vs_analytic(self, gaussian_ref):
        start = ef.dirac_on_grid(gaussian_ref, 1.0)
        x = float(start.x[0])
        sol = orc.fp_solve(gaussian_ref.potential, start, 0.5, 1e-3, grid=gaussian_ref.grid)
        m = orc.ou_transition_exact(x, 0.5)
        edges = _full_edges(gaussian_ref)
        ref_w = np.diff(norm.cdf((edges - m.mean) / m.std))
        ref_w /= ref_w.sum()
        assert np.abs(sol.density_at(0.5) - ref_w).sum() < 0.01

    def test_uniform_dirac_vs_neumann_series(self, uniform_ref):
        start = ef.dirac_on_grid(uniform_ref, 0.3)
        x = float(start.x[0])
        sol = orc.fp_solve(uniform_ref.potential, start, 0.1, 1e-4, grid=uniform_ref.grid)
        ref_w = orc.neumann_density_on_grid(uniform_ref.grid, x, 0.1)
        assert np.abs(sol.density_at(0.1) - ref_w).sum() < 0.01

    def test_scheme_agreement_crank_nicolson_vs_implicit(self, gaussian_ref):
        # empirical uniqueness surrogate: two different schemes coincide
        mu0 = ef.gaussian_on_grid(gaussian_ref, 0.8, 0.6)
        a = orc.fp_solve(gaussian_ref.potential, mu0, 0.25, 1e-3, theta=0.5)
        b = orc.fp_solve(gaussian_ref.potential, mu0, 0.25, 2.5e-4, theta=1.0)
        assert np.abs(a.densities[-1] - b.densities[-1]).sum() < 2e-3

    def test_rejects_kinked_potential(self, gaussian_ref):
        with pytest.raises(ValueError):
            orc.fp_solve(ef.abs_potential(1.0), gaussian_ref.as_measure(), 0.1, 1e-3)


class TestClosedForms:
    def test_ou_transition_endpoints(self):
        m0 = orc.ou_transition_exact(0.7, 0.0)
        assert (m0.mean, m0.variance) == (0.7, 0.0)
        m_inf = orc.ou_transition_exact(0.7, 50.0)
        assert m_inf.mean == pytest.approx(0.0, abs=1e-12)
        assert m_inf.variance == pytest.approx(1.0, abs=1e-12)

    def test_ou_transition_against_euler_maruyama(self):
        # frozen reference values mean = e^{-1/2}, var = 1 - e^{-1}
        m = orc.ou_transition_exact(1.0, 0.5)
        assert m.mean == pytest.approx(math.exp(-0.5), abs=1e-12)
        assert m.variance == pytest.approx(1.0 - math.exp(-1.0), abs=1e-12)
        s = orc.sde_simulate(ef.quadratic(1.0), 1.0, 0.5, 1e-3, 40000, seed=11)
        pts = s.terminal_points
        assert abs(pts.mean() - m.mean) < 3.5 * m.std / math.sqrt(len(pts)) + 2e-3
        assert abs(pts.var() - m.variance) < 0.02

    def test_neumann_kernel_normalizes(self, uniform_ref):
        vals = orc.neumann_uniform_kernel(0.37, uniform_ref.grid, 0.05)
        assert float(vals.mean()) == pytest.approx(1.0, abs=1e-10)

    def test_neumann_kernel_symmetry_and_longtime(self):
        a = orc.neumann_uniform_kernel(0.2, 0.7, 0.15)
        b = orc.neumann_uniform_kernel(0.7, 0.2, 0.15)
        assert a == pytest.approx(b, abs=1e-14)
        flat = orc.neumann_uniform_kernel(0.3, 0.8, 10.0)
        assert flat == pytest.approx(1.0, abs=1e-12)

    def test_neumann_tail_bound_honored(self):
        t = 0.01
        terms = 40
        exact = orc.neumann_uniform_kernel(0.4, 0.6, t, terms=4000)
        short = orc.neumann_uniform_kernel(0.4, 0.6, t, terms=terms)
        assert abs(exact - short) <= orc.neumann_tail_bound(t, terms)


class TestSde:
    def test_reflected_paths_stay_inside(self):
        s = orc.sde_simulate(ef.box(0.0, 1.0), 0.3, 0.5, 1e-3, 5000, seed=3)
        assert s.terminal_points.min() >= 0.0
        assert s.terminal_points.max() <= 1.0

    def test_reflected_long_time_uniform(self):
        s = orc.sde_simulate(ef.box(0.0, 1.0), 0.3, 5.0, 1e-3, 20000, seed=5)
        mu = s.empirical()
        # W2 to the exact uniform law via its quantile knots
        d = w2_quantile_knots(
            (np.array([0.0, 1.0]), np.array([0.0, 1.0])),
            (np.cumsum(np.full(mu.n, 1.0 / mu.n)), np.sort(mu.x)),
        )
        assert d < 0.01

    def test_seed_reproducibility(self):
        a = orc.sde_simulate(ef.quadratic(1.0), 1.0, 0.1, 1e-3, 1000, seed=9)
        b = orc.sde_simulate(ef.quadratic(1.0), 1.0, 0.1, 1e-3, 1000, seed=9)
        assert np.array_equal(a.terminal_points, b.terminal_points)

    def test_dt_halving_envelope(self):
        # self-consistency: empirical laws at dt and dt/2 within O(sqrt(dt))
        outs = {}
        for dt in (4e-3, 2e-3, 1e-3):
            outs[dt] = np.sort(
                orc.sde_simulate(ef.quadratic(1.0), 1.0, 0.25, dt, 30000, seed=17).terminal_points
            )
        for dt in (4e-3, 2e-3):
            gap = math.sqrt(float(np.mean((outs[dt] - outs[dt / 2]) ** 2)))
            assert gap < 0.2 * math.sqrt(dt) + 0.02

    def test_drift_guard(self):
        with pytest.raises(ValueError):
            orc.sde_simulate(ef.quartic(1e6), 3.0, 0.1, 1.0, 10, seed=0)


class TestSemigroup:
    def test_identity_at_time_zero(self, gaussian_ref_coarse):
        p = orc.semigroup_matrix(gaussian_ref_coarse, 1e-6, dt=1e-6)
        assert np.abs(p - np.eye(gaussian_ref_coarse.n)).max() < 0.05

    def test_rows_match_analytic_ou(self, gaussian_ref_coarse):
        p = orc.semigroup_matrix(gaussian_ref_coarse, 0.5)
        edges = _full_edges(gaussian_ref_coarse)
        mid = gaussian_ref_coarse.n // 2 + 10
        x = gaussian_ref_coarse.grid[mid]
        m = orc.ou_transition_exact(float(x), 0.5)
        ref_w = np.diff(norm.cdf((edges - m.mean) / m.std))
        ref_w /= ref_w.sum()
        assert np.abs(p[mid] - ref_w).sum() < 0.02

    def test_chapman_kolmogorov_fp(self, gaussian_ref_coarse):
        p1 = orc.semigroup_matrix(gaussian_ref_coarse, 0.25)
        p2 = orc.semigroup_matrix(gaussian_ref_coarse, 0.5)
        err = np.abs(p1 @ p1 - p2).sum(axis=1).max()
        assert err < 0.02

    def test_chapman_kolmogorov_jko(self):
        g = ef.discretize_reference(ef.quadratic(1.0), 60, (-8, 8))
        cfg = ef.JkoConfig(tau=5e-3)
        p1 = orc.semigroup_matrix(g, 0.25, cfg, method="jko")
        p2 = orc.semigroup_matrix(g, 0.5, cfg, method="jko")
        assert np.abs(p1.sum(axis=1) - 1.0).max() < 1e-9
        err = np.abs(p1 @ p1 - p2).sum(axis=1).max()
        assert err < 0.02

    def test_reversibility(self, gaussian_ref_coarse, uniform_ref):
        assert orc.reversibility_check(gaussian_ref_coarse, 0.5).asymmetry < 1e-3
        assert orc.reversibility_check(uniform_ref, 0.2).asymmetry < 1e-3

    def test_lip_contraction(self, gaussian_ref_coarse, uniform_ref):
        f = np.sin(gaussian_ref_coarse.grid)
        res = orc.lip_contraction_check(gaussian_ref_coarse, 0.5, f)
        assert res.contracts
        # the image's slope shrinks at least like e^{-t} under the mean map
        assert res.lip_after <= math.exp(-0.5) * res.lip_before + 1e-6
        const = orc.lip_contraction_check(gaussian_ref_coarse, 0.5, np.ones(gaussian_ref_coarse.n))
        assert const.lip_before == pytest.approx(0.0, abs=1e-14)
        clipped = np.clip(uniform_ref.grid, 0.2, 0.8)
        res_u = orc.lip_contraction_check(uniform_ref, 0.1, clipped)
        assert res_u.contracts


class TestJkoCrossChecks:
    def test_jko_vs_fp_ou(self, gaussian_ref):
        mu0 = ef.gaussian_on_grid(gaussian_ref, 1.0, 0.5)
        traj = ef.jko_trajectory(gaussian_ref, mu0, ef.JkoConfig(tau=5e-3), 0.5)
        sol = orc.fp_solve(gaussian_ref.potential, mu0, 0.5, 1e-3, grid=gaussian_ref.grid)
        edges = _full_edges(gaussian_ref)
        lat = traj.lattice
        for t in (0.1, 0.5):
            d = w2_quantile_knots(
                (lat.levels, traj.edges_at(t)),
                histogram_quantile_knots(edges, sol.density_at(t)),
            )
            assert d < 0.02

    def test_jko_vs_sde_ou(self, gaussian_ref):
        traj = ef.transition_trajectory(gaussian_ref, 1.0, 0.5, ef.JkoConfig(tau=2e-3))
        x = float(traj.initial.x[0])
        s = orc.sde_simulate(gaussian_ref.potential, x, 0.5, 1e-3, 50000, seed=7)
        lat = traj.lattice
        mu = s.empirical()
        levels = np.cumsum(mu.weights)
        d = w2_quantile_knots((lat.levels, traj.edges[-1]), (levels, mu.x))
        assert d < 0.03
