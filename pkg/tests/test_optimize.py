"""Tests for the closed-form solver, frontier sweep, and reduced optimizer."""

import math

import numpy as np
import pytest
from scipy import optimize as _sopt

import nmvmrisk as nr
from nmvmrisk.mixing import Gamma, Gig, InverseGaussian
from nmvmrisk.nmvm import portfolio_moments, transform
from nmvmrisk.optimize import (DegenerateConstraintsError, SingularGramError,
                               check_skew_monotonicity, frontier,
                               solve_mean_risk_reduced, solve_mean_risk_skew)
from nmvmrisk.risk import portfolio_risk_exact

# golden five-column weight table for the skew model; the five target
# returns form the uniform grid 0.002 * (9 + j) / 9
R_GRID = [0.002 * (9 + j) / 9 for j in range(5)]
WEIGHTS_GOLDEN = np.array([
    [0.077077, 0.194069, 0.31106, 0.428051, 0.545042],
    [0.252863, 0.22433, 0.195798, 0.167265, 0.138732],
    [0.067729, 0.101723, 0.135716, 0.169709, 0.203703],
    [0.399764, 0.26734, 0.134915, 0.00249, -0.12994],
    [0.202566, 0.212539, 0.222512, 0.232485, 0.242458],
])
SKEWNESS_GOLDEN = [0.34231, 0.370487, 0.383957, 0.385706, 0.380047]


class TestMeanRiskSkew:
    def test_two_asset_pinned_solution(self):
        # m = [1, 0], e_A = [1, 1], r = 0.3: both constraints pin x = [.3, .7]
        model = nr.NmvmModel(mu=np.zeros(2), gamma=[1.0, 0.0],
                             sigma=np.eye(2), mixing=Gamma(1.0, 1.0))
        tm = transform(model, mode="skew")
        sol = solve_mean_risk_skew(tm, 0.3)
        assert np.allclose(sol.x_star, [0.3, 0.7], atol=1e-12)

    def test_constraints_satisfied(self, tm_skew):
        sol = solve_mean_risk_skew(tm_skew, 0.002)
        assert float(sol.x_star @ tm_skew.m) == pytest.approx(0.002,
                                                              abs=1e-10)
        assert float(sol.x_star @ tm_skew.e_a) == pytest.approx(1.0,
                                                                abs=1e-10)
        assert sol.omega_star.sum() == pytest.approx(1.0, abs=1e-10)
        assert sol.achieved_return == pytest.approx(0.002, abs=1e-12)

    def test_kkt_residual(self, tm_skew):
        sol = solve_mean_risk_skew(tm_skew, 0.002)
        residual = 2.0 * sol.x_star - sol.s * tm_skew.m - sol.t * tm_skew.e_a
        scale = max(1.0, float(np.linalg.norm(sol.x_star)))
        assert np.abs(residual).max() <= 1e-10 * scale

    def test_least_norm_against_random_feasible(self, tm_skew):
        sol = solve_mean_risk_skew(tm_skew, 0.002)
        basis = np.column_stack([tm_skew.m, tm_skew.e_a])
        # null-space directions of the two constraints
        q, _ = np.linalg.qr(basis, mode="complete")
        null = q[:, 2:]
        rng = np.random.default_rng(1234)
        for _ in range(100):
            x = sol.x_star + null @ rng.normal(size=null.shape[1])
            assert np.linalg.norm(x) >= np.linalg.norm(sol.x_star) - 1e-12

    def test_brute_force_norm_minimum(self, tm_skew):
        # independent check: optimize over the feasible affine set directly
        sol = solve_mean_risk_skew(tm_skew, 0.0025)
        basis = np.column_stack([tm_skew.m, tm_skew.e_a])
        q, _ = np.linalg.qr(basis, mode="complete")
        null = q[:, 2:]
        res = _sopt.minimize(
            lambda c: np.linalg.norm(sol.x_star + null @ c) ** 2,
            np.zeros(null.shape[1]), method="Nelder-Mead",
            options={"xatol": 1e-12, "fatol": 1e-14})
        assert np.linalg.norm(null @ res.x) <= 1e-5

    def test_golden_weights(self, tm_skew):
        for j, r in enumerate(R_GRID):
            sol = solve_mean_risk_skew(tm_skew, r)
            assert np.abs(sol.omega_star - WEIGHTS_GOLDEN[:, j]).max() <= 5e-3

    def test_golden_skewness(self, tm_skew):
        for j, r in enumerate(R_GRID):
            sol = solve_mean_risk_skew(tm_skew, r)
            assert sol.skewness == pytest.approx(SKEWNESS_GOLDEN[j],
                                                 abs=1e-3)

    def test_requires_skew_mode(self, tm_location):
        with pytest.raises(ValueError):
            solve_mean_risk_skew(tm_location, 0.002)

    def test_parallel_constraints(self):
        # gamma proportional to ones makes m parallel to e_A under Sigma = I
        model = nr.NmvmModel(mu=np.zeros(3), gamma=np.ones(3) * 0.2,
                             sigma=np.eye(3), mixing=Gamma(1.0, 1.0))
        tm = transform(model, mode="skew")
        with pytest.raises(DegenerateConstraintsError):
            solve_mean_risk_skew(tm, 0.01)

    def test_warns_when_condition_violated(self):
        # lognormal-free construction: a GIG with psi = 0 can fail the
        # condition; use a law with negative condition value instead
        class Shrunk(Gamma):
            def moments(self):
                mm = super().moments()
                return nr.MixingMoments(ez=mm.ez, ez2=mm.ez2, ez3=mm.ez3,
                                        var=mm.var, m3=mm.m3 * 0.2, m4=mm.m4)

        model = nr.NmvmModel(mu=np.zeros(2), gamma=[0.1, 0.05],
                             sigma=[[0.02, 0.0], [0.0, 0.03]],
                             mixing=Shrunk(2.0, 2.0))
        tm = transform(model, mode="skew")
        with pytest.warns(UserWarning):
            solve_mean_risk_skew(tm, 0.01)

    def test_factorization_invariance(self, skew_model):
        solutions = []
        for method in ("symmetric_sqrt", "cholesky"):
            tm = transform(skew_model, method, mode="skew")
            solutions.append(solve_mean_risk_skew(tm, 0.002).omega_star)
        assert np.abs(solutions[0] - solutions[1]).max() <= 1e-9

    def test_skewness_roundtrip_through_weights(self, skew_model, tm_skew):
        # recompute skewness from omega via a fresh transform of the model
        sol = solve_mean_risk_skew(tm_skew, 0.0024)
        tm2 = transform(skew_model, "cholesky", mode="skew")
        x2 = tm2.x_from_weights(sol.omega_star)
        assert portfolio_moments(tm2, x2).skew == pytest.approx(sol.skewness,
                                                                abs=1e-12)


class TestFrontier:
    def test_single_point_matches_composition(self, tm_skew):
        pts = frontier(tm_skew, [0.002], beta=0.05)
        assert len(pts) == 1
        sol = solve_mean_risk_skew(tm_skew, 0.002)
        direct = portfolio_risk_exact(tm_skew, sol.x_star, "cvar", 0.05).value
        assert pts[0].cvar == pytest.approx(direct, abs=1e-12)
        assert pts[0].skewness == pytest.approx(sol.skewness, abs=1e-12)
        assert np.allclose(pts[0].weights, sol.omega_star, atol=1e-12)
        assert pts[0].error is None

    def test_grid_order_preserved(self, tm_skew):
        grid = [0.001, 0.0015, 0.002]
        pts = frontier(tm_skew, grid, beta=0.1)
        assert [p.target_return for p in pts] == grid

    def test_cvar_monotone_away_from_minimum(self, tm_skew):
        res = _sopt.minimize_scalar(
            lambda r: frontier(tm_skew, [r], beta=0.05)[0].cvar,
            method="golden", bracket=(-0.001, 0.001, 0.005),
            options={"xtol": 1e-6})
        r_minvar = float(res.x)
        grid = np.linspace(r_minvar - 0.004, r_minvar + 0.004, 9)
        cvars = [p.cvar for p in frontier(tm_skew, grid, beta=0.05)]
        mid = 4
        for i in range(mid, len(grid) - 1):
            assert cvars[i + 1] >= cvars[i] - 1e-10
        for i in range(mid, 0, -1):
            assert cvars[i - 1] >= cvars[i] - 1e-10

    def test_failed_points_marked(self):
        model = nr.NmvmModel(mu=np.zeros(3), gamma=np.ones(3) * 0.2,
                             sigma=np.eye(3), mixing=Gamma(1.0, 1.0))
        tm = transform(model, mode="skew")
        pts = frontier(tm, [0.01, 0.02], beta=0.05)
        assert all(p.error is not None for p in pts)
        assert all(math.isnan(p.cvar) for p in pts)


class TestMeanRiskReduced:
    def test_weakly_improves_on_anchor(self, location_model):
        # location forced to zero: the least-norm portfolio at the return
        # floor is feasible, so the optimizer must do at least as well
        model = nr.NmvmModel(mu=np.zeros(5), gamma=location_model.gamma,
                             sigma=location_model.sigma,
                             mixing=location_model.mixing)
        tm_sk = transform(model, mode="skew")
        anchor = solve_mean_risk_skew(tm_sk, 0.002)
        anchor_risk = portfolio_risk_exact(tm_sk, anchor.x_star, "cvar",
                                           0.05).value
        tm_mr = transform(model, mode="mean_risk")
        sol = solve_mean_risk_reduced(tm_mr, "cvar", 0.05,
                                      k=anchor.achieved_return)
        got = portfolio_risk_exact(tm_mr, sol.x_star, "cvar", 0.05).value
        assert got <= anchor_risk + 1e-6
        assert float(sol.x_star @ tm_mr.e_a) == pytest.approx(1.0, abs=1e-8)
        assert sol.mu_tilde_star + sol.gamma_tilde_star * \
            tm_mr.mixing.moments().ez >= anchor.achieved_return - 1e-9

    def test_two_dimensional_search(self, tm_location):
        # both reduced coordinates active; floor set near the anchor return
        ez = tm_location.mixing.moments().ez
        k = 0.0015
        sol = solve_mean_risk_reduced(tm_location, "var", 0.1, k=k,
                                      grid_size=13)
        assert float(sol.x_star @ tm_location.e_a) == pytest.approx(1.0,
                                                                    abs=1e-8)
        assert sol.mu_tilde_star + sol.gamma_tilde_star * ez >= k - 1e-9
        assert sol.g_value == pytest.approx(
            float(sol.x_star @ sol.x_star), abs=1e-10)
        # beats the equality-constrained least-norm anchor
        mm = float(tm_location.m @ tm_location.m)
        me = float(tm_location.m @ tm_location.e_a)
        ee = float(tm_location.e_a @ tm_location.e_a)
        c = np.linalg.solve(np.array([[mm, me], [me, ee]]), [k, 1.0])
        x_anchor = c[0] * tm_location.m + c[1] * tm_location.e_a
        anchor_risk = portfolio_risk_exact(tm_location, x_anchor, "var",
                                           0.1).value
        got = portfolio_risk_exact(tm_location, sol.x_star, "var", 0.1).value
        assert got <= anchor_risk + 1e-6

    def test_elliptical_case_matches_minimum_variance(self):
        # gamma = 0 and mu = 0: risk is norm times a constant, so the
        # solution is the minimum-variance portfolio
        sigma = np.array([[0.04, 0.01, 0.004],
                          [0.01, 0.09, -0.006],
                          [0.004, -0.006, 0.0225]])
        model = nr.NmvmModel(mu=np.zeros(3), gamma=np.zeros(3), sigma=sigma,
                             mixing=Gig(lam=-0.5, chi=1.44, psi=1.44))
        tm = transform(model, mode="mean_risk")
        sol = solve_mean_risk_reduced(tm, "cvar", 0.05, k=-1.0)
        omega = tm.weights_from_x(sol.x_star)
        ones = np.ones(3)
        omega_mv = np.linalg.solve(sigma, ones)
        omega_mv /= omega_mv.sum()
        assert np.abs(omega - omega_mv).max() <= 1e-6

    def test_gram_spd_for_reference_model(self, tm_location):
        basis = np.column_stack([tm_location.mu0, tm_location.gamma0,
                                 tm_location.e_a])
        eigvals = np.linalg.eigvalsh(basis.T @ basis)
        assert eigvals[0] > 0.0

    def test_singular_gram_rejected(self):
        # mu parallel to gamma in x-space triggers the collinearity error
        model = nr.NmvmModel(mu=[0.02, 0.02], gamma=[0.04, 0.04],
                             sigma=np.eye(2), mixing=Gamma(1.0, 1.0))
        tm = transform(model, mode="mean_risk")
        with pytest.raises(SingularGramError):
            solve_mean_risk_reduced(tm, "cvar", 0.1, k=0.0)

    def test_requires_mean_risk_mode(self, tm_skew):
        with pytest.raises(ValueError):
            solve_mean_risk_reduced(tm_skew, "cvar", 0.05, k=0.002)


class TestHypothesisCheck:
    def test_gamma_mixing(self):
        model = nr.NmvmModel(mu=np.zeros(2), gamma=[0.1, 0.2],
                             sigma=np.eye(2), mixing=Gamma(1.7, 0.845))
        check = check_skew_monotonicity(transform(model, mode="skew"))
        assert check.condition_value == pytest.approx(0.0, abs=1e-14)
        assert check.monotone_on_grid

    def test_inverse_gaussian_mixing(self):
        d, g = 0.9, 1.4
        model = nr.NmvmModel(mu=np.zeros(2), gamma=[0.1, 0.2],
                             sigma=np.eye(2),
                             mixing=InverseGaussian(delta=d, gamma_ig=g))
        check = check_skew_monotonicity(transform(model, mode="skew"))
        assert check.condition_value == pytest.approx(d * d / g ** 6,
                                                      rel=1e-12)
        assert check.monotone_on_grid

    def test_reference_gig(self, tm_skew):
        check = check_skew_monotonicity(tm_skew)
        assert check.condition_value > 0.0
        assert check.monotone_on_grid
