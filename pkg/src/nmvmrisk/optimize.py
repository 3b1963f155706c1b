"""Portfolio optimizers built on the x-coordinate reduction.

The mean-risk-skewness problem with constraints x^T m = r, x^T e_A = 1
collapses to min ||x||^2 whenever the mixing law keeps skewness monotone in
the alignment angle; the solution is the two-constraint least-norm point
x = (s/2) m + (t/2) e_A. The mean-risk problem with a return floor reduces to
two dimensions (the coordinates of x along mu0 and gamma0), optimized
numerically on a coarse grid plus local refinement.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize as _sopt

from .mathkit import QuadratureSpec
from .mixing import skew_condition
from .nmvm import TransformedModel, portfolio_moments
from .risk import YaLaw, portfolio_risk_exact, risk_ya

__all__ = [
    "DegenerateConstraintsError",
    "SingularGramError",
    "QuadraticSolution",
    "FrontierPoint",
    "ReducedSolution",
    "HypothesisCheck",
    "solve_mean_risk_skew",
    "frontier",
    "solve_mean_risk_reduced",
    "check_skew_monotonicity",
]


class DegenerateConstraintsError(ValueError):
    """The constraint vectors m and e_A are (numerically) parallel."""


class SingularGramError(ValueError):
    """The Gram matrix of (mu0, gamma0, e_A) is numerically singular."""


@dataclass(frozen=True)
class QuadraticSolution:
    """Least-norm solution of the two-constraint quadratic program.

    s and t are the multipliers in the stationarity identity
    2 x = s m + t e_A; x_star itself equals (s/2) m + (t/2) e_A.
    """

    x_star: np.ndarray
    omega_star: np.ndarray
    s: float
    t: float
    achieved_return: float
    skewness: float
    risk_value: float | None = None


@dataclass(frozen=True)
class FrontierPoint:
    target_return: float
    cvar: float
    skewness: float
    weights: np.ndarray
    error: str | None = None


@dataclass(frozen=True)
class ReducedSolution:
    mu_tilde_star: float
    gamma_tilde_star: float
    x_star: np.ndarray
    g_value: float


@dataclass(frozen=True)
class HypothesisCheck:
    condition_value: float
    monotone_on_grid: bool


def solve_mean_risk_skew(tm: TransformedModel, r: float) -> QuadraticSolution:
    """Closed-form solution of min x^T x s.t. x^T m = r, x^T e_A = 1.

    Requires a transform in "skew" mode (m = gamma0 * EZ). Warns, without
    failing, when the mixing law does not certify the skewness-monotonicity
    condition, since the least-norm portfolio is then still well defined but
    no longer provably skewness-optimal.
    """
    if tm.mode != "skew":
        raise ValueError("solve_mean_risk_skew requires a transform with mode='skew'")
    cond = skew_condition(tm.mixing)
    if cond < 0.0:
        warnings.warn(
            f"mixing law violates the skewness condition ({cond:.3e} < 0); "
            "solution minimizes risk but may not maximize skewness",
            stacklevel=2)
    m, e_a = tm.m, tm.e_a
    mm = float(m @ m)
    ee = float(e_a @ e_a)
    me = float(m @ e_a)
    det = mm * ee - me * me
    scale = mm * ee
    if abs(det) < 1e-14 * max(scale, 1e-300):
        raise DegenerateConstraintsError(
            f"constraint vectors are parallel: det={det:.3e}, scale={scale:.3e}")
    s = 2.0 * (r * ee - me) / det
    t = 2.0 * (mm - r * me) / det
    x = 0.5 * s * m + 0.5 * t * e_a
    omega = tm.weights_from_x(x)
    return QuadraticSolution(
        x_star=x, omega_star=omega, s=s, t=t,
        achieved_return=float(x @ m),
        skewness=portfolio_moments(tm, x).skew)


def frontier(tm: TransformedModel, r_grid, beta: float,
             spec: QuadratureSpec | None = None) -> list[FrontierPoint]:
    """Sweep the least-norm solutions over a return grid, attaching the exact
    CVaR and the skewness of each point. Failed grid points are emitted with
    their error message instead of aborting the sweep."""
    points = []
    n = tm.n
    for r in np.asarray(r_grid, dtype=float):
        try:
            sol = solve_mean_risk_skew(tm, float(r))
            cvar = portfolio_risk_exact(tm, sol.x_star, "cvar", beta, spec).value
            points.append(FrontierPoint(
                target_return=float(r), cvar=cvar, skewness=sol.skewness,
                weights=sol.omega_star))
        except (ValueError, ArithmeticError) as exc:
            points.append(FrontierPoint(
                target_return=float(r), cvar=math.nan, skewness=math.nan,
                weights=np.full(n, math.nan), error=str(exc)))
    return points


def _reduced_objective_factory(tm, g_inv, has_mu, has_gamma, measure, beta,
                               ez, k, spec):
    b = tm.gamma0_norm

    def coords(mu_t: float, gam_t: float) -> np.ndarray:
        parts = []
        if has_mu:
            parts.append(mu_t)
        if has_gamma:
            parts.append(gam_t)
        parts.append(1.0)
        return np.array(parts)

    def objective(mu_t: float, gam_t: float) -> float:
        if mu_t + gam_t * ez < k - 1e-12 * max(1.0, abs(k)):
            return math.inf
        v = coords(mu_t, gam_t)
        g = float(v @ g_inv @ v)
        if g <= 0.0:
            return math.inf
        sg = math.sqrt(g)
        a_eff = 0.0 if sg == 0.0 else min(max(gam_t / sg, -b), b)
        return -mu_t + sg * risk_ya(YaLaw(a_eff, tm.mixing), measure, beta, spec)

    return coords, objective


def solve_mean_risk_reduced(tm: TransformedModel, measure: str, beta: float,
                            k: float, spec: QuadratureSpec | None = None,
                            grid_size: int = 41) -> ReducedSolution:
    """Minimize portfolio risk subject to x^T e_A = 1 and expected return >= k.

    Works in the two reduced coordinates (x^T mu0, x^T gamma0); identically
    zero direction vectors drop out of the basis (the elliptical and
    no-location special cases), while genuinely collinear ones raise
    SingularGramError. Coarse grid search over a data-driven box followed by
    nested one-dimensional refinements from the best points, seeded with the
    least-norm portfolio at the return floor so the result never falls behind
    that anchor.
    """
    if tm.mode != "mean_risk":
        raise ValueError(
            "solve_mean_risk_reduced requires a transform with mode='mean_risk'")
    if measure not in ("var", "cvar"):
        raise ValueError(f"measure must be 'var' or 'cvar', got {measure!r}")
    ez = tm.mixing.moments().ez
    e_norm = float(np.linalg.norm(tm.e_a))
    zero_tol = 1e-13 * max(e_norm, 1.0)
    has_mu = float(np.linalg.norm(tm.mu0)) > zero_tol
    has_gamma = tm.gamma0_norm > zero_tol
    cols = []
    if has_mu:
        cols.append(tm.mu0)
    if has_gamma:
        cols.append(tm.gamma0)
    cols.append(tm.e_a)
    basis = np.column_stack(cols)
    gram = basis.T @ basis
    if np.linalg.cond(gram) > 1e14:
        raise SingularGramError(
            f"direction vectors are collinear: cond(G)={np.linalg.cond(gram):.3e}")
    g_inv = np.linalg.inv(gram)
    coords, objective = _reduced_objective_factory(
        tm, g_inv, has_mu, has_gamma, measure, beta, ez, k, spec)

    # data-driven box: a few multiples of the least-norm feasible scale
    x_mv_norm = 1.0 / e_norm
    m_norm = float(np.linalg.norm(tm.m))
    reach = 4.0 * (x_mv_norm + (abs(k) + 1e-9) / max(m_norm, 1e-12))
    mu_center = float(tm.e_a @ tm.mu0) / e_norm ** 2
    gam_center = float(tm.e_a @ tm.gamma0) / e_norm ** 2
    mu_half = float(np.linalg.norm(tm.mu0)) * reach if has_mu else 0.0
    gam_half = tm.gamma0_norm * reach if has_gamma else 0.0

    candidates: list[tuple[float, float, float]] = []

    def consider(mu_t: float, gam_t: float):
        val = objective(mu_t, gam_t)
        if math.isfinite(val):
            candidates.append((val, mu_t, gam_t))

    mu_grid = (np.linspace(mu_center - mu_half, mu_center + mu_half, grid_size)
               if has_mu else np.array([0.0]))
    gam_grid = (np.linspace(gam_center - gam_half, gam_center + gam_half,
                            grid_size) if has_gamma else np.array([0.0]))
    for mu_t in mu_grid:
        for gam_t in gam_grid:
            consider(float(mu_t), float(gam_t))

    # anchor: least-norm x with x^T m = k, x^T e_A = 1 (feasible with equality)
    mm = float(tm.m @ tm.m)
    me = float(tm.m @ tm.e_a)
    ee = e_norm ** 2
    det = mm * ee - me * me
    if abs(det) > 1e-14 * max(mm * ee, 1e-300):
        c = np.linalg.solve(np.array([[mm, me], [me, ee]]), np.array([k, 1.0]))
        x_anchor = c[0] * tm.m + c[1] * tm.e_a
        consider(float(x_anchor @ tm.mu0) if has_mu else 0.0,
                 float(x_anchor @ tm.gamma0) if has_gamma else 0.0)
    if not candidates:
        raise ArithmeticError(
            "no feasible point found in the search box; check k")
    candidates.sort(key=lambda trip: trip[0])

    def refine(mu_t: float, gam_t: float, val: float):
        width_mu = max(mu_half / (grid_size - 1), 1e-9) if has_mu else 0.0
        width_gam = max(gam_half / (grid_size - 1), 1e-9) if has_gamma else 0.0
        for _ in range(4):
            if has_mu:
                lo = max(mu_t - 2.0 * width_mu, k - gam_t * ez)
                res = _sopt.minimize_scalar(
                    lambda v: objective(v, gam_t),
                    bounds=(lo, mu_t + 2.0 * width_mu), method="bounded",
                    options={"xatol": 1e-11})
                if res.fun < val:
                    mu_t, val = float(res.x), float(res.fun)
            if has_gamma:
                lo = gam_t - 2.0 * width_gam
                if ez > 0.0:
                    lo = max(lo, (k - mu_t) / ez)
                res = _sopt.minimize_scalar(
                    lambda v: objective(mu_t, v),
                    bounds=(lo, gam_t + 2.0 * width_gam), method="bounded",
                    options={"xatol": 1e-11})
                if res.fun < val:
                    gam_t, val = float(res.x), float(res.fun)
            width_mu *= 0.25
            width_gam *= 0.25
        return val, mu_t, gam_t

    best = candidates[0]
    for val, mu_t, gam_t in candidates[:3]:
        refined = refine(mu_t, gam_t, val)
        if refined[0] < best[0]:
            best = refined
    _, mu_star, gam_star = best
    v = coords(mu_star, gam_star)
    x_star = basis @ (g_inv @ v)
    return ReducedSolution(
        mu_tilde_star=mu_star if has_mu else 0.0,
        gamma_tilde_star=gam_star if has_gamma else 0.0,
        x_star=x_star,
        g_value=float(v @ g_inv @ v))


def check_skew_monotonicity(tm: TransformedModel,
                            grid_points: int = 201) -> HypothesisCheck:
    """Evaluate the skewness condition and scan the skewness derivative.

    Returns the value of m3(Z) EZ - 2 Var(Z)^2 together with a grid check
    that the derivative of skewness in phi is nonnegative on [-1, 1].
    """
    from .nmvm import skew_derivative

    cond = skew_condition(tm.mixing)
    grid = np.linspace(-1.0, 1.0, grid_points)
    monotone = all(skew_derivative(tm, float(phi)) >= -1e-12 for phi in grid)
    return HypothesisCheck(condition_value=cond, monotone_on_grid=monotone)
