"""Mixing distributions for normal mean-variance mixtures.

A mixing law is a nonnegative random variable Z with a density on (0, inf)
(except the degenerate point mass), closed-form moments, an expectation
operator used by the risk quadratures, and a seeded sampler for Monte Carlo
checks. The generalized inverse Gaussian family GIG(lam, chi, psi) covers the
hyperbolic-type models; Gamma, inverse Gaussian, and exponential laws are the
classical special cases.

GIG parameter domain: chi > 0, psi >= 0 when lam < 0; chi > 0, psi > 0 when
lam = 0; chi >= 0, psi > 0 when lam > 0. The boundary cases psi = 0 and
chi = 0 are the inverse-gamma and gamma limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats as _sstats

from .mathkit import QuadratureSpec, integrate_semi_infinite, log_bessel_k

__all__ = [
    "MixingLaw",
    "MixingMoments",
    "MomentError",
    "Gig",
    "Gamma",
    "InverseGaussian",
    "Exponential",
    "Degenerate",
    "skew_condition",
]


class MomentError(ValueError):
    """A requested moment does not exist for the law."""


@dataclass(frozen=True)
class MixingMoments:
    """First three raw moments plus the central third/fourth moments.

    m4 is None when the law has no finite fourth moment.
    """

    ez: float
    ez2: float
    ez3: float
    var: float
    m3: float
    m4: float | None = None


def _central_moments(e1: float, e2: float, e3: float,
                     e4: float | None) -> MixingMoments:
    var = e2 - e1 * e1
    m3 = e3 - 3.0 * e2 * e1 + 2.0 * e1 ** 3
    m4 = None
    if e4 is not None:
        m4 = e4 - 4.0 * e3 * e1 + 6.0 * e2 * e1 * e1 - 3.0 * e1 ** 4
    return MixingMoments(ez=e1, ez2=e2, ez3=e3, var=var, m3=m3, m4=m4)


class MixingLaw:
    """Common interface of the mixing distributions. Instances are immutable."""

    def density(self, w):
        """Density at w (vectorized); zero for w <= 0."""
        raise NotImplementedError

    def moments(self) -> MixingMoments:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n i.i.d. draws using the caller-owned generator."""
        raise NotImplementedError

    def expect(self, f: Callable, spec: QuadratureSpec | None = None) -> float:
        """E[f(Z)] by quadrature of f against the density."""
        return integrate_semi_infinite(lambda s: f(s) * self.density(s), spec)

    @staticmethod
    def _check_count(n: int):
        if n < 1:
            raise ValueError(f"sample count must be >= 1, got {n}")


@dataclass(frozen=True)
class Gig(MixingLaw):
    """Generalized inverse Gaussian law GIG(lam, chi, psi)."""

    lam: float
    chi: float
    psi: float

    def __post_init__(self):
        lam, chi, psi = self.lam, self.chi, self.psi
        if chi < 0.0 or psi < 0.0:
            raise ValueError(f"GIG requires chi, psi >= 0, got ({chi}, {psi})")
        if lam < 0.0 and chi <= 0.0:
            raise ValueError("GIG with lam < 0 requires chi > 0")
        if lam == 0.0 and (chi <= 0.0 or psi <= 0.0):
            raise ValueError("GIG with lam = 0 requires chi > 0 and psi > 0")
        if lam > 0.0 and psi <= 0.0:
            raise ValueError("GIG with lam > 0 requires psi > 0")

    def density(self, w):
        w = np.asarray(w, dtype=float)
        out = np.zeros_like(w)
        pos = w > 0.0
        if np.any(pos):
            wp = w[pos]
            with np.errstate(under="ignore"):
                out[pos] = np.exp(self._log_density_pos(wp))
        return out if out.ndim else float(out)

    def _log_density_pos(self, w):
        lam, chi, psi = self.lam, self.chi, self.psi
        if chi > 0.0 and psi > 0.0:
            omega = math.sqrt(chi * psi)
            log_norm = (0.5 * lam * (math.log(psi) - math.log(chi))
                        - math.log(2.0) - float(log_bessel_k(lam, omega)))
            return log_norm + (lam - 1.0) * np.log(w) - 0.5 * (chi / w + psi * w)
        if chi == 0.0:  # Gamma(lam, psi/2)
            rate = 0.5 * psi
            return (lam * math.log(rate) - math.lgamma(lam)
                    + (lam - 1.0) * np.log(w) - rate * w)
        # psi == 0: inverse gamma with shape -lam, scale chi/2
        shape, scale = -self.lam, 0.5 * self.chi
        return (shape * math.log(scale) - math.lgamma(shape)
                + (self.lam - 1.0) * np.log(w) - scale / w)

    def raw_moment(self, r: float) -> float:
        """E[Z^r]; raises MomentError when the moment is infinite."""
        lam, chi, psi = self.lam, self.chi, self.psi
        if chi > 0.0 and psi > 0.0:
            omega = math.sqrt(chi * psi)
            log_ratio = float(log_bessel_k(lam + r, omega) - log_bessel_k(lam, omega))
            return (chi / psi) ** (0.5 * r) * math.exp(log_ratio)
        if chi == 0.0:  # Gamma(lam, psi/2)
            if lam + r <= 0.0:
                raise MomentError(f"E[Z^{r}] does not exist for Gamma({lam}, ...)")
            return math.exp(math.lgamma(lam + r) - math.lgamma(lam)) / (0.5 * psi) ** r
        # psi == 0: inverse gamma(-lam, chi/2); E[Z^r] finite iff r < -lam
        if r >= -lam:
            raise MomentError(
                f"E[Z^{r}] does not exist for GIG({lam}, {chi}, 0)")
        return (0.5 * chi) ** r * math.exp(math.lgamma(-lam - r) - math.lgamma(-lam))

    def moments(self) -> MixingMoments:
        e1 = self.raw_moment(1.0)
        e2 = self.raw_moment(2.0)
        e3 = self.raw_moment(3.0)
        try:
            e4 = self.raw_moment(4.0)
        except MomentError:
            e4 = None
        return _central_moments(e1, e2, e3, e4)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        self._check_count(n)
        lam, chi, psi = self.lam, self.chi, self.psi
        if chi > 0.0 and psi > 0.0:
            return _sstats.geninvgauss.rvs(
                lam, math.sqrt(chi * psi), scale=math.sqrt(chi / psi),
                size=n, random_state=rng)
        if chi == 0.0:
            return rng.gamma(lam, 2.0 / psi, size=n)
        return 0.5 * chi / rng.gamma(-lam, 1.0, size=n)


@dataclass(frozen=True)
class Gamma(MixingLaw):
    """Gamma law with shape/rate parametrization; density x^(shape-1) e^(-rate x)."""

    shape: float
    rate: float

    def __post_init__(self):
        if self.shape <= 0.0 or self.rate <= 0.0:
            raise ValueError(
                f"Gamma requires shape, rate > 0, got ({self.shape}, {self.rate})")

    def density(self, w):
        w = np.asarray(w, dtype=float)
        out = np.zeros_like(w)
        pos = w > 0.0
        if np.any(pos):
            wp = w[pos]
            with np.errstate(under="ignore"):
                out[pos] = np.exp(self.shape * math.log(self.rate)
                                  - math.lgamma(self.shape)
                                  + (self.shape - 1.0) * np.log(wp)
                                  - self.rate * wp)
        return out if out.ndim else float(out)

    def moments(self) -> MixingMoments:
        a, b = self.shape, self.rate
        ez = a / b
        var = a / b ** 2
        m3 = 2.0 * a / b ** 3
        m4 = 3.0 * a * (a + 2.0) / b ** 4
        ez2 = var + ez * ez
        ez3 = a * (a + 1.0) * (a + 2.0) / b ** 3
        return MixingMoments(ez=ez, ez2=ez2, ez3=ez3, var=var, m3=m3, m4=m4)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        self._check_count(n)
        return rng.gamma(self.shape, 1.0 / self.rate, size=n)


class Exponential(Gamma):
    """Exp(1) mixing, i.e. Gamma(1, 1); the asymmetric-Laplace case."""

    def __init__(self):
        super().__init__(shape=1.0, rate=1.0)


@dataclass(frozen=True)
class InverseGaussian(MixingLaw):
    """Inverse Gaussian law with density
    (delta/sqrt(2 pi)) e^(delta*gamma_ig) z^(-3/2) e^(-(delta^2/z + gamma_ig^2 z)/2).

    Coincides with GIG(-1/2, delta^2, gamma_ig^2).
    """

    delta: float
    gamma_ig: float

    def __post_init__(self):
        if self.delta <= 0.0 or self.gamma_ig <= 0.0:
            raise ValueError(
                f"InverseGaussian requires delta, gamma_ig > 0, "
                f"got ({self.delta}, {self.gamma_ig})")

    def density(self, w):
        d, g = self.delta, self.gamma_ig
        w = np.asarray(w, dtype=float)
        out = np.zeros_like(w)
        pos = w > 0.0
        if np.any(pos):
            wp = w[pos]
            with np.errstate(under="ignore"):
                out[pos] = (d / math.sqrt(2.0 * math.pi) * np.exp(
                    d * g - 1.5 * np.log(wp) - 0.5 * (d * d / wp + g * g * wp)))
        return out if out.ndim else float(out)

    def moments(self) -> MixingMoments:
        d, g = self.delta, self.gamma_ig
        ez = d / g
        var = d / g ** 3
        m3 = 3.0 * d / g ** 5
        m4 = 15.0 * d / g ** 7 + 3.0 * d * d / g ** 6
        ez2 = var + ez * ez
        ez3 = 3.0 * d / g ** 5 + 3.0 * d * d / g ** 4 + (d / g) ** 3
        return MixingMoments(ez=ez, ez2=ez2, ez3=ez3, var=var, m3=m3, m4=m4)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # rng.wald is the Michael-Schucany-Haas transform sampler
        self._check_count(n)
        return rng.wald(self.delta / self.gamma_ig, self.delta ** 2, size=n)


@dataclass(frozen=True)
class Degenerate(MixingLaw):
    """Point mass at 1; realizes the plain Gaussian / elliptical reduction.

    Has no Lebesgue density: density() is zero away from 1 (inf at 1) and
    expectations are evaluated exactly as f(1).
    """

    def density(self, w):
        w = np.asarray(w, dtype=float)
        out = np.where(w == 1.0, np.inf, 0.0)
        return out if out.ndim else float(out)

    def moments(self) -> MixingMoments:
        return MixingMoments(ez=1.0, ez2=1.0, ez3=1.0, var=0.0, m3=0.0, m4=0.0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        self._check_count(n)
        return np.ones(n)

    def expect(self, f: Callable, spec: QuadratureSpec | None = None) -> float:
        return float(np.asarray(f(np.array([1.0])))[0])


def skew_condition(law: MixingLaw) -> float:
    """m3(Z) * EZ - 2 * Var(Z)^2.

    A nonnegative value certifies that portfolio skewness is nondecreasing in
    the alignment angle, the hypothesis of the closed-form mean-risk-skewness
    solver. Exactly zero for every Gamma law; delta^2/gamma_ig^6 for the
    inverse Gaussian.
    """
    mm = law.moments()
    return mm.m3 * mm.ez - 2.0 * mm.var ** 2
