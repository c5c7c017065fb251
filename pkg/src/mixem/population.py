"""Population EM for the symmetric two-component Laplacian mixture.

Data follow ``p(x) = 0.5 L(x; mu*) + 0.5 L(x; -mu*)`` with unit scale, and EM
estimates ``mu*`` through the scalar map ``lambda -> M(lambda, mu*)``. This
module evaluates that map by quadrature (two algebraically equivalent forms),
by its closed form on ``0 < lambda < eta``, and provides the closed-form
derivatives and contraction constants that govern the iteration.

A general scale ``b`` reduces to ``b = 1`` by rescaling, so only unit scale is
implemented.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from scipy.integrate import IntegrationWarning, quad

from .errors import InvalidArgumentError, NumericalFailureError


@dataclass(frozen=True)
class QuadratureSettings:
    """Accuracy knobs for the adaptive quadrature behind ``M``.

    Each panel between integrand kinks is integrated by adaptive
    Gauss-Kronrod (QUADPACK ``qags``) to ``abs_tol``/``rel_tol``; tails beyond
    ``tail_halfwidth`` of the sampling mean are dropped (mass ``< e^-40``).
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    tail_halfwidth: float = 40.0
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise InvalidArgumentError("quadrature tolerances must be positive")
        if not self.tail_halfwidth >= 10:
            raise InvalidArgumentError("tail_halfwidth must be at least 10")
        if self.max_subdivisions < 1:
            raise InvalidArgumentError("max_subdivisions must be positive")

    def breakpoints(self, lam: float, mu: float, lo: float, hi: float) -> list[float]:
        """Sorted, de-duplicated kinks ``{-lam, lam, -mu, mu}`` strictly inside (lo, hi)."""
        pts = sorted({-lam, lam, -mu, mu})
        return [p for p in pts if lo < p < hi]


DEFAULT_SETTINGS = QuadratureSettings()


def _check_finite(**kw):
    for name, v in kw.items():
        if not math.isfinite(v):
            raise InvalidArgumentError(f"{name} must be finite, got {v}")


def _integrate(f, lo: float, hi: float, kinks: list[float], settings: QuadratureSettings) -> float:
    edges = [lo, *kinks, hi]
    total = 0.0
    err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            res = quad(
                f, a, b,
                epsabs=settings.abs_tol, epsrel=settings.rel_tol,
                limit=settings.max_subdivisions, full_output=1,
            )
        val, abserr = res[0], res[1]
        # a fourth element carries QUADPACK's failure message
        if len(res) > 3 and abserr > 10 * settings.abs_tol:
            raise NumericalFailureError(
                f"quadrature on panel [{a}, {b}] failed: {res[3]} (error estimate {abserr:.3g})",
                error_estimate=abserr,
            )
        total += val
        err += abserr
    if err > 10 * settings.abs_tol + settings.rel_tol * abs(total):
        raise NumericalFailureError(
            f"quadrature on [{lo}, {hi}] did not converge (error estimate {err:.3g})", error_estimate=err
        )
    return total


def _signed_tanh_ratio(x: float, lam: float) -> float:
    # (L(x;lam) - L(x;-lam)) / (L(x;lam) + L(x;-lam)), overflow-free
    return math.tanh(0.5 * (abs(x + lam) - abs(x - lam)))


def em_map_quadrature(lam: float, mu: float, settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """``M(lam, mu) = E_{x ~ L(x; mu)}[x (L(x;lam) - L(x;-lam)) / (L(x;lam) + L(x;-lam))]``."""
    _check_finite(lam=lam, mu=mu)

    def integrand(x):
        return x * _signed_tanh_ratio(x, lam) * 0.5 * math.exp(-abs(x - mu))

    lo, hi = mu - settings.tail_halfwidth, mu + settings.tail_halfwidth
    return _integrate(integrand, lo, hi, settings.breakpoints(lam, mu, lo, hi), settings)


def em_map_ratio_form(lam: float, mu: float, settings: QuadratureSettings = DEFAULT_SETTINGS) -> float:
    """``M`` as the EM ratio of expectations under the full symmetric mixture.

    Numerator and denominator are ``E_{p_mu}[x r(x)]`` and ``E_{p_mu}[r(x)]``
    where ``r(x) = 0.5 L(x; lam) / p_lam(x)`` is the responsibility of the
    ``+lam`` component.
    """
    _check_finite(lam=lam, mu=mu)

    def resp(x):
        # 1 / (1 + L(x;-lam)/L(x;lam)), computed from the exponent difference
        t = abs(x - lam) - abs(x + lam)
        if t > 0:
            e = math.exp(-t)
            return e / (1.0 + e)
        return 1.0 / (1.0 + math.exp(t))

    def p_mu(x):
        return 0.25 * (math.exp(-abs(x - mu)) + math.exp(-abs(x + mu)))

    a = abs(mu)
    lo, hi = -a - settings.tail_halfwidth, a + settings.tail_halfwidth
    kinks = settings.breakpoints(lam, mu, lo, hi)
    num = _integrate(lambda x: x * resp(x) * p_mu(x), lo, hi, kinks, settings)
    den = _integrate(lambda x: resp(x) * p_mu(x), lo, hi, kinks, settings)
    if not den > 1e-300:
        raise NumericalFailureError(f"vanishing denominator {den!r} in ratio form", error_estimate=None)
    return num / den


def _closed_coefficient(lam: float) -> float:
    """Coefficient ``C`` with ``M(lam, eta) = C e^-eta + tanh(lam) eta`` for eta > lam."""
    t = math.tanh(lam)
    ep, em = math.exp(lam), math.exp(-lam)
    return 0.5 * (t * (lam + 1) * em + (lam - 1) * ep + (lam + 1) * em - (lam - 1) * ep * t)


def _check_lambda_eta(lam: float, eta: float):
    _check_finite(lam=lam, eta=eta)
    if not 0 < lam < eta:
        raise InvalidArgumentError(f"closed form requires 0 < lambda < eta, got lambda={lam}, eta={eta}")


def em_map_closed(lam: float, eta: float) -> float:
    """Closed form of ``M(lam, eta)`` valid for ``0 < lam < eta``."""
    _check_lambda_eta(lam, eta)
    return _closed_coefficient(lam) * math.exp(-eta) + math.tanh(lam) * eta


def dM_deta_closed(lam: float, eta: float) -> float:
    """``d/d eta`` of :func:`em_map_closed`: ``tanh(lam) - C(lam) e^-eta``."""
    _check_lambda_eta(lam, eta)
    return math.tanh(lam) - _closed_coefficient(lam) * math.exp(-eta)


def _dM_dlambda_above(lam: float, mu: float) -> float:
    # mu < lam
    return (lam + 1) * math.exp(-lam) * math.cosh(mu) / math.cosh(lam) ** 2


def _dM_dlambda_below(lam: float, mu: float) -> float:
    # mu > lam
    s = math.exp(lam) + math.exp(-lam)
    return 2.0 / (s * s) * (math.exp(-mu) * ((lam + 1) * math.exp(-lam) - (lam - 1) * math.exp(lam)) + 2 * mu)


def dM_dlambda_closed(lam: float, mu: float) -> float:
    """``d/d lam M(lam, mu)`` for positive arguments.

    The two closed forms meet continuously at ``lam == mu``; there the
    ``mu < lam`` branch is returned after checking both agree.
    """
    _check_finite(lam=lam, mu=mu)
    if not (lam > 0 and mu > 0):
        raise InvalidArgumentError(f"derivative defined for lambda, mu > 0, got {lam}, {mu}")
    if mu < lam:
        return _dM_dlambda_above(lam, mu)
    if mu > lam:
        return _dM_dlambda_below(lam, mu)
    a, b = _dM_dlambda_above(lam, mu), _dM_dlambda_below(lam, mu)
    if abs(a - b) > 1e-10 * max(1.0, abs(a)):
        raise NumericalFailureError(f"derivative branches disagree at lambda=mu={lam}: {a} vs {b}")
    return a


def contraction_factor(t: float) -> float:
    """``2 (t e^-t + e^-t) / (e^t + e^-t)``, equivalently ``(t+1) e^-t / cosh t``."""
    return 2.0 * (t * math.exp(-t) + math.exp(-t)) / (math.exp(t) + math.exp(-t))


def contraction_constants(lambda0: float, mu_star: float) -> tuple[float, float, float]:
    """Return ``(kappa1, kappa2, kappa)`` bounding the per-step error ratio."""
    _check_finite(lambda0=lambda0, mu_star=mu_star)
    if not (lambda0 > 0 and mu_star > 0):
        raise InvalidArgumentError(f"contraction constants need lambda0, mu_star > 0, got {lambda0}, {mu_star}")
    kappa1 = (mu_star + 1) * math.exp(-mu_star) / math.cosh(mu_star)
    kappa2 = contraction_factor(lambda0)
    return kappa1, kappa2, max(kappa1, kappa2)


@dataclass
class PopulationTrajectory:
    mu_star: float
    lambda0: float
    iterates: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    kappa1: float | None = None
    kappa2: float | None = None
    kappa: float | None = None
    converged: bool = False

    @property
    def final(self) -> float:
        return self.iterates[-1]

    def abs_errors(self) -> list[float]:
        return [abs(v - self.mu_star) for v in self.iterates]

    def summary(self) -> dict:
        return {
            "mu_star": self.mu_star,
            "lambda0": self.lambda0,
            "kappa1": self.kappa1,
            "kappa2": self.kappa2,
            "kappa": self.kappa,
            "converged": self.converged,
        }


def run_population_em(
    lambda0: float,
    mu_star: float,
    max_iters: int = 100,
    tol: float = 1e-10,
    settings: QuadratureSettings = DEFAULT_SETTINGS,
) -> PopulationTrajectory:
    """Iterate ``lam <- M(lam, mu_star)`` until ``|lam - mu_star| < tol`` or ``max_iters`` steps."""
    _check_finite(lambda0=lambda0, mu_star=mu_star)
    if max_iters < 1:
        raise InvalidArgumentError("max_iters must be at least 1")
    if not tol > 0:
        raise InvalidArgumentError("tol must be positive")
    traj = PopulationTrajectory(mu_star=float(mu_star), lambda0=float(lambda0), iterates=[float(lambda0)])
    if lambda0 > 0 and mu_star > 0:
        traj.kappa1, traj.kappa2, traj.kappa = contraction_constants(lambda0, mu_star)

    lam = float(lambda0)
    for _ in range(max_iters):
        err = abs(lam - mu_star)
        if err < tol:
            traj.converged = True
            break
        nxt = em_map_quadrature(lam, mu_star, settings)
        traj.ratios.append(abs(nxt - mu_star) / err)
        traj.iterates.append(nxt)
        lam = nxt
    else:
        traj.converged = abs(lam - mu_star) < tol
    return traj
