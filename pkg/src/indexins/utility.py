"""Exponential-utility demand machinery.

Empirical Laplace transforms of the annual loss, exponential premiums,
calibration of the shifted-exponential risk-aversion law, the index-vs-
indemnity preference test, and expected demand counts.

Unconditional expectations default to the annual mixture (no claim with
probability ``1 - p``); the claims-only mode drops the atom and is the one
used to calibrate the aversion shift from an accepted market premium.
All functions are pure over immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal, Optional, Sequence

import numpy as np

from .data import ClaimDataset
from .errors import ConfigError, DomainError, InfeasibleError
from .models import CondLaplaceModel, PayoutModel, alpha_guard, cond_laplace, cond_mean, feature_matrix
from .stats import find_root_bracketed

__all__ = [
    "AversionDistribution",
    "PricingParams",
    "laplace_psi",
    "laplace_F",
    "F_inverse",
    "exponential_premium",
    "calibrate_alpha_minus",
    "calibrate_lambda",
    "prefers_index",
    "eta",
    "h_beta_tau",
    "demand_count",
    "demand_count_direct",
]

LaplaceMode = Literal["annual", "claims"]


@dataclass(frozen=True)
class AversionDistribution:
    """Shifted exponential law of risk aversion across the population."""

    alpha_minus: float
    rate: float

    def __post_init__(self) -> None:
        if self.alpha_minus <= 0.0 or self.rate <= 0.0:
            raise DomainError("aversion shift and rate must both be positive")

    def cdf(self, alpha: float) -> float:
        """mu((0, alpha]): zero below the shift."""
        if alpha <= self.alpha_minus:
            return 0.0
        return 1.0 - math.exp(-self.rate * (alpha - self.alpha_minus))

    def density(self, alpha: np.ndarray) -> np.ndarray:
        a = np.asarray(alpha, dtype=float)
        return np.where(a >= self.alpha_minus,
                        self.rate * np.exp(-self.rate * (a - self.alpha_minus)), 0.0)

    @property
    def mean(self) -> float:
        return self.alpha_minus + 1.0 / self.rate


@dataclass(frozen=True)
class PricingParams:
    """Premium and contract knobs shared by the preference tests.

    ``pi_indemnity = (1 + theta_indemnity) * E_annual[Y]`` and
    ``pi_index = (1 + theta_index) * beta * E_annual[Y]``.
    """

    theta_indemnity: float
    theta_index: float
    beta: float
    tau: float
    annual_mean_loss: float

    def __post_init__(self) -> None:
        if self.theta_indemnity <= 0.0:
            raise DomainError("indemnity loading must be positive")
        if self.theta_index < 0.0:
            raise DomainError("index loading cannot be negative")
        if not 0.0 < self.beta <= 1.0:
            raise DomainError("payout scale beta must lie in (0, 1]")
        if self.tau < 0.0:
            raise DomainError("delay exponent tau cannot be negative")
        if self.annual_mean_loss <= 0.0:
            raise DomainError("annual mean loss must be positive")

    @property
    def pi_indemnity(self) -> float:
        return (1.0 + self.theta_indemnity) * self.annual_mean_loss

    @property
    def pi_index(self) -> float:
        return (1.0 + self.theta_index) * self.beta * self.annual_mean_loss


def _mix(ds: ClaimDataset, claim_level: np.ndarray, mode: LaplaceMode) -> float:
    """Mean of a claim-level statistic, with or without the no-claim atom at 1."""
    m = float(claim_level.mean())
    if mode == "claims":
        return m
    p = ds.claim_frequency
    return (1.0 - p) + p * m


def laplace_psi(ds: ClaimDataset, alpha: float, mode: LaplaceMode = "annual") -> float:
    """E[exp(alpha * Y)]; equals 1 at alpha = 0 and grows monotonically."""
    if alpha < 0.0:
        raise DomainError(f"risk aversion must be >= 0, got {alpha!r}")
    if alpha == 0.0:
        return 1.0
    alpha_guard(ds, alpha)
    return _mix(ds, np.exp(alpha * ds.loss), mode)


def laplace_F(ds: ClaimDataset, alpha: float, mode: LaplaceMode = "annual") -> float:
    """F(alpha) = d/d alpha E[exp(alpha Y)] = E[Y exp(alpha Y)]; strictly increasing."""
    if alpha < 0.0:
        raise DomainError(f"risk aversion must be >= 0, got {alpha!r}")
    alpha_guard(ds, alpha)
    claim_level = ds.loss * np.exp(alpha * ds.loss)
    m = float(claim_level.mean())
    if mode == "claims":
        return m
    return ds.claim_frequency * m


def _alpha_cap(ds: ClaimDataset) -> float:
    from .models import EXP_GUARD

    return EXP_GUARD / float(ds.loss.max())


def F_inverse(ds: ClaimDataset, target: float, mode: LaplaceMode = "annual",
              tol: float = 1e-12) -> float:
    """Solve F(alpha) = target by bracketed bisection on [0, guard]."""
    f0 = laplace_F(ds, 0.0, mode)
    if target < f0:
        raise DomainError(f"target {target!r} lies below F(0) = {f0!r}")
    if target == f0:
        return 0.0
    hi = _alpha_cap(ds) * (1.0 - 1e-9)
    f_hi = laplace_F(ds, hi, mode)
    if target > f_hi:
        raise DomainError(f"target {target!r} exceeds F at the overflow guard")
    return find_root_bracketed(lambda a: laplace_F(ds, a, mode) - target, 0.0, hi, tol)


def exponential_premium(ds: ClaimDataset, alpha: float, mode: LaplaceMode = "annual") -> float:
    """log Psi(alpha) / alpha: the certainty-equivalent annual premium."""
    if alpha <= 0.0:
        raise DomainError(f"risk aversion must be positive, got {alpha!r}")
    return math.log(laplace_psi(ds, alpha, mode)) / alpha


def calibrate_alpha_minus(
    ds: ClaimDataset,
    pi_indemnity: float,
    mode: LaplaceMode = "claims",
    tol: float = 1e-12,
) -> float:
    """Risk aversion at which the exponential premium matches ``pi_indemnity``.

    Claims-only mode by default: the accepted market premium is a multiple
    of the mean claim severity, and Psi is estimated on the claim database.
    """
    pure = ds.mean_loss if mode == "claims" else ds.annual_mean_loss
    if pi_indemnity <= pure:
        raise InfeasibleError(
            f"premium {pi_indemnity:g} does not exceed the pure premium {pure:g}; "
            "no positive risk aversion matches it"
        )
    hi = _alpha_cap(ds) * (1.0 - 1e-9)
    if exponential_premium(ds, hi, mode) < pi_indemnity:
        raise InfeasibleError("premium exceeds the exponential premium at the overflow guard")
    return find_root_bracketed(
        lambda a: exponential_premium(ds, a, mode) - pi_indemnity, 1e-12, hi, tol
    )


def calibrate_lambda(
    ds: ClaimDataset,
    alpha_minus: float,
    pi_indemnity: float,
    premium_multiplier: float,
    acceptance_share: float,
    mode: LaplaceMode = "claims",
) -> float:
    """Rate of the aversion law from a premium-increase acceptance share.

    Solves for the aversion ``a*`` that accepts ``premium_multiplier`` times
    the indemnity premium and sets the exponential tail so that
    ``mu([a*, inf)) = acceptance_share``.
    """
    if premium_multiplier <= 1.0:
        raise ConfigError("premium multiplier must exceed 1")
    if not 0.0 < acceptance_share < 1.0:
        raise ConfigError("acceptance share must lie in (0, 1)")
    alpha_star = calibrate_alpha_minus(ds, premium_multiplier * pi_indemnity, mode)
    if alpha_star <= alpha_minus:
        raise InfeasibleError(
            f"higher premium maps to aversion {alpha_star:g} <= alpha_minus {alpha_minus:g}"
        )
    return -math.log(acceptance_share) / (alpha_star - alpha_minus)


# ---------------------------------------------------------------------------
# preference tests
# ---------------------------------------------------------------------------


def _preference_sides(
    ds: ClaimDataset,
    mean_model: PayoutModel,
    lap_model: CondLaplaceModel,
    alpha: float,
    params: PricingParams,
    psi_claims: Optional[np.ndarray] = None,
    phi_claims: Optional[np.ndarray] = None,
) -> tuple[float, float]:
    """Left and right side of the exponential-utility purchase condition.

    Left: E[psi(alpha|W) exp(-alpha phi_beta(W))] over the annual mixture.
    Right: Psi(alpha') exp(alpha (pi_Y - pi_phi)) with
    alpha' = (1 - exp(-tau)) alpha.
    """
    if abs(lap_model.alpha - alpha) > 1e-9 * max(1.0, alpha):
        raise ConfigError(
            f"Laplace model fitted at {lap_model.alpha!r}, preference test at {alpha!r}"
        )
    alpha_guard(ds, alpha)
    if psi_claims is None:
        psi_claims = cond_laplace(lap_model, ds)
    if phi_claims is None:
        phi_claims = params.beta * cond_mean(mean_model, ds)
    left_claims = psi_claims * np.exp(-alpha * phi_claims)
    p = ds.claim_frequency
    left = (1.0 - p) + p * float(left_claims.mean())
    alpha_prime = (1.0 - math.exp(-params.tau)) * alpha
    right = laplace_psi(ds, alpha_prime, "annual") * math.exp(
        alpha * (params.pi_indemnity - params.pi_index)
    )
    return left, right


def prefers_index(
    ds: ClaimDataset,
    mean_model: PayoutModel,
    lap_model: CondLaplaceModel,
    alpha: float,
    params: PricingParams,
    **cached,
) -> bool:
    """True iff a policyholder with aversion ``alpha`` strictly prefers the index cover."""
    left, right = _preference_sides(ds, mean_model, lap_model, alpha, params, **cached)
    return left < right


def eta(
    ds: ClaimDataset,
    mean_model: PayoutModel,
    lap_model: CondLaplaceModel,
    alpha: float,
    beta: float,
    theta_indemnity: float,
) -> float:
    """Loading headroom of the index product at aversion ``alpha``.

    ``1 - beta + theta_Y`` minus the worst observed ratio of the conditional
    exponential premium minus payout to the annual mean loss.  A positive
    value certifies every loading up to ``eta / beta``.
    """
    m_cond = lap_model.exp_premium(feature_matrix(ds))
    phi = beta * cond_mean(mean_model, ds)
    sup = float((m_cond - phi).max()) / ds.annual_mean_loss
    return 1.0 - beta + theta_indemnity - sup


def h_beta_tau(
    ds: ClaimDataset,
    alpha0: float,
    tau: float,
    params: PricingParams,
    variant: Literal["as-stated", "proof-derived"] = "as-stated",
    mode: LaplaceMode = "annual",
) -> float:
    """Risk-aversion heredity extension h >= 0 above a certified ``alpha0``.

    The as-stated variant evaluates the printed inversion formula with the
    free aversion pinned to ``alpha0`` and clamps at zero.  The proof-derived
    variant solves the sufficient condition extracted from the heredity
    argument for the largest admissible aversion.  Both collapse to zero
    whenever the indemnity price premium makes the argument shrink.
    """
    if alpha0 <= 0.0:
        raise DomainError("alpha0 must be positive")
    if tau < 0.0:
        raise DomainError("tau cannot be negative")
    dpi = params.pi_indemnity - params.pi_index
    if variant == "as-stated":
        target = laplace_F(ds, alpha0, mode) * math.exp(-tau) * math.exp(-alpha0 * dpi)
        if target <= laplace_F(ds, 0.0, mode):
            return 0.0
        root = F_inverse(ds, target, mode)
        return max(root - alpha0, 0.0)
    if variant == "proof-derived":
        damp = 1.0 - math.exp(-tau)
        if damp == 0.0:
            return 0.0
        c = damp * laplace_F(ds, alpha0 * damp, mode)

        def g(a: float) -> float:
            return laplace_F(ds, a, mode) - c * math.exp(a * dpi)

        hi = _alpha_cap(ds) * (1.0 - 1e-9)
        if g(alpha0) >= 0.0:
            return 0.0
        if g(hi) < 0.0:
            return max(hi - alpha0, 0.0)
        root = find_root_bracketed(g, alpha0, hi, 1e-12)
        return max(root - alpha0, 0.0)
    raise ConfigError(f"unknown variant {variant!r}")


def demand_count(n_population: int, mu: AversionDistribution, alpha_bound: float) -> float:
    """Expected demand N * mu((0, alpha_bound]) implied by a certified bound."""
    if n_population < 1:
        raise DomainError("population size must be at least 1")
    return n_population * mu.cdf(alpha_bound)


def demand_count_direct(
    ds: ClaimDataset,
    mean_model: PayoutModel,
    lap_models: Sequence[CondLaplaceModel],
    n_population: int,
    mu: AversionDistribution,
    params: PricingParams,
    alpha_grid: Sequence[float],
) -> float:
    """Expected demand by integrating the preference indicator against mu.

    ``lap_models[i]`` must be fitted at ``alpha_grid[i]``.  The integral is a
    trapezoid rule on the indicator times the aversion density, so the grid
    should cover the support up to roughly ``alpha_minus + 8 / rate``.
    """
    grid = np.asarray(alpha_grid, dtype=float)
    if grid.size == 0:
        raise ConfigError("alpha grid is empty")
    if grid.size != len(lap_models):
        raise ConfigError("need one fitted Laplace model per grid point")
    if np.any(np.diff(grid) <= 0.0):
        raise ConfigError("alpha grid must be strictly increasing")
    phi = params.beta * cond_mean(mean_model, ds)
    ind = np.zeros(grid.size)
    for i, (a, lap) in enumerate(zip(grid, lap_models)):
        ind[i] = 1.0 if prefers_index(ds, mean_model, lap, a, params,
                                      phi_claims=phi) else 0.0
    dens = mu.density(grid)
    return n_population * float(np.trapezoid(ind * dens, grid))
