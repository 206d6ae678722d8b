"""Portfolio solvency thresholds and the Monte Carlo ruin oracle.

Minimum portfolio sizes under the central-limit approximation and under an
added heavy-tailed accumulation shock, feasibility checks for the loading
headroom, the demand-vs-threshold loading search, and a simulation oracle
that validates every closed-form threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal, Optional, Sequence

import numpy as np

from .data import ClaimDataset
from .errors import ConfigError, DomainError, InfeasibleError
from .models import PayoutModel, cond_mean
from .stats import GpdTail, gpd_exceedance, std_normal_survival, std_normal_survival_inv
from .utility import AversionDistribution

__all__ = [
    "SolvencyParams",
    "PortfolioMoments",
    "portfolio_moments",
    "n_min_gaussian",
    "a_window",
    "n_min_accumulation",
    "FeasibilityReport",
    "check_prop_iid",
    "check_prop_accumulation",
    "theta_min_search",
    "ThetaMinResult",
    "RuinEstimate",
    "simulate_ruin",
]

MomentBasis = Literal["claims", "annual"]


@dataclass(frozen=True)
class SolvencyParams:
    """Ruin tolerance, its split for the accumulation bound, and the shock tail."""

    eps: float
    eps_prime: float
    a: float
    tail: GpdTail

    def __post_init__(self) -> None:
        if not 0.0 < self.eps < 1.0:
            raise DomainError("eps must lie in (0, 1)")
        if not 0.0 < self.eps_prime < self.eps:
            raise DomainError("eps_prime must lie in (0, eps)")
        if self.a <= 1.0:
            raise DomainError("decomposition constant a must exceed 1")

    @classmethod
    def default_split(cls, eps: float, a: float, tail: GpdTail) -> "SolvencyParams":
        """eps' = eps / 2 when the split is left unspecified."""
        return cls(eps=eps, eps_prime=eps / 2.0, a=a, tail=tail)


@dataclass(frozen=True)
class PortfolioMoments:
    """Mean payout and payout dispersion entering the ruin approximation.

    ``basis='claims'`` conditions on a claim occurring (every policyholder
    draws a severity); ``basis='annual'`` mixes in the no-claim atom at zero
    with probability ``1 - p``.
    """

    pi_star: float
    sigma_phi: float
    basis: MomentBasis

    def __post_init__(self) -> None:
        if self.pi_star <= 0.0:
            raise DomainError("expected payout must be positive")
        if self.sigma_phi < 0.0:
            raise DomainError("payout dispersion cannot be negative")


def portfolio_moments(
    ds: ClaimDataset,
    model: PayoutModel,
    beta: float,
    basis: MomentBasis = "claims",
) -> PortfolioMoments:
    """Moments of the payout ``beta * E[Y|W]`` on the requested basis.

    The expected payout uses the mean loss (the conditional mean integrates
    to it); the dispersion uses the model predictions.
    """
    if not 0.0 < beta <= 1.0:
        raise DomainError("beta must lie in (0, 1]")
    preds = cond_mean(model, ds)
    if basis == "claims":
        pi_star = beta * ds.mean_loss
        sigma = beta * float(preds.std(ddof=0))
    else:
        p = ds.claim_frequency
        pi_star = beta * ds.annual_mean_loss
        second = p * float((preds**2).mean())
        first = p * float(preds.mean())
        sigma = beta * math.sqrt(max(second - first**2, 0.0))
    return PortfolioMoments(pi_star=pi_star, sigma_phi=sigma, basis=basis)


def n_min_gaussian(moments: PortfolioMoments, theta: float, eps: float) -> int:
    """Smallest portfolio size meeting the ruin tolerance without accumulation.

    Ceiling of ``(sigma_phi * S^{-1}(eps) / (theta * pi_star))**2``; a
    deterministic payout needs just one policy.
    """
    if theta <= 0.0:
        raise DomainError("loading theta must be positive")
    if not 0.0 < eps < 0.5:
        raise DomainError("eps must lie in (0, 0.5)")
    if moments.sigma_phi == 0.0:
        return 1
    z = std_normal_survival_inv(eps)
    n = (moments.sigma_phi * z / (theta * moments.pi_star)) ** 2
    return max(1, math.ceil(n))


def a_window(theta: float, tail: GpdTail, eps_prime: float) -> tuple[float, float]:
    """Admissible decomposition interval (1, a_max); empty when a_max <= 1.

    ``a_max = shape * theta * eps'^shape / (scale * (1 - eps'^shape))``.
    """
    if theta <= 0.0:
        raise DomainError("loading theta must be positive")
    if not 0.0 < eps_prime < 1.0:
        raise DomainError("eps_prime must lie in (0, 1)")
    g = tail.shape
    a_max = g * theta * eps_prime**g / (tail.scale * (1.0 - eps_prime**g))
    return (1.0, a_max)


def n_min_accumulation(
    moments: PortfolioMoments,
    theta: float,
    params: SolvencyParams,
) -> int:
    """Minimum size when a scaled generalized Pareto shock rides on the pool.

    Requires the shock term ``(1 + shape*theta/(a*scale))^(-1/shape)`` to
    leave part of the tolerance to the Gaussian term; always at least the
    accumulation-free threshold at matched inputs.
    """
    if theta <= 0.0:
        raise DomainError("loading theta must be positive")
    lo, hi = a_window(theta, params.tail, params.eps_prime)
    if not lo < params.a < hi:
        raise InfeasibleError(
            f"a = {params.a:g} outside the admissible window ({lo:g}, {hi:g}) "
            f"at theta = {theta:g}: the loading cannot absorb the shock"
        )
    shock = gpd_exceedance(theta / params.a, params.tail, n=1)
    budget = params.eps - shock
    if budget <= 0.0:
        raise InfeasibleError(
            f"shock probability {shock:g} exhausts the tolerance {params.eps:g}"
        )
    if moments.sigma_phi == 0.0:
        return 1
    z = std_normal_survival_inv(budget)
    amp = params.a / (params.a - 1.0)
    n = (amp * moments.sigma_phi * z / (theta * moments.pi_star)) ** 2
    return max(1, math.ceil(n))


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of a loading-headroom feasibility check."""

    eta: float
    requirement: float
    feasible: bool
    theta_lower: float
    theta_upper: float
    terms: dict


def check_prop_iid(
    eta_value: float,
    moments: PortfolioMoments,
    n_population: int,
    mu: AversionDistribution,
    alpha_bound: float,
    eps: float,
    beta: float,
    mean_loss: float,
) -> FeasibilityReport:
    """Headroom test without accumulation.

    Verdict: ``eta >= sigma * beta * S^{-1}(eps) / (sqrt(N) * E[Y] * mu^(1/2))``
    with ``mu`` the demand mass below the certified aversion bound.  Also
    reports the implied admissible loading range.
    """
    mass = mu.cdf(alpha_bound)
    if mass <= 0.0:
        raise InfeasibleError("no demand mass below the certified aversion bound")
    z = std_normal_survival_inv(eps)
    sigma = moments.sigma_phi / beta
    requirement = sigma * beta * z / (math.sqrt(n_population) * mean_loss * math.sqrt(mass))
    n0 = n_population * mass
    theta_lower = moments.sigma_phi * z / (math.sqrt(n0) * moments.pi_star)
    theta_upper = eta_value / beta
    return FeasibilityReport(
        eta=eta_value,
        requirement=requirement,
        feasible=eta_value >= requirement,
        theta_lower=theta_lower,
        theta_upper=theta_upper,
        terms={"gaussian": requirement, "demand_mass": mass},
    )


def check_prop_accumulation(
    eta_value: float,
    moments: PortfolioMoments,
    n_population: int,
    mu: AversionDistribution,
    alpha_bound: float,
    params: SolvencyParams,
    beta: float,
    mean_loss: float,
) -> FeasibilityReport:
    """Headroom test with the accumulation shock.

    Verdict: eta at least the max of the sharpened Gaussian term (tolerance
    reduced to ``eps - eps'``, amplification ``a/(a-1)``) and the shock
    absorption term ``a * beta * scale * (1 - eps'^shape)/(shape * eps'^shape)``.
    """
    mass = mu.cdf(alpha_bound)
    if mass <= 0.0:
        raise InfeasibleError("no demand mass below the certified aversion bound")
    z = std_normal_survival_inv(params.eps - params.eps_prime)
    sigma = moments.sigma_phi / beta
    amp = params.a / (params.a - 1.0)
    term_gauss = sigma * beta * amp * z / (math.sqrt(n_population) * mean_loss * math.sqrt(mass))
    g = params.tail.shape
    term_shock = params.a * beta * params.tail.scale * (1.0 - params.eps_prime**g) / (
        g * params.eps_prime**g
    )
    requirement = max(term_gauss, term_shock)
    n0 = n_population * mass
    theta_lower = max(
        amp * moments.sigma_phi * z / (math.sqrt(n0) * moments.pi_star),
        term_shock / beta,
    )
    return FeasibilityReport(
        eta=eta_value,
        requirement=requirement,
        feasible=eta_value >= requirement,
        theta_lower=theta_lower,
        theta_upper=eta_value / beta,
        terms={"gaussian": term_gauss, "shock": term_shock, "demand_mass": mass},
    )


@dataclass(frozen=True)
class ThetaMinResult:
    """Outcome of the demand-vs-threshold loading search."""

    feasible: bool
    theta_min: Optional[float]
    demand_at_min: Optional[float]
    threshold_at_min: Optional[float]
    closest_gap: float
    closest_theta: float


def theta_min_search(
    demand: Callable[[float], float],
    threshold: Callable[[float], float],
    theta_grid: Sequence[float],
    refine_tol: float = 1e-4,
) -> ThetaMinResult:
    """Smallest loading on the grid where demand covers the solvency threshold.

    Scans the increasing grid, then bisects between the last infeasible and
    the first feasible grid point.  An empty feasible set is a result, not
    an error: the closest gap is reported.
    """
    grid = np.asarray(theta_grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0.0):
        raise ConfigError("theta grid must be non-empty and strictly increasing")
    best_gap = -math.inf
    best_theta = float(grid[0])
    prev = None
    for theta in grid:
        d = demand(float(theta))
        t = threshold(float(theta))
        gap = d - t
        if gap > best_gap:
            best_gap = gap
            best_theta = float(theta)
        if gap >= 0.0:
            lo = prev if prev is not None else float(theta)
            hi = float(theta)
            while hi - lo > refine_tol:
                mid = 0.5 * (lo + hi)
                if demand(mid) - threshold(mid) >= 0.0:
                    hi = mid
                else:
                    lo = mid
            return ThetaMinResult(
                feasible=True,
                theta_min=hi,
                demand_at_min=demand(hi),
                threshold_at_min=threshold(hi),
                closest_gap=best_gap,
                closest_theta=best_theta,
            )
        prev = float(theta)
    return ThetaMinResult(
        feasible=False,
        theta_min=None,
        demand_at_min=None,
        threshold_at_min=None,
        closest_gap=best_gap,
        closest_theta=best_theta,
    )


@dataclass(frozen=True)
class RuinEstimate:
    """Monte Carlo ruin frequency with a 95% binomial confidence half-width."""

    probability: float
    ci_half_width: float
    trials: int
    n: int
    seed: int

    @property
    def upper(self) -> float:
        return self.probability + self.ci_half_width


def simulate_ruin(
    ds: ClaimDataset,
    model: PayoutModel,
    n: int,
    theta: float,
    beta: float,
    trials: int,
    seed: int,
    claim_prob: Optional[float] = None,
    accumulation: Optional[GpdTail] = None,
    shock_scale: Literal["loading", "premium"] = "loading",
    batch: int = 200_000,
) -> RuinEstimate:
    """One-year ruin frequency of an n-policy index portfolio.

    Each policyholder claims with probability ``claim_prob`` (the dataset
    frequency by default; set 1.0 to condition on claims); severities are
    bootstrapped payouts ``beta * E[Y|W]``.  The optional accumulation shock
    is generalized Pareto with scale ``n * s`` as printed ('loading') or
    ``n * s * pi_star`` in money units ('premium').  The premium per policy
    is ``(1 + theta) * beta * claim_prob * mean(Y)``, so the basis of the
    premium always matches the basis of the simulated claims.

    Trials are drawn from a counter-based Philox stream keyed on ``seed``;
    results depend only on (inputs, seed).
    """
    if n <= 0:
        raise DomainError("portfolio size must be positive")
    if trials <= 0:
        raise DomainError("trial count must be positive")
    if theta < 0.0:
        raise DomainError("loading cannot be negative")
    p = ds.claim_frequency if claim_prob is None else float(claim_prob)
    if not 0.0 < p <= 1.0:
        raise DomainError("claim probability must lie in (0, 1]")
    payouts = beta * np.maximum(cond_mean(model, ds), 0.0)
    k = payouts.size
    pi_star = beta * p * ds.mean_loss
    premium_income = n * (1.0 + theta) * pi_star
    rng = np.random.Generator(np.random.Philox(key=seed))
    ruined = 0
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        if p >= 1.0:
            counts = np.full(b, n)
        else:
            counts = rng.binomial(n, p, size=b)
        total = int(counts.sum())
        if total:
            draws = payouts[rng.integers(0, k, size=total)]
            bounds = np.zeros(b + 1, dtype=np.int64)
            np.cumsum(counts, out=bounds[1:])
            # reduceat on an empty segment echoes an element; clamp and zero out
            idx = np.minimum(bounds[:-1], total - 1)
            sums = np.add.reduceat(draws, idx, dtype=float)
            sums = np.where(counts > 0, sums, 0.0)
        else:
            sums = np.zeros(b)
        loss = sums
        if accumulation is not None:
            scale = n * accumulation.scale
            if shock_scale == "premium":
                scale *= pi_star
            u = rng.random(b)
            shock = scale * (u ** (-accumulation.shape) - 1.0) / accumulation.shape
            loss = loss + shock
        ruined += int((loss - premium_income >= 0.0).sum())
        done += b
    prob = ruined / trials
    half = 1.96 * math.sqrt(max(prob * (1.0 - prob), 1e-12) / trials)
    return RuinEstimate(probability=prob, ci_half_width=half, trials=trials, n=n, seed=seed)
