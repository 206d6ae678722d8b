"""Hybrid index/indemnity product design.

Splits the claim space by the per-claim slack
``Delta(w) = m(alpha | w) - beta * E[Y | W = w]`` between the conditional
exponential premium and the index payout: claims with slack at most a
threshold ``e`` are compensated by the index, the rest fall back to the
(delay-discounted) indemnity cover.  Provides the resulting index share,
the admissible index loading, the two-part premium, threshold sweeps and
the end-to-end identification pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .data import ClaimDataset
from .errors import ConfigError, DomainError, EmptySelectionError, StateError
from .models import (
    FEATURE_NAMES,
    CondLaplaceModel,
    PayoutModel,
    cond_mean,
    feature_matrix,
    fit_cond_laplace,
    fit_conditional_mean,
    _grow_tree,
    _bin_features,
)

__all__ = [
    "HybridConfig",
    "HybridSummary",
    "DeltaModel",
    "fit_delta_model",
    "partition",
    "eta_e_theta_max",
    "hybrid_premium",
    "HybridPremium",
    "sweep_e",
    "solve_e_for_share",
    "select_e_star",
    "run_algorithm1",
    "render_delta_tree",
    "hybrid_payoff",
]

DELTA_TREE_HYPER = {"max_depth": 7, "min_leaf": 15}
DELTA_BOOSTED_HYPER = {"n_trees": 150, "max_depth": 3, "min_leaf": 60,
                       "learning_rate": 0.1, "subsample": 1.0}


@dataclass(frozen=True)
class HybridConfig:
    """Design knobs of the hybrid cover."""

    alpha: float
    beta: float
    threshold: float
    method: Literal["tree", "boosted"] = "tree"
    stratum: Optional[bool] = None  # None = pooled, else backup_activated value

    def __post_init__(self) -> None:
        if self.alpha <= 0.0:
            raise DomainError("target risk aversion must be positive")
        if not 0.0 < self.beta <= 1.0:
            raise DomainError("beta must lie in (0, 1]")
        if self.threshold < 0.0:
            raise DomainError("threshold e cannot be negative")
        if self.method not in ("tree", "boosted"):
            raise ConfigError("hybrid method must be 'tree' or 'boosted'")


@dataclass(frozen=True)
class DeltaModel:
    """Fitted regressor of the per-claim slack on the covariates."""

    method: str
    alpha: float
    beta: float
    fit: object
    targets: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.fit.predict(np.atleast_2d(x))

    @property
    def tree(self):
        if self.method != "tree":
            raise StateError("leaf access requires the tree method")
        return self.fit


def delta_targets(
    ds: ClaimDataset,
    mean_model: PayoutModel,
    lap_model: CondLaplaceModel,
    beta: float,
) -> np.ndarray:
    """Per-claim slack between conditional exponential premium and payout.

    When the Laplace estimate is tree-structured, both terms are paired at
    leaf granularity (the payout enters through its leaf mean); mixing a
    leaf-level premium with claim-level payouts would contaminate the slack
    with within-leaf payout spread.
    """
    x = feature_matrix(ds)
    m_cond = lap_model.exp_premium(x)
    phi = beta * np.maximum(mean_model.predict(x), 0.0)
    from .models import _Tree

    if hasattr(lap_model.fit, "groups"):
        gid = lap_model.fit.groups(x)
    else:
        tree = lap_model.fit if isinstance(lap_model.fit, _Tree) else \
            getattr(lap_model.fit, "tree", None)
        gid = tree.apply(x) if tree is not None else None
    if gid is not None:
        k = int(gid.max()) + 1
        size = np.bincount(gid, minlength=k)
        tot = np.bincount(gid, weights=phi, minlength=k)
        phi = (tot / np.maximum(size, 1))[gid]
    return m_cond - phi


def fit_delta_model(
    ds: ClaimDataset,
    mean_model: PayoutModel,
    lap_model: CondLaplaceModel,
    beta: float,
    method: Literal["tree", "boosted"] = "tree",
    seed: int = 0,
    hyper: Optional[dict] = None,
) -> DeltaModel:
    """Regress the slack targets on the claim covariates.

    The tree variant clusters claims into leaves carrying the cluster slack;
    the boosted variant predicts the slack claim by claim.
    """
    targets = delta_targets(ds, mean_model, lap_model, beta)
    x = feature_matrix(ds)
    if method == "tree":
        h = dict(DELTA_TREE_HYPER, **(hyper or {}))
        edges, codes = _bin_features(x)
        fit = _grow_tree(codes, edges, targets, np.arange(x.shape[0]),
                         h["max_depth"], h["min_leaf"])
    elif method == "boosted":
        h = dict(DELTA_BOOSTED_HYPER, **(hyper or {}))
        from .models import _fit_regressor

        fit = _fit_regressor(x, targets, "boosted", h, seed)
    else:
        raise ConfigError("delta model method must be 'tree' or 'boosted'")
    return DeltaModel(method=method, alpha=lap_model.alpha, beta=beta,
                      fit=fit, targets=targets)


def partition(ds: ClaimDataset, delta_model: DeltaModel, e: float) -> tuple[np.ndarray, float]:
    """Flag the claims suited to index compensation at threshold ``e``.

    Tree mode flags whole leaves (the leaf prediction is the leaf's slack),
    boosted mode flags individual claims.  Returns the flag vector and the
    flagged share.
    """
    if e < 0.0:
        raise DomainError("threshold e cannot be negative")
    x = feature_matrix(ds)
    pred = delta_model.predict(x)
    flags = pred <= e
    return flags, float(flags.mean())


def eta_e_theta_max(
    ds: ClaimDataset,
    flags: np.ndarray,
    beta: float,
    theta_indemnity: float,
    e: float,
) -> tuple[float, float]:
    """Loading headroom of the index part and the admissible maximum loading.

    ``eta_e = 1 - beta + theta_Y - e / (E[Y | flagged] * p_e)`` and
    ``theta_max = eta_e / beta``.
    """
    p_e = float(np.asarray(flags, dtype=bool).mean())
    if p_e <= 0.0:
        raise EmptySelectionError("the index set is empty; eta_e is undefined")
    mean_flagged = float(ds.loss[np.asarray(flags, dtype=bool)].mean())
    eta_e = 1.0 - beta + theta_indemnity - e / (mean_flagged * p_e)
    return eta_e, eta_e / beta


@dataclass(frozen=True)
class HybridPremium:
    """Two-part hybrid premium with its loading-compliance flag."""

    value: float
    indemnity_part: float
    index_part: float
    loading_exceeds_max: bool


def hybrid_premium(
    ds: ClaimDataset,
    mean_model: PayoutModel,
    flags: np.ndarray,
    beta: float,
    theta_index: float,
    theta_indemnity: float,
    theta_max: Optional[float] = None,
) -> HybridPremium:
    """Annual premium of the hybrid cover (scaled by the claim frequency).

    Indemnity loading applies to the unflagged share's mean loss, the index
    loading to the flagged share's mean payout.  A loading above the
    admissible maximum is reported, not rejected.
    """
    flags = np.asarray(flags, dtype=bool)
    p = ds.claim_frequency
    p_e = float(flags.mean())
    phi = beta * cond_mean(mean_model, ds)
    indemnity_part = 0.0
    index_part = 0.0
    if p_e < 1.0:
        indemnity_part = (1.0 + theta_indemnity) * float(ds.loss[~flags].mean()) * (1.0 - p_e)
    if p_e > 0.0:
        index_part = (1.0 + theta_index) * float(phi[flags].mean()) * p_e
    exceeded = theta_max is not None and theta_index > theta_max + 1e-12
    return HybridPremium(
        value=p * (indemnity_part + index_part),
        indemnity_part=p * indemnity_part,
        index_part=p * index_part,
        loading_exceeds_max=exceeded,
    )


def sweep_e(
    ds: ClaimDataset,
    mean_model: PayoutModel,
    lap_model: CondLaplaceModel,
    betas: Sequence[float],
    e_grid: Sequence[float],
    theta_indemnity: float,
    method: Literal["tree", "boosted"] = "tree",
    seed: int = 0,
) -> list[dict]:
    """(theta_max, p_e) curves over the threshold grid, one block per beta."""
    grid = np.asarray(e_grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0.0):
        raise ConfigError("e grid must be non-empty and strictly increasing")
    rows = []
    for beta in betas:
        dm = fit_delta_model(ds, mean_model, lap_model, beta, method, seed)
        for e in grid:
            flags, p_e = partition(ds, dm, float(e))
            if p_e > 0.0:
                eta_e, theta_max = eta_e_theta_max(ds, flags, beta, theta_indemnity, float(e))
            else:
                eta_e = 1.0 - beta + theta_indemnity
                theta_max = eta_e / beta
            rows.append({"beta": beta, "e": float(e), "p_e": p_e,
                         "eta_e": eta_e, "theta_max": theta_max})
    return rows


def solve_e_for_share(
    ds: ClaimDataset,
    delta_model: DeltaModel,
    target_share: float,
) -> tuple[float, float]:
    """Smallest threshold whose flagged share reaches ``target_share``.

    In tree mode the achievable shares are sums of leaf sizes, so the result
    is the closest achievable share from above unless the previous prefix is
    strictly closer.
    """
    if not 0.0 < target_share <= 1.0:
        raise ConfigError("target share must lie in (0, 1]")
    pred = delta_model.predict(feature_matrix(ds))
    levels = np.sort(np.unique(pred))
    shares = np.searchsorted(np.sort(pred), levels, side="right") / pred.size
    best = None
    for e, share in zip(levels, shares):
        if best is None or abs(share - target_share) < abs(best[1] - target_share) - 1e-12:
            best = (float(e), float(share))
        if share >= target_share:
            break
    return best


def select_e_star(
    ds: ClaimDataset,
    delta_model: DeltaModel,
    beta: float,
    theta_indemnity: float,
    theta_floor: float,
) -> tuple[float, float, float]:
    """Largest-share threshold keeping the admissible loading above a floor.

    Returns (e_star, p_e, theta_max); raises when even the smallest
    candidate threshold violates the floor.
    """
    pred = delta_model.predict(feature_matrix(ds))
    chosen = None
    for e in np.sort(np.unique(pred)):
        flags = pred <= e
        p_e = float(flags.mean())
        if p_e <= 0.0:
            continue
        _, theta_max = eta_e_theta_max(ds, flags, beta, theta_indemnity, float(e))
        if theta_max >= theta_floor:
            chosen = (float(e), p_e, theta_max)
    if chosen is None:
        raise ConfigError(
            f"no threshold keeps the admissible loading above {theta_floor:g}"
        )
    return chosen


@dataclass(frozen=True)
class HybridSummary:
    """Full outcome of the identification pipeline."""

    config: HybridConfig
    e_star: float
    p_e: float
    eta_e: float
    theta_max: float
    premium: HybridPremium
    flags: np.ndarray
    deltas: np.ndarray
    labels: list[str] = field(repr=False)


def run_algorithm1(
    ds: ClaimDataset,
    mean_model: PayoutModel,
    lap_model: CondLaplaceModel,
    config: HybridConfig,
    theta_index: float,
    theta_indemnity: float,
    seed: int = 0,
    delta_model: Optional[DeltaModel] = None,
) -> HybridSummary:
    """End-to-end identification of index-suitable compensations.

    Fits the slack model, flags claims at the configured threshold, and
    returns the index share, loading headroom, premium and per-claim labels.
    ``ds`` should already be restricted to the configured stratum.
    """
    if config.stratum is not None:
        ds = ds.subset(ds.mask(config.stratum))
    if delta_model is None:
        delta_model = fit_delta_model(ds, mean_model, lap_model, config.beta,
                                      config.method, seed)
    flags, p_e = partition(ds, delta_model, config.threshold)
    if p_e > 0.0:
        eta_e, theta_max = eta_e_theta_max(ds, flags, config.beta,
                                           theta_indemnity, config.threshold)
    else:
        eta_e = 1.0 - config.beta + theta_indemnity
        theta_max = eta_e / config.beta
    premium = hybrid_premium(ds, mean_model, flags, config.beta,
                             theta_index, theta_indemnity, theta_max)
    x = feature_matrix(ds)
    deltas = delta_model.predict(x)
    labels = ["index" if f else "indemnity" for f in flags]
    return HybridSummary(config=config, e_star=config.threshold, p_e=p_e,
                         eta_e=eta_e, theta_max=theta_max, premium=premium,
                         flags=flags, deltas=deltas, labels=labels)


def render_delta_tree(delta_model: DeltaModel, e: float) -> str:
    """Nested text rendering with per-leaf share, slack and decision."""
    tree = delta_model.tree
    total = float(np.asarray(tree.count)[0])
    lines: list[str] = []

    def walk(node: int, depth: int) -> None:
        pad = "  " * depth
        if tree.feature[node] < 0:
            share = tree.count[node] / total
            decision = "index" if tree.value[node] <= e else "indemnity"
            lines.append(
                f"{pad}leaf: size {share:.1%}, delta {tree.value[node]:.3f}, {decision}"
            )
            return
        name = FEATURE_NAMES[tree.feature[node]]
        lines.append(f"{pad}{name} <= {tree.threshold[node]:.4g}")
        walk(tree.left[node], depth + 1)
        lines.append(f"{pad}{name} > {tree.threshold[node]:.4g}")
        walk(tree.right[node], depth + 1)

    walk(0, 0)
    return "\n".join(lines)


def hybrid_payoff(
    ds: ClaimDataset,
    mean_model: PayoutModel,
    flags: np.ndarray,
    beta: float,
    tau: float,
) -> np.ndarray:
    """Per-claim hybrid payout: discounted loss off the index set, index on it."""
    flags = np.asarray(flags, dtype=bool)
    phi = beta * cond_mean(mean_model, ds)
    return np.where(flags, phi, math.exp(-tau) * ds.loss)
