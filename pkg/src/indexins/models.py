"""Conditional-mean payout models and conditional Laplace transforms.

Four estimators of the claim-level conditional mean loss — linear least
squares, a CART regression tree, a random forest and gradient-boosted
trees — share one histogram-based split engine so that leaf structure,
reproducibility and export are uniform.  The index payout is
``beta * E[Y | W = w]`` clamped at zero.

Fitted models are immutable; prediction is safe from concurrent callers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import SERVICE_LEVELS, ClaimDataset
from .errors import (
    AlphaTooLargeError,
    ConfigError,
    DataError,
    DegenerateError,
    StateError,
)

__all__ = [
    "FEATURE_NAMES",
    "IndexFeatures",
    "ModelMetrics",
    "PayoutModel",
    "CondLaplaceModel",
    "feature_matrix",
    "fit_conditional_mean",
    "predict_phi",
    "payout",
    "evaluate",
    "fit_cond_laplace",
    "cond_mean",
    "cond_laplace",
    "overcompensation_bound",
    "leaf_overcompensation_report",
    "model_to_json",
    "model_from_json",
]

#: Fixed design-matrix column order shared by all four methods.
FEATURE_NAMES: tuple[str, ...] = (
    "duration",
    *(f"service:{lvl}" for lvl in SERVICE_LEVELS),
    "backup_activated",
    "backup_quality",
    "backup_excess",
)

EXP_GUARD = 700.0  # natural-log overflow margin for exp(alpha * loss)

_MAX_BINS = 64


@dataclass(frozen=True)
class IndexFeatures:
    """Post-claim covariates of a single claim, in payout-index order."""

    duration: float
    service_type: str
    backup_activated: bool
    backup_quality: float
    backup_excess: float

    def to_row(self) -> np.ndarray:
        row = np.zeros(len(FEATURE_NAMES))
        row[0] = self.duration
        row[1 + SERVICE_LEVELS.index(self.service_type)] = 1.0
        row[6] = float(self.backup_activated)
        row[7] = self.backup_quality
        row[8] = self.backup_excess
        return row


def feature_matrix(ds: ClaimDataset) -> np.ndarray:
    """(n, 9) design matrix: duration, one-hot service type, indicator, quality, excess."""
    n = len(ds)
    x = np.zeros((n, len(FEATURE_NAMES)))
    x[:, 0] = ds.duration
    x[np.arange(n), 1 + ds.service_type] = 1.0
    x[:, 6] = ds.backup_activated.astype(float)
    x[:, 7] = ds.backup_quality
    x[:, 8] = ds.backup_excess
    return x


# ---------------------------------------------------------------------------
# histogram-binned CART engine
# ---------------------------------------------------------------------------


def _bin_features(x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Quantile bin boundaries per feature and the binned codes.

    ``edges[j]`` holds internal boundaries; code b means x <= edges[j][b]
    for b < len(edges[j]) and x > edges[j][-1] for the last bin.
    """
    n, d = x.shape
    edges: list[np.ndarray] = []
    codes = np.zeros((n, d), dtype=np.int32)
    for j in range(d):
        col = x[:, j]
        uniq = np.unique(col)
        if uniq.size <= _MAX_BINS:
            bounds = 0.5 * (uniq[1:] + uniq[:-1])
        else:
            qs = np.quantile(col, np.linspace(0.0, 1.0, _MAX_BINS + 1)[1:-1])
            bounds = np.unique(qs)
        edges.append(bounds)
        codes[:, j] = np.searchsorted(bounds, col, side="left")
    return edges, codes


class _Tree:
    """Array-backed binary regression tree (feature < 0 marks a leaf)."""

    __slots__ = ("feature", "threshold", "bin", "left", "right", "value", "count")

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.bin: list[int] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.count: list[int] = []

    def _new_node(self, value: float, count: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.bin.append(-1)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.count.append(count)
        return len(self.feature) - 1

    def finalize(self) -> None:
        self.feature = np.asarray(self.feature, dtype=np.int32)
        self.threshold = np.asarray(self.threshold, dtype=float)
        self.bin = np.asarray(self.bin, dtype=np.int32)
        self.left = np.asarray(self.left, dtype=np.int32)
        self.right = np.asarray(self.right, dtype=np.int32)
        self.value = np.asarray(self.value, dtype=float)
        self.count = np.asarray(self.count, dtype=np.int64)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Leaf index for every row of ``x``."""
        node = np.zeros(x.shape[0], dtype=np.int32)
        while True:
            feat = self.feature[node]
            active = feat >= 0
            if not active.any():
                return node
            idx = np.flatnonzero(active)
            f = feat[idx]
            goes_left = x[idx, f] <= self.threshold[node[idx]]
            node[idx] = np.where(goes_left, self.left[node[idx]], self.right[node[idx]])

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.value[self.apply(x)]

    def leaf_ids(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)


def _grow_tree(
    codes: np.ndarray,
    edges: list[np.ndarray],
    y: np.ndarray,
    rows: np.ndarray,
    max_depth: int,
    min_leaf: int,
    mtry: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> _Tree:
    """Depth-limited least-squares CART on pre-binned features.

    Splits maximise the exact decrease in within-node squared error; ties
    resolve to the lowest (feature, bin) pair, so growth is deterministic
    given the row sample and the feature-subset draws.
    """
    n, d = codes.shape
    tree = _Tree()
    y_bag = y[rows]
    root = tree._new_node(float(y_bag.mean()), rows.size)
    node_of = np.zeros(rows.size, dtype=np.int32)
    active = np.array([root], dtype=np.int64)

    for _ in range(max_depth):
        if active.size == 0:
            break
        m = active.size
        slot_of = np.full(len(tree.feature), -1, dtype=np.int32)
        slot_of[active] = np.arange(m, dtype=np.int32)
        row_slot = slot_of[node_of]
        in_level = row_slot >= 0

        if mtry is not None and mtry < d:
            cand = np.zeros((m, d), dtype=bool)
            picks = np.argpartition(rng.random((m, d)), mtry - 1, axis=1)[:, :mtry]
            cand[np.arange(m)[:, None], picks] = True
        else:
            cand = np.ones((m, d), dtype=bool)

        best_gain = np.full(m, 1e-12)
        best_feat = np.full(m, -1, dtype=np.int64)
        best_bin = np.full(m, -1, dtype=np.int64)
        best_nl = np.zeros(m)
        best_sl = np.zeros(m)
        tot_n = np.zeros(m)
        tot_s = np.zeros(m)

        for j in range(d):
            nb = edges[j].size + 1
            if nb < 2:
                continue
            use = cand[:, j]
            if not use.any():
                continue
            sel = in_level & use[np.maximum(row_slot, 0)]
            if not sel.any():
                continue
            key = row_slot[sel] * nb + codes[rows[sel], j]
            sums = np.bincount(key, weights=y_bag[sel], minlength=m * nb).reshape(m, nb)
            cnts = np.bincount(key, minlength=m * nb).reshape(m, nb)
            nl = np.cumsum(cnts, axis=1)[:, :-1]
            sl = np.cumsum(sums, axis=1)[:, :-1]
            ntot = cnts.sum(axis=1, keepdims=True)
            stot = sums.sum(axis=1, keepdims=True)
            tot_n = np.where(use, ntot[:, 0], tot_n)
            tot_s = np.where(use, stot[:, 0], tot_s)
            nr = ntot - nl
            sr = stot - sl
            ok = (nl >= min_leaf) & (nr >= min_leaf) & use[:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = sl**2 / nl + sr**2 / nr - stot**2 / np.maximum(ntot, 1)
            gain = np.where(ok, gain, -np.inf)
            g = gain.max(axis=1)
            b = gain.argmax(axis=1)
            better = g > best_gain
            best_gain = np.where(better, g, best_gain)
            best_feat = np.where(better, j, best_feat)
            best_bin = np.where(better, b, best_bin)
            rows_m = np.arange(m)
            best_nl = np.where(better, nl[rows_m, b], best_nl)
            best_sl = np.where(better, sl[rows_m, b], best_sl)

        split = np.flatnonzero(best_feat >= 0)
        if split.size == 0:
            break
        # allocate children in slot order; values follow from the split stats
        base = len(tree.feature)
        child_left = np.full(m, -1, dtype=np.int64)
        child_right = np.full(m, -1, dtype=np.int64)
        for pos, k in enumerate(split):
            node = int(active[k])
            nlk = best_nl[k]
            nrk = tot_n[k] - nlk
            left = tree._new_node(float(best_sl[k] / nlk), int(nlk))
            right = tree._new_node(float((tot_s[k] - best_sl[k]) / nrk), int(nrk))
            j = int(best_feat[k])
            tree.feature[node] = j
            tree.threshold[node] = float(edges[j][int(best_bin[k])])
            tree.bin[node] = int(best_bin[k])
            tree.left[node] = left
            tree.right[node] = right
            child_left[k] = left
            child_right[k] = right

        # vectorised routing: every row looks up its node's split in one gather
        moving = in_level & (best_feat[np.maximum(row_slot, 0)] >= 0)
        ridx = np.flatnonzero(moving)
        ks = row_slot[ridx]
        f_row = best_feat[ks]
        goes_left = codes[rows[ridx], f_row] <= best_bin[ks]
        node_of[ridx] = np.where(goes_left, child_left[ks], child_right[ks])
        newly = np.concatenate([child_left[split], child_right[split]])
        counts = np.array([tree.count[c] for c in newly], dtype=np.int64)
        active = newly[counts >= 2 * min_leaf]

    tree.finalize()
    return tree


# ---------------------------------------------------------------------------
# the four estimators
# ---------------------------------------------------------------------------

METHODS = ("linear", "tree", "forest", "boosted")

DEFAULT_HYPER = {
    "linear": {},
    "tree": {"max_depth": 4, "min_leaf": 50},
    "forest": {"n_trees": 300, "max_depth": 10, "min_leaf": 15, "mtry": 3},
    "boosted": {"n_trees": 300, "max_depth": 4, "min_leaf": 40,
                "learning_rate": 0.1, "subsample": 0.8},
}


def _check_hyper(method: str, hyper: dict) -> dict:
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    merged = dict(DEFAULT_HYPER[method])
    unknown = set(hyper) - set(merged)
    if unknown:
        raise ConfigError(f"unknown hyperparameters for {method}: {sorted(unknown)}")
    merged.update(hyper)
    if method != "linear":
        if merged["max_depth"] < 1:
            raise ConfigError("tree depth must be >= 1")
        if merged["min_leaf"] < 1:
            raise ConfigError("min_leaf must be >= 1")
    if method in ("forest", "boosted") and merged["n_trees"] < 1:
        raise ConfigError("ensemble size must be >= 1")
    if method == "boosted" and not 0.0 < merged["learning_rate"] <= 1.0:
        raise ConfigError("learning rate must lie in (0, 1]")
    if method == "boosted" and not 0.0 < merged["subsample"] <= 1.0:
        raise ConfigError("subsample fraction must lie in (0, 1]")
    return merged


class _LinearFit:
    def __init__(self, x: np.ndarray, y: np.ndarray):
        design = np.column_stack([np.ones(x.shape[0]), x])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        self.coef = coef

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.coef[0] + x @ self.coef[1:]


class _ForestFit:
    def __init__(self, trees: list[_Tree]):
        self.trees = trees

    def predict(self, x: np.ndarray) -> np.ndarray:
        acc = np.zeros(x.shape[0])
        for t in self.trees:
            acc += t.predict(x)
        return acc / len(self.trees)


class _BoostedFit:
    def __init__(self, init: float, learning_rate: float, trees: list[_Tree]):
        self.init = init
        self.learning_rate = learning_rate
        self.trees = trees

    def predict(self, x: np.ndarray) -> np.ndarray:
        acc = np.full(x.shape[0], self.init)
        for t in self.trees:
            acc += self.learning_rate * t.predict(x)
        return acc


@dataclass(frozen=True)
class ModelMetrics:
    """In-sample fit quality of a payout model."""

    rmse: float
    r2: float
    mae: float
    correlation: float


@dataclass(frozen=True)
class PayoutModel:
    """A fitted conditional-mean estimator with its training metadata."""

    method: str
    hyper: dict
    seed: int
    fit: object
    r2_in_sample: float

    def predict(self, x: np.ndarray) -> np.ndarray:
        if self.fit is None:
            raise StateError("model has not been fitted")
        return self.fit.predict(np.atleast_2d(x))

    @property
    def tree(self) -> _Tree:
        if self.method != "tree":
            raise StateError("leaf access requires the single-tree method")
        return self.fit


def _fit_regressor(
    x: np.ndarray,
    y: np.ndarray,
    method: str,
    hyper: dict,
    seed: int,
):
    n = x.shape[0]
    if method == "linear":
        return _LinearFit(x, y)
    edges, codes = _bin_features(x)
    all_rows = np.arange(n)
    if method == "tree":
        return _grow_tree(codes, edges, y, all_rows, hyper["max_depth"], hyper["min_leaf"])
    if method == "forest":
        seeds = np.random.SeedSequence(seed).spawn(hyper["n_trees"])
        trees = []
        for ss in seeds:
            rng = np.random.default_rng(ss)
            bag = rng.integers(0, n, size=n)
            trees.append(
                _grow_tree(codes, edges, y, bag, hyper["max_depth"], hyper["min_leaf"],
                           mtry=hyper["mtry"], rng=rng)
            )
        return _ForestFit(trees)
    if method == "boosted":
        rng = np.random.default_rng(seed)
        init = float(y.mean())
        pred = np.full(n, init)
        trees = []
        k = max(1, int(round(hyper["subsample"] * n)))
        for _ in range(hyper["n_trees"]):
            rows = rng.permutation(n)[:k] if k < n else all_rows
            t = _grow_tree(codes, edges, y - pred, rows, hyper["max_depth"], hyper["min_leaf"])
            pred += hyper["learning_rate"] * t.value[t.apply(x)]
            trees.append(t)
        return _BoostedFit(init, hyper["learning_rate"], trees)
    raise ConfigError(f"unknown method {method!r}")


def fit_conditional_mean(
    ds: ClaimDataset,
    method: str = "boosted",
    hyper: Optional[dict] = None,
    seed: int = 0,
) -> PayoutModel:
    """Fit the claim-level conditional mean loss with the chosen estimator."""
    hyper = _check_hyper(method, hyper or {})
    if len(ds) < 30:
        raise DataError(f"need at least 30 claims to fit, got {len(ds)}")
    y = ds.loss
    if float(y.max()) == float(y.min()):
        raise DegenerateError("all losses are identical; conditional mean is degenerate")
    x = feature_matrix(ds)
    fit = _fit_regressor(x, y, method, hyper, seed)
    pred = fit.predict(x)
    ssr = float(((y - pred) ** 2).sum())
    sst = float(((y - y.mean()) ** 2).sum())
    return PayoutModel(method=method, hyper=hyper, seed=seed, fit=fit,
                       r2_in_sample=1.0 - ssr / sst)


def predict_phi(model: PayoutModel, w: "IndexFeatures | np.ndarray", beta: float) -> float:
    """Index payout ``beta * E[Y | W = w]`` for one claim, clamped at zero."""
    if not 0.0 < beta <= 1.0:
        raise ConfigError(f"beta must lie in (0, 1], got {beta!r}")
    row = w.to_row() if isinstance(w, IndexFeatures) else np.asarray(w, dtype=float)
    val = float(model.predict(row.reshape(1, -1))[0])
    return beta * max(val, 0.0)


def payout(model: PayoutModel, ds: ClaimDataset, beta: float) -> np.ndarray:
    """Vector of index payouts over all claims of ``ds``."""
    if not 0.0 < beta <= 1.0:
        raise ConfigError(f"beta must lie in (0, 1], got {beta!r}")
    return beta * np.maximum(model.predict(feature_matrix(ds)), 0.0)


def cond_mean(model: PayoutModel, ds: ClaimDataset) -> np.ndarray:
    """Raw conditional-mean predictions, clamped at zero."""
    return np.maximum(model.predict(feature_matrix(ds)), 0.0)


def evaluate(model: PayoutModel, ds: ClaimDataset) -> ModelMetrics:
    """In-sample metrics over all claims."""
    y = ds.loss
    pred = model.predict(feature_matrix(ds))
    err = y - pred
    sst = float(((y - y.mean()) ** 2).mean())
    sp = pred.std()
    corr = 0.0 if sp == 0.0 else float(np.corrcoef(pred, y)[0, 1])
    return ModelMetrics(
        rmse=float(np.sqrt((err**2).mean())),
        r2=1.0 - float((err**2).mean()) / sst,
        mae=float(np.abs(err).mean()),
        correlation=corr,
    )


# ---------------------------------------------------------------------------
# conditional Laplace transforms
# ---------------------------------------------------------------------------

LAPLACE_HYPER = {
    "linear": {},
    "tree": {"max_depth": 7, "min_leaf": 25},
    "forest": {"n_trees": 100, "max_depth": 8, "min_leaf": 40, "mtry": 2},
    "boosted": {"n_trees": 350, "max_depth": 5, "min_leaf": 10,
                "learning_rate": 0.1, "subsample": 1.0},
}

_PSI_FLOOR = 1e-12


def alpha_guard(ds: ClaimDataset, alpha: float) -> None:
    """Reject risk aversions for which exp(alpha * loss) overflows."""
    if alpha < 0.0:
        raise AlphaTooLargeError(alpha, EXP_GUARD / float(ds.loss.max()))
    if alpha * float(ds.loss.max()) > EXP_GUARD:
        raise AlphaTooLargeError(alpha, EXP_GUARD / float(ds.loss.max()))


@dataclass(frozen=True)
class CondLaplaceModel:
    """Fitted regressor of exp(alpha * Y) on the claim covariates.

    When built from a fitted conditional-mean tree the partition is shared:
    each leaf carries the leaf-sample mean of exp(alpha * Y), which makes
    leaf-level convexity checks exact.
    """

    alpha: float
    method: str
    fit: object
    shares_tree: bool = False

    def psi(self, x: np.ndarray) -> np.ndarray:
        """Predicted conditional Laplace transform, clamped positive."""
        return np.maximum(self.fit.predict(np.atleast_2d(x)), _PSI_FLOOR)

    def exp_premium(self, x: np.ndarray) -> np.ndarray:
        """Conditional exponential premium log(psi)/alpha (money units)."""
        return np.log(self.psi(x)) / self.alpha


class _SharedTreeLaplace:
    """Leaf table over an existing tree partition."""

    def __init__(self, tree: _Tree, x: np.ndarray, target: np.ndarray):
        self.tree = tree
        leaf = tree.apply(x)
        sums = np.bincount(leaf, weights=target, minlength=tree.value.size)
        cnts = np.bincount(leaf, minlength=tree.value.size)
        self.table = np.where(cnts > 0, sums / np.maximum(cnts, 1), 1.0)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.table[self.tree.apply(x)]


def fit_cond_laplace(
    ds: ClaimDataset,
    alpha: float,
    method: str = "boosted",
    seed: int = 0,
    mean_model: Optional[PayoutModel] = None,
    hyper: Optional[dict] = None,
) -> CondLaplaceModel:
    """Fit w -> E[exp(alpha * Y) | W = w] by regressing the transformed target.

    For the tree method, passing the fitted conditional-mean tree reuses its
    partition (leaf-wise empirical Laplace transform); otherwise a fresh tree
    is grown on the transformed target.
    """
    if alpha <= 0.0:
        raise ConfigError(f"risk aversion must be positive, got {alpha!r}")
    alpha_guard(ds, alpha)
    target = np.exp(alpha * ds.loss)
    x = feature_matrix(ds)
    if method == "tree" and mean_model is not None and mean_model.method == "tree":
        return CondLaplaceModel(alpha=alpha, method="tree",
                                fit=_SharedTreeLaplace(mean_model.tree, x, target),
                                shares_tree=True)
    hyper = dict(LAPLACE_HYPER[method], **(hyper or {}))
    hyper = _check_hyper(method, hyper)
    fit = _fit_regressor(x, target, method, hyper, seed)
    return CondLaplaceModel(alpha=alpha, method=method, fit=fit)


def cond_laplace(model: CondLaplaceModel, ds: ClaimDataset) -> np.ndarray:
    """Predicted psi(alpha | w) for every claim of ``ds``."""
    return model.psi(feature_matrix(ds))


class _PayoutBinnedLaplace:
    """Empirical Laplace transform grouped on the fitted payout scale.

    Claims are bucketed by quantiles of the conditional-mean prediction and
    each bucket carries its sample mean of exp(alpha * Y).  Grouping on the
    model's own scale keeps the transform and the payout consistent: their
    difference is a pure risk premium, free of estimator disagreement.
    """

    def __init__(self, mean_model: PayoutModel, x: np.ndarray, target: np.ndarray,
                 n_bins: int):
        pred = np.maximum(mean_model.predict(x), 0.0)
        qs = np.quantile(pred, np.linspace(0.0, 1.0, n_bins + 1)[1:-1])
        self.mean_model = mean_model
        self.edges = np.unique(qs)
        gid = np.searchsorted(self.edges, pred, side="right")
        k = self.edges.size + 1
        sums = np.bincount(gid, weights=target, minlength=k)
        cnts = np.bincount(gid, minlength=k)
        self.values = np.where(cnts > 0, sums / np.maximum(cnts, 1), 1.0)

    def groups(self, x: np.ndarray) -> np.ndarray:
        pred = np.maximum(self.mean_model.predict(x), 0.0)
        return np.searchsorted(self.edges, pred, side="right")

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.values[self.groups(x)]


def fit_cond_laplace_binned(
    ds: ClaimDataset,
    alpha: float,
    mean_model: PayoutModel,
    n_bins: Optional[int] = None,
) -> CondLaplaceModel:
    """Conditional Laplace transform on payout-quantile buckets.

    The bucket count defaults to one per ~60 claims (at least 20); used by
    the hybrid designer, where slack targets must not inherit disagreement
    between two independently fitted regressors.
    """
    if alpha <= 0.0:
        raise ConfigError(f"risk aversion must be positive, got {alpha!r}")
    alpha_guard(ds, alpha)
    if n_bins is None:
        n_bins = max(20, len(ds) // 60)
    target = np.exp(alpha * ds.loss)
    fit = _PayoutBinnedLaplace(mean_model, feature_matrix(ds), target, n_bins)
    return CondLaplaceModel(alpha=alpha, method="binned", fit=fit)


# ---------------------------------------------------------------------------
# overcompensation control
# ---------------------------------------------------------------------------


def overcompensation_bound(
    lap_family: Sequence[CondLaplaceModel],
    mean_model: PayoutModel,
    w: "IndexFeatures | np.ndarray",
    beta: float,
) -> float:
    """Exponential-moment bound on P(Y < beta * E[Y|W=w] | w), as printed.

    Minimises ``psi(rho | w) * exp(-rho (1 - beta) E[Y|w])`` over the fitted
    rho family and clamps the result to at most 1.  The printed form is
    vacuous whenever the estimate respects Jensen's inequality (the product
    is then >= 1 for every rho); see :func:`leaf_overcompensation_report`
    for the sign-corrected variant that actually bites.
    """
    if len(lap_family) == 0:
        raise ConfigError("rho grid is empty")
    row = w.to_row() if isinstance(w, IndexFeatures) else np.asarray(w, dtype=float)
    row = row.reshape(1, -1)
    m_hat = max(float(mean_model.predict(row)[0]), 0.0)
    best = math.inf
    for lap in lap_family:
        rho = lap.alpha
        val = float(lap.psi(row)[0]) * math.exp(-rho * (1.0 - beta) * m_hat)
        best = min(best, val)
    return min(best, 1.0)


def leaf_overcompensation_report(
    mean_model: PayoutModel,
    ds: ClaimDataset,
    beta: float,
    rho_grid: Sequence[float],
) -> list[dict]:
    """Per-leaf overcompensation: empirical rate, printed bound, Markov bound.

    The Markov bound uses the lower-tail moment, per leaf:
    ``min_rho mean(exp(-rho Y)) * exp(rho beta mean(Y))``; it dominates the
    leaf's empirical frequency of Y < beta * mean(Y) for every rho.
    """
    if len(rho_grid) == 0:
        raise ConfigError("rho grid is empty")
    tree = mean_model.tree
    x = feature_matrix(ds)
    leaf = tree.apply(x)
    out = []
    for lid in np.unique(leaf):
        sel = leaf == lid
        y = ds.loss[sel]
        m_hat = float(y.mean())
        rate = float((y < beta * m_hat).mean())
        printed = math.inf
        markov = math.inf
        for rho in rho_grid:
            if rho <= 0:
                raise ConfigError("rho grid must be positive")
            printed = min(printed,
                          float(np.exp(rho * y).mean()) * math.exp(-rho * (1 - beta) * m_hat))
            markov = min(markov,
                         float(np.exp(-rho * y).mean()) * math.exp(rho * beta * m_hat))
        out.append({
            "leaf": int(lid),
            "count": int(sel.sum()),
            "mean_loss": m_hat,
            "empirical_rate": rate,
            "printed_bound": min(printed, 1.0),
            "markov_bound": min(markov, 1.0),
        })
    return out


# ---------------------------------------------------------------------------
# export / import
# ---------------------------------------------------------------------------


def _tree_to_dict(t: _Tree) -> dict:
    return {
        "feature": t.feature.tolist(),
        "threshold": t.threshold.tolist(),
        "left": t.left.tolist(),
        "right": t.right.tolist(),
        "value": t.value.tolist(),
        "count": t.count.tolist(),
    }


def _tree_from_dict(d: dict) -> _Tree:
    t = _Tree()
    t.feature = d["feature"]
    t.threshold = d["threshold"]
    t.bin = [-1] * len(d["feature"])
    t.left = d["left"]
    t.right = d["right"]
    t.value = d["value"]
    t.count = d["count"]
    t.finalize()
    return t


def model_to_json(model: PayoutModel) -> str:
    """Self-describing text form: method, hyperparameters, parameter arrays."""
    body: dict = {"method": model.method, "hyper": model.hyper, "seed": model.seed,
                  "r2_in_sample": model.r2_in_sample, "features": list(FEATURE_NAMES)}
    fit = model.fit
    if model.method == "linear":
        body["coefficients"] = fit.coef.tolist()
    elif model.method == "tree":
        body["tree"] = _tree_to_dict(fit)
    elif model.method == "forest":
        body["trees"] = [_tree_to_dict(t) for t in fit.trees]
    else:
        body["init"] = fit.init
        body["learning_rate"] = fit.learning_rate
        body["trees"] = [_tree_to_dict(t) for t in fit.trees]
    return json.dumps(body)


def model_from_json(text: str) -> PayoutModel:
    body = json.loads(text)
    method = body["method"]
    if body.get("features") != list(FEATURE_NAMES):
        raise DataError("model file was built with a different feature layout")
    if method == "linear":
        fit = _LinearFit.__new__(_LinearFit)
        fit.coef = np.asarray(body["coefficients"], dtype=float)
    elif method == "tree":
        fit = _tree_from_dict(body["tree"])
    elif method == "forest":
        fit = _ForestFit([_tree_from_dict(d) for d in body["trees"]])
    elif method == "boosted":
        fit = _BoostedFit(body["init"], body["learning_rate"],
                          [_tree_from_dict(d) for d in body["trees"]])
    else:
        raise DataError(f"unknown method {method!r} in model file")
    return PayoutModel(method=method, hyper=body["hyper"], seed=body["seed"],
                       fit=fit, r2_in_sample=body["r2_in_sample"])


def linear_coefficients(model: PayoutModel) -> dict[str, float]:
    """Named coefficients of the linear model (intercept under 'intercept')."""
    if model.method != "linear":
        raise StateError("coefficients are only defined for the linear model")
    coef = model.fit.coef
    out = {"intercept": float(coef[0])}
    for name, c in zip(FEATURE_NAMES, coef[1:]):
        out[name] = float(c)
    return out
