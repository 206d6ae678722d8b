"""Claims data ingestion, validation and empirical expectations.

A :class:`ClaimDataset` is immutable after loading and backs every
empirical expectation in the package.  Annual quantities always use the
mixture convention: a policyholder has a claim with probability
``claim_frequency`` and no claim (loss 0, payout 0) otherwise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import (
    DataError,
    DegenerateError,
    DomainError,
    EmptyDataError,
    EmptySelectionError,
    RowError,
    SchemaError,
)

__all__ = [
    "SERVICE_LEVELS",
    "DEFAULT_COLUMNS",
    "DEFAULT_CLAIM_FREQUENCY",
    "ClaimRecord",
    "ClaimDataset",
    "DescriptiveStats",
    "load_claims",
    "describe",
    "correlation",
    "annual_expectation",
]

#: Fixed encoding order of the service-type levels.
SERVICE_LEVELS: tuple[str, ...] = ("t1", "t2", "t3", "t4", "t5")

#: Default header names; remap via the ``column_map`` argument of the loader.
DEFAULT_COLUMNS: Mapping[str, str] = {
    "loss": "loss",
    "duration": "duration",
    "service_type": "service_type",
    "backup_activated": "backup_activated",
    "backup_quality": "backup_quality",
    "backup_excess": "backup_excess",
}

DEFAULT_CLAIM_FREQUENCY = 0.06

#: Numeric variables addressable in describe()/correlation().
_NUMERIC_VARS = ("loss", "duration", "backup_quality", "backup_excess")


@dataclass(frozen=True)
class ClaimRecord:
    """One business-interruption claim.

    ``loss`` is in thousands of euros; ``duration`` in days.  ``backup_excess``
    is the portion of the interruption covered by a running backup plan and
    can never exceed the interruption itself.
    """

    loss: float
    duration: float
    service_type: str
    backup_activated: bool
    backup_quality: float
    backup_excess: float

    def validate(self) -> None:
        if not (math.isfinite(self.loss) and self.loss >= 0.0):
            raise DomainError(f"loss must be finite and >= 0, got {self.loss!r}")
        if not (math.isfinite(self.duration) and self.duration > 0.0):
            raise DomainError(f"duration must be finite and > 0, got {self.duration!r}")
        if self.service_type not in SERVICE_LEVELS:
            raise DomainError(
                f"service_type must be one of {SERVICE_LEVELS}, got {self.service_type!r}"
            )
        if not 0.0 < self.backup_quality < 1.0:
            raise DomainError(
                f"backup_quality must lie strictly inside (0, 1), got {self.backup_quality!r}"
            )
        if not (math.isfinite(self.backup_excess) and self.backup_excess >= 0.0):
            raise DomainError(f"backup_excess must be >= 0, got {self.backup_excess!r}")
        if self.backup_excess > self.duration + 1e-12:
            raise DomainError(
                f"backup_excess {self.backup_excess!r} exceeds duration {self.duration!r}"
            )


class ClaimDataset:
    """Validated claim collection plus the annual claim frequency.

    Column data is exposed as read-only numpy arrays; the dataset never
    mutates after construction, so concurrent readers need no locking.
    """

    def __init__(self, records: Sequence[ClaimRecord], claim_frequency: float = DEFAULT_CLAIM_FREQUENCY):
        if len(records) == 0:
            raise EmptyDataError("a claim dataset cannot be empty")
        if not 0.0 < claim_frequency < 1.0:
            raise DomainError(
                f"claim frequency must lie in (0, 1), got {claim_frequency!r}"
            )
        for i, rec in enumerate(records):
            try:
                rec.validate()
            except DomainError as exc:
                raise RowError(i, str(exc)) from exc
        self.claim_frequency = float(claim_frequency)
        self.loss = np.array([r.loss for r in records], dtype=float)
        self.duration = np.array([r.duration for r in records], dtype=float)
        self.service_type = np.array(
            [SERVICE_LEVELS.index(r.service_type) for r in records], dtype=np.int64
        )
        self.backup_activated = np.array([r.backup_activated for r in records], dtype=bool)
        self.backup_quality = np.array([r.backup_quality for r in records], dtype=float)
        self.backup_excess = np.array([r.backup_excess for r in records], dtype=float)
        for arr in (self.loss, self.duration, self.service_type,
                    self.backup_activated, self.backup_quality, self.backup_excess):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return self.loss.shape[0]

    def column(self, name: str) -> np.ndarray:
        if name not in _NUMERIC_VARS:
            raise DomainError(f"{name!r} is not a numeric variable; pick one of {_NUMERIC_VARS}")
        return getattr(self, {"loss": "loss", "duration": "duration",
                              "backup_quality": "backup_quality",
                              "backup_excess": "backup_excess"}[name])

    def mask(self, backup_activated: Optional[bool] = None) -> np.ndarray:
        """Boolean row mask, optionally restricted to one backup stratum."""
        if backup_activated is None:
            return np.ones(len(self), dtype=bool)
        return self.backup_activated == backup_activated

    def subset(self, mask: np.ndarray) -> "ClaimDataset":
        """New dataset restricted to ``mask`` (same claim frequency)."""
        if not mask.any():
            raise EmptySelectionError("selection left no claims")
        out = object.__new__(ClaimDataset)
        out.claim_frequency = self.claim_frequency
        out.loss = self.loss[mask]
        out.duration = self.duration[mask]
        out.service_type = self.service_type[mask]
        out.backup_activated = self.backup_activated[mask]
        out.backup_quality = self.backup_quality[mask]
        out.backup_excess = self.backup_excess[mask]
        for arr in (out.loss, out.duration, out.service_type,
                    out.backup_activated, out.backup_quality, out.backup_excess):
            arr.setflags(write=False)
        return out

    @property
    def mean_loss(self) -> float:
        """Mean loss per claim (severity scale)."""
        return float(self.loss.mean())

    @property
    def annual_mean_loss(self) -> float:
        """Mean loss per policyholder-year under the no-claim mixture."""
        return self.claim_frequency * self.mean_loss


@dataclass(frozen=True)
class DescriptiveStats:
    """Per-variable sample statistics, optionally within one backup stratum."""

    variable: str
    condition: Optional[bool]
    count: int
    mean: float
    minimum: float
    maximum: float
    sd: float

    def as_row(self) -> dict:
        cond = "all" if self.condition is None else f"delta={int(self.condition)}"
        return {
            "variable": self.variable,
            "stratum": cond,
            "count": self.count,
            "mean": self.mean,
            "min": self.minimum,
            "max": self.maximum,
            "sd": self.sd,
        }


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes"):
        return True
    if t in ("0", "false", "no"):
        return False
    raise ValueError(f"cannot parse {text!r} as a 0/1 indicator")


def load_claims(
    path,
    column_map: Optional[Mapping[str, str]] = None,
    claim_frequency: float = DEFAULT_CLAIM_FREQUENCY,
    delimiter: str = ",",
) -> ClaimDataset:
    """Load a delimiter-separated claims file with a header row.

    ``column_map`` maps the six canonical field names (keys of
    :data:`DEFAULT_COLUMNS`) onto header names in the file.  Every row must
    parse; the first offending row aborts the load with its index.
    """
    colmap = dict(DEFAULT_COLUMNS)
    if column_map:
        unknown = set(column_map) - set(DEFAULT_COLUMNS)
        if unknown:
            raise SchemaError(f"unknown canonical fields in column map: {sorted(unknown)}")
        colmap.update(column_map)

    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle, delimiter=delimiter)
        if reader.fieldnames is None:
            raise EmptyDataError(f"{path}: file is empty")
        missing = [v for v in colmap.values() if v not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        records = []
        for i, row in enumerate(reader):
            try:
                rec = ClaimRecord(
                    loss=float(row[colmap["loss"]]),
                    duration=float(row[colmap["duration"]]),
                    service_type=row[colmap["service_type"]].strip(),
                    backup_activated=_parse_bool(row[colmap["backup_activated"]]),
                    backup_quality=float(row[colmap["backup_quality"]]),
                    backup_excess=float(row[colmap["backup_excess"]]),
                )
                rec.validate()
            except (ValueError, DomainError) as exc:
                raise RowError(i, str(exc)) from exc
            records.append(rec)
    if not records:
        raise EmptyDataError(f"{path}: no data rows")
    return ClaimDataset(records, claim_frequency=claim_frequency)


def describe(
    ds: ClaimDataset,
    variable: str = "loss",
    condition: Optional[bool] = None,
) -> DescriptiveStats:
    """Exact sample statistics of ``variable`` over the retained rows."""
    mask = ds.mask(condition)
    if not mask.any():
        raise EmptySelectionError(f"no claims with backup_activated={condition}")
    x = ds.column(variable)[mask]
    return DescriptiveStats(
        variable=variable,
        condition=condition,
        count=int(mask.sum()),
        mean=float(x.mean()),
        minimum=float(x.min()),
        maximum=float(x.max()),
        sd=float(x.std(ddof=0)),
    )


def describe_table(ds: ClaimDataset) -> list[DescriptiveStats]:
    """The standard descriptive block: loss and duration, overall and per stratum."""
    rows = []
    for cond in (None, True, False):
        for var in ("loss", "duration"):
            rows.append(describe(ds, var, cond))
    return rows


def correlation(
    ds: ClaimDataset,
    a: str,
    b: str,
    condition: Optional[bool] = None,
) -> float:
    """Pearson correlation of two numeric variables over the retained rows."""
    mask = ds.mask(condition)
    if mask.sum() < 2:
        raise EmptySelectionError("correlation needs at least two rows")
    x = ds.column(a)[mask]
    y = ds.column(b)[mask]
    sx = x.std(ddof=0)
    sy = y.std(ddof=0)
    if sx == 0.0 or sy == 0.0:
        raise DegenerateError("correlation undefined for a constant variable")
    r = float(((x - x.mean()) * (y - y.mean())).mean() / (sx * sy))
    return max(-1.0, min(1.0, r))


def annual_expectation(ds: ClaimDataset, g: Callable[[np.ndarray], np.ndarray]) -> float:
    """E[g(annual loss)] under the mixture: no claim with prob 1 - p.

    Evaluates ``g`` vectorised on the observed losses and at 0 for the
    no-claim atom; any non-finite value aborts with the offending record.
    """
    p = ds.claim_frequency
    g0 = float(np.asarray(g(np.zeros(1)), dtype=float)[0])
    vals = np.asarray(g(ds.loss), dtype=float)
    if not math.isfinite(g0):
        raise DataError("g(0) is not finite")
    if not np.all(np.isfinite(vals)):
        bad = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise DataError(
            f"g overflowed on record {bad} (loss={ds.loss[bad]:g})"
        )
    return (1.0 - p) * g0 + p * float(vals.mean())
