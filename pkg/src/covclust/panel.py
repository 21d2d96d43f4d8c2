"""Time-series panels and the covariance/correlation estimators defined on them.

A panel is a ``T x J`` block of observations, one row per period.  The
estimators all share a fixed-summation-order implementation: every matrix
entry is a single pairwise dot product, so results are exactly symmetric,
exactly permutation-equivariant under column reordering, and bit-identical
from run to run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateColumnError, InsufficientDataError
from .matrices import SymMatrix

__all__ = [
    "TimeSeriesPanel",
    "standardize",
    "sample_covariance",
    "pearson_matrix",
    "spearman_matrix",
]


@dataclass(frozen=True)
class TimeSeriesPanel:
    """An ordered panel of ``T`` periods for ``J`` labeled series.

    Parameters
    ----------
    values : array_like
        ``T x J`` numeric block; every cell must be finite (missing values
        are rejected here, not imputed).
    labels : sequence of str
        Unique column names.
    time_index : sequence, optional
        Strictly increasing per-row stamps.  Purely descriptive; row order is
        authoritative for every estimator.
    """

    values: np.ndarray
    labels: tuple[str, ...]
    time_index: tuple | None = None

    def __post_init__(self):
        # order="C" so downstream reductions see one memory layout no matter
        # how the caller built the block; identical values then give
        # bit-identical estimates.
        arr = np.array(self.values, dtype=float, copy=True, order="C")
        if arr.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {arr.shape}")
        t, j = arr.shape
        if t < 2:
            raise ValueError(f"a panel needs at least 2 rows, got {t}")
        if j < 1:
            raise ValueError("a panel needs at least 1 column")
        if not np.all(np.isfinite(arr)):
            bad = np.argwhere(~np.isfinite(arr))[0]
            raise ValueError(
                f"non-finite value at row {bad[0]}, column {bad[1]}"
            )
        labels = tuple(str(l) for l in self.labels)
        if len(labels) != j:
            raise ValueError(f"{len(labels)} labels for {j} columns")
        if len(set(labels)) != len(labels):
            raise ValueError("labels must be unique")
        if self.time_index is not None:
            ti = tuple(self.time_index)
            if len(ti) != t:
                raise ValueError(f"time_index length {len(ti)} != {t} rows")
            if any(b <= a for a, b in zip(ti, ti[1:])):
                raise ValueError("time_index must be strictly increasing")
            object.__setattr__(self, "time_index", ti)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "labels", labels)

    @property
    def n_periods(self) -> int:
        return self.values.shape[0]

    @property
    def n_series(self) -> int:
        return self.values.shape[1]

    def column(self, label: str) -> np.ndarray:
        try:
            j = self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown label {label!r}") from None
        return self.values[:, j]

    def rows(self, start: int, stop: int) -> "TimeSeriesPanel":
        """Consecutive sub-panel ``[start, stop)`` with the time index sliced along."""
        if not 0 <= start < stop <= self.n_periods:
            raise ValueError(
                f"invalid row range [{start}, {stop}) for {self.n_periods} periods"
            )
        ti = self.time_index[start:stop] if self.time_index is not None else None
        return TimeSeriesPanel(self.values[start:stop], self.labels, ti)


def _find_degenerate(arr: np.ndarray, labels) -> list:
    return [labels[j] for j in range(arr.shape[1]) if np.all(arr[:, j] == arr[0, j])]


def standardize(p: TimeSeriesPanel) -> TimeSeriesPanel:
    """Center each column and scale it to unit sample standard deviation.

    The scale uses the ``T - 1`` divisor.  A constant column has no scale and
    raises :class:`DegenerateColumnError` naming every offending label.
    """
    bad = _find_degenerate(p.values, p.labels)
    if bad:
        raise DegenerateColumnError(bad, context="standardize")
    mean = p.values.mean(axis=0)
    sd = p.values.std(axis=0, ddof=1)
    return TimeSeriesPanel((p.values - mean) / sd, p.labels, p.time_index)


def _pairwise_gram(z: np.ndarray, scale: float) -> np.ndarray:
    """Symmetric matrix of ``dot(z_i, z_j) * scale`` with one dot per pair.

    Filling both triangles from the same dot product keeps the result exactly
    symmetric and independent of column order.
    """
    j = z.shape[1]
    out = np.empty((j, j))
    for a in range(j):
        for b in range(a, j):
            v = float(np.dot(z[:, a], z[:, b])) * scale
            out[a, b] = v
            out[b, a] = v
    return out


def sample_covariance(p: TimeSeriesPanel) -> SymMatrix:
    """Averaged outer products of demeaned rows, normalized by ``T`` (not ``T - 1``).

    Returns
    -------
    SymMatrix
        Positive semidefinite up to roundoff.
    """
    t = p.n_periods
    if t < 2:
        raise InsufficientDataError(f"sample covariance needs T >= 2, got {t}")
    centered = p.values - p.values.mean(axis=0)
    return SymMatrix(_pairwise_gram(centered, 1.0 / t), p.labels)


def _correlation_from_centered(centered: np.ndarray, labels) -> SymMatrix:
    j = centered.shape[1]
    gram = _pairwise_gram(centered, 1.0)
    diag = np.diag(gram)
    bad = [labels[k] for k in range(j) if diag[k] == 0.0]
    if bad:
        raise DegenerateColumnError(bad, context="correlation")
    denom = np.sqrt(diag)
    # One symmetric divisor (a*b == b*a exactly) rather than two sequential
    # divisions, which would break exact symmetry by a unit in the last place.
    corr = gram / (denom[:, None] * denom[None, :])
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return SymMatrix(corr, tuple(labels))


def pearson_matrix(p: TimeSeriesPanel) -> SymMatrix:
    """Pearson correlation matrix: unit diagonal, entries clipped to ``[-1, 1]``."""
    centered = p.values - p.values.mean(axis=0)
    return _correlation_from_centered(centered, p.labels)


def spearman_matrix(p: TimeSeriesPanel) -> SymMatrix:
    """Rank correlation matrix: Pearson correlation of per-column midranks.

    Ties receive the average of the ranks they span, so the result is
    invariant (bit-for-bit) under strictly increasing transforms of any
    column.  A column whose values are all tied carries no rank information
    and raises :class:`DegenerateColumnError`.
    """
    bad = _find_degenerate(p.values, p.labels)
    if bad:
        raise DegenerateColumnError(bad, context="spearman")
    ranks = np.column_stack(
        [rankdata(p.values[:, j], method="average") for j in range(p.n_series)]
    )
    centered = ranks - ranks.mean(axis=0)
    return _correlation_from_centered(centered, p.labels)
