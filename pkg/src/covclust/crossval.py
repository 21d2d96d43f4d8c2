"""Threshold selection by cross-validation on random consecutive segments.

Each split draws one consecutive stretch of ``t1 + t2`` periods at a uniform
random offset, estimates a matrix on the first ``t1`` rows and another on the
remaining ``t2`` rows, and scores a candidate threshold ``s`` by the squared
Frobenius distance between the thresholded first estimate and the raw second
estimate.  The same splits score every grid point, so the loss curves differ
only through ``s``; the selected threshold minimizes the mean loss, with ties
broken toward the larger (sparser) value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DegenerateColumnError
from .matrices import SymMatrix
from .panel import TimeSeriesPanel, sample_covariance, spearman_matrix

__all__ = [
    "MatrixKind",
    "CvConfig",
    "CvTemplate",
    "CvResult",
    "default_grid",
    "draw_split",
    "empirical_loss",
    "select_threshold",
    "cv_result_to_json_obj",
]

MatrixKind = Literal["covariance", "spearman"]

_SEED_MASK = (1 << 63) - 1


def _estimate(panel: TimeSeriesPanel, matrix_kind: str) -> SymMatrix:
    if matrix_kind == "covariance":
        return sample_covariance(panel)
    if matrix_kind == "spearman":
        return spearman_matrix(panel)
    raise ValueError(f"unknown matrix_kind {matrix_kind!r}")


@dataclass(frozen=True)
class CvConfig:
    """Split sizes, replication count, candidate grid, and split-sampler seed.

    ``t1`` rows feed the estimate that gets thresholded and ``t2`` rows the
    comparison estimate; both must be at least 2 so each segment supports an
    estimator.  The grid must be sorted, nonempty, with a nonnegative first
    point.
    """

    t1: int
    t2: int
    grid: tuple[float, ...]
    n_splits: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.t1 < 2 or self.t2 < 2:
            raise ValueError(
                f"segment sizes must be >= 2, got t1={self.t1}, t2={self.t2}"
            )
        if self.n_splits < 1:
            raise ValueError(f"n_splits must be positive, got {self.n_splits}")
        grid = tuple(float(g) for g in self.grid)
        if not grid:
            raise ValueError("grid must be nonempty")
        if grid[0] < 0:
            raise ValueError(f"grid must start at >= 0, got {grid[0]}")
        if any(b < a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be sorted ascending")
        object.__setattr__(self, "grid", grid)


def default_grid(
    panel: TimeSeriesPanel, matrix_kind: str = "covariance", size: int = 50
) -> tuple[float, ...]:
    """Equally spaced thresholds from 0 to the largest full-sample off-diagonal magnitude."""
    if size < 1:
        raise ValueError(f"grid size must be positive, got {size}")
    est = _estimate(panel, matrix_kind).entries
    off = np.abs(est - np.diag(np.diag(est)))
    top = float(off.max())
    if top == 0.0 or size == 1:
        return (0.0,)
    return tuple(float(v) for v in np.linspace(0.0, top, size))


@dataclass(frozen=True)
class CvTemplate:
    """Recipe that turns a panel into a concrete :class:`CvConfig`.

    Each drawn segment covers about two thirds of the panel; its first third
    feeds the thresholded estimate and the remaining two thirds the
    comparison estimate.  Keeping the segment strictly shorter than the panel
    leaves room for genuinely different split offsets — a segment as long as
    the panel would pin every split to offset 0 and silently collapse the
    replication.
    """

    n_splits: int = 100
    grid_size: int = 50
    seed: int = 0

    def for_panel(self, panel: TimeSeriesPanel, matrix_kind: str = "covariance") -> CvConfig:
        t = panel.n_periods
        t1 = max(2, 2 * t // 9)
        t2 = min(2 * t1, t - t1)
        return CvConfig(
            t1=t1,
            t2=t2,
            grid=default_grid(panel, matrix_kind, self.grid_size),
            n_splits=self.n_splits,
            seed=self.seed,
        )


def draw_split(t: int, cfg: CvConfig, split_index: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """Row ranges ``((o, o + t1), (o + t1, o + t1 + t2))`` for one split.

    The offset ``o`` is uniform on ``{0, ..., t - t1 - t2}`` and depends only
    on ``(cfg.seed, split_index)``, so a split can be re-drawn independently
    of every other split.
    """
    if split_index < 0:
        raise ValueError(f"split_index must be >= 0, got {split_index}")
    need = cfg.t1 + cfg.t2
    if need > t:
        raise ValueError(f"t1 + t2 = {need} exceeds panel length {t}")
    rng = np.random.default_rng([cfg.seed & _SEED_MASK, split_index])
    offset = int(rng.integers(0, t - need + 1))
    return (offset, offset + cfg.t1), (offset + cfg.t1, offset + cfg.t1 + cfg.t2)


def _segment_estimates(
    panel: TimeSeriesPanel, splits, matrix_kind: str
) -> list[tuple[np.ndarray, np.ndarray]]:
    pairs = []
    for i, (r1, r2) in enumerate(splits):
        try:
            e1 = _estimate(panel.rows(*r1), matrix_kind)
            e2 = _estimate(panel.rows(*r2), matrix_kind)
        except DegenerateColumnError as exc:
            raise DegenerateColumnError(
                exc.labels, context=f"split {i}, rows {r1}/{r2}"
            ) from None
        pairs.append((e1.entries, e2.entries))
    return pairs


def _loss_at(e1: np.ndarray, e2: np.ndarray, s: float) -> float:
    kept = np.where(np.abs(e1) >= s, e1, 0.0)
    d = kept - e2
    return float(np.sum(d * d))


def empirical_loss(
    panel: TimeSeriesPanel, s: float, splits, matrix_kind: str = "covariance"
) -> float:
    """Mean squared-Frobenius validation loss of threshold ``s`` over ``splits``."""
    s = float(s)
    if not np.isfinite(s) or s < 0:
        raise ValueError(f"threshold must be finite and >= 0, got {s}")
    pairs = _segment_estimates(panel, list(splits), matrix_kind)
    return float(np.mean([_loss_at(e1, e2, s) for e1, e2 in pairs]))


@dataclass(frozen=True)
class CvResult:
    """Loss curve and selection from one cross-validation run.

    ``per_split_losses`` has shape ``(n_splits, len(grid))`` and is kept for
    diagnostics; ``losses`` is its column mean.  ``selected`` attains the
    minimum of ``losses`` and is the largest grid point that does so.
    """

    grid: tuple[float, ...]
    losses: tuple[float, ...]
    selected: float
    per_split_losses: np.ndarray
    t1: int
    t2: int
    n_splits: int
    seed: int


def select_threshold(
    panel: TimeSeriesPanel, cfg: CvConfig, matrix_kind: str = "covariance"
) -> CvResult:
    """Score every grid point on a common set of splits and pick the minimizer.

    All ``cfg.n_splits`` splits are drawn up front and reused across the whole
    grid, so the comparison between thresholds sees identical sampling noise.
    Exact ties in the mean loss are resolved toward the larger threshold.
    """
    t = panel.n_periods
    splits = [draw_split(t, cfg, i) for i in range(cfg.n_splits)]
    pairs = _segment_estimates(panel, splits, matrix_kind)
    per_split = np.empty((cfg.n_splits, len(cfg.grid)))
    for v, (e1, e2) in enumerate(pairs):
        for gi, s in enumerate(cfg.grid):
            per_split[v, gi] = _loss_at(e1, e2, s)
    losses = per_split.mean(axis=0)
    best = np.flatnonzero(losses == losses.min())[-1]
    per_split.setflags(write=False)
    return CvResult(
        grid=cfg.grid,
        losses=tuple(float(v) for v in losses),
        selected=float(cfg.grid[best]),
        per_split_losses=per_split,
        t1=cfg.t1,
        t2=cfg.t2,
        n_splits=cfg.n_splits,
        seed=cfg.seed,
    )


def cv_result_to_json_obj(res: CvResult) -> dict:
    """JSON-ready summary (the per-split loss matrix is deliberately omitted)."""
    return {
        "grid": [float(g) for g in res.grid],
        "losses": [float(v) for v in res.losses],
        "selected": float(res.selected),
        "seed": int(res.seed),
        "t1": int(res.t1),
        "t2": int(res.t2),
        "n_splits": int(res.n_splits),
    }
