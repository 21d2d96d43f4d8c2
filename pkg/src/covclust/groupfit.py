"""Groupwise index-model fitting by kernel-weighted local-linear iteration.

The response is modeled as a sum of one unknown ridge function per variable
group, each applied to a single linear index of that group's variables.  One
iteration (a) evaluates the current indices, (b) fits a local-linear surface
in index space at every observation to get a fitted level and per-group
slopes, and (c) re-solves for all index coefficients at once in a pooled
kernel-weighted least-squares step whose solution may be shifted by
nonnegative multipliers so that every constrained coefficient keeps the sign
of its screening correlation (a coefficient that would cross zero is pinned
exactly to zero instead).  Group coefficient vectors are renormalized after
every update: multi-variable groups to unit Euclidean norm, single-variable
groups to exactly 1 (their link absorbs scale and direction).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateResponseError, InsufficientDataError
from .panel import TimeSeriesPanel
from .pipeline import ModelSpec

__all__ = [
    "FitConfig",
    "IterationRecord",
    "GroupwiseFit",
    "kernel_weight",
    "fit",
    "predict",
    "explained_variation",
    "fit_to_json_obj",
    "links_to_csv",
]

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))


@dataclass(frozen=True)
class FitConfig:
    """Estimator knobs.

    ``bandwidth_rule`` is ``"rule_of_thumb"`` (1.06 times the index standard
    deviation times ``T**(-1/(4+S))``, recomputed every iteration) or
    ``"fixed"`` with one positive bandwidth per group in
    ``fixed_bandwidths``.
    """

    bandwidth_rule: str = "rule_of_thumb"
    fixed_bandwidths: tuple[float, ...] | None = None
    tolerance: float = 1e-6
    max_iter: int = 200
    link_grid_size: int = 100
    ridge_scale: float = 1e-8

    def __post_init__(self):
        if self.bandwidth_rule not in ("rule_of_thumb", "fixed"):
            raise ValueError(f"unknown bandwidth rule {self.bandwidth_rule!r}")
        if self.bandwidth_rule == "fixed":
            if not self.fixed_bandwidths or any(h <= 0 for h in self.fixed_bandwidths):
                raise ValueError("fixed bandwidths must be positive, one per group")
            object.__setattr__(
                self, "fixed_bandwidths", tuple(float(h) for h in self.fixed_bandwidths)
            )
        if self.tolerance <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.link_grid_size < 2:
            raise ValueError(f"link_grid_size must be >= 2, got {self.link_grid_size}")


@dataclass(frozen=True)
class IterationRecord:
    """One outer iteration: solutions, multipliers, and the step's objective.

    ``zeta`` is the unconstrained pooled solution, ``beta_raw`` the
    sign-constrained one, ``beta`` the renormalized state carried to the next
    iteration.  ``lam`` holds the nonnegative multipliers (zero wherever the
    unconstrained solution already had the right sign).
    """

    beta: np.ndarray
    beta_raw: np.ndarray
    zeta: np.ndarray
    lam: np.ndarray
    objective: float
    objective_increased: bool
    ridge_used: bool


@dataclass(frozen=True)
class GroupwiseFit:
    """Fitted groupwise index model.

    ``beta`` holds one unit-norm coefficient vector per group (singleton
    groups carry exactly 1.0); ``links`` one ``(grid, values)`` tabulation
    per group on ``link_grid_size`` points spanning that group's observed
    index range.  ``lam`` is the final signed multiplier diagonal (multiplier
    times constraint sign).  ``final_g``/``final_c`` are the last pooled
    normal-equation pieces, kept so the constrained step can be audited.
    """

    beta: tuple[np.ndarray, ...]
    links: tuple[tuple[np.ndarray, np.ndarray], ...]
    lam: np.ndarray
    iterations: int
    converged: bool
    r_squared: float
    trace: tuple[IterationRecord, ...]
    ridge_flagged: bool
    bandwidths: tuple[float, ...]
    final_g: np.ndarray
    final_c: np.ndarray


def kernel_weight(u, h) -> np.ndarray:
    """Product Gaussian kernel: ``prod_s pdf(u[..., s] / h[s]) / h[s]``.

    ``u`` may be a single displacement vector or any array whose last axis
    runs over index dimensions; ``h`` must be positive, one entry per
    dimension.
    """
    u = np.asarray(u, dtype=float)
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or u.shape[-1] != h.shape[0]:
        raise ValueError(f"bandwidth shape {h.shape} does not match u shape {u.shape}")
    if np.any(h <= 0) or not np.all(np.isfinite(h)):
        raise ValueError("bandwidths must be positive and finite")
    z = u / h
    dens = np.exp(-0.5 * np.sum(z * z, axis=-1))
    return dens / (np.prod(h) * _SQRT_2PI ** h.shape[0])


def _initial_direction(xg: np.ndarray, y: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Starting coefficients for one multi-variable group.

    The leading direction of the cross-covariance between the group's
    variables and the response, with each sign-constrained coordinate folded
    onto its feasible side.  When that cross-covariance is statistically
    indistinguishable from noise (as happens when the group's link is even),
    fall back to the dominant eigenvector of the response-weighted second
    moment of the group, folded the same way.
    """
    t, k = xg.shape
    xc = xg - xg.mean(axis=0)
    yc = y - y.mean()
    v = xc.T @ yc / t
    # ~2-sigma noise yardstick for each cross-covariance entry
    noise = 4.0 * k * float(np.mean(xc * xc)) * float(np.mean(yc * yc)) / t
    if float(v @ v) < noise:
        hess = (xc * yc[:, None]).T @ xc / t
        hess = (hess + hess.T) / 2.0
        eigvals, eigvecs = np.linalg.eigh(hess)
        v = eigvecs[:, int(np.argmax(np.abs(eigvals)))]
    out = np.where(signs != 0, signs * np.abs(v), v)
    norm = float(np.linalg.norm(out))
    if norm < 1e-12:
        out = np.where(signs != 0, signs.astype(float), 1.0)
        norm = float(np.linalg.norm(out))
    return out / norm


def _solve_with_guard(g: np.ndarray, rhs: np.ndarray, ridge: float):
    """Solve ``g x = rhs``; fall back to a ridge-stabilized system when needed."""
    try:
        x = np.linalg.solve(g, rhs)
        ok = np.all(np.isfinite(x)) and float(
            np.linalg.norm(g @ x - rhs)
        ) <= 1e-6 * (1.0 + float(np.linalg.norm(rhs)))
    except np.linalg.LinAlgError:
        ok = False
        x = None
    if ok:
        return x, False
    x = np.linalg.solve(g + ridge * np.eye(g.shape[0]), rhs)
    return x, True


def _sign_constrained_solve(
    g: np.ndarray, c: np.ndarray, d: np.ndarray, mask: np.ndarray, ridge: float
):
    """Minimize ``0.5 b'Gb - c'b`` subject to ``d_k b_k >= 0`` on masked coords.

    Active-set scheme: repeatedly solve with the active coordinates pinned to
    zero, move the worst sign violator into the active set, and release any
    active coordinate whose multiplier turns negative.  At the solution the
    multipliers satisfy ``G b - c = diag(lam * d)`` with ``lam >= 0`` and
    ``lam_k b_k = 0`` exactly.

    Returns ``(beta, lam, zeta, used_ridge)`` where ``zeta`` is the
    unconstrained solution.
    """
    k = len(c)
    used_ridge = False

    def solve_free(active: set):
        nonlocal used_ridge
        beta = np.zeros(k)
        free = [i for i in range(k) if i not in active]
        if free:
            sub = g[np.ix_(free, free)]
            sol, r = _solve_with_guard(sub, c[free], ridge)
            used_ridge = used_ridge or r
            beta[free] = sol
        return beta

    zeta = solve_free(set())
    release_tol = 1e-12 * (1.0 + float(np.max(np.abs(c))) if k else 1.0)
    active: set = set()
    beta = zeta
    lam = np.zeros(k)
    for _ in range(3 * k + 10):
        beta = solve_free(active)
        signed = d * beta
        violators = [
            i for i in range(k) if mask[i] and i not in active and signed[i] < 0.0
        ]
        if violators:
            active.add(min(violators, key=lambda i: signed[i]))
            continue
        grad = g @ beta - c
        lam = np.zeros(k)
        for i in active:
            lam[i] = d[i] * grad[i]
        negative = [i for i in active if lam[i] < -release_tol]
        if negative:
            active.remove(min(negative, key=lambda i: lam[i]))
            continue
        lam[lam < 0.0] = 0.0
        return beta, lam, zeta, used_ridge
    return beta, lam, zeta, used_ridge  # pragma: no cover - bounded fallback


def _bandwidths(v: np.ndarray, cfg: FitConfig, n_groups: int) -> np.ndarray:
    t, s = v.shape
    if cfg.bandwidth_rule == "fixed":
        if len(cfg.fixed_bandwidths) != n_groups:
            raise ValueError(
                f"{len(cfg.fixed_bandwidths)} fixed bandwidths for {n_groups} groups"
            )
        return np.array(cfg.fixed_bandwidths, dtype=float)
    sd = v.std(axis=0, ddof=1)
    h = 1.06 * sd * t ** (-1.0 / (4.0 + s))
    h[~np.isfinite(h) | (h <= 0.0)] = 1.0
    return h


def _local_linear_surface(v: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Fitted level and per-dimension slope at every observation.

    At each anchor ``i`` this solves the kernel-weighted least-squares fit of
    ``y_j`` on ``(1, v_j - v_i)`` with weights ``w[i, j]``, returning the
    intercepts (current fitted values) and the slope matrix.
    """
    t, s = v.shape
    d = v[None, :, :] - v[:, None, :]
    z = np.concatenate([np.ones((t, t, 1)), d], axis=2)
    a = np.einsum("ijk,ijl,ij->ikl", z, z, w, optimize=True)
    rhs = np.einsum("ijk,ij->ik", z, w * y[None, :], optimize=True)
    jitter = 1e-12 * np.einsum("ikk->i", a)
    a = a + jitter[:, None, None] * np.eye(s + 1)[None, :, :]
    coef = np.linalg.solve(a, rhs[:, :, None])[:, :, 0]
    return coef[:, 0], coef[:, 1:]


def _normalize_groups(beta_cat: np.ndarray, slices, d: np.ndarray, mask: np.ndarray):
    """Per-group renormalization and orientation; returns the new concatenation."""
    out = beta_cat.copy()
    for sl in slices:
        seg = out[sl]
        if sl.stop - sl.start == 1:
            out[sl] = 1.0
            continue
        norm = float(np.linalg.norm(seg))
        if norm < 1e-12:
            # fully zeroed group: restart from the feasible equal-weight point
            seg = np.where(d[sl] != 0, d[sl].astype(float), 1.0)
            norm = float(np.linalg.norm(seg))
        seg = seg / norm
        constrained = mask[sl] & (seg != 0.0)
        if not np.any(constrained):
            # orientation is free: make the largest coefficient positive
            pivot = int(np.argmax(np.abs(seg)))
            if seg[pivot] < 0.0:
                seg = -seg
        out[sl] = seg
    return out


def fit(panel: TimeSeriesPanel, spec: ModelSpec, cfg: FitConfig = FitConfig()) -> GroupwiseFit:
    """Estimate the groupwise index model described by ``spec`` on ``panel``.

    Iterates local-linear surface fitting and the sign-constrained pooled
    coefficient update until the largest coefficient change falls below
    ``cfg.tolerance`` or ``cfg.max_iter`` is reached; convergence status and
    the full per-iteration trace are part of the result.  After the
    coefficient iteration, per-group links are tabulated by backfitting
    one-dimensional local-linear smoothers on the final indices, and
    ``r_squared`` is computed from the tabulated model's predictions on the
    training panel.
    """
    x = panel.values
    y = x[:, spec.response]
    t = panel.n_periods
    groups = [np.array(g, dtype=int) for g in spec.groups]
    n_groups = len(groups)
    sizes = [len(g) for g in groups]
    k_total = sum(sizes)
    if t <= k_total:
        raise InsufficientDataError(
            f"need more periods than coefficients: T={t}, coefficients={k_total}"
        )
    for g in groups:
        if np.any(g < 0) or np.any(g >= panel.n_series):
            raise ValueError(f"group column index out of range: {g.tolist()}")

    offsets = np.cumsum([0] + sizes)
    slices = [slice(offsets[i], offsets[i + 1]) for i in range(n_groups)]
    d = np.zeros(k_total)
    for s, g in enumerate(groups):
        for pos, col in enumerate(g):
            d[offsets[s] + pos] = spec.sign_constraints.get(int(col), 0)
    # singleton coefficients are pinned to 1, so their sign is carried by the
    # link and the constraint machinery leaves them alone
    mask = (d != 0) & np.concatenate(
        [np.full(sz, sz > 1) for sz in sizes]
    )

    beta_cat = np.empty(k_total)
    for s, g in enumerate(groups):
        if sizes[s] == 1:
            beta_cat[slices[s]] = 1.0
        else:
            beta_cat[slices[s]] = _initial_direction(x[:, g], y, d[slices[s]])

    group_cols = [x[:, g] for g in groups]
    trace = []
    converged = False
    iterations = 0
    prev_objective = None
    ridge_flagged = False
    h = np.ones(n_groups)
    g_mat = np.zeros((k_total, k_total))
    c_vec = np.zeros(k_total)

    for it in range(cfg.max_iter):
        v = np.column_stack([group_cols[s] @ beta_cat[slices[s]] for s in range(n_groups)])
        h = _bandwidths(v, cfg, n_groups)
        disp = v[None, :, :] - v[:, None, :]
        w = kernel_weight(disp, h)
        level, slope = _local_linear_surface(v, y, w)

        r = np.empty((t, t, k_total))
        for s in range(n_groups):
            dx = group_cols[s][None, :, :] - group_cols[s][:, None, :]
            r[:, :, slices[s]] = slope[:, s][:, None, None] * dx
        g_mat = np.einsum("ijk,ijl,ij->kl", r, r, w, optimize=True)
        g_mat = (g_mat + g_mat.T) / 2.0
        resid0 = y[None, :] - level[:, None]
        c_vec = np.einsum("ijk,ij->k", r, w * resid0, optimize=True)

        ridge = cfg.ridge_scale * float(np.trace(g_mat))
        beta_raw, lam, zeta, used_ridge = _sign_constrained_solve(
            g_mat, c_vec, d, mask, ridge
        )
        ridge_flagged = ridge_flagged or used_ridge

        fitted = np.einsum("ijk,k->ij", r, beta_raw, optimize=True)
        w_total = float(np.sum(w))
        objective = float(np.sum(w * (resid0 - fitted) ** 2)) / w_total
        increased = (
            prev_objective is not None
            and objective > prev_objective + 1e-10 * max(1.0, abs(prev_objective))
        )
        prev_objective = objective

        beta_new = _normalize_groups(beta_raw, slices, d, mask)
        delta = float(np.max(np.abs(beta_new - beta_cat)))
        trace.append(
            IterationRecord(
                beta=beta_new.copy(),
                beta_raw=beta_raw.copy(),
                zeta=zeta.copy(),
                lam=lam.copy(),
                objective=objective,
                objective_increased=bool(increased),
                ridge_used=bool(used_ridge),
            )
        )
        beta_cat = beta_new
        iterations = it + 1
        if delta < cfg.tolerance:
            converged = True
            break

    final_lam = trace[-1].lam if trace else np.zeros(k_total)
    v = np.column_stack([group_cols[s] @ beta_cat[slices[s]] for s in range(n_groups)])
    h = _bandwidths(v, cfg, n_groups)
    links = _backfit_links(v, y, h, cfg.link_grid_size)

    betas = tuple(beta_cat[slices[s]].copy() for s in range(n_groups))
    provisional = GroupwiseFit(
        beta=betas,
        links=links,
        lam=final_lam * d,
        iterations=iterations,
        converged=converged,
        r_squared=float("nan"),
        trace=tuple(trace),
        ridge_flagged=ridge_flagged,
        bandwidths=tuple(float(b) for b in h),
        final_g=g_mat,
        final_c=c_vec,
    )
    r2 = explained_variation(provisional, panel, spec)
    object.__setattr__(provisional, "r_squared", float(r2))
    return provisional


def _smooth1d(v_train: np.ndarray, target: np.ndarray, h: float, v_eval: np.ndarray):
    """Local-linear smoother values at ``v_eval`` (Gaussian weights, bandwidth ``h``)."""
    dcol = v_train[None, :] - v_eval[:, None]
    w = np.exp(-0.5 * (dcol / h) ** 2)
    s0 = w.sum(axis=1)
    s1 = (w * dcol).sum(axis=1)
    s2 = (w * dcol * dcol).sum(axis=1)
    t0 = (w * target[None, :]).sum(axis=1)
    t1 = (w * dcol * target[None, :]).sum(axis=1)
    det = s0 * s2 - s1 * s1
    safe = det > 1e-12 * (s0 * s0 * h * h + 1e-300)
    out = np.where(safe, (s2 * t0 - s1 * t1) / np.where(safe, det, 1.0), t0 / np.maximum(s0, 1e-300))
    return out


def _backfit_links(v: np.ndarray, y: np.ndarray, h: np.ndarray, grid_size: int):
    """Tabulate one ridge function per index by backfitting 1-D smoothers.

    Component functions are centered over the training sample; the response
    mean is spread evenly across groups so the tabulated links sum to the
    fitted value without a separate intercept.
    """
    t, s = v.shape
    ybar = float(y.mean())
    resid = y - ybar
    m = np.zeros((t, s))
    for _ in range(50):
        delta = 0.0
        for j in range(s):
            partial = resid - m.sum(axis=1) + m[:, j]
            new = _smooth1d(v[:, j], partial, float(h[j]), v[:, j])
            new = new - new.mean()
            delta = max(delta, float(np.max(np.abs(new - m[:, j]))))
            m[:, j] = new
        if delta < 1e-9 * (1.0 + float(np.std(y))):
            break
    links = []
    for j in range(s):
        partial = resid - m.sum(axis=1) + m[:, j]
        mu = float(_smooth1d(v[:, j], partial, float(h[j]), v[:, j]).mean())
        grid = np.linspace(float(v[:, j].min()), float(v[:, j].max()), grid_size)
        vals = _smooth1d(v[:, j], partial, float(h[j]), grid) - mu + ybar / s
        grid.setflags(write=False)
        vals.setflags(write=False)
        links.append((grid, vals))
    return tuple(links)


def _eval_link(grid: np.ndarray, vals: np.ndarray, v: float) -> tuple[float, bool]:
    if v < grid[0]:
        slope = (vals[1] - vals[0]) / (grid[1] - grid[0])
        return float(vals[0] + slope * (v - grid[0])), True
    if v > grid[-1]:
        slope = (vals[-1] - vals[-2]) / (grid[-1] - grid[-2])
        return float(vals[-1] + slope * (v - grid[-1])), True
    return float(np.interp(v, grid, vals)), False


def predict(
    fit_result: GroupwiseFit,
    spec: ModelSpec,
    x,
    return_extrapolated: bool = False,
    allow_unconverged: bool = False,
):
    """Sum of tabulated links evaluated at the observation's group indices.

    ``x`` is one observation in panel column order.  Indices beyond a link's
    tabulated range are extended with the boundary slope; pass
    ``return_extrapolated=True`` to receive ``(value, extrapolated)`` and
    learn whether that happened.  Unconverged fits are refused unless
    ``allow_unconverged=True``.
    """
    if not fit_result.converged and not allow_unconverged:
        raise ValueError("fit did not converge; pass allow_unconverged=True to override")
    x = np.asarray(x, dtype=float)
    needed = max(c for g in spec.groups for c in g)
    if x.ndim != 1 or x.shape[0] <= needed:
        raise ValueError(
            f"observation must be a vector covering column {needed}, got shape {x.shape}"
        )
    total = 0.0
    extrapolated = False
    for s, g in enumerate(spec.groups):
        v = float(np.dot(x[list(g)], fit_result.beta[s]))
        grid, vals = fit_result.links[s]
        val, ex = _eval_link(grid, vals, v)
        total += val
        extrapolated = extrapolated or ex
    if return_extrapolated:
        return total, extrapolated
    return total


def explained_variation(
    fit_result: GroupwiseFit, panel: TimeSeriesPanel, spec: ModelSpec
) -> float:
    """``1 - SSE/SST`` of the tabulated model's predictions on ``panel``."""
    y = panel.values[:, spec.response]
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        raise DegenerateResponseError("response has zero variation")
    preds = np.array(
        [
            predict(fit_result, spec, row, allow_unconverged=True)
            for row in panel.values
        ]
    )
    sse = float(np.sum((y - preds) ** 2))
    return 1.0 - sse / sst


def fit_to_json_obj(fit_result: GroupwiseFit, spec: ModelSpec, labels) -> dict:
    """JSON-ready summary: per-group coefficients with labels, multipliers, diagnostics."""
    groups = []
    for s, g in enumerate(spec.groups):
        groups.append(
            {
                "variables": [labels[c] for c in g],
                "beta": [float(b) for b in fit_result.beta[s]],
            }
        )
    return {
        "groups": groups,
        "lambda": [float(v) for v in fit_result.lam],
        "iterations": int(fit_result.iterations),
        "converged": bool(fit_result.converged),
        "r_squared": float(fit_result.r_squared),
        "ridge_flagged": bool(fit_result.ridge_flagged),
    }


def links_to_csv(fit_result: GroupwiseFit, path) -> None:
    """Tabulated links, one row per grid point: ``group, v, g_hat``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "v", "g_hat"])
        for s, (grid, vals) in enumerate(fit_result.links):
            for gv, lv in zip(grid, vals):
                writer.writerow([s + 1, repr(float(gv)), repr(float(lv))])
