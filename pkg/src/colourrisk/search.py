"""Exhaustive indicator-subset search through the PCA + ordinal-regression pipeline.

Every nonempty subset of a region's indicators (a 16-bit mask, 65535 of them
at full width) is standardized, reduced to the smallest component count
reaching the cumulative-variance threshold, and fitted against the weekly
risk levels. The minimum-misclassification record wins, with a fixed total
tie-break so the result is reproducible for any worker count.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass

import numpy as np

from . import ordreg, pca
from .ordreg import FitResult
from .panel import WeeklyPanel

__all__ = [
    "SearchConfig",
    "EvaluationRecord",
    "SearchResult",
    "DegenerateRegionError",
    "enumerate_subsets",
    "mask_columns",
    "evaluate_subset",
    "search_region",
    "pc_count_distribution",
    "error_by_nvars",
    "inclusion_percentages",
]

MAX_INDICATORS = 16
CHUNK = 4096


class DegenerateRegionError(RuntimeError):
    """Every subset of a region was invalid (e.g. fewer than two label classes)."""


@dataclass(frozen=True)
class SearchConfig:
    threshold: float = 0.90
    cap: int | None = None
    max_iter: int = 200
    tol: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")
        if self.cap is not None and self.cap < 1:
            raise ValueError(f"cap must be >= 1, got {self.cap}")


@dataclass(frozen=True)
class EvaluationRecord:
    """Outcome of one (region, subset-mask) trial.

    Invalid trials (zero-variance column, unidentifiable fit) carry
    valid=False with a reason; their numeric fields are None.
    """

    region: str
    mask: int
    n_vars: int
    r: int
    cum_var: float | None
    fit: FitResult | None
    error: float | None
    valid: bool
    reason: str | None = None

    def sort_key(self) -> tuple:
        """Total order for picking the best model: smallest error wins, then
        converged fits, fewer variables, fewer components, smaller mask."""
        converged = self.fit is not None and self.fit.converged
        return (self.error, 0 if converged else 1, self.n_vars, self.r, self.mask)


@dataclass(frozen=True)
class SearchResult:
    best: EvaluationRecord
    records: list[EvaluationRecord]


def enumerate_subsets(p: int = MAX_INDICATORS) -> range:
    """All nonempty masks over p variables, ascending: 1 .. 2^p - 1."""
    if not 1 <= p <= MAX_INDICATORS:
        raise ValueError(f"p must be in 1..{MAX_INDICATORS}, got {p}")
    return range(1, 1 << p)


def mask_columns(mask: int) -> list[int]:
    """0-based column indices selected by a subset mask."""
    if mask <= 0:
        raise ValueError(f"mask must be positive, got {mask}")
    return [i for i in range(mask.bit_length()) if mask >> i & 1]


class _RegionContext:
    """Per-region precompute shared by every subset evaluation.

    Columns are standardized once; a subset's standardized submatrix is just
    a column selection, which keeps the per-mask pipeline bit-identical to a
    from-scratch evaluation while skipping redundant passes.
    """

    def __init__(self, weekly: WeeklyPanel, cfg: SearchConfig):
        self.region = weekly.region
        self.cfg = cfg
        self.n_weeks = weekly.n_weeks
        self.p = weekly.k
        self.y = np.asarray(weekly.y, dtype=np.int64)
        X = np.asarray(weekly.X, dtype=float)
        n = X.shape[0]
        means = X.mean(axis=0)
        sds = X.std(axis=0, ddof=1) if n >= 2 else np.zeros(self.p)
        self.zero_var = frozenset(np.flatnonzero(sds == 0.0).tolist())
        safe = np.where(sds == 0.0, 1.0, sds)
        self.Z = (X - means) / safe
        self.n_classes = int(len(np.unique(self.y)))


def _invalid(ctx: _RegionContext, mask: int, n_vars: int, reason: str) -> EvaluationRecord:
    return EvaluationRecord(
        region=ctx.region,
        mask=mask,
        n_vars=n_vars,
        r=0,
        cum_var=None,
        fit=None,
        error=None,
        valid=False,
        reason=reason,
    )


def _evaluate_with_context(ctx: _RegionContext, mask: int) -> EvaluationRecord:
    cols = mask_columns(mask)
    n_vars = len(cols)
    if any(c in ctx.zero_var for c in cols):
        return _invalid(ctx, mask, n_vars, "zero variance")
    if ctx.n_weeks < 3:
        return _invalid(ctx, mask, n_vars, "fewer than 3 weeks")
    if ctx.n_classes < 2:
        return _invalid(ctx, mask, n_vars, "fewer than 2 label classes")
    Z_sub = ctx.Z[:, cols]
    try:
        model = pca.fit_pca(Z_sub)
    except pca.EigenSolverError as exc:
        return _invalid(ctx, mask, n_vars, f"eigensolver failure: {exc}")
    sel = pca.select_components(model, ctx.cfg.threshold, ctx.cfg.cap)
    scores = Z_sub @ model.loadings[: sel.r].T
    try:
        fit = ordreg.fit(scores, ctx.y, max_iter=ctx.cfg.max_iter, tol=ctx.cfg.tol)
    except (ValueError, ordreg.NumericalError) as exc:
        return _invalid(ctx, mask, n_vars, f"unidentifiable fit: {exc}")
    error = ordreg.misclassification_error(fit.model, scores, ctx.y)
    return EvaluationRecord(
        region=ctx.region,
        mask=mask,
        n_vars=n_vars,
        r=sel.r,
        cum_var=sel.cumulative,
        fit=fit,
        error=error,
        valid=True,
    )


def evaluate_subset(
    weekly: WeeklyPanel, mask: int, cfg: SearchConfig | None = None
) -> EvaluationRecord:
    """Run one subset through select -> standardize -> reduce -> fit -> error.

    Degenerate subsets (zero-variance column, unidentifiable fit) come back
    with valid=False and a reason instead of raising, so a sweep never aborts
    on one bad mask.
    """
    cfg = cfg or SearchConfig()
    if not 1 <= mask < (1 << weekly.k):
        raise ValueError(f"mask {mask} out of range for {weekly.k} variables")
    return _evaluate_with_context(_RegionContext(weekly, cfg), mask)


_WORKER_CTX: _RegionContext | None = None


def _worker_init(ctx: _RegionContext) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _worker_range(bounds: tuple[int, int]) -> list[EvaluationRecord]:
    lo, hi = bounds
    ctx = _WORKER_CTX
    return [_evaluate_with_context(ctx, mask) for mask in range(lo, hi)]


def search_region(
    weekly: WeeklyPanel, cfg: SearchConfig | None = None, workers: int = 1
) -> SearchResult:
    """Evaluate every nonempty subset of a region's indicators and pick the best.

    The sweep is a pure map over masks plus an argmin reduce under a total
    order, so results are identical for any worker count. Raises
    DegenerateRegionError when no subset produced a valid fit.
    """
    cfg = cfg or SearchConfig()
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    ctx = _RegionContext(weekly, cfg)
    masks = enumerate_subsets(weekly.k)
    bounds = [
        (lo, min(lo + CHUNK, masks.stop)) for lo in range(masks.start, masks.stop, CHUNK)
    ]
    if workers == 1 or len(bounds) == 1:
        _worker_init(ctx)
        records: list[EvaluationRecord] = []
        for b in bounds:
            records.extend(_worker_range(b))
    else:
        mp = multiprocessing.get_context("fork")
        with mp.Pool(processes=workers, initializer=_worker_init, initargs=(ctx,)) as pool:
            records = [rec for chunk in pool.map(_worker_range, bounds) for rec in chunk]
    valid = [rec for rec in records if rec.valid]
    if not valid:
        raise DegenerateRegionError(
            f"all {len(records)} subsets invalid for region {weekly.region!r}"
        )
    best = min(valid, key=EvaluationRecord.sort_key)
    return SearchResult(best=best, records=records)


def pc_count_distribution(records) -> np.ndarray:
    """Fractions of valid records that selected 1, 2, 3, and >= 4 components."""
    counts = np.zeros(4, dtype=np.int64)
    total = 0
    for rec in records:
        if not rec.valid:
            continue
        counts[min(rec.r, 4) - 1] += 1
        total += 1
    if total == 0:
        raise ValueError("no valid records")
    return counts / total


def error_by_nvars(records) -> list[dict]:
    """Per-subset-size error summary for one region (the error-vs-size figure data)."""
    by_n: dict[int, list[float]] = {}
    p = 0
    for rec in records:
        p = max(p, rec.n_vars)
        if rec.valid:
            by_n.setdefault(rec.n_vars, []).append(rec.error)
    rows = []
    for n in range(1, p + 1):
        errs = np.asarray(by_n.get(n, []), dtype=float)
        if errs.size:
            rows.append(
                {
                    "n_vars": n,
                    "count": int(errs.size),
                    "mean": float(errs.mean()),
                    "min": float(errs.min()),
                    "max": float(errs.max()),
                    "std": float(errs.std(ddof=1)) if errs.size > 1 else 0.0,
                }
            )
        else:
            rows.append(
                {"n_vars": n, "count": 0, "mean": float("nan"), "min": float("nan"),
                 "max": float("nan"), "std": float("nan")}
            )
    return rows


def inclusion_percentages(best_records, p: int = MAX_INDICATORS) -> np.ndarray:
    """Fraction of regions whose best model includes each indicator."""
    best_records = list(best_records)
    if not best_records:
        raise ValueError("no best records")
    counts = np.zeros(p)
    for rec in best_records:
        for c in mask_columns(rec.mask):
            counts[c] += 1
    return counts / len(best_records)
