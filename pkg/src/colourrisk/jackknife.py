"""Delete-one-day-per-week resampling of a region's best model.

Each iteration removes one randomly chosen day from every labelled week (the
same calendar day for all regions), re-aggregates, pushes the weekly values
through the standardization and loadings frozen from the full data, and
refits only the ordinal regression. The spread of the refitted coefficients
measures how sensitive the selected model is to the data collection cadence.

Removal choices are a pure function of (seed, iteration, window), generated
with a counter-based RNG, so any worker layout reproduces the same plan.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass
from datetime import date

import numpy as np

from . import ordreg, pca
from .panel import DailyPanel, LabelSeries, ValidationError, aggregate_weekly
from .search import EvaluationRecord, mask_columns

__all__ = [
    "ResamplePlan",
    "CoefficientDistributions",
    "resample_days",
    "jackknife_region",
    "empirical_ci",
    "summarize",
]


@dataclass(frozen=True)
class ResamplePlan:
    """Removal schedule over the label week grid.

    `candidates[w]` holds the calendar days of window w that exist in the
    panel; iteration i removes exactly one of them per window, chosen
    uniformly by a Philox stream keyed on (seed, iteration, window).
    """

    seed: int
    iterations: int
    windows: tuple[tuple[date, date], ...]
    candidates: tuple[tuple[date, ...], ...]

    @classmethod
    def build(
        cls, daily: DailyPanel, labels: LabelSeries, seed: int, iterations: int = 1000
    ) -> "ResamplePlan":
        if iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {iterations}")
        grid = labels.week_grid()
        for (s1, e1), (s2, e2) in zip(grid, grid[1:]):
            if s2 <= e1 and s1 <= e2:
                raise ValidationError(
                    "label windows do not form a consistent week grid: "
                    f"{s1}..{e1} overlaps {s2}..{e2}"
                )
        have = set(daily.dates)
        candidates = []
        for start, end in grid:
            days = tuple(d for d in _span(start, end) if d in have)
            if len(days) < 2:
                raise ValidationError(
                    f"window {start}..{end} has {len(days)} available day(s); "
                    "need at least 2 to delete one"
                )
            candidates.append(days)
        return cls(
            seed=int(seed),
            iterations=int(iterations),
            windows=tuple(grid),
            candidates=tuple(candidates),
        )

    def removed_date(self, iteration: int, window_index: int) -> date:
        if not 0 <= iteration < self.iterations:
            raise ValueError(f"iteration {iteration} outside 0..{self.iterations - 1}")
        days = self.candidates[window_index]
        bit = np.random.Philox(
            key=self.seed, counter=[iteration, window_index, 0, 0]
        )
        idx = int(np.random.Generator(bit).integers(len(days)))
        return days[idx]

    def removed_dates(self, iteration: int) -> list[date]:
        return [self.removed_date(iteration, w) for w in range(len(self.windows))]


def _span(start: date, end: date) -> list[date]:
    from datetime import timedelta

    return [start + timedelta(days=i) for i in range((end - start).days + 1)]


def resample_days(daily: DailyPanel, plan: ResamplePlan, iteration: int) -> DailyPanel:
    """Panel with this iteration's planned day removed from every week window."""
    return daily.drop_dates(set(plan.removed_dates(iteration)))


@dataclass(frozen=True)
class CoefficientDistributions:
    """Refitted-coefficient samples from converged resampling iterations."""

    region: str
    parameter_names: tuple[str, ...]
    samples: np.ndarray  # (n_converged, n_parameters)
    full_data: np.ndarray  # (n_parameters,)
    iterations: int
    n_nonconverged: int
    usable: bool
    transform_hash: str

    @property
    def n_converged(self) -> int:
        return self.samples.shape[0]


def empirical_ci(samples, level: float) -> tuple[float, float]:
    """Central quantile interval with linear interpolation between order statistics."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 1 or samples.size < 10:
        raise ValueError(f"need at least 10 samples, got {samples.size}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(samples, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


SUMMARY_QUANTILES = (0.025, 0.25, 0.50, 0.75, 0.975)


def summarize(dist: CoefficientDistributions) -> dict:
    """Per-parameter summary quantiles plus convergence accounting."""
    out = {
        "region": dist.region,
        "iterations": dist.iterations,
        "n_converged": dist.n_converged,
        "n_nonconverged": dist.n_nonconverged,
        "usable": dist.usable,
        "transform_hash": dist.transform_hash,
        "parameters": {},
    }
    for j, name in enumerate(dist.parameter_names):
        col = dist.samples[:, j]
        entry = {"full_data": float(dist.full_data[j])}
        if col.size:
            qs = np.quantile(col, SUMMARY_QUANTILES)
            entry.update(
                {f"q{100 * q:g}": float(v) for q, v in zip(SUMMARY_QUANTILES, qs)}
            )
            entry["mean"] = float(col.mean())
        out["parameters"][name] = entry
    return out


@dataclass(frozen=True)
class _JackTask:
    daily: DailyPanel
    labels: LabelSeries
    plan: ResamplePlan
    region: str
    cols: tuple[int, ...]
    transform: pca.FixedTransform
    statistic: str
    max_iter: int
    tol: float
    window_plan_idx: tuple[int, ...]
    full_days: tuple[int, ...]
    avail_days: tuple[frozenset, ...]


_JACK_TASK: _JackTask | None = None


def _jack_init(task: _JackTask) -> None:
    global _JACK_TASK
    _JACK_TASK = task


def _jack_range(bounds: tuple[int, int]) -> list[tuple[bool, list[float]]]:
    t = _JACK_TASK
    out = []
    for iteration in range(*bounds):
        removed = t.plan.removed_dates(iteration)
        resampled = t.daily.drop_dates(set(removed))
        agg = aggregate_weekly(resampled, t.labels, statistic=t.statistic, min_days=1)
        wk = agg.panel_for(t.region)
        for j, (pidx, full_d) in enumerate(zip(t.window_plan_idx, t.full_days)):
            expect = full_d - (1 if removed[pidx] in t.avail_days[j] else 0)
            if wk.days_per_week[j] != expect:
                raise RuntimeError(
                    f"iteration {iteration}: window {wk.windows[j]} has "
                    f"{wk.days_per_week[j]} days, expected {expect}"
                )
        scores = pca.project(
            t.transform.scaler, t.transform.model, wk.X[:, t.cols], t.transform.r
        )
        fit = ordreg.fit(scores, wk.y, max_iter=t.max_iter, tol=t.tol)
        params = [float(fit.model.eta[0]), float(fit.model.eta[1])] + [
            float(b) for b in fit.model.beta
        ]
        out.append((fit.converged, params))
    return out


def jackknife_region(
    best: EvaluationRecord,
    daily: DailyPanel,
    labels: LabelSeries,
    plan: ResamplePlan,
    statistic: str = "mean",
    max_iter: int = 200,
    tol: float = 1e-8,
    workers: int = 1,
) -> CoefficientDistributions:
    """Resample a region's best model under its frozen reduction transform.

    The scaler and loadings come from the full data and never move; only the
    ordinal regression is refitted per iteration. Non-converged refits are
    counted and excluded from the samples; if they exceed half the
    iterations the distribution is marked unusable.
    """
    if not best.valid:
        raise ValueError(f"best record for {best.region!r} is not valid")
    if best.fit is None:
        raise ValueError("best record carries no fitted model")
    region = best.region
    region_entries = LabelSeries(
        entries=tuple(e for e in labels.entries if e.region == region)
    )
    if not region_entries.entries:
        raise ValidationError(f"no label entries for region {region!r}")
    daily_r = daily.restrict([region])

    full = aggregate_weekly(daily_r, region_entries, statistic=statistic).panel_for(region)
    cols = tuple(mask_columns(best.mask))
    scaler, Z = pca.standardize(full.X[:, cols])
    model = pca.fit_pca(Z)
    transform = pca.FixedTransform(scaler=scaler, model=model, r=best.r)
    hash_before = transform.content_hash()

    window_pos = {w: i for i, w in enumerate(plan.windows)}
    plan_idx = []
    avail = []
    date_idx = {d: i for i, d in enumerate(daily_r.dates)}
    ri = daily_r.region_index(region)
    for start, end in full.windows:
        if (start, end) not in window_pos:
            raise ValidationError(f"window {start}..{end} missing from the resample plan")
        plan_idx.append(window_pos[(start, end)])
        avail.append(
            frozenset(
                d for d in _span(start, end)
                if d in date_idx and daily_r.present[ri, date_idx[d]]
            )
        )

    task = _JackTask(
        daily=daily_r,
        labels=region_entries,
        plan=plan,
        region=region,
        cols=cols,
        transform=transform,
        statistic=statistic,
        max_iter=max_iter,
        tol=tol,
        window_plan_idx=tuple(plan_idx),
        full_days=full.days_per_week,
        avail_days=tuple(avail),
    )
    bounds = _iteration_bounds(plan.iterations, workers)
    if workers == 1 or len(bounds) == 1:
        _jack_init(task)
        results = [row for b in bounds for row in _jack_range(b)]
    else:
        mp = multiprocessing.get_context("fork")
        with mp.Pool(processes=workers, initializer=_jack_init, initargs=(task,)) as pool:
            results = [row for chunk in pool.map(_jack_range, bounds) for row in chunk]

    hash_after = transform.content_hash()
    if hash_after != hash_before:
        raise RuntimeError("frozen transform changed during resampling")

    names = ("eta1", "eta2") + tuple(f"beta{i + 1}" for i in range(best.r))
    converged_rows = [params for ok, params in results if ok]
    n_nonconverged = len(results) - len(converged_rows)
    samples = (
        np.asarray(converged_rows, dtype=float)
        if converged_rows
        else np.empty((0, 2 + best.r))
    )
    full_params = np.array(
        [best.fit.model.eta[0], best.fit.model.eta[1], *best.fit.model.beta]
    )
    return CoefficientDistributions(
        region=region,
        parameter_names=names,
        samples=samples,
        full_data=full_params,
        iterations=plan.iterations,
        n_nonconverged=n_nonconverged,
        usable=n_nonconverged <= plan.iterations // 2,
        transform_hash=hash_before,
    )


def _iteration_bounds(iterations: int, workers: int) -> list[tuple[int, int]]:
    chunk = max(1, min(64, (iterations + workers - 1) // max(workers, 1)))
    return [(lo, min(lo + chunk, iterations)) for lo in range(0, iterations, chunk)]
