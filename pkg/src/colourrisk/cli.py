"""Command-line pipeline: ingest -> correlate/search -> jackknife -> report.

Stages communicate through on-disk caches under the output directory, so the
expensive subset sweep never reruns for a report tweak. Every output embeds
the tool version and a hash of the semantic configuration (worker count and
paths excluded: they must not change results).

Exit codes: 0 success, 2 input/validation error, 3 internal numerical failure.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
import sys
import time
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import click
import numpy as np

from . import __version__, jackknife as jk, ordreg, pca, search as sweep
from .panel import (
    INDICATOR_IDS,
    INDICATOR_NAMES,
    ColourMap,
    ColumnMap,
    DailyPanel,
    IngestionError,
    LabelSeries,
    ValidationError,
    WeeklyPanel,
    aggregate_weekly,
    correlation_matrix,
    parse_daily_csv,
    parse_label_csv,
    parse_populations_csv,
    population_share_by_colour,
)

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

TIE_BREAK = "error, converged first, fewer variables, fewer components, smaller mask"


@dataclass(frozen=True)
class RunConfig:
    """Semantic knobs that determine results (not how or where they ran)."""

    threshold: float = 0.90
    cap: int | None = None
    statistic: str = "mean"
    seed: int | None = None
    iterations: int = 1000
    window_start: str = "2021-01-01"
    window_end: str = "2021-12-31"
    column_map: dict | None = None
    colour_map: dict | None = None

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "cap": self.cap,
            "statistic": self.statistic,
            "seed": self.seed,
            "iterations": self.iterations,
            "window_start": self.window_start,
            "window_end": self.window_end,
            "column_map": self.column_map,
            "colour_map": self.colour_map,
        }

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def meta(self) -> dict:
        return {"version": __version__, "config_hash": self.config_hash()}

    def csv_comment(self) -> str:
        return f"# colourrisk_version={__version__} config_hash={self.config_hash()}"


def _write_json(path: Path, payload: dict, cfg: RunConfig) -> None:
    payload = {"_meta": cfg.meta(), **payload}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _open_csv(path: Path, cfg: RunConfig):
    f = path.open("w", encoding="utf-8", newline="")
    f.write(cfg.csv_comment() + "\n")
    return f


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):  # incl. numpy scalars, whose repr differs
        return repr(float(value))
    return str(value)


def _safe_name(region: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "", region.replace(" ", "_"))


def _load_run_config(out: Path) -> RunConfig:
    path = out / "run_config.json"
    if not path.exists():
        raise ValidationError(f"missing ingest cache: {path} (run `colourrisk ingest` first)")
    raw = json.loads(path.read_text(encoding="utf-8"))
    raw.pop("_meta", None)
    return RunConfig(**raw)


def _load_cached_panels(out: Path) -> dict[str, WeeklyPanel]:
    index_path = out / "weekly" / "index.json"
    if not index_path.exists():
        raise ValidationError(f"missing weekly cache index: {index_path}")
    index = json.loads(index_path.read_text(encoding="utf-8"))
    panels = {}
    for region, entry in index["regions"].items():
        path = out / "weekly" / entry["file"]
        with path.open("r", encoding="utf-8") as f:
            f.readline()  # provenance comment
            panels[region] = WeeklyPanel.read_csv(f, region=region, aggregation=index["aggregation"])
    return panels


def _load_daily_cache(out: Path) -> DailyPanel:
    path = out / "daily_panel.csv"
    if not path.exists():
        raise ValidationError(f"missing daily cache: {path}")
    with path.open("r", encoding="utf-8") as f:
        f.readline()  # provenance comment
        return DailyPanel.read_csv(f)


def _load_labels_cache(out: Path) -> LabelSeries:
    path = out / "labels.csv"
    if not path.exists():
        raise ValidationError(f"missing labels cache: {path}")
    with path.open("r", encoding="utf-8") as f:
        f.readline()  # provenance comment
        return LabelSeries.read_csv(f)


def _run(fn) -> None:
    """Translate domain errors into the documented exit codes."""
    try:
        fn()
    except (IngestionError, ValidationError, ValueError, KeyError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except (ordreg.NumericalError, pca.EigenSolverError, np.linalg.LinAlgError, RuntimeError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Regional colour-classification risk models."""


@main.command()
@click.option("--daily", "daily_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--populations", "populations_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--column-map", "column_map_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--colour-map", "colour_map_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--statistic", type=click.Choice(["mean", "sum"]), default="mean", show_default=True)
@click.option("--window-start", default="2021-01-01", show_default=True)
@click.option("--window-end", default="2021-12-31", show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def ingest(daily_path, labels_path, populations_path, column_map_path, colour_map_path,
           statistic, window_start, window_end, out_dir):
    """Parse and validate inputs; cache daily, weekly, and label panels."""

    def body():
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        column_map = ColumnMap.from_file(column_map_path) if column_map_path else ColumnMap.default()
        colour_map = ColourMap.from_file(colour_map_path) if colour_map_path else ColourMap.default()
        window = (date.fromisoformat(window_start), date.fromisoformat(window_end))
        cfg = RunConfig(
            statistic=statistic,
            window_start=window_start,
            window_end=window_end,
            column_map={
                "date_column": column_map.date_column,
                "region_column": column_map.region_column,
                "indicators": {
                    k: ({"column": r.column} if r.column else {"difference_of": r.difference_of})
                    for k, r in column_map.rules.items()
                },
            },
            colour_map=dict(sorted(colour_map.mapping.items())),
        )

        with open(daily_path, "r", encoding="utf-8") as f:
            daily, report = parse_daily_csv(f, mapping=column_map, window=window)
        with open(labels_path, "r", encoding="utf-8") as f:
            labels, label_report = parse_label_csv(f, colour_map=colour_map)
        agg = aggregate_weekly(daily, labels, statistic=statistic)

        with _open_csv(out / "daily_panel.csv", cfg) as f:
            daily.write_csv(f)
        with _open_csv(out / "labels.csv", cfg) as f:
            labels.write_csv(f)
        weekly_dir = out / "weekly"
        weekly_dir.mkdir(exist_ok=True)
        index = {"aggregation": statistic, "regions": {}}
        for panel_ in agg.panels:
            fname = _safe_name(panel_.region) + ".csv"
            with _open_csv(weekly_dir / fname, cfg) as f:
                panel_.write_csv(f)
            index["regions"][panel_.region] = {"file": fname, "weeks": panel_.n_weeks}
        (weekly_dir / "index.json").write_text(
            json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        if populations_path:
            with open(populations_path, "r", encoding="utf-8") as f:
                populations = parse_populations_csv(f)
            _write_json(out / "populations.json", {"populations": populations}, cfg)
        _write_json(
            out / "ingestion_report.json",
            {
                "daily": report.to_dict(),
                "labels": label_report.to_dict(),
                "rejected_weeks": [list(t) for t in agg.rejected_weeks],
                "weekly_regions": {p.region: p.n_weeks for p in agg.panels},
            },
            cfg,
        )
        _write_json(out / "run_config.json", cfg.to_dict(), cfg)
        click.echo(f"ingested {len(daily.regions)} regions, {len(agg.panels)} weekly panels -> {out}")

    _run(body)


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, exists=True))
def correlate(out_dir):
    """National indicator correlation matrix from the daily cache."""

    def body():
        out = Path(out_dir)
        cfg = _load_run_config(out)
        daily = _load_daily_cache(out)
        # National series: per-date sums over regions, on dates every region reports.
        all_present = daily.present.all(axis=0)
        national = daily.values[:, all_present, :].sum(axis=0)
        result = correlation_matrix(national)
        names = [INDICATOR_NAMES[x] for x in INDICATOR_IDS]
        with _open_csv(out / "correlation_matrix.csv", cfg) as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["indicator", *names])
            for i, name in enumerate(names):
                w.writerow([name, *[_fmt(float(v)) if not np.isnan(v) else "undefined"
                                    for v in result.matrix[i]]])
        if result.constant_columns:
            click.echo(f"constant columns flagged: {list(result.constant_columns)}", err=True)
        click.echo(f"wrote {out / 'correlation_matrix.csv'}")

    _run(body)


def _rebuild_transform(weekly: WeeklyPanel, rec: sweep.EvaluationRecord) -> pca.FixedTransform:
    cols = sweep.mask_columns(rec.mask)
    scaler, Z = pca.standardize(weekly.X[:, cols])
    model = pca.fit_pca(Z)
    return pca.FixedTransform(scaler=scaler, model=model, r=rec.r)


@main.command("search")
@click.option("--threshold", type=float, default=0.90, show_default=True)
@click.option("--cap", type=int, default=None)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, exists=True))
def search_cmd(threshold, cap, workers, out_dir):
    """Exhaustive subset sweep per region; table and figure data files."""

    def body():
        out = Path(out_dir)
        base_cfg = _load_run_config(out)
        cfg = RunConfig(**{**base_cfg.to_dict(), "threshold": threshold, "cap": cap})
        panels = _load_cached_panels(out)
        sdir = out / "search"
        sdir.mkdir(exist_ok=True)
        scfg = sweep.SearchConfig(threshold=threshold, cap=cap)

        t0 = time.perf_counter()
        bests: dict[str, sweep.EvaluationRecord] = {}
        degenerate: dict[str, str] = {}
        pc_counts = np.zeros(4, dtype=np.int64)
        n_valid_records = 0
        fig3_path = sdir / "fig3_error_by_nvars.csv"
        with _open_csv(fig3_path, cfg) as fig3:
            w3 = csv.writer(fig3, lineterminator="\n")
            w3.writerow(["region", "n_vars", "count", "mean", "min", "max", "std"])
            for region in sorted(panels):
                weekly = panels[region]
                try:
                    result = sweep.search_region(weekly, scfg, workers=workers)
                except sweep.DegenerateRegionError as exc:
                    degenerate[region] = str(exc)
                    click.echo(f"degenerate region skipped: {region}: {exc}", err=True)
                    continue
                bests[region] = result.best
                for rec in result.records:
                    if rec.valid:
                        pc_counts[min(rec.r, 4) - 1] += 1
                        n_valid_records += 1
                with _open_csv(sdir / f"records_{_safe_name(region)}.csv", cfg) as f:
                    w = csv.writer(f, lineterminator="\n")
                    w.writerow(["mask", "n_vars", "r", "cum_var", "error",
                                "converged", "separation_flag", "valid", "reason"])
                    for rec in result.records:
                        w.writerow([
                            rec.mask, rec.n_vars, rec.r if rec.valid else "",
                            _fmt(rec.cum_var), _fmt(rec.error),
                            int(rec.fit.converged) if rec.fit else "",
                            int(rec.fit.separation_flag) if rec.fit else "",
                            int(rec.valid), rec.reason or "",
                        ])
                for row in sweep.error_by_nvars(result.records):
                    w3.writerow([region, row["n_vars"], row["count"], _fmt(row["mean"]),
                                 _fmt(row["min"]), _fmt(row["max"]), _fmt(row["std"])])
                best = result.best
                transform = _rebuild_transform(weekly, best)
                cols = sweep.mask_columns(best.mask)
                _write_json(
                    sdir / f"best_{_safe_name(region)}.json",
                    {
                        "region": region,
                        "mask": best.mask,
                        "variables": [f"X{c + 1}" for c in cols],
                        "variable_names": [INDICATOR_NAMES[f"X{c + 1}"] for c in cols],
                        "n_vars": best.n_vars,
                        "r": best.r,
                        "cum_var": best.cum_var,
                        "error": best.error,
                        "converged": best.fit.converged,
                        "separation_flag": best.fit.separation_flag,
                        "eta": best.fit.model.eta.tolist(),
                        "beta": best.fit.model.beta.tolist(),
                        "transform": json.loads(transform.to_json()),
                        "transform_hash": transform.content_hash(),
                    },
                    cfg,
                )
        wall = time.perf_counter() - t0

        with _open_csv(sdir / "table1.csv", cfg) as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["region", "n_input_variables", "n_components",
                        "cumulative_variance_pct", "misclassification_error_pct"])
            for region in sorted(bests):
                b = bests[region]
                w.writerow([region, b.n_vars, b.r,
                            _fmt(round(100.0 * b.cum_var, 2)),
                            _fmt(round(100.0 * b.error, 2))])
        with _open_csv(sdir / "table4.csv", cfg) as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["region", "eta1", "eta2", "beta1", "beta2", "beta3", "beta4"])
            for region in sorted(bests):
                b = bests[region]
                betas = list(b.fit.model.beta) + [None] * (4 - len(b.fit.model.beta))
                w.writerow([region, _fmt(float(b.fit.model.eta[0])),
                            _fmt(float(b.fit.model.eta[1])), *[_fmt(x) for x in betas[:4]]])
        if bests:
            inclusion = sweep.inclusion_percentages(bests.values())
            with _open_csv(sdir / "fig4_inclusion.csv", cfg) as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(["indicator", "name", "inclusion_fraction"])
                for i, xid in enumerate(INDICATOR_IDS):
                    w.writerow([xid, INDICATOR_NAMES[xid], _fmt(float(inclusion[i]))])
        _write_json(
            sdir / "manifest.json",
            {
                "threshold": threshold,
                "cap": cap,
                "tie_break": TIE_BREAK,
                "workers": workers,
                "wall_time_s": wall,
                "regions": sorted(bests),
                "degenerate_regions": degenerate,
                "pc_count_valid_records": int(n_valid_records),
                "pc_counts_r1_to_r4plus": pc_counts.tolist(),
            },
            cfg,
        )
        click.echo(f"searched {len(bests)} regions in {wall:.1f}s -> {sdir}")

    _run(body)


@main.command("jackknife")
@click.option("--seed", type=int, required=True)
@click.option("--iterations", type=int, default=1000, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--samples", "keep_samples", is_flag=True, help="also write raw per-iteration samples")
@click.option("--svg", "make_svg", is_flag=True, help="emit histogram SVGs")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, exists=True))
def jackknife_cmd(seed, iterations, workers, keep_samples, make_svg, out_dir):
    """Delete-one-day-per-week validation of each region's best model."""

    def body():
        out = Path(out_dir)
        base_cfg = _load_run_config(out)
        cfg = RunConfig(**{**base_cfg.to_dict(), "seed": seed, "iterations": iterations})
        daily = _load_daily_cache(out)
        labels = _load_labels_cache(out)
        panels = _load_cached_panels(out)
        sdir = out / "search"
        if not sdir.exists():
            raise ValidationError(f"missing search outputs under {sdir}")
        jdir = out / "jackknife"
        jdir.mkdir(exist_ok=True)
        plan = jk.ResamplePlan.build(daily, labels, seed=seed, iterations=iterations)

        unusable = []
        for region in sorted(panels):
            best_path = sdir / f"best_{_safe_name(region)}.json"
            if not best_path.exists():
                click.echo(f"no best model for {region}, skipping", err=True)
                continue
            info = json.loads(best_path.read_text(encoding="utf-8"))
            best = _record_from_best_json(info)
            if not best.fit.converged:
                click.echo(f"warning: best model for {region} did not converge; "
                           "resampling it anyway", err=True)
            dist = jk.jackknife_region(
                best, daily, labels, plan,
                statistic=base_cfg.statistic, workers=workers,
            )
            summary = jk.summarize(dist)
            if not dist.usable:
                unusable.append(region)
                click.echo(f"warning: {region}: >50% of refits failed to converge; "
                           "distribution flagged unusable", err=True)
            _write_json(jdir / f"{_safe_name(region)}_summary.json", summary, cfg)
            with _open_csv(jdir / f"{_safe_name(region)}_hist.csv", cfg) as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(["parameter", "bin_lo", "bin_hi", "count"])
                for j, name in enumerate(dist.parameter_names):
                    col = dist.samples[:, j]
                    if not col.size:
                        continue
                    counts, edges = np.histogram(col, bins=30)
                    for b in range(counts.size):
                        w.writerow([name, _fmt(float(edges[b])), _fmt(float(edges[b + 1])),
                                    int(counts[b])])
            if keep_samples:
                _write_json(
                    jdir / f"{_safe_name(region)}_samples.json",
                    {
                        "region": region,
                        "parameter_names": list(dist.parameter_names),
                        "samples": dist.samples.tolist(),
                    },
                    cfg,
                )
            if make_svg:
                svg_path = jdir / f"{_safe_name(region)}.svg"
                svg_path.write_text(_histogram_svg(dist), encoding="utf-8")
        _write_json(
            jdir / "manifest.json",
            {"seed": seed, "iterations": iterations, "unusable_regions": unusable},
            cfg,
        )
        click.echo(f"jackknifed {len(panels)} regions -> {jdir}")

    _run(body)


def _record_from_best_json(info: dict) -> sweep.EvaluationRecord:
    model = ordreg.OrdinalModel(
        eta=np.asarray(info["eta"], dtype=float),
        beta=np.asarray(info["beta"], dtype=float),
    )
    fit = ordreg.FitResult(
        model=model,
        nll=float("nan"),
        iterations=0,
        converged=bool(info["converged"]),
        separation_flag=bool(info["separation_flag"]),
        gradient_norm=float("nan"),
    )
    return sweep.EvaluationRecord(
        region=info["region"],
        mask=int(info["mask"]),
        n_vars=int(info["n_vars"]),
        r=int(info["r"]),
        cum_var=float(info["cum_var"]),
        fit=fit,
        error=float(info["error"]),
        valid=True,
    )


def _histogram_svg(dist: jk.CoefficientDistributions, bins: int = 30) -> str:
    """Small-multiples histogram, one panel per coefficient. Deterministic bytes."""
    panel_w, panel_h, margin = 220, 150, 30
    n = len(dist.parameter_names)
    width = n * (panel_w + margin) + margin
    height = panel_h + 2 * margin + 20
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="{margin}" y="{margin - 12}" font-size="13" font-family="sans-serif">'
        f"{dist.region}: refitted coefficient distributions "
        f"({dist.n_converged}/{dist.iterations} converged)</text>",
    ]
    for j, name in enumerate(dist.parameter_names):
        x0 = margin + j * (panel_w + margin)
        y0 = margin
        col = dist.samples[:, j]
        parts.append(
            f'<rect x="{x0}" y="{y0}" width="{panel_w}" height="{panel_h}" '
            'fill="none" stroke="#999"/>'
        )
        parts.append(
            f'<text x="{x0 + panel_w / 2:.1f}" y="{y0 + panel_h + 16}" font-size="11" '
            f'font-family="sans-serif" text-anchor="middle">{name}</text>'
        )
        if col.size:
            counts, edges = np.histogram(col, bins=bins)
            peak = max(int(counts.max()), 1)
            bw = panel_w / bins
            for b in range(bins):
                h = panel_h * counts[b] / peak
                parts.append(
                    f'<rect x="{x0 + b * bw:.2f}" y="{y0 + panel_h - h:.2f}" '
                    f'width="{bw:.2f}" height="{h:.2f}" fill="#4878a8"/>'
                )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False, exists=True))
def report(out_dir):
    """Consolidated JSON + human-readable summary of all prior stages."""

    def body():
        out = Path(out_dir)
        cfg = _load_run_config(out)
        ingestion_path = out / "ingestion_report.json"
        manifest_path = out / "search" / "manifest.json"
        if not ingestion_path.exists():
            raise ValidationError(f"missing ingestion report: {ingestion_path}")
        if not manifest_path.exists():
            raise ValidationError(f"missing search manifest: {manifest_path}")
        ingestion = json.loads(ingestion_path.read_text(encoding="utf-8"))
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))

        bests = {}
        for region in manifest["regions"]:
            info = json.loads(
                (out / "search" / f"best_{_safe_name(region)}.json").read_text(encoding="utf-8")
            )
            info.pop("_meta", None)
            info.pop("transform", None)
            bests[region] = info

        counts = np.asarray(manifest["pc_counts_r1_to_r4plus"], dtype=float)
        pc_dist = (counts / counts.sum()).tolist() if counts.sum() else None

        shares_section = None
        pop_path = out / "populations.json"
        if pop_path.exists():
            populations = json.loads(pop_path.read_text(encoding="utf-8"))["populations"]
            labels = _load_labels_cache(out)
            shares = population_share_by_colour(labels, populations)
            shares_section = [
                {
                    "week_start": w[0].isoformat(),
                    "week_end": w[1].isoformat(),
                    "L": float(shares.shares[i, 0]),
                    "M": float(shares.shares[i, 1]),
                    "H": float(shares.shares[i, 2]),
                    "covered": float(shares.covered[i]),
                }
                for i, w in enumerate(shares.windows)
            ]

        jack_section = {}
        jdir = out / "jackknife"
        if jdir.exists():
            for region in manifest["regions"]:
                spath = jdir / f"{_safe_name(region)}_summary.json"
                if spath.exists():
                    s = json.loads(spath.read_text(encoding="utf-8"))
                    s.pop("_meta", None)
                    jack_section[region] = s

        payload = {
            "ingestion": ingestion,
            "search": {
                "manifest": {k: v for k, v in manifest.items() if k != "_meta"},
                "best_models": bests,
                "pc_count_distribution_r1_to_r4plus": pc_dist,
            },
            "population_shares": shares_section,
            "jackknife": jack_section or None,
        }
        _write_json(out / "report.json", payload, cfg)

        lines = [
            f"colourrisk {__version__} consolidated report (config {cfg.config_hash()})",
            "",
            f"regions ingested: {len(ingestion['daily']['days_per_region'])}",
            f"weekly panels: {len(ingestion['weekly_regions'])}",
            "",
            "best models (region: vars, PCs, cum var %, error %):",
        ]
        for region in sorted(bests):
            b = bests[region]
            lines.append(
                f"  {region}: {b['n_vars']} vars, {b['r']} PCs, "
                f"{100 * b['cum_var']:.2f}%, error {100 * b['error']:.2f}%"
            )
        if pc_dist:
            lines.append("")
            lines.append(
                "component-count distribution over valid records (1, 2, 3, 4+): "
                + ", ".join(f"{100 * f:.2f}%" for f in pc_dist)
            )
        if jack_section:
            lines.append("")
            lines.append("jackknife convergence (region: converged/iterations):")
            for region in sorted(jack_section):
                s = jack_section[region]
                flag = "" if s["usable"] else "  [UNUSABLE]"
                lines.append(
                    f"  {region}: {s['n_converged']}/{s['iterations']}{flag}"
                )
        else:
            lines.append("")
            lines.append("jackknife: not run")
        (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
        click.echo(f"wrote {out / 'report.json'} and {out / 'report.txt'}")

    _run(body)


if __name__ == "__main__":
    main()
