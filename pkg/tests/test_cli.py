import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from colourrisk import cli, panel
from oracles import pearson_textbook
from synth import daily_feed_csv

REGIONS_21 = [
    "Abruzzo", "Basilicata", "Calabria", "Campania", "Emilia-Romagna",
    "Friuli Venezia Giulia", "Lazio", "Liguria", "Lombardia", "Marche",
    "Molise", "P.A. Bolzano", "P.A. Trento", "Piemonte", "Puglia",
    "Sardegna", "Sicilia", "Toscana", "Umbria", "Valle d'Aosta", "Veneto",
]


def write_inputs(tmp_path: Path, regions, seed=1, n_weeks=6, **kwargs):
    daily, labels, pops = daily_feed_csv(regions, seed=seed, n_weeks=n_weeks, **kwargs)
    (tmp_path / "daily.csv").write_text(daily, encoding="utf-8")
    (tmp_path / "labels.csv").write_text(labels, encoding="utf-8")
    (tmp_path / "populations.csv").write_text(pops, encoding="utf-8")
    return tmp_path


def run_ingest(tmp_path: Path, out: Path, extra=()):
    runner = CliRunner()
    return runner.invoke(
        cli.main,
        [
            "ingest",
            "--daily", str(tmp_path / "daily.csv"),
            "--labels", str(tmp_path / "labels.csv"),
            "--populations", str(tmp_path / "populations.csv"),
            "--out", str(out),
            *extra,
        ],
    )


def tree_hashes(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def shrink_weekly_cache(out: Path, k: int) -> None:
    """Rewrite the weekly cache with only the first k indicator columns so the
    CLI sweep enumerates 2^k - 1 masks instead of 65535."""
    index_path = out / "weekly" / "index.json"
    index = json.loads(index_path.read_text())
    for region, entry in index["regions"].items():
        path = out / "weekly" / entry["file"]
        lines = path.read_text().splitlines()
        comment, header = lines[0], lines[1].split(",")
        kept = header[:4] + header[4 : 4 + k]
        rows = [",".join(line.split(",")[: 4 + k]) for line in lines[2:]]
        path.write_text("\n".join([comment, ",".join(kept), *rows]) + "\n")


class TestIngest:
    def test_happy_path_writes_21_region_files(self, tmp_path):
        src = write_inputs(tmp_path, REGIONS_21, n_weeks=2)
        out = tmp_path / "out"
        result = run_ingest(src, out)
        assert result.exit_code == 0, result.output
        files = list((out / "weekly").glob("*.csv"))
        assert len(files) == 21
        report = json.loads((out / "ingestion_report.json").read_text())
        assert len(report["weekly_regions"]) == 21
        assert "_meta" in report

    def test_missing_mapped_column_names_it(self, tmp_path):
        src = write_inputs(tmp_path, ["Marche"], n_weeks=2)
        text = (src / "daily.csv").read_text().replace("tamponi_test_molecolare", "tm_x")
        (src / "daily.csv").write_text(text)
        result = run_ingest(src, tmp_path / "out")
        assert result.exit_code == 2
        assert "tamponi_test_molecolare" in result.output

    def test_rerun_byte_identical(self, tmp_path):
        src = write_inputs(tmp_path, ["Marche", "Umbria"], n_weeks=3)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_ingest(src, out1).exit_code == 0
        assert run_ingest(src, out2).exit_code == 0
        assert tree_hashes(out1) == tree_hashes(out2)

    def test_white_weeks_dropped_and_counted(self, tmp_path):
        src = write_inputs(tmp_path, ["Marche", "Umbria"], n_weeks=4,
                           white_weeks={"Marche": 2})
        out = tmp_path / "out"
        assert run_ingest(src, out).exit_code == 0
        report = json.loads((out / "ingestion_report.json").read_text())
        assert report["labels"]["dropped_weeks"] == {"Marche": 1}
        assert report["weekly_regions"]["Marche"] == 3

    def test_inputs_never_mutated(self, tmp_path):
        src = write_inputs(tmp_path, ["Marche"], n_weeks=3)
        before = {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                  for p in src.glob("*.csv")}
        assert run_ingest(src, tmp_path / "out").exit_code == 0
        after = {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                 for p in src.glob("*.csv")}
        assert before == after


class TestCorrelate:
    def test_matrix_vs_textbook_oracle(self, tmp_path):
        src = write_inputs(tmp_path, ["Marche", "Umbria", "Lazio"], n_weeks=4)
        out = tmp_path / "out"
        assert run_ingest(src, out).exit_code == 0
        result = CliRunner().invoke(cli.main, ["correlate", "--out", str(out)])
        assert result.exit_code == 0, result.output

        with (out / "correlation_matrix.csv").open() as f:
            f.readline()  # provenance
            rows = list(csv.reader(f))
        header, body = rows[0], rows[1:]
        assert len(body) == 16 and len(header) == 17
        M = np.array([[float(v) for v in row[1:]] for row in body])
        assert np.all(np.diag(M) == 1.0)
        assert np.abs(M - M.T).max() <= 1e-12

        daily = cli._load_daily_cache(out)
        national = daily.values[:, daily.present.all(axis=0), :].sum(axis=0)
        for i, j in [(0, 1), (3, 10), (14, 15)]:
            assert abs(M[i, j] - pearson_textbook(national[:, i], national[:, j])) <= 1e-12

    def test_requires_cache(self, tmp_path):
        out = tmp_path / "empty"
        out.mkdir()
        result = CliRunner().invoke(cli.main, ["correlate", "--out", str(out)])
        assert result.exit_code == 2


@pytest.fixture()
def searched_dir(tmp_path):
    src = write_inputs(tmp_path, ["Marche", "Umbria"], seed=4, n_weeks=8)
    out = tmp_path / "out"
    assert run_ingest(src, out).exit_code == 0
    shrink_weekly_cache(out, k=4)
    result = CliRunner().invoke(cli.main, ["search", "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


class TestSearchCommand:
    def test_outputs_exist_and_are_complete(self, searched_dir):
        sdir = searched_dir / "search"
        for name in ["table1.csv", "table4.csv", "fig3_error_by_nvars.csv",
                     "fig4_inclusion.csv", "manifest.json",
                     "records_Marche.csv", "best_Marche.json"]:
            assert (sdir / name).exists(), name
        with (sdir / "records_Marche.csv").open() as f:
            f.readline()
            records = list(csv.DictReader(f))
        assert len(records) == 15  # 2^4 - 1 masks
        assert [int(r["mask"]) for r in records] == list(range(1, 16))

    def test_errors_are_multiples_of_week_count(self, searched_dir):
        with (searched_dir / "search" / "records_Marche.csv").open() as f:
            f.readline()
            for row in csv.DictReader(f):
                if row["valid"] == "1":
                    err = float(row["error"])
                    assert abs(err * 8 - round(err * 8)) <= 1e-12

    def test_worker_count_does_not_change_outputs(self, tmp_path):
        src = write_inputs(tmp_path, ["Marche"], seed=9, n_weeks=8)
        outs = []
        for label, workers in [("w1", "1"), ("w2", "2")]:
            out = tmp_path / label
            assert run_ingest(src, out).exit_code == 0
            shrink_weekly_cache(out, k=5)
            r = CliRunner().invoke(cli.main, ["search", "--workers", workers, "--out", str(out)])
            assert r.exit_code == 0, r.output
            hashes = tree_hashes(out / "search")
            hashes.pop("manifest.json")  # run log carries wall time and workers
            outs.append(hashes)
        assert outs[0] == outs[1]

    def test_table4_values_parse_as_plain_floats(self, searched_dir):
        with (searched_dir / "search" / "table4.csv").open() as f:
            f.readline()
            rows = list(csv.DictReader(f))
        assert rows
        for row in rows:
            assert "np.float" not in ",".join(v or "" for v in row.values())
            float(row["eta1"])
            float(row["eta2"])
            float(row["beta1"])

    def test_best_json_has_transform(self, searched_dir):
        info = json.loads((searched_dir / "search" / "best_Marche.json").read_text())
        assert info["n_vars"] >= 1
        assert info["r"] >= 1
        assert len(info["eta"]) == 2
        assert len(info["beta"]) == info["r"]
        assert info["transform"]["components"] == info["r"]
        assert len(info["variables"]) == info["n_vars"]


class TestJackknifeCommand:
    def test_seeded_rerun_byte_identical(self, tmp_path):
        src = write_inputs(tmp_path, ["Marche"], seed=12, n_weeks=8)
        out = tmp_path / "out"
        assert run_ingest(src, out).exit_code == 0
        shrink_weekly_cache(out, k=4)
        assert CliRunner().invoke(cli.main, ["search", "--out", str(out)]).exit_code == 0
        args = ["jackknife", "--seed", "33", "--iterations", "60", "--out", str(out)]
        assert CliRunner().invoke(cli.main, args).exit_code == 0
        first = tree_hashes(out / "jackknife")
        assert CliRunner().invoke(cli.main, args).exit_code == 0
        assert tree_hashes(out / "jackknife") == first
        summary = json.loads((out / "jackknife" / "Marche_summary.json").read_text())
        assert summary["n_converged"] + summary["n_nonconverged"] == 60
        assert set(summary["parameters"]) >= {"eta1", "eta2"}

    def test_svg_and_samples_flags(self, tmp_path):
        src = write_inputs(tmp_path, ["Marche"], seed=13, n_weeks=8)
        out = tmp_path / "out"
        assert run_ingest(src, out).exit_code == 0
        shrink_weekly_cache(out, k=3)
        assert CliRunner().invoke(cli.main, ["search", "--out", str(out)]).exit_code == 0
        r = CliRunner().invoke(cli.main, [
            "jackknife", "--seed", "1", "--iterations", "25",
            "--samples", "--svg", "--out", str(out),
        ])
        assert r.exit_code == 0, r.output
        assert (out / "jackknife" / "Marche.svg").read_text().startswith("<svg")
        samples = json.loads((out / "jackknife" / "Marche_samples.json").read_text())
        assert len(samples["samples"]) <= 25


class TestReport:
    def test_happy_path_and_hand_summed_totals(self, tmp_path):
        src = write_inputs(tmp_path, ["Marche", "Umbria"], seed=14, n_weeks=8)
        out = tmp_path / "out"
        assert run_ingest(src, out).exit_code == 0
        shrink_weekly_cache(out, k=4)
        assert CliRunner().invoke(cli.main, ["search", "--out", str(out)]).exit_code == 0
        assert CliRunner().invoke(
            cli.main, ["jackknife", "--seed", "2", "--iterations", "20", "--out", str(out)]
        ).exit_code == 0
        r = CliRunner().invoke(cli.main, ["report", "--out", str(out)])
        assert r.exit_code == 0, r.output
        report = json.loads((out / "report.json").read_text())

        # hand-sum the component-count tallies from the per-region record files
        tally = np.zeros(4)
        for region in ["Marche", "Umbria"]:
            with (out / "search" / f"records_{region}.csv").open() as f:
                f.readline()
                for row in csv.DictReader(f):
                    if row["valid"] == "1":
                        tally[min(int(row["r"]), 4) - 1] += 1
        expected = (tally / tally.sum()).tolist()
        assert report["search"]["pc_count_distribution_r1_to_r4plus"] == expected

        shares = report["population_shares"]
        assert shares is not None and len(shares) == 8
        for row in shares:
            assert abs(row["L"] + row["M"] + row["H"] - row["covered"]) <= 1e-12
        assert report["jackknife"] is not None
        assert (out / "report.txt").read_text().startswith("colourrisk")

    def test_missing_search_exits_2(self, tmp_path):
        src = write_inputs(tmp_path, ["Marche"], seed=15, n_weeks=6)
        out = tmp_path / "out"
        assert run_ingest(src, out).exit_code == 0
        r = CliRunner().invoke(cli.main, ["report", "--out", str(out)])
        assert r.exit_code == 2
        assert "search" in r.output


class TestWeeklyCacheRoundTrip:
    def test_cache_preserves_values(self, tmp_path):
        src = write_inputs(tmp_path, ["Marche", "Umbria"], seed=16, n_weeks=5)
        out = tmp_path / "out"
        assert run_ingest(src, out).exit_code == 0
        with open(src / "daily.csv", encoding="utf-8") as f:
            daily, _ = panel.parse_daily_csv(f)
        with open(src / "labels.csv", encoding="utf-8") as f:
            labels, _ = panel.parse_label_csv(f)
        direct = panel.aggregate_weekly(daily, labels)
        cached = cli._load_cached_panels(out)
        for p in direct.panels:
            assert np.array_equal(cached[p.region].X, p.X)
            assert np.array_equal(cached[p.region].y, p.y)
