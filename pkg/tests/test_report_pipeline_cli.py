import json
import logging
import math
import re

import pytest

from scalebench import cli
from scalebench.bench import BenchRecord, read_records
from scalebench.errors import MissingArtifact, StageError
from scalebench.pipeline import read_run_config, run_pipeline
from scalebench.report import (
    emit_report,
    format_cell,
    parse_cell,
    ratio_table,
    read_table,
    scaling_svg,
    write_table,
)

RUN_CFG = """\
[run]
seed = 7
config = mini
architectures = transformer, mamba

[corpus]
path = {corpus}

[bench]
lengths = 32, 64, 128
runs = 1
warmup = 0

[analyze]
length = 64

[shifts]
length = 64
"""


@pytest.fixture(scope="module")
def run_cfg(tmp_path_factory, corpus_dir):
    path = tmp_path_factory.mktemp("cfg") / "run.cfg"
    path.write_text(RUN_CFG.format(corpus=corpus_dir))
    return path


@pytest.fixture(scope="module")
def pipeline_out(tmp_path_factory, run_cfg):
    return run_pipeline(run_cfg, tmp_path_factory.mktemp("run") / "out")


# --- cells and tables ---------------------------------------------------------


@pytest.mark.parametrize("value", [0, 17, -3, 0.1, 1e-300, 2.5e10, math.inf, "mamba", None])
def test_cell_round_trip(value):
    assert parse_cell(format_cell(value)) == value


def test_table_round_trip(tmp_path):
    rows = [[128, 0.1 + 0.2, None], [256, math.inf, "x"]]
    write_table(tmp_path / "t.csv", ["N", "a", "b"], rows)
    assert read_table(tmp_path / "t.csv") == (["N", "a", "b"], rows)


def test_ratio_table_marks_oom_as_inf(tmp_path):
    recs = [
        BenchRecord("transformer", 128, [1.0], 1.0, 0.5, False),
        BenchRecord.out_of_memory("transformer", 256),
        BenchRecord("mamba", 128, [1.0], 1.0, 0.25, False),
        BenchRecord("mamba", 256, [2.0], 2.0, 0.5, False),
    ]
    header, rows = ratio_table(recs)
    write_table(tmp_path / "r.csv", header, rows)
    last = (tmp_path / "r.csv").read_text().splitlines()[-1]
    assert last == "256,inf,inf"
    assert rows[0][1] == 2.0


def test_ratio_table_needs_both_architectures():
    assert ratio_table([BenchRecord("mamba", 8, [1.0], 1.0, 0.1, False)])[1] == []


def test_svg_has_one_polyline_per_architecture():
    recs = [BenchRecord(a, n, [1.0], float(n), 0.001 * n, False) for a in ("transformer", "mamba") for n in (8, 16, 32)]
    svg = scaling_svg(recs, [], "memory_gb")
    assert len(re.findall(r'<polyline class="measured"', svg)) == 2
    assert svg.startswith("<svg")


# --- pipeline -----------------------------------------------------------------


def test_run_config_paths_are_relative_to_file(tmp_path, corpus_dir):
    (tmp_path / "sub").mkdir()
    cfg = tmp_path / "sub" / "run.cfg"
    cfg.write_text(RUN_CFG.format(corpus="../sessions"))
    parsed = read_run_config(cfg)
    assert parsed.corpus.resolve() == (tmp_path / "sessions").resolve()
    assert parsed.lengths == [32, 64, 128] and parsed.archs == ["transformer", "mamba"]


def test_pipeline_writes_all_artifacts(pipeline_out):
    for name in ("records.json", "fits/fits.json", "fits/ratios.csv", "repr.json", "shifts.json", "manifest.json"):
        assert (pipeline_out / name).is_file(), name
    manifest = json.loads((pipeline_out / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["config"] == "mini"
    assert set(manifest["outputs"]) >= {"records.json", "repr.json", "shifts.json"}
    assert len(read_records(pipeline_out / "records.json")) == 6


def test_pipeline_repr_has_both_architectures(pipeline_out):
    data = json.loads((pipeline_out / "repr.json").read_text())
    assert "attention" in data["transformer"]["64"]
    assert "context" in data["mamba"]["64"]


def test_pipeline_is_deterministic(tmp_path, run_cfg, pipeline_out):
    again = run_pipeline(run_cfg, tmp_path / "again")
    for name in ("repr.json", "shifts.json"):
        assert (again / name).read_bytes() == (pipeline_out / name).read_bytes()

    def memory_only(path):
        return [(r.architecture, r.N, r.peak_memory_gb, r.oom) for r in read_records(path)]

    assert memory_only(again / "records.json") == memory_only(pipeline_out / "records.json")
    fits_a = [f for f in json.loads((again / "fits/fits.json").read_text()) if f["metric"] == "memory_gb"]
    fits_b = [f for f in json.loads((pipeline_out / "fits/fits.json").read_text()) if f["metric"] == "memory_gb"]
    assert fits_a == fits_b


def test_pipeline_missing_corpus_is_bench_failure(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(RUN_CFG.format(corpus="nowhere"))
    with pytest.raises(StageError) as err:
        run_pipeline(cfg, tmp_path / "out")
    assert err.value.stage == "bench"


def test_report_from_pipeline(pipeline_out, tmp_path):
    written = emit_report(pipeline_out, tmp_path / "report")
    names = {p.name for p in written}
    assert names == {
        "ratios.csv", "summary.csv", "layer_dynamics.csv", "context.csv",
        "shift_detection.csv", "memory_vs_n.svg", "time_vs_n.svg",
    }  # fmt: skip
    header, rows = read_table(tmp_path / "report" / "ratios.csv")
    assert header == ["N", "mem_ratio", "time_ratio"] and [r[0] for r in rows] == [32, 64, 128]
    svg = (tmp_path / "report" / "memory_vs_n.svg").read_text()
    assert svg.count('class="measured"') == 2


def test_report_missing_artifact(tmp_path):
    with pytest.raises(MissingArtifact):
        emit_report(tmp_path)


# --- command line -------------------------------------------------------------


def test_cli_usage_errors(capsys):
    assert cli.main([]) == 1
    assert cli.main(["frobnicate"]) == 1
    assert cli.main(["bench", "--corpus", "x"]) == 1  # missing --out
    assert cli.main(["shifts", "--label-source", "file", "--corpus", "x", "--out", "y"]) == 1
    assert cli.main(["bench", "--corpus", "x", "--out", "y", "--runs", "0"]) == 1
    capsys.readouterr()


def test_cli_stage_failure(tmp_path, capsys):
    assert cli.main(["pipeline", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path / "o")]) == 2
    assert "[config]" in capsys.readouterr().err
    assert cli.main(["fit", "--records", str(tmp_path / "none.json"), "--out-dir", str(tmp_path)]) == 2


def test_cli_subcommands(tmp_path, corpus_dir):
    rec = tmp_path / "records.json"
    base = ["--config", "mini", "--arch", "both"]
    assert cli.main(["bench", "--corpus", str(corpus_dir), "--lengths", "16,32,48", "--runs", "1",
                     "--warmup", "0", "--out", str(rec), *base]) == 0  # fmt: skip
    assert len(read_records(rec)) == 6
    assert cli.main(["fit", "--records", str(rec), "--out-dir", str(tmp_path / "fits")]) == 0
    assert (tmp_path / "fits" / "crossover.json").is_file()
    out = tmp_path / "repr.json"
    assert cli.main(["analyze", "--corpus", str(corpus_dir), "--length", "32", "--out", str(out), *base]) == 0
    assert set(json.loads(out.read_text())) == {"transformer", "mamba"}
    out = tmp_path / "shifts.json"
    assert cli.main(["shifts", "--label-source", "synthetic", "--length", "32", "--arch", "mamba",
                     "--out", str(out)]) == 0  # fmt: skip
    assert json.loads(out.read_text())["mamba"]["label_source"] == "synthetic"


def test_cli_pipeline_and_report(tmp_path, run_cfg):
    out = tmp_path / "out"
    assert cli.main(["pipeline", "--config", str(run_cfg), "--out", str(out)]) == 0
    assert cli.main(["report", "--in", str(out), "--out", str(out / "report")]) == 0
    assert (out / "report" / "summary.csv").is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["invocation"][:2] == ["scalebench", "pipeline"]


def test_log_level_from_environment(monkeypatch):
    root = logging.getLogger()
    saved = root.level, list(root.handlers)
    try:
        root.handlers.clear()
        monkeypatch.setenv(cli.LOG_ENV, "DEBUG")
        cli.configure_logging()
        assert root.level == logging.DEBUG
        root.handlers.clear()
        monkeypatch.setenv(cli.LOG_ENV, "error")
        cli.configure_logging()
        assert root.level == logging.ERROR
    finally:
        root.handlers[:] = saved[1]
        root.setLevel(saved[0])
