"""End-to-end run: bench, fit, analyze and shifts driven by an INI file.

Example ``run.cfg``::

    [run]
    seed = 42
    config = mini
    architectures = transformer, mamba

    [corpus]
    path = sessions          ; relative to the config file

    [bench]
    lengths = 128, 256
    runs = 5
    warmup = 2
    budget_gb = 16

    [analyze]
    length = 128

    [shifts]
    segments = 4
    label_source = self-percentile
    length = 256
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .bench import run_benchmark, write_records
from .corpus import corpus_digest, corpus_files, load_corpus, load_ids, prepare_sequence
from .errors import StageError
from .models import init_weights, preset
from .representation import analyze_trace
from .scaling import write_fit_outputs
from .shifts import detect_shifts, read_labels, synthetic_shift_corpus

log = logging.getLogger(__name__)

ARCH_CHOICES = ("transformer", "mamba")
LABEL_SOURCES = ("self-percentile", "file", "synthetic")


def expand_archs(choice: str) -> list[str]:
    return list(ARCH_CHOICES) if choice == "both" else [choice]


# ---------------------------------------------------------------------------
# stage bodies (shared with the CLI subcommands)


def bench_stage(archs, config_name, corpus_dir, lengths, runs=5, warmup=2, budget_gb=16.0, seed=42, events=None):
    corpus = load_corpus(corpus_dir)
    records = []
    for arch in archs:
        records += run_benchmark(
            arch, preset(arch, config_name), corpus, lengths, runs, warmup, budget_gb, seed, events
        )
    return records


def analyze_stage(archs, config_name, corpus_dir, length, seed=42, window=50, probes=5) -> dict:
    ids = prepare_sequence(load_corpus(corpus_dir), length)
    out = {}
    for arch in archs:
        config = preset(arch, config_name)
        out[arch] = {str(length): analyze_trace(config, init_weights(config, seed), ids, window, probes)}
    return out


def shifts_stage(
    archs,
    config_name,
    corpus_dir=None,
    segments=4,
    label_source="self-percentile",
    labels_path=None,
    length=None,
    seed=42,
    synthetic_sequences=4,
) -> dict:
    """Shift reports per architecture.

    Corpus sessions are scored one sequence per file (truncated to
    ``length`` when given).  The synthetic source ignores the corpus and
    draws block-shift sequences of ``length`` tokens instead.
    """
    if label_source not in LABEL_SOURCES:
        raise ValueError(f"label source must be one of {LABEL_SOURCES}")
    labels = None
    if label_source == "synthetic":
        sequences, labels = synthetic_shift_corpus(seed, synthetic_sequences, length or 256, segments)
    else:
        sequences = [load_ids(p) for p in corpus_files(corpus_dir)]
        if length:
            sequences = [s[:length] for s in sequences]
        if label_source == "file":
            if labels_path is None:
                raise ValueError("label source 'file' needs a labels path")
            labels = read_labels(labels_path)
    out = {}
    for arch in archs:
        config = preset(arch, config_name)
        report = detect_shifts(config, init_weights(config, seed), sequences, segments, label_source, labels)
        out[arch] = report.to_json()
    return out


# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    seed: int
    config_name: str
    archs: list[str]
    corpus: Path
    lengths: list[int]
    runs: int
    warmup: int
    budget_gb: float | None
    analyze_length: int
    window: int
    probes: int
    segments: int
    label_source: str
    labels: Path | None
    shift_length: int | None
    synthetic_sequences: int
    source_text: str = field(repr=False, default="")


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def read_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file {path} does not exist")
    text = path.read_text(encoding="utf-8")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read_string(text, source=str(path))
    base = path.parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    archs_raw = cp.get("run", "architectures", fallback="transformer, mamba")
    archs = [a.strip() for a in archs_raw.split(",") if a.strip()]
    if archs == ["both"]:
        archs = list(ARCH_CHOICES)
    bad = [a for a in archs if a not in ARCH_CHOICES]
    if bad:
        raise ValueError(f"unknown architectures {bad}")
    budget = cp.get("bench", "budget_gb", fallback="16")
    labels = cp.get("shifts", "labels", fallback=None)
    shift_len = cp.getint("shifts", "length", fallback=0)
    lengths = _int_list(cp.get("bench", "lengths", fallback="128, 256, 512"))
    return RunConfig(
        seed=cp.getint("run", "seed", fallback=42),
        config_name=cp.get("run", "config", fallback="mini"),
        archs=archs,
        corpus=resolve(cp.get("corpus", "path")),
        lengths=lengths,
        runs=cp.getint("bench", "runs", fallback=5),
        warmup=cp.getint("bench", "warmup", fallback=2),
        budget_gb=None if budget.lower() == "none" else float(budget),
        analyze_length=cp.getint("analyze", "length", fallback=min(lengths)),
        window=cp.getint("analyze", "window", fallback=50),
        probes=cp.getint("analyze", "probes", fallback=5),
        segments=cp.getint("shifts", "segments", fallback=4),
        label_source=cp.get("shifts", "label_source", fallback="self-percentile"),
        labels=resolve(labels) if labels else None,
        shift_length=shift_len or None,
        synthetic_sequences=cp.getint("shifts", "sequences", fallback=4),
        source_text=text,
    )


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_pipeline(config_path: str | Path, out_dir: str | Path, argv: list[str] | None = None) -> Path:
    """Run every stage in order; the first failure is raised as :class:`StageError`."""
    started = _now()
    try:
        cfg = read_run_config(config_path)
    except Exception as exc:  # noqa: BLE001 - surfaced with its stage tag
        raise StageError("config", exc) from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def stage(name, fn):
        log.info("stage %s", name)
        try:
            return fn()
        except Exception as exc:  # noqa: BLE001
            raise StageError(name, exc) from exc

    records = stage(
        "bench",
        lambda: bench_stage(
            cfg.archs, cfg.config_name, cfg.corpus, cfg.lengths, cfg.runs, cfg.warmup, cfg.budget_gb, cfg.seed
        ),
    )
    write_records(out / "records.json", records)
    stage("fit", lambda: write_fit_outputs(records, out / "fits"))
    repr_data = stage(
        "analyze",
        lambda: analyze_stage(cfg.archs, cfg.config_name, cfg.corpus, cfg.analyze_length, cfg.seed, cfg.window, cfg.probes),
    )
    (out / "repr.json").write_text(json.dumps(repr_data, indent=1), encoding="utf-8")
    shift_data = stage(
        "shifts",
        lambda: shifts_stage(
            cfg.archs,
            cfg.config_name,
            cfg.corpus,
            cfg.segments,
            cfg.label_source,
            cfg.labels,
            cfg.shift_length,
            cfg.seed,
            cfg.synthetic_sequences,
        ),
    )
    (out / "shifts.json").write_text(json.dumps(shift_data, indent=1), encoding="utf-8")

    outputs = ["records.json", "fits/fits.json", "fits/ratios.csv", "fits/crossover.json", "repr.json", "shifts.json"]
    manifest = {
        "tool_version": __version__,
        "seed": cfg.seed,
        "config": cfg.config_name,
        "architectures": cfg.archs,
        "corpus_hash": corpus_digest(cfg.corpus),
        "run_config_hash": hashlib.sha256(cfg.source_text.encode()).hexdigest(),
        "invocation": argv if argv is not None else sys.argv,
        "started": started,
        "finished": _now(),
        "outputs": {name: _sha256(out / name) for name in outputs},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
    return out
