"""Memory/latency measurement protocol.

For each sequence length: load a freshly seeded model onto a budgeted meter,
run the warm-up passes, reset the peak counter, then time the measured
passes.  Any :class:`OutOfBudget` turns the cell into an OOM record whose
memory and time are infinite.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import TokenCorpus, prepare_sequence, sequence_hash
from .errors import AllOOM, OutOfBudget
from .models import ModelConfig, architecture, forward, init_weights
from .tensor import AllocationMeter

log = logging.getLogger(__name__)

GIB = 1 << 30
DEFAULT_LENGTHS = (512, 1024, 2048, 4096, 8192)
MINI_LENGTHS = (128, 256, 512, 1024)


@dataclass
class BenchRecord:
    architecture: str
    N: int
    run_times_ms: list[float]
    mean_time_ms: float
    peak_memory_gb: float
    oom: bool

    def __post_init__(self):
        finite = math.isfinite(self.mean_time_ms)
        if self.oom == finite or finite != math.isfinite(self.peak_memory_gb):
            raise ValueError("oom must coincide with infinite time and memory")

    @classmethod
    def out_of_memory(cls, arch: str, n: int) -> "BenchRecord":
        return cls(arch, n, [], math.inf, math.inf, True)

    def to_json(self) -> dict:
        out = asdict(self)
        for key in ("mean_time_ms", "peak_memory_gb"):
            if math.isinf(out[key]):
                out[key] = "inf"
        return out

    @classmethod
    def from_json(cls, payload: dict) -> "BenchRecord":
        payload = dict(payload)
        for key in ("mean_time_ms", "peak_memory_gb"):
            payload[key] = float(payload[key])
        return cls(**payload)


def write_records(path: str | Path, records: list[BenchRecord]) -> None:
    Path(path).write_text(json.dumps([r.to_json() for r in records], indent=1), encoding="utf-8")


def read_records(path: str | Path) -> list[BenchRecord]:
    return [BenchRecord.from_json(r) for r in json.loads(Path(path).read_text(encoding="utf-8"))]


def run_benchmark(
    arch: str,
    config: ModelConfig,
    corpus: TokenCorpus,
    lengths,
    runs: int = 5,
    warmup: int = 2,
    budget_gb: float | None = 16.0,
    seed: int = 42,
    events: list | None = None,
) -> list[BenchRecord]:
    """Measure ``config`` at every length; failures become OOM records.

    ``events`` (if given) receives the protocol log as dicts with keys
    ``event``, ``arch``, ``N``, ``index`` and ``input_hash`` (SHA-256 of
    the token ids fed at that length).
    """
    lengths = list(lengths)
    if not lengths or lengths != sorted(lengths):
        raise ValueError("lengths must be a non-empty ascending sequence")
    if runs < 1 or warmup < 0:
        raise ValueError("need runs >= 1 and warmup >= 0")
    if arch != architecture(config):
        raise ValueError(f"config is for {architecture(config)}, not {arch}")
    budget = None if budget_gb is None else int(budget_gb * GIB)

    def emit(name, n, index=0):
        if events is not None:
            events.append({"event": name, "arch": arch, "N": n, "index": index, "input_hash": digest})

    records = []
    for n in lengths:
        ids = prepare_sequence(corpus, n)
        digest = sequence_hash(ids)
        meter = AllocationMeter(budget)
        weights = None
        try:
            with meter.active():
                weights = init_weights(config, seed)
            emit("load", n)
            for i in range(warmup):
                forward(config, weights, ids, meter=meter)
                emit("warmup", n, i)
            meter.reset_peak()
            emit("reset_peak", n)
            times = []
            for i in range(runs):
                start = time.perf_counter_ns()
                trace = forward(config, weights, ids, meter=meter)
                times.append((time.perf_counter_ns() - start) / 1e6)
                del trace
                emit("measure", n, i)
            records.append(
                BenchRecord(arch, n, times, float(np.mean(times)), meter.peak_bytes / GIB, False)
            )
            log.info("%s N=%d: %.3f ms, %.4f GiB", arch, n, records[-1].mean_time_ms, records[-1].peak_memory_gb)
        except OutOfBudget as exc:
            emit("oom", n)
            log.info("%s N=%d: out of budget (%s)", arch, n, exc)
            records.append(BenchRecord.out_of_memory(arch, n))
        finally:
            del weights
    return records


def protocol_violations(events: list[dict], warmup: int = 2, runs: int = 5) -> list[str]:
    """Check each (arch, N) cell followed load -> warmup* -> reset -> measure*."""
    expected = ["load"] + ["warmup"] * warmup + ["reset_peak"] + ["measure"] * runs
    cells: dict[tuple, list[str]] = {}
    for e in events:
        cells.setdefault((e["arch"], e["N"]), []).append(e["event"])
    problems = []
    for key, seq in cells.items():
        if seq and seq[-1] == "oom":
            if seq[:-1] != expected[: len(seq) - 1]:
                problems.append(f"{key}: {seq}")
        elif seq != expected:
            problems.append(f"{key}: {seq}")
    return problems


@dataclass
class ArchSummary:
    architecture: str
    mean_memory_gb: float
    std_memory_gb: float
    mean_time_ms: float
    std_time_ms: float
    max_n_completed: int
    oom_failures: int
    total: int
    degenerate: bool = False
    lengths: list[int] = field(default_factory=list)

    @property
    def oom_fraction(self) -> float:
        return self.oom_failures / self.total


def summarize(records: list[BenchRecord]) -> dict[str, ArchSummary]:
    """Per-architecture mean and sample std of finite values, max N, OOM fraction."""
    by_arch: dict[str, list[BenchRecord]] = {}
    for r in records:
        by_arch.setdefault(r.architecture, []).append(r)
    out = {}
    for arch, recs in by_arch.items():
        finite = [r for r in recs if not r.oom]
        if not finite:
            raise AllOOM(f"every {arch} record is out of memory")
        mem = np.array([r.peak_memory_gb for r in finite])
        tm = np.array([r.mean_time_ms for r in finite])
        single = len(finite) == 1
        out[arch] = ArchSummary(
            arch,
            float(mem.mean()),
            0.0 if single else float(mem.std(ddof=1)),
            float(tm.mean()),
            0.0 if single else float(tm.std(ddof=1)),
            max(r.N for r in finite),
            len(recs) - len(finite),
            len(recs),
            degenerate=single,
            lengths=[r.N for r in recs],
        )
    return out
