"""CSV tables and SVG scaling plots rendered from pipeline outputs.

Nothing here re-measures: every number comes from the files written by
the pipeline stages.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .bench import read_records, summarize
from .errors import AllOOM, MissingArtifact
from .scaling import efficiency_ratio, fit_from_json

ARCHS = ("transformer", "mamba")
REQUIRED = ("records.json", "fits/fits.json", "repr.json", "shifts.json")


# ---------------------------------------------------------------------------
# round-trippable CSV cells: ints verbatim, floats by repr, inf as "inf",
# missing values as the empty string


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def parse_cell(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_table(path: str | Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows([[format_cell(v) for v in row] for row in rows])


def read_table(path: str | Path) -> tuple[list[str], list[list]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [[parse_cell(c) for c in row] for row in reader]


# ---------------------------------------------------------------------------
# tables


def _ratio(num, den):
    if num is None or den is None:
        return None
    if den == 0:
        return None if num == 0 else math.inf
    return num / den


def ratio_table(records) -> tuple[list[str], list[list]]:
    if {r.architecture for r in records} < set(ARCHS):
        return ["N", "mem_ratio", "time_ratio"], []
    rows = efficiency_ratio(
        [r for r in records if r.architecture == "transformer"],
        [r for r in records if r.architecture == "mamba"],
    )
    return ["N", "mem_ratio", "time_ratio"], [[r.N, r.mem_ratio, r.time_ratio] for r in rows]


def summary_table(records, fits) -> tuple[list[str], list[list]]:
    archs = [a for a in ARCHS if any(r.architecture == a for r in records)]
    stats = {}
    for a in archs:
        try:
            stats[a] = summarize([r for r in records if r.architecture == a])[a]
        except AllOOM:
            stats[a] = None
    r2 = {(f["arch"], f["metric"]): f["r_squared"] for f in fits}

    def field(a, name):
        return getattr(stats[a], name) if stats[a] is not None else None

    names = [
        "mean_memory_gb",
        "std_memory_gb",
        "mean_time_ms",
        "std_time_ms",
        "max_n_completed",
        "oom_failures",
        "total_runs",
    ]
    rows = []
    for name in names:
        if name == "total_runs":
            rows.append([name] + [sum(r.architecture == a for r in records) for a in archs])
        elif name == "oom_failures":
            rows.append([name] + [sum(r.architecture == a and r.oom for r in records) for a in archs])
        else:
            rows.append([name] + [field(a, name) for a in archs])
    rows.append(["r2_quadratic_memory"] + [r2.get((a, "memory_gb")) if a == "transformer" else None for a in archs])
    rows.append(["r2_linear_memory"] + [r2.get((a, "memory_gb")) if a == "mamba" else None for a in archs])
    return ["metric"] + archs, rows


def layer_table(repr_data) -> tuple[list[str], list[list]]:
    """One row per (N, layer): Mamba velocity and final-token norm, transformer attention stats."""
    header = ["N", "layer", "ssm_velocity", "ssm_norm", "attn_entropy", "attn_distance"]
    lengths = sorted({int(n) for a in repr_data.values() for n in a})
    rows = []
    for n in lengths:
        m = repr_data.get("mamba", {}).get(str(n))
        t = repr_data.get("transformer", {}).get(str(n))
        depth = max(
            len(m["states"]["layers"]) if m else 0,
            len(t["attention"]["entropy_per_layer"]) if t else 0,
        )
        for i in range(depth):
            ml = m["states"]["layers"][i] if m and i < len(m["states"]["layers"]) else None
            rows.append(
                [
                    n,
                    i + 1,
                    ml["mean_velocity"] if ml else None,
                    ml["final_norm"] if ml else None,
                    t["attention"]["entropy_per_layer"][i] if t else None,
                    t["attention"]["distance_per_layer"][i] if t else None,
                ]
            )
    return header, rows


def context_table(repr_data) -> tuple[list[str], list[list]]:
    """Mean effective range, fraction used and CoV, with the Mamba/transformer advantage.

    For CoV lower is better, so its advantage is transformer over Mamba.
    """
    header = ["N", "metric", "mamba", "transformer", "advantage"]
    rows = []
    lengths = sorted({int(n) for a in repr_data.values() for n in a})
    for n in lengths:
        m = repr_data.get("mamba", {}).get(str(n), {}).get("context")
        t = repr_data.get("transformer", {}).get(str(n), {}).get("attention")
        span = t["span"] if t else None
        pairs = [
            ("mean_effective_range", m and m["mean_range"], span and span["mean"], False),
            ("fraction_used", m and m["fraction_used"], span and span["fraction"], False),
            ("cov", m and m["cv"], span and span["cv"], True),
        ]
        for name, mv, tv, inverse in pairs:
            adv = _ratio(tv, mv) if inverse else _ratio(mv, tv)
            rows.append([n, name, mv, tv, adv])
    return header, rows


def shift_table(shift_data) -> tuple[list[str], list[list]]:
    header = ["model", "label_source", "auc", "f1", "f1_optimal", "optimal_threshold", "tpr_at_fpr_0.1"]
    rows = []
    for arch in ("mamba", "transformer"):
        s = shift_data.get(arch)
        if s is None:
            continue
        thr = s["optimal_threshold"]
        rows.append(
            [
                arch,
                s["label_source"],
                s["auc"],
                s["f1_default"],
                s["f1_optimal"],
                math.inf if thr == "inf" else thr,
                s["tpr_at_fpr10"],
            ]
        )
    return header, rows


# ---------------------------------------------------------------------------
# SVG plots

_W, _H, _PAD = 640, 400, 60
_COLORS = {"transformer": "#c0392b", "mamba": "#2471a3"}


def _scale(lo, hi, a, b):
    span = (hi - lo) or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def scaling_svg(records, fits, metric: str) -> str:
    """Measured points (polyline + titled circles), fitted curve, OOM frontier."""
    attr = "peak_memory_gb" if metric == "memory_gb" else "mean_time_ms"
    label = "peak memory (GiB)" if metric == "memory_gb" else "mean time (ms)"
    ns = sorted({r.N for r in records})
    finite = [getattr(r, attr) for r in records if not r.oom]
    y_hi = max(finite) * 1.1 if finite else 1.0
    sx = _scale(0, max(ns) if ns else 1, _PAD, _W - _PAD / 2)
    sy = _scale(0, y_hi, _H - _PAD, _PAD / 2)
    fit_by = {(f["arch"], f["metric"]): fit_from_json(f) for f in fits}
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{escape(label)} vs N</text>',
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD / 2}" y2="{_H - _PAD}" stroke="black"/>',
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_PAD}" y2="{_PAD / 2}" stroke="black"/>',
        f'<text x="{_W / 2}" y="{_H - 20}" text-anchor="middle" font-size="12">N (tokens)</text>',
    ]
    for n in ns:
        out.append(f'<text x="{sx(n):.2f}" y="{_H - _PAD + 16}" text-anchor="middle" font-size="10">{n}</text>')
    for frac in (0.0, 0.5, 1.0):
        v = y_hi * frac
        out.append(f'<text x="{_PAD - 6}" y="{sy(v):.2f}" text-anchor="end" font-size="10">{v:.4g}</text>')
    for arch in ARCHS:
        recs = sorted((r for r in records if r.architecture == arch), key=lambda r: r.N)
        if not recs:
            continue
        color = _COLORS[arch]
        pts = [(r.N, getattr(r, attr)) for r in recs if not r.oom]
        coords = " ".join(f"{sx(n):.2f},{sy(v):.2f}" for n, v in pts)
        out.append(f'<polyline class="measured" data-arch="{arch}" fill="none" stroke="{color}" points="{coords}"/>')
        for n, v in pts:
            out.append(
                f'<circle cx="{sx(n):.2f}" cy="{sy(v):.2f}" r="3" fill="{color}">'
                f"<title>{arch} N={n}: {v!r}</title></circle>"
            )
        fit = fit_by.get((arch, metric))
        if fit is not None and pts:
            grid = np.linspace(min(ns), max(ns), 50)
            vals = np.clip(fit(grid), 0, y_hi)
            d = " ".join(("M" if i == 0 else "L") + f"{sx(g):.2f},{sy(v):.2f}" for i, (g, v) in enumerate(zip(grid, vals)))
            out.append(f'<path class="fit" data-arch="{arch}" d="{d}" fill="none" stroke="{color}" stroke-dasharray="4 3"/>')
        oom = [r.N for r in recs if r.oom]
        if oom:
            x = sx(min(oom))
            out.append(
                f'<line class="oom-frontier" data-arch="{arch}" x1="{x:.2f}" y1="{_PAD / 2}" x2="{x:.2f}" '
                f'y2="{_H - _PAD}" stroke="{color}" stroke-dasharray="2 2"/>'
            )
            out.append(f'<text x="{x + 4:.2f}" y="{_PAD / 2 + 12}" font-size="10" fill="{color}">{arch} OOM</text>')
    legend_y = _PAD / 2 + 30
    for i, arch in enumerate(ARCHS):
        out.append(f'<text x="{_W - 150}" y="{legend_y + 14 * i}" font-size="11" fill="{_COLORS[arch]}">{arch}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------


def _load_json(path: Path):
    if not path.exists():
        raise MissingArtifact(f"missing pipeline output {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def emit_report(in_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Render the five tables and two plots; returns the written paths."""
    in_dir = Path(in_dir)
    out_dir = Path(out_dir) if out_dir is not None else in_dir / "report"
    for rel in REQUIRED:
        if not (in_dir / rel).exists():
            raise MissingArtifact(f"missing pipeline output {in_dir / rel}")
    records = read_records(in_dir / "records.json")
    fits = _load_json(in_dir / "fits" / "fits.json")
    repr_data = _load_json(in_dir / "repr.json")
    shift_data = _load_json(in_dir / "shifts.json")
    out_dir.mkdir(parents=True, exist_ok=True)

    tables = {
        "ratios.csv": ratio_table(records),
        "summary.csv": summary_table(records, fits),
        "layer_dynamics.csv": layer_table(repr_data),
        "context.csv": context_table(repr_data),
        "shift_detection.csv": shift_table(shift_data),
    }
    written = []
    for name, (header, rows) in tables.items():
        write_table(out_dir / name, header, rows)
        written.append(out_dir / name)
    for metric, name in (("memory_gb", "memory_vs_n.svg"), ("time_ms", "time_vs_n.svg")):
        (out_dir / name).write_text(scaling_svg(records, fits, metric), encoding="utf-8")
        written.append(out_dir / name)
    return written
