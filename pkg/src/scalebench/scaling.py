"""Cost-curve fitting, efficiency ratios, and crossover points.

Memory and time are modelled as ``alpha*N^2 + beta*N + gamma`` for
attention and ``alpha'*N + gamma'`` for the recurrent stack.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .bench import BenchRecord
from .errors import DegenerateDesign, InsufficientPoints, NotApplicable

_DEGREE = {"quadratic": 2, "linear": 1}


@dataclass(frozen=True)
class FitResult:
    kind: str
    coefficients: tuple[float, ...]  # highest power first
    r_squared: float
    points_used: int
    points_excluded: int = 0

    def __call__(self, n):
        return np.polyval(self.coefficients, np.asarray(n, dtype=np.float64))

    def padded(self) -> tuple[float, float, float]:
        """Coefficients as (N^2, N, 1), zero-filled for linear fits."""
        c = tuple(self.coefficients)
        return (0.0,) * (3 - len(c)) + c


def fit_cost_curve(points, kind: str) -> FitResult:
    """Ordinary least squares in the monomial basis via normal equations.

    Non-finite values (OOM cells) are dropped before fitting.  N is scaled
    by its maximum before forming the normal equations to keep them well
    conditioned; coefficients are reported in unscaled units.
    """
    if kind not in _DEGREE:
        raise ValueError(f"kind must be one of {sorted(_DEGREE)}")
    degree = _DEGREE[kind]
    pts = [(float(n), float(v)) for n, v in points]
    finite = [(n, v) for n, v in pts if math.isfinite(n) and math.isfinite(v)]
    if len(finite) < degree + 1:
        raise InsufficientPoints(f"{kind} fit needs {degree + 1} finite points, got {len(finite)}")
    n = np.array([p[0] for p in finite])
    y = np.array([p[1] for p in finite])
    if len(np.unique(n)) < degree + 1:
        raise DegenerateDesign("too few distinct N values for the requested degree")
    scale = float(np.max(np.abs(n))) or 1.0
    X = np.vander(n / scale, degree + 1)
    gram = X.T @ X
    if np.linalg.matrix_rank(gram) < degree + 1:
        raise DegenerateDesign("singular normal equations")
    coef_scaled = np.linalg.solve(gram, X.T @ y)
    coef = coef_scaled / scale ** np.arange(degree, -1, -1)
    resid = y - np.polyval(coef, n)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-24 * max(1.0, float(y @ y)) else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return FitResult(kind, tuple(float(c) for c in coef), r2, len(finite), len(pts) - len(finite))


def loglog_slope(ns, values) -> float:
    """Slope of the least-squares line through (log N, log value)."""
    ns, values = np.asarray(ns, dtype=float), np.asarray(values, dtype=float)
    if np.any(values <= 0):
        raise ValueError("log-log slope needs positive values")
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


@dataclass(frozen=True)
class RatioRow:
    N: int
    mem_ratio: float
    time_ratio: float
    transformer_oom: bool = False
    mamba_oom: bool = False


def efficiency_ratio(records_t: list[BenchRecord], records_m: list[BenchRecord]) -> list[RatioRow]:
    """Transformer-over-Mamba memory and time ratios at each shared N.

    Transformer OOM yields ``inf``; a Mamba OOM (with a finite transformer)
    yields 0 and sets ``mamba_oom``.
    """
    by_t = {r.N: r for r in records_t}
    by_m = {r.N: r for r in records_m}
    if set(by_t) != set(by_m):
        raise ValueError("record sets must cover the same lengths")
    rows = []
    for n in sorted(by_t):
        t, m = by_t[n], by_m[n]
        if t.oom:
            rows.append(RatioRow(n, math.inf, math.inf, True, m.oom))
        elif m.oom:
            rows.append(RatioRow(n, 0.0, 0.0, False, True))
        else:
            rows.append(RatioRow(n, t.peak_memory_gb / m.peak_memory_gb, t.mean_time_ms / m.mean_time_ms))
    return rows


@dataclass(frozen=True)
class CrossoverResult:
    kind: str  # "at", "none_quadratic_dominates", "none_linear_dominates"
    n_star: float | None = None
    discriminant: float = 0.0


def solve_crossover(quad: FitResult, lin: FitResult, n_max: float | None = None) -> CrossoverResult:
    """Smallest N beyond which the quadratic curve stays strictly above the linear one.

    ``none_quadratic_dominates``: quadratic is above for every positive N.
    ``none_linear_dominates``: the crossover lies beyond ``n_max``.
    """
    if quad.kind != "quadratic" or lin.kind != "linear":
        raise ValueError("expected a quadratic and a linear fit")
    a, b, c = quad.coefficients
    lin_slope, lin_const = lin.coefficients
    if a <= 0:
        raise NotApplicable("quadratic coefficient must be positive")
    b, c = b - lin_slope, c - lin_const
    disc = b * b - 4.0 * a * c
    if disc < 0:
        return CrossoverResult("none_quadratic_dominates", None, disc)
    root = math.sqrt(disc)
    # cancellation-free quadratic formula
    q = -0.5 * (b + math.copysign(root, b)) if b != 0 else -0.5 * root
    r1, r2 = (q / a, c / q) if q != 0 else (0.0, 0.0)
    upper = max(r1, r2)
    if upper <= 0:
        return CrossoverResult("none_quadratic_dominates", None, disc)
    if n_max is not None and upper > n_max:
        return CrossoverResult("none_linear_dominates", upper, disc)
    return CrossoverResult("at", upper, disc)


# ---------------------------------------------------------------------------
# record-level helpers and file outputs

_MODEL_KIND = {"transformer": "quadratic", "mamba": "linear"}


def fit_records(records: list[BenchRecord]) -> list[dict]:
    """Fit every (architecture, metric) series with its declared model."""
    fits = []
    for arch in ("transformer", "mamba"):
        recs = [r for r in records if r.architecture == arch]
        if not recs:
            continue
        for metric, attr in (("memory_gb", "peak_memory_gb"), ("time_ms", "mean_time_ms")):
            pts = [(r.N, getattr(r, attr)) for r in recs]
            try:
                fit = fit_cost_curve(pts, _MODEL_KIND[arch])
            except (InsufficientPoints, DegenerateDesign):
                continue
            fits.append(
                {
                    "arch": arch,
                    "metric": metric,
                    "kind": fit.kind,
                    "coefficients": list(fit.coefficients),
                    "r_squared": fit.r_squared,
                    "points_used": fit.points_used,
                }
            )
    return fits


def fit_from_json(payload: dict) -> FitResult:
    return FitResult(payload["kind"], tuple(payload["coefficients"]), payload["r_squared"], payload["points_used"])


def crossovers(fits: list[dict]) -> dict:
    by = {(f["arch"], f["metric"]): fit_from_json(f) for f in fits}
    out = {}
    for metric in ("memory_gb", "time_ms"):
        q, lfit = by.get(("transformer", metric)), by.get(("mamba", metric))
        if q is None or lfit is None:
            continue
        try:
            res = solve_crossover(q, lfit)
        except NotApplicable as exc:
            out[metric] = {"kind": "not_applicable", "n_star": None, "reason": str(exc)}
            continue
        out[metric] = asdict(res)
    return out


def write_fit_outputs(records: list[BenchRecord], out_dir: str | Path) -> dict:
    """Write fits.json, ratios.csv and crossover.json into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fits = fit_records(records)
    (out_dir / "fits.json").write_text(json.dumps(fits, indent=1), encoding="utf-8")
    rows = efficiency_ratio(
        [r for r in records if r.architecture == "transformer"],
        [r for r in records if r.architecture == "mamba"],
    ) if {r.architecture for r in records} >= {"transformer", "mamba"} else []
    write_ratio_csv(out_dir / "ratios.csv", rows)
    cross = crossovers(fits)
    (out_dir / "crossover.json").write_text(json.dumps(cross, indent=1), encoding="utf-8")
    return {"fits": fits, "ratios": rows, "crossover": cross}


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else repr(float(x))


def write_ratio_csv(path: str | Path, rows: list[RatioRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "mem_ratio", "time_ratio"])
        for r in rows:
            w.writerow([r.N, _fmt(r.mem_ratio), _fmt(r.time_ratio)])


def read_ratio_csv(path: str | Path) -> list[tuple[int, float, float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [(int(n), float(m), float(t)) for n, m, t in reader]
