"""Benchmark both mini models, fit their cost curves and locate the memory crossover.

    python3 demos/scaling_walkthrough.py
"""

import tempfile

from scalebench.bench import run_benchmark
from scalebench.corpus import load_corpus, write_synthetic_corpus
from scalebench.models import MambaConfig, TransformerConfig
from scalebench.scaling import efficiency_ratio, fit_cost_curve, solve_crossover

LENGTHS = [128, 256, 512, 1024]

with tempfile.TemporaryDirectory() as tmp:
    write_synthetic_corpus(tmp, sessions=4)
    corpus = load_corpus(tmp)

tf = run_benchmark("transformer", TransformerConfig.mini(), corpus, LENGTHS, runs=3, warmup=1)
mb = run_benchmark("mamba", MambaConfig.mini(), corpus, LENGTHS, runs=3, warmup=1)

print(f"{'N':>6} {'transformer GB':>15} {'mamba GB':>10} {'mem ratio':>10} {'time ratio':>11}")
for t, m, row in zip(tf, mb, efficiency_ratio(tf, mb)):
    print(f"{t.N:6d} {t.peak_memory_gb:15.5f} {m.peak_memory_gb:10.5f} {row.mem_ratio:10.2f} {row.time_ratio:11.2f}")

quad = fit_cost_curve([(r.N, r.peak_memory_gb) for r in tf], "quadratic")
lin = fit_cost_curve([(r.N, r.peak_memory_gb) for r in mb], "linear")
print(f"\ntransformer memory ~ {quad.coefficients}, R^2 = {quad.r_squared:.5f}")
print(f"mamba memory       ~ {lin.coefficients}, R^2 = {lin.r_squared:.5f}")
print("memory crossover:", solve_crossover(quad, lin))
