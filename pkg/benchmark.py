"""
Usage: python benchmark.py [REPEATS] [K ...]

Times one block of the sequential recurrence, the diagonalised fast path and two GCN stacks on a
100-node graph with 3058 edges, for each depth K (default 10 100 1000).
"""
import logging
import sys

from mpssm.api.data import format_report_text
from mpssm.bench import run_bench
from mpssm.config import load_config

logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

# --- Constants ---
REPEATS = int(sys.argv[1]) if len(sys.argv) > 1 else 5
KS = [int(k) for k in sys.argv[2:]] or [10, 100, 1000]

config = load_config(overrides={"bench.repeats": REPEATS, "bench.ks": KS})


# --- Runtime against depth ---
print("Running runtime comparison...")
report = run_bench(config)
print(format_report_text(report["rows"], ["implementation", "k", "median_ms"]))


# --- Summary ---
print("Growth from k={} to k={}:".format(min(report["ks"]), max(report["ks"])))
for name, ratio in sorted(report["ratios"].items()):
    print("  {:<10} x{:.1f}".format(name, ratio))
print("Largest fast/sequential output deviation: {:.3e}".format(report["max_fast_deviation"]))
