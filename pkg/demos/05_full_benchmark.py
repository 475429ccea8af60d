"""Run the benchmark harness and render the three summary tables.
================================================================

Samples test images per class, explains each with every configured method,
scores all explanations, and emits: a per-method table, a per-class table
for the gradient-weighted method, and a per-aggregation table for attention
rollout. The same thing is available from the command line:

    vitexplain eval --manifest ... --weights ... --out ... --seed 17

Run:  python demos/05_full_benchmark.py
"""

import os
import runpy

from vitexplain import load_manifest, load_weights
from vitexplain.bench import (
    BenchConfig,
    load_report,
    render_aggregation_table,
    render_class_table,
    render_method_table,
    run_eval,
    save_report,
)
from vitexplain.explainers import AVERAGE, MINIMUM, max_discard

HERE = os.path.dirname(__file__)
RUN = os.path.join(HERE, "output", "run")
if not os.path.exists(os.path.join(RUN, "weights.bin")):
    runpy.run_path(os.path.join(HERE, "01_dataset_and_training.py"))

weights = load_weights(os.path.join(RUN, "weights.bin"))
manifest = load_manifest(os.path.join(RUN, "dataset", "manifest.csv"))

# modest settings keep the demo around a minute; raise images_per_class and
# the sampling counts for a tighter benchmark
config = BenchConfig(
    manifest_path=os.path.join(RUN, "dataset", "manifest.csv"),
    weights_path=os.path.join(RUN, "weights.bin"),
    seed=17,
    images_per_class=5,
    aggregations=(max_discard(0.99), AVERAGE, MINIMUM),
    lime_samples=300,
    faith_runs=50,
    sens_samples=5,
)

report = run_eval(config, manifest, weights,
                  progress=lambda done, total: print(
                      f"\r  {done}/{total} images", end="", flush=True))
print()

out = os.path.join(HERE, "output", "bench")
os.makedirs(out, exist_ok=True)
report_path = os.path.join(out, "report.jsonl")
save_report(report, report_path)

print(render_method_table(report))
print(render_class_table(report))
print(render_aggregation_table(report))

# the stored report re-verifies itself: summaries are recomputed from the
# per-image records on load and must match
load_report(report_path)
print(f"report written and verified: {report_path}")
