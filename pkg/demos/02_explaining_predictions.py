"""Explain single predictions with all three saliency methods.
==============================================================

Produces, for one test image per class: the attention rollout map (with the
average and max-discard head aggregations), the gradient-weighted relevance
rollout, and the binary LIME map, blended into red-channel heatmaps.

Requires the weights from demo 01 (runs it automatically if missing).

Run:  python demos/02_explaining_predictions.py
"""

import os
import runpy

import numpy as np

from vitexplain import (
    AVERAGE,
    attention_gradients,
    attention_rollout,
    forward,
    lime_explain,
    load_manifest,
    load_weights,
    lrp_relevances,
    max_discard,
    predict_logits,
    translrp,
)
from vitexplain.bench import heatmap_rgb
from vitexplain.netpbm import write_ppm

HERE = os.path.dirname(__file__)
RUN = os.path.join(HERE, "output", "run")
if not os.path.exists(os.path.join(RUN, "weights.bin")):
    runpy.run_path(os.path.join(HERE, "01_dataset_and_training.py"))

weights = load_weights(os.path.join(RUN, "weights.bin"))
manifest = load_manifest(os.path.join(RUN, "dataset", "manifest.csv"))
out_dir = os.path.join(HERE, "output", "heatmaps")
os.makedirs(out_dir, exist_ok=True)

predict = lambda imgs: predict_logits(weights, imgs)

for label in range(3):
    record = next(r for r in manifest.split("test") if r.label == label)
    image = manifest.load_image(record)
    logits, trace = forward(weights, image)
    target = int(np.argmax(logits))
    print(f"\n{record.path}: true class {record.label}, predicted {target}")

    # attention rollout is class-agnostic: the product of residual-adjusted
    # attention matrices, read off at the classification-token row
    maps = {
        "rollout_average": attention_rollout(trace, AVERAGE),
        "rollout_maxdiscard": attention_rollout(trace, max_discard(0.99)),
    }

    # the gradient-weighted variant needs attention gradients and relevance
    # for the target class, then clamps the negative contributions
    grads = attention_gradients(weights, trace, target)
    rels = lrp_relevances(weights, trace, target)
    maps["translrp"] = translrp(trace, grads, rels, target)

    # LIME perturbs a 4x4 segment grid and keeps the top-2 positive
    # surrogate coefficients as a binary map
    maps["lime"] = lime_explain(predict, image, target, n_segments=16,
                                n_samples=500, top_k=2, seed=label)

    for name, attribution in maps.items():
        path = os.path.join(out_dir, f"c{label}_{name}.ppm")
        write_ppm(path, heatmap_rgb(image, attribution.values))
        covered = float(np.mean(attribution.values > 0.1))
        print(f"  {name:20s} -> {path}  (share above 0.1: {covered:.2f})")
