"""Score explanations with the three quality metrics.
====================================================

Faithfulness: do high-attribution patches actually move the logit when
removed? Sensitivity: does the explanation stay put under small input
noise? Complexity: how many pixels does the map highlight?

Run:  python demos/03_scoring_explanations.py
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
    predict_logits,
    translrp,
)
from vitexplain.metrics import (
    ComplexityConfig,
    FaithfulnessConfig,
    SensitivityConfig,
    avg_sensitivity,
    effective_complexity,
    faithfulness_correlation,
)

HERE = os.path.dirname(__file__)
RUN = os.path.join(HERE, "output", "run")
if not os.path.exists(os.path.join(RUN, "weights.bin")):
    runpy.run_path(os.path.join(HERE, "01_dataset_and_training.py"))

weights = load_weights(os.path.join(RUN, "weights.bin"))
manifest = load_manifest(os.path.join(RUN, "dataset", "manifest.csv"))
predict = lambda imgs: predict_logits(weights, imgs)
grid = weights.config.grid_size

record = manifest.split("test")[0]
image = manifest.load_image(record)
logits, trace = forward(weights, image)
target = int(np.argmax(logits))
print(f"image {record.path}, predicted class {target}\n")


def rollout_fn(img):
    _, tr = forward(weights, img)
    return attention_rollout(tr, AVERAGE).values


def translrp_fn(img):
    _, tr = forward(weights, img)
    grads = attention_gradients(weights, tr, target)
    rels = lrp_relevances(weights, tr, target)
    return translrp(tr, grads, rels, target).values


def lime_fn(img):
    return lime_explain(predict, img, target, n_segments=16,
                        n_samples=500, top_k=2, seed=0).values


print(f"{'method':20s} {'faithfulness':>13s} {'sensitivity':>12s} "
      f"{'complexity':>11s}")
for name, fn, class_agnostic in (("lime", lime_fn, False),
                                 ("attention_rollout", rollout_fn, True),
                                 ("translrp", translrp_fn, False)):
    values = fn(image)
    # class-agnostic maps cannot prefer a class, so the correlation's sign
    # is not meaningful: score them on its absolute value
    faith = faithfulness_correlation(
        predict, image, values, target,
        FaithfulnessConfig(patch_grid=grid, n_runs=100,
                           use_absolute=class_agnostic, seed=1))
    # the explanation function itself is re-run on each perturbed copy,
    # with its internal seed held fixed
    sens = avg_sensitivity(fn, image,
                           SensitivityConfig(radius=0.1, n_samples=10,
                                             seed=2))
    comp = effective_complexity(values, ComplexityConfig(threshold=0.1))
    print(f"{name:20s} {faith:13.3f} {sens:12.3f} {comp:11.3f}")
