"""Explain and evaluate a small Vision Transformer image classifier.

The package trains a desk-scale ViT on synthetic chest phantoms, generates
saliency maps with three explainers (attention rollout, gradient-weighted
relevance rollout, LIME), and scores them with faithfulness, sensitivity and
complexity metrics.
"""

__version__ = "0.1.0"

from .explainers import (  # noqa: F401
    AVERAGE,
    MINIMUM,
    Attribution,
    HeadAggregation,
    aggregate_heads,
    attention_rollout,
    lime_explain,
    max_discard,
    translrp,
    upsample_patch_map,
)
from .metrics import (  # noqa: F401
    ComplexityConfig,
    FaithfulnessConfig,
    SensitivityConfig,
    SummaryStats,
    avg_sensitivity,
    effective_complexity,
    faithfulness_correlation,
    summarize,
)
from .model import (  # noqa: F401
    ForwardTrace,
    ViTConfig,
    ViTWeights,
    attention_gradients,
    forward,
    init_weights,
    lrp_relevances,
    patchify,
    predict_logits,
    unpatchify,
)
from .synthdata import (  # noqa: F401
    CLASS_NAMES,
    DatasetManifest,
    SyntheticSpec,
    generate_dataset,
    load_manifest,
    render_phantom,
)
from .training import TrainConfig, cross_entropy, train  # noqa: F401
from .weights_io import load_weights, save_weights  # noqa: F401
