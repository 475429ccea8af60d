"""Benchmark harness: sample test images, explain them with every requested
method, score the explanations, and emit three summary tables plus a
line-delimited machine-readable report.

Per-image work is pure given (weights, image, seeds); RNG streams are derived
from (bench seed, image counter, method index, metric slot) so results do not
depend on evaluation order. Explanations for class-aware methods target the
model's predicted class unless configured otherwise.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .explainers import (
    Attribution,
    HeadAggregation,
    attention_rollout,
    lime_explain,
    max_discard,
    translrp,
)
from .metrics import (
    ComplexityConfig,
    FaithfulnessConfig,
    SensitivityConfig,
    SummaryStats,
    avg_sensitivity,
    effective_complexity,
    faithfulness_correlation,
    summarize,
)
from .model import (
    ViTWeights,
    attention_gradients,
    forward,
    lrp_relevances,
    predict_logits,
)
from .synthdata import CLASS_NAMES, N_CLASSES, DatasetManifest

EXPLAINER_NAMES = ("lime", "attention_rollout", "translrp")
METRIC_NAMES = ("faithfulness", "sensitivity", "complexity")

DEFAULT_AGGREGATIONS = (max_discard(0.99), HeadAggregation("average"),
                        HeadAggregation("minimum"))


class BenchInputError(ValueError):
    """Raised when the benchmark cannot run with the given inputs."""


class ReportIntegrityError(ValueError):
    """Raised when a stored report disagrees with its own records."""


@dataclass(frozen=True)
class BenchConfig:
    manifest_path: str
    weights_path: str
    seed: int
    explainers: tuple[str, ...] = EXPLAINER_NAMES
    aggregations: tuple[HeadAggregation, ...] = DEFAULT_AGGREGATIONS
    images_per_class: int = 100
    lime_segments: int | None = None  # None: one segment per model patch
    lime_samples: int = 500
    lime_top_k: int = 2
    faith_runs: int = 100
    faith_subset: int | None = None
    faith_baseline: float = 0.0
    sens_samples: int = 10
    sens_radius: float = 0.1
    complexity_threshold: float = 0.1
    correct_only: bool = False
    target_mode: str = "predicted"  # or "ground-truth"
    table2_explainer: str = "translrp"

    def __post_init__(self):
        for name in self.explainers:
            if name not in EXPLAINER_NAMES:
                raise ValueError(f"unknown explainer {name!r}; valid: "
                                 f"{', '.join(EXPLAINER_NAMES)}")
        if self.target_mode not in ("predicted", "ground-truth"):
            raise ValueError(f"target_mode must be 'predicted' or "
                             f"'ground-truth', got {self.target_mode!r}")
        if self.images_per_class < 1:
            raise ValueError("images_per_class must be positive")

    def method_entries(self) -> list[tuple[str, HeadAggregation | None]]:
        """Expand the explainer list; rollout appears once per aggregation."""
        entries: list[tuple[str, HeadAggregation | None]] = []
        for name in self.explainers:
            if name == "attention_rollout":
                entries.extend((name, agg) for agg in self.aggregations)
            else:
                entries.append((name, None))
        return entries


@dataclass
class BenchReport:
    version: str
    seed: int
    config: dict
    records: list[dict]
    method_summaries: dict[str, dict[str, SummaryStats]] = field(
        default_factory=dict)
    class_summaries: dict[int, dict[str, SummaryStats]] = field(
        default_factory=dict)
    aggregation_summaries: dict[str, dict[str, SummaryStats]] = field(
        default_factory=dict)


# ---------------------------------------------------------------- evaluation


def _config_echo(cfg: BenchConfig) -> dict:
    echo = {
        "manifest_path": cfg.manifest_path,
        "weights_path": cfg.weights_path,
        "seed": cfg.seed,
        "explainers": list(cfg.explainers),
        "aggregations": [a.tag for a in cfg.aggregations],
        "images_per_class": cfg.images_per_class,
        "lime_segments": cfg.lime_segments,
        "lime_samples": cfg.lime_samples,
        "lime_top_k": cfg.lime_top_k,
        "faith_runs": cfg.faith_runs,
        "faith_subset": cfg.faith_subset,
        "faith_baseline": cfg.faith_baseline,
        "sens_samples": cfg.sens_samples,
        "sens_radius": cfg.sens_radius,
        "complexity_threshold": cfg.complexity_threshold,
        "correct_only": cfg.correct_only,
        "target_mode": cfg.target_mode,
        "table2_explainer": cfg.table2_explainer,
    }
    return echo


def _sample_test_images(cfg: BenchConfig, manifest: DatasetManifest,
                        weights: ViTWeights) -> list:
    chosen = []
    for label in range(N_CLASSES):
        candidates = [r for r in manifest.split("test") if r.label == label]
        if cfg.correct_only and candidates:
            images = np.stack([manifest.load_image(r) for r in candidates])
            preds = np.argmax(predict_logits(weights, images), axis=1)
            candidates = [r for r, p in zip(candidates, preds) if p == label]
        if len(candidates) < cfg.images_per_class:
            raise BenchInputError(
                f"class {label} ({CLASS_NAMES[label]}): requested "
                f"{cfg.images_per_class} test images but only "
                f"{len(candidates)} available"
                + (" after the correct-only filter" if cfg.correct_only
                   else ""))
        rng = np.random.default_rng([cfg.seed, 3, label])
        picks = rng.choice(len(candidates), size=cfg.images_per_class,
                           replace=False)
        chosen.extend(candidates[i] for i in sorted(picks))
    return chosen


def explain_one(weights: ViTWeights, image: np.ndarray, explainer: str,
                aggregation: HeadAggregation | None, target: int,
                lime_settings: tuple[int, int, int], lime_seed) -> Attribution:
    """Produce one attribution. Rollout ignores ``target`` (class-agnostic)."""
    if explainer == "attention_rollout":
        _, trace = forward(weights, image)
        return attention_rollout(trace, aggregation)
    if explainer == "translrp":
        _, trace = forward(weights, image)
        grads = attention_gradients(weights, trace, target)
        rels = lrp_relevances(weights, trace, target)
        return translrp(trace, grads, rels, target_class=target)
    if explainer == "lime":
        segments, samples, top_k = lime_settings
        return lime_explain(lambda im: predict_logits(weights, im), image,
                            target, n_segments=segments, n_samples=samples,
                            top_k=top_k, seed=lime_seed)
    raise ValueError(f"unknown explainer {explainer!r}")


def run_eval(cfg: BenchConfig, manifest: DatasetManifest,
             weights: ViTWeights, progress=None) -> BenchReport:
    """Evaluate every configured method on sampled test images."""
    entries = cfg.method_entries()
    if cfg.lime_segments is None:
        lime_segments = weights.config.n_patches
    else:
        lime_segments = cfg.lime_segments
    lime_settings = (lime_segments, cfg.lime_samples, cfg.lime_top_k)
    grid = weights.config.grid_size

    sampled = _sample_test_images(cfg, manifest, weights)
    predict = lambda im: predict_logits(weights, im)

    records: list[dict] = []
    for img_idx, record in enumerate(sampled):
        image = manifest.load_image(record)
        logits = predict_logits(weights, image)
        predicted = int(np.argmax(logits))
        target = predicted if cfg.target_mode == "predicted" else record.label

        for entry_idx, (explainer, aggregation) in enumerate(entries):
            lime_seed = [cfg.seed, img_idx, entry_idx, 2]
            attribution = explain_one(weights, image, explainer, aggregation,
                                      target, lime_settings, lime_seed)

            if explainer == "attention_rollout":
                # class-agnostic by contract: any other target must match
                other = explain_one(weights, image, explainer, aggregation,
                                    (target + 1) % N_CLASSES, lime_settings,
                                    lime_seed)
                if not np.array_equal(attribution.values, other.values):
                    raise AssertionError(
                        "attention rollout produced target-dependent values")

            faith_cfg = FaithfulnessConfig(
                patch_grid=grid, subset_size=cfg.faith_subset,
                n_runs=cfg.faith_runs, baseline=cfg.faith_baseline,
                use_absolute=(explainer == "attention_rollout"),
                seed=[cfg.seed, img_idx, entry_idx, 0])
            faith = faithfulness_correlation(predict, image, attribution,
                                             target, faith_cfg)

            def explain_again(im):
                return explain_one(weights, im, explainer, aggregation,
                                   target, lime_settings, lime_seed).values

            sens_cfg = SensitivityConfig(
                radius=cfg.sens_radius, n_samples=cfg.sens_samples,
                seed=[cfg.seed, img_idx, entry_idx, 1])
            sens = avg_sensitivity(explain_again, image, sens_cfg)

            comp = effective_complexity(
                attribution, ComplexityConfig(cfg.complexity_threshold))

            records.append({
                "image": record.path,
                "label": record.label,
                "predicted": predicted,
                "target": target,
                "explainer": explainer,
                "aggregation": aggregation.tag if aggregation else None,
                "faithfulness": faith,
                "sensitivity": sens,
                "complexity": comp,
            })
        if progress is not None:
            progress(img_idx + 1, len(sampled))

    report = BenchReport(version=__version__, seed=cfg.seed,
                         config=_config_echo(cfg), records=records)
    _fill_summaries(report)
    return report


# ---------------------------------------------------------------- summaries


def _fill_summaries(report: BenchReport) -> None:
    records = report.records
    by_method: dict[str, dict[str, SummaryStats]] = {}
    order: list[str] = []
    for rec in records:
        key = _record_key(rec)
        if key not in order:
            order.append(key)
    for key in order:
        rows = [r for r in records if _record_key(r) == key]
        by_method[key] = {m: summarize([r[m] for r in rows])
                          for m in METRIC_NAMES}
    report.method_summaries = by_method

    table2 = report.config.get("table2_explainer", "translrp")
    class_rows = [r for r in records if r["explainer"] == table2]
    report.class_summaries = {}
    if class_rows:
        for label in sorted({r["label"] for r in class_rows}):
            rows = [r for r in class_rows if r["label"] == label]
            report.class_summaries[label] = {
                m: summarize([r[m] for r in rows]) for m in METRIC_NAMES}

    report.aggregation_summaries = {}
    rollout_rows = [r for r in records
                    if r["explainer"] == "attention_rollout"]
    agg_order: list[str] = []
    for rec in rollout_rows:
        if rec["aggregation"] not in agg_order:
            agg_order.append(rec["aggregation"])
    for agg in agg_order:
        rows = [r for r in rollout_rows if r["aggregation"] == agg]
        report.aggregation_summaries[agg] = {
            m: summarize([r[m] for r in rows]) for m in METRIC_NAMES}


def _record_key(rec: dict) -> str:
    agg = rec["aggregation"]
    return rec["explainer"] if agg is None else f"{rec['explainer']}[{agg}]"


# ---------------------------------------------------------------- report io


def save_report(report: BenchReport, path: str) -> None:
    """Line-delimited JSON: header, per-image records, then summaries."""
    lines = [json.dumps({"kind": "header", "version": report.version,
                         "seed": report.seed, "config": report.config})]
    for rec in report.records:
        lines.append(json.dumps({"kind": "record", **rec}))
    for scope, summaries in (("method", report.method_summaries),
                             ("class", report.class_summaries),
                             ("aggregation", report.aggregation_summaries)):
        for key, metrics in summaries.items():
            for metric, stats in metrics.items():
                lines.append(json.dumps({
                    "kind": "summary", "scope": scope, "key": str(key),
                    "metric": metric, "mean": stats.mean, "std": stats.std,
                    "count": stats.count}))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_report(path: str) -> BenchReport:
    """Parse a report and verify stored summaries against the records."""
    header = None
    records: list[dict] = []
    stored: list[dict] = []
    with open(path, "r", encoding="ascii") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ReportIntegrityError(f"{path}:{ln}: not valid JSON "
                                           f"({exc})") from None
            kind = obj.get("kind")
            if kind == "header":
                header = obj
            elif kind == "record":
                missing = [f for f in ("image", "label", "explainer",
                                       *METRIC_NAMES) if f not in obj]
                if missing:
                    raise ReportIntegrityError(
                        f"{path}:{ln}: record missing fields {missing}")
                records.append({k: v for k, v in obj.items() if k != "kind"})
            elif kind == "summary":
                stored.append(obj)
            else:
                raise ReportIntegrityError(f"{path}:{ln}: unknown kind "
                                           f"{kind!r}")
    if header is None:
        raise ReportIntegrityError(f"{path}: no header line")
    if not records:
        raise ReportIntegrityError(f"{path}: no per-image records")

    report = BenchReport(version=header.get("version", "?"),
                         seed=header.get("seed", 0),
                         config=header.get("config", {}), records=records)
    _fill_summaries(report)

    recomputed = {"method": report.method_summaries,
                  "class": {str(k): v for k, v in
                            report.class_summaries.items()},
                  "aggregation": report.aggregation_summaries}
    seen = set()
    for obj in stored:
        scope, key, metric = obj["scope"], obj["key"], obj["metric"]
        group = recomputed.get(scope, {})
        if key not in group or metric not in group[key]:
            raise ReportIntegrityError(
                f"stored summary references unknown {scope}/{key}/{metric}")
        stats = group[key][metric]
        for fld in ("mean", "std"):
            got = obj[fld]
            want = getattr(stats, fld)
            if abs(got - want) > 1e-9:
                raise ReportIntegrityError(
                    f"summary {scope}/{key}/{metric}.{fld} stored {got!r} "
                    f"but records give {want!r}")
        if obj["count"] != stats.count:
            raise ReportIntegrityError(
                f"summary {scope}/{key}/{metric}.count stored "
                f"{obj['count']} but records give {stats.count}")
        seen.add((scope, key, metric))
    for scope, group in recomputed.items():
        for key, metrics in group.items():
            for metric in metrics:
                if (scope, str(key), metric) not in seen:
                    raise ReportIntegrityError(
                        f"summary {scope}/{key}/{metric} missing from file")
    return report


# ---------------------------------------------------------------- tables


def _render_table(title: str, row_label: str, rows: list[tuple[str, dict]]
                  ) -> str:
    headers = [row_label, "Faithfulness", "Sensitivity", "Complexity"]
    cells = [[name, *(stats[m].format() for m in METRIC_NAMES)]
             for name, stats in rows]
    widths = [max(len(headers[i]), *(len(r[i]) for r in cells))
              for i in range(4)] if cells else [len(h) for h in headers]
    lines = [title,
             "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for row in cells:
        lines.append("  ".join(row[i].ljust(widths[i]) for i in range(4)))
    return "\n".join(lines) + "\n"


def table1_rows(report: BenchReport) -> list[tuple[str, dict]]:
    """One row per explainer; rollout is shown for its first aggregation."""
    rows = []
    seen_explainers = set()
    for key, stats in report.method_summaries.items():
        explainer = key.split("[", 1)[0]
        if explainer in seen_explainers:
            continue
        seen_explainers.add(explainer)
        rows.append((key, stats))
    return rows


def render_method_table(report: BenchReport) -> str:
    return _render_table("Per-method explanation quality (mean ± std)",
                         "Method", table1_rows(report))


def render_class_table(report: BenchReport) -> str:
    explainer = report.config.get("table2_explainer", "translrp")
    rows = [(f"{label} ({CLASS_NAMES[label]})", stats)
            for label, stats in sorted(report.class_summaries.items())]
    return _render_table(f"Per-class quality for {explainer} "
                         f"(mean ± std)", "Class", rows)


def render_aggregation_table(report: BenchReport) -> str:
    rows = list(report.aggregation_summaries.items())
    return _render_table("Attention rollout by head aggregation "
                         "(mean ± std)", "Aggregation", rows)


# ---------------------------------------------------------------- artifacts


def save_attribution(path: str, values: np.ndarray) -> None:
    """Text header '<width> <height>' then raw little-endian float32."""
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def load_attribution(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 2:
            raise ValueError(f"{path}: bad attribution header {header}")
        w, h = int(header[0]), int(header[1])
        data = fh.read()
    if len(data) != w * h * 4:
        raise ValueError(f"{path}: payload {len(data)} bytes, expected "
                         f"{w * h * 4}")
    return np.frombuffer(data, dtype="<f4").reshape(h, w).copy()


def heatmap_rgb(image: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Blend attribution into the red channel over the grayscale base.

    The red excess over the base gray grows strictly with the attribution
    value at every pixel, so hotter pixels are unambiguously redder.
    """
    if image.shape != values.shape:
        raise ValueError(f"image {image.shape} vs attribution {values.shape}")
    base = np.clip(image, 0.0, 1.0)
    a = np.clip(values, 0.0, 1.0)
    red = base + a * (1.0 - base)
    dimmed = base * (1.0 - 0.6 * a)
    return np.stack([red, dimmed, dimmed], axis=-1)
