"""Command-line front end.

Subcommands: generate (synthetic dataset), train, explain (single image),
eval (full benchmark), report (re-render a stored report). Every command
exits 0 on success and 2 on bad input, printing the reason to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .bench import (
    BenchConfig,
    BenchInputError,
    ReportIntegrityError,
    heatmap_rgb,
    load_report,
    render_aggregation_table,
    render_class_table,
    render_method_table,
    run_eval,
    save_attribution,
    save_report,
)
from .bench import EXPLAINER_NAMES
from .explainers import HeadAggregation
from .metrics import (
    ComplexityConfig,
    FaithfulnessConfig,
    SensitivityConfig,
    avg_sensitivity,
    effective_complexity,
    faithfulness_correlation,
)
from .model import ViTConfig, predict_logits
from .netpbm import read_pgm, write_ppm
from .synthdata import MANIFEST_NAME, SyntheticSpec, generate_dataset, \
    load_manifest
from .training import TrainConfig, TrainingDivergedError, accuracy, \
    save_train_log, train
from .weights_io import WeightFormatError, load_weights, save_weights


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _add_vit_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--image-size", type=int, default=32)
    parser.add_argument("--patch-size", type=int, default=8)
    parser.add_argument("--layers", type=int, default=2)
    parser.add_argument("--heads", type=int, default=2)
    parser.add_argument("--embed-dim", type=int, default=32)
    parser.add_argument("--mlp-dim", type=int, default=64)


def _vit_config(args) -> ViTConfig:
    return ViTConfig(image_size=args.image_size, patch_size=args.patch_size,
                     n_layers=args.layers, n_heads=args.heads,
                     embed_dim=args.embed_dim, mlp_dim=args.mlp_dim,
                     n_classes=3)


# ---------------------------------------------------------------- generate


def cmd_generate(args) -> int:
    spec = SyntheticSpec(n_per_class=args.per_class,
                         image_size=args.image_size, seed=args.seed,
                         noise=args.noise)
    manifest = generate_dataset(spec, args.out)
    counts = {s: len(manifest.split(s)) for s in ("train", "val", "test")}
    print(f"wrote {len(manifest.records)} images to {args.out} "
          f"(train {counts['train']}, val {counts['val']}, "
          f"test {counts['test']})")
    return 0


# ---------------------------------------------------------------- train


def cmd_train(args) -> int:
    if args.generate:
        data_dir = os.path.join(args.out, "dataset")
        spec = SyntheticSpec(n_per_class=args.per_class,
                             image_size=args.image_size, seed=args.seed)
        manifest = generate_dataset(spec, data_dir)
    else:
        manifest_path = os.path.join(args.data, MANIFEST_NAME) \
            if args.data and os.path.isdir(args.data) else (args.data or "")
        if not manifest_path or not os.path.exists(manifest_path):
            return _fail(f"dataset manifest not found: "
                         f"{manifest_path or '(no --data given)'}; "
                         f"pass --generate to create one")
        manifest = load_manifest(manifest_path)

    train_cfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size,
                            max_epochs=args.epochs, patience=args.patience,
                            augment=not args.no_augment, seed=args.seed)
    try:
        weights, log = train(train_cfg, _vit_config(args), manifest)
    except TrainingDivergedError as exc:
        return _fail(str(exc))

    os.makedirs(args.out, exist_ok=True)
    weights_path = os.path.join(args.out, "weights.bin")
    save_weights(weights, weights_path)
    save_train_log(log, os.path.join(args.out, "train_log.csv"))

    test_x = np.stack([manifest.load_image(r) for r in manifest.split("test")])
    test_y = np.array([r.label for r in manifest.split("test")])
    print(f"best epoch {log.best_epoch} "
          f"(val acc {log.best_val_acc():.4f}); "
          f"test acc {accuracy(weights, test_x, test_y):.4f}; "
          f"weights -> {weights_path}")
    return 0


# ---------------------------------------------------------------- explain


def cmd_explain(args) -> int:
    from .bench import explain_one

    for name in args.methods:
        if name not in EXPLAINER_NAMES:
            return _fail(f"unknown explainer {name!r}; valid names: "
                         f"{', '.join(EXPLAINER_NAMES)}")
    try:
        weights = load_weights(args.weights)
    except (OSError, WeightFormatError) as exc:
        return _fail(f"cannot load weights: {exc}")
    try:
        image = read_pgm(args.image)
    except (OSError, ValueError) as exc:
        return _fail(f"cannot load image: {exc}")
    if image.shape != (weights.config.image_size, weights.config.image_size):
        return _fail(f"image is {image.shape}, model expects "
                     f"{weights.config.image_size} square")

    aggregation = HeadAggregation.parse(args.aggregation)
    logits = predict_logits(weights, image)
    predicted = int(np.argmax(logits))
    target = predicted if args.target == "predicted" else int(args.target)
    if not 0 <= target < weights.config.n_classes:
        return _fail(f"target class {target} out of range "
                     f"[0, {weights.config.n_classes})")

    os.makedirs(args.out, exist_ok=True)
    lime_settings = (weights.config.n_patches, args.lime_samples,
                     args.lime_top_k)
    predict = lambda im: predict_logits(weights, im)
    grid = weights.config.grid_size

    print(f"predicted class: {predicted}")
    for entry_idx, name in enumerate(args.methods):
        agg = aggregation if name == "attention_rollout" else None
        attribution = explain_one(weights, image, name, agg, target,
                                  lime_settings, [args.seed, entry_idx, 2])

        faith_cfg = FaithfulnessConfig(
            patch_grid=grid, n_runs=args.faith_runs,
            use_absolute=(name == "attention_rollout"),
            seed=[args.seed, entry_idx, 0])
        faith = faithfulness_correlation(predict, image, attribution, target,
                                         faith_cfg)
        sens = avg_sensitivity(
            lambda im: explain_one(weights, im, name, agg, target,
                                   lime_settings,
                                   [args.seed, entry_idx, 2]).values,
            image, SensitivityConfig(n_samples=args.sens_samples,
                                     seed=[args.seed, entry_idx, 1]))
        comp = effective_complexity(attribution, ComplexityConfig())

        save_attribution(os.path.join(args.out, f"{name}.attr"),
                         attribution.values.astype(np.float32))
        write_ppm(os.path.join(args.out, f"{name}.ppm"),
                  heatmap_rgb(image, attribution.values))
        print(f"{name}: (F, S, C) = ({faith:.2f}, {sens:.2f}, {comp:.2f})")
    return 0


# ---------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    try:
        manifest = load_manifest(args.manifest)
    except (OSError, ValueError) as exc:
        return _fail(f"cannot load manifest: {exc}")
    try:
        weights = load_weights(args.weights)
    except (OSError, WeightFormatError) as exc:
        return _fail(f"cannot load weights: {exc}")

    for name in args.explainers:
        if name not in EXPLAINER_NAMES:
            return _fail(f"unknown explainer {name!r}; valid names: "
                         f"{', '.join(EXPLAINER_NAMES)}")
    try:
        aggregations = tuple(HeadAggregation.parse(a)
                             for a in args.aggregations)
    except ValueError as exc:
        return _fail(str(exc))

    cfg = BenchConfig(
        manifest_path=args.manifest, weights_path=args.weights,
        seed=args.seed, explainers=tuple(args.explainers),
        aggregations=aggregations, images_per_class=args.per_class,
        lime_samples=args.lime_samples, lime_top_k=args.lime_top_k,
        faith_runs=args.faith_runs, faith_subset=args.faith_subset,
        faith_baseline=args.faith_baseline, sens_samples=args.sens_samples,
        sens_radius=args.sens_radius,
        complexity_threshold=args.complexity_threshold,
        correct_only=args.correct_only, target_mode=args.target,
        table2_explainer=args.table2_explainer)

    progress = None
    if not args.quiet:
        progress = lambda done, total: print(
            f"\r  evaluated {done}/{total} images", end="", flush=True)
    try:
        report = run_eval(cfg, manifest, weights, progress=progress)
    except BenchInputError as exc:
        print()
        return _fail(str(exc))
    if not args.quiet:
        print()

    os.makedirs(args.out, exist_ok=True)
    save_report(report, os.path.join(args.out, "report.jsonl"))
    tables = {
        "table1_methods.txt": render_method_table(report),
        "table2_per_class.txt": render_class_table(report),
        "table3_aggregations.txt": render_aggregation_table(report),
    }
    for filename, text in tables.items():
        with open(os.path.join(args.out, filename), "w",
                  encoding="utf-8") as fh:
            fh.write(text)
        print(text)
    return 0


# ---------------------------------------------------------------- report


def cmd_report(args) -> int:
    try:
        report = load_report(args.report)
    except (OSError, ReportIntegrityError) as exc:
        return _fail(f"cannot load report: {exc}")
    if args.per_class:
        print(render_class_table(report))
    else:
        print(render_method_table(report))
        print(render_class_table(report))
        print(render_aggregation_table(report))
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vitexplain",
        description="Train a small ViT on synthetic chest phantoms, explain "
                    "its predictions, and score the explanations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.02)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a classifier")
    p.add_argument("--data", help="dataset dir or manifest path")
    p.add_argument("--generate", action="store_true",
                   help="generate a dataset under OUT/dataset first")
    p.add_argument("--per-class", type=int, default=100,
                   help="images per class when generating")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--no-augment", action="store_true")
    _add_vit_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="explain one image")
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--methods", default="lime,attention_rollout,translrp",
                   type=lambda s: s.split(","))
    p.add_argument("--aggregation", default="max_discard:0.99")
    p.add_argument("--target", default="predicted",
                   help="'predicted' or a class index")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lime-samples", type=int, default=500)
    p.add_argument("--lime-top-k", type=int, default=2)
    p.add_argument("--faith-runs", type=int, default=100)
    p.add_argument("--sens-samples", type=int, default=10)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("eval", help="run the benchmark")
    p.add_argument("--manifest", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True,
                   help="required: evaluation must be reproducible")
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--explainers", default="lime,attention_rollout,translrp",
                   type=lambda s: s.split(","))
    p.add_argument("--aggregations",
                   default="max_discard:0.99,average,minimum",
                   type=lambda s: s.split(","))
    p.add_argument("--lime-samples", type=int, default=500)
    p.add_argument("--lime-top-k", type=int, default=2)
    p.add_argument("--faith-runs", type=int, default=100)
    p.add_argument("--faith-subset", type=int, default=None)
    p.add_argument("--faith-baseline", type=float, default=0.0)
    p.add_argument("--sens-samples", type=int, default=10)
    p.add_argument("--sens-radius", type=float, default=0.1)
    p.add_argument("--complexity-threshold", type=float, default=0.1)
    p.add_argument("--correct-only", action="store_true")
    p.add_argument("--target", default="predicted",
                   choices=["predicted", "ground-truth"])
    p.add_argument("--table2-explainer", default="translrp",
                   help="explainer broken down per class in table 2")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="re-render a stored report")
    p.add_argument("--report", required=True)
    p.add_argument("--per-class", action="store_true",
                   help="print only the per-class table")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
