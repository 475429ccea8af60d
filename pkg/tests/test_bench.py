"""Benchmark harness: report round-trips and integrity checks, artifact file
formats, table shapes, evaluation determinism, CLI behavior."""

import json
import os

import numpy as np
import pytest

from vitexplain.bench import (
    BenchConfig,
    BenchInputError,
    ReportIntegrityError,
    heatmap_rgb,
    load_attribution,
    load_report,
    render_aggregation_table,
    render_class_table,
    render_method_table,
    run_eval,
    save_attribution,
    save_report,
)
from vitexplain.cli import main as cli_main
from vitexplain.explainers import HeadAggregation, max_discard
from vitexplain.netpbm import read_ppm


SMALL_EVAL = dict(
    images_per_class=2, lime_samples=60, faith_runs=25, sens_samples=2,
    aggregations=(max_discard(0.99), HeadAggregation("average")),
)


@pytest.fixture(scope="module")
def small_report(trained, tmp_path_factory):
    weights, _, manifest, _ = trained
    out = tmp_path_factory.mktemp("bench")
    cfg = BenchConfig(manifest_path="m", weights_path="w", seed=17,
                      **SMALL_EVAL)
    report = run_eval(cfg, manifest, weights)
    path = str(out / "report.jsonl")
    save_report(report, path)
    return report, path


class TestAttributionFile:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        values = rng.uniform(size=(32, 32)).astype(np.float32)
        path = str(tmp_path / "a.attr")
        save_attribution(path, values)
        assert np.array_equal(load_attribution(path), values)

    def test_header_carries_dimensions(self, tmp_path):
        path = str(tmp_path / "a.attr")
        save_attribution(path, np.zeros((4, 8), dtype=np.float32))
        first = open(path, "rb").readline()
        assert first == b"8 4\n"

    def test_short_payload_rejected(self, tmp_path):
        path = str(tmp_path / "bad.attr")
        open(path, "wb").write(b"8 8\nxx")
        with pytest.raises(ValueError, match="payload"):
            load_attribution(path)


class TestHeatmap:
    def test_red_excess_monotone_in_attribution(self):
        base = np.full((1, 5), 0.4)
        levels = np.array([[0.0, 0.2, 0.5, 0.8, 1.0]])
        rgb = heatmap_rgb(base, levels)
        excess = rgb[0, :, 0] - rgb[0, :, 1]
        assert np.all(np.diff(excess) > 0)

    def test_zero_attribution_is_gray(self, rng):
        base = rng.uniform(size=(6, 6))
        rgb = heatmap_rgb(base, np.zeros((6, 6)))
        assert np.allclose(rgb[..., 0], base)
        assert np.allclose(rgb[..., 1], base)
        assert np.allclose(rgb[..., 2], base)

    def test_channels_stay_in_range(self, rng):
        rgb = heatmap_rgb(rng.uniform(size=(8, 8)), rng.uniform(size=(8, 8)))
        assert rgb.min() >= 0.0 and rgb.max() <= 1.0


class TestRunEval:
    def test_record_count(self, small_report):
        report, _ = small_report
        # (#explainers + #aggregations - 1) * classes * images_per_class
        entries = 3 + 2 - 1
        assert len(report.records) == entries * 3 * 2

    def test_every_record_has_all_metrics(self, small_report):
        report, _ = small_report
        for rec in report.records:
            for metric in ("faithfulness", "sensitivity", "complexity"):
                assert isinstance(rec[metric], float)

    def test_summaries_cover_all_groups(self, small_report):
        report, _ = small_report
        assert set(report.method_summaries) == {
            "lime", "translrp", "attention_rollout[max_discard:0.99]",
            "attention_rollout[average]"}
        assert set(report.class_summaries) == {0, 1, 2}
        assert set(report.aggregation_summaries) == {"max_discard:0.99",
                                                     "average"}

    def test_deterministic_report_bytes(self, trained, tmp_path):
        weights, _, manifest, _ = trained
        cfg = BenchConfig(manifest_path="m", weights_path="w", seed=23,
                          images_per_class=1, lime_samples=60, faith_runs=20,
                          sens_samples=2,
                          aggregations=(HeadAggregation("average"),))
        p1, p2 = str(tmp_path / "r1.jsonl"), str(tmp_path / "r2.jsonl")
        save_report(run_eval(cfg, manifest, weights), p1)
        save_report(run_eval(cfg, manifest, weights), p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_insufficient_images_reports_counts(self, trained):
        weights, _, manifest, _ = trained
        cfg = BenchConfig(manifest_path="m", weights_path="w", seed=1,
                          images_per_class=1000)
        with pytest.raises(BenchInputError, match="20"):
            run_eval(cfg, manifest, weights)

    def test_unknown_explainer_rejected(self):
        with pytest.raises(ValueError, match="gradcam"):
            BenchConfig(manifest_path="m", weights_path="w", seed=1,
                        explainers=("gradcam",))

    def test_correct_only_filters_candidates(self, trained):
        # an untrained model misclassifies; the filter reports the smaller
        # pool when it cannot satisfy the request
        from vitexplain import ViTConfig, init_weights, predict_logits
        _, _, manifest, _ = trained
        weights = init_weights(ViTConfig(), seed=99)
        per_class_correct = []
        for label in range(3):
            recs = [r for r in manifest.split("test") if r.label == label]
            images = np.stack([manifest.load_image(r) for r in recs])
            preds = np.argmax(predict_logits(weights, images), axis=1)
            per_class_correct.append(int(np.sum(preds == label)))
        assert min(per_class_correct) < 20  # untrained: far from perfect
        cfg = BenchConfig(manifest_path="m", weights_path="w", seed=2,
                          images_per_class=20, correct_only=True)
        with pytest.raises(BenchInputError, match="correct-only"):
            run_eval(cfg, manifest, weights)

    def test_ground_truth_target_mode(self, trained):
        weights, _, manifest, _ = trained
        cfg = BenchConfig(manifest_path="m", weights_path="w", seed=3,
                          images_per_class=1, explainers=("translrp",),
                          aggregations=(), faith_runs=20, sens_samples=1,
                          target_mode="ground-truth")
        report = run_eval(cfg, manifest, weights)
        for rec in report.records:
            assert rec["target"] == rec["label"]


class TestReportIO:
    def test_round_trip_and_rerender(self, small_report):
        report, path = small_report
        loaded = load_report(path)
        assert render_method_table(loaded) == render_method_table(report)
        assert render_class_table(loaded) == render_class_table(report)
        assert render_aggregation_table(loaded) == \
            render_aggregation_table(report)

    def test_tampered_record_detected(self, small_report, tmp_path):
        _, path = small_report
        lines = open(path).read().strip().split("\n")
        for i, line in enumerate(lines):
            obj = json.loads(line)
            if obj["kind"] == "record":
                obj["faithfulness"] = 0.999999
                lines[i] = json.dumps(obj)
                break
        bad = str(tmp_path / "tampered.jsonl")
        open(bad, "w").write("\n".join(lines) + "\n")
        with pytest.raises(ReportIntegrityError, match="records give"):
            load_report(bad)

    def test_missing_summary_detected(self, small_report, tmp_path):
        _, path = small_report
        lines = [l for l in open(path).read().strip().split("\n")
                 if json.loads(l).get("kind") != "summary"
                 or json.loads(l).get("metric") != "complexity"
                 or json.loads(l).get("key") != "lime"]
        bad = str(tmp_path / "missing.jsonl")
        open(bad, "w").write("\n".join(lines) + "\n")
        with pytest.raises(ReportIntegrityError, match="missing"):
            load_report(bad)

    def test_garbage_line_rejected(self, small_report, tmp_path):
        _, path = small_report
        bad = str(tmp_path / "garbage.jsonl")
        open(bad, "w").write(open(path).read() + "{not json\n")
        with pytest.raises(ReportIntegrityError, match="JSON"):
            load_report(bad)


class TestTables:
    def test_method_table_has_three_rows_and_stat_cells(self, small_report):
        report, _ = small_report
        text = render_method_table(report)
        lines = [l for l in text.strip().split("\n")]
        # title + header + one row per explainer (rollout shown once)
        assert len(lines) == 2 + 3
        for row in lines[2:]:
            assert row.count("±") == 3

    def test_class_table_lists_three_classes(self, small_report):
        report, _ = small_report
        text = render_class_table(report)
        for name in ("diffuse-opacity", "clear", "focal-opacity"):
            assert name in text

    def test_aggregation_table_lists_requested_aggregations(self,
                                                            small_report):
        report, _ = small_report
        text = render_aggregation_table(report)
        assert "max_discard:0.99" in text
        assert "average" in text


class TestCli:
    def test_generate_then_train_deterministic(self, tmp_path):
        args = ["train", "--generate", "--per-class", "6", "--seed", "7",
                "--epochs", "2"]
        assert cli_main(args + ["--out", str(tmp_path / "a")]) == 0
        assert cli_main(args + ["--out", str(tmp_path / "b")]) == 0
        wa = open(tmp_path / "a" / "weights.bin", "rb").read()
        wb = open(tmp_path / "b" / "weights.bin", "rb").read()
        assert wa == wb
        log = open(tmp_path / "a" / "train_log.csv").read().strip()
        assert len(log.split("\n")) == 2  # one record per epoch

    def test_missing_dataset_exits_two(self, tmp_path, capsys):
        code = cli_main(["train", "--data", str(tmp_path / "nope"),
                         "--out", str(tmp_path / "out")])
        assert code == 2
        assert "manifest" in capsys.readouterr().err

    def test_unknown_explainer_exits_two(self, tmp_path, capsys):
        code = cli_main(["explain", "--weights", "w", "--image", "i",
                         "--out", str(tmp_path), "--methods", "gradcam"])
        assert code == 2
        err = capsys.readouterr().err
        assert "lime" in err and "translrp" in err

    def test_explain_writes_artifacts_and_triples(self, trained, tmp_path,
                                                  capsys):
        weights, _, manifest, _ = trained
        from vitexplain.weights_io import save_weights
        wpath = str(tmp_path / "weights.bin")
        save_weights(weights, wpath)
        image_path = os.path.join(manifest.root,
                                  manifest.split("test")[0].path)
        out = tmp_path / "explained"
        code = cli_main(["explain", "--weights", wpath, "--image", image_path,
                         "--out", str(out), "--seed", "3",
                         "--lime-samples", "60", "--faith-runs", "20",
                         "--sens-samples", "2"])
        assert code == 0
        captured = capsys.readouterr().out
        for name in ("lime", "attention_rollout", "translrp"):
            assert (out / f"{name}.attr").exists()
            assert (out / f"{name}.ppm").exists()
            assert f"{name}: (F, S, C) = (" in captured
        # attribution file round-trips against the ppm-independent values
        values = load_attribution(str(out / "lime.attr"))
        assert values.shape == (32, 32)
        rgb = read_ppm(str(out / "lime.ppm"))
        assert rgb.shape == (32, 32, 3)

    def test_eval_report_round_trip(self, trained, tmp_path, capsys):
        weights, _, manifest, _ = trained
        from vitexplain.weights_io import save_weights
        wpath = str(tmp_path / "weights.bin")
        save_weights(weights, wpath)
        out = tmp_path / "eval"
        code = cli_main([
            "eval", "--manifest", os.path.join(manifest.root, "manifest.csv"),
            "--weights", wpath, "--out", str(out), "--seed", "5",
            "--per-class", "1", "--explainers", "translrp",
            "--aggregations", "average", "--lime-samples", "60",
            "--faith-runs", "20", "--sens-samples", "2", "--quiet"])
        assert code == 0
        capsys.readouterr()
        assert (out / "report.jsonl").exists()
        for table in ("table1_methods.txt", "table2_per_class.txt",
                      "table3_aggregations.txt"):
            assert (out / table).exists()
        code = cli_main(["report", "--report", str(out / "report.jsonl"),
                         "--per-class"])
        assert code == 0
        rendered = capsys.readouterr().out
        assert rendered.strip() == \
            (out / "table2_per_class.txt").read_text().strip()

    def test_eval_requires_seed(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli_main(["eval", "--manifest", "m", "--weights", "w",
                      "--out", "o"])
        assert exc.value.code == 2

    def test_corrupt_report_exits_two(self, tmp_path, capsys):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"kind": "header", "seed": 0}\n{"oops": 1}\n')
        assert cli_main(["report", "--report", str(path)]) == 2
        assert "report" in capsys.readouterr().err
