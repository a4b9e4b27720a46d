import json

import pytest

from m2fn.cli import EXIT_DATA, EXIT_NOTHING, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--n-instances", "60", "--seed", "1", "--out", str(root / "syn")]) == EXIT_OK
    assert main(["aggregate", str(root / "syn" / "clicks.csv"), "--min-impressions", "1",
                 "--image-dir", str(root / "syn" / "images"), "--out", str(root / "agg.jsonl")]) == EXIT_OK
    (root / "run.cfg").write_text("epochs = 1\nbatch_size = 8\nrare_level_threshold = 5\nlearning_rate = 0.001\n")
    code = main(["train", "--config", str(root / "run.cfg"), "--train", str(root / "agg.jsonl"),
                 "--out", str(root / "run")])
    assert code == EXIT_OK
    return root


class TestVerbs:
    def test_synth_outputs(self, workspace):
        syn = workspace / "syn"
        # several instances share one image
        assert len(list((syn / "images").glob("*.png"))) == 15
        truth = [json.loads(l) for l in (syn / "truth.jsonl").read_text().splitlines()]
        assert len(truth) == 60 and 0 < truth[0]["probability"] < 1

    def test_train_outputs(self, workspace):
        run = workspace / "run"
        for name in ("best.ckpt", "epochs.jsonl", "run.cfg", "test_report.json"):
            assert (run / name).exists()

    def test_eval(self, workspace, capsys):
        code = main(["eval", str(workspace / "run" / "best.ckpt"), str(workspace / "agg.jsonl"),
                     "--out", str(workspace / "ev")])
        assert code == EXIT_OK
        report = json.loads((workspace / "ev" / "report.json").read_text())
        assert set(report) >= {"sprc_mean", "lcc_mean"}

    def test_gradcam_and_plot(self, workspace):
        out = workspace / "cam"
        assert main(["gradcam", str(workspace / "run" / "best.ckpt"), str(workspace / "agg.jsonl"),
                     "--layer", "block2", "--out", str(out)]) == EXIT_OK
        assert (out / "gradcam_block2.png").exists()
        assert main(["plot", "--heatmap", str(out / "gradcam_block2.npz"),
                     "--epoch-log", str(workspace / "run" / "epochs.jsonl"), "--out", str(workspace / "pl")]) == 0
        assert (workspace / "pl" / "loss_curve.png").exists()


class TestExitCodes:
    def test_no_verb_is_usage(self):
        with pytest.raises(SystemExit) as e:
            main([])
        assert e.value.code == EXIT_USAGE

    def test_bad_flag_is_usage(self):
        with pytest.raises(SystemExit) as e:
            main(["train", "--loss", "hinge"])
        assert e.value.code == EXIT_USAGE

    def test_gradcam_index_out_of_range(self, workspace):
        code = main(["gradcam", str(workspace / "run" / "best.ckpt"), str(workspace / "agg.jsonl"),
                     "--index", "9999", "--out", str(workspace / "cam2")])
        assert code == EXIT_USAGE

    def test_missing_file_is_data_error(self, tmp_path):
        assert main(["aggregate", str(tmp_path / "none.csv"), "--out", str(tmp_path / "a.jsonl")]) == EXIT_DATA

    def test_malformed_log_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"image_id": "a", "clicked": 1}\n')
        assert main(["aggregate", str(bad), "--out", str(tmp_path / "a.jsonl")]) == EXIT_DATA

    def test_unknown_layer_is_data_error(self, workspace):
        code = main(["gradcam", str(workspace / "run" / "best.ckpt"), str(workspace / "agg.jsonl"),
                     "--layer", "fc7", "--out", str(workspace / "cam3")])
        assert code == EXIT_DATA

    def test_nothing_to_plot(self, tmp_path):
        assert main(["plot", "--out", str(tmp_path)]) == EXIT_NOTHING
        (tmp_path / "empty.jsonl").write_text("")
        assert main(["plot", "--epoch-log", str(tmp_path / "empty.jsonl"), "--out", str(tmp_path)]) == EXIT_NOTHING

    def test_numeric_failure(self, workspace, tmp_path):
        rows = [json.loads(l) for l in (workspace / "agg.jsonl").read_text().splitlines()]
        for r in rows:
            # impression weights overflow float32, so the weighted loss is not finite
            r["impressions"] = 10 ** 300
            r["clicks"] = 0
            r["ctr"] = 0.0
        (tmp_path / "nan.jsonl").write_text("".join(json.dumps(r) + "\n" for r in rows))
        code = main(["train", "--config", str(workspace / "run.cfg"), "--train", str(tmp_path / "nan.jsonl"),
                     "--out", str(tmp_path / "run")])
        assert code == EXIT_NUMERIC
