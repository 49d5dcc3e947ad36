import csv

import pytest

from cnnmap.main import EXIT_DATA, EXIT_OK, EXIT_USAGE, run_command
from cnnmap.models import CnnfScale, InputKind, InputSpec
from cnnmap.services.cnnf import build_cnnf
from cnnmap.services.map_store import load_map, save_map


@pytest.fixture(scope="module")
def tiny_scene(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "scene"
    code = run_command(["synth", "--out", str(out), "--trajectories", "3", "--frames", "4",
                        "--points", "800", "--seed", "2"])
    assert code == EXIT_OK
    return out


def _train(scene, out_dir, *extra):
    return run_command(["train", "--data", str(scene), "--epochs", "2", "--batch-size", "4", "--beta", "10",
                        "--seed", "5", "--deterministic", "--out", str(out_dir / "m.cnnmap"),
                        "--log", str(out_dir / "log.csv"), *extra])


class TestSynth:
    def test_writes_scene(self, tiny_scene):
        assert sorted(p.name for p in tiny_scene.glob("seq-*")) == ["seq-01", "seq-02", "seq-03"]
        assert len(list((tiny_scene / "seq-01").glob("*.color.png"))) == 4
        assert (tiny_scene / "intrinsics.json").is_file()


class TestTrain:
    def test_prints_resolved_configuration(self, tiny_scene, tmp_path, capsys):
        assert _train(tiny_scene, tmp_path) == EXIT_OK
        out = capsys.readouterr().out
        assert "Resolved configuration:" in out
        assert "epochs = 2" in out
        assert "momentum = 0.9" in out

    def test_rgbpc_map_has_six_deep_filters(self, tiny_scene, tmp_path):
        assert _train(tiny_scene, tmp_path, "--input", "rgbpc") == EXIT_OK
        model = load_map(tmp_path / "m.cnnmap")
        assert model.input_spec.kind == InputKind.RGBPC
        assert model.layers[0].in_depth == 6
        assert model.meta.epochs_trained == 2
        assert (tmp_path / "m.cnnmap.json").is_file()

    def test_deterministic_runs_are_byte_identical(self, tiny_scene, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir()
        b.mkdir()
        assert _train(tiny_scene, a) == EXIT_OK
        assert _train(tiny_scene, b) == EXIT_OK
        assert (a / "m.cnnmap").read_bytes() == (b / "m.cnnmap").read_bytes()
        assert (a / "log.csv").read_bytes() == (b / "log.csv").read_bytes()

    def test_init_map_reuses_weights(self, tiny_scene, tmp_path):
        assert _train(tiny_scene, tmp_path) == EXIT_OK
        first = tmp_path / "first.cnnmap"
        (tmp_path / "m.cnnmap").rename(first)
        assert _train(tiny_scene, tmp_path, "--init-map", str(first)) == EXIT_OK

    def test_init_map_shape_mismatch(self, tiny_scene, tmp_path, capsys):
        gray = tmp_path / "gray.cnnmap"
        save_map(build_cnnf(InputSpec(kind=InputKind.GRAY)), gray)
        assert _train(tiny_scene, tmp_path, "--init-map", str(gray)) == EXIT_DATA
        assert "conv1" in capsys.readouterr().err

    def test_config_file_is_layered_under_flags(self, tiny_scene, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs=9\nmomentum=0.5\n")
        assert _train(tiny_scene, tmp_path, "--config", str(cfg)) == EXIT_OK
        out = capsys.readouterr().out
        assert "epochs = 2" in out
        assert "momentum = 0.5" in out


class TestEval:
    def test_writes_reports(self, tiny_scene, tmp_path, capsys):
        assert _train(tiny_scene, tmp_path) == EXIT_OK
        code = run_command(["eval", "--map", str(tmp_path / "m.cnnmap"), "--sequence", str(tiny_scene / "seq-03"),
                            "--report", str(tmp_path / "r.csv"), "--trajectory", str(tmp_path / "t.csv")])
        assert code == EXIT_OK
        with open(tmp_path / "t.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0][:2] == ["frame", "gt_x"]
        assert len(rows) == 5
        assert "position" in capsys.readouterr().out

    def test_missing_sequence(self, tmp_path, capsys):
        save_map(build_cnnf(InputSpec()), tmp_path / "m.cnnmap")
        missing = tmp_path / "missing"
        code = run_command(["eval", "--map", str(tmp_path / "m.cnnmap"), "--sequence", str(missing)])
        assert code == EXIT_DATA
        assert str(missing) in capsys.readouterr().err

    def test_corrupt_map(self, tiny_scene, tmp_path, capsys):
        bad = tmp_path / "bad.cnnmap"
        bad.write_bytes(b"GARBAGE!" + bytes(100))
        code = run_command(["eval", "--map", str(bad), "--sequence", str(tiny_scene / "seq-01")])
        assert code == EXIT_DATA
        assert "magic" in capsys.readouterr().err


class TestExperiment:
    def test_series_csv(self, tiny_scene, tmp_path):
        out = tmp_path / "series.csv"
        code = run_command(["experiment", "--scene-dir", str(tiny_scene), "--epochs", "1", "--beta", "10",
                            "--deterministic", "--out", str(out)])
        assert code == EXIT_OK
        with open(out, newline="") as f:
            rows = list(csv.reader(f))
        assert [r[0] for r in rows] == ["k", "1", "2"]
        assert rows[1][4:] == rows[2][4:]

    def test_multiple_seeds(self, tiny_scene, tmp_path):
        out = tmp_path / "series.csv"
        code = run_command(["experiment", "--scene-dir", str(tiny_scene), "--epochs", "1", "--seeds", "2",
                            "--seed", "4", "--out", str(out)])
        assert code == EXIT_OK
        assert (tmp_path / "series-seed4.csv").is_file()
        assert (tmp_path / "series-seed5.csv").is_file()

    def test_compare_inputs(self, tiny_scene, tmp_path):
        out = tmp_path / "cmp.csv"
        code = run_command(["experiment", "--scene-dir", str(tiny_scene), "--test-seq", "1", "--epochs", "1",
                            "--compare-inputs", "gray,rgbd", "--out", str(out)])
        assert code == EXIT_OK
        assert out.read_text().splitlines()[1].startswith("gray,")

    def test_bad_input_kind(self, tiny_scene, tmp_path):
        code = run_command(["experiment", "--scene-dir", str(tiny_scene), "--compare-inputs", "infrared",
                            "--out", str(tmp_path / "x.csv")])
        assert code == EXIT_USAGE


class TestInspect:
    def test_full_scale_param_count(self, tmp_path, capsys):
        path = tmp_path / "full.cnnmap"
        save_map(build_cnnf(InputSpec(), CnnfScale.FULL), path)
        assert run_command(["inspect", "--map", str(path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "param_count: 56766215" in out
        assert f"bytes: {path.stat().st_size}" in out
        assert "n=3" in out

    def test_export_filters(self, tmp_path):
        path = tmp_path / "m.cnnmap"
        save_map(build_cnnf(InputSpec()), path)
        assert run_command(["inspect", "--map", str(path), "--layers",
                            "--export-filters", str(tmp_path / "f.png")]) == EXIT_OK
        assert (tmp_path / "f.png").is_file()


class TestExitCodes:
    def test_unknown_flag(self, capsys):
        assert run_command(["inspect", "--bogus"]) == EXIT_USAGE
        assert "Usage" in capsys.readouterr().err

    def test_unknown_command(self):
        assert run_command(["fly"]) == EXIT_USAGE

    def test_bad_config_value(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("keep_prob=2\n")
        path = tmp_path / "m.cnnmap"
        save_map(build_cnnf(InputSpec()), path)
        assert run_command(["inspect", "--map", str(path), "--config", str(cfg)]) == EXIT_USAGE
        assert "keep_prob" in capsys.readouterr().err

    def test_missing_map_file(self, tmp_path, capsys):
        assert run_command(["inspect", "--map", str(tmp_path / "none.cnnmap")]) == EXIT_DATA
        assert "none.cnnmap" in capsys.readouterr().err

    def test_help(self, capsys):
        assert run_command(["--help"]) == EXIT_OK
        assert "train" in capsys.readouterr().out
