import subprocess
import sys

import pytest

from seedpure.cli import main
from seedpure.features import load_features
from seedpure.imaging import list_images
from seedpure.weights import load_weights


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def full_size(tmp_path_factory):
    """Two varieties of three 75x170 images plus VGG weights."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-synth", "--out-dir", str(root / "data"), "--per-class", "3", "--seed", "7"]) == 0
    assert main(["gen-weights", "--model", "vgg16", "--seed", "42", "--out", str(root / "w.spwt")]) == 0
    return root


class TestGenerators:
    def test_gen_weights_deterministic(self, tmp_path, capsys):
        for name in ("a", "b"):
            assert run(capsys, "gen-weights", "--model", "vgg16", "--seed", 42, "--out",
                       tmp_path / f"{name}.spwt")[0] == 0
        assert (tmp_path / "a.spwt").read_bytes() == (tmp_path / "b.spwt").read_bytes()
        assert len(load_weights(tmp_path / "a.spwt")) == 26

    def test_bad_model_is_usage_error(self, tmp_path, capsys):
        code, _, err = run(capsys, "gen-weights", "--model", "alexnet", "--out", tmp_path / "x")
        assert code == 2 and "alexnet" in err
        assert not (tmp_path / "x").exists()

    def test_unwritable_path(self, tmp_path, capsys):
        code, _, _ = run(capsys, "gen-weights", "--model", "vgg16", "--out", tmp_path / "no" / "w.spwt")
        assert code == 1

    def test_gen_synth_counts_and_bytes(self, tmp_path, capsys):
        for name in ("a", "b"):
            assert run(capsys, "gen-synth", "--out-dir", tmp_path / name, "--per-class", 4,
                       "--seed", 3, "--height", 20, "--width", 30)[0] == 0
        for variety in ("variety_a", "variety_b"):
            fa, fb = list_images(tmp_path / "a" / variety), list_images(tmp_path / "b" / variety)
            assert len(fa) == 4
            assert [f.read_bytes() for f in fa] == [f.read_bytes() for f in fb]

    def test_gen_synth_zero_is_usage_error(self, tmp_path, capsys):
        code, _, _ = run(capsys, "gen-synth", "--out-dir", tmp_path / "s", "--per-class", 0)
        assert code == 2 and not (tmp_path / "s").exists()

    def test_gen_synth_spec_file(self, tmp_path, capsys):
        spec = tmp_path / "spec.toml"
        spec.write_text('[[classes]]\nname = "red"\nbase_color = [200, 10, 10]\n'
                        '[[classes]]\nname = "green"\nbase_color = [10, 200, 10]\n')
        code, _, _ = run(capsys, "gen-synth", "--out-dir", tmp_path / "s", "--per-class", 1,
                         "--spec", spec, "--height", 16, "--width", 16)
        assert code == 0 and sorted(p.name for p in (tmp_path / "s").iterdir()) == ["green", "red"]

    def test_gen_synth_bad_spec(self, tmp_path, capsys):
        spec = tmp_path / "spec.toml"
        spec.write_text('[[classes]]\nname = "only"\nbase_color = [1, 2, 3]\n')
        code, _, err = run(capsys, "gen-synth", "--out-dir", tmp_path / "s", "--per-class", 1, "--spec", spec)
        assert code == 2 and "classes" in err


class TestExtractTrainEval:
    def _extract(self, capsys, root, out, tap="vgg.block3", *extra):
        data = root / "data"
        return run(capsys, "extract", "--model", "vgg16", "--weights", root / "w.spwt", "--tap", tap,
                   "--input-dir", data / "variety_a", "--input-dir", data / "variety_b",
                   "--positive", "variety_a", "--out", out, *extra)

    def test_block3_width(self, full_size, capsys):
        code, out, _ = self._extract(capsys, full_size, full_size / "f.spft")
        assert code == 0
        fm = load_features(full_size / "f.spft")
        assert fm.values.shape == (6, 48384)
        assert fm.labels.tolist() == [1, 1, 1, 0, 0, 0]

    def test_invalid_tap_lists_valid(self, full_size, capsys):
        code, _, err = self._extract(capsys, full_size, full_size / "x.spft", "resnet.stage5.block1")
        assert code == 2
        assert "vgg.block3, vgg.block4, vgg.block5" in err

    def test_empty_dir_is_runtime_error(self, full_size, tmp_path, capsys):
        (tmp_path / "empty").mkdir()
        code, _, err = run(capsys, "extract", "--model", "vgg16", "--weights", full_size / "w.spwt",
                           "--tap", "vgg.block5", "--input-dir", tmp_path / "empty",
                           "--input-dir", full_size / "data" / "variety_b", "--positive", "empty",
                           "--out", tmp_path / "f.spft")
        assert code == 1 and "no images" in err

    def test_missing_weights(self, full_size, tmp_path, capsys):
        code, _, _ = run(capsys, "extract", "--model", "vgg16", "--weights", tmp_path / "none.spwt",
                         "--tap", "vgg.block5", "--input-dir", full_size / "data" / "variety_a",
                         "--input-dir", full_size / "data" / "variety_b", "--positive", "variety_a",
                         "--out", tmp_path / "f.spft")
        assert code == 1

    def test_positive_must_match_a_dir(self, full_size, tmp_path, capsys):
        code, _, _ = run(capsys, "extract", "--model", "vgg16", "--weights", full_size / "w.spwt",
                         "--tap", "vgg.block5", "--input-dir", full_size / "data" / "variety_a",
                         "--positive", "variety_z", "--out", tmp_path / "f.spft")
        assert code == 2

    def test_train_eval_round_trip(self, full_size, tmp_path, capsys):
        feats = full_size / "f5.spft"
        assert self._extract(capsys, full_size, feats, "vgg.block5")[0] == 0
        assert run(capsys, "train", "--algo", "lr", "--features", feats, "--model-out",
                   tmp_path / "m.json")[0] == 0
        code, first, _ = run(capsys, "eval", "--model-in", tmp_path / "m.json", "--features", feats)
        assert code == 0
        acc = float(first.split()[0].split("=")[1])
        assert acc >= 0.5 and "tp=" in first and "fn=" in first
        assert run(capsys, "eval", "--model-in", tmp_path / "m.json", "--features", feats)[1] == first

    @pytest.mark.parametrize("algo,flags", [("rf", ["--n-trees", "3", "--max-features", "sqrt"]),
                                            ("knn", ["--k", "1"]), ("svm", ["--C", "0.5"]),
                                            ("dt", ["--max-features", "4"]),
                                            ("et", ["--n-trees", "2", "--seed", "9"])])
    def test_hyperparameter_flags(self, full_size, tmp_path, capsys, algo, flags):
        feats = full_size / "f5b.spft"
        if not feats.exists():
            assert self._extract(capsys, full_size, feats, "vgg.block5")[0] == 0
        code, _, _ = run(capsys, "train", "--algo", algo, "--features", feats,
                         "--model-out", tmp_path / "m.json", *flags)
        assert code == 0

    def test_eval_width_mismatch(self, full_size, tmp_path, capsys):
        assert self._extract(capsys, full_size, tmp_path / "f4.spft", "vgg.block4")[0] == 0
        assert self._extract(capsys, full_size, tmp_path / "f5.spft", "vgg.block5")[0] == 0
        run(capsys, "train", "--algo", "dt", "--features", tmp_path / "f5.spft", "--model-out", tmp_path / "m.json")
        code, _, err = run(capsys, "eval", "--model-in", tmp_path / "m.json", "--features", tmp_path / "f4.spft")
        assert code == 1 and "expects 5120 features" in err

    def test_bad_algo(self, capsys, tmp_path):
        assert run(capsys, "train", "--algo", "mlp", "--features", "x", "--model-out", tmp_path / "m")[0] == 2


class TestExperimentCommand:
    def _write(self, path, root, body=""):
        path.write_text(
            f'taps = ["vgg.block5"]\nalgorithms = ["lr", "dt"]\npositives = ["variety_a"]\n{body}'
            f'[varieties]\nvariety_a = "{root}/variety_a"\nvariety_b = "{root}/variety_b"\n'
            '[geometry]\nheight = 32\nwidth = 48\n'
            '[output]\ncsv = "r.csv"\nmarkdown = "r.md"\n')

    def test_minimal_config(self, synth_dir, tmp_path, capsys):
        self._write(tmp_path / "c.toml", synth_dir)
        code, out, _ = run(capsys, "experiment", "--config", tmp_path / "c.toml")
        assert code == 0 and "2 of 2" in out
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert len(lines) == 3
        assert (tmp_path / "r.md").read_text().startswith("### Accuracy")

    def test_rerun_same_csv_without_timings(self, synth_dir, tmp_path, capsys):
        self._write(tmp_path / "c.toml", synth_dir, "seed = 5\n")
        texts = []
        for _ in range(2):
            assert run(capsys, "experiment", "--config", tmp_path / "c.toml")[0] == 0
            rows = [line.split(",")[:-2] for line in (tmp_path / "r.csv").read_text().splitlines()]
            texts.append(rows)
        assert texts[0] == texts[1]

    def test_malformed_config_names_key(self, tmp_path, capsys):
        (tmp_path / "c.toml").write_text('split_fraction = "big"\n[varieties]\na = "x"\nb = "y"\n')
        code, _, err = run(capsys, "experiment", "--config", tmp_path / "c.toml")
        assert code == 2 and "split_fraction" in err

    def test_missing_config(self, tmp_path, capsys):
        assert run(capsys, "experiment", "--config", tmp_path / "nope.toml")[0] == 2

    def test_total_failure_exit_1(self, tmp_path, capsys):
        for name in ("a", "b"):
            (tmp_path / name).mkdir()
        (tmp_path / "c.toml").write_text(f'[varieties]\na = "{tmp_path}/a"\nb = "{tmp_path}/b"\n'
                                         '[output]\ncsv = "r.csv"\n')
        code, _, err = run(capsys, "experiment", "--config", tmp_path / "c.toml")
        assert code == 1 and "failed" in err


class TestInspect:
    def test_graph(self, capsys):
        code, out, _ = run(capsys, "inspect", "--model", "vgg16")
        assert code == 0 and "vgg.block3: (256, 9, 21) -> 48384 features" in out

    def test_files(self, full_size, capsys):
        assert "26 tensors" in run(capsys, "inspect", full_size / "w.spwt")[1]
        img = list_images(full_size / "data" / "variety_a")[0]
        assert "75 x 170" in run(capsys, "inspect", img)[1]

    def test_unknown_file(self, tmp_path, capsys):
        (tmp_path / "x.bin").write_bytes(b"\x00\x01")
        assert run(capsys, "inspect", tmp_path / "x.bin")[0] == 1

    def test_nothing_to_inspect(self, capsys):
        assert run(capsys, "inspect")[0] == 2


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "seedpure.cli", "inspect", "--model", "resnet50"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "(2048, 3, 6)" in out.stdout
    bad = subprocess.run([sys.executable, "-m", "seedpure.cli", "frobnicate"], capture_output=True)
    assert bad.returncode == 2
