import csv
import json
import math

import numpy as np
import pytest

from hazenet import cli, fileio
from hazenet.gaze import GazeAngles
from hazenet.synth import default_landmarks

TINY = ["--hr-size", "16", "--channels", "8", "--num-hfab", "1", "--gaze-widths", "4,8",
        "--gaze-hidden", "16", "--batch", "4"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Dataset plus pretrained and jointly trained checkpoints, built once."""
    root = tmp_path_factory.mktemp("cli")
    common = TINY + ["--data-dir", root / "data", "--identities", "3", "--val-identities", "1"]
    assert run("generate", "--n", 8, "--seed", 1, *common) == 0
    assert run("pretrain-sr", "--epochs", 3, "--checkpoint", root / "sr.ckpt",
               "--metrics", root / "sr.csv", *common) == 0
    assert run("pretrain-gaze", "--epochs", 3, "--checkpoint", root / "gaze.ckpt",
               "--metrics", root / "gaze.csv", *common) == 0
    return root, common


def train_args(root, common, name, epochs):
    return ["train", "--epochs", epochs, "--sr-checkpoint", root / "sr.ckpt",
            "--gaze-checkpoint", root / "gaze.ckpt", "--checkpoint", root / f"{name}.ckpt",
            "--metrics", root / f"{name}.csv", *common]


class TestGenerate:
    def test_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            assert run("generate", "--n", 8, "--seed", 1, "--data-dir", tmp_path / name) == 0
        a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
        assert a == b and len(a) == 17

    def test_manifest_and_extents(self, tmp_path):
        assert run("generate", "--n", 5, "--scale", 2, "--data-dir", tmp_path) == 0
        rows = fileio.read_manifest(tmp_path / "manifest.csv")
        assert len(rows) == 5
        for r in rows:
            hr = fileio.load_ppm(tmp_path / r["hr_path"])
            lr = fileio.load_ppm(tmp_path / r["lr_path"])
            assert lr.shape == (3, hr.shape[1] // 2, hr.shape[2] // 2)

    def test_different_seed_differs(self, tmp_path):
        run("generate", "--n", 2, "--seed", 1, "--data-dir", tmp_path / "a")
        run("generate", "--n", 2, "--seed", 2, "--data-dir", tmp_path / "b")
        assert tree_bytes(tmp_path / "a") != tree_bytes(tmp_path / "b")


class TestExtractHf:
    def raw(self, tmp_path, img, lam):
        fileio.save_ppm(tmp_path / "in.ppm", img)
        assert run("extract-hf", "--input", tmp_path / "in.ppm", "--output", tmp_path / "out.ppm",
                   "--lambda", lam, "--raw", tmp_path / "raw.npy") == 0
        assert fileio.load_ppm(tmp_path / "out.ppm").shape == img.shape
        return np.load(tmp_path / "raw.npy")

    def test_constant_is_zero(self, tmp_path):
        assert np.max(np.abs(self.raw(tmp_path, np.full((3, 12, 12), 0.6), 0.2))) < 1e-9

    def test_lambda_zero_round_trip(self, tmp_path):
        img = np.random.default_rng(0).uniform(size=(3, 12, 10))
        assert np.max(np.abs(self.raw(tmp_path, img, 0.0) - img)) <= 1 / 255

    def test_energy_ordering(self, tmp_path):
        img = np.random.default_rng(1).uniform(size=(3, 16, 16))
        e2 = np.sum(self.raw(tmp_path, img, 0.2) ** 2)
        e5 = np.sum(self.raw(tmp_path, img, 0.5) ** 2)
        assert e5 < e2

    def test_bad_input(self, tmp_path):
        (tmp_path / "bad.ppm").write_bytes(b"P5\n1 1\n255\n\x00")
        assert run("extract-hf", "--input", tmp_path / "bad.ppm", "--output", tmp_path / "o.ppm") == 3
        fileio.save_ppm(tmp_path / "ok.ppm", np.zeros((3, 4, 4)))
        assert run("extract-hf", "--input", tmp_path / "ok.ppm", "--output", tmp_path / "o.ppm",
                   "--lambda", 1.5) == 2


class TestTraining:
    def test_pretrain_metrics(self, workdir):
        root, _ = workdir
        lines = (root / "sr.csv").read_text().splitlines()
        assert lines[0] == "epoch,loss" and len(lines) == 4
        assert fileio.load_checkpoint(root / "sr.ckpt").has_segment("sr")

    def test_train_metrics_and_checkpoint(self, workdir):
        root, common = workdir
        assert run(*train_args(root, common, "t2", 2)) == 0
        rows = list(csv.DictReader(open(root / "t2.csv")))
        assert [int(r["epoch"]) for r in rows] == [1, 2] and [r["phase"] for r in rows] == ["1", "2"]
        ck = fileio.load_checkpoint(root / "t2.ckpt")
        assert ck.meta["epoch"] == 2 and ck.meta["phase"] == 2 and ck.meta["seed"] == 0
        assert ck.meta["config_digest"] and ck.has_segment("sr") and ck.has_segment("gaze")

    def test_fixed_seed_reproduces_metrics(self, workdir):
        root, common = workdir
        run(*train_args(root, common, "r1", 2))
        run(*train_args(root, common, "r2", 2))
        assert (root / "r1.csv").read_bytes() == (root / "r2.csv").read_bytes()

    def test_resume_continues_numbering(self, workdir):
        root, common = workdir
        assert run(*train_args(root, common, "full", 4)) == 0
        assert run(*train_args(root, common, "part", 2)) == 0
        assert run("train", "--resume", "--epochs", 2, "--checkpoint", root / "part.ckpt",
                   "--metrics", root / "part.csv", *common) == 0
        rows = list(csv.DictReader(open(root / "part.csv")))
        assert [int(r["epoch"]) for r in rows] == [1, 2, 3, 4]
        # optimizer moments travel in the checkpoint, so resuming is exact
        assert (root / "part.csv").read_text() == (root / "full.csv").read_text()

    def test_missing_inputs(self, workdir, tmp_path):
        root, common = workdir
        assert run("train", "--epochs", 1, *common) == 2
        assert run("train", "--epochs", 1, "--sr-checkpoint", tmp_path / "nope",
                   "--gaze-checkpoint", root / "gaze.ckpt", *common) == 2
        assert run("pretrain-sr", "--data-dir", tmp_path / "empty", "--epochs", 1) == 2
        assert run("train", "--epochs", 1, "--sr-checkpoint", root / "gaze.ckpt",
                   "--gaze-checkpoint", root / "gaze.ckpt", *common) == 3

    def test_non_finite_loss_exit_code(self, workdir, tmp_path):
        root, common = workdir
        code = run("pretrain-sr", "--epochs", 4, "--learning-rate", "1e300",
                   "--checkpoint", tmp_path / "x.ckpt", "--metrics", tmp_path / "x.csv", *common)
        assert code == 4


class TestEval:
    def test_report_fields(self, workdir, capsys):
        root, common = workdir
        run(*train_args(root, common, "ev", 1))
        capsys.readouterr()
        assert run("eval", "--checkpoint", root / "ev.ckpt", "--report", root / "rep.json",
                   "--per-sample", root / "ps.csv", *common) == 0
        printed = json.loads(capsys.readouterr().out.splitlines()[0])
        report = json.loads((root / "rep.json").read_text())
        assert set(report) == {"psnr_db", "ssim", "angular_error_deg", "n"} and report == printed
        assert len((root / "ps.csv").read_text().splitlines()) == report["n"] + 1

    def test_sweep_rows(self, workdir):
        root, common = workdir
        run(*train_args(root, common, "sw", 1))
        assert run("eval", "--checkpoint", root / "sw.ckpt", "--epochs", 1,
                   "--sweep", root / "sweep.csv", *common) == 0
        rows = list(csv.DictReader(open(root / "sweep.csv")))
        assert [(r["sweep"], float(r["lambda"]), float(r["alpha"])) for r in rows] == [
            ("lambda", 0.2, 0.1), ("lambda", 0.4, 0.1), ("lambda", 0.5, 0.1),
            ("alpha", 0.2, 0.0), ("alpha", 0.2, 0.1), ("alpha", 0.2, 1.0)]
        assert all(math.isfinite(float(r["angular_error_deg"])) for r in rows)

    def test_overfit_single_sample(self, tmp_path, capsys):
        common = TINY + ["--data-dir", tmp_path / "d", "--val-identities", 0, "--batch", 1]
        assert run("generate", "--n", 1, "--identities", 1, *common) == 0
        assert run("pretrain-sr", "--epochs", 30, "--checkpoint", tmp_path / "s.ckpt",
                   "--metrics", tmp_path / "s.csv", *common) == 0
        assert run("pretrain-gaze", "--epochs", 100, "--checkpoint", tmp_path / "g.ckpt",
                   "--metrics", tmp_path / "g.csv", *common) == 0
        assert run("train", "--epochs", 6, "--sr-checkpoint", tmp_path / "s.ckpt",
                   "--gaze-checkpoint", tmp_path / "g.ckpt", "--checkpoint", tmp_path / "j.ckpt",
                   "--metrics", tmp_path / "j.csv", *common) == 0
        capsys.readouterr()
        assert run("eval", "--checkpoint", tmp_path / "j.ckpt", "--split", "train", *common) == 0
        assert json.loads(capsys.readouterr().out)["angular_error_deg"] < 1.0


class TestInfer:
    def test_outputs(self, workdir, capsys):
        root, common = workdir
        run(*train_args(root, common, "inf", 1))
        capsys.readouterr()
        assert run("infer", "--checkpoint", root / "inf.ckpt", "--input", root / "data/lr/00000.ppm",
                   "--output", root / "sr.ppm", "--overlay", root / "ov.ppm", *common) == 0
        out = capsys.readouterr().out.strip()
        sr = fileio.load_ppm(root / "sr.ppm")
        assert sr.shape == (3, 16, 16)
        fields = dict(kv.split("=") for kv in out.split())
        assert list(fields) == ["theta_rad", "phi_rad", "theta_deg", "phi_deg"]
        assert float(fields["theta_deg"]) == pytest.approx(math.degrees(float(fields["theta_rad"])),
                                                           abs=1e-3)
        overlay = fileio.load_ppm(root / "ov.ppm")
        assert overlay.shape == sr.shape and np.any(overlay != sr)

    def test_bad_landmarks(self, workdir):
        root, common = workdir
        assert run("infer", "--checkpoint", root / "sr.ckpt", "--input", root / "data/lr/00000.ppm",
                   "--output", root / "x.ppm", "--landmarks", "0.1,0.2", *common) in (2, 3)


def _seg_distance(p, a, b):
    a, b, p = map(np.asarray, (a, b, p))
    d = b - a
    t = 0.0 if not d.any() else float(np.clip(np.dot(p - a, d) / np.dot(d, d), 0, 1))
    return float(np.hypot(*(p - (a + t * d))))


@pytest.mark.parametrize("theta,phi", [(0.0, 0.0), (0.3, -0.4), (-0.5, 0.5), (0.1, 0.9)])
def test_overlay_confined_to_arrow(theta, phi):
    rng = np.random.default_rng(3)
    img = rng.uniform(0.2, 0.8, size=(3, 32, 32))
    g, lm = GazeAngles(theta, phi), default_landmarks()
    out = cli.draw_gaze_arrow(img, g, lm)
    changed = np.argwhere(np.any(out != img, axis=0))
    assert len(changed)
    segments = cli.arrow_segments(g, lm, (32, 32))
    for row, col in changed:
        centre = (col + 0.5, row + 0.5)
        # a pixel touched by a segment has its centre within sqrt(2)/2 of it
        assert min(_seg_distance(centre, a, b) for a, b in segments) <= math.sqrt(2) / 2 + 1e-9
    assert np.all(out[:, changed[:, 0], changed[:, 1]] == np.array(cli.ARROW_COLOR)[:, None])


def test_arrow_direction_follows_yaw():
    (start, end), *_ = cli.arrow_segments(GazeAngles(0.0, 0.4), default_landmarks(), (32, 32))
    assert end[0] > start[0] and abs(end[1] - start[1]) < 1e-9
    (start, end), *_ = cli.arrow_segments(GazeAngles(0.4, 0.0), default_landmarks(), (32, 32))
    assert end[1] > start[1]


class TestConfig:
    def test_precedence(self, tmp_path):
        (tmp_path / "run.ini").write_text("# desk run\nepochs = 7\nalpha = 0.5\n")
        args = cli.build_parser().parse_args(["train", "--config", str(tmp_path / "run.ini"),
                                              "--alpha", "0.25"])
        cfg = cli.resolve_config(args)
        assert cfg["epochs"] == 7 and cfg["alpha"] == 0.25 and cfg["batch"] == 8

    def test_sections_and_bools(self, tmp_path):
        (tmp_path / "run.ini").write_text("[model]\nchannels = 8\n[train]\njoint = yes\n")
        args = cli.build_parser().parse_args(["train", "--config", str(tmp_path / "run.ini"), "--no-joint"])
        cfg = cli.resolve_config(args)
        assert cfg["channels"] == 8 and cfg["joint"] is False

    def test_unknown_key(self, tmp_path, capsys):
        (tmp_path / "run.ini").write_text("epochs = 3\nlearning_rat = 0.1\n")
        assert run("generate", "--config", tmp_path / "run.ini", "--data-dir", tmp_path / "d") == 2
        assert "learning_rat" in capsys.readouterr().err

    def test_bad_value_and_usage(self, tmp_path):
        assert run("generate", "--n", "many", "--data-dir", tmp_path) == 2
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == 2

    def test_every_key_has_a_flag(self):
        help_text = cli.build_parser()._subparsers._group_actions[0].choices["train"].format_help()
        for key in cli.KEYS:
            assert "--" + key.replace("_", "-") in help_text
