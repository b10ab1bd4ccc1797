import hashlib
import shutil

import numpy as np
import pytest
from PIL import Image

from saldepth.cli import main


def _tree_digest(root):
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*.png")):
        digest.update(str(path.relative_to(root)).encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


def _write_config(path, toy, ckpt_dir, **extra):
    lines = {
        "rgb_root": toy / "rgb",
        "rgbd_root": toy / "rgbd",
        "backbone": "tiny",
        "input_size": 64,
        "batch_size": 2,
        "steps": 2,
        "seed": 3,
        "checkpoint_dir": ckpt_dir,
        "checkpoint_every": 0,
        "torch_threads": 1,
    }
    lines.update(extra)
    path.write_text("".join(f"{k} = {v}\n" for k, v in lines.items()))
    return path


@pytest.fixture
def toy(tmp_path):
    out = tmp_path / "toy"
    assert main(["gen-toy", "--out", str(out), "--n-rgb", "6", "--n-rgbd", "6",
                 "--size", "64", "--seed", "7"]) == 0
    return out


class TestGenToy:
    def test_deterministic_trees(self, tmp_path):
        args = ["--n-rgb", "8", "--n-rgbd", "8", "--size", "32", "--seed", "7"]
        assert main(["gen-toy", "--out", str(tmp_path / "a")] + args) == 0
        assert main(["gen-toy", "--out", str(tmp_path / "b")] + args) == 0
        assert _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b")

    def test_missing_out_flag_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["gen-toy", "--n-rgb", "4"])
        assert exc.value.code == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_zero_count_exits_2(self, tmp_path):
        assert main(["gen-toy", "--out", str(tmp_path / "x"), "--n-rgb", "0"]) == 2


class TestTrain:
    def test_train_writes_csv_and_checkpoint(self, tmp_path, toy, capsys):
        cfg = _write_config(tmp_path / "run.cfg", toy, tmp_path / "run")
        assert main(["train", "--config", str(cfg)]) == 0
        out = capsys.readouterr().out
        assert "effective configuration" in out
        csv_lines = (tmp_path / "run" / "loss_log.csv").read_text().strip().splitlines()
        assert len(csv_lines) == 3  # header + 2 steps
        assert (tmp_path / "run" / "final.bin").exists()

    def test_ablation_b_zero_columns(self, tmp_path, toy):
        cfg = _write_config(tmp_path / "run.cfg", toy, tmp_path / "run")
        assert main(["train", "--config", str(cfg), "--ablation", "B", "--steps", "3"]) == 0
        lines = (tmp_path / "run" / "loss_log.csv").read_text().strip().splitlines()
        header = lines[0].split(",")
        for row in lines[1:]:
            values = dict(zip(header, row.split(",")))
            for column in ("adv_s", "adv_d", "disc_s", "disc_d", "init_d", "fin_d"):
                assert float(values[column]) == 0.0

    def test_unknown_config_key_exits_2(self, tmp_path, toy, capsys):
        cfg = _write_config(tmp_path / "run.cfg", toy, tmp_path / "run")
        cfg.write_text(cfg.read_text() + "warp_factor = 9\n")
        assert main(["train", "--config", str(cfg)]) == 2
        assert "warp_factor" in capsys.readouterr().err

    def test_steps_flag_overrides_config(self, tmp_path, toy):
        cfg = _write_config(tmp_path / "run.cfg", toy, tmp_path / "run")
        assert main(["train", "--config", str(cfg), "--steps", "4"]) == 0
        lines = (tmp_path / "run" / "loss_log.csv").read_text().strip().splitlines()
        assert len(lines) == 5


class TestEval:
    def test_pred_equal_gt_is_perfect(self, tmp_path, toy, capsys):
        pred = tmp_path / "pred"
        shutil.copytree(toy / "rgb" / "gt", pred)
        assert main(["eval", "--pred", str(pred), "--gt", str(toy / "rgb" / "gt")]) == 0
        out = capsys.readouterr().out.strip().splitlines()
        name, mae_v, f_v, s_v, e_v, n = out[-1].split(",")
        assert float(mae_v) == pytest.approx(0.0, abs=1e-6)
        assert float(f_v) == pytest.approx(1.0, abs=1e-6)
        assert float(s_v) == pytest.approx(1.0, abs=1e-4)
        assert float(e_v) == pytest.approx(1.0, abs=1e-6)
        assert int(n) == 6

    def test_checkpoint_mode_writes_gray_maps(self, tmp_path, toy):
        cfg = _write_config(tmp_path / "run.cfg", toy, tmp_path / "run")
        assert main(["train", "--config", str(cfg)]) == 0
        out_dir = tmp_path / "maps"
        assert main(["eval", "--checkpoint", str(tmp_path / "run" / "final.bin"),
                     "--data", str(toy / "rgbd"), "--out", str(out_dir),
                     "--csv", str(tmp_path / "m.csv")]) == 0
        maps = sorted(out_dir.glob("*.png"))
        assert len(maps) == 6
        img = Image.open(maps[0])
        assert img.mode == "L" and img.size == (64, 64)
        assert (tmp_path / "m.csv").exists()

    def test_mismatched_basenames_exit_1(self, tmp_path, toy):
        pred = tmp_path / "pred"
        pred.mkdir()
        Image.fromarray(np.zeros((8, 8), dtype=np.uint8)).save(pred / "other.png")
        assert main(["eval", "--pred", str(pred), "--gt", str(toy / "rgb" / "gt")]) == 1

    def test_requires_one_mode(self, tmp_path):
        assert main(["eval"]) == 2


class TestPredict:
    @pytest.fixture
    def checkpoint(self, tmp_path, toy):
        cfg = _write_config(tmp_path / "run.cfg", toy, tmp_path / "run")
        assert main(["train", "--config", str(cfg)]) == 0
        return tmp_path / "run" / "final.bin"

    def test_single_image_keeps_resolution(self, tmp_path, checkpoint):
        src = tmp_path / "one.png"
        rng = np.random.default_rng(0)
        Image.fromarray(rng.integers(0, 255, (50, 70, 3), dtype=np.uint8)).save(src)
        out = tmp_path / "out"
        assert main(["predict", "--checkpoint", str(checkpoint),
                     "--input", str(src), "--out", str(out)]) == 0
        result = Image.open(out / "one.png")
        assert result.size == (70, 50) and result.mode == "L"

    def test_directory_of_images(self, tmp_path, toy, checkpoint):
        out = tmp_path / "outdir"
        assert main(["predict", "--checkpoint", str(checkpoint),
                     "--input", str(toy / "rgbd" / "images"), "--out", str(out)]) == 0
        assert len(list(out.glob("*.png"))) == 6

    def test_no_depth_files_needed(self, tmp_path, toy, checkpoint):
        # inference path must succeed with nothing but RGB files on disk
        rgb_only = tmp_path / "rgb_only"
        shutil.copytree(toy / "rgbd" / "images", rgb_only)
        out = tmp_path / "o2"
        assert main(["predict", "--checkpoint", str(checkpoint),
                     "--input", str(rgb_only), "--out", str(out)]) == 0
        assert len(list(out.glob("*.png"))) == 6

    def test_unreadable_images_warn_but_do_not_fail(self, tmp_path, toy, checkpoint):
        mixed = tmp_path / "mixed"
        shutil.copytree(toy / "rgbd" / "images", mixed)
        (mixed / "broken.png").write_bytes(b"not a png")
        out = tmp_path / "o3"
        assert main(["predict", "--checkpoint", str(checkpoint),
                     "--input", str(mixed), "--out", str(out)]) == 0
        assert len(list(out.glob("*.png"))) == 6

    def test_all_unreadable_fails(self, tmp_path, checkpoint):
        bad = tmp_path / "bad"
        bad.mkdir()
        (bad / "x.png").write_bytes(b"nope")
        assert main(["predict", "--checkpoint", str(checkpoint),
                     "--input", str(bad), "--out", str(tmp_path / "o4")]) == 1
