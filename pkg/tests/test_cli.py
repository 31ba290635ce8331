import json
import shutil

import pytest

from regdiff.cli import main


@pytest.fixture(autouse=True)
def one_thread(monkeypatch):
    monkeypatch.setenv("REGDIFF_THREADS", "1")


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    cfg = root / "gen.toml"
    cfg.write_text('[generator]\npreset = "easy"\nimage_size = [96, 96]\nmin_box_px = 12.0\n')
    assert main(["generate", "--config", str(cfg), "--count", "2", "--seed", "3", "--out", str(root / "samples")]) == 0
    return root


def test_generate_layout(dataset):
    samples = sorted(p for p in (dataset / "samples").iterdir() if p.is_dir())
    assert len(samples) == 2
    for s in samples:
        assert {p.name for p in s.iterdir()} >= {"view1.png", "view2.png", "depth1.pfm", "depth2.pfm", "cameras.json",
                                                 "correspondences.json", "gt_boxes.json", "meta.json"}
    assert json.loads((dataset / "samples" / "index.json").read_text())["samples"] == [p.name for p in samples]


def test_eval_on_ground_truth(dataset, tmp_path, capsys):
    for s in (dataset / "samples").glob("sample_*"):
        gt = json.loads((s / "gt_boxes.json").read_text())
        pred = {k: [{"bbox": b["bbox"], "score": 1.0} for b in v] for k, v in gt.items()}
        (tmp_path / s.name).mkdir()
        (tmp_path / s.name / "predictions.json").write_text(json.dumps(pred))
    assert main(["eval", "--pred", str(tmp_path), "--gt", str(dataset / "samples")]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "AP@0.5: 1.0000"
    assert json.loads((tmp_path / "eval.json").read_text())["ap"] == 1.0


def test_detect_and_eval(dataset, tmp_path, capsys):
    out = tmp_path / "pred"
    assert main(["detect", "--pair", str(dataset / "samples"), "--out", str(out)]) == 0
    names = sorted(p.name for p in (dataset / "samples").glob("sample_*"))
    for n in names:
        assert (out / n / "predictions.json").exists() and (out / n / "overlay2.png").exists()
    assert main(["eval", "--pred", str(out), "--gt", str(dataset / "samples"), "--iou", "0.5"]) == 0
    assert capsys.readouterr().out.splitlines()[-2].startswith("AP@0.5: ")


def test_detect_is_reproducible(dataset, tmp_path):
    sample = next((dataset / "samples").glob("sample_*"))
    for run in ("a", "b"):
        assert main(["detect", "--pair", str(sample), "--out", str(tmp_path / run), "--no-overlays"]) == 0
    assert (tmp_path / "a" / "predictions.json").read_bytes() == (tmp_path / "b" / "predictions.json").read_bytes()


def test_detect_explicit_files(dataset, tmp_path):
    s = next((dataset / "samples").glob("sample_*"))
    cfg = tmp_path / "est.toml"
    cfg.write_text('[strategy]\nname = "transform3d_estimated"\n')
    args = ["detect", "--config", str(cfg), "--img1", str(s / "view1.png"), "--img2", str(s / "view2.png"),
            "--depth1", str(s / "depth1.pfm"), "--depth2", str(s / "depth2.pfm"),
            "--correspondences", str(s / "correspondences.json"), "--out", str(tmp_path / "o")]
    assert main(args) == 0
    doc = json.loads((tmp_path / "o" / "predictions.json").read_text())
    assert set(doc) == {"image1", "image2"}


def test_detect_without_depth_names_input(dataset, tmp_path, capsys):
    s = next((dataset / "samples").glob("sample_*"))
    code = main(["detect", "--img1", str(s / "view1.png"), "--img2", str(s / "view2.png"),
                 "--cameras", str(s / "cameras.json"), "--out", str(tmp_path)])
    assert code == 1
    assert "--depth1" in capsys.readouterr().err


def test_registration_failure_exit_code(dataset, tmp_path):
    s = next((dataset / "samples").glob("sample_*"))
    bad = tmp_path / "pair"
    shutil.copytree(s, bad)
    (bad / "correspondences.json").write_text(json.dumps({"pairs": [[0, 0, 0, 0], [0.1, 0, 0.1, 0], [0, 0.1, 0, 0.1]]}))
    cfg = tmp_path / "est.toml"
    cfg.write_text('[strategy]\nname = "transform3d_estimated"\n')
    assert main(["detect", "--config", str(cfg), "--pair", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_warp_debug(dataset, tmp_path):
    s = next((dataset / "samples").glob("sample_*"))
    assert main(["warp-debug", "--pair", str(s), "--level", "1", "--out", str(tmp_path)]) == 0
    for name in ("level1_warped_2to1.png", "level1_mask_2to1.png", "level1_diff_1.png", "level1_mask_1to2.png"):
        assert (tmp_path / name).exists()
    assert main(["warp-debug", "--pair", str(s), "--level", "7", "--out", str(tmp_path)]) == 1


def test_usage_errors(tmp_path, capsys):
    assert main_exit(["detect", "--bogus"]) == 1
    assert main_exit(["frobnicate"]) == 1
    cfg = tmp_path / "c.toml"
    cfg.write_text('[strategy]\nname = "teleport"\n')
    assert main(["generate", "--config", str(cfg), "--count", "1", "--out", str(tmp_path)]) == 1
    cfg.write_text('[render]\nsplat_radius = -1.0\n')
    assert main(["generate", "--config", str(cfg), "--count", "1", "--out", str(tmp_path)]) == 1
    cfg.write_text('[detect]\nthreshold = 0.3\n')
    assert main(["generate", "--config", str(cfg), "--count", "1", "--out", str(tmp_path)]) == 1


def main_exit(argv):
    with pytest.raises(SystemExit) as e:
        main(argv)
    return e.value.code
