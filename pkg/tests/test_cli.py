import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from conftest import natural_image
from oracles import pairwise_auc
from patchensemble.aggregation import classify
from patchensemble.cli import main
from patchensemble.cli.io import parse_ensemble_config, read_image
from patchensemble.errors import ConfigError
from patchensemble.patching import SamplingMode


def save(path, arr, mode=None):
    img = Image.fromarray(arr)
    if mode:
        img = img.convert(mode)
    img.save(path)
    return str(path)


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def read_jsonl(path):
    return [json.loads(line) for line in open(path)]


@pytest.fixture
def image_dir(tmp_path):
    d = tmp_path / "imgs"
    d.mkdir()
    for i in range(3):
        save(d / f"img{i}.png", natural_image(160, 176, seed=i))
    return d


@pytest.fixture
def constant_config(tmp_path):
    return write_json(tmp_path / "const.json", {"scorers": [
        {"id": "c", "analytic": {"kind": "constant", "value": -1.0}}]})


def test_detect_directory(image_dir, constant_config, tmp_path):
    out = tmp_path / "v.jsonl"
    assert main(["detect", str(image_dir), "--config", constant_config, "-o", str(out)]) == 0
    records = read_jsonl(out)
    assert len(records) == 3
    assert [r["image"] for r in records] == sorted(r["image"] for r in records)
    for r in records:
        assert r["label"] == "real" and r["fused_score"] == -1.0
        assert r["per_scorer"] == [{"id": "c", "score": -1.0, "policy": "proposed"}]


def test_detect_small_image_recorded(image_dir, constant_config, tmp_path):
    save(image_dir / "tiny.png", natural_image(64, 64))
    out = tmp_path / "v.jsonl"
    assert main(["detect", str(image_dir), "--config", constant_config, "-o", str(out)]) == 2
    records = read_jsonl(out)
    assert len(records) == 4
    bad = [r for r in records if "error" in r]
    assert len(bad) == 1 and "ImageTooSmall" in bad[0]["error"]
    assert sum("fused_score" in r for r in records) == 3


def test_detect_corrupt_image(image_dir, constant_config, tmp_path):
    (image_dir / "broken.jpg").write_bytes(b"\xff\xd8garbage")
    out = tmp_path / "v.jsonl"
    assert main(["detect", str(image_dir), "--config", constant_config, "-o", str(out)]) == 2
    assert any("InvalidImage" in r.get("error", "") for r in read_jsonl(out))


def test_detect_config_errors(image_dir, tmp_path, monkeypatch):
    monkeypatch.delenv("PATCHENSEMBLE_MODEL_DIR", raising=False)
    assert main(["detect", str(image_dir)]) == 1
    assert main(["detect", str(image_dir), "--config", str(tmp_path / "missing.json")]) == 1
    bad = write_json(tmp_path / "bad.json", {"scorers": []})
    assert main(["detect", str(image_dir), "--config", bad]) == 1
    bad = write_json(tmp_path / "bad2.json", {"scorers": [{"analytic": {"kind": "oracle"}}]})
    assert main(["detect", str(image_dir), "--config", bad]) == 1


def test_detect_default_models_dir(image_dir, monkeypatch, tmp_path):
    monkeypatch.setenv("PATCHENSEMBLE_MODEL_DIR", str(tmp_path / "nomodels"))
    assert main(["detect", str(image_dir)]) == 1


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        main(["detect"])
    assert info.value.code == 1


def test_single_patch_degeneracy(tmp_path):
    img = natural_image(128, 128, seed=3)
    path = save(tmp_path / "one.png", img)
    cfg = write_json(tmp_path / "c.json", {"scorers": [
        {"id": "l", "analytic": {"kind": "luma_threshold", "pivot": 0.4, "gain": 2.0},
         "sampling": {"mode": "grid_aligned", "count": 1}}]})
    out = tmp_path / "v.jsonl"
    assert main(["detect", path, "--config", cfg, "-o", str(out)]) == 0
    (rec,) = read_jsonl(out)
    from patchensemble.scoring import LumaThresholdScorer

    score = LumaThresholdScorer(0.4, 2.0).score_batch([img])[0]
    assert rec["fused_score"] == score
    assert rec["label"] == classify(score).value


def test_grayscale_and_alpha_converted(tmp_path):
    gray = save(tmp_path / "g.png", natural_image(130, 130), mode="L")
    rgba = save(tmp_path / "a.png", natural_image(130, 130), mode="RGBA")
    assert read_image(gray).shape == (130, 130, 3)
    assert read_image(rgba).shape == (130, 130, 3)


def test_patches_per_scorer_flag():
    decls, size, _ = parse_ensemble_config(
        {"scorers": [{"analytic": {"kind": "constant"}}, {"analytic": {"kind": "constant"}}]},
        aligned_count=50)
    assert decls[0].sampling.mode is SamplingMode.RANDOM and decls[0].sampling.count == 200
    assert decls[1].sampling.mode is SamplingMode.GRID_ALIGNED and decls[1].sampling.count == 50
    assert size == 128


def test_config_rejects_mixed_sizes():
    with pytest.raises(ConfigError):
        parse_ensemble_config({"patch_size": 64, "scorers": [
            {"analytic": {"kind": "constant"}, "sampling": {"mode": "random", "size": 128}}]})
    with pytest.raises(ConfigError):
        parse_ensemble_config({"scorers": [{"analytic": {"kind": "constant"}, "backend": "x.onnx"}]})
    with pytest.raises(ConfigError):
        parse_ensemble_config({"fusion": "max", "scorers": [{"analytic": {"kind": "constant"}}]})


def test_detect_with_onnx_backend(image_dir, tmp_path):
    pytest.importorskip("onnx")
    pytest.importorskip("onnxruntime")
    from test_backend_onnx import constant_model

    model = constant_model(tmp_path / "m.onnx", value=0.25, size=128)
    cfg = write_json(tmp_path / "cfg.json", {"scorers": [
        {"id": "net", "backend": {"model_path": "m.onnx"}, "sampling": {"mode": "grid_aligned", "count": 4}},
        {"id": "c", "analytic": {"kind": "constant", "value": -0.75}}]})
    assert model
    out = tmp_path / "v.jsonl"
    assert main(["detect", str(image_dir), "--config", cfg, "-o", str(out)]) == 0
    for rec in read_jsonl(out):
        assert rec["per_scorer"][0]["score"] == pytest.approx(0.25, abs=1e-7)
        assert rec["fused_score"] == pytest.approx(-0.25, abs=1e-7)
        assert rec["label"] == "real"


# -- evaluate ----------------------------------------------------------------


def test_evaluate_perfect(tmp_path):
    rows = [{"image": f"r{i}", "score": -1.0 - i, "truth": "real"} for i in range(3)]
    rows += [{"image": f"s{i}", "score": 1.0 + i, "truth": "synthetic"} for i in range(3)]
    p = tmp_path / "s.jsonl"
    p.write_text("".join(json.dumps(r) + "\n" for r in rows))
    out = tmp_path / "m.json"
    assert main(["evaluate", str(p), "-o", str(out)]) == 0
    m = json.loads(out.read_text())
    assert m["global"]["auc"] == 1.0
    assert m["global"]["confusion"]["tpr"] == 1.0 and m["global"]["confusion"]["fpr"] == 0.0
    assert "groups" not in m


def test_evaluate_groups_and_single_class(tmp_path):
    rows = [{"image": "a", "score": -1, "truth": "real", "group": "ffhq"},
            {"image": "b", "score": 1, "truth": "synthetic", "group": "ffhq"},
            {"image": "c", "score": 0.5, "truth": "synthetic", "group": "afhq2"},
            {"image": "d", "score": -0.5, "truth": "real", "group": "afhq2"},
            {"image": "e", "score": 2, "truth": "synthetic", "group": "metfaces"}]
    p = tmp_path / "s.jsonl"
    p.write_text("".join(json.dumps(r) + "\n" for r in rows))
    out = tmp_path / "m.json"
    assert main(["evaluate", str(p), "-o", str(out)]) == 0
    m = json.loads(out.read_text())
    assert set(m["groups"]) == {"ffhq", "afhq2", "metfaces"}
    assert m["groups"]["ffhq"]["auc"] == 1.0
    assert "SingleClass" in m["groups"]["metfaces"]["error"]
    assert "auc" in m["global"]


def test_evaluate_random_csv_matches_oracle(tmp_path, rng):
    n = 200
    scores = np.round(rng.normal(0, 1, n), 2)
    truth = rng.random(n) < 0.5
    p = tmp_path / "s.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "score", "truth"])
        for i, (s, t) in enumerate(zip(scores, truth)):
            w.writerow([i, repr(float(s)), "synthetic" if t else "real"])
    out = tmp_path / "m.json"
    roc = tmp_path / "roc.csv"
    hist = tmp_path / "hist.csv"
    assert main(["evaluate", str(p), "-o", str(out), "--roc-csv", str(roc),
                 "--hist-csv", str(hist), "--bins", "7"]) == 0
    m = json.loads(out.read_text())
    assert abs(m["global"]["auc"] - pairwise_auc(scores.tolist(), truth.tolist())) <= 1e-12
    assert roc.read_text().startswith("threshold,fpr,tpr\n")
    assert len(hist.read_text().splitlines()) == 8


def test_evaluate_detect_output_with_labels_file(image_dir, constant_config, tmp_path):
    det = tmp_path / "v.jsonl"
    assert main(["detect", str(image_dir), "--config", constant_config, "-o", str(det)]) == 0
    recs = read_jsonl(det)
    labels = tmp_path / "labels.jsonl"
    labels.write_text("".join(json.dumps({"image": r["image"], "label": lab, "group": "g"}) + "\n"
                              for r, lab in zip(recs, ["real", "synthetic", "real"])))
    out = tmp_path / "m.json"
    assert main(["evaluate", str(det), "--labels", str(labels), "-o", str(out)]) == 0
    m = json.loads(out.read_text())
    assert m["global"]["auc"] == 0.5 and set(m["groups"]) == {"g"}


def test_evaluate_nothing_usable(tmp_path):
    p = tmp_path / "s.jsonl"
    p.write_text(json.dumps({"image": "a", "score": 1.0}) + "\n")
    assert main(["evaluate", str(p)]) == 1


# -- build-dataset -------------------------------------------------------------


@pytest.fixture
def manifest(tmp_path):
    d = tmp_path / "src"
    d.mkdir()
    rows = []
    for i, (cat, label, gen) in enumerate([("ffhq", "real", "none"), ("metfaces", "synthetic", "stylegan2"),
                                           ("afhq2", "real", "none"), ("afhq2", "synthetic", "stargan-v2")]):
        save(d / f"{i}.png", natural_image(168, 184, seed=i))
        rows.append({"path": f"src/{i}.png", "label": label, "generator": gen, "category": cat})
    p = tmp_path / "manifest.jsonl"
    p.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return str(p)


def test_build_dataset_d2(manifest, tmp_path):
    out = tmp_path / "ds"
    assert main(["build-dataset", "--recipe", "D2", "--manifest", manifest, "--seed", "4",
                 "--output", str(out), "--write-patches"]) == 0
    rows = read_jsonl(out / "dataset.jsonl")
    assert len(rows) == 4
    assert all(r["region"]["x"] % 8 == 0 and r["region"]["y"] % 8 == 0 for r in rows)
    for r in rows:
        assert Image.open(out / r["patch_file"]).size == (128, 128)
    meta = json.loads((out / "training_config.json").read_text())
    assert meta["recipe"] == "D2" and meta["max_epochs"] == 500


def test_build_dataset_reproducible(manifest, tmp_path):
    for name in ("a", "b"):
        assert main(["build-dataset", "--recipe", "D4", "--manifest", manifest, "--seed", "9",
                     "--output", str(tmp_path / name), "--workers", "3" if name == "b" else "1"]) == 0
    a = (tmp_path / "a" / "dataset.jsonl").read_bytes()
    assert a == (tmp_path / "b" / "dataset.jsonl").read_bytes()
    assert len(a.splitlines()) == 30


def test_build_dataset_errors(manifest, tmp_path, capsys):
    assert main(["build-dataset", "--recipe", "D6", "--manifest", manifest, "--output", str(tmp_path / "x")]) == 1
    assert "UnknownRecipe" in capsys.readouterr().err
    ffhq_only = tmp_path / "ffhq.jsonl"
    ffhq_only.write_text(open(manifest).readline())
    assert main(["build-dataset", "--recipe", "D3", "--manifest", str(ffhq_only),
                 "--output", str(tmp_path / "y")]) == 1
    missing = tmp_path / "missing.jsonl"
    missing.write_text(json.dumps({"path": "nope.png", "label": "real", "category": "ffhq"}) + "\n")
    assert main(["build-dataset", "--recipe", "D5", "--manifest", str(missing),
                 "--output", str(tmp_path / "z")]) == 2


def test_build_dataset_recipe_file(manifest, tmp_path):
    from patchensemble.recipes import builtin_recipe

    d = builtin_recipe("D3").to_dict()
    d.update(id="custom", patches_per_image=2)
    rp = write_json(tmp_path / "r.json", d)
    out = tmp_path / "ds"
    assert main(["build-dataset", "--recipe", rp, "--manifest", manifest, "--output", str(out)]) == 0
    assert len(read_jsonl(out / "dataset.jsonl")) == 4


# -- simulate --------------------------------------------------------------


def test_simulate_three_policies(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["simulate", "--policies", "proposed,mean,median", "--output", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert [r["policy"] for r in rows] == ["proposed", "mean", "median"]
    assert max(rows, key=lambda r: float(r["auc"]))["policy"] == "proposed"


def test_simulate_k_sweep_json(tmp_path):
    spec = write_json(tmp_path / "spec.json", {"fraction": 0.1, "images_per_class": 300})
    out = tmp_path / "t.json"
    assert main(["simulate", "--spec", spec, "--policies", "k1,k5,k10,k25", "--seed", "5",
                 "--output", str(out)]) == 0
    rows = json.loads(out.read_text())["rows"]
    fprs = [r["fpr"] for r in rows]
    assert fprs == sorted(fprs, reverse=True)


def test_simulate_bad_spec(tmp_path):
    spec = write_json(tmp_path / "spec.json", {"sigma": -1})
    assert main(["simulate", "--spec", spec]) == 1
    assert main(["simulate", "--policies", "max"]) == 1


def test_simulate_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["simulate", "--seed", "3", "-o", str(a)])
    main(["simulate", "--seed", "3", "-o", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "patchensemble", "simulate", "--policies", "mean",
                          "--format", "csv"], capture_output=True, text=True, check=True)
    assert res.stdout.startswith("policy,auc,tpr,fpr\nmean,")
