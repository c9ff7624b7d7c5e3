"""The motiondesk command line, driven in-process through ``main(argv)``."""

import csv
import json

import pytest

from motiondesk import cli
from motiondesk.pipeline import TrainingDivergence


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def dataset(tmp_path, tiny_config_file):
    root = tmp_path / "data"
    assert run("gen-data", "--config", tiny_config_file, "--out", root) == 0
    return root


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_gen_data_is_byte_identical_on_rerun(tmp_path, tiny_config_file, dataset):
    again = tmp_path / "again"
    assert run("gen-data", "--config", tiny_config_file, "--out", again) == 0
    lines = (dataset / "manifest.tsv").read_text().splitlines()
    assert len(lines) == 3 * 2 + 3 * 2 + 6
    for a in sorted(p for p in dataset.rglob("*") if p.is_file()):
        assert a.read_bytes() == (again / a.relative_to(dataset)).read_bytes(), a


def test_pipeline_end_to_end(tmp_path, tiny_config_file, dataset, capsys):
    cfg = ("--config", tiny_config_file)
    feats, run_dir = tmp_path / "feats", tmp_path / "run"
    assert run("features", *cfg, "--dataset", dataset, "--out", feats) == 0
    side = dict(line.split(" = ", 1) for line in (feats / "embeddings.txt").read_text().splitlines())
    assert side["clips"] == "6" and int(side["dim"]) == (6 - 1) * 4 * 2
    assert float(side["otsu_threshold"]) >= 0
    assert run("pseudo-label", *cfg, "--cache", feats / "embeddings.mdemb", "--out", feats) == 0
    assert len((feats / "pseudo_labels.tsv").read_text().splitlines()) == 6

    args = (*cfg, "--dataset", dataset, "--labels", feats / "pseudo_labels.tsv", "--out", run_dir)
    assert run("train", *args, "--variant", "full", "--seed", "1") == 0
    metrics = _rows(run_dir / "metrics.csv")
    assert list(metrics[0]) == ["variant", "seed", "step", "iteration", "loss"]
    assert {r["step"] for r in metrics} == {"1", "2", "3", "4", "5"} and {r["seed"] for r in metrics} == {"1"}
    assert (run_dir / "loss.svg").read_text().startswith("<svg")
    manifest = json.loads((run_dir / "run_manifest.json").read_text())
    assert manifest["seeds"] == [1] and "checkpoint" in manifest["artifacts"]

    ck = run_dir / "model.mdckpt"
    assert run("eval", *cfg, "--variant", "full", "--dataset", dataset, "--checkpoint", ck, "--out", run_dir) == 0
    results = _rows(run_dir / "results.csv")
    assert [r["mode"] for r in results] == ["fused", "visual_only"]
    assert all(0 <= float(r["accuracy"]) <= 1 for r in results)

    assert run("retrieve", *cfg, "--dataset", dataset, "--checkpoint", ck, "--out", run_dir) == 0
    report = [l.split("\t") for l in (run_dir / "retrieve.tsv").read_text().splitlines()]
    assert len(report) == 6 and report[0][0] == "images/00006.pgm"
    assert all(0 <= int(c) < 6 and float(d) >= 0 for _, c, d in report)
    q = dataset / "images" / "00000.pgm"
    assert run("retrieve", *cfg, "--dataset", dataset, "--checkpoint", ck, "--out", run_dir, "--images", q) == 0
    assert len((run_dir / "retrieve.tsv").read_text().splitlines()) == 1


def test_ablate_grid_and_threads(tmp_path, tiny_config_file, dataset, monkeypatch):
    outs = []
    for threads in ("1", "2"):
        monkeypatch.setenv("MD_THREADS", threads)
        out = tmp_path / f"ab{threads}"
        assert run("ablate", "--config", tiny_config_file, "--dataset", dataset, "--out", out) == 0
        outs.append(out)
    rows = _rows(outs[0] / "results.csv")
    assert {(r["variant"], r["seed"]) for r in rows} == {(v, s) for v in ("unreg", "unreg+motion", "no_mra", "full", "only_mr") for s in ("0", "1")}
    assert sum(r["mode"] == "fused" for r in rows) == 10
    assert {r["variant"] for r in rows if r["mode"] == "motion_only"} == {"only_mr"}
    assert (outs[0] / "checkpoints" / "only_mr" / "seed1.mdckpt").exists()
    for name in ("results.csv", "metrics.csv", "checkpoints/full/seed0.mdckpt", "embeddings.mdemb"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_ablate_subset_flags(tmp_path, tiny_config_file, dataset):
    out = tmp_path / "sub"
    assert run("ablate", "--config", tiny_config_file, "--dataset", dataset, "--out", out, "--variants", "unreg", "--seeds", "3") == 0
    assert {(r["variant"], r["seed"]) for r in _rows(out / "results.csv")} == {("unreg", "3")}


def test_usage_errors_exit_2(tmp_path, tiny_config_file, dataset, monkeypatch, capsys):
    assert run("features", "--dataset", tmp_path / "nowhere", "--out", tmp_path / "x") == 2
    assert run("eval", "--config", tiny_config_file, "--dataset", dataset, "--checkpoint", tmp_path / "none.mdckpt") == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("n_classes = 3\nlearnign_rate = 0.1\n")
    assert run("gen-data", "--config", bad, "--out", tmp_path / "y") == 2
    assert "learnign_rate" in capsys.readouterr().err
    assert run("gen-data", "--config", tmp_path / "missing.cfg") == 2
    assert run("train") == 2
    assert run("frobnicate") == 2
    assert run("train", "--dataset", dataset, "--variant", "best") == 2
    monkeypatch.setenv("MD_THREADS", "zero")
    assert run("ablate", "--config", tiny_config_file, "--dataset", dataset, "--out", tmp_path / "z") == 2


def test_non_finite_loss_exits_3(tmp_path, tiny_config_file, dataset, monkeypatch, capsys):
    def diverge(cfg, data, seed, variants):
        raise TrainingDivergence(2, 7, float("nan"))

    monkeypatch.setattr(cli, "train_family", diverge)
    assert run("train", "--config", tiny_config_file, "--dataset", dataset, "--out", tmp_path / "t") == 3
    assert "step 2" in capsys.readouterr().err
