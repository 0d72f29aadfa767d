import csv
import json
from pathlib import Path

import numpy as np
import pytest

from latent_align.cli import main
from latent_align.store import load_space, write_matrix


@pytest.fixture
def dataset(tmp_path):
    out = tmp_path / "data"
    code = main([
        "gen-synthetic", "--out", str(out),
        "--n-samples", "800", "--source-dim", "12", "--target-dim", "12",
        "--classes", "2", "--separation", "3.0", "--noise-sigma", "0.05",
        "--seed", "100",
    ])
    assert code == 0
    return out


def _fit(dataset, out, kind="ortho", seed="0", count="64"):
    return main([
        "fit",
        "--source", str(dataset / "source.npy"),
        "--target", str(dataset / "target.npy"),
        "--kind", kind,
        "--anchor-count", count,
        "--correspondence", str(dataset / "anchors_pool.csv"),
        "--seed", seed,
        "--out", str(out),
    ])


def test_gen_synthetic_writes_expected_files(dataset):
    for name in (
        "source.npy", "source.ids.txt", "target.npy", "target.ids.txt",
        "labels.csv", "labels.classes.json", "correspondence.csv",
        "anchors_pool.csv", "train_ids.txt", "test_ids.txt", "manifest.json",
    ):
        assert (dataset / name).exists(), name
    space = load_space(dataset / "source.npy")
    assert space.n_samples == 800 and space.dim == 12


def test_fit_translate_inspect_flow(dataset, tmp_path, capsys):
    transform_dir = tmp_path / "transform"
    assert _fit(dataset, transform_dir) == 0
    out = capsys.readouterr().out
    assert "ortho" in out and "objective" in out

    assert main(["inspect", str(transform_dir)]) == 0
    out = capsys.readouterr().out
    assert "alignment transform" in out

    translated = tmp_path / "translated.npy"
    assert main([
        "translate", "--transform", str(transform_dir),
        "--input", str(dataset / "source.npy"), "--out", str(translated),
    ]) == 0
    capsys.readouterr()
    moved = load_space(translated)
    original = load_space(dataset / "source.npy")
    assert moved.data.shape == original.data.shape
    assert moved.sample_ids == original.sample_ids


def test_fit_naive_inspect_reports_identity(dataset, tmp_path, capsys):
    transform_dir = tmp_path / "naive"
    assert _fit(dataset, transform_dir, kind="naive") == 0
    capsys.readouterr()
    assert main(["inspect", str(transform_dir)]) == 0
    out = capsys.readouterr().out
    fields = {line.rsplit(None, 1)[0].strip(): line.rsplit(None, 1)[1]
              for line in out.strip().splitlines()}
    assert fields["max |R - I|"] == "0.000e+00"
    assert fields["max |b|"] == "0.000e+00"


def test_probe_and_stitch_eval_flow(dataset, tmp_path, capsys):
    probe_dir = tmp_path / "probe"
    assert main([
        "train-probe", "--space", str(dataset / "target.npy"),
        "--labels", str(dataset / "labels.csv"),
        "--train-ids", str(dataset / "train_ids.txt"),
        "--max-epochs", "80", "--seed", "0", "--out", str(probe_dir),
    ]) == 0
    transform_dir = tmp_path / "transform"
    assert _fit(dataset, transform_dir) == 0
    capsys.readouterr()
    report_json = tmp_path / "report.json"
    assert main([
        "stitch-eval", "--source", str(dataset / "source.npy"),
        "--transform", str(transform_dir), "--probe", str(probe_dir),
        "--labels", str(dataset / "labels.csv"),
        "--test-ids", str(dataset / "test_ids.txt"),
        "--out", str(report_json),
    ]) == 0
    out = capsys.readouterr().out
    doc = json.loads(report_json.read_text())
    assert 0.5 < doc["auroc"] <= 1.0
    assert str(doc["auroc"]) in out


def test_stitch_eval_matches_sweep_report_exactly(dataset, tmp_path, capsys):
    """fit + stitch-eval must reproduce the matching sweep cell bit-for-bit."""
    config = {
        "mode": "anchor-sweep",
        "kinds": ["ortho"],
        "anchor_counts": [64],
        "seeds": [0],
        "train_fraction": 0.8,
        "synthetic": {
            "n_samples": 800, "source_dim": 12, "target_dim": 12,
            "n_classes": 2, "separation": 3.0, "map_kind": "orthogonal",
            "noise_sigma": 0.05, "seed": 100,
        },
        "probe": {"c_reg": 1.0, "max_epochs": 80, "seed": 0, "batch_size": 256},
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))
    sweep_dir = tmp_path / "sweep"
    assert main(["sweep", "--config", str(config_path), "--out", str(sweep_dir)]) == 0

    probe_dir = tmp_path / "probe"
    assert main([
        "train-probe", "--space", str(dataset / "target.npy"),
        "--labels", str(dataset / "labels.csv"),
        "--train-ids", str(dataset / "train_ids.txt"),
        "--max-epochs", "80", "--seed", "0", "--out", str(probe_dir),
    ]) == 0
    transform_dir = tmp_path / "transform"
    assert _fit(dataset, transform_dir, kind="ortho", seed="0", count="64") == 0
    report_json = tmp_path / "stitch.json"
    assert main([
        "stitch-eval", "--source", str(dataset / "source.npy"),
        "--transform", str(transform_dir), "--probe", str(probe_dir),
        "--labels", str(dataset / "labels.csv"),
        "--test-ids", str(dataset / "test_ids.txt"),
        "--out", str(report_json),
    ]) == 0
    stitch_stdout = capsys.readouterr().out

    stitch_auroc = json.loads(report_json.read_text())["auroc"]
    assert str(stitch_auroc) in stitch_stdout
    with open(sweep_dir / "report.csv", newline="") as fh:
        rows = [
            row for row in csv.DictReader(fh)
            if row["kind"] == "ortho" and row["anchor_count"] == "64" and row["seed"] == "0"
        ]
    assert len(rows) == 1
    assert rows[0]["auroc"] == str(stitch_auroc)


def test_zero_shot_command(tmp_path, capsys, rng):
    d = 16
    centers = rng.normal(size=(2, d))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers *= 3.0
    labels_arr = np.repeat([0, 1], 100)
    text = centers[labels_arr] + rng.normal(size=(200, d))
    images_dir = tmp_path / "zs"
    images_dir.mkdir()
    write_matrix(images_dir / "images.npy", text)  # shared space: multimodal works
    write_matrix(images_dir / "pos.npy", centers[1] + 0.3 * rng.normal(size=(10, d)))
    write_matrix(images_dir / "neg.npy", centers[0] + 0.3 * rng.normal(size=(10, d)))
    (images_dir / "bank.json").write_text(json.dumps({
        "classes": [
            {"name": "class_0", "file": "neg.npy", "role": "negative"},
            {"name": "class_1", "file": "pos.npy", "role": "positive"},
        ]
    }))
    (images_dir / "labels.csv").write_text(
        "sample_id,label\n" + "".join(f"row_{i},{l}\n" for i, l in enumerate(labels_arr))
    )
    out_json = images_dir / "zs.json"
    assert main([
        "zero-shot", "--images", str(images_dir / "images.npy"),
        "--bank", str(images_dir / "bank.json"), "--multimodal",
        "--labels", str(images_dir / "labels.csv"), "--out", str(out_json),
    ]) == 0
    captured = capsys.readouterr().out
    doc = json.loads(out_json.read_text())
    assert doc["auroc"] > 0.8
    assert "multimodal" in captured


class TestExitCodes:
    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_required_flag_is_usage_error(self, capsys):
        assert main(["fit", "--kind", "ortho"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_no_command_prints_help(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err

    def test_anchor_count_without_seed_is_usage_error(self, dataset, tmp_path, capsys):
        code = main([
            "fit", "--source", str(dataset / "source.npy"),
            "--target", str(dataset / "target.npy"),
            "--kind", "ortho", "--anchor-count", "16",
            "--out", str(tmp_path / "t"),
        ])
        assert code == 1
        assert "--seed" in capsys.readouterr().err

    def test_data_error_exits_2(self, tmp_path, capsys):
        missing = tmp_path / "nope.npy"
        write_matrix(tmp_path / "x.npy", np.ones((4, 2)))
        code = main(["inspect", str(tmp_path / "x.ids.txt")])
        assert code == 2
        (tmp_path / "bad.npy").write_bytes(b"garbage")
        assert main(["inspect", str(tmp_path / "bad.npy")]) == 2
        capsys.readouterr()

    def test_invalid_kind_is_usage_error(self, dataset, tmp_path):
        code = main([
            "fit", "--source", str(dataset / "source.npy"),
            "--target", str(dataset / "target.npy"),
            "--kind", "mystery", "--anchor-count", "8", "--seed", "0",
            "--out", str(tmp_path / "t"),
        ])
        assert code == 1

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        capsys.readouterr()


class TestDeterminism:
    def _tree_bytes(self, root: Path) -> dict:
        return {
            str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()
        }

    def test_gen_synthetic_byte_identical(self, tmp_path, capsys):
        args = [
            "gen-synthetic", "--n-samples", "300", "--source-dim", "8",
            "--target-dim", "8", "--seed", "7",
        ]
        main(args + ["--out", str(tmp_path / "a")])
        main(args + ["--out", str(tmp_path / "b")])
        capsys.readouterr()
        assert self._tree_bytes(tmp_path / "a") == self._tree_bytes(tmp_path / "b")

    def test_fit_and_probe_byte_identical(self, dataset, tmp_path, capsys):
        for run in ("a", "b"):
            _fit(dataset, tmp_path / f"t_{run}")
            main([
                "train-probe", "--space", str(dataset / "target.npy"),
                "--labels", str(dataset / "labels.csv"),
                "--train-ids", str(dataset / "train_ids.txt"),
                "--max-epochs", "40", "--seed", "3",
                "--out", str(tmp_path / f"p_{run}"),
            ])
        capsys.readouterr()
        assert self._tree_bytes(tmp_path / "t_a") == self._tree_bytes(tmp_path / "t_b")
        assert self._tree_bytes(tmp_path / "p_a") == self._tree_bytes(tmp_path / "p_b")

    def test_sweep_byte_identical_with_plot(self, tmp_path, capsys):
        config = {
            "mode": "anchor-sweep",
            "kinds": ["ortho", "naive"],
            "anchor_counts": [8, 32],
            "seeds": [0, 1],
            "synthetic": {
                "n_samples": 400, "source_dim": 8, "target_dim": 8,
                "n_classes": 2, "separation": 3.0, "map_kind": "orthogonal",
                "noise_sigma": 0.05, "seed": 5,
            },
            "probe": {"max_epochs": 40, "seed": 0},
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        for run in ("a", "b"):
            assert main([
                "sweep", "--config", str(config_path),
                "--out", str(tmp_path / run), "--jobs", "3", "--plot",
            ]) == 0
        capsys.readouterr()
        trees = self._tree_bytes(tmp_path / "a"), self._tree_bytes(tmp_path / "b")
        assert set(trees[0]) == {"report.csv", "report.json", "anchor_sweep.svg"}
        assert trees[0] == trees[1]
