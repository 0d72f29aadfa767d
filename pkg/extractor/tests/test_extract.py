import json

import numpy as np
import pytest
from PIL import Image

from latent_extract.extract import (
    ExtractionError,
    ExtractionJob,
    extract,
    extract_prompt_bank,
    image_inputs,
    text_inputs,
)


@pytest.fixture
def lines_file(tmp_path):
    path = tmp_path / "reports.txt"
    path.write_text(
        "no acute cardiopulmonary abnormality\n"
        "enlarged cardiac silhouette with pulmonary edema\n"
        "right lower lobe pneumonia\n",
        encoding="utf-8",
    )
    return path


def test_three_text_lines_give_three_rows_with_line_ids(tmp_path, lines_file):
    result = extract(ExtractionJob(
        model="hashed-ngram", modality="text",
        inputs=text_inputs(lines_file), output_stem=tmp_path / "out" / "reports",
    ))
    assert result.n_rows == 3
    matrix = np.load(result.matrix_path)
    assert matrix.shape == (3, 256)
    assert result.ids_path.read_text().splitlines() == ["0", "1", "2"]


def test_output_is_npy_v1_float32_c_order(tmp_path, lines_file):
    result = extract(ExtractionJob(
        model="hashed-ngram", modality="text",
        inputs=text_inputs(lines_file), output_stem=tmp_path / "emb",
    ))
    raw = result.matrix_path.read_bytes()
    assert raw[:6] == b"\x93NUMPY"
    assert raw[6:8] == bytes([1, 0])  # format version 1.0
    header_len = int.from_bytes(raw[8:10], "little")
    header = raw[10 : 10 + header_len].decode("latin1")
    assert "'descr': '<f4'" in header
    assert "'fortran_order': False" in header
    assert "(3, 256)" in header


def test_rows_follow_input_order(tmp_path):
    inputs = [("b", "second line here"), ("a", "first line here")]
    result = extract(ExtractionJob(
        model="hashed-ngram", modality="text", inputs=inputs,
        output_stem=tmp_path / "ordered",
    ))
    assert result.ids_path.read_text().splitlines() == ["b", "a"]


def test_same_input_twice_gives_identical_rows(tmp_path):
    inputs = [("0", "stable appearance"), ("1", "stable appearance")]
    result = extract(ExtractionJob(
        model="hashed-ngram", modality="text", inputs=inputs,
        output_stem=tmp_path / "twins",
    ))
    matrix = np.load(result.matrix_path)
    assert np.array_equal(matrix[0], matrix[1])


def test_undecodable_inputs_skipped_and_recorded(tmp_path, caplog):
    inputs = [("0", "real content"), ("1", "   "), ("2", "more content")]
    result = extract(ExtractionJob(
        model="hashed-ngram", modality="text", inputs=inputs,
        output_stem=tmp_path / "gaps",
    ))
    assert result.n_rows == 2
    assert [row_id for row_id, _ in result.skipped] == ["1"]
    skip_file = tmp_path / "gaps.skipped.txt"
    assert skip_file.exists()
    assert skip_file.read_text().startswith("1\t")
    manifest = json.loads((tmp_path / "gaps.manifest.json").read_text())
    assert manifest["skipped"] == ["1"]
    assert result.ids_path.read_text().splitlines() == ["0", "2"]


def test_all_inputs_skipped_is_an_error(tmp_path):
    with pytest.raises(ExtractionError, match="skipped"):
        extract(ExtractionJob(
            model="hashed-ngram", modality="text",
            inputs=[("0", "..."), ("1", "!!")], output_stem=tmp_path / "none",
        ))


def test_manifest_records_model_and_pooling(tmp_path, lines_file):
    result = extract(ExtractionJob(
        model="hashed-ngram", modality="text",
        inputs=text_inputs(lines_file), output_stem=tmp_path / "prov",
        batch_size=2,
    ))
    manifest = json.loads(result.manifest_path.read_text())
    assert manifest["encoder"]["model"] == "hashed-ngram"
    assert manifest["encoder"]["modality"] == "text"
    assert manifest["encoder"]["pooling"] == "hashed-ngram-sum/l2"
    assert manifest["encoder"]["batch_size"] == 2
    assert manifest["space"]["rows"] == 3
    assert manifest["space"]["dim"] == 256
    assert manifest["space"]["file"] == "prov.npy"


def test_batching_does_not_change_results(tmp_path, lines_file):
    a = extract(ExtractionJob(
        model="hashed-ngram", modality="text",
        inputs=text_inputs(lines_file), output_stem=tmp_path / "b1", batch_size=1,
    ))
    b = extract(ExtractionJob(
        model="hashed-ngram", modality="text",
        inputs=text_inputs(lines_file), output_stem=tmp_path / "b3", batch_size=3,
    ))
    assert a.matrix_path.read_bytes() == b.matrix_path.read_bytes()


def test_vision_extraction_from_directory(tmp_path):
    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    Image.new("RGB", (32, 32), (250, 0, 0)).save(img_dir / "a.png")
    Image.new("RGB", (32, 32), (0, 250, 0)).save(img_dir / "b.png")
    (img_dir / "broken.png").write_bytes(b"junk")
    result = extract(ExtractionJob(
        model="patch-stats", modality="vision",
        inputs=image_inputs(img_dir), output_stem=tmp_path / "vision",
    ))
    assert result.n_rows == 2
    assert result.ids_path.read_text().splitlines() == ["a.png", "b.png"]
    assert [row_id for row_id, _ in result.skipped] == ["broken.png"]


def test_duplicate_ids_rejected(tmp_path):
    with pytest.raises(ExtractionError, match="unique"):
        ExtractionJob(
            model="hashed-ngram", modality="text",
            inputs=[("x", "a"), ("x", "b")], output_stem=tmp_path / "dup",
        )


def test_prompt_bank_extraction(tmp_path):
    pos = tmp_path / "pos.txt"
    neg = tmp_path / "neg.txt"
    pos.write_text("".join(f"finding variant number {i}\n" for i in range(10)))
    neg.write_text("".join(f"normal appearance variant {i}\n" for i in range(10)))
    bank_path = extract_prompt_bank(
        [
            {"name": "finding", "prompts": str(pos), "role": "positive"},
            {"name": "normal", "prompts": str(neg), "role": "negative"},
        ],
        model="hashed-ngram",
        output_dir=tmp_path / "bank",
    )
    doc = json.loads(bank_path.read_text())
    assert [c["name"] for c in doc["classes"]] == ["finding", "normal"]
    assert doc["classes"][0]["role"] == "positive"
    matrix = np.load(tmp_path / "bank" / "finding.npy")
    assert matrix.shape == (10, 256)


class TestExtractorCli:
    def test_usage_error_exits_1(self, capsys):
        from latent_extract.cli import main

        assert main(["extract", "--model", "hashed-ngram"]) == 1
        assert "usage" in capsys.readouterr().err
        assert main(["unknown-command"]) == 1
        assert main([]) == 1
        capsys.readouterr()

    def test_missing_input_exits_2(self, tmp_path, capsys):
        from latent_extract.cli import main

        code = main([
            "extract", "--model", "hashed-ngram", "--modality", "text",
            "--input", str(tmp_path / "nope.txt"), "--out", str(tmp_path / "o"),
        ])
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_unknown_model_exits_3(self, tmp_path, capsys):
        from latent_extract.cli import main

        lines = tmp_path / "lines.txt"
        lines.write_text("hello world\n")
        code = main([
            "extract", "--model", "not-a-model", "--modality", "text",
            "--input", str(lines), "--out", str(tmp_path / "o"),
        ])
        assert code == 3
        assert "model error" in capsys.readouterr().err

    def test_extract_cli_happy_path(self, tmp_path, capsys):
        from latent_extract.cli import main

        lines = tmp_path / "lines.txt"
        lines.write_text("first report\nsecond report\n")
        assert main([
            "extract", "--model", "hashed-ngram", "--modality", "text",
            "--input", str(lines), "--out", str(tmp_path / "emb"), "--dim", "64",
        ]) == 0
        out = capsys.readouterr().out
        assert "rows      2" in out and "dim       64" in out
        assert (tmp_path / "emb.npy").exists()

    def test_models_listing(self, capsys):
        from latent_extract.cli import main

        assert main(["models"]) == 0
        out = capsys.readouterr().out
        assert "hashed-ngram" in out and "patch-stats" in out and "hf:" in out
