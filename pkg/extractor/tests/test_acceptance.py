"""Secondary acceptance: extractor output round-trips through the consumer.

The consumer toolkit is exercised only through its external surfaces: the
``latent-align`` CLI for artifact validation and the documented prompt-bank
JSON + NPY formats for zero-shot banks.
"""

import json
import shutil
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from latent_extract.cli import main as extract_main
from latent_extract.extract import ExtractionJob, extract, text_inputs


def _inspect(path) -> subprocess.CompletedProcess:
    exe = shutil.which("latent-align")
    if exe is None:
        pytest.skip("latent-align CLI not installed")
    return subprocess.run(
        [exe, "inspect", str(path)], capture_output=True, text=True, timeout=120
    )


def test_extracted_embeddings_pass_consumer_inspection(tmp_path):
    lines = tmp_path / "lines.txt"
    lines.write_text("".join(f"report text variant {i}\n" for i in range(25)))
    result = extract(ExtractionJob(
        model="hashed-ngram", modality="text",
        inputs=text_inputs(lines), output_stem=tmp_path / "space",
    ))
    proc = _inspect(result.matrix_path)
    assert proc.returncode == 0, proc.stderr
    assert "embedding space" in proc.stdout
    assert "rows" in proc.stdout and "25" in proc.stdout
    print("PASS: extractor output accepted by consumer inspect")


def test_vision_extraction_passes_consumer_inspection(tmp_path):
    img_dir = tmp_path / "imgs"
    img_dir.mkdir()
    rng = np.random.default_rng(0)
    for i in range(6):
        pixels = rng.integers(0, 255, size=(24, 24, 3), dtype=np.uint8)
        Image.fromarray(pixels).save(img_dir / f"xray_{i}.png")
    assert extract_main([
        "extract", "--model", "patch-stats", "--modality", "vision",
        "--input", str(img_dir), "--out", str(tmp_path / "vision"),
    ]) == 0
    proc = _inspect(tmp_path / "vision.npy")
    assert proc.returncode == 0, proc.stderr
    print("PASS: vision extraction accepted by consumer inspect")


def test_two_class_ten_prompt_bank_loads_in_consumer(tmp_path):
    prompts_dir = tmp_path / "prompts"
    prompts_dir.mkdir()
    (prompts_dir / "pos.txt").write_text(
        "".join(f"cardiomegaly with severity level {i}\n" for i in range(10))
    )
    (prompts_dir / "neg.txt").write_text(
        "".join(f"the heart appears normal, phrasing {i}\n" for i in range(10))
    )
    (prompts_dir / "classes.json").write_text(json.dumps({
        "classes": [
            {"name": "cardiomegaly", "prompts": "pos.txt", "role": "positive"},
            {"name": "normal", "prompts": "neg.txt", "role": "negative"},
        ]
    }))
    assert extract_main([
        "bank", "--model", "hashed-ngram",
        "--prompts", str(prompts_dir / "classes.json"),
        "--out", str(tmp_path / "bank"),
    ]) == 0

    pytest.importorskip("latent_align")
    from latent_align.zeroshot import load_prompt_bank

    bank = load_prompt_bank(tmp_path / "bank" / "bank.json")
    assert bank.class_names == ["cardiomegaly", "normal"]
    assert bank.prompt_embeddings[0].shape == (10, 256)
    assert bank.positive_index() == 0
    assert np.allclose(np.linalg.norm(bank.class_embedding, axis=1), 1.0, atol=1e-9)
    print("PASS: 2-class x 10-prompt bank loads through the consumer")


def test_ids_sidecar_matches_rows(tmp_path):
    lines = tmp_path / "lines.txt"
    lines.write_text("alpha\nbeta\ngamma\ndelta\n")
    result = extract(ExtractionJob(
        model="hashed-ngram", modality="text",
        inputs=text_inputs(lines), output_stem=tmp_path / "sc",
    ))
    ids = result.ids_path.read_text().splitlines()
    matrix = np.load(result.matrix_path)
    assert len(ids) == matrix.shape[0] == 4
    assert np.all(np.isfinite(matrix))
    print("PASS: ids sidecar length equals row count, all rows finite")
