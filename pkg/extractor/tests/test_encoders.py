import numpy as np
import pytest
from PIL import Image

from latent_extract.encoders import (
    HashedNGramTextEncoder,
    ModelLoadError,
    PatchStatsVisionEncoder,
    UndecodableInput,
    load_encoder,
)


class TestHashedNGram:
    def test_deterministic_across_instances(self):
        a = HashedNGramTextEncoder(dim=128)
        b = HashedNGramTextEncoder(dim=128)
        line = "The heart appears at a normal size and shape"
        row_a = a.encode_batch([a.prepare(line)])
        row_b = b.encode_batch([b.prepare(line)])
        assert np.array_equal(row_a, row_b)

    def test_same_input_twice_identical(self):
        enc = HashedNGramTextEncoder()
        batch = [enc.prepare("cardiomegaly present"), enc.prepare("cardiomegaly present")]
        rows = enc.encode_batch(batch)
        assert np.array_equal(rows[0], rows[1])

    def test_rows_are_unit_norm_float32(self):
        enc = HashedNGramTextEncoder(dim=64)
        rows = enc.encode_batch([enc.prepare("a b c"), enc.prepare("d e")])
        assert rows.dtype == np.float32
        assert np.allclose(np.linalg.norm(rows, axis=1), 1.0, atol=1e-6)

    def test_similar_texts_closer_than_dissimilar(self):
        enc = HashedNGramTextEncoder(dim=256)
        base = enc.encode_batch([enc.prepare("severe pneumonia in the left lung")])[0]
        near = enc.encode_batch([enc.prepare("pneumonia in the left lung")])[0]
        far = enc.encode_batch([enc.prepare("completely unrelated grocery list")])[0]
        assert base @ near > base @ far

    def test_empty_line_is_undecodable(self):
        enc = HashedNGramTextEncoder()
        with pytest.raises(UndecodableInput):
            enc.prepare("   !!! ...")

    def test_case_and_punctuation_normalized(self):
        enc = HashedNGramTextEncoder()
        a = enc.encode_batch([enc.prepare("Normal Heart.")])
        b = enc.encode_batch([enc.prepare("normal heart")])
        assert np.array_equal(a, b)


class TestPatchStats:
    def _image(self, tmp_path, name, color):
        path = tmp_path / name
        Image.new("RGB", (40, 30), color).save(path)
        return path

    def test_deterministic(self, tmp_path):
        path = self._image(tmp_path, "red.png", (200, 10, 10))
        enc = PatchStatsVisionEncoder()
        rows = enc.encode_batch([enc.prepare(path), enc.prepare(path)])
        assert np.array_equal(rows[0], rows[1])
        assert rows.shape == (2, enc.dim)
        assert rows.dtype == np.float32

    def test_different_images_differ(self, tmp_path):
        enc = PatchStatsVisionEncoder()
        red = enc.prepare(self._image(tmp_path, "red.png", (200, 10, 10)))
        blue = enc.prepare(self._image(tmp_path, "blue.png", (10, 10, 200)))
        rows = enc.encode_batch([red, blue])
        assert not np.array_equal(rows[0], rows[1])

    def test_corrupt_image_is_undecodable(self, tmp_path):
        bad = tmp_path / "broken.png"
        bad.write_bytes(b"this is not a png")
        with pytest.raises(UndecodableInput):
            PatchStatsVisionEncoder().prepare(bad)


class TestRegistry:
    def test_builtin_lookup(self):
        assert load_encoder("hashed-ngram", "text").name == "hashed-ngram"
        assert load_encoder("patch-stats", "vision").name == "patch-stats"

    def test_modality_mismatch(self):
        with pytest.raises(ModelLoadError):
            load_encoder("hashed-ngram", "vision")
        with pytest.raises(ModelLoadError):
            load_encoder("patch-stats", "text")
        with pytest.raises(ModelLoadError):
            load_encoder("hashed-ngram", "audio")

    def test_unknown_model(self):
        with pytest.raises(ModelLoadError, match="unknown model"):
            load_encoder("mystery-model", "text")

    def test_hf_backend_if_obtainable(self):
        pytest.importorskip("transformers")
        try:
            encoder = load_encoder("hf:prajjwal1/bert-tiny", "text")
        except ModelLoadError as exc:
            pytest.skip(f"model not obtainable here: {exc}")
        rows = encoder.encode_batch([encoder.prepare("hello"), encoder.prepare("hello")])
        assert rows.shape[0] == 2
        assert np.array_equal(rows[0], rows[1])  # frozen, eval mode
