import numpy as np
import pytest

from latent_align.store import EmbeddingSpace, LabelSet


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_space(data, name="space", ids=None):
    data = np.asarray(data, dtype=np.float64)
    if ids is None:
        ids = [f"s{i}" for i in range(data.shape[0])]
    return EmbeddingSpace(name=name, data=data, sample_ids=ids)


def make_labels(labels, ids=None, n_classes=None):
    labels = np.asarray(labels, dtype=np.int64)
    if ids is None:
        ids = [f"s{i}" for i in range(len(labels))]
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    return LabelSet(
        sample_ids=list(ids),
        labels=labels,
        class_names=[f"class_{i}" for i in range(max(n_classes, 2))],
    )


def random_orthogonal(dim, rng):
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)))
    return q * np.sign(np.diag(r))
