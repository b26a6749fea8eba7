import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mssc.instance import Instance


@pytest.fixture
def rng():
    return np.random.default_rng(20240831)


def random_instance(rng, n, span=100.0, name="rand") -> Instance:
    return Instance(name, rng.uniform(0.0, span, size=(n, 2)))


def blob_instance(rng, n, k, spread=4.0, span=100.0, name="blobs") -> Instance:
    """Clustered synthetic points: k gaussian blobs of roughly equal size."""
    centers = rng.uniform(0.0, span, size=(k, 2))
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    pts = np.vstack([rng.normal(centers[c], spread, size=(sizes[c], 2)) for c in range(k)])
    return Instance(name, pts)


def dual_scale(points: np.ndarray) -> float:
    d = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    return float(np.median(d))
