import numpy as np
import pytest
import torch

torch.set_num_threads(4)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0)


def random_mask(rng, h, w, n_blobs=3):
    """Random blob mask built from overlapping rectangles and ellipses."""
    m = np.zeros((h, w), dtype=np.uint8)
    for _ in range(n_blobs):
        if rng.random() < 0.5:
            y0, x0 = rng.integers(0, h - 4), rng.integers(0, w - 4)
            y1 = rng.integers(y0 + 1, min(h, y0 + h // 2) + 1)
            x1 = rng.integers(x0 + 1, min(w, x0 + w // 2) + 1)
            m[y0:y1, x0:x1] = 1
        else:
            cy, cx = rng.integers(0, h), rng.integers(0, w)
            ry, rx = rng.integers(2, h // 3), rng.integers(2, w // 3)
            ys, xs = np.mgrid[0:h, 0:w]
            m[((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 <= 1] = 1
    return m
