import numpy as np
import pytest

from salrank.core import InstanceMap


def boxes(shape, *rects):
    """Instance map with label i+1 painted on rect i = (y0, y1, x0, x1)."""
    g = np.zeros(shape, dtype=np.int64)
    for i, (y0, y1, x0, x1) in enumerate(rects, start=1):
        g[y0:y1, x0:x1] = i
    return InstanceMap(g)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
