import numpy as np
import pytest


def make_texture(w: int, h: int, seed: int) -> np.ndarray:
    """Smooth-ish random texture in [0, 1] used as a stand-in natural image."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    fx, fy = rng.uniform(4, 14, size=2)
    phase = rng.uniform(0, 2 * np.pi, size=2)
    base = 0.5 + 0.25 * np.sin(xx / fx + phase[0]) * np.cos(yy / fy + phase[1])
    noise = 0.08 * rng.standard_normal((h, w))
    return np.clip(base + noise, 0.0, 1.0)


def make_rgb(w: int, h: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
