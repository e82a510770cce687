import numpy as np
import pytest

from cassikit import forward_model as fm
from cassikit.tensor_io import generate_aperture


def vec(cube):
    """Flatten in the documented band-major order."""
    return np.transpose(cube, (2, 0, 1)).ravel()


def unvec(v, M, N, L):
    return np.transpose(v.reshape(L, M, N), (1, 2, 0))


def random_operator(M, N, L, K=1, s=1, seed=0):
    masks = np.stack([generate_aperture(M, N, 0.5, seed=seed + k)
                      for k in range(K)])
    return fm.SensingOperator(masks, shift=s, bands=L)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
