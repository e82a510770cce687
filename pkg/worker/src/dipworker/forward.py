"""Local replica of the shear-and-sum sensing model.

Each spectral band l is shifted right by l*s detector columns, masked by
the snapshot's coded aperture, and the shifted bands are summed on the
detector.  Validated against a golden measurement file generated by the
primary toolkit.
"""

import numpy as np
import torch


def measurement_shape(M: int, N: int, L: int, K: int, s: int):
    return (K, M, N + (L - 1) * s)


def apply_H(apertures: np.ndarray, x: np.ndarray, shift: int = 1) -> np.ndarray:
    """Numpy forward model: apertures (K, M, N), cube x (M, N, L)."""
    K, M, N = apertures.shape
    L = x.shape[2]
    y = np.zeros(measurement_shape(M, N, L, K, shift))
    for l in range(L):
        off = l * shift
        y[:, :, off:off + N] += apertures * x[None, :, :, l]
    return y


def apply_H_torch(apertures: torch.Tensor, x: torch.Tensor,
                  shift: int = 1) -> torch.Tensor:
    """Differentiable forward model: x is (L, M, N), returns (K, M, C)."""
    K, M, N = apertures.shape
    L = x.shape[0]
    C = N + (L - 1) * shift
    # out-of-place accumulation keeps the autograd graph simple
    terms = []
    for l in range(L):
        off = l * shift
        masked = apertures * x[l]            # (K, M, N)
        terms.append(torch.nn.functional.pad(masked, (off, C - N - off)))
    return torch.stack(terms).sum(dim=0)
