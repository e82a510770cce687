"""Matrix-free CASSI sensing operator.

Geometry: band l of the cube is modulated by the snapshot's coded aperture
at its unshifted location, then sheared horizontally by l*s detector columns
before spectral integration.  Measurements have shape (K, M, N+(L-1)*s).

Vectorization order (used only by the explicit-matrix path and file dumps)
is band-major, then row-major within a band: voxel (i, j, l) sits at flat
index l*M*N + i*N + j, detector pixel (k, i, j) at k*M*C + i*C + j.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError, ShapeError, SizeError
from .tensor_io import HyperCube

EXPLICIT_CAP = 100_000  # max M*N*L for the testing-only explicit matrix


def _cube_array(x) -> np.ndarray:
    if isinstance(x, HyperCube):
        x = x.data
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class SensingOperator:
    """Coded apertures + dispersion geometry; applies H, H^T, Diag(HH^T)."""

    apertures: np.ndarray          # (K, M, N), entries in [0, 1]
    shift: int = 1                 # detector columns per band step
    dispersion: str = "right"      # "right": band l shifted by l*s; "left" flips
    bands: int = field(default=1)  # L

    def __post_init__(self):
        ap = np.asarray(self.apertures, dtype=np.float64)
        if ap.ndim == 2:
            ap = ap[None, :, :]
        if ap.ndim != 3:
            raise ShapeError(f"apertures must be (K, M, N), got {ap.shape}")
        if ap.min() < 0 or ap.max() > 1:
            raise ParameterError("aperture entries must lie in [0, 1]")
        if self.shift < 1:
            raise ParameterError(f"shift must be >= 1, got {self.shift}")
        if self.bands < 1:
            raise ParameterError(f"bands must be >= 1, got {self.bands}")
        if self.dispersion not in ("right", "left"):
            raise ParameterError(f"dispersion must be right/left, got {self.dispersion}")
        object.__setattr__(self, "apertures", ap)

    @property
    def snapshots(self) -> int:
        return self.apertures.shape[0]

    @property
    def rows(self) -> int:
        return self.apertures.shape[1]

    @property
    def cols(self) -> int:
        return self.apertures.shape[2]

    @property
    def det_cols(self) -> int:
        return self.cols + (self.bands - 1) * self.shift

    @property
    def cube_shape(self):
        return (self.rows, self.cols, self.bands)

    @property
    def meas_shape(self):
        return (self.snapshots, self.rows, self.det_cols)

    def band_offset(self, l: int) -> int:
        if self.dispersion == "right":
            return l * self.shift
        return (self.bands - 1 - l) * self.shift


def apply_H(op: SensingOperator, x: np.ndarray) -> np.ndarray:
    """Noiseless measurement: shear each coded band right and integrate."""
    x = _cube_array(x)
    if x.shape != op.cube_shape:
        raise ShapeError(f"cube shape {x.shape} != operator {op.cube_shape}")
    y = np.zeros(op.meas_shape)
    coded = op.apertures[:, None, :, :] * np.moveaxis(x, 2, 0)[None]  # (K,L,M,N)
    for l in range(op.bands):
        o = op.band_offset(l)
        y[:, :, o:o + op.cols] += coded[:, l]
    return y


def apply_Ht(op: SensingOperator, y: np.ndarray) -> np.ndarray:
    """Adjoint of apply_H; returns a cube-shaped array."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != op.meas_shape:
        raise ShapeError(f"measurement shape {y.shape} != operator {op.meas_shape}")
    xt = np.empty(op.cube_shape)
    for l in range(op.bands):
        o = op.band_offset(l)
        xt[:, :, l] = np.einsum("kmn,kmn->mn", op.apertures, y[:, :, o:o + op.cols])
    return xt


def diag_HHt(op: SensingOperator) -> np.ndarray:
    """Diagonal of H H^T as a measurement-shaped array."""
    d = np.zeros(op.meas_shape)
    sq = op.apertures ** 2
    for l in range(op.bands):
        o = op.band_offset(l)
        d[:, :, o:o + op.cols] += sq
    return d


def build_explicit_H(op: SensingOperator, cap: int = EXPLICIT_CAP) -> sp.csr_matrix:
    """Explicit sparse H (testing-only); action equals apply_H under the
    documented vectorization order."""
    M, N, L = op.cube_shape
    if M * N * L > cap:
        raise SizeError(f"explicit H capped at {cap} voxels, got {M * N * L}")
    K, C = op.snapshots, op.det_cols
    kk, ii, jj, ll = np.meshgrid(np.arange(K), np.arange(M), np.arange(N),
                                 np.arange(L), indexing="ij")
    offsets = np.array([op.band_offset(l) for l in range(L)])
    cols = ll * M * N + ii * N + jj
    rows = kk * M * C + ii * C + (jj + offsets[ll])
    vals = op.apertures[kk, ii, jj]
    H = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                      shape=(K * M * C, M * N * L))
    return H.tocsr()


def export_explicit_H_csv(op: SensingOperator, path, cap: int = EXPLICIT_CAP) -> None:
    """Dump the explicit matrix as `row,col,value` triplets."""
    H = build_explicit_H(op, cap=cap).tocoo()
    with open(path, "w", newline="\n") as fh:
        fh.write("row,col,value\n")
        for r, c, v in zip(H.row, H.col, H.data):
            fh.write(f"{r},{c},{float(v)!r}\n")


def simulate(op: SensingOperator, x: np.ndarray, noise_sigma: float = 0.0,
             seed: int = 0) -> np.ndarray:
    """apply_H plus i.i.d. Gaussian noise of std noise_sigma."""
    if noise_sigma < 0:
        raise ParameterError(f"noise sigma must be >= 0, got {noise_sigma}")
    y = apply_H(op, x)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        y = y + noise_sigma * rng.standard_normal(y.shape)
    return y
