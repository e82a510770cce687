"""Orthonormal sparsifying basis: 2D Symmlet-8 wavelet (spatial plane)
Kronecker an orthonormal 1D spectral transform (DCT-II default, unitary
DFT optional).

The wavelet transform is a matrix-free periodized filter bank.  With
circular boundary handling and an even signal length the transform matrix
is exactly orthogonal, so analyze/synthesize are exact inverses and
preserve the Euclidean norm.

Coefficient layout per band and per level: [approx | detail] along each
axis, recursing on the top-left approximation block (standard Mallat
ordering).
"""

from __future__ import annotations

import numpy as np
import scipy.fft

from .errors import ParameterError, ShapeError, SizeError

# Least-asymmetric Daubechies scaling filter with 8 vanishing moments
# (Symmlet-8, 16 taps).  Standard tabulated values (see Daubechies, "Ten
# Lectures on Wavelets", ch. 6; truncated tables are widely published),
# re-derived here by spectral factorization to full double precision so
# that sum(h)=sqrt(2) and the even-lag autocorrelations vanish to ~1e-16.
SYM8_LO = np.array([
    -0.0033824159510050028,
    -0.0005421323318000107,
    0.03169508781152599,
    0.007607487324976609,
    -0.14329423835127267,
    -0.061273359067811076,
    0.4813596512590534,
    0.777185751699628,
    0.36444189483617895,
    -0.0519458381078818,
    -0.027219029917103486,
    0.04913717967373029,
    0.0038087520138944896,
    -0.014952258337062199,
    -0.0003029205147241331,
    0.001889950332767689,
])
# Quadrature-mirror highpass: g[m] = (-1)^m h[F-1-m]
SYM8_HI = (SYM8_LO[::-1] * np.where(np.arange(SYM8_LO.size) % 2 == 0, 1.0, -1.0))

SPECTRAL_TRANSFORMS = ("dct", "dft")


def _dwt_indices(length: int, taps: int) -> np.ndarray:
    """(length//2, taps) circular gather indices for one analysis step."""
    k = np.arange(length // 2)[:, None]
    m = np.arange(taps)[None, :]
    return (2 * k + m) % length


def _analyze_axis(data: np.ndarray, axis: int) -> np.ndarray:
    """One periodized filter-bank step along `axis`; [approx|detail] layout."""
    a = np.moveaxis(data, axis, -1)
    P = a.shape[-1]
    idx = _dwt_indices(P, SYM8_LO.size)
    gathered = a[..., idx]                      # (..., P/2, taps)
    lo = gathered @ SYM8_LO
    hi = gathered @ SYM8_HI
    out = np.concatenate([lo, hi], axis=-1)
    return np.moveaxis(out, -1, axis)


def _synthesize_axis(coeffs: np.ndarray, axis: int) -> np.ndarray:
    """Exact adjoint (= inverse) of _analyze_axis."""
    c = np.moveaxis(coeffs, axis, -1)
    P = c.shape[-1]
    lo, hi = c[..., :P // 2], c[..., P // 2:]
    idx = _dwt_indices(P, SYM8_LO.size)
    contrib = lo[..., None] * SYM8_LO + hi[..., None] * SYM8_HI  # (...,P/2,taps)
    flat = contrib.reshape(-1, P // 2, SYM8_LO.size)
    out = np.zeros((flat.shape[0], P), dtype=coeffs.dtype)
    rows = np.arange(flat.shape[0])[:, None, None]
    np.add.at(out, (rows, idx[None, :, :]), flat)
    out = out.reshape(c.shape[:-1] + (P,))
    return np.moveaxis(out, -1, axis)


def max_levels(M: int, N: int) -> int:
    """Largest J with 2^J dividing both spatial dims (capped at the sizes)."""
    j = 0
    while M % 2 == 0 and N % 2 == 0 and M > 1 and N > 1:
        M //= 2
        N //= 2
        j += 1
    return j


class SparseBasis:
    """Kronecker basis: J-level 2D Symmlet-8 per band x 1D spectral transform.

    Coefficients are kept cube-shaped (M, N, L); the flat vectorization
    order is the cube's own.  Real-valued for 'dct', complex for 'dft'.
    """

    def __init__(self, M: int, N: int, L: int, levels: int | None = None,
                 spectral: str = "dct"):
        if min(M, N, L) < 1:
            raise ParameterError("basis dims must be >= 1")
        if spectral not in SPECTRAL_TRANSFORMS:
            raise ParameterError(f"spectral transform must be one of "
                                 f"{SPECTRAL_TRANSFORMS}, got {spectral!r}")
        feasible = max_levels(M, N)
        if levels is None:
            levels = min(3, feasible)
        if levels < 0 or levels > feasible:
            raise ParameterError(
                f"levels={levels} infeasible: {M}x{N} supports at most {feasible}")
        self.M, self.N, self.L = M, N, L
        self.levels = levels
        self.spectral = spectral

    @property
    def shape(self):
        return (self.M, self.N, self.L)

    def _check(self, x: np.ndarray) -> None:
        if x.shape != self.shape:
            raise ShapeError(f"array shape {x.shape} != basis {self.shape}")

    # -- spectral transform along L -------------------------------------

    def _spectral_fwd(self, x: np.ndarray) -> np.ndarray:
        if self.spectral == "dct":
            return scipy.fft.dct(x, type=2, axis=2, norm="ortho")
        return np.fft.fft(x, axis=2) / np.sqrt(self.L)

    def _spectral_inv(self, t: np.ndarray) -> np.ndarray:
        if self.spectral == "dct":
            return scipy.fft.idct(t, type=2, axis=2, norm="ortho")
        return np.fft.ifft(t, axis=2) * np.sqrt(self.L)

    # -- public API ------------------------------------------------------

    def analyze(self, x: np.ndarray) -> np.ndarray:
        """theta = Psi^T x: spectral transform, then per-band 2D wavelet."""
        x = np.asarray(x)
        self._check(x)
        t = self._spectral_fwd(np.asarray(x, dtype=np.float64))
        m, n = self.M, self.N
        for _ in range(self.levels):
            block = _analyze_axis(t[:m, :n, :], 0)
            t = t.copy()
            t[:m, :n, :] = _analyze_axis(block, 1)
            m //= 2
            n //= 2
        return t

    def _synthesize_full(self, theta: np.ndarray) -> np.ndarray:
        sizes = [(self.M >> j, self.N >> j) for j in range(self.levels)]
        t = theta.astype(complex if self.spectral == "dft" else np.float64)
        for m, n in reversed(sizes):
            block = _synthesize_axis(t[:m, :n, :], 1)
            t = t.copy()
            t[:m, :n, :] = _synthesize_axis(block, 0)
        return self._spectral_inv(t)

    def synthesize(self, theta: np.ndarray) -> np.ndarray:
        """x = Psi theta; real output (imaginary residue of the DFT option
        is discarded, it is numerically zero for coefficients of real cubes)."""
        theta = np.asarray(theta)
        self._check(theta)
        x = self._synthesize_full(theta)
        return np.real(x) if self.spectral == "dft" else x

    def build_dense_basis(self, cap: int = 4096) -> np.ndarray:
        """Dense Psi whose columns are synthesize(e_k); testing-only oracle."""
        n = self.M * self.N * self.L
        if n > cap:
            raise SizeError(f"dense basis capped at {cap} coefficients, got {n}")
        dtype = complex if self.spectral == "dft" else np.float64
        psi = np.empty((n, n), dtype=dtype)
        e = np.zeros(n, dtype=dtype)
        for k in range(n):
            e[k] = 1.0
            psi[:, k] = self._synthesize_full(e.reshape(self.shape)).ravel()
            e[k] = 0.0
        return psi
