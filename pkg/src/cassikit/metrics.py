"""Reconstruction quality metrics: PSNR, SSIM, spectral correlation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

from .errors import ParameterError, ShapeError
from .tensor_io import HyperCube, Rect, region_mean_spectrum

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _as_array(x) -> np.ndarray:
    if isinstance(x, HyperCube):
        x = x.data
    return np.asarray(x, dtype=np.float64)


def psnr(ref, est, peak: float = 1.0):
    """Per-band PSNR (dB) and band-averaged mean.

    Exact match per band is flagged as +inf; the mean over bands is +inf
    iff every band matches exactly.
    """
    ref, est = _as_array(ref), _as_array(est)
    if ref.shape != est.shape:
        raise ShapeError(f"shape mismatch {ref.shape} vs {est.shape}")
    mse = np.mean((ref - est) ** 2, axis=(0, 1))
    with np.errstate(divide="ignore"):
        per_band = 10.0 * np.log10(peak**2 / mse)
    finite = per_band[np.isfinite(per_band)]
    mean = float(finite.mean()) if finite.size else float("inf")
    return per_band, mean


def psnr_flat(ref, est, peak: float = 1.0) -> float:
    """PSNR on the flattened cube (secondary aggregation)."""
    ref, est = _as_array(ref), _as_array(est)
    if ref.shape != est.shape:
        raise ShapeError(f"shape mismatch {ref.shape} vs {est.shape}")
    mse = np.mean((ref - est) ** 2)
    return float("inf") if mse == 0 else float(10.0 * np.log10(peak**2 / mse))


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(ref_band, est_band, peak: float = 1.0) -> float:
    """Standard single-band SSIM: 11x11 Gaussian window, sigma 1.5,
    C1=(0.01 peak)^2, C2=(0.03 peak)^2, mean over valid window positions."""
    a, b = _as_array(ref_band), _as_array(est_band)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise ShapeError(f"ssim expects a 2D band, got {a.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ParameterError(
            f"band {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    w = _gaussian_window()
    mu1 = convolve2d(a, w, mode="valid")
    mu2 = convolve2d(b, w, mode="valid")
    s11 = convolve2d(a * a, w, mode="valid") - mu1**2
    s22 = convolve2d(b * b, w, mode="valid") - mu2**2
    s12 = convolve2d(a * b, w, mode="valid") - mu1 * mu2
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    num = (2 * mu1 * mu2 + c1) * (2 * s12 + c2)
    den = (mu1**2 + mu2**2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))


def ssim_cube(ref, est, peak: float = 1.0):
    """Per-band SSIM and mean over bands."""
    ref, est = _as_array(ref), _as_array(est)
    if ref.shape != est.shape:
        raise ShapeError(f"shape mismatch {ref.shape} vs {est.shape}")
    per_band = np.array([ssim(ref[:, :, l], est[:, :, l], peak)
                         for l in range(ref.shape[2])])
    return per_band, float(per_band.mean())


def spectral_correlation(ref, est, region: Rect) -> float:
    """Pearson correlation of region-mean spectra; NaN when a spectrum has
    zero variance (undefined correlation)."""
    ref, est = _as_array(ref), _as_array(est)
    if ref.shape != est.shape:
        raise ShapeError(f"shape mismatch {ref.shape} vs {est.shape}")
    sr = region_mean_spectrum(ref, region)
    se = region_mean_spectrum(est, region)
    dr, de = sr - sr.mean(), se - se.mean()
    nr, ne = np.linalg.norm(dr), np.linalg.norm(de)
    if nr == 0 or ne == 0:
        return float("nan")
    return float(np.dot(dr, de) / (nr * ne))


@dataclass
class QualityReport:
    psnr_per_band: list
    psnr_mean: float
    psnr_flat: float
    ssim_per_band: list
    ssim_mean: float
    spectral_correlation: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["band", "psnr", "ssim"])
            for l, (p, s) in enumerate(zip(self.psnr_per_band, self.ssim_per_band)):
                wr.writerow([l, p, s])
            wr.writerow(["mean", self.psnr_mean, self.ssim_mean])


def evaluate(ref, est, regions: dict | None = None, peak: float = 1.0) -> QualityReport:
    """Full report; `regions` maps a label to a Rect for spectral correlation."""
    pb, pm = psnr(ref, est, peak)
    sb, sm = ssim_cube(ref, est, peak)
    corr = {}
    for label, rect in (regions or {}).items():
        corr[label] = spectral_correlation(ref, est, rect)
    return QualityReport(
        psnr_per_band=[float(v) for v in pb],
        psnr_mean=pm,
        psnr_flat=psnr_flat(ref, est, peak),
        ssim_per_band=[float(v) for v in sb],
        ssim_mean=sm,
        spectral_correlation=corr,
    )
