import json

import numpy as np
import pytest
from scipy.signal import convolve2d

from cassikit import metrics
from cassikit.errors import ParameterError
from cassikit.metrics import (QualityReport, evaluate, psnr, psnr_flat,
                              spectral_correlation, ssim, ssim_cube)
from cassikit.tensor_io import HyperCube, Rect, make_synthetic_cube


def naive_ssim(a, b, peak=1.0):
    """Windowed SSIM computed the long way, as an independent oracle."""
    ax = np.arange(11) - 5.0
    g = np.exp(-(ax**2) / (2 * 1.5**2))
    win = np.outer(g, g)
    win /= win.sum()
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    rows, cols = a.shape
    vals = []
    for i in range(rows - 10):
        for j in range(cols - 10):
            wa = a[i:i + 11, j:j + 11]
            wb = b[i:i + 11, j:j + 11]
            mu_a = (win * wa).sum()
            mu_b = (win * wb).sum()
            va = (win * wa * wa).sum() - mu_a**2
            vb = (win * wb * wb).sum() - mu_b**2
            cov = (win * wa * wb).sum() - mu_a * mu_b
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                        / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


class TestPsnr:
    def test_identical_is_infinite(self, rng):
        x = rng.random((8, 8, 3))
        per_band, mean = psnr(x, x)
        assert all(np.isinf(per_band))
        assert np.isinf(mean)

    def test_known_mse(self):
        # uniform error of 0.1 gives MSE 0.01 -> 20 dB at unit peak
        ref = np.zeros((16, 16, 2))
        est = np.full((16, 16, 2), 0.1)
        per_band, mean = psnr(ref, est)
        assert np.allclose(per_band, 20.0, atol=1e-12)
        assert abs(mean - 20.0) < 1e-12

    def test_mean_matches_bruteforce(self, rng):
        ref = rng.random((12, 12, 5))
        est = np.clip(ref + 0.05 * rng.standard_normal(ref.shape), 0, 1)
        per_band, mean = psnr(ref, est)
        brute = [10 * np.log10(1.0 / np.mean((ref[:, :, l] - est[:, :, l])**2))
                 for l in range(5)]
        assert np.max(np.abs(per_band - brute)) < 1e-12
        assert abs(mean - np.mean(brute)) < 1e-12

    def test_noise_consistency(self):
        # sigma = 10^(-psnr/20) at unit peak: check within 0.1 dB
        rng = np.random.default_rng(77)
        ref = np.full((256, 256, 1), 0.5)
        sigma = 0.01  # expected PSNR 40 dB
        est = ref + sigma * rng.standard_normal(ref.shape)
        _, mean = psnr(ref, est)
        assert abs(mean - 40.0) < 0.1

    def test_flat_variant(self, rng):
        ref = rng.random((8, 8, 2))
        est = rng.random((8, 8, 2))
        expected = 10 * np.log10(1.0 / np.mean((ref - est) ** 2))
        assert abs(psnr_flat(ref, est) - expected) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            psnr(np.zeros((4, 4, 2)), np.zeros((4, 4, 3)))

    def test_hypercube_inputs(self, rng):
        arr = rng.random((8, 8, 2))
        arr.flat[0] = 1.0
        _, mean = psnr(HyperCube(arr), HyperCube(arr))
        assert np.isinf(mean)


class TestSsim:
    def test_identical_is_one(self, rng):
        a = rng.random((24, 24))
        assert abs(ssim(a, a) - 1.0) < 1e-12

    def test_inverted_below_one(self, rng):
        a = rng.random((24, 24))
        assert ssim(a, 1.0 - a) < 1.0

    def test_golden_value(self):
        rng = np.random.default_rng(2024)
        a = rng.random((32, 32))
        b = np.clip(a + 0.1 * rng.standard_normal((32, 32)), 0, 1)
        assert abs(ssim(a, b) - 0.946987014151804) < 1e-9

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(2024)
        a = rng.random((32, 32))
        b = np.clip(a + 0.1 * rng.standard_normal((32, 32)), 0, 1)
        assert abs(ssim(a, b) - naive_ssim(a, b)) < 1e-10

    def test_symmetry(self, rng):
        a, b = rng.random((2, 20, 20))
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-12

    def test_small_image_rejected(self):
        with pytest.raises(ParameterError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))

    def test_cube_mean(self, rng):
        cube = rng.random((16, 16, 3))
        est = np.clip(cube + 0.02 * rng.standard_normal(cube.shape), 0, 1)
        per_band, mean = ssim_cube(cube, est)
        assert abs(mean - np.mean(per_band)) < 1e-12
        brute = [ssim(cube[:, :, l], est[:, :, l]) for l in range(3)]
        assert np.max(np.abs(per_band - brute)) < 1e-12


class TestSpectralCorrelation:
    def test_identical_is_one(self):
        cube = make_synthetic_cube(8, 8, 6, "gaussian-blobs", seed=1)
        r = spectral_correlation(cube, cube, Rect(2, 2, 4, 4))
        assert abs(r - 1.0) < 1e-12

    def test_affine_invariance(self, rng):
        ref = rng.random((8, 8, 6))
        est = 0.3 * ref + 0.2  # positive affine map of the spectrum
        r = spectral_correlation(ref, est, Rect(0, 0, 8, 8))
        assert abs(r - 1.0) < 1e-12

    def test_negated_is_minus_one(self, rng):
        ref = rng.random((8, 8, 6))
        est = 1.0 - ref
        r = spectral_correlation(ref, est, Rect(0, 0, 8, 8))
        assert abs(r + 1.0) < 1e-12

    def test_constant_spectrum_is_nan(self):
        ref = np.ones((8, 8, 4))
        est = np.ones((8, 8, 4)) * 0.5
        r = spectral_correlation(ref, est, Rect(0, 0, 8, 8))
        assert np.isnan(r)

    def test_matches_numpy_corrcoef(self, rng):
        ref = rng.random((8, 8, 6))
        est = rng.random((8, 8, 6))
        rect = Rect(1, 1, 4, 5)
        sr = ref[1:5, 1:6, :].mean(axis=(0, 1))
        se = est[1:5, 1:6, :].mean(axis=(0, 1))
        expected = np.corrcoef(sr, se)[0, 1]
        assert abs(spectral_correlation(ref, est, rect) - expected) < 1e-12


class TestEvaluate:
    def test_report_fields(self, rng):
        ref = make_synthetic_cube(16, 16, 4, "gaussian-blobs", seed=3)
        est = HyperCube(np.clip(ref.data + 0.01
                                * rng.standard_normal(ref.data.shape), 0, 1))
        rep = evaluate(ref, est, regions={"patch": Rect(2, 2, 8, 8)})
        assert isinstance(rep, QualityReport)
        assert len(rep.psnr_per_band) == 4
        assert rep.psnr_mean > 20
        assert 0 < rep.ssim_mean <= 1
        assert "patch" in rep.spectral_correlation

    def test_json_roundtrip(self, rng):
        ref = make_synthetic_cube(16, 16, 4, "gaussian-blobs", seed=3)
        rep = evaluate(ref, ref, regions={})
        data = json.loads(rep.to_json())
        assert data["ssim_mean"] == 1.0
        assert all(v is None or isinstance(v, float)
                   for v in data["psnr_per_band"])

    def test_csv_output(self, tmp_path, rng):
        ref = make_synthetic_cube(16, 16, 4, "gaussian-blobs", seed=3)
        est = HyperCube(np.clip(ref.data + 0.01
                                * rng.standard_normal(ref.data.shape), 0, 1))
        rep = evaluate(ref, est, regions={"r": Rect(0, 0, 4, 4)})
        p = tmp_path / "report.csv"
        rep.write_csv(p)
        lines = p.read_text().splitlines()
        assert lines[0] == "band,psnr,ssim"
        assert len(lines) == 6  # header + 4 bands + mean row
        assert lines[-1].startswith("mean,")
