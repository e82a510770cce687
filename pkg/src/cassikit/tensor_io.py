"""Binary tensor I/O, synthetic scenes, apertures, and human-viewable exports.

File format (lossless, little-endian throughout):

    bytes  0..15   magic  b"CASSIKIT-TENSOR1"
    bytes 16..27   dims   3 x u32  (d0, d1, d2)
    bytes 28..     payload d0*d1*d2 float64 values in band-major order,
                   i.e. plane index d2 is slowest, then rows d0, then cols d1.

Cubes are stored with dims (M, N, L), apertures as (M, N, 1), and
measurements as (M, N+(L-1)*s, K) with the snapshot index in the plane slot.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError, FormatError, ParameterError

MAGIC = b"CASSIKIT-TENSOR1"
_HEADER = struct.Struct("<16s3I")


# ---------------------------------------------------------------------------
# raw tensor codec (bit-exact; reused by the worker protocol)
# ---------------------------------------------------------------------------

def tensor_to_bytes(arr: np.ndarray) -> bytes:
    """Serialize a 3D float array to the binary tensor format."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 3:
        raise ParameterError(f"tensor must be 3D, got shape {a.shape}")
    d0, d1, d2 = a.shape
    header = _HEADER.pack(MAGIC, d0, d1, d2)
    payload = np.ascontiguousarray(np.transpose(a, (2, 0, 1)))
    return header + payload.astype("<f8").tobytes()


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    """Deserialize the binary tensor format. Raises FormatError/DataError."""
    if len(buf) < _HEADER.size:
        raise FormatError("tensor buffer shorter than header")
    magic, d0, d1, d2 = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError("bad magic; not a cassikit tensor")
    n = d0 * d1 * d2
    expected = _HEADER.size + 8 * n
    if len(buf) != expected:
        raise FormatError(
            f"payload size mismatch: header says {n} values, "
            f"got {len(buf) - _HEADER.size} bytes")
    flat = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
    arr = np.transpose(flat.reshape(d2, d0, d1), (1, 2, 0))
    if not np.all(np.isfinite(arr)):
        raise DataError("tensor payload contains NaN/Inf")
    return np.ascontiguousarray(arr)


def write_tensor(path, arr: np.ndarray) -> None:
    Path(path).write_bytes(tensor_to_bytes(arr))


def read_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HyperCube:
    """3D spectral scene, shape (M, N, L), peak-normalized reflectance."""

    data: np.ndarray

    def __post_init__(self):
        a = self.data
        if a.ndim != 3 or min(a.shape) < 1:
            raise ParameterError(f"cube must be 3D with positive dims, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise DataError("cube contains NaN/Inf")
        if a.min() < 0 or a.max() > 1:
            raise DataError("cube values outside [0, 1]")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def bands(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class Rect:
    """Spatial region: rows [row0, row0+rows), cols [col0, col0+cols)."""

    row0: int
    col0: int
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.row0 < 0 or self.col0 < 0:
            raise ParameterError(f"empty or negative region {self}")

    def check_inside(self, M: int, N: int) -> None:
        if self.row0 + self.rows > M or self.col0 + self.cols > N:
            raise ParameterError(f"region {self} outside {M}x{N} bounds")


def normalize_peak(arr: np.ndarray) -> np.ndarray:
    """Divide by the global maximum so the peak is 1 (skip for all-zeros)."""
    m = arr.max()
    return arr if m == 0 else arr / m


# ---------------------------------------------------------------------------
# cube / aperture / measurement files
# ---------------------------------------------------------------------------

def save_cube(cube: HyperCube, path) -> None:
    write_tensor(path, cube.data)


def load_cube(path, format: str = "planar-binary") -> HyperCube:
    """Load a cube and apply ingestion normalization (global peak -> 1)."""
    if format == "planar-binary":
        arr = read_tensor(path)
    elif format == "per-band-image-stack":
        files = sorted(p for p in Path(path).iterdir() if p.is_file())
        if not files:
            raise FormatError(f"no band images found in {path}")
        bands = [np.asarray(Image.open(f).convert("F"), dtype=np.float64)
                 for f in files]
        shapes = {b.shape for b in bands}
        if len(shapes) != 1:
            raise FormatError(f"band images disagree on shape: {shapes}")
        arr = np.stack(bands, axis=-1)
    else:
        raise ParameterError(f"unknown cube format {format!r}")
    if not np.all(np.isfinite(arr)):
        raise DataError("cube payload contains NaN/Inf")
    if arr.min() < 0:
        raise DataError("cube payload contains negative values")
    return HyperCube(normalize_peak(arr))


def save_aperture(mask: np.ndarray, path) -> None:
    write_tensor(path, np.asarray(mask, dtype=np.float64)[:, :, None])


def load_aperture(path) -> np.ndarray:
    arr = read_tensor(path)
    if arr.shape[2] != 1:
        raise FormatError(f"aperture file holds {arr.shape[2]} planes, expected 1")
    mask = arr[:, :, 0]
    if mask.min() < 0 or mask.max() > 1:
        raise DataError("aperture entries outside [0, 1]")
    return mask


def save_measurement(y: np.ndarray, path) -> None:
    """Store a (K, M, cols) measurement with snapshots in the plane slot."""
    write_tensor(path, np.moveaxis(np.asarray(y, dtype=np.float64), 0, -1))


def load_measurement(path) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(read_tensor(path), -1, 0))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def generate_aperture(M: int, N: int, transmittance: float, seed: int) -> np.ndarray:
    """Binary Bernoulli mask: each entry 1 with probability `transmittance`."""
    if M < 1 or N < 1:
        raise ParameterError("aperture dims must be >= 1")
    if not 0 < transmittance < 1:
        raise ParameterError(f"transmittance must be in (0,1), got {transmittance}")
    rng = np.random.default_rng(seed)
    return (rng.random((M, N)) < transmittance).astype(np.float64)


SYNTHETIC_KINDS = ("gaussian-blobs", "gradient-ramp", "checker-spectral")


def make_synthetic_cube(M: int, N: int, L: int, kind: str, seed: int = 0) -> HyperCube:
    """Deterministic smooth synthetic scene, peak-normalized."""
    if min(M, N, L) < 1:
        raise ParameterError("cube dims must be >= 1")
    ii, jj = np.meshgrid(np.arange(M), np.arange(N), indexing="ij")
    if kind == "gradient-ramp":
        ll = np.arange(L)
        arr = (ii[:, :, None] + jj[:, :, None] + ll[None, None, :]).astype(np.float64)
        arr += 1.0  # keep the all-zero corner voxel positive
    elif kind == "gaussian-blobs":
        rng = np.random.default_rng(seed)
        arr = np.zeros((M, N, L))
        for _ in range(5):
            ci, cj = rng.uniform(0, M), rng.uniform(0, N)
            cl = rng.uniform(0, L - 1) if L > 1 else 0.0
            si = rng.uniform(0.1, 0.3) * M
            sj = rng.uniform(0.1, 0.3) * N
            sl = rng.uniform(0.3, 0.8) * max(L, 2)
            amp = rng.uniform(0.4, 1.0)
            spatial = np.exp(-((ii - ci) ** 2 / (2 * si**2)
                               + (jj - cj) ** 2 / (2 * sj**2)))
            spectral = np.exp(-((np.arange(L) - cl) ** 2) / (2 * sl**2))
            arr += amp * spatial[:, :, None] * spectral[None, None, :]
    elif kind == "checker-spectral":
        block = max(1, min(M, N) // 4)
        checker = ((ii // block + jj // block) % 2).astype(np.float64)
        ramp = np.linspace(0.0, np.pi, L) if L > 1 else np.zeros(1)
        spectral = 0.5 + 0.5 * np.cos(ramp)
        arr = (0.25 + 0.75 * checker)[:, :, None] * spectral[None, None, :]
        arr += 0.05  # keep strictly positive
    else:
        raise ParameterError(f"unknown synthetic kind {kind!r}")
    return HyperCube(normalize_peak(arr))


# ---------------------------------------------------------------------------
# human-viewable exports
# ---------------------------------------------------------------------------

def export_band_images(cube: HyperCube, out_dir) -> list:
    """One 8-bit grayscale PNG per band, single global intensity scale."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    peak = cube.data.max()
    scale = 255.0 / peak if peak > 0 else 0.0
    paths = []
    for l in range(cube.bands):
        # round-half-up quantization anchored at the cube peak
        q = np.clip(np.floor(cube.data[:, :, l] * scale + 0.5), 0, 255)
        p = out / f"band_{l:03d}.png"
        Image.fromarray(q.astype(np.uint8), mode="L").save(p)
        paths.append(p)
    return paths


def region_mean_spectrum(cube_data: np.ndarray, region: Rect) -> np.ndarray:
    """Mean value per band over a spatial rectangle; length-L vector."""
    region.check_inside(cube_data.shape[0], cube_data.shape[1])
    block = cube_data[region.row0:region.row0 + region.rows,
                      region.col0:region.col0 + region.cols, :]
    return block.mean(axis=(0, 1))


def export_spectrum_csv(cube: HyperCube, region: Rect, path) -> None:
    spectrum = region_mean_spectrum(cube.data, region)
    lines = ["band,value"]
    lines += [f"{l},{float(v)!r}" for l, v in enumerate(spectrum)]
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")
