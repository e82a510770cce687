"""Framed wire protocol and binary tensor codec.

Independent implementation of the published formats:

* tensor blob: 16-byte magic ``CASSIKIT-TENSOR1``, three little-endian
  u32 dims (rows, cols, planes), then float64 LE payload in plane-major
  order (plane varies slowest, rows next, columns fastest);
* frame: 4-byte ASCII tag, u64 LE payload length, payload bytes;
* INIT payload: u32 version, u32 M, N, L, K, s, f64 eta, u64 seed,
  K aperture tensors of shape (M, N, 1), one measurement tensor of
  shape (M, N+(L-1)s, K);
* STEP payload: u64 request id, u32 iteration, u32 inner_iters,
  tensor x, tensor b — both (M, N, L);
* STEP response: u64 request id, f64 loss_y, f64 loss_x, tensor f.
"""

import struct

import numpy as np

PROTOCOL_VERSION = 1

MAGIC = b"CASSIKIT-TENSOR1"
_TENSOR_HEADER = struct.Struct("<16s3I")

TAG_INIT = b"INIT"
TAG_STEP = b"STEP"
TAG_RESP = b"RESP"
TAG_BYE = b"BYE "
TAG_ERR = b"ERR "


class ProtocolError(Exception):
    """Malformed frame or tensor blob."""


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    if arr.ndim != 3:
        raise ProtocolError(f"tensor must be 3-D, got {arr.ndim}-D")
    rows, cols, planes = arr.shape
    payload = np.transpose(arr, (2, 0, 1)).tobytes()
    return _TENSOR_HEADER.pack(MAGIC, rows, cols, planes) + payload


def tensor_nbytes(buf: bytes, off: int = 0) -> int:
    """Total encoded size of the tensor starting at `off`."""
    magic, rows, cols, planes = _TENSOR_HEADER.unpack_from(buf, off)
    if magic != MAGIC:
        raise ProtocolError("bad tensor magic")
    return _TENSOR_HEADER.size + 8 * rows * cols * planes


def tensor_from_bytes(buf: bytes, off: int = 0) -> np.ndarray:
    magic, rows, cols, planes = _TENSOR_HEADER.unpack_from(buf, off)
    if magic != MAGIC:
        raise ProtocolError("bad tensor magic")
    start = off + _TENSOR_HEADER.size
    count = rows * cols * planes
    if len(buf) - start < 8 * count:
        raise ProtocolError("truncated tensor payload")
    flat = np.frombuffer(buf, dtype="<f8", count=count, offset=start)
    arr = np.transpose(flat.reshape(planes, rows, cols), (1, 2, 0))
    if not np.all(np.isfinite(arr)):
        raise ProtocolError("non-finite values in tensor payload")
    return np.ascontiguousarray(arr)


def pack_frame(tag: bytes, payload: bytes = b"") -> bytes:
    if len(tag) != 4:
        raise ProtocolError("frame tag must be 4 bytes")
    return tag + struct.pack("<Q", len(payload)) + payload


def read_frame(stream):
    """Blocking read of one frame; returns (tag, payload) or None at EOF."""
    head = stream.read(12)
    if not head:
        return None
    if len(head) < 12:
        raise ProtocolError("truncated frame header")
    tag = head[:4]
    (n,) = struct.unpack("<Q", head[4:])
    payload = stream.read(n) if n else b""
    if len(payload) < n:
        raise ProtocolError("truncated frame payload")
    return tag, payload


class InitMessage:
    def __init__(self, version, dims, eta, seed, apertures, y):
        self.version = version
        self.dims = dims  # (M, N, L, K, s)
        self.eta = eta
        self.seed = seed
        self.apertures = apertures  # (K, M, N)
        self.y = y                  # (K, M, C)


def decode_init(payload: bytes) -> InitMessage:
    head = struct.Struct("<6IdQ")
    version, M, N, L, K, s = struct.unpack_from("<6I", payload, 0)
    eta, seed = struct.unpack_from("<dQ", payload, 24)
    if min(M, N, L, K, s) < 1:
        raise ProtocolError(f"inconsistent dims {(M, N, L, K, s)}")
    off = head.size
    aps = []
    for _ in range(K):
        t = tensor_from_bytes(payload, off)
        off += tensor_nbytes(payload, off)
        if t.shape != (M, N, 1):
            raise ProtocolError(f"aperture shape {t.shape} != {(M, N, 1)}")
        aps.append(t[:, :, 0])
    y = tensor_from_bytes(payload, off)
    off += tensor_nbytes(payload, off)
    C = N + (L - 1) * s
    if y.shape != (M, C, K):
        raise ProtocolError(f"measurement shape {y.shape} != {(M, C, K)}")
    if off != len(payload):
        raise ProtocolError("trailing bytes in INIT payload")
    return InitMessage(version, (M, N, L, K, s), eta, seed,
                       np.stack(aps), np.moveaxis(y, -1, 0))


def encode_init_ack(version: int = PROTOCOL_VERSION) -> bytes:
    return struct.pack("<I", version)


def decode_step(payload: bytes):
    request_id, iteration, inner = struct.unpack_from("<QII", payload, 0)
    off = 16
    x = tensor_from_bytes(payload, off)
    off += tensor_nbytes(payload, off)
    b = tensor_from_bytes(payload, off)
    off += tensor_nbytes(payload, off)
    if off != len(payload):
        raise ProtocolError("trailing bytes in STEP payload")
    if x.shape != b.shape:
        raise ProtocolError("x and b shapes differ")
    return request_id, iteration, inner, x, b


def encode_step_resp(request_id: int, loss_y: float, loss_x: float,
                     f: np.ndarray) -> bytes:
    return (struct.pack("<Qdd", request_id, loss_y, loss_x)
            + tensor_to_bytes(f))
