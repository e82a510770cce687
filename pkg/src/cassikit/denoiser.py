"""Step-2 denoiser boundary: built-in test denoisers plus a framed
stdin/stdout protocol for external workers.

Wire protocol (version 1, little-endian integers/floats):

    frame := tag[4 ascii] + u64 payload_length + payload
    tags  := "INIT" "STEP" "RESP" "BYE " "ERR "

    INIT payload: u32 version, u32 M, u32 N, u32 L, u32 K, u32 s,
                  f64 eta, u64 seed,
                  K aperture tensors, 1 measurement tensor
    INIT ack:     RESP with payload u32 version
    STEP payload: u64 request_id, u32 iteration, u32 inner_iters,
                  tensor x, tensor b
    STEP reply:   RESP with payload u64 request_id, f64 loss_y, f64 loss_x,
                  tensor f
    BYE payload:  empty; worker exits 0
    ERR payload:  utf-8 diagnostic

Tensors use the cassikit binary tensor format (see tensor_io), which is
self-delimiting, so payloads concatenate without extra length fields.
Exactly one request is outstanding at a time.
"""

from __future__ import annotations

import os
import select
import shlex
import struct
import time
import subprocess
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve1d

from . import forward_model as fm
from .errors import DataError, ParameterError, ShapeError, WorkerError
from .tensor_io import tensor_from_bytes, tensor_to_bytes

PROTOCOL_VERSION = 1
SMOOTHER_KERNEL = np.array([0.25, 0.5, 0.25])

TAG_INIT = b"INIT"
TAG_STEP = b"STEP"
TAG_RESP = b"RESP"
TAG_BYE = b"BYE "
TAG_ERR = b"ERR "

_TENSOR_HEADER = struct.Struct("<16s3I")


# ---------------------------------------------------------------------------
# framing
# ---------------------------------------------------------------------------

def pack_frame(tag: bytes, payload: bytes = b"") -> bytes:
    if len(tag) != 4:
        raise ParameterError(f"frame tag must be 4 bytes, got {tag!r}")
    return tag + struct.pack("<Q", len(payload)) + payload


def split_frames(buf: bytes):
    """Parse a byte string into (tag, payload) frames (transcript replay)."""
    frames = []
    off = 0
    while off < len(buf):
        tag = buf[off:off + 4]
        (n,) = struct.unpack_from("<Q", buf, off + 4)
        frames.append((tag, buf[off + 12:off + 12 + n]))
        off += 12 + n
    return frames


class _Cursor:
    """Sequential reader over a payload buffer."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.off = 0

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        vals = s.unpack_from(self.buf, self.off)
        self.off += s.size
        return vals

    def tensor(self) -> np.ndarray:
        _, d0, d1, d2 = _TENSOR_HEADER.unpack_from(self.buf, self.off)
        n = _TENSOR_HEADER.size + 8 * d0 * d1 * d2
        arr = tensor_from_bytes(self.buf[self.off:self.off + n])
        self.off += n
        return arr

    def done(self) -> bool:
        return self.off == len(self.buf)


# ---------------------------------------------------------------------------
# message codecs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemDescriptor:
    """Loop-invariant problem data shipped once at INIT."""

    apertures: np.ndarray   # (K, M, N)
    y: np.ndarray           # (K, M, N+(L-1)*s)
    bands: int
    shift: int = 1
    eta: float = 10.0
    seed: int = 0

    @property
    def dims(self):
        K, M, N = self.apertures.shape
        return M, N, self.bands, K, self.shift


@dataclass(frozen=True)
class DenoiseRequest:
    x: np.ndarray
    b: np.ndarray
    inner_iters: int
    iteration: int = 0


@dataclass(frozen=True)
class DenoiseResponse:
    f: np.ndarray
    loss_y: float
    loss_x: float


def encode_init(desc: ProblemDescriptor) -> bytes:
    M, N, L, K, s = desc.dims
    head = struct.pack("<6IdQ", PROTOCOL_VERSION, M, N, L, K, s,
                       desc.eta, desc.seed)
    blobs = [tensor_to_bytes(desc.apertures[k][:, :, None]) for k in range(K)]
    blobs.append(tensor_to_bytes(np.moveaxis(desc.y, 0, -1)))
    return head + b"".join(blobs)


def decode_init(payload: bytes) -> tuple[int, ProblemDescriptor]:
    c = _Cursor(payload)
    version, M, N, L, K, s = c.unpack("<6I")
    (eta,), (seed,) = c.unpack("<d"), c.unpack("<Q")
    aps = np.stack([c.tensor()[:, :, 0] for _ in range(K)])
    y = np.moveaxis(c.tensor(), -1, 0)
    return version, ProblemDescriptor(aps, y, bands=L, shift=s, eta=eta, seed=seed)


def encode_init_ack(version: int = PROTOCOL_VERSION) -> bytes:
    return struct.pack("<I", version)


def encode_step(request_id: int, req: DenoiseRequest) -> bytes:
    head = struct.pack("<QII", request_id, req.iteration, req.inner_iters)
    return head + tensor_to_bytes(req.x) + tensor_to_bytes(req.b)


def decode_step(payload: bytes) -> tuple[int, DenoiseRequest]:
    c = _Cursor(payload)
    request_id, iteration, inner = c.unpack("<QII")
    x, b = c.tensor(), c.tensor()
    return request_id, DenoiseRequest(x=x, b=b, inner_iters=inner,
                                      iteration=iteration)


def encode_step_resp(request_id: int, resp: DenoiseResponse) -> bytes:
    head = struct.pack("<Qdd", request_id, resp.loss_y, resp.loss_x)
    return head + tensor_to_bytes(resp.f)


def decode_step_resp(payload: bytes) -> tuple[int, DenoiseResponse]:
    c = _Cursor(payload)
    request_id, loss_y, loss_x = c.unpack("<Qdd")
    return request_id, DenoiseResponse(f=c.tensor(), loss_y=loss_y, loss_x=loss_x)


# ---------------------------------------------------------------------------
# built-in denoisers
# ---------------------------------------------------------------------------

def smooth_spatial(arr: np.ndarray) -> np.ndarray:
    """Fixed separable 3-point smoothing along both spatial axes."""
    out = convolve1d(arr, SMOOTHER_KERNEL, axis=0, mode="reflect")
    return convolve1d(out, SMOOTHER_KERNEL, axis=1, mode="reflect")


# ---------------------------------------------------------------------------
# sessions
# ---------------------------------------------------------------------------

BUILTIN_KINDS = ("builtin-identity", "builtin-smoother")
SESSION_KINDS = BUILTIN_KINDS + ("external-worker",)


class DenoiserSession:
    """Handle to the Step-2 denoiser; strictly sequential request/response."""

    def __init__(self, kind: str, problem: ProblemDescriptor,
                 worker_cmd: str | None = None,
                 handshake_timeout: float = 60.0,
                 step_timeout: float = 600.0):
        if kind not in SESSION_KINDS:
            raise ParameterError(f"unknown denoiser kind {kind!r}")
        self.kind = kind
        self.problem = problem
        self.step_timeout = step_timeout
        self._next_id = 1
        self._closed = False
        self._proc = None
        self._op = fm.SensingOperator(problem.apertures, shift=problem.shift,
                                      bands=problem.bands)
        if kind == "external-worker":
            if not worker_cmd:
                raise ParameterError("external-worker requires a worker command")
            self._launch(worker_cmd, handshake_timeout)

    # -- external transport ----------------------------------------------

    def _launch(self, worker_cmd: str, handshake_timeout: float):
        try:
            self._proc = subprocess.Popen(
                shlex.split(worker_cmd), stdin=subprocess.PIPE,
                stdout=subprocess.PIPE)
        except OSError as exc:
            raise WorkerError(f"failed to launch worker: {exc}") from exc
        self._send(TAG_INIT, encode_init(self.problem))
        tag, payload = self._recv(handshake_timeout)
        if tag == TAG_ERR:
            raise WorkerError(f"worker INIT error: {payload.decode(errors='replace')}")
        if tag != TAG_RESP:
            raise WorkerError(f"unexpected handshake frame {tag!r}")
        (version,) = struct.unpack("<I", payload)
        if version != PROTOCOL_VERSION:
            self.close()
            raise WorkerError(
                f"protocol version mismatch: worker={version}, "
                f"client={PROTOCOL_VERSION}")

    def _send(self, tag: bytes, payload: bytes = b""):
        try:
            self._proc.stdin.write(pack_frame(tag, payload))
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError) as exc:
            raise WorkerError(f"worker pipe closed while sending: {exc}") from exc

    def _read_exact(self, n: int, deadline: float) -> bytes:
        fd = self._proc.stdout.fileno()
        chunks = []
        got = 0
        while got < n:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise WorkerError("worker timed out")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise WorkerError("worker timed out")
            chunk = os.read(fd, n - got)
            if not chunk:
                raise WorkerError("worker closed its output stream")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def _recv(self, timeout: float):
        deadline = time.monotonic() + timeout
        head = self._read_exact(12, deadline)
        tag = head[:4]
        (n,) = struct.unpack("<Q", head[4:])
        payload = self._read_exact(n, deadline) if n else b""
        return tag, payload

    # -- request/response --------------------------------------------------

    def denoise(self, request: DenoiseRequest) -> DenoiseResponse:
        if self._closed:
            raise WorkerError("session is closed")
        shape = (self._op.rows, self._op.cols, self._op.bands)
        if request.x.shape != shape or request.b.shape != shape:
            raise ShapeError(f"request arrays must have shape {shape}")
        if self.kind == "external-worker":
            resp = self._denoise_external(request)
        else:
            resp = self._denoise_builtin(request)
        if resp.f.shape != shape:
            raise WorkerError(f"denoiser returned shape {resp.f.shape}, "
                              f"expected {shape}")
        if not np.all(np.isfinite(resp.f)):
            raise DataError("denoiser returned non-finite values")
        return resp

    def _denoise_builtin(self, request: DenoiseRequest) -> DenoiseResponse:
        ref = request.x - request.b
        f = ref if self.kind == "builtin-identity" else smooth_spatial(ref)
        return DenoiseResponse(f=f, loss_y=self._loss_y(f),
                               loss_x=float(np.mean(np.abs(f - ref))))

    def _loss_y(self, f: np.ndarray) -> float:
        return float(np.mean(np.abs(self.problem.y - fm.apply_H(self._op, f))))

    def _denoise_external(self, request: DenoiseRequest) -> DenoiseResponse:
        request_id = self._next_id
        self._next_id += 1
        self._send(TAG_STEP, encode_step(request_id, request))
        tag, payload = self._recv(self.step_timeout)
        if tag == TAG_ERR:
            raise WorkerError(f"worker STEP error: {payload.decode(errors='replace')}")
        if tag != TAG_RESP:
            raise WorkerError(f"unexpected frame {tag!r} in response to STEP")
        got_id, resp = decode_step_resp(payload)
        if got_id != request_id:
            raise WorkerError(f"response id {got_id} != outstanding {request_id}")
        return resp

    # -- teardown ------------------------------------------------------------

    def close(self, grace: float = 10.0):
        """Idempotent shutdown; terminates the worker after the grace period."""
        if self._closed:
            return
        self._closed = True
        if self._proc is None:
            return
        try:
            if self._proc.poll() is None:
                self._proc.stdin.write(pack_frame(TAG_BYE))
                self._proc.stdin.flush()
                self._proc.stdin.close()
        except (BrokenPipeError, ValueError, OSError):
            pass
        try:
            self._proc.wait(timeout=grace)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def open_session(kind: str, problem: ProblemDescriptor,
                 worker_cmd: str | None = None, **kwargs) -> DenoiserSession:
    return DenoiserSession(kind, problem, worker_cmd=worker_cmd, **kwargs)


def close_session(session: DenoiserSession) -> None:
    session.close()
