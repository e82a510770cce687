import struct
from pathlib import Path

import numpy as np
import pytest

from dipworker import protocol as proto

DATA = Path(__file__).parent / "data"


def load_conformance():
    """Golden file from the primary toolkit: dims header, K apertures,
    a cube, and the expected measurement."""
    raw = (DATA / "conformance.bin").read_bytes()
    M, N, L, K, s = struct.unpack_from("<5I", raw, 0)
    off = 20
    aps = []
    for _ in range(K):
        aps.append(proto.tensor_from_bytes(raw, off)[:, :, 0])
        off += proto.tensor_nbytes(raw, off)
    cube = proto.tensor_from_bytes(raw, off)
    off += proto.tensor_nbytes(raw, off)
    y = np.moveaxis(proto.tensor_from_bytes(raw, off), -1, 0)
    return (M, N, L, K, s), np.stack(aps), cube, y


def make_init_payload(apertures, y, L, s=1, eta=10.0, seed=0,
                      version=proto.PROTOCOL_VERSION):
    K, M, N = apertures.shape
    head = struct.pack("<6IdQ", version, M, N, L, K, s, eta, seed)
    blobs = [proto.tensor_to_bytes(apertures[k][:, :, None])
             for k in range(K)]
    blobs.append(proto.tensor_to_bytes(np.moveaxis(y, 0, -1)))
    return head + b"".join(blobs)


def make_step_payload(request_id, x, b, inner_iters, iteration=0):
    return (struct.pack("<QII", request_id, iteration, inner_iters)
            + proto.tensor_to_bytes(x) + proto.tensor_to_bytes(b))


def small_problem(M=16, N=16, L=2, K=1, s=1, seed=0):
    rng = np.random.default_rng(seed)
    apertures = (rng.random((K, M, N)) < 0.5).astype(float)
    cube = rng.random((M, N, L))
    from dipworker.forward import apply_H
    y = apply_H(apertures, cube, s)
    return apertures, cube, y


@pytest.fixture
def rng():
    return np.random.default_rng(7)
