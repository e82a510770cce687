import struct
import subprocess
import sys

import numpy as np

from conftest import make_init_payload, make_step_payload, small_problem
from dipworker import protocol as proto

CMD = [sys.executable, "-m", "dipworker.main"]


def run_worker(stream, *flags):
    return subprocess.run(CMD + list(flags), input=stream,
                          capture_output=True, timeout=300)


def frames(raw):
    out = []
    off = 0
    while off < len(raw):
        tag = raw[off:off + 4]
        (n,) = struct.unpack_from("<Q", raw, off + 4)
        out.append((tag, raw[off + 12:off + 12 + n]))
        off += 12 + n
    return out


class TestLifecycle:
    def test_bye_after_init_exit_zero(self):
        apertures, _, y = small_problem(16, 16, 2)
        stream = (proto.pack_frame(proto.TAG_INIT,
                                   make_init_payload(apertures, y, 2))
                  + proto.pack_frame(proto.TAG_BYE))
        r = run_worker(stream)
        assert r.returncode == 0
        got = frames(r.stdout)
        assert got == [(proto.TAG_RESP, proto.encode_init_ack())]

    def test_bye_after_steps_exit_zero(self, rng):
        apertures, cube, y = small_problem(16, 16, 2)
        x = rng.random(cube.shape)
        b = np.zeros_like(x)
        stream = (proto.pack_frame(proto.TAG_INIT,
                                   make_init_payload(apertures, y, 2))
                  + proto.pack_frame(proto.TAG_STEP,
                                     make_step_payload(1, x, b, 1))
                  + proto.pack_frame(proto.TAG_STEP,
                                     make_step_payload(2, x, b, 0))
                  + proto.pack_frame(proto.TAG_BYE))
        r = run_worker(stream)
        assert r.returncode == 0
        got = frames(r.stdout)
        assert [t for t, _ in got] == [proto.TAG_RESP] * 3
        rid, ly, lx = struct.unpack_from("<Qdd", got[1][1], 0)
        assert rid == 1
        f = proto.tensor_from_bytes(got[1][1], 24)
        assert f.shape == cube.shape

    def test_eof_without_bye_exit_zero(self):
        apertures, _, y = small_problem(16, 16, 2)
        stream = proto.pack_frame(proto.TAG_INIT,
                                  make_init_payload(apertures, y, 2))
        assert run_worker(stream).returncode == 0


class TestErrors:
    def test_step_before_init(self, rng):
        x = rng.random((16, 16, 2))
        stream = (proto.pack_frame(proto.TAG_STEP,
                                   make_step_payload(1, x, x, 0))
                  + proto.pack_frame(proto.TAG_BYE))
        r = run_worker(stream)
        assert r.returncode == 0
        assert frames(r.stdout)[0][0] == proto.TAG_ERR

    def test_version_mismatch(self):
        apertures, _, y = small_problem(16, 16, 2)
        stream = (proto.pack_frame(proto.TAG_INIT,
                                   make_init_payload(apertures, y, 2,
                                                     version=9))
                  + proto.pack_frame(proto.TAG_BYE))
        r = run_worker(stream)
        tag, payload = frames(r.stdout)[0]
        assert tag == proto.TAG_ERR
        assert b"version" in payload

    def test_unknown_tag(self):
        stream = proto.pack_frame(b"WHAT") + proto.pack_frame(proto.TAG_BYE)
        r = run_worker(stream)
        assert frames(r.stdout)[0][0] == proto.TAG_ERR

    def test_bad_flag_value(self):
        r = run_worker(b"", "--loss-form", "quadratic")
        assert r.returncode == 2  # argparse usage error


class TestDeterminism:
    def test_same_seed_same_response(self, rng):
        apertures, cube, y = small_problem(16, 16, 2)
        x = rng.random(cube.shape)
        stream = (proto.pack_frame(proto.TAG_INIT,
                                   make_init_payload(apertures, y, 2, seed=7))
                  + proto.pack_frame(proto.TAG_STEP,
                                     make_step_payload(1, x, np.zeros_like(x),
                                                       0))
                  + proto.pack_frame(proto.TAG_BYE))
        f1 = proto.tensor_from_bytes(frames(run_worker(stream).stdout)[1][1],
                                     24)
        f2 = proto.tensor_from_bytes(frames(run_worker(stream).stdout)[1][1],
                                     24)
        # same seed, no training: tolerate only parallel-reduction jitter
        assert np.max(np.abs(f1 - f2)) <= 1e-4 * max(np.max(np.abs(f2)), 1)
