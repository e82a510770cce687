"""Protocol-conformance test worker (`python -m cassikit.testworker`).

Implements the framed stdin/stdout denoiser protocol with deterministic,
non-learned behavior: every STEP returns f = x - b and recomputes both
losses with the local forward model.  Used by the protocol tests and the
golden-transcript fixture; also handy for exercising the external-worker
transport without any heavyweight dependency.

Flags:
    --version N   report protocol version N in the INIT ack (negative test)
"""

from __future__ import annotations

import struct
import sys

import numpy as np

from . import forward_model as fm
from .denoiser import (TAG_BYE, TAG_ERR, TAG_INIT, TAG_RESP, TAG_STEP,
                       DenoiseResponse, decode_init, decode_step,
                       encode_init_ack, encode_step_resp, pack_frame)


def _read_exact(stream, n: int) -> bytes | None:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def serve(stdin, stdout, ack_version: int) -> int:
    problem = None
    op = None
    while True:
        head = _read_exact(stdin, 12)
        if head is None:
            return 1  # broken pipe before BYE
        tag = head[:4]
        (n,) = struct.unpack("<Q", head[4:])
        payload = _read_exact(stdin, n) if n else b""
        if payload is None and n:
            return 1

        if tag == TAG_BYE:
            return 0
        if tag == TAG_INIT:
            _, problem = decode_init(payload)
            op = fm.SensingOperator(problem.apertures, shift=problem.shift,
                                    bands=problem.bands)
            stdout.write(pack_frame(TAG_RESP, encode_init_ack(ack_version)))
            stdout.flush()
        elif tag == TAG_STEP:
            if problem is None:
                stdout.write(pack_frame(TAG_ERR, b"STEP before INIT"))
                stdout.flush()
                continue
            request_id, req = decode_step(payload)
            f = req.x - req.b
            loss_y = float(np.mean(np.abs(problem.y - fm.apply_H(op, f))))
            loss_x = float(np.mean(np.abs(f - req.x + req.b)))
            resp = DenoiseResponse(f=f, loss_y=loss_y, loss_x=loss_x)
            stdout.write(pack_frame(TAG_RESP, encode_step_resp(request_id, resp)))
            stdout.flush()
        else:
            stdout.write(pack_frame(TAG_ERR, b"unknown frame tag " + tag))
            stdout.flush()


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    ack_version = 1
    if "--version" in argv:
        ack_version = int(argv[argv.index("--version") + 1])
    return serve(sys.stdin.buffer, sys.stdout.buffer, ack_version)


if __name__ == "__main__":
    sys.exit(main())
