"""Protocol loop entry point: frames on stdin, frames on stdout."""

import argparse
import struct
import sys

from dipworker import protocol as proto
from dipworker.session import WorkerConfig, WorkerSession


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dip-worker",
        description="deep-image-prior denoiser speaking the framed "
                    "stdin/stdout protocol")
    p.add_argument("--device", default="cpu",
                   help="torch device for the network (default: cpu)")
    p.add_argument("--loss-form", choices=("with-b", "prose"),
                   default="with-b",
                   help="fidelity target: |f-(x-b)| (default) or |f-x|")
    p.add_argument("--reduction", choices=("mean", "sum"), default="mean",
                   help="loss reduction over elements (default: mean)")
    p.add_argument("--warm-tol", type=float, default=0.10,
                   help="relative Loss_y deviation that triggers the "
                        "warm-continue pre-optimization (default: 0.10)")
    p.add_argument("--warm-max-iters", type=int, default=200,
                   help="cap on warm-continue pre-optimization steps")
    return p


def serve(config: WorkerConfig, stdin, stdout) -> int:
    session = None
    while True:
        frame = proto.read_frame(stdin)
        if frame is None:
            return 0
        tag, payload = frame
        if tag == proto.TAG_BYE:
            return 0
        try:
            if tag == proto.TAG_INIT:
                init = proto.decode_init(payload)
                if init.version != proto.PROTOCOL_VERSION:
                    raise proto.ProtocolError(
                        f"unsupported protocol version {init.version}")
                session = WorkerSession(init, config)
                reply = proto.pack_frame(
                    proto.TAG_RESP, proto.encode_init_ack())
            elif tag == proto.TAG_STEP:
                if session is None:
                    raise proto.ProtocolError("STEP before INIT")
                request_id, _, inner, x, b = proto.decode_step(payload)
                f, loss_y, loss_x = session.step(x, b, inner)
                reply = proto.pack_frame(
                    proto.TAG_RESP,
                    proto.encode_step_resp(request_id, loss_y, loss_x, f))
            else:
                raise proto.ProtocolError(f"unknown frame tag {tag!r}")
        except (proto.ProtocolError, ValueError,
                FloatingPointError, struct.error) as exc:
            reply = proto.pack_frame(proto.TAG_ERR, str(exc).encode())
        try:
            stdout.write(reply)
            stdout.flush()
        except BrokenPipeError:
            print("dip-worker: client pipe closed", file=sys.stderr)
            return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = WorkerConfig(device=args.device, loss_form=args.loss_form,
                          reduction=args.reduction, warm_tol=args.warm_tol,
                          warm_max_iters=args.warm_max_iters)
    try:
        return serve(config, sys.stdin.buffer, sys.stdout.buffer)
    except proto.ProtocolError as exc:
        print(f"dip-worker: protocol error: {exc}", file=sys.stderr)
        return 3
    except BrokenPipeError:
        print("dip-worker: client pipe closed", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
