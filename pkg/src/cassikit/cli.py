"""Batch command-line front end.

Every run writes a JSON manifest (all parameters and seeds) beside its
primary output, so any artifact is reproducible from its manifest alone.

Exit codes: 0 success, 2 parameter error, 3 data error, 4 worker error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import denoiser as dn
from . import forward_model as fm
from . import metrics
from . import solver
from . import tensor_io
from .errors import CassiError, ParameterError
from .sparse_basis import SparseBasis
from .tensor_io import Rect


def _parse_region(text: str) -> Rect:
    try:
        parts = [int(v) for v in text.split(",")]
        row0, col0, rows, cols = parts
    except ValueError:
        raise ParameterError(
            f"region must be 'row0,col0,rows,cols', got {text!r}") from None
    return Rect(row0, col0, rows, cols)


def _parse_labeled_region(text: str):
    label, _, rect = text.partition("=")
    if not rect:
        label, rect = text, text
    return label, _parse_region(rect)


def _write_manifest(out_path, args: argparse.Namespace):
    manifest = {k: v for k, v in vars(args).items() if k != "func"}
    manifest["cassikit_version"] = __version__
    p = Path(str(out_path) + ".manifest.json")
    p.write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def _load_operator(aperture_paths, bands: int, shift: int) -> fm.SensingOperator:
    masks = np.stack([tensor_io.load_aperture(p) for p in aperture_paths])
    return fm.SensingOperator(masks, shift=shift, bands=bands)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_make_aperture(args) -> int:
    mask = tensor_io.generate_aperture(args.rows, args.cols,
                                       args.transmittance, args.seed)
    tensor_io.save_aperture(mask, args.out)
    _write_manifest(args.out, args)
    return 0


def cmd_make_cube(args) -> int:
    cube = tensor_io.make_synthetic_cube(args.rows, args.cols, args.bands,
                                         args.kind, args.seed)
    tensor_io.save_cube(cube, args.out)
    _write_manifest(args.out, args)
    return 0


def cmd_simulate(args) -> int:
    cube = tensor_io.load_cube(args.cube)
    op = _load_operator(args.aperture, cube.bands, args.shift)
    y = fm.simulate(op, cube, args.noise_sigma, args.seed)
    tensor_io.save_measurement(y, args.out)
    _write_manifest(args.out, args)
    return 0


def cmd_reconstruct(args) -> int:
    y = tensor_io.load_measurement(args.measurement)
    op = _load_operator(args.aperture, args.bands, args.shift)
    basis = SparseBasis(op.rows, op.cols, op.bands,
                        levels=args.levels, spectral=args.spectral)
    cfg = solver.SolverConfig(
        xi1=args.xi1, xi=args.xi, eta=args.eta, t_prime=args.t_prime,
        outer_iters=args.outer_iters, inner_iters=args.inner_iters,
        mode=args.mode, warm_start=args.warm_start,
        early_stop=args.early_stop)
    ground_truth = tensor_io.load_cube(args.ground_truth) if args.ground_truth else None

    session = None
    if cfg.mode == "fama-sdip":
        problem = dn.ProblemDescriptor(op.apertures, y, bands=op.bands,
                                       shift=op.shift, eta=cfg.eta,
                                       seed=args.seed)
        session = dn.open_session(args.denoiser, problem,
                                  worker_cmd=args.worker_cmd)
    try:
        result = solver.run(op, basis, y, cfg, session=session,
                            ground_truth=ground_truth)
    finally:
        if session is not None:
            session.close()

    tensor_io.write_tensor(args.out, result.cube)
    if args.raw_out:
        tensor_io.write_tensor(args.raw_out, result.raw)
    if args.trace:
        result.trace.write_csv(args.trace)
    if args.save_state:
        solver.save_state(result.state, args.save_state)
    _write_manifest(args.out, args)
    return 0


def cmd_evaluate(args) -> int:
    ref = tensor_io.load_cube(args.ref)
    est = tensor_io.read_tensor(args.est)
    regions = dict(_parse_labeled_region(r) for r in args.region or [])
    report = metrics.evaluate(ref, est, regions)
    Path(args.out).write_text(report.to_json() + "\n")
    if args.csv:
        report.write_csv(args.csv)
    _write_manifest(args.out, args)
    return 0


def cmd_export(args) -> int:
    if args.what == "band-images":
        cube = tensor_io.load_cube(args.cube)
        tensor_io.export_band_images(cube, args.out)
    elif args.what == "spectrum":
        cube = tensor_io.load_cube(args.cube)
        tensor_io.export_spectrum_csv(cube, _parse_region(args.region), args.out)
    elif args.what == "explicit-h":
        op = _load_operator(args.aperture, args.bands, args.shift)
        fm.export_explicit_H_csv(op, args.out)
    else:  # unreachable: argparse restricts choices
        raise ParameterError(f"unknown export target {args.what!r}")
    _write_manifest(args.out, args)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cassikit",
        description="CASSI simulation and split-Bregman reconstruction")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-aperture", help="generate a Bernoulli coded aperture")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--transmittance", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_aperture)

    p = sub.add_parser("make-cube", help="generate a synthetic test scene")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--bands", type=int, required=True)
    p.add_argument("--kind", choices=tensor_io.SYNTHETIC_KINDS,
                   default="gaussian-blobs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_cube)

    p = sub.add_parser("simulate", help="simulate snapshot measurements")
    p.add_argument("--cube", required=True)
    p.add_argument("--aperture", action="append", required=True,
                   help="repeatable; one per snapshot")
    p.add_argument("--shift", type=int, default=1)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="reconstruct a cube from measurements")
    p.add_argument("--measurement", required=True)
    p.add_argument("--aperture", action="append", required=True)
    p.add_argument("--bands", type=int, required=True)
    p.add_argument("--shift", type=int, default=1)
    p.add_argument("--mode", choices=solver.MODES, default="fama-sdip")
    p.add_argument("--warm-start", action="store_true")
    p.add_argument("--xi1", type=float, default=10.0)
    p.add_argument("--xi", type=float, default=8.0)
    p.add_argument("--eta", type=float, default=10.0)
    p.add_argument("--t-prime", type=float, default=0.95)
    p.add_argument("--outer-iters", type=int, default=45)
    p.add_argument("--inner-iters", type=int, default=100)
    p.add_argument("--early-stop", action="store_true")
    p.add_argument("--levels", type=int, default=None,
                   help="wavelet levels (default: up to 3, as dims allow)")
    p.add_argument("--spectral", choices=("dct", "dft"), default="dct")
    p.add_argument("--denoiser", choices=dn.SESSION_KINDS,
                   default="external-worker")
    p.add_argument("--worker-cmd", default="dip-worker")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ground-truth", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--raw-out", default=None, help="unclamped iterate")
    p.add_argument("--trace", default=None, help="per-iteration CSV")
    p.add_argument("--save-state", default=None, help="state snapshot dir")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="PSNR/SSIM/spectral-correlation report")
    p.add_argument("--ref", required=True)
    p.add_argument("--est", required=True)
    p.add_argument("--region", action="append",
                   help="label=row0,col0,rows,cols; repeatable")
    p.add_argument("--out", required=True, help="JSON report path")
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", help="human-viewable exports")
    p.add_argument("what", choices=("band-images", "spectrum", "explicit-h"))
    p.add_argument("--cube", default=None)
    p.add_argument("--region", default=None, help="row0,col0,rows,cols")
    p.add_argument("--aperture", action="append")
    p.add_argument("--bands", type=int, default=None)
    p.add_argument("--shift", type=int, default=1)
    p.add_argument("--out", required=True, help="file or directory")
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CassiError as exc:
        kind = type(exc).__name__
        print(f"error: {kind}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: IOError: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
