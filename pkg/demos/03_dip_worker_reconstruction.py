"""Full pipeline with the external deep-image-prior worker.

The solver's Step 2 asks a denoiser for a cleaned-up cube each outer
iteration.  Here that denoiser is the `dip-worker` process (install the
package under worker/), which trains a small U-net on the fly against the
measurement itself — no training data involved.  The same run in
sparsity-only mode gives the baseline the network has to beat.

Takes a few minutes on CPU.

Run:  python3 demos/03_dip_worker_reconstruction.py
"""

import shutil
import sys
import time

from cassikit import denoiser as dn
from cassikit import forward_model as fm
from cassikit import metrics, solver
from cassikit.solver import SolverConfig
from cassikit.sparse_basis import SparseBasis
from cassikit.tensor_io import generate_aperture, make_synthetic_cube

if shutil.which("dip-worker") is None:
    sys.exit("dip-worker is not installed; run "
             "`pip install -e worker/ --no-build-isolation` first")

M = N = 64
L = 8
cube = make_synthetic_cube(M, N, L, "gaussian-blobs", seed=123)
op = fm.SensingOperator(generate_aperture(M, N, 0.5, seed=124)[None], bands=L)
y = fm.simulate(op, cube, noise_sigma=0.0)
basis = SparseBasis(M, N, L)
budget = dict(outer_iters=15, inner_iters=50)

t0 = time.time()
res = solver.run(op, basis, y, SolverConfig(mode="sparsity-only", **budget))
_, psnr_sparse = metrics.psnr(cube, res.cube)
print(f"sparsity-only  ({budget['outer_iters']} iters): "
      f"{psnr_sparse:.2f} dB in {time.time() - t0:.0f}s")

t0 = time.time()
desc = dn.ProblemDescriptor(op.apertures, y, bands=L, seed=42)
with dn.open_session("external-worker", desc, worker_cmd="dip-worker") as s:
    res = solver.run(op, basis, y, SolverConfig(mode="fama-sdip", **budget),
                     session=s, ground_truth=cube)
_, psnr_dip = metrics.psnr(cube, res.cube)
print(f"with DIP worker (same budget): {psnr_dip:.2f} dB "
      f"in {time.time() - t0:.0f}s  ({psnr_dip - psnr_sparse:+.2f} dB)")
