"""Alternating-minimization reconstruction (Fama-SDIP) and its
sparsity-only special case.

Outer loop per iteration:

    Step 1  closed-form x-update via the elementwise Woodbury shortcut
            (Diag(H H^T) replaces the full Gram matrix; exact for K=1
            since distinct detector pixels never share a voxel)
    e-update   e += y - H x                    (add-residual-back)
    Step 2  denoiser session: f <- denoise(x, b); then b += f - x
    Step 3  theta = Psi^T x;
            c <- Soft((1-t')c + t'(theta + w), xi1/xi);  w += theta - c

In sparsity-only mode eta is treated as 0, Step 2 is skipped, and the
final x of a converged run doubles as a warm start for the full mode.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import denoiser as dn
from . import forward_model as fm
from . import metrics
from . import tensor_io
from .errors import DataError, ParameterError, ShapeError
from .sparse_basis import SparseBasis

MODES = ("fama-sdip", "sparsity-only")


@dataclass(frozen=True)
class SolverConfig:
    xi1: float = 10.0
    xi: float = 8.0
    eta: float = 10.0
    t_prime: float = 0.95
    outer_iters: int = 45
    inner_iters: int = 100
    mode: str = "fama-sdip"
    warm_start: bool = False
    early_stop: bool = False          # optional relative-change exit
    early_stop_tol: float = 1e-5

    def __post_init__(self):
        if self.xi1 < 0:
            raise ParameterError(f"xi1 must be >= 0, got {self.xi1}")
        if self.xi <= 0:
            raise ParameterError(f"xi must be > 0, got {self.xi}")
        if self.eta < 0:
            raise ParameterError(f"eta must be >= 0, got {self.eta}")
        if not 0 < self.t_prime <= 1:
            raise ParameterError(f"t_prime must be in (0,1], got {self.t_prime}")
        if self.outer_iters < 0:
            raise ParameterError("outer_iters must be >= 0")
        if self.inner_iters < 1:
            raise ParameterError("inner_iters must be >= 1")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def effective_eta(self) -> float:
        """eta as used by the updates: forced to 0 in sparsity-only mode."""
        return 0.0 if self.mode == "sparsity-only" else self.eta

    @property
    def threshold(self) -> float:
        return self.xi1 / self.xi


@dataclass
class SolverState:
    x: np.ndarray        # current estimate, cube-shaped
    e: np.ndarray        # measurement-shaped Bregman residual
    b: np.ndarray        # cube-shaped Bregman residual of the denoiser split
    f: np.ndarray        # latest denoiser output
    c: np.ndarray        # shrunk coefficients
    w: np.ndarray        # coefficient-domain Bregman residual
    theta: np.ndarray    # Psi^T x
    n: int = 0

    def check_finite(self, where: str):
        for name in ("x", "e", "b", "f", "c", "w", "theta"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DataError(f"non-finite {name} after {where} "
                                f"(iteration {self.n})")


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    data_residual: float
    l1_norm: float
    f_x_gap: float
    psnr: float | None = None
    ssim: float | None = None


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def write_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["iter", "objective", "data_residual", "l1_norm",
                         "f_x_gap", "psnr", "ssim"])
            for r in self.records:
                wr.writerow([r.iteration, r.objective, r.data_residual,
                             r.l1_norm, r.f_x_gap,
                             "" if r.psnr is None else r.psnr,
                             "" if r.ssim is None else r.ssim])


@dataclass
class RunResult:
    cube: np.ndarray       # final estimate clamped to [0, inf) for reporting
    raw: np.ndarray        # unclamped final iterate
    trace: IterationTrace
    state: SolverState


def soft(v, tau: float):
    """Soft-shrink: sgn(v) * max(|v| - tau, 0); complex inputs shrink in
    magnitude with the phase preserved (Soft(0) = 0)."""
    if tau < 0:
        raise ParameterError(f"shrink threshold must be >= 0, got {tau}")
    v = np.asarray(v)
    mag = np.abs(v)
    shrunk = np.maximum(mag - tau, 0.0)
    if np.iscomplexobj(v):
        with np.errstate(invalid="ignore", divide="ignore"):
            phase = np.where(mag > 0, v / np.where(mag > 0, mag, 1.0), 0.0)
        return phase * shrunk
    return np.sign(v) * shrunk


def init_state(op: fm.SensingOperator, basis: SparseBasis, y: np.ndarray,
               cfg: SolverConfig) -> SolverState:
    """x = f = H^T y; Bregman residuals zero; c starts at theta."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != op.meas_shape:
        raise ShapeError(f"measurement shape {y.shape} != operator {op.meas_shape}")
    if op.cube_shape != basis.shape:
        raise ShapeError(f"operator cube {op.cube_shape} != basis {basis.shape}")
    x0 = fm.apply_Ht(op, y)
    theta = basis.analyze(x0)
    return SolverState(
        x=x0, e=np.zeros(op.meas_shape), b=np.zeros(op.cube_shape),
        f=x0.copy(), c=theta.copy(), w=np.zeros_like(theta), theta=theta, n=0)


def step1_update_x(state: SolverState, op: fm.SensingOperator,
                   basis: SparseBasis, y: np.ndarray, cfg: SolverConfig,
                   diag: np.ndarray | None = None) -> np.ndarray:
    """Closed-form x-update; returns (and stores) the new x."""
    eta = cfg.effective_eta
    denom_scalar = eta + cfg.xi
    if denom_scalar == 0:
        raise ParameterError("eta + xi must be positive")
    sync = basis.synthesize(state.c - state.w)
    alpha = (eta * (state.f + state.b) + cfg.xi * sync) / denom_scalar
    if diag is None:
        diag = fm.diag_HHt(op)
    resid = (y - fm.apply_H(op, alpha) + state.e) / (diag + denom_scalar)
    state.x = alpha + fm.apply_Ht(op, resid)
    return state.x


def update_e(state: SolverState, op: fm.SensingOperator, y: np.ndarray) -> np.ndarray:
    state.e = state.e + (y - fm.apply_H(op, state.x))
    return state.e


def step2_denoise(state: SolverState, session: dn.DenoiserSession,
                  cfg: SolverConfig) -> np.ndarray:
    """f <- denoiser(x, b); then b += f - x. Returns the response's f."""
    resp = session.denoise(dn.DenoiseRequest(
        x=state.x, b=state.b, inner_iters=cfg.inner_iters, iteration=state.n))
    state.f = resp.f
    state.b = state.b + (state.f - state.x)
    return state.f


def step3_shrink(state: SolverState, basis: SparseBasis,
                 cfg: SolverConfig) -> np.ndarray:
    """Recompute theta from the fresh x, shrink c, then update w."""
    state.theta = basis.analyze(state.x)
    pre = (1.0 - cfg.t_prime) * state.c + cfg.t_prime * (state.theta + state.w)
    state.c = soft(pre, cfg.threshold)
    state.w = state.w + (state.theta - state.c)
    return state.c


def objective(state: SolverState, op: fm.SensingOperator, y: np.ndarray,
              cfg: SolverConfig) -> float:
    """Value of the full split objective at the current state."""
    eta = cfg.effective_eta
    val = 0.5 * np.sum((y - fm.apply_H(op, state.x) + state.e) ** 2)
    val += 0.5 * cfg.xi * np.sum(np.abs(state.c - state.theta - state.w) ** 2)
    val += cfg.xi1 * np.sum(np.abs(state.c))
    if eta > 0:
        val += 0.5 * np.sum((y - fm.apply_H(op, state.f)) ** 2)
        val += 0.5 * eta * np.sum((state.f - state.x + state.b) ** 2)
    return float(val)


def _record(state, op, y, cfg, ground_truth) -> IterationRecord:
    rec = IterationRecord(
        iteration=state.n,
        objective=objective(state, op, y, cfg),
        data_residual=float(np.linalg.norm(y - fm.apply_H(op, state.x))),
        l1_norm=float(np.sum(np.abs(state.theta))),
        f_x_gap=float(np.linalg.norm(state.f - state.x)))
    if ground_truth is not None:
        est = np.clip(state.x, 0.0, None)
        _, rec.psnr = metrics.psnr(ground_truth, est)
        try:
            _, rec.ssim = metrics.ssim_cube(ground_truth, est)
        except ParameterError:
            rec.ssim = None  # bands smaller than the SSIM window
    return rec


def run(op: fm.SensingOperator, basis: SparseBasis, y: np.ndarray,
        cfg: SolverConfig, session: dn.DenoiserSession | None = None,
        ground_truth=None) -> RunResult:
    """Full reconstruction loop; returns the clamped estimate and trace."""
    if isinstance(ground_truth, tensor_io.HyperCube):
        ground_truth = ground_truth.data
    use_dip = cfg.mode == "fama-sdip"
    if use_dip and session is None:
        raise ParameterError("fama-sdip mode requires a denoiser session")

    if cfg.warm_start and use_dip:
        warm_cfg = replace(cfg, mode="sparsity-only", warm_start=False,
                           early_stop=True)
        warm = run(op, basis, y, warm_cfg, ground_truth=ground_truth)
        state = warm.state
        state.f = state.x.copy()
        state.n = 0
    else:
        state = init_state(op, basis, y, cfg)

    diag = fm.diag_HHt(op)
    trace = IterationTrace()
    x_prev = state.x.copy()
    for _ in range(cfg.outer_iters):
        state.n += 1
        step1_update_x(state, op, basis, y, cfg, diag=diag)
        update_e(state, op, y)
        if use_dip:
            step2_denoise(state, session, cfg)
        step3_shrink(state, basis, cfg)
        state.check_finite("iteration")
        trace.records.append(_record(state, op, y, cfg, ground_truth))
        if cfg.early_stop:
            denom = np.linalg.norm(x_prev)
            if denom > 0 and np.linalg.norm(state.x - x_prev) / denom < cfg.early_stop_tol:
                break
        x_prev = state.x.copy()

    raw = np.real(state.x).astype(np.float64)
    return RunResult(cube=np.clip(raw, 0.0, None), raw=raw,
                     trace=trace, state=state)


# ---------------------------------------------------------------------------
# state snapshot / restore (resumable runs)
# ---------------------------------------------------------------------------

_STATE_FIELDS = ("x", "e", "b", "f", "c", "w", "theta")


def save_state(state: SolverState, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in _STATE_FIELDS:
        arr = getattr(state, name)
        if name == "e":  # measurement-shaped: snapshots into the plane slot
            tensor_io.write_tensor(out / f"{name}.bin", np.moveaxis(arr, 0, -1))
        else:
            tensor_io.write_tensor(out / f"{name}.bin", np.real(arr))
    (out / "meta.json").write_text(json.dumps({"n": state.n}))


def load_state(in_dir) -> SolverState:
    src = Path(in_dir)
    arrays = {}
    for name in _STATE_FIELDS:
        arr = tensor_io.read_tensor(src / f"{name}.bin")
        arrays[name] = np.moveaxis(arr, -1, 0) if name == "e" else arr
    meta = json.loads((src / "meta.json").read_text())
    return SolverState(n=meta["n"], **arrays)
