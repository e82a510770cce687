"""Denoising session: persistent network, fixed input, warm-continue."""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from dipworker.forward import apply_H, apply_H_torch
from dipworker.network import DEFAULT_WIDTHS, DipNetwork, pad_to_multiple
from dipworker.protocol import InitMessage

Z_SCALE = 0.1  # amplitude of the fixed uniform-noise input


@dataclass(frozen=True)
class WorkerConfig:
    device: str = "cpu"
    loss_form: str = "with-b"     # "with-b": |f-(x-b)|; "prose": |f-x|
    reduction: str = "mean"       # "mean" or "sum" over elements
    warm_tol: float = 0.10        # relative Loss_y deviation that triggers
    warm_max_iters: int = 200     # cap on pre-optimization steps
    lr: float = 0.002
    betas: tuple = (0.9, 0.999)
    weight_decay: float = 1e-4
    widths: tuple = DEFAULT_WIDTHS

    def __post_init__(self):
        if self.loss_form not in ("with-b", "prose"):
            raise ValueError(f"unknown loss form {self.loss_form!r}")
        if self.reduction not in ("mean", "sum"):
            raise ValueError(f"unknown reduction {self.reduction!r}")
        if self.warm_tol <= 0:
            raise ValueError("warm-continue tolerance must be positive")


class WorkerSession:
    """One INIT-to-BYE lifetime: network and z live for the whole session."""

    def __init__(self, init: InitMessage, config: WorkerConfig | None = None):
        self.config = config or WorkerConfig()
        self.dims = init.dims
        M, N, L, K, s = init.dims
        self.shift = s
        self.apertures_np = init.apertures
        self.y_np = init.y
        self.device = torch.device(self.config.device)
        self.pad = pad_to_multiple(M, N)

        torch.manual_seed(init.seed)
        self.net = DipNetwork(L, self.config.widths).to(self.device)
        top, bottom, left, right = self.pad
        self.z = (Z_SCALE * torch.rand(1, L, M + top + bottom,
                                       N + left + right)).to(self.device)
        # copies: decoded arrays may be read-only views into the frame buffer
        self.apertures = torch.tensor(init.apertures, dtype=torch.float32,
                                      device=self.device)
        self.y = torch.tensor(init.y, dtype=torch.float32,
                              device=self.device)
        self.optimizer = torch.optim.Adam(
            self.net.parameters(), lr=self.config.lr,
            betas=self.config.betas, weight_decay=self.config.weight_decay)
        self.net.train()
        self.prev_end_loss_y = None

    # -- forward -----------------------------------------------------------

    def _reduce(self, t: torch.Tensor) -> torch.Tensor:
        return t.mean() if self.config.reduction == "mean" else t.sum()

    def current_f(self) -> torch.Tensor:
        """Network output cropped back to (L, M, N)."""
        M, N = self.dims[0], self.dims[1]
        top, _, left, _ = self.pad
        out = self.net(self.z)[0]
        return out[:, top:top + M, left:left + N]

    def _loss_y(self, f: torch.Tensor) -> torch.Tensor:
        return self._reduce(torch.abs(
            self.y - apply_H_torch(self.apertures, f, self.shift)))

    def _loss_x(self, f, x, b) -> torch.Tensor:
        target = x - b if self.config.loss_form == "with-b" else x
        return self._reduce(torch.abs(f - target))

    # -- training ----------------------------------------------------------

    def _warm_continue(self):
        """Safeguard: if the fidelity term dragged the output off the
        measurements, re-optimize on Loss_y alone until it is back within
        tolerance of the previous step's end value.  Fires only when Loss_y
        got *worse*; an improvement needs no correction."""
        prev = self.prev_end_loss_y
        bound = prev * (1.0 + self.config.warm_tol)
        for _ in range(self.config.warm_max_iters):
            with torch.no_grad():
                ly = float(self._loss_y(self.current_f()))
            if ly <= bound:
                return
            self.optimizer.zero_grad()
            self._loss_y(self.current_f()).backward()
            self.optimizer.step()

    def step(self, x: np.ndarray, b: np.ndarray, inner_iters: int):
        """Run the inner optimization; returns (f, loss_y, loss_x) with the
        losses recomputed in float64 from the returned f."""
        M, N, L, K, s = self.dims
        if x.shape != (M, N, L):
            raise ValueError(f"request shape {x.shape} != {(M, N, L)}")
        xt = torch.as_tensor(np.transpose(x, (2, 0, 1)), dtype=torch.float32,
                             device=self.device)
        bt = torch.as_tensor(np.transpose(b, (2, 0, 1)), dtype=torch.float32,
                             device=self.device)
        if inner_iters > 0:
            for _ in range(inner_iters):
                self.optimizer.zero_grad()
                f = self.current_f()
                loss = self._loss_y(f) + self._loss_x(f, xt, bt)
                if not torch.isfinite(loss):
                    raise FloatingPointError("non-finite training loss")
                loss.backward()
                self.optimizer.step()
            if self.prev_end_loss_y is not None:
                self._warm_continue()
        with torch.no_grad():
            f = self.current_f().double().cpu().numpy()
        f = np.ascontiguousarray(np.transpose(f, (1, 2, 0)))
        loss_y, loss_x = self.report_losses(f, x, b)
        self.prev_end_loss_y = loss_y
        return f, loss_y, loss_x

    # -- reporting ---------------------------------------------------------

    def report_losses(self, f: np.ndarray, x: np.ndarray, b: np.ndarray):
        """Float64 losses, reproducible by the client from the RESP fields."""
        red = np.mean if self.config.reduction == "mean" else np.sum
        loss_y = float(red(np.abs(
            self.y_np - apply_H(self.apertures_np, f, self.shift))))
        target = x - b if self.config.loss_form == "with-b" else x
        loss_x = float(red(np.abs(f - target)))
        return loss_y, loss_x
