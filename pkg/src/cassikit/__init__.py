"""cassikit: CASSI simulation and split-Bregman hyperspectral reconstruction."""

from .errors import (CassiError, DataError, FormatError, ParameterError,
                     ShapeError, SizeError, WorkerError)
from .forward_model import (SensingOperator, apply_H, apply_Ht,
                            build_explicit_H, diag_HHt, simulate)
from .metrics import QualityReport, evaluate, psnr, spectral_correlation, ssim
from .sparse_basis import SparseBasis
from .solver import (IterationTrace, RunResult, SolverConfig, SolverState,
                     init_state, run, soft)
from .denoiser import (DenoiseRequest, DenoiseResponse, DenoiserSession,
                       ProblemDescriptor, close_session, open_session)
from .tensor_io import (HyperCube, Rect, export_band_images,
                        export_spectrum_csv, generate_aperture, load_aperture,
                        load_cube, load_measurement, make_synthetic_cube,
                        read_tensor, save_aperture, save_cube,
                        save_measurement, write_tensor)

__version__ = "0.1.0"
