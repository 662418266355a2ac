"""Schrodinger bridge drift estimation between sample-based distributions.

Affine reference processes with closed-form kernels, an entropic OT static
bridge, the training-free empirical drift, the exact Gaussian drift, a
simulation-free neural trainer and an Euler-Maruyama sampler.
"""

from .datasets import Dataset2D, gen_dataset
from .errors import (ConvergenceError, DimensionError, FormatError, NumericalError, SBError,
                     SingularHorizonError, TrainingError, ValidationError)
from .fields import DriftField
from .gaussian_sb import GaussianBridgeDrift, build_gaussian_drift, gaussian_drift
from .measures import GaussianMeasure
from .reference import (KernelMoments, ReferenceProcess, bridge_moments, build_reference,
                        conditional_score, custom_reference, kernel_moments, log_transition_density)
from .sfsb import (DriftNet, TrainConfig, TrainResult, load_model, network_gradient_check,
                   sample_training_batch, save_model, train)
from .sim_eval import (LeaveOneOutConfig, TrajectoryBatch, leave_one_out, simulate, wasserstein1,
                       wasserstein2)
from .static_ot import Coupling, exact_gaussian_coupling, sample_pairs, sinkhorn_eot
from .tfsb import EmpiricalDrift, build_tfsb, evaluate_drift, sfp_drift

__version__ = "0.1.0"
