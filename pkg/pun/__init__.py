"""
Pruning Unrolled Networks for accelerated MRI.
~~~~

Simulated multi-coil Cartesian acquisitions, a MoDL unrolled reconstructor
with conjugate-gradient data consistency, and three ways to prune its
denoiser: at initialization (PUN-IT), while training (PUN-WT) and after
training (PUN-AT).

:copyright: Copyright 2026 pun-mri Contributors
:license: Apache License, Version 2.0
"""
from importlib_metadata import PackageNotFoundError, version

from .cg import CgResult, DcConfig, conjugate_gradient, dc_gradient, solve_dc
from .container import Checkpoint, TensorContainer, load_dataset, save_dataset
from .denoiser import DenoiserArch, DenoiserParams, init_params
from .exceptions import (
    ContainerError,
    DimensionError,
    NonFiniteError,
    PunError,
    ValidationError,
)
from .forward_model import (
    ForwardOperator,
    SamplingMask,
    SensitivityMaps,
    apply_adjoint,
    apply_forward,
    generate_mask,
)
from .masks import BinaryMask, magnitude_prune, pun_wt_schedule
from .metrics import EvalResult, psnr, summarize
from .phantom import DatasetConfig, SampleRecord, build_dataset, generate_phantom
from .pruning import (
    PruneConfig,
    PruneState,
    binarize_top_s,
    kl_bernoulli,
    optimize_probabilities,
    pun_at,
    pun_it,
    sample_relaxed_mask,
)
from .training import OptimizerConfig, TrainReport, train
from .unrolled import UnrollConfig, loss_and_grad, reconstruct

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"
__distribution__ = "pun-mri"
try:
    __version__ = version(__distribution__)
except PackageNotFoundError:  # running from a source checkout
    __version__ = "0.0.0"
__all__ = [
    "BinaryMask",
    "CgResult",
    "Checkpoint",
    "ContainerError",
    "DatasetConfig",
    "DcConfig",
    "DenoiserArch",
    "DenoiserParams",
    "DimensionError",
    "EvalResult",
    "ForwardOperator",
    "NonFiniteError",
    "OptimizerConfig",
    "PruneConfig",
    "PruneState",
    "PunError",
    "SampleRecord",
    "SamplingMask",
    "SensitivityMaps",
    "TensorContainer",
    "TrainReport",
    "UnrollConfig",
    "ValidationError",
    "apply_adjoint",
    "apply_forward",
    "binarize_top_s",
    "build_dataset",
    "conjugate_gradient",
    "dc_gradient",
    "generate_mask",
    "generate_phantom",
    "init_params",
    "kl_bernoulli",
    "load_dataset",
    "loss_and_grad",
    "magnitude_prune",
    "optimize_probabilities",
    "psnr",
    "pun_at",
    "pun_it",
    "pun_wt_schedule",
    "reconstruct",
    "sample_relaxed_mask",
    "save_dataset",
    "solve_dc",
    "summarize",
    "train",
]
