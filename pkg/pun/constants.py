"""pun Module Constants."""

import logging
import math
import os

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


if bool(os.environ.get("DEBUG")):
    LOG_LEVEL = logging.DEBUG
    logging.debug("Debugging Enabled via DEBUG Environment Variable.")
else:
    LOG_LEVEL = logging.INFO

LOG_FORMAT = logging.Formatter(
    "%(asctime)s pun %(levelname)s %(name)s.%(funcName)s:%(lineno)d - %(message)s",
)

# Forward model
ACS_WIDTH = 4
# dart throwing gives up after this many rejections per phase-encode column
MASK_STALL_FACTOR = 10
MASK_BISECTION_STEPS = 40
NOISE_SIGMA = 0.0
SHIFT_NOISE_SIGMA = 0.05

# Synthetic data (desk-scale stand-in for the fastMRI split)
IMAGE_SIZE = 32
NUM_COILS = 4
ACCELERATION = 4.0
SHIFT_ACCELERATION = 8.0
SPLIT_SIZES = {"train": 64, "val": 8, "test": 16}
SPLIT_SEED_OFFSETS = {"train": 0, "val": 100_000, "test": 200_000}
BASE_SEED = 0
PHASE_LIMIT = math.pi / 4

# Data consistency
DC_LAMBDA = 1.0
CG_TOL = 1e-6
CG_MAX_ITER = 50
NUM_UNROLLS = 8

# Denoiser
NUM_LAYERS = 3
HIDDEN_CHANNELS = 16
KERNEL_SIZE = 3
IMAGE_CHANNELS = 2  # real, imag

# Adam
LEARNING_RATE = 1e-4
BETA1 = 0.5
BETA2 = 0.999
EPSILON = 1e-8
BATCH_SIZE = 2
EPOCHS = 30

# Pruning
PUN_IT_SPARSITY = 0.03
PUN_WT_SPARSITY = 0.05
PUN_AT_SPARSITY = 0.05
TEMPERATURE = 0.2
KL_WEIGHT = 1.0
MASK_EPOCHS = 20
MASK_LEARNING_RATE = 1e-2
PUN_AT_ROUNDS = 4
PUN_AT_RETRAIN_EPOCHS = 10
# PUN-WT halvings happen inside this leading fraction of the epochs
PUN_WT_WINDOW = 0.8
PRUNE_FRACTION = 0.5

# Artifacts
CONTAINER_SUFFIX = ".tensor"
BYTE_ORDER = "little"
MANIFEST_NAME = "manifest.json"
TIMING_NAME = "timing.json"
REPORT_NAME = "report.csv"
PSNR_CONVENTION = "magnitude images; peak = max |reference| per image"
COMPLEX_CONVENTION = "denoiser sees complex images as 2 real channels (real, imag)"
SCALE_CONVENTION = "k-space divided by max(|Re|, |Im|) per sample; target = x / scale"
SHIFTED_FAMILY_NOTE = "synthetic analogue of an anatomical distribution shift"

# Exit codes
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FAILURE = 3
