"""pun Test Constants."""

__author__ = "pun-mri Contributors"
__copyright__ = "Copyright 2026 pun-mri Contributors"
__license__ = "Apache License, Version 2.0"


# default 3-layer, 16-channel, 3x3 denoiser
DEFAULT_D = 2914

ADJOINT_TOL = 1e-10
SOS_TOL = 1e-10
FD_STEP = 1e-6

# 0.8 * ln(9)
KL_ORACLE = 1.757780
KL_ORACLE_TOL = 1e-5
SIGMOID_ONE = 0.731059

PUN_AT_MILESTONES = (0.473, 0.224, 0.106, 0.05)
PUN_WT_EVENTS_60 = ((10, 0.5), (20, 0.5), (30, 0.5), (40, 0.5), (48, 0.8))

# tiny instances keep the fast suite fast
TINY_SIZE = 8
TINY_COILS = 2
TINY_ACCEL = 2.0
TINY_ACS = 2
TINY_SAMPLES = 4
TINY_LAYERS = 2
TINY_CHANNELS = 4
# d of the tiny denoiser: (2*4*9 + 4) + (4*2*9 + 2)
TINY_D = 150

TINY_FLAGS = [
    "--unrolls", "2",
    "--layers", str(TINY_LAYERS),
    "--channels", str(TINY_CHANNELS),
    "--cg-max-iter", "30",
]
