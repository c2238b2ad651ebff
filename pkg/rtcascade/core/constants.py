"""
A module for keeping track of constants
"""

# Channel order of the segmentation output. Index 0 is background, indices 1-7 are the
# organs at risk in the order they are stacked in the dose-net input.
CLASS_NAMES = (
    "background",
    "brainstem",
    "spinal_cord",
    "right_parotid",
    "left_parotid",
    "esophagus",
    "larynx",
    "mandible",
)
OAR_NAMES = CLASS_NAMES[1:]
NUM_CLASSES = len(CLASS_NAMES)
NUM_OARS = len(OAR_NAMES)

# CT, seven OAR masks, PTV
DOSE_INPUT_CHANNELS = 1 + NUM_OARS + 1

# DVH criteria per ROI kind
OAR_CRITERIA = ("D0.1cc", "Dmean")
PTV_CRITERIA = ("D1%", "D95%", "D99%")

DEFAULT_PRESCRIPTIONS_GY = (70.0, 63.0, 56.0)

# 0.1 cc in cubic millimetres
POINT_ONE_CC_MM3 = 100.0

VOL1_MAGIC = b"VOL1\n"
CKPT1_MAGIC = b"CKPT1\n"
VOL1_KINDS = ("ct", "dose", "mask", "probs")
VOLUME_KINDS = ("ct", "masks", "ptv", "body", "dose")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

# finite-difference step and acceptance used throughout the gradient checks
GRADCHECK_STEP = 6e-6
GRADCHECK_TOL = 1e-4
GRADCHECK_FLOOR = 1e-8
