from rtcascade.models.dose.config import PYRAMID_LEVELS, ConfigDose, LossWeights
from rtcascade.models.dose.dose_net import (
    CascadeOutput,
    DosePyramid,
    assemble_dose_input,
    cascade_forward,
    forward,
    init_dose_net,
    oar_channels,
    predict_dose,
    stage1_forward,
)

__all__ = [
    "PYRAMID_LEVELS",
    "CascadeOutput",
    "ConfigDose",
    "DosePyramid",
    "LossWeights",
    "assemble_dose_input",
    "cascade_forward",
    "forward",
    "init_dose_net",
    "oar_channels",
    "predict_dose",
    "stage1_forward",
]
