from rtcascade.models.segmentation.config import ConfigSeg
from rtcascade.models.segmentation.seg_net import (
    SegOutput,
    forward,
    init_seg_net,
    predict_masks,
)

__all__ = ["ConfigSeg", "SegOutput", "forward", "init_seg_net", "predict_masks"]
