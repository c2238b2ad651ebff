from rtcascade.phantom.config import ConfigPhantom
from rtcascade.phantom.generator import distance_to_set, generate, reference_dose

__all__ = ["ConfigPhantom", "distance_to_set", "generate", "reference_dose"]
