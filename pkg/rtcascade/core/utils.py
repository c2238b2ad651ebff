"""
Utilities (miscellaneous routines) module
"""
import hashlib
import json
import logging
import sys
from typing import Any

import coloredlogs
import numpy as np


def setup_logging(level: str = "INFO") -> None:
    """Install coloured console logging for command line entry points."""
    logging.basicConfig(stream=sys.stdout, level=level)
    field_styles = dict(coloredlogs.DEFAULT_FIELD_STYLES)
    # change the default levelname color from black to yellow
    field_styles["levelname"] = {"color": "yellow"}
    coloredlogs.install(level=level, field_styles=field_styles)


def make_rng(*keys: int) -> np.random.Generator:
    """A numpy Generator that is a pure function of the integer `keys`."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def fingerprint(document: Any) -> str:
    """sha256 of the canonical JSON encoding of `document`."""
    encoded = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(encoded.encode("utf-8")).hexdigest()
