"""
Run configuration for the command line tools.

A run file is an .ini document with one `[run]` section whose keys are dotted paths
into the configuration tree, e.g.

    [run]
    phantom.resolution = 16
    seg.encoder.embed_dim = 32
    train.loss.lambda2 = 0.0
    data_dir = "phantoms"

Keys that are not set keep the defaults of the packaged .ini files. Unknown keys are
rejected.
"""
import logging
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field

from rtcascade.core.config import build_config, read_config
from rtcascade.core.exc import ConfigurationError
from rtcascade.models.dose import ConfigDose
from rtcascade.models.segmentation import ConfigSeg
from rtcascade.phantom import ConfigPhantom
from rtcascade.training import ConfigTrain

logger = logging.getLogger(__name__)

RUN_SECTION = "run"


class ConfigRun(BaseModel):
    model_config = ConfigDict(extra="forbid")

    phantom: ConfigPhantom = Field(default_factory=ConfigPhantom)
    seg: ConfigSeg = Field(default_factory=ConfigSeg)
    dose: ConfigDose = Field(default_factory=ConfigDose)
    train: ConfigTrain = Field(default_factory=ConfigTrain)
    # default phantom directory for `train`
    data_dir: Optional[str] = None


def nest(flat: dict[str, Any]) -> dict[str, Any]:
    """Turn {"a.b.c": v} into {"a": {"b": {"c": v}}}."""
    tree: dict[str, Any] = {}
    for key in sorted(flat):
        node = tree
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigurationError(
                    f"Key '{key}' nests below '{part}', which holds a value"
                )
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise ConfigurationError(f"Key '{key}' also has nested keys")
        node[parts[-1]] = flat[key]
    return tree


def _with_encoder_defaults(section: dict[str, Any], defaults: BaseModel) -> None:
    """Complete a partial encoder override with the network's own encoder defaults."""
    given = section.get("encoder")
    if not isinstance(given, dict):
        return
    base = defaults.model_dump()
    # taps follow num_layers unless set explicitly
    base.pop("tap_layers", None)
    section["encoder"] = {**base, **given}


def build_run_config(flat: dict[str, Any]) -> ConfigRun:
    tree = nest(flat)
    if isinstance(tree.get("seg"), dict):
        _with_encoder_defaults(tree["seg"], ConfigSeg().encoder)
    if isinstance(tree.get("dose"), dict):
        _with_encoder_defaults(tree["dose"], ConfigDose().encoder)
    return build_config(ConfigRun, **tree)


def load_run_config(path: Optional[Path]) -> ConfigRun:
    """The run configuration in `path`, or all defaults when `path` is None."""
    if path is None:
        return build_config(ConfigRun)
    flat = read_config(str(path), RUN_SECTION)
    logger.info("Read %d run settings from %s", len(flat), path)
    return build_run_config(flat)
