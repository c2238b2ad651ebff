"""Configuration module for unit tests."""
import numpy as np
import pytest

from rtcascade.core.constants import NUM_OARS
from rtcascade.core.structure import SpacingGrid, Subject
from rtcascade.models.suites import TOY_RESOLUTION, toy_dose_config, toy_seg_config
from rtcascade.phantom import ConfigPhantom, generate

# phantoms small enough for the toy networks
SMALL_PHANTOM = {"resolution": TOY_RESOLUTION, "seed": 3}


def blocky_subject(index: int = 0, shape: int = TOY_RESOLUTION) -> Subject:
    """A hand-made subject of axis-aligned boxes, independent of the phantom code."""
    rng = np.random.default_rng(index)
    n = shape
    body = np.zeros((n, n, n), dtype=bool)
    body[1:-1, 1:-1, 1:-1] = True
    oars = np.zeros((NUM_OARS, n, n, n), dtype=bool)
    for i in range(NUM_OARS):
        z = 2 + (i % 4) * 3
        y = 2 + (i // 4) * 6
        oars[i, z : z + 2, y : y + 3, 3:6] = True
    ptv = np.zeros((n, n, n), dtype=bool)
    ptv[5:9, 5:9, 8:12] = True
    ct = np.where(body, 0.4, 0.0) + 0.1 * oars.sum(axis=0) + 0.05 * ptv
    ct = ct + rng.normal(0.0, 0.01, ct.shape)
    dose = np.where(body, 20.0, 0.0)
    dose[ptv] = 70.0
    return Subject(
        ct=ct[None].astype(np.float32),
        oar_masks=oars,
        ptv=ptv,
        body=body,
        dose=dose[None].astype(np.float32),
        spacing=SpacingGrid((2.0, 2.0, 2.0)),
        prescription=70.0,
        index=index,
    )


@pytest.fixture
def small_phantom_config() -> ConfigPhantom:
    return ConfigPhantom(**SMALL_PHANTOM)


@pytest.fixture
def phantom_subject(small_phantom_config: ConfigPhantom) -> Subject:
    return generate(small_phantom_config, 0)


@pytest.fixture
def toy_subjects() -> list[Subject]:
    return [blocky_subject(0), blocky_subject(1)]


@pytest.fixture
def seg_config():  # noqa: ANN201
    return toy_seg_config()


@pytest.fixture
def dose_config():  # noqa: ANN201
    return toy_dose_config()
