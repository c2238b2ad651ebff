"""
Subject directories: one VOL1 file per subject and volume kind plus a manifest.csv.
"""
import logging
import re
from pathlib import Path

import numpy as np
import pandas as pd

from rtcascade.cli.vol1 import Volume, mask_volume, read_volume, write_volume
from rtcascade.core.constants import NUM_OARS, OAR_NAMES, VOLUME_KINDS
from rtcascade.core.exc import FormatError
from rtcascade.core.structure import Subject, ptv_name

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"
MANIFEST_COLUMNS = ["index", "seed", "prescription", "anchor"]
_FILE_PATTERN = re.compile(r"^subject_(\d+)_([a-z]+)\.vol1$")


def subject_path(directory: Path, index: int, kind: str) -> Path:
    return Path(directory) / f"subject_{index}_{kind}.vol1"


def subject_volumes(subject: Subject) -> dict[str, Volume]:
    """The five volumes of a subject, keyed by kind."""
    spacing = subject.spacing
    return {
        "ct": Volume(subject.ct.astype(np.float32), spacing, "ct", ["ct"]),
        "masks": mask_volume(subject.oar_masks, spacing, OAR_NAMES),
        "ptv": mask_volume(
            subject.ptv[None], spacing, [ptv_name(subject.prescription)]
        ),
        "body": mask_volume(subject.body[None], spacing, ["body"]),
        "dose": Volume(subject.dose.astype(np.float32), spacing, "dose", ["dose"]),
    }


def write_subjects(directory: Path, subjects: list[Subject]) -> pd.DataFrame:
    """Write every subject and the manifest; returns the manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for subject in subjects:
        for kind, volume in subject_volumes(subject).items():
            write_volume(subject_path(directory, subject.index, kind), volume)
        rows.append(
            {
                "index": subject.index,
                "seed": subject.seed,
                "prescription": subject.prescription,
                "anchor": subject.extras.get("anchor", ""),
            }
        )
    manifest = pd.DataFrame(rows, columns=MANIFEST_COLUMNS)
    manifest.to_csv(directory / MANIFEST_NAME, index=False)
    logger.info("Wrote %d subjects to %s", len(subjects), directory)
    return manifest


def read_manifest(directory: Path) -> pd.DataFrame:
    path = Path(directory) / MANIFEST_NAME
    try:
        manifest = pd.read_csv(path, keep_default_na=False)
    except (OSError, pd.errors.ParserError) as e:
        raise FormatError(f"Cannot read subject manifest {path}: {e}") from e
    missing = sorted(set(MANIFEST_COLUMNS) - set(manifest.columns))
    if missing:
        raise FormatError(f"{path} lacks the columns {', '.join(missing)}")
    return manifest


def indices_with(directory: Path, kind: str) -> list[int]:
    """Subject indices that have a `kind` volume in `directory`, ascending."""
    found = []
    for path in Path(directory).iterdir():
        match = _FILE_PATTERN.match(path.name)
        if match and match.group(2) == kind:
            found.append(int(match.group(1)))
    return sorted(found)


def prescription_of(volume: Volume) -> float:
    """The prescription encoded in a PTV volume's channel name, e.g. PTV63 -> 63."""
    names = volume.names or []
    match = re.fullmatch(r"PTV(\d+)", names[0]) if names else None
    if match is None:
        raise FormatError(f"PTV volume channel name {names} does not name a dose")
    return float(match.group(1))


def read_subject(directory: Path, index: int) -> Subject:
    volumes = {
        kind: read_volume(subject_path(directory, index, kind)) for kind in VOLUME_KINDS
    }
    shapes = {kind: volume.shape for kind, volume in volumes.items()}
    if len(set(shapes.values())) != 1:
        raise FormatError(f"Volumes of subject {index} disagree in shape: {shapes}")
    if volumes["masks"].data.shape[0] != NUM_OARS:
        raise FormatError(
            f"Subject {index} has {volumes['masks'].data.shape[0]} OAR masks, "
            f"expected {NUM_OARS}"
        )
    return Subject(
        ct=volumes["ct"].data,
        oar_masks=volumes["masks"].data.astype(bool),
        ptv=volumes["ptv"].data[0].astype(bool),
        body=volumes["body"].data[0].astype(bool),
        dose=volumes["dose"].data,
        spacing=volumes["ct"].spacing,
        prescription=prescription_of(volumes["ptv"]),
        index=index,
    )


def load_subjects(directory: Path) -> list[Subject]:
    """Every subject listed in the manifest of `directory`, in manifest order."""
    manifest = read_manifest(directory)
    subjects = []
    for row in manifest.to_dict("records"):
        subject = read_subject(directory, int(row["index"]))
        subject.seed = int(row["seed"])
        subject.prescription = float(row["prescription"])
        subject.extras["anchor"] = row["anchor"]
        subjects.append(subject)
    logger.info("Loaded %d subjects from %s", len(subjects), directory)
    return subjects
