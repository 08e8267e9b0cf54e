"""Neck-centred, shoulder-scaled pose normalization and articulator splitting."""

import numpy as np

from ..errors import DegenerateFrameError, PoseFormatError
from .models import JOINT_ORDER, NECK_JOINT, SHOULDER_JOINTS, Articulator, ArticulatorPartition, PoseSequence

MIN_SHOULDER_WIDTH = 1e-8


def shoulder_widths(frames: np.ndarray) -> np.ndarray:
    """Per-frame Euclidean distance between the two shoulder joints."""
    left, right = SHOULDER_JOINTS
    return np.linalg.norm(frames[:, left, :] - frames[:, right, :], axis=-1)


def normalize_frames(frames: np.ndarray) -> np.ndarray:
    """Translate every frame so the neck is at the origin and divide by its shoulder width.

    Rotation is left untouched.
    """
    widths = shoulder_widths(frames)
    bad = np.flatnonzero(~(widths >= MIN_SHOULDER_WIDTH))
    if bad.size:
        raise DegenerateFrameError(int(bad[0]), float(widths[bad[0]]))
    centered = frames - frames[:, NECK_JOINT : NECK_JOINT + 1, :]
    return centered / widths[:, None, None]


def normalize_pose(pose: PoseSequence) -> PoseSequence:
    """Return a neck-centred, unit-shoulder-width copy of ``pose``."""
    return PoseSequence(normalize_frames(pose.frames), partition=pose.partition)


def split_articulators(pose: PoseSequence) -> dict[Articulator, np.ndarray]:
    """Split a pose into per-region (T, J_a, 3) arrays, in joint order."""
    return {articulator: pose.region(articulator).copy() for articulator in JOINT_ORDER}


def concat_articulators(regions: dict[Articulator, np.ndarray], partition: ArticulatorPartition | None = None) -> PoseSequence:
    """Inverse of ``split_articulators``."""
    missing = [a for a in JOINT_ORDER if a not in regions]
    if missing:
        raise PoseFormatError(f"missing articulator blocks: {[a.value for a in missing]}")
    frames = np.concatenate([regions[a] for a in JOINT_ORDER], axis=1)
    return PoseSequence(frames) if partition is None else PoseSequence(frames, partition=partition)
