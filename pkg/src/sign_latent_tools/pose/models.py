"""Data models for articulated pose sequences and the synthetic corpus."""

from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np

from ..errors import PoseFormatError

NUM_JOINTS = 178
COORDS = 3
TEXT_EMBEDDING_DIM = 768

NECK_JOINT = 0
SHOULDER_JOINTS = (1, 2)


class Articulator(StrEnum):
    """Anatomical regions, each with its own joint block and latent subspace."""

    BODY = "body"
    RIGHT_HAND = "rh"
    LEFT_HAND = "lh"
    FACE = "face"


# Joint order inside a 178-joint frame.
JOINT_ORDER = (Articulator.BODY, Articulator.LEFT_HAND, Articulator.RIGHT_HAND, Articulator.FACE)
# Concatenation order of the regional latents inside an 80-dim latent frame.
LATENT_ORDER = (Articulator.BODY, Articulator.RIGHT_HAND, Articulator.LEFT_HAND, Articulator.FACE)
HAND_ARTICULATORS = (Articulator.RIGHT_HAND, Articulator.LEFT_HAND)


@dataclass(frozen=True)
class ArticulatorPartition:
    """Contiguous joint ranges for each articulator.

    Canonical layout: body [0, 8), left hand [8, 29), right hand [29, 50),
    face [50, 178). Body joint 0 is the neck, joints 1 and 2 the shoulders.
    """

    body: tuple[int, int] = (0, 8)
    left_hand: tuple[int, int] = (8, 29)
    right_hand: tuple[int, int] = (29, 50)
    face: tuple[int, int] = (50, 178)

    def __post_init__(self):
        ranges = [self.range_of(a) for a in JOINT_ORDER]
        cursor = 0
        for start, stop in ranges:
            if start != cursor or stop <= start:
                raise PoseFormatError(f"articulator ranges must be contiguous and non-empty, got {ranges}")
            cursor = stop
        if cursor != NUM_JOINTS:
            raise PoseFormatError(f"articulator ranges cover {cursor} joints, expected {NUM_JOINTS}")

    def range_of(self, articulator: Articulator) -> tuple[int, int]:
        return {
            Articulator.BODY: self.body,
            Articulator.LEFT_HAND: self.left_hand,
            Articulator.RIGHT_HAND: self.right_hand,
            Articulator.FACE: self.face,
        }[articulator]

    def joint_count(self, articulator: Articulator) -> int:
        start, stop = self.range_of(articulator)
        return stop - start

    def flat_width(self, articulator: Articulator) -> int:
        return self.joint_count(articulator) * COORDS

    def joint_slice(self, articulator: Articulator) -> slice:
        return slice(*self.range_of(articulator))


DEFAULT_PARTITION = ArticulatorPartition()


@dataclass
class PoseSequence:
    """T frames of 178 joints in 3D."""

    frames: np.ndarray
    partition: ArticulatorPartition = field(default=DEFAULT_PARTITION)

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 3 or frames.shape[1:] != (NUM_JOINTS, COORDS):
            raise PoseFormatError(f"pose frames must have shape (T, {NUM_JOINTS}, {COORDS}), got {frames.shape}")
        if frames.shape[0] < 1:
            raise PoseFormatError("pose sequence must contain at least one frame")
        if not np.all(np.isfinite(frames)):
            raise PoseFormatError("pose frames contain NaN or Inf")
        self.frames = frames

    @property
    def length(self) -> int:
        return int(self.frames.shape[0])

    def region(self, articulator: Articulator) -> np.ndarray:
        return self.frames[:, self.partition.joint_slice(articulator), :]


@dataclass
class CorpusSample:
    """One sentence of the synthetic corpus."""

    sample_id: str
    tokens: list[int]
    pose: PoseSequence


@dataclass
class SyntheticCorpus:
    """Token sequences, pseudo text embeddings and ground-truth poses."""

    vocab: list[int]
    embeddings: np.ndarray  # (vocab_size, 768), unit rows
    samples: list[CorpusSample]
    seed: int
    primitive_lengths: list[int] = field(default_factory=list)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def max_length(self) -> int:
        return max(sample.pose.length for sample in self.samples)

    def sample(self, sample_id: str) -> CorpusSample:
        for sample in self.samples:
            if sample.sample_id == sample_id:
                return sample
        raise KeyError(sample_id)
