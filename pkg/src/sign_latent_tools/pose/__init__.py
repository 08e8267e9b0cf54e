"""Pose data: models, normalization, pose files and the synthetic corpus.

- models: articulator layout, PoseSequence, corpus dataclasses
- normalize: neck-centred, shoulder-scaled normalization and region splitting
- io: pose file format and corpus directories
- synthetic: procedural token-primitive corpus
"""

from .io import (
    export_corpus,
    load_corpus,
    load_pose,
    pose_from_bytes,
    pose_to_bytes,
    read_corpus_index,
    save_pose,
)
from .models import (
    COORDS,
    DEFAULT_PARTITION,
    HAND_ARTICULATORS,
    JOINT_ORDER,
    LATENT_ORDER,
    NUM_JOINTS,
    TEXT_EMBEDDING_DIM,
    Articulator,
    ArticulatorPartition,
    CorpusSample,
    PoseSequence,
    SyntheticCorpus,
)
from .normalize import concat_articulators, normalize_frames, normalize_pose, shoulder_widths, split_articulators
from .synthetic import crossfade_concat, generate_synthetic_corpus, pseudo_embeddings, rest_pose, token_primitives

__all__ = [
    "COORDS",
    "DEFAULT_PARTITION",
    "HAND_ARTICULATORS",
    "JOINT_ORDER",
    "LATENT_ORDER",
    "NUM_JOINTS",
    "TEXT_EMBEDDING_DIM",
    "Articulator",
    "ArticulatorPartition",
    "CorpusSample",
    "PoseSequence",
    "SyntheticCorpus",
    "concat_articulators",
    "crossfade_concat",
    "export_corpus",
    "generate_synthetic_corpus",
    "load_corpus",
    "load_pose",
    "normalize_frames",
    "normalize_pose",
    "pose_from_bytes",
    "pose_to_bytes",
    "pseudo_embeddings",
    "read_corpus_index",
    "rest_pose",
    "save_pose",
    "shoulder_widths",
    "split_articulators",
    "token_primitives",
]
