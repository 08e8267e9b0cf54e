"""Procedural sign corpus: every token owns a smooth motion primitive.

A primitive is a displacement of the neutral rest pose built from sinusoid
basis functions with token-seeded phases. Hands move strongly, body and face
weakly; neck and shoulders never move, so emitted poses stay normalized.
Sentences are the time-concatenation of their tokens' primitives joined by
short cosine crossfades. All randomness comes from named sub-streams of the
corpus seed, so the corpus is a pure function of its arguments.
"""

import logging

import numpy as np

from ..errors import ConfigError
from ..seeding import CORPUS, substream
from .models import (
    COORDS,
    DEFAULT_PARTITION,
    HAND_ARTICULATORS,
    NUM_JOINTS,
    TEXT_EMBEDDING_DIM,
    Articulator,
    CorpusSample,
    PoseSequence,
    SyntheticCorpus,
)
from .normalize import normalize_frames

logger = logging.getLogger(__name__)

MIN_PRIMITIVE_FRAMES = 8
MAX_PRIMITIVE_FRAMES = 16
CROSSFADE_FRAMES = 4
MIN_PRIMITIVE_SEPARATION = 0.05
MAX_REDRAWS = 32

HAND_AMPLITUDES = (0.25, 0.12, 0.06)
FINGER_CURL_AMPLITUDE = 0.04
BODY_AMPLITUDE = 0.02
FACE_AMPLITUDE = 0.02

# Body joints: neck, right shoulder, left shoulder, right elbow, left elbow,
# right wrist, left wrist, head.
_BODY_REST = np.array(
    [
        [0.0, 0.0, 0.0],
        [-0.5, 0.0, 0.0],
        [0.5, 0.0, 0.0],
        [-0.6, -0.7, 0.0],
        [0.6, -0.7, 0.0],
        [-0.55, -1.35, 0.05],
        [0.55, -1.35, 0.05],
        [0.0, 0.45, 0.0],
    ]
)
_RIGHT_WRIST, _LEFT_WRIST = 5, 6
_STATIC_BODY_JOINTS = (0, 1, 2)


def _hand_rest(wrist: np.ndarray, mirror: float) -> np.ndarray:
    """Wrist plus five four-joint fingers hanging downward."""
    joints = [wrist]
    for finger in range(5):
        for knuckle in range(1, 5):
            offset = np.array([mirror * (finger - 2) * 0.03, -0.05 - 0.035 * knuckle, 0.0])
            joints.append(wrist + offset)
    return np.array(joints)


def _face_rest() -> np.ndarray:
    """128 points on four concentric ellipses around the head."""
    center = np.array([0.0, 0.55, 0.05])
    points = []
    for ring in range(4):
        radius = 0.05 + 0.05 * ring
        for k in range(32):
            angle = 2 * np.pi * k / 32
            points.append(center + np.array([radius * np.cos(angle), 1.3 * radius * np.sin(angle), 0.0]))
    return np.array(points)


def rest_pose() -> np.ndarray:
    """Neutral signing pose with both hands resting downward, shape (178, 3)."""
    partition = DEFAULT_PARTITION
    frame = np.zeros((NUM_JOINTS, COORDS))
    frame[partition.joint_slice(Articulator.BODY)] = _BODY_REST
    frame[partition.joint_slice(Articulator.RIGHT_HAND)] = _hand_rest(_BODY_REST[_RIGHT_WRIST], mirror=-1.0)
    frame[partition.joint_slice(Articulator.LEFT_HAND)] = _hand_rest(_BODY_REST[_LEFT_WRIST], mirror=1.0)
    frame[partition.joint_slice(Articulator.FACE)] = _face_rest()
    return frame


def _sinusoids(rng: np.random.Generator, length: int, amplitudes: tuple[float, ...], width: int) -> np.ndarray:
    """Sum of harmonics with random phases, shape (length, width)."""
    tau = np.linspace(0.0, 1.0, length)[:, None]
    out = np.zeros((length, width))
    for harmonic, amplitude in enumerate(amplitudes, start=1):
        phases = rng.uniform(0.0, 2 * np.pi, size=width)
        out += amplitude * np.sin(2 * np.pi * harmonic * tau + phases)
    return out


def _draw_primitive(rng: np.random.Generator) -> np.ndarray:
    partition = DEFAULT_PARTITION
    length = int(rng.integers(MIN_PRIMITIVE_FRAMES, MAX_PRIMITIVE_FRAMES + 1))
    frames = np.repeat(rest_pose()[None], length, axis=0)

    for hand in HAND_ARTICULATORS:
        block = partition.joint_slice(hand)
        wrist_path = _sinusoids(rng, length, HAND_AMPLITUDES, COORDS)
        frames[:, block] += wrist_path[:, None, :]
        curls = _sinusoids(rng, length, (FINGER_CURL_AMPLITUDE,), 5)
        for finger in range(5):
            for knuckle in range(1, 5):
                joint = block.start + 1 + finger * 4 + (knuckle - 1)
                frames[:, joint, 1] += curls[:, finger] * knuckle / 4
                frames[:, joint, 2] += 0.5 * curls[:, finger] * knuckle / 4
        # the body's wrist joint follows the hand's wrist
        body_wrist = _RIGHT_WRIST if hand is Articulator.RIGHT_HAND else _LEFT_WRIST
        frames[:, body_wrist] += wrist_path

    moving = [j for j in range(partition.joint_count(Articulator.BODY)) if j not in _STATIC_BODY_JOINTS]
    body_path = _sinusoids(rng, length, (BODY_AMPLITUDE,), len(moving) * COORDS).reshape(length, len(moving), COORDS)
    frames[:, moving] += body_path

    face = partition.joint_slice(Articulator.FACE)
    face_shift = _sinusoids(rng, length, (FACE_AMPLITUDE,), COORDS)
    frames[:, face] += face_shift[:, None, :]
    return frames


def primitive_separation(a: np.ndarray, b: np.ndarray) -> float:
    """Mean per-frame hand-joint distance between two primitives over their common frames."""
    frames = min(len(a), len(b))
    hands = np.r_[DEFAULT_PARTITION.joint_slice(Articulator.LEFT_HAND), DEFAULT_PARTITION.joint_slice(Articulator.RIGHT_HAND)]
    diff = a[:frames, hands] - b[:frames, hands]
    return float(np.linalg.norm(diff, axis=-1).mean())


def token_primitives(vocab_size: int, seed: int) -> list[np.ndarray]:
    """Motion primitive (L, 178, 3) for every token, redrawn until pairwise separated."""
    primitives: list[np.ndarray] = []
    for token in range(vocab_size):
        for attempt in range(MAX_REDRAWS):
            name = f"{CORPUS}/token/{token}" if attempt == 0 else f"{CORPUS}/token/{token}/redraw/{attempt}"
            candidate = _draw_primitive(substream(seed, name))
            if all(primitive_separation(candidate, other) > MIN_PRIMITIVE_SEPARATION for other in primitives):
                break
            logger.debug("token %d primitive too close to an earlier token, redrawing", token)
        else:
            raise ConfigError(f"could not draw a distinct primitive for token {token}")
        primitives.append(candidate)
    return primitives


def crossfade_concat(segments: list[np.ndarray], overlap: int = CROSSFADE_FRAMES) -> np.ndarray:
    """Concatenate segments in time, blending ``overlap`` frames at each join with a cosine ramp.

    The result has sum(len) - overlap * (len(segments) - 1) frames.
    """
    if not segments:
        raise ConfigError("crossfade_concat needs at least one segment")
    ramp = 0.5 * (1.0 - np.cos(np.pi * np.arange(1, overlap + 1) / (overlap + 1)))
    ramp = ramp.reshape((overlap,) + (1,) * (segments[0].ndim - 1))
    out = segments[0]
    for segment in segments[1:]:
        if len(out) < overlap or len(segment) < overlap:
            raise ConfigError(f"segments must have at least {overlap} frames to crossfade")
        blend = (1.0 - ramp) * out[-overlap:] + ramp * segment[:overlap]
        out = np.concatenate([out[:-overlap], blend, segment[overlap:]], axis=0)
    return out


def pseudo_embeddings(vocab_size: int, seed: int) -> np.ndarray:
    """Deterministic unit-norm 768-dim vectors standing in for contextual text embeddings."""
    rng = substream(seed, f"{CORPUS}/embeddings")
    raw = rng.standard_normal((vocab_size, TEXT_EMBEDDING_DIM))
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def generate_synthetic_corpus(vocab_size: int, n_samples: int, max_tokens: int, seed: int) -> SyntheticCorpus:
    """Build a corpus of ``n_samples`` sentences of 1..max_tokens tokens over ``vocab_size`` tokens."""
    if vocab_size < 2:
        raise ConfigError(f"vocab_size must be >= 2, got {vocab_size}")
    if n_samples < 1:
        raise ConfigError(f"n_samples must be >= 1, got {n_samples}")
    if max_tokens < 1:
        raise ConfigError(f"max_tokens must be >= 1, got {max_tokens}")

    primitives = token_primitives(vocab_size, seed)
    rng = substream(seed, f"{CORPUS}/samples")
    samples = []
    for index in range(n_samples):
        count = int(rng.integers(1, max_tokens + 1))
        tokens = [int(t) for t in rng.integers(0, vocab_size, size=count)]
        frames = normalize_frames(crossfade_concat([primitives[t] for t in tokens]))
        samples.append(CorpusSample(sample_id=f"s{index:04d}", tokens=tokens, pose=PoseSequence(frames)))

    logger.info("generated %d samples over %d tokens (seed %d)", n_samples, vocab_size, seed)
    return SyntheticCorpus(
        vocab=list(range(vocab_size)),
        embeddings=pseudo_embeddings(vocab_size, seed),
        samples=samples,
        seed=seed,
        primitive_lengths=[len(p) for p in primitives],
    )
