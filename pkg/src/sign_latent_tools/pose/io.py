"""Pose files and corpus directories.

Pose file layout (all little-endian)::

    b"A2VP" | version u16 | T u32 | J u32 (=178) | dtype tag u8 | T*J*3 row-major floats

Corpus directory layout::

    index.json        sample id -> token ids, file name, length (plus seed/vocab)
    embeddings.npy    (vocab_size, 768) pseudo text embeddings
    poses/<id>.a2vp   one pose file per sample
"""

import struct
from pathlib import Path

import numpy as np
import orjson

from ..errors import PoseFormatError
from .models import COORDS, NUM_JOINTS, CorpusSample, PoseSequence, SyntheticCorpus

POSE_MAGIC = b"A2VP"
POSE_VERSION = 1
POSE_SUFFIX = ".a2vp"
_HEADER = struct.Struct("<4sHIIB")
_DTYPE_TAGS = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_TAG_FOR_DTYPE = {np.dtype("float32"): 1, np.dtype("float64"): 2}

INDEX_FILE = "index.json"
EMBEDDINGS_FILE = "embeddings.npy"
POSES_DIR = "poses"
CORPUS_FORMAT = 1


def pose_to_bytes(pose: PoseSequence) -> bytes:
    """Serialize a pose sequence to the pose file format."""
    frames = pose.frames
    if frames.dtype not in _TAG_FOR_DTYPE:
        frames = frames.astype(np.float64)
    tag = _TAG_FOR_DTYPE[frames.dtype]
    header = _HEADER.pack(POSE_MAGIC, POSE_VERSION, frames.shape[0], frames.shape[1], tag)
    return header + np.ascontiguousarray(frames, dtype=_DTYPE_TAGS[tag]).tobytes()


def pose_from_bytes(blob: bytes, source: str = "<bytes>") -> PoseSequence:
    """Parse the pose file format; every malformation raises PoseFormatError."""
    if len(blob) < _HEADER.size:
        raise PoseFormatError(f"{source}: truncated header ({len(blob)} bytes)")
    magic, version, length, joints, tag = _HEADER.unpack_from(blob)
    if magic != POSE_MAGIC:
        raise PoseFormatError(f"{source}: bad magic {magic!r}")
    if version != POSE_VERSION:
        raise PoseFormatError(f"{source}: unsupported version {version}")
    if joints != NUM_JOINTS:
        raise PoseFormatError(f"{source}: joint count {joints} != {NUM_JOINTS}")
    if tag not in _DTYPE_TAGS:
        raise PoseFormatError(f"{source}: unknown dtype tag {tag}")
    dtype = _DTYPE_TAGS[tag]
    expected = length * joints * COORDS * dtype.itemsize
    payload = blob[_HEADER.size :]
    if len(payload) < expected:
        raise PoseFormatError(f"{source}: truncated payload ({len(payload)} of {expected} bytes)")
    if len(payload) > expected:
        raise PoseFormatError(f"{source}: {len(payload) - expected} trailing bytes after payload")
    frames = np.frombuffer(payload, dtype=dtype).reshape(length, joints, COORDS)
    return PoseSequence(frames.astype(dtype.newbyteorder("="), copy=True))


def save_pose(path: Path | str, pose: PoseSequence) -> None:
    """Write a pose file (float32 or float64, matching the frames)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(pose_to_bytes(pose))


def load_pose(path: Path | str) -> PoseSequence:
    """Read a pose file."""
    path = Path(path)
    return pose_from_bytes(path.read_bytes(), source=str(path))


def export_corpus(corpus: SyntheticCorpus, out_dir: Path | str) -> Path:
    """Write a corpus directory; identical corpora produce identical bytes.

    Pose files left in ``poses/`` by an earlier export are removed first, so the
    directory holds exactly the files the new index lists.

    Returns:
        Path to the written index file.
    """
    out_dir = Path(out_dir)
    poses_dir = out_dir / POSES_DIR
    poses_dir.mkdir(parents=True, exist_ok=True)
    for stale in poses_dir.glob(f"*{POSE_SUFFIX}"):
        stale.unlink()

    entries = []
    for sample in corpus.samples:
        file_name = f"{sample.sample_id}{POSE_SUFFIX}"
        save_pose(poses_dir / file_name, sample.pose)
        entries.append({"id": sample.sample_id, "tokens": list(sample.tokens), "file": f"{POSES_DIR}/{file_name}", "length": sample.pose.length})

    with (out_dir / EMBEDDINGS_FILE).open("wb") as f:
        np.save(f, np.ascontiguousarray(corpus.embeddings, dtype="<f8"), allow_pickle=False)

    index = {
        "format": CORPUS_FORMAT,
        "seed": corpus.seed,
        "vocab_size": corpus.vocab_size,
        "embeddings": EMBEDDINGS_FILE,
        "primitive_lengths": list(corpus.primitive_lengths),
        "samples": entries,
    }
    index_path = out_dir / INDEX_FILE
    index_path.write_bytes(orjson.dumps(index, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS))
    return index_path


def read_corpus_index(corpus_dir: Path | str) -> dict:
    """Load and minimally validate ``index.json``."""
    index_path = Path(corpus_dir) / INDEX_FILE
    if not index_path.exists():
        raise PoseFormatError(f"corpus index not found: {index_path}")
    try:
        index = orjson.loads(index_path.read_bytes())
    except orjson.JSONDecodeError as err:
        raise PoseFormatError(f"{index_path}: malformed index") from err
    if index.get("format") != CORPUS_FORMAT or "samples" not in index:
        raise PoseFormatError(f"{index_path}: unsupported corpus index")
    return index


def load_corpus(corpus_dir: Path | str) -> SyntheticCorpus:
    """Load a corpus directory written by ``export_corpus``."""
    corpus_dir = Path(corpus_dir)
    index = read_corpus_index(corpus_dir)
    with (corpus_dir / index.get("embeddings", EMBEDDINGS_FILE)).open("rb") as f:
        embeddings = np.load(f, allow_pickle=False)
    samples = []
    for entry in index["samples"]:
        pose = load_pose(corpus_dir / entry["file"])
        if pose.length != entry["length"]:
            raise PoseFormatError(f"sample {entry['id']}: index length {entry['length']} != file length {pose.length}")
        samples.append(CorpusSample(sample_id=entry["id"], tokens=[int(t) for t in entry["tokens"]], pose=pose))
    return SyntheticCorpus(
        vocab=list(range(int(index["vocab_size"]))),
        embeddings=embeddings,
        samples=samples,
        seed=int(index["seed"]),
        primitive_lengths=[int(n) for n in index.get("primitive_lengths", [])],
    )
