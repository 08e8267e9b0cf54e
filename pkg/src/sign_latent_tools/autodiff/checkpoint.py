"""Parameter checkpoint files.

Layout::

    b"A2VC" | u32 header length (LE) | JSON header | raw little-endian tensor bytes

The JSON header holds ``{"format": 1, "meta": {...}, "tensors": [...]}`` where
each tensor entry records name, shape, dtype and the byte offset/length of its
values relative to the start of the payload.
"""

import struct
from pathlib import Path

import numpy as np
import orjson

from ..errors import CheckpointError

CHECKPOINT_MAGIC = b"A2VC"
CHECKPOINT_FORMAT = 1
_HEADER_LEN = struct.Struct("<I")
_SUPPORTED_DTYPES = {"<f4", "<f8", "<i8"}


def _encode(array: np.ndarray) -> tuple[str, bytes]:
    array = np.ascontiguousarray(array)
    little = array.astype(array.dtype.newbyteorder("<"), copy=False)
    dtype = little.dtype.str
    if dtype not in _SUPPORTED_DTYPES:
        raise CheckpointError(f"unsupported checkpoint dtype {array.dtype}")
    return dtype, little.tobytes()


def save_checkpoint(path: Path | str, tensors: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    """Write named arrays and a JSON-serializable ``meta`` dict to ``path``."""
    entries = []
    chunks = []
    offset = 0
    for name, array in tensors.items():
        dtype, raw = _encode(np.asarray(array))
        entries.append({"name": name, "shape": list(np.shape(array)), "dtype": dtype, "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = orjson.dumps(
        {"format": CHECKPOINT_FORMAT, "meta": meta or {}, "tensors": entries},
        option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY,
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(_HEADER_LEN.pack(len(header)))
        f.write(header)
        for chunk in chunks:
            f.write(chunk)
    return path


def read_checkpoint_meta(path: Path | str) -> dict:
    """Return only the ``meta`` section of a checkpoint."""
    _, meta = load_checkpoint(path, tensors=False)
    return meta


def load_checkpoint(path: Path | str, tensors: bool = True) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint, returning ``(arrays by name, meta)``."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    prefix = len(CHECKPOINT_MAGIC) + _HEADER_LEN.size
    if len(blob) < prefix:
        raise CheckpointError(f"{path}: truncated header")
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    (header_len,) = _HEADER_LEN.unpack_from(blob, len(CHECKPOINT_MAGIC))
    if len(blob) < prefix + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = orjson.loads(blob[prefix : prefix + header_len])
    except orjson.JSONDecodeError as err:
        raise CheckpointError(f"{path}: malformed header") from err
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unsupported checkpoint format {header.get('format')}")

    arrays: dict[str, np.ndarray] = {}
    if tensors:
        payload = memoryview(blob)[prefix + header_len :]
        for entry in header["tensors"]:
            start, nbytes = entry["offset"], entry["nbytes"]
            if entry["dtype"] not in _SUPPORTED_DTYPES:
                raise CheckpointError(f"{path}: unsupported dtype {entry['dtype']} for {entry['name']}")
            if start + nbytes > len(payload):
                raise CheckpointError(f"{path}: truncated payload for {entry['name']}")
            values = np.frombuffer(payload[start : start + nbytes], dtype=np.dtype(entry["dtype"]))
            arrays[entry["name"]] = values.reshape(entry["shape"]).astype(values.dtype.newbyteorder("="), copy=True)
    return arrays, header.get("meta", {})
