"""Static SVG strip of stick figures (x-y projection) for a pose sequence."""

from pathlib import Path

import numpy as np
from jinja2 import Environment, FileSystemLoader, select_autoescape

from .pose.models import DEFAULT_PARTITION, Articulator, PoseSequence

TEMPLATES_DIR = Path(__file__).parent / "templates"

CELL = 160
MARGIN = 20
HEADER = 20

BODY_BONES = ((0, 1), (0, 2), (1, 3), (3, 5), (2, 4), (4, 6), (0, 7))
FINGERS = 5
FINGER_JOINTS = 4

COLORS = {
    Articulator.BODY: "#333333",
    Articulator.RIGHT_HAND: "#d62728",
    Articulator.LEFT_HAND: "#1f77b4",
    Articulator.FACE: "#999999",
}


def _hand_bones(start: int) -> list[tuple[int, int]]:
    bones = []
    for finger in range(FINGERS):
        previous = start
        for knuckle in range(FINGER_JOINTS):
            joint = start + 1 + finger * FINGER_JOINTS + knuckle
            bones.append((previous, joint))
            previous = joint
    return bones


def skeleton_bones() -> list[tuple[int, int, Articulator]]:
    """(joint, joint, articulator) segments drawn for every frame."""
    bones = [(a, b, Articulator.BODY) for a, b in BODY_BONES]
    for hand in (Articulator.RIGHT_HAND, Articulator.LEFT_HAND):
        start, _ = DEFAULT_PARTITION.range_of(hand)
        bones.extend((a, b, hand) for a, b in _hand_bones(start))
    return bones


def _get_jinja_env() -> Environment:
    return Environment(
        loader=FileSystemLoader(str(TEMPLATES_DIR)),
        autoescape=select_autoescape(["html", "svg", "j2"]),
    )


def select_frames(length: int, max_frames: int) -> list[int]:
    """Evenly spaced frame indices, always including the first and last."""
    if length <= max_frames:
        return list(range(length))
    return sorted({int(round(i)) for i in np.linspace(0, length - 1, max_frames)})


def pose_to_svg(pose: PoseSequence, title: str = "pose", max_frames: int = 12, background: str = "#ffffff") -> str:
    """Render up to ``max_frames`` frames side by side.

    All panels share one scale so motion between frames is comparable.
    """
    indices = select_frames(pose.length, max_frames)
    xy = pose.frames[indices][..., :2]
    low, high = xy.reshape(-1, 2).min(axis=0), xy.reshape(-1, 2).max(axis=0)
    span = float(max(high[0] - low[0], high[1] - low[1], 1e-6))
    scale = (CELL - 2 * MARGIN) / span

    def project(point: np.ndarray) -> tuple[float, float]:
        # screen y grows downward
        x = MARGIN + (point[0] - low[0]) * scale
        y = HEADER + MARGIN + (high[1] - point[1]) * scale
        return round(float(x), 2), round(float(y), 2)

    face = DEFAULT_PARTITION.joint_slice(Articulator.FACE)
    bones = skeleton_bones()
    panels = []
    for slot, (index, frame) in enumerate(zip(indices, xy, strict=True)):
        lines = []
        for a, b, articulator in bones:
            (x1, y1), (x2, y2) = project(frame[a]), project(frame[b])
            width = 2.5 if articulator is Articulator.BODY else 1.2
            lines.append({"x1": x1, "y1": y1, "x2": x2, "y2": y2, "color": COLORS[articulator], "width": width})
        points = []
        for joint in range(face.start, face.stop):
            x, y = project(frame[joint])
            points.append({"x": x, "y": y, "r": 0.8, "color": COLORS[Articulator.FACE]})
        panels.append({"index": index, "offset": slot * CELL, "bones": lines, "points": points})

    template = _get_jinja_env().get_template("pose.svg.j2")
    return template.render(
        title=title,
        width=CELL * len(panels),
        height=CELL + HEADER,
        cell=CELL,
        background=background,
        panels=panels,
    )


def export_pose_to_svg(pose: PoseSequence, output_path: Path | str, title: str | None = None, max_frames: int = 12) -> Path:
    """Write ``pose_to_svg`` output to a file."""
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text(pose_to_svg(pose, title=title or output_path.stem, max_frames=max_frames), encoding="utf-8")
    return output_path
