"""Motion-quality metrics: DTW-aligned mean joint error and per-region reports."""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import worker_count
from .errors import EvaluationError
from .pose.io import INDEX_FILE, POSE_SUFFIX, load_pose, read_corpus_index
from .pose.models import DEFAULT_PARTITION, JOINT_ORDER, LATENT_ORDER, Articulator, PoseSequence
from .vae import LatentDistribution

logger = logging.getLogger(__name__)

REGIONS = tuple(a.value for a in JOINT_ORDER)
MEAN_ROW = "mean"


def _frames(pose: PoseSequence | np.ndarray) -> np.ndarray:
    frames = pose.frames if isinstance(pose, PoseSequence) else np.asarray(pose, dtype=np.float64)
    if frames.ndim != 3 or frames.shape[0] == 0:
        raise EvaluationError(f"expected a non-empty (T, J, 3) sequence, got shape {frames.shape}")
    return frames


def _joint_slice(region: Articulator | str | None) -> slice:
    if region is None:
        return slice(None)
    return DEFAULT_PARTITION.joint_slice(Articulator(region))


def mean_joint_error(f: np.ndarray, g: np.ndarray, region: Articulator | str | None = None) -> float:
    """Mean Euclidean distance between corresponding joints of two (178, 3) frames."""
    joints = _joint_slice(region)
    return float(np.linalg.norm(np.asarray(f)[joints] - np.asarray(g)[joints], axis=-1).mean())


def frame_costs(p: np.ndarray, q: np.ndarray, region: Articulator | str | None = None) -> np.ndarray:
    """(T1, T2) matrix of mean joint errors between every frame pair."""
    joints = _joint_slice(region)
    diff = p[:, None, joints, :] - q[None, :, joints, :]
    return np.linalg.norm(diff, axis=-1).mean(axis=-1)


@dataclass
class DtwResult:
    """Alignment cost normalized by path length, plus the path itself."""

    cost: float
    path: list[tuple[int, int]]
    total_cost: float


# Predecessor steps in tie-break order.
_STEPS = ((1, 1), (1, 0), (0, 1))


def dtw_align(costs: np.ndarray) -> DtwResult:
    """Monotone alignment minimizing summed cost, then path length; diagonal wins remaining ties."""
    rows, cols = costs.shape
    if rows == 0 or cols == 0:
        raise EvaluationError("cannot align an empty sequence")
    total = np.full((rows, cols), np.inf)
    steps = np.zeros((rows, cols), dtype=np.int64)
    back = np.zeros((rows, cols), dtype=np.int64)
    total[0, 0] = costs[0, 0]
    steps[0, 0] = 1
    for i in range(rows):
        for j in range(cols):
            if i == 0 and j == 0:
                continue
            best: tuple[float, int] | None = None
            for choice, (di, dj) in enumerate(_STEPS):
                pi, pj = i - di, j - dj
                if pi < 0 or pj < 0:
                    continue
                candidate = (total[pi, pj], steps[pi, pj])
                if best is None or candidate < best:
                    best = candidate
                    back[i, j] = choice
            total[i, j] = best[0] + costs[i, j]
            steps[i, j] = best[1] + 1

    path = [(rows - 1, cols - 1)]
    i, j = rows - 1, cols - 1
    while (i, j) != (0, 0):
        di, dj = _STEPS[back[i, j]]
        i, j = i - di, j - dj
        path.append((i, j))
    path.reverse()
    total_cost = float(total[-1, -1])
    return DtwResult(cost=total_cost / len(path), path=path, total_cost=total_cost)


def dtw_mje(p: PoseSequence | np.ndarray, q: PoseSequence | np.ndarray, region: Articulator | str | None = None) -> DtwResult:
    """DTW-MJE between two pose sequences, optionally restricted to one articulator's joints."""
    return dtw_align(frame_costs(_frames(p), _frames(q), region))


@dataclass
class SampleEvaluation:
    sample_id: str
    dtw_mje: float
    regions: dict[str, float]
    generated_length: int
    reference_length: int


@dataclass
class EvaluationReport:
    """Per-sample DTW-MJE and its aggregates."""

    samples: list[SampleEvaluation] = field(default_factory=list)

    @property
    def aggregate(self) -> float:
        if not self.samples:
            raise EvaluationError("no samples evaluated")
        return float(np.mean([s.dtw_mje for s in self.samples]))

    def region_aggregate(self, region: str) -> float:
        return float(np.mean([s.regions[region] for s in self.samples]))

    def to_rows(self) -> list[dict[str, object]]:
        rows: list[dict[str, object]] = []
        for s in self.samples:
            row: dict[str, object] = {"sample_id": s.sample_id, "dtw_mje": s.dtw_mje}
            row.update({f"dtw_mje_{r}": s.regions[r] for r in REGIONS})
            row.update({"generated_length": s.generated_length, "reference_length": s.reference_length})
            rows.append(row)
        summary: dict[str, object] = {"sample_id": MEAN_ROW, "dtw_mje": self.aggregate}
        summary.update({f"dtw_mje_{r}": self.region_aggregate(r) for r in REGIONS})
        summary.update({"generated_length": "", "reference_length": ""})
        rows.append(summary)
        return rows

    def write_csv(self, path: Path | str) -> Path:
        """One row per sample followed by a ``mean`` row."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = self.to_rows()
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        return path


def evaluate_pair(sample_id: str, generated: PoseSequence, reference: PoseSequence) -> SampleEvaluation:
    return SampleEvaluation(
        sample_id=sample_id,
        dtw_mje=dtw_mje(generated, reference).cost,
        regions={r: dtw_mje(generated, reference, r).cost for r in REGIONS},
        generated_length=generated.length,
        reference_length=reference.length,
    )


def evaluate_pairs(generated: dict[str, PoseSequence], references: dict[str, PoseSequence], workers: int | None = None) -> EvaluationReport:
    """Score every generated sequence against the reference with the same id.

    Raises:
        EvaluationError: When the two id sets differ.
    """
    missing = sorted(set(references) - set(generated))
    extra = sorted(set(generated) - set(references))
    if missing or extra:
        raise EvaluationError(f"sample ids do not match: missing generated {missing}, no reference for {extra}")
    ids = sorted(references)
    with ThreadPoolExecutor(max_workers=workers or worker_count()) as executor:
        samples = list(executor.map(lambda i: evaluate_pair(i, generated[i], references[i]), ids))
    return EvaluationReport(samples)


def derangement(count: int, rng: np.random.Generator) -> np.ndarray:
    """Random permutation without fixed points (a single cycle, Sattolo's algorithm)."""
    if count < 2:
        raise EvaluationError("a shuffled pairing needs at least two samples")
    order = np.arange(count)
    for i in range(count - 1, 0, -1):
        j = int(rng.integers(0, i))
        order[i], order[j] = order[j], order[i]
    return order


def shuffled_pairing_baseline(
    generated: dict[str, PoseSequence],
    references: dict[str, PoseSequence],
    rng: np.random.Generator,
    workers: int | None = None,
) -> EvaluationReport:
    """Score each generated sequence against a mismatched reference."""
    ids = sorted(references)
    if sorted(generated) != ids:
        raise EvaluationError("baseline needs generated and reference sets with identical ids")
    partner = derangement(len(ids), rng)
    with ThreadPoolExecutor(max_workers=workers or worker_count()) as executor:
        samples = list(executor.map(lambda k: evaluate_pair(ids[k], generated[ids[k]], references[ids[partner[k]]]), range(len(ids))))
    return EvaluationReport(samples)


def pose_directory(path: Path | str) -> dict[str, Path]:
    """Map sample id -> pose file for a corpus directory (with ``index.json``) or a flat pose directory."""
    path = Path(path)
    if not path.is_dir():
        raise EvaluationError(f"not a directory: {path}")
    if (path / INDEX_FILE).exists():
        index = read_corpus_index(path)
        return {entry["id"]: path / entry["file"] for entry in index["samples"]}
    return {file.name.removesuffix(POSE_SUFFIX): file for file in sorted(path.glob(f"*{POSE_SUFFIX}"))}


def load_pose_directory(path: Path | str) -> dict[str, PoseSequence]:
    files = pose_directory(path)
    with ThreadPoolExecutor(max_workers=worker_count()) as executor:
        poses = list(executor.map(load_pose, files.values()))
    return dict(zip(files, poses, strict=True))


def latent_region_stats(dist: LatentDistribution, mask: np.ndarray | None = None) -> dict[str, dict[str, float]]:
    """Mean and standard deviation of mu and logvar per articulator over valid frames."""
    mu = np.asarray(dist.mu.data, dtype=np.float64)
    logvar = np.asarray(dist.logvar.data, dtype=np.float64)
    if mask is not None:
        valid = np.asarray(mask, dtype=bool)
        mu, logvar = mu[valid], logvar[valid]
    stats = {}
    for articulator in LATENT_ORDER:
        part = dist.slices[articulator]
        stats[articulator.value] = {
            "mu_mean": float(mu[..., part].mean()),
            "mu_std": float(mu[..., part].std()),
            "logvar_mean": float(logvar[..., part].mean()),
            "logvar_std": float(logvar[..., part].std()),
        }
    return stats
