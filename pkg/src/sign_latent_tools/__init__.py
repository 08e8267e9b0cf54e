"""Sign Latent Tools - text-to-sign-pose generation through an articulator-wise latent space.

This package provides the whole pipeline at desk scale:
- Pose: pose sequences, normalization, pose files and a synthetic token corpus
- VAE: frame-wise encoder/decoder with one latent region per articulator
- Generator: non-autoregressive transformer predicting per-frame latent posteriors
- Training: VAE and two-phase generator training with a bounded hand-weight boost
- Evaluation: DTW-aligned mean joint error, per-region and against a shuffled baseline
- Exporters: SVG stick-figure strips and Markdown/HTML evaluation reports
"""

__version__ = "0.1.0"

from .attention import GlossAttention, MultiHeadAttention, aggregate_queries, build_global_mask, build_local_mask
from .config import RunConfig, load_run_config, save_run_config, worker_count
from .errors import (
    ArchitectureMismatchError,
    CheckpointError,
    ConfigError,
    EvaluationError,
    PoseFormatError,
    SignLatentError,
    TrainingDivergenceError,
)
from .evaluation import EvaluationReport, dtw_align, dtw_mje, evaluate_pairs, shuffled_pairing_baseline
from .generator import Generator, PredictedLatents, TextBatch
from .pose import (
    Articulator,
    PoseSequence,
    SyntheticCorpus,
    export_corpus,
    generate_synthetic_corpus,
    load_corpus,
    load_pose,
    save_pose,
)
from .report_exporter import export_report_html, report_to_html, report_to_markdown
from .svg_exporter import export_pose_to_svg, pose_to_svg
from .training import load_generator, load_vae, save_generator, save_vae, train_generator, train_vae
from .vae import DisentangledVAE, LatentDistribution, reparameterize, vae_decode, vae_encode, vae_loss

__all__ = [
    "ArchitectureMismatchError",
    "Articulator",
    "CheckpointError",
    "ConfigError",
    "DisentangledVAE",
    "EvaluationError",
    "EvaluationReport",
    "Generator",
    "GlossAttention",
    "LatentDistribution",
    "MultiHeadAttention",
    "PoseFormatError",
    "PoseSequence",
    "PredictedLatents",
    "RunConfig",
    "SignLatentError",
    "SyntheticCorpus",
    "TextBatch",
    "TrainingDivergenceError",
    "__version__",
    "aggregate_queries",
    "build_global_mask",
    "build_local_mask",
    "dtw_align",
    "dtw_mje",
    "evaluate_pairs",
    "export_corpus",
    "export_pose_to_svg",
    "export_report_html",
    "generate_synthetic_corpus",
    "load_corpus",
    "load_generator",
    "load_pose",
    "load_run_config",
    "load_vae",
    "pose_to_svg",
    "report_to_html",
    "report_to_markdown",
    "reparameterize",
    "save_generator",
    "save_pose",
    "save_run_config",
    "save_vae",
    "shuffled_pairing_baseline",
    "train_generator",
    "train_vae",
    "vae_decode",
    "vae_encode",
    "vae_loss",
    "worker_count",
]
