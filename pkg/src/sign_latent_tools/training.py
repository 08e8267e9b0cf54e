"""Training loops for the VAE and the two-phase generator, plus their checkpoints.

VAE training minimizes the weighted per-region reconstruction error plus
beta * KL. Generator training regresses the frozen VAE encoder's per-frame
(mu, logvar) with masked L1 and a length loss (phase 1), then adds a KL term
between the predicted and encoder posteriors (phase 2). Hand weights follow
the bounded boost schedule throughout.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, constant, load_checkpoint, no_grad, save_checkpoint
from .config import GeneratorConfig, GeneratorTrainingConfig, GlossAttentionConfig, RunConfig, VaeConfig
from .errors import ArchitectureMismatchError, CheckpointError, ConfigError, TrainingDivergenceError
from .generator import LATENT_DIM, Generator, TextBatch
from .losses import kl_gaussians, latent_l1_components, length_loss, split_hand_other, weighted_sum
from .optim import Adam, DynamicWeightState, EarlyStopping, PlateauScheduler, clip_grad_norm, update_boost
from .pose.models import Articulator, SyntheticCorpus
from .pose.normalize import normalize_frames
from .seeding import BATCHING, EPSILON, INIT, substream
from .vae import DisentangledVAE, LatentDistribution, reparameterize, vae_loss

logger = logging.getLogger(__name__)

VAE_KIND = "vae"
GENERATOR_KIND = "generator"
# Fields that change parameter shapes; a checkpoint must agree on all of them.
VAE_ARCHITECTURE_FIELDS = ("layout", "variant", "latent_dims", "hidden", "entangled_hidden")
GENERATOR_ARCHITECTURE_FIELDS = ("d_model", "encoder_layers", "encoder_heads", "decoder_layers", "decoder_heads", "ff_dim", "length_hidden", "trainable_time_queries")


@dataclass
class LossRecord:
    """One row of a loss curve."""

    epoch: int
    component: str
    value: float


@dataclass
class VaeTrainingResult:
    vae: DisentangledVAE
    optimizer: Adam
    curves: list[LossRecord] = field(default_factory=list)

    def epoch_losses(self, component: str = "total") -> list[float]:
        return [r.value for r in self.curves if r.component == component]


@dataclass
class PosteriorTargets:
    """Frozen-encoder posterior (mu, logvar), each (T, 80), for one sample."""

    mu: np.ndarray
    logvar: np.ndarray


@dataclass
class GeneratorTrainingResult:
    generator: Generator
    optimizer: Adam
    scheduler: PlateauScheduler
    early_stopping: EarlyStopping
    boost: DynamicWeightState
    phase: int
    epochs_run: int
    best_val: float | None
    curves: list[LossRecord] = field(default_factory=list)
    boost_history: list[float] = field(default_factory=list)

    def epoch_losses(self, component: str) -> list[float]:
        return [r.value for r in self.curves if r.component == component]


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------


def pad_sequences(arrays: list[np.ndarray], length: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Stack (T_i, ...) arrays into (B, T, ...) with zeros after each end, plus the (B, T) validity mask."""
    length = length or max(len(a) for a in arrays)
    padded = np.zeros((len(arrays), length, *arrays[0].shape[1:]), dtype=np.float64)
    mask = np.zeros((len(arrays), length), dtype=bool)
    for row, array in enumerate(arrays):
        padded[row, : len(array)] = array
        mask[row, : len(array)] = True
    return padded, mask


def batch_indices(count: int, batch_size: int, rng: np.random.Generator | None) -> list[np.ndarray]:
    """Shuffled (or, without rng, ordered) index batches covering 0..count-1."""
    order = rng.permutation(count) if rng is not None else np.arange(count)
    return [order[i : i + batch_size] for i in range(0, count, batch_size)]


def validation_split(count: int, fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Split sample indices into (train, validation); fraction 0 validates on the training set."""
    if fraction <= 0 or count < 2:
        every = list(range(count))
        return every, every
    order = substream(seed, f"{BATCHING}/validation").permutation(count)
    n_val = min(max(1, round(count * fraction)), count - 1)
    return sorted(int(i) for i in order[n_val:]), sorted(int(i) for i in order[:n_val])


def write_loss_curves(path: Path | str, records: list[LossRecord]) -> Path:
    """Write ``epoch,component,value`` rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "component", "value"])
        for record in records:
            writer.writerow([record.epoch, record.component, repr(float(record.value))])
    return path


# ---------------------------------------------------------------------------
# VAE
# ---------------------------------------------------------------------------


def corpus_frames(corpus: SyntheticCorpus) -> list[np.ndarray]:
    return [normalize_frames(sample.pose.frames) for sample in corpus.samples]


def train_vae(corpus: SyntheticCorpus, config: RunConfig, epochs: int | None = None) -> VaeTrainingResult:
    """Train a fresh VAE on every frame of the corpus.

    Raises:
        TrainingDivergenceError: When a loss or activation becomes non-finite.
    """
    cfg, train_cfg = config.vae, config.vae_training
    epochs = epochs or train_cfg.epochs
    vae = DisentangledVAE(cfg, substream(config.seed, f"{INIT}/vae"))
    optimizer = Adam(vae.parameters(), lr=train_cfg.lr, betas=train_cfg.betas, weight_decay=train_cfg.weight_decay)
    eps_rng = substream(config.seed, f"{EPSILON}/vae")
    batch_rng = substream(config.seed, f"{BATCHING}/vae")
    frames = corpus_frames(corpus)
    logger.info("training %s VAE (%d parameters) on %d sequences for %d epochs", cfg.layout, vae.num_parameters(), len(frames), epochs)

    result = VaeTrainingResult(vae=vae, optimizer=optimizer)
    for epoch in range(1, epochs + 1):
        totals: dict[str, float] = {}
        batches = batch_indices(len(frames), train_cfg.batch_size, batch_rng)
        for step, indices in enumerate(batches):
            x, mask = pad_sequences([frames[i] for i in indices])
            try:
                dist = vae.encode(x)
                recon = vae.decode(reparameterize(dist, eps_rng).z)
                loss, components = vae_loss(x, recon, dist, cfg, mask)
            except TrainingDivergenceError as err:
                logger.error("VAE training diverged at epoch %d step %d: %s", epoch, step, err)
                raise TrainingDivergenceError("VAE training diverged", {**err.diagnostics, "epoch": epoch, "step": step}) from err
            optimizer.zero_grad()
            loss.backward()
            if train_cfg.grad_clip is not None:
                clip_grad_norm(optimizer.params, train_cfg.grad_clip)
            optimizer.step()
            for key, value in components.items():
                totals[key] = totals.get(key, 0.0) + value / len(batches)

        result.curves.extend(LossRecord(epoch, key, value) for key, value in totals.items())
        logger.info("vae epoch %d/%d %s", epoch, epochs, " ".join(f"{k}={v:.5f}" for k, v in totals.items()))
    return result


def _architecture(cfg: VaeConfig | GeneratorConfig, fields: tuple[str, ...]) -> dict:
    dumped = cfg.model_dump(mode="json")
    return {key: dumped[key] for key in fields}


def _check_architecture(kind: str, saved: dict, expected: dict) -> None:
    diffs = [f"{key}: checkpoint={saved.get(key)!r} config={value!r}" for key, value in expected.items() if saved.get(key) != value]
    if diffs:
        raise ArchitectureMismatchError(f"{kind} checkpoint does not match the config: " + "; ".join(diffs))


def save_vae(path: Path | str, vae: DisentangledVAE, meta: dict | None = None) -> Path:
    header = {"kind": VAE_KIND, "vae_config": vae.cfg.model_dump(mode="json"), "latent_dim": vae.cfg.latent_dim, **(meta or {})}
    return save_checkpoint(path, vae.state_dict(), header)


def load_vae(path: Path | str, expected: VaeConfig | None = None) -> DisentangledVAE:
    """Rebuild a VAE from its checkpoint, refusing architectures that disagree with ``expected``."""
    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != VAE_KIND:
        raise CheckpointError(f"{path}: not a VAE checkpoint (kind={meta.get('kind')!r})")
    cfg = VaeConfig.model_validate(meta["vae_config"])
    if expected is not None:
        _check_architecture("VAE", _architecture(cfg, VAE_ARCHITECTURE_FIELDS), _architecture(expected, VAE_ARCHITECTURE_FIELDS))
    vae = DisentangledVAE(cfg, np.random.default_rng(0))
    vae.load_state_dict(arrays)
    return vae


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------


def precompute_posterior_targets(corpus: SyntheticCorpus, vae: DisentangledVAE) -> list[PosteriorTargets]:
    """Encode every sample with the frozen VAE encoder."""
    targets = []
    with no_grad():
        for frames in corpus_frames(corpus):
            dist = vae.encode(frames)
            targets.append(PosteriorTargets(np.array(dist.mu.data, dtype=np.float64), np.array(dist.logvar.data, dtype=np.float64)))
    return targets


def _batch_targets(targets: list[PosteriorTargets], indices: list[int], like: Tensor, slices: dict[Articulator, slice]) -> tuple[LatentDistribution, np.ndarray]:
    mu, mask = pad_sequences([targets[i].mu for i in indices])
    logvar, _ = pad_sequences([targets[i].logvar for i in indices])
    return LatentDistribution(constant(mu, like=like), constant(logvar, like=like), slices), mask


def _objective(
    generator: Generator,
    corpus: SyntheticCorpus,
    targets: list[PosteriorTargets],
    indices: list[int],
    weights: dict[Articulator, float],
    phase: int,
    train_cfg: GeneratorTrainingConfig,
    slices: dict[Articulator, slice],
) -> tuple[Tensor, dict[str, float], dict[Articulator, Tensor]]:
    samples = [corpus.samples[i] for i in indices]
    text = TextBatch.from_tokens([s.tokens for s in samples], corpus.embeddings)
    lengths = [s.pose.length for s in samples]
    pred = generator(text, lengths=lengths)
    target, mask = _batch_targets(targets, indices, pred.mu_hat, slices)

    components = latent_l1_components(pred, target, mask)
    latent = weighted_sum(components, weights)
    length = length_loss(pred.length_ratio, lengths, generator.t_max)
    total = latent + length * train_cfg.length_weight
    report = {"latent_l1": latent.item(), "length": length.item()}
    if phase == 2:
        kl = kl_gaussians(pred, target, mask)
        total = total + kl * train_cfg.kl_weight
        report["kl"] = kl.item()
    report["total"] = total.item()
    for articulator, term in components.items():
        report[f"l1_{articulator.value}"] = term.item()
    return total, report, components


UNIT_WEIGHTS = dict.fromkeys(Articulator, 1.0)


def evaluate_generator(
    generator: Generator,
    corpus: SyntheticCorpus,
    targets: list[PosteriorTargets],
    indices: list[int],
    phase: int,
    train_cfg: GeneratorTrainingConfig,
    slices: dict[Articulator, slice],
) -> dict[str, float]:
    """Validation losses with unit articulator weights, averaged over batches."""
    totals: dict[str, float] = {}
    batches = batch_indices(len(indices), train_cfg.batch_size, None)
    with no_grad():
        for batch in batches:
            _, report, _ = _objective(generator, corpus, targets, [indices[i] for i in batch], UNIT_WEIGHTS, phase, train_cfg, slices)
            for key, value in report.items():
                totals[key] = totals.get(key, 0.0) + value / len(batches)
    return totals


def train_generator(
    corpus: SyntheticCorpus,
    vae: DisentangledVAE,
    config: RunConfig,
    phase: int = 1,
    epochs: int | None = None,
    resume: "GeneratorCheckpoint | None" = None,
) -> GeneratorTrainingResult:
    """Train (or resume) the generator against the frozen VAE's posteriors.

    The returned generator and optimizer hold the parameters and Adam moments of
    the best validation epoch, counting the resumed checkpoint as a candidate
    when continuing within the same phase.

    Args:
        corpus: Training corpus; its longest sample sets t_max unless configured.
        vae: Trained VAE, used only for posterior targets and never updated.
        config: Run configuration.
        phase: 1 (latent L1 + length) or 2 (adds the KL term).
        epochs: Overrides ``generator_training.epochs``.
        resume: Checkpoint to continue from. Parameters, optimizer moments and
            the boost state carry over; scheduler and early-stopping state
            carry over only within the same phase.

    Raises:
        TrainingDivergenceError: When the objective becomes non-finite.
        BoostInvariantError: When the boost factor leaves [1, s_max].
    """
    if phase not in (1, 2):
        raise ConfigError(f"phase must be 1 or 2, got {phase}")
    train_cfg = config.generator_training
    epochs = epochs or train_cfg.epochs

    if resume is not None:
        generator = resume.generator
    else:
        t_max = config.generator.t_max or corpus.max_length
        generator = Generator(config.generator, config.gloss_attention, substream(config.seed, f"{INIT}/generator"), t_max=t_max)
    if corpus.max_length > generator.t_max:
        raise ConfigError(f"corpus has sequences of {corpus.max_length} frames but t_max is {generator.t_max}")

    optimizer = Adam(generator.parameters(), lr=train_cfg.lr, betas=train_cfg.betas, weight_decay=train_cfg.weight_decay)
    scheduler = PlateauScheduler(optimizer, train_cfg.scheduler.factor, train_cfg.scheduler.patience, train_cfg.scheduler.min_delta)
    stopper = EarlyStopping(train_cfg.early_stopping.patience, train_cfg.early_stopping.min_delta)
    boost = DynamicWeightState.from_config(train_cfg.boost)
    start_epoch = 0
    if resume is not None:
        optimizer.load_state_dict(resume.optimizer_arrays, resume.meta["optimizer"])
        boost = DynamicWeightState(**resume.meta["boost"])
        if resume.meta.get("phase") == phase:
            scheduler.load_state_dict(resume.meta["scheduler"])
            stopper.load_state_dict(resume.meta["early_stopping"])
            start_epoch = int(resume.meta.get("epoch", 0))
        else:
            optimizer.lr = train_cfg.lr

    check_vae_compatible(vae)
    targets = precompute_posterior_targets(corpus, vae)
    train_idx, val_idx = validation_split(len(corpus.samples), train_cfg.validation_fraction, config.seed)
    batch_rng = substream(config.seed, f"{BATCHING}/generator/phase{phase}/from{start_epoch}")
    slices = vae.latent_slices
    logger.info(
        "training generator phase %d (%d parameters, t_max=%d) on %d samples, validating on %d",
        phase,
        generator.num_parameters(),
        generator.t_max,
        len(train_idx),
        len(val_idx),
    )

    result = GeneratorTrainingResult(generator, optimizer, scheduler, stopper, boost, phase, start_epoch, None)
    best: _BestSnapshot | None = None
    if stopper.best is not None:
        # resumed within a phase: the checkpoint holds the best parameters so far
        best = _BestSnapshot.take(generator, optimizer)
        result.best_val = stopper.best
    for epoch in range(start_epoch + 1, start_epoch + epochs + 1):
        totals: dict[str, float] = {}
        batches = batch_indices(len(train_idx), train_cfg.batch_size, batch_rng)
        for step, batch in enumerate(batches):
            weights = {Articulator.BODY: train_cfg.body_weight, Articulator.FACE: train_cfg.face_weight, **boost.hand_weights()}
            total, report, components = _objective(generator, corpus, targets, [train_idx[i] for i in batch], weights, phase, train_cfg, slices)
            if not np.isfinite(report["total"]):
                logger.error("generator training diverged at epoch %d step %d: %s", epoch, step, report)
                raise TrainingDivergenceError("generator training diverged", {**report, "epoch": epoch, "step": step, "phase": phase})
            optimizer.zero_grad()
            total.backward()
            if train_cfg.grad_clip is not None:
                clip_grad_norm(optimizer.params, train_cfg.grad_clip)
            optimizer.step()

            boost = update_boost(boost, *split_hand_other(components))
            result.boost_history.append(boost.s)
            for key, value in report.items():
                totals[key] = totals.get(key, 0.0) + value / len(batches)

        validation = evaluate_generator(generator, corpus, targets, val_idx, phase, train_cfg, slices)
        val_total = validation["total"]
        lr = scheduler.step(val_total)
        stop = stopper.step(val_total)
        if stopper.improved:
            best = _BestSnapshot.take(generator, optimizer)
            result.best_val = val_total

        result.curves.extend(LossRecord(epoch, f"train/{k}", v) for k, v in totals.items())
        result.curves.extend(LossRecord(epoch, f"val/{k}", v) for k, v in validation.items())
        result.curves.append(LossRecord(epoch, "boost/s", boost.s))
        result.curves.append(LossRecord(epoch, "lr", lr))
        result.epochs_run = epoch
        logger.info("gen phase %d epoch %d train=%.5f val=%.5f s=%.3f lr=%.2e", phase, epoch, totals.get("total", float("nan")), val_total, boost.s, lr)
        if stop:
            logger.info("early stopping at epoch %d (best val %.5f)", epoch, stopper.best)
            break

    if best is not None:
        best.restore(generator, optimizer)
    result.boost = boost
    return result


@dataclass
class _BestSnapshot:
    """Parameters and matching optimizer state from the best validation epoch."""

    params: dict[str, np.ndarray]
    optimizer_arrays: dict[str, np.ndarray]
    optimizer_scalars: dict[str, float | int]

    @classmethod
    def take(cls, generator: Generator, optimizer: Adam) -> "_BestSnapshot":
        arrays, scalars = optimizer.state_dict()
        return cls(
            {name: value.copy() for name, value in generator.state_dict().items()},
            {name: value.copy() for name, value in arrays.items()},
            dict(scalars),
        )

    def restore(self, generator: Generator, optimizer: Adam) -> None:
        """Reload the snapshot; the learning rate keeps its current (scheduled) value."""
        lr = optimizer.lr
        generator.load_state_dict(self.params)
        optimizer.load_state_dict(self.optimizer_arrays, self.optimizer_scalars)
        optimizer.lr = lr


@dataclass
class GeneratorCheckpoint:
    generator: Generator
    optimizer_arrays: dict[str, np.ndarray]
    meta: dict


def save_generator(path: Path | str, result: GeneratorTrainingResult, meta: dict | None = None) -> Path:
    """Write parameters, the time-query reference pose, optimizer moments and all schedule state."""
    generator = result.generator
    optimizer_arrays, optimizer_scalars = result.optimizer.state_dict()
    tensors = {**generator.state_dict(), **optimizer_arrays, "reference_pose": generator.time_queries.reference.reshape(-1)}
    header = {
        "kind": GENERATOR_KIND,
        "generator_config": generator.cfg.model_dump(mode="json"),
        "gloss_attention": generator.gloss.model_dump(mode="json"),
        "t_max": generator.t_max,
        "latent_dim": LATENT_DIM,
        "phase": result.phase,
        "epoch": result.epochs_run,
        "best_val": result.best_val,
        "optimizer": optimizer_scalars,
        "boost": result.boost.to_dict(),
        "scheduler": result.scheduler.state_dict(),
        "early_stopping": result.early_stopping.state_dict(),
        **(meta or {}),
    }
    return save_checkpoint(path, tensors, header)


def load_generator(path: Path | str, expected: GeneratorConfig | None = None, expected_gloss: GlossAttentionConfig | None = None) -> GeneratorCheckpoint:
    """Rebuild a generator from its checkpoint; ``synthesize`` needs nothing else."""
    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != GENERATOR_KIND:
        raise CheckpointError(f"{path}: not a generator checkpoint (kind={meta.get('kind')!r})")
    if meta.get("latent_dim") != LATENT_DIM:
        raise ArchitectureMismatchError(f"{path}: latent width {meta.get('latent_dim')} != {LATENT_DIM}")
    cfg = GeneratorConfig.model_validate(meta["generator_config"])
    gloss = GlossAttentionConfig.model_validate(meta["gloss_attention"])
    if expected is not None:
        _check_architecture("generator", _architecture(cfg, GENERATOR_ARCHITECTURE_FIELDS), _architecture(expected, GENERATOR_ARCHITECTURE_FIELDS))
    if expected_gloss is not None and expected_gloss != gloss:
        _check_architecture("generator", gloss.model_dump(mode="json"), expected_gloss.model_dump(mode="json"))

    reference = arrays.pop("reference_pose").reshape(-1, 3)
    optimizer_arrays = {k: arrays.pop(k) for k in list(arrays) if k.startswith("optimizer.")}
    generator = Generator(cfg, gloss, np.random.default_rng(0), t_max=int(meta["t_max"]), reference_pose=reference)
    generator.load_state_dict(arrays)
    return GeneratorCheckpoint(generator, optimizer_arrays, meta)


def check_vae_compatible(vae: DisentangledVAE) -> None:
    if vae.cfg.latent_dim != LATENT_DIM:
        raise ArchitectureMismatchError(f"VAE latent width {vae.cfg.latent_dim} != generator latent width {LATENT_DIM}")
