"""Command-line interface for Sign Latent Tools.

This module provides a CLI built with Typer covering the whole pipeline:
synthetic data, VAE and generator training, synthesis, evaluation and
gradient verification.
"""

import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.table import Table

from sign_latent_tools import (
    EvaluationReport,
    RunConfig,
    SignLatentError,
    __version__,
    evaluate_pairs,
    export_corpus,
    export_pose_to_svg,
    export_report_html,
    generate_synthetic_corpus,
    load_corpus,
    load_generator,
    load_pose,
    load_run_config,
    load_vae,
    save_generator,
    save_vae,
    shuffled_pairing_baseline,
    train_generator,
    train_vae,
)
from sign_latent_tools.errors import ConfigError
from sign_latent_tools.evaluation import REGIONS, load_pose_directory
from sign_latent_tools.seeding import substream
from sign_latent_tools.synthesis import synthesize as synthesize_poses
from sign_latent_tools.synthesis import write_poses
from sign_latent_tools.training import write_loss_curves
from sign_latent_tools.verification import GRADIENT_CASES, gradient_suite

# On Windows, reconfigure stdout/stderr to UTF-8 when piped to prevent
# Rich from falling back to cp1252 which can't handle Unicode output
if sys.platform == "win32":
    if hasattr(sys.stdout, "reconfigure"):
        sys.stdout.reconfigure(encoding="utf-8", errors="replace")  # ty: ignore[call-non-callable]
    if hasattr(sys.stderr, "reconfigure"):
        sys.stderr.reconfigure(encoding="utf-8", errors="replace")  # ty: ignore[call-non-callable]


app = typer.Typer(
    name="sign-latent-tools",
    help="Generate sign pose sequences from text through an articulator-wise latent space.",
    no_args_is_help=True,
)
console = Console()

ConfigOption = Annotated[
    Path | None,
    typer.Option("--config", "-c", help="JSON run config (defaults are used for anything omitted).", exists=True, dir_okay=False),
]


def version_callback(value: bool):
    """Print version and exit."""
    if value:
        console.print(f"sign-latent-tools version {__version__}")
        raise typer.Exit()


def print_config_callback(value: bool):
    """Print the default run config and exit."""
    if value:
        typer.echo(RunConfig().to_json().decode("utf-8"))
        raise typer.Exit()


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


@contextmanager
def _cli_errors() -> Iterator[None]:
    """Turn library errors into a red line and a non-zero exit."""
    try:
        yield
    except ValidationError as err:
        console.print("[red]Error: invalid run config[/red]")
        console.print(escape(str(err)))
        raise typer.Exit(2) from err
    except SignLatentError as err:
        console.print(f"[red]Error: {escape(str(err))}[/red]")
        raise typer.Exit(1) from err


def _load_config(config: Path | None) -> RunConfig:
    with _cli_errors():
        return load_run_config(config)


@app.callback()
def main(
    version: Annotated[
        bool,
        typer.Option("--version", "-V", callback=version_callback, is_eager=True, help="Show version and exit."),
    ] = False,
    print_config: Annotated[
        bool,
        typer.Option("--print-config", callback=print_config_callback, is_eager=True, help="Print the default run config as JSON and exit."),
    ] = False,
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Log at DEBUG level.")] = False,
):
    """Sign Latent Tools - text-to-pose generation through an articulator-wise VAE latent space."""
    _configure_logging(verbose)


@app.command("gen-data")
def gen_data(
    out: Annotated[Path, typer.Option("--out", "-o", help="Corpus directory to write.")] = Path("corpus"),
    vocab: Annotated[int, typer.Option("--vocab", help="Number of token types (at least 2).")] = 20,
    samples: Annotated[int, typer.Option("--samples", help="Number of sentences.")] = 200,
    max_tokens: Annotated[int, typer.Option("--max-tokens", help="Longest sentence, in tokens.")] = 4,
    seed: Annotated[int, typer.Option("--seed", "-s", help="Corpus seed.")] = 0,
):
    """Generate a synthetic token-to-pose corpus.

    Each token owns a random motion primitive; a sentence's pose is its
    tokens' primitives joined by short cross-fades, then normalized. The
    directory holds index.json, embeddings.npy and one pose file per sample.
    Re-running with the same arguments writes identical bytes.
    """
    with _cli_errors():
        corpus = generate_synthetic_corpus(vocab, samples, max_tokens, seed)
        index = export_corpus(corpus, out)
    console.print(f"[green]Wrote {len(corpus.samples)} samples ({corpus.max_length} frames max) to {index.parent}[/green]")


@app.command("train-vae")
def train_vae_command(
    config: ConfigOption = None,
    corpus: Annotated[Path | None, typer.Option("--corpus", help="Corpus directory (overrides paths.corpus).")] = None,
    epochs: Annotated[int | None, typer.Option("--epochs", "-e", help="Override vae_training.epochs.", min=1)] = None,
    out: Annotated[Path | None, typer.Option("--out", "-o", help="Checkpoint path (overrides paths.vae_checkpoint).")] = None,
    curves: Annotated[Path | None, typer.Option("--curves", help="Loss curve CSV (default: next to the checkpoint).")] = None,
):
    """Train the VAE on every frame of the corpus.

    Writes the checkpoint and an epoch,component,value loss CSV with one
    row per region term, the reconstruction sum, KL and total.
    """
    run_config = _load_config(config)
    corpus_dir = corpus or Path(run_config.paths.corpus)
    out = out or Path(run_config.paths.vae_checkpoint)
    curves = curves or out.with_name(f"{out.stem}_curves.csv")

    with _cli_errors():
        data = load_corpus(corpus_dir)
        result = train_vae(data, run_config, epochs=epochs)
        save_vae(out, result.vae, {"seed": run_config.seed, "epochs": len(result.epoch_losses())})
        write_loss_curves(curves, result.curves)

    losses = result.epoch_losses()
    console.print(f"[green]VAE saved to {out}[/green] (total loss {losses[0]:.5f} -> {losses[-1]:.5f})")
    console.print(f"  Loss curves: {curves}")


@app.command("train-gen")
def train_gen_command(
    config: ConfigOption = None,
    corpus: Annotated[Path | None, typer.Option("--corpus", help="Corpus directory (overrides paths.corpus).")] = None,
    vae: Annotated[Path | None, typer.Option("--vae", help="Trained VAE checkpoint (overrides paths.vae_checkpoint).")] = None,
    phase: Annotated[int, typer.Option("--phase", "-p", help="1: latent L1 + length. 2: adds the KL term.", min=1, max=2)] = 1,
    resume: Annotated[Path | None, typer.Option("--resume", "-r", help="Generator checkpoint to continue from.")] = None,
    epochs: Annotated[int | None, typer.Option("--epochs", "-e", help="Override generator_training.epochs.", min=1)] = None,
    out: Annotated[Path | None, typer.Option("--out", "-o", help="Checkpoint path (overrides paths.generator_checkpoint).")] = None,
    curves: Annotated[Path | None, typer.Option("--curves", help="Loss curve CSV (default: next to the checkpoint).")] = None,
):
    """Train the generator against the frozen VAE's per-frame posteriors.

    Run phase 1 first, then continue it with --phase 2 --resume. Resuming
    restores parameters, optimizer moments and the hand-weight boost; the
    learning-rate scheduler and early stopping start fresh when the phase
    changes.
    """
    run_config = _load_config(config)
    corpus_dir = corpus or Path(run_config.paths.corpus)
    vae_path = vae or Path(run_config.paths.vae_checkpoint)
    out = out or Path(run_config.paths.generator_checkpoint)
    curves = curves or out.with_name(f"{out.stem}_phase{phase}_curves.csv")

    with _cli_errors():
        if phase == 2 and resume is None:
            raise ConfigError("phase 2 continues a phase-1 run; pass --resume with its checkpoint")
        data = load_corpus(corpus_dir)
        frozen = load_vae(vae_path, expected=run_config.vae)
        checkpoint = load_generator(resume, expected=run_config.generator, expected_gloss=run_config.gloss_attention) if resume else None
        result = train_generator(data, frozen, run_config, phase=phase, epochs=epochs, resume=checkpoint)
        save_generator(out, result, {"seed": run_config.seed})
        write_loss_curves(curves, result.curves)

    best = f"{result.best_val:.5f}" if result.best_val is not None else "n/a"
    console.print(f"[green]Generator (phase {phase}, epoch {result.epochs_run}) saved to {out}[/green]")
    console.print(f"  Best validation loss: {best}, boost factor s={result.boost.s:.3f}, lr={result.optimizer.lr:.2e}")
    console.print(f"  Loss curves: {curves}")


def _parse_sentence(text: str) -> list[int]:
    try:
        return [int(part) for part in text.replace(",", " ").split()]
    except ValueError as err:
        raise ConfigError(f"token sequences are integer ids, got {text!r}") from err


@app.command()
def synthesize(
    corpus: Annotated[Path, typer.Option("--corpus", help="Corpus directory providing the embedding table (and sentences when --tokens is not given).")],
    generator: Annotated[Path, typer.Option("--generator", "-g", help="Generator checkpoint.")] = Path("gen.ckpt"),
    vae: Annotated[Path, typer.Option("--vae", help="VAE checkpoint.")] = Path("vae.ckpt"),
    tokens: Annotated[
        list[str] | None,
        typer.Option("--tokens", "-t", help="Token id sequence such as '3,1,4'. Can be specified multiple times."),
    ] = None,
    out: Annotated[Path, typer.Option("--out", "-o", help="Directory for generated pose files.")] = Path("generated"),
    seed: Annotated[int, typer.Option("--seed", "-s", help="Sampling seed.")] = 0,
    deterministic: Annotated[bool, typer.Option("--deterministic", help="Decode the predicted means (no sampling noise).")] = False,
):
    """Generate pose files from token sequences.

    Each sentence is encoded, its length predicted, per-frame latents
    decoded and sampled (or taken at the mean with --deterministic) and
    decoded by the VAE. Output files are named after corpus sample ids, or
    q0000, q0001, ... for --tokens sentences.
    """
    with _cli_errors():
        data = load_corpus(corpus)
        if tokens:
            sentences = {f"q{index:04d}": _parse_sentence(text) for index, text in enumerate(tokens)}
        else:
            sentences = {sample.sample_id: list(sample.tokens) for sample in data.samples}
        model = load_generator(generator).generator
        frozen = load_vae(vae)
        poses = synthesize_poses(sentences, data.embeddings, model, frozen, seed, deterministic=deterministic)
        write_poses(poses, out)

    mode = "deterministic" if deterministic else f"seed {seed}"
    console.print(f"[green]Generated {len(poses)} pose sequences ({mode}) in {out}[/green]")


def _aggregate_table(report: EvaluationReport, baseline: EvaluationReport | None) -> Table:
    table = Table(title="DTW-MJE")
    table.add_column("Scope")
    table.add_column("Generated", justify="right")
    if baseline is not None:
        table.add_column("Shuffled baseline", justify="right")
    rows = [("all joints", report.aggregate, baseline.aggregate if baseline else None)]
    rows.extend((region, report.region_aggregate(region), baseline.region_aggregate(region) if baseline else None) for region in REGIONS)
    for scope, value, base in rows:
        cells = [scope, f"{value:.4f}"]
        if baseline is not None:
            cells.append(f"{base:.4f}")
        table.add_row(*cells)
    return table


@app.command("eval")
def eval_command(
    generated: Annotated[Path, typer.Option("--generated", help="Directory of generated pose files.")],
    reference: Annotated[Path, typer.Option("--reference", help="Reference corpus directory or directory of pose files.")],
    out: Annotated[Path, typer.Option("--out", "-o", help="CSV report path.")] = Path("eval.csv"),
    html: Annotated[Path | None, typer.Option("--html", help="Also write an HTML report.")] = None,
    baseline: Annotated[bool, typer.Option("--baseline/--no-baseline", help="Score generated poses against mismatched references as well.")] = False,
    seed: Annotated[int, typer.Option("--seed", "-s", help="Seed for the shuffled pairing.")] = 0,
):
    """Score generated poses against references with DTW-MJE.

    Sample ids must match between the two directories. The CSV holds one
    row per sample (overall and per region) followed by a mean row.
    """
    with _cli_errors():
        generated_poses = load_pose_directory(generated)
        reference_poses = load_pose_directory(reference)
        report = evaluate_pairs(generated_poses, reference_poses)
        shuffled = shuffled_pairing_baseline(generated_poses, reference_poses, substream(seed, "evaluation/baseline")) if baseline else None
        report.write_csv(out)
        if html:
            export_report_html(report, html, baseline=shuffled)

    console.print(_aggregate_table(report, shuffled))
    console.print(f"[green]Report for {len(report.samples)} samples written to {out}[/green]")
    if html:
        console.print(f"  HTML: {html}")


@app.command("grad-check")
def grad_check_command(
    tol: Annotated[float, typer.Option("--tol", help="Maximum relative error allowed.")] = 1e-4,
    seed: Annotated[int, typer.Option("--seed", "-s", help="Seed for the random instances.")] = 0,
    case: Annotated[
        list[str] | None,
        typer.Option("--case", help=f"Check only these objectives ({', '.join(GRADIENT_CASES)}). Can be specified multiple times."),
    ] = None,
):
    """Compare autodiff gradients of every objective with central finite differences.

    Runs in float64 on tiny random instances, including the whole generator
    at d_model=16. Exits non-zero when any objective exceeds --tol.
    """
    unknown = sorted(set(case or []) - set(GRADIENT_CASES))
    if unknown:
        console.print(f"[red]Error: unknown case(s) {', '.join(unknown)}[/red]")
        raise typer.Exit(1)

    with _cli_errors():
        reports = gradient_suite(tol=tol, seed=seed, cases=case)

    table = Table(title=f"Gradient check (tol {tol:g})")
    table.add_column("Objective")
    table.add_column("Coordinates", justify="right")
    table.add_column("Max rel. error", justify="right")
    table.add_column("Worst parameter")
    table.add_column("Status")
    for report in reports:
        worst = report.worst
        status = "[green]pass[/green]" if report.passed else "[red]FAIL[/red]"
        table.add_row(report.label, str(report.checked), f"{report.max_rel_error:.3e}", escape(worst.name) if worst else "-", status)
    console.print(table)

    failed = [r.label for r in reports if not r.passed]
    if failed:
        console.print(f"[red]Gradient check failed for: {', '.join(failed)}[/red]")
        raise typer.Exit(1)
    console.print("[green]All gradient checks passed.[/green]")


@app.command("export-svg")
def export_svg(
    pose: Annotated[Path, typer.Argument(help="Pose file to render.", exists=True, dir_okay=False)],
    out: Annotated[Path | None, typer.Option("--out", "-o", help="SVG path (default: next to the pose file).")] = None,
    max_frames: Annotated[int, typer.Option("--max-frames", "-n", help="Frames to draw, evenly spaced.", min=1)] = 12,
    title: Annotated[str | None, typer.Option("--title", "-t", help="SVG title.")] = None,
):
    """Render a pose file as a strip of stick figures (x-y projection)."""
    out = out or pose.with_suffix(".svg")
    with _cli_errors():
        sequence = load_pose(pose)
        export_pose_to_svg(sequence, out, title=title or pose.stem, max_frames=max_frames)
    console.print(f"[green]Exported: {out}[/green]")


def run():
    """Entry point for the CLI."""
    app()


if __name__ == "__main__":
    run()
