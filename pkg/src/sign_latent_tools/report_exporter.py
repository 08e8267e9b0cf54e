"""Evaluation reports as Markdown, and as HTML rendered from that Markdown."""

from pathlib import Path

import markdown
from jinja2 import Environment, FileSystemLoader, select_autoescape
from markupsafe import Markup

from .evaluation import REGIONS, EvaluationReport

TEMPLATES_DIR = Path(__file__).parent / "templates"

_md_converter = markdown.Markdown(extensions=["tables", "sane_lists"])


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def report_to_markdown(report: EvaluationReport, title: str = "DTW-MJE evaluation", baseline: EvaluationReport | None = None) -> str:
    """Summary section, optional baseline comparison, then one table row per sample."""
    lines = [f"# {title}", "", f"- Samples: {len(report.samples)}", f"- Aggregate DTW-MJE: {_fmt(report.aggregate)}"]
    lines.extend(f"- {region}: {_fmt(report.region_aggregate(region))}" for region in REGIONS)
    if baseline is not None:
        ratio = baseline.aggregate / report.aggregate if report.aggregate > 0 else float("inf")
        lines.extend(["", "## Shuffled-pairing baseline", "", f"- Baseline DTW-MJE: {_fmt(baseline.aggregate)}", f"- Baseline / generated: {ratio:.2f}x"])

    header = ["sample", "DTW-MJE", *REGIONS, "generated frames", "reference frames"]
    lines.extend(["", "## Samples", "", "| " + " | ".join(header) + " |", "|" + "---|" * len(header)])
    for sample in report.samples:
        cells = [sample.sample_id, _fmt(sample.dtw_mje), *(_fmt(sample.regions[r]) for r in REGIONS), str(sample.generated_length), str(sample.reference_length)]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _markdown_to_html(text: str) -> str:
    _md_converter.reset()
    return _md_converter.convert(text)


def report_to_html(report: EvaluationReport, title: str = "DTW-MJE evaluation", baseline: EvaluationReport | None = None) -> str:
    """Self-contained HTML page for the report."""
    env = Environment(loader=FileSystemLoader(str(TEMPLATES_DIR)), autoescape=select_autoescape(["html", "j2"]))
    body = Markup(_markdown_to_html(report_to_markdown(report, title, baseline)))  # noqa: S704
    return env.get_template("report.html.j2").render(title=title, body=body)


def export_report_html(report: EvaluationReport, output_path: Path | str, title: str = "DTW-MJE evaluation", baseline: EvaluationReport | None = None) -> Path:
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text(report_to_html(report, title, baseline), encoding="utf-8")
    return output_path
