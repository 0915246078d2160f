"""
Report rendering for finished runs.
Renders the markdown report with Jinja2 and prints summaries as CSV or JSON.
"""
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Optional

import pandas as pd
from jinja2 import Environment, FileSystemLoader, TemplateNotFound, TemplateSyntaxError

import config
from utils.errors import ConfigNotFoundError, SimulationError
from utils.io import read_json_file, read_summary_csv, write_text_atomic

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("csv", "json", "md")


def _fmt(value, digits: int = 4) -> str:
    if value is None or (isinstance(value, float) and pd.isna(value)):
        return "–"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def _require(path: Path) -> Path:
    if not path.exists():
        raise ConfigNotFoundError(f"run output not found: {path}")
    return path


def render_markdown(run_dir: Path, template_path: Optional[Path] = None) -> str:
    """
    Render the markdown report of a run directory.

    Args:
        run_dir: Directory written by a simulate or sweep run
        template_path: Jinja2 template (default: templates/report.md.j2)

    Returns:
        Rendered markdown

    Raises:
        ConfigNotFoundError: If the run directory lacks summary files
        SimulationError: If the template is missing or broken
    """
    template_path = template_path or config.TEMPLATES_DIR / config.REPORT_TEMPLATE
    summary = read_summary_csv(_require(run_dir / "summary.csv"))
    details = read_json_file(_require(run_dir / "summary.json"))
    resolved_path = run_dir / "resolved_config.json"
    resolved = read_json_file(resolved_path) if resolved_path.exists() else {}

    try:
        logger.info(f"Rendering markdown from template: {template_path}")
        env = Environment(loader=FileSystemLoader(str(template_path.parent)), keep_trailing_newline=True)
        env.filters["fmt"] = _fmt
        template = env.get_template(template_path.name)

        has_sweep = "sweep_param" in summary.columns
        context = {
            'run_dir': run_dir,
            'generation_date': datetime.now().strftime('%Y-%m-%d %H:%M:%S'),
            'market': resolved.get("market", {}),
            'mode': resolved.get("mode"),
            'sweep': resolved.get("sweep"),
            'has_sweep': has_sweep,
            'rows': summary.to_dict(orient="records"),
            'experiments': details.get("experiments", []),
        }
        text = template.render(**context)
        logger.info("Markdown rendered successfully")
        return text

    except TemplateNotFound as e:
        logger.error(f"Template not found: {e}")
        raise SimulationError(f"Template file not found: {template_path}") from e

    except TemplateSyntaxError as e:
        logger.error(f"Template syntax error: {e}")
        raise SimulationError(f"Template syntax error in {template_path}: {e}") from e


def write_markdown_report(run_dir: Path, template_path: Optional[Path] = None) -> Path:
    """Render and write <run_dir>/report.md."""
    text = render_markdown(run_dir, template_path)
    output_path = run_dir / "report.md"
    write_text_atomic(output_path, text)
    logger.info(f"Report written: {output_path}")
    return output_path


def build_report(run_dir: Path, fmt: str = "md") -> str:
    """
    Produce a report of a finished run in the requested format.

    Returns:
        For csv and json the summary text; for md the path of report.md
    """
    run_dir = Path(run_dir)
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"Unknown report format: {fmt}")
    if fmt == "md":
        return str(write_markdown_report(run_dir))
    if fmt == "csv":
        return read_summary_csv(_require(run_dir / "summary.csv")).to_csv(index=False, lineterminator="\n")
    details = read_json_file(_require(run_dir / "summary.json"))
    return json.dumps(details, ensure_ascii=False, indent=2)
