"""Self-contained plotting script emitted next to ``series.csv``."""

from collections.abc import Sequence
from pathlib import Path

import structlog
from jinja2 import Environment, PackageLoader, StrictUndefined
from pydantic import BaseModel

from seqcal import __version__
from seqcal.core.models import MetricSeries

logger = structlog.get_logger()

SCRIPT_NAME = "plot_series.py"

_env = Environment(
    loader=PackageLoader("seqcal.report", "templates"),
    undefined=StrictUndefined,
    keep_trailing_newline=True,
)


class Panel(BaseModel):
    x_unit: str
    y_unit: str
    log_y: bool = False


def panels_for(series: Sequence[MetricSeries]) -> list[Panel]:
    """One panel per distinct (x unit, y unit) pair, in first-seen order."""
    seen: dict[tuple[str, str], Panel] = {}
    for s in series:
        key = (s.x_unit, s.y_unit)
        if key not in seen:
            seen[key] = Panel(x_unit=s.x_unit, y_unit=s.y_unit, log_y=s.y_unit == "error")
    return list(seen.values())


def render_plot_script(
    series: Sequence[MetricSeries],
    series_file: str = "series.csv",
    figure_name: str = "series.png",
) -> str:
    template = _env.get_template("plot_series.py.j2")
    return template.render(
        panels=[p.model_dump() for p in panels_for(series)],
        series_file=series_file,
        figure_name=figure_name,
        script_name=SCRIPT_NAME,
        version=__version__,
    )


def write_plot_script(series: Sequence[MetricSeries], out_dir: Path) -> Path:
    path = out_dir / SCRIPT_NAME
    path.write_text(render_plot_script(series))
    logger.debug("plot_script_written", path=str(path), panels=len(panels_for(series)))
    return path
