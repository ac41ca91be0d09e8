"""Static SVG line plots of CSV tables.

Every CSV contributes one line per data column; the first column is the
shared abscissa. Each line is drawn in its own ``<g id="series-...">``
group so the SVG can be inspected without a renderer.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..common.io_utils import ensure_parent, read_table  # noqa: E402

logger = logging.getLogger(__name__)

SVG_PARAMS = {
    "svg.fonttype": "none",
    "svg.hashsalt": "stiff-pinn",
    "path.simplify": False,
}


@dataclass
class PlotSeries:
    label: str
    gid: str
    x: np.ndarray
    y: np.ndarray


def load_series(
    inputs: Sequence[str],
    species: Optional[Sequence[str]] = None,
    logx: bool = False,
) -> Tuple[str, List[PlotSeries]]:
    """Read every CSV and split it into one series per selected column.

    Raises:
        ValueError: On malformed CSVs, differing abscissa columns or a
            ``species`` filter that matches nothing.
    """
    if not inputs:
        raise ValueError("Nothing to plot: pass at least one CSV file")
    abscissa: Optional[str] = None
    series: List[PlotSeries] = []
    seen = set()
    for file_path in inputs:
        columns, rows, _ = read_table(file_path)
        if len(columns) < 2:
            raise ValueError(f"CSV needs an abscissa and at least one data column: {file_path}")
        if abscissa is None:
            abscissa = columns[0]
        elif columns[0] != abscissa:
            raise ValueError(
                f"CSVs must share the abscissa column: {file_path} starts with "
                f"'{columns[0]}', expected '{abscissa}'"
            )
        x = rows[:, 0]
        keep = np.ones(x.size, dtype=bool)
        if logx:
            keep = x > 0
            dropped = int(x.size - keep.sum())
            if dropped:
                logger.warning(
                    "%s: dropped %d row(s) with %s <= 0 from the log x axis",
                    file_path, dropped, abscissa,
                )
        stem = Path(file_path).stem
        for k, name in enumerate(columns[1:], start=1):
            seen.add(name)
            if species and name not in species:
                continue
            label = name if len(inputs) == 1 else f"{name} ({stem})"
            series.append(PlotSeries(label, f"series-{len(series)}-{name}", x[keep], rows[keep, k]))
    missing = [name for name in species or () if name not in seen]
    if missing:
        raise ValueError(f"No column named {', '.join(missing)} in the plotted CSVs")
    return abscissa, series


def plot_csv(
    inputs: Sequence[str],
    output_path: str,
    species: Optional[Sequence[str]] = None,
    logx: bool = False,
    logy: bool = False,
    title: Optional[str] = None,
) -> int:
    """Render the CSV overlay to ``output_path`` as SVG; returns the line count."""
    abscissa, series = load_series(inputs, species, logx)
    ensure_parent(output_path)
    with matplotlib.rc_context(SVG_PARAMS):
        fig, ax = plt.subplots(figsize=(7.0, 4.5))
        try:
            for s in series:
                y = np.where(s.y > 0, s.y, np.nan) if logy else s.y
                (line,) = ax.plot(s.x, y, label=s.label, linewidth=1.2)
                line.set_gid(s.gid)
            if logx:
                ax.set_xscale("log")
            if logy:
                ax.set_yscale("log")
            ax.set_xlabel(abscissa)
            if title:
                ax.set_title(title)
            if series:
                ax.legend(fontsize="small", ncol=2 if len(series) > 8 else 1)
            ax.grid(True, linewidth=0.3)
            fig.tight_layout()
            fig.savefig(output_path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return len(series)
