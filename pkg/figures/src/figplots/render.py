"""Turn sweep CSVs into static multi-panel figures.

Extraction is separated from drawing so the plotted numbers can be
checked against the CSV directly: `extract_figure` returns the exact
per-panel, per-series values, `build_figure` draws them with stable
colors and markers, and `render` writes one vector and one raster file.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib
from matplotlib.figure import Figure

from .spec import FAMILIES, FigureSpec

# Series within a panel are keyed by the protocol-identity columns.
SERIES_COLUMNS = ("model", "difficulty_source", "ledger_function")

# Enum values appear under their prose names wherever they are printed.
DISPLAY_NAMES = {
    "attacker": "Worst-case",
    "first_heard": "First heard",
    "random": "Random",
}

_AXIS_LABELS = {
    "alpha": "Miner power",
    "acceptable_path_param": "Fork sensitivity",
    "guaranteed_fee": "Guaranteed fee",
    "fee": "Whale fee",
    "max_fork": "Fork length cap",
    "max_pool": "Whale pool cap",
    "ARR Revenue": "Revenue rate",
    "Threshold": "Security threshold",
}

_MARKERS = ("o", "s", "^", "D", "v", "P", "X", "*")
_COLORS = matplotlib.colormaps["tab10"].colors
_SVG_SALT = "figplots"


@dataclass(frozen=True)
class Series:
    key: tuple[str, ...]
    label: str
    xs: tuple[float, ...]
    ys: tuple[float, ...]


@dataclass(frozen=True)
class Panel:
    value: str
    title: str
    series: tuple[Series, ...]
    # (x, y) pairs of the honest reference line, when the family has one.
    honest: tuple[tuple[float, float], ...] = ()


@dataclass(frozen=True)
class ExtractedFigure:
    family: str
    x_column: str
    y_column: str
    log_x: bool
    panels: tuple[Panel, ...]


def _display(value: str) -> str:
    return DISPLAY_NAMES.get(value, value)


def _cell(row: dict[str, str], column: str, lineno: int) -> float:
    raw = row[column]
    try:
        return float(raw)
    except ValueError:
        raise ValueError(
            f"row {lineno}: column {column!r} holds {raw!r}, not a number"
        ) from None


def extract_figure(spec: FigureSpec) -> ExtractedFigure:
    """Slice the CSV into the exact values the figure will show.

    Rows keep their file order within each series; nothing is smoothed,
    sorted, or interpolated. Raises on columns absent from the header,
    on non-numeric cells in the plotted columns, and on filters that
    leave no rows.
    """
    if spec.csv is None:
        raise ValueError("figure spec sets no csv path")
    x_column, y_column, log_x = FAMILIES[spec.family]

    with Path(spec.csv).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)

    needed = [spec.group_by, *(col for col, _ in spec.filters),
              x_column, y_column, *SERIES_COLUMNS]
    missing = sorted({col for col in needed if col not in header})
    if missing:
        raise ValueError(f"CSV {spec.csv} lacks column(s) {missing}")

    kept = [
        (lineno, row)
        for lineno, row in enumerate(rows, start=2)
        if all(row[col] in values for col, values in spec.filters)
    ]
    if not kept:
        raise ValueError("empty series: no CSV rows match the filters")

    panels = []
    for value in sorted({row[spec.group_by] for _, row in kept}):
        in_panel = [(n, row) for n, row in kept if row[spec.group_by] == value]
        keys = sorted({tuple(row[c] for c in SERIES_COLUMNS) for _, row in in_panel})
        series = []
        for key in keys:
            members = [
                (n, row) for n, row in in_panel
                if tuple(row[c] for c in SERIES_COLUMNS) == key
            ]
            label = ", ".join(_display(part) for part in key if part)
            series.append(Series(
                key=key,
                label=label or "all",
                xs=tuple(_cell(row, x_column, n) for n, row in members),
                ys=tuple(_cell(row, y_column, n) for n, row in members),
            ))
        honest: tuple[tuple[float, float], ...] = ()
        if spec.family == "revenue-vs-alpha":
            pairs = []
            for n, row in in_panel:
                pair = (_cell(row, x_column, n), _cell(row, "Honest", n))
                if pair not in pairs:
                    pairs.append(pair)
            honest = tuple(pairs)
        panels.append(Panel(
            value=value, title=_display(value),
            series=tuple(series), honest=honest,
        ))

    return ExtractedFigure(
        family=spec.family, x_column=x_column, y_column=y_column,
        log_x=log_x, panels=tuple(panels),
    )


def build_figure(spec: FigureSpec) -> Figure:
    """Draw the extracted values into a one-row multi-panel figure."""
    data = extract_figure(spec)
    n = len(data.panels)
    fig = Figure(figsize=(3.6 * n, 3.0), layout="constrained")
    axes = fig.subplots(1, n, sharey=True, squeeze=False)[0]

    # One color/marker per series key across the whole figure, assigned
    # in sorted-key order so reruns and panel subsets agree.
    all_keys = sorted({s.key for panel in data.panels for s in panel.series})
    style = {
        key: (_COLORS[i % len(_COLORS)], _MARKERS[i % len(_MARKERS)])
        for i, key in enumerate(all_keys)
    }

    for ax, panel in zip(axes, data.panels):
        if panel.honest:
            ax.plot(
                [x for x, _ in panel.honest], [y for _, y in panel.honest],
                color="black", linestyle="--", linewidth=1.0, label="Honest",
            )
        for s in panel.series:
            color, marker = style[s.key]
            ax.plot(s.xs, s.ys, color=color, marker=marker,
                    markersize=4, label=s.label)
        if data.log_x:
            ax.set_xscale("log", base=2)
        ax.set_title(panel.title)
        ax.set_xlabel(_AXIS_LABELS.get(data.x_column, data.x_column))
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize="small")
    axes[0].set_ylabel(_AXIS_LABELS.get(data.y_column, data.y_column))
    return fig


def render(spec: FigureSpec) -> list[Path]:
    """Write ``<family>.svg`` and ``<family>.png`` under ``spec.out``.

    Output bytes depend only on the spec, the CSV, and the installed
    tool versions: the SVG id salt is pinned and no timestamps are
    embedded.
    """
    if spec.out is None:
        raise ValueError("figure spec sets no out directory")
    fig = build_figure(spec)
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    svg = out / f"{spec.family}.svg"
    png = out / f"{spec.family}.png"
    with matplotlib.rc_context({"svg.hashsalt": _SVG_SALT}):
        # Dropping the Date entry keeps rerun bytes identical.
        fig.savefig(svg, format="svg", metadata={"Date": None})
        fig.savefig(png, format="png", dpi=150)
    return [svg, png]
