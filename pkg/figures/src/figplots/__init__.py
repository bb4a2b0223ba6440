"""Static figure rendering for protocol security sweep CSVs."""

__version__ = "0.1.0"

from .render import (
    DISPLAY_NAMES,
    ExtractedFigure,
    Panel,
    SERIES_COLUMNS,
    Series,
    build_figure,
    extract_figure,
    render,
)
from .spec import FAMILIES, FigureSpec, load_figure_spec, parse_figure_spec

__all__ = [
    "DISPLAY_NAMES",
    "ExtractedFigure",
    "FAMILIES",
    "FigureSpec",
    "Panel",
    "SERIES_COLUMNS",
    "Series",
    "build_figure",
    "extract_figure",
    "load_figure_spec",
    "parse_figure_spec",
    "render",
]
