"""Figure specs: which plot family to draw from which sweep CSV, and how
to slice the rows into panels and series.

The spec file shares the sweep run-config syntax: flat ``key=value``
lines, ``[v1, v2]`` lists, ``#`` comments. Reserved keys are ``family``,
``csv``, ``out``, and ``group_by``; every other key names a CSV column
and filters rows to the listed values.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

# family -> (x column, y column, log-base-2 x axis)
FAMILIES = {
    "revenue-vs-alpha": ("alpha", "ARR Revenue", False),
    "threshold-vs-forksensitivity": ("acceptable_path_param", "Threshold", False),
    "threshold-vs-guaranteedfee": ("guaranteed_fee", "Threshold", True),
    "threshold-vs-whalefee": ("fee", "Threshold", True),
    "threshold-vs-maxfork": ("max_fork", "Threshold", False),
    "threshold-vs-maxpool": ("max_pool", "Threshold", False),
    "model-comparison": ("alpha", "ARR Revenue", False),
}

_RESERVED = ("family", "csv", "out", "group_by")


@dataclass(frozen=True)
class FigureSpec:
    """One figure to render: a family, its input CSV, and row slicing."""

    family: str
    csv: Path | None = None
    out: Path | None = None
    group_by: str = "tie_break_mode"
    filters: tuple[tuple[str, tuple[str, ...]], ...] = field(default=())

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(
                f"unknown figure family {self.family!r}; "
                f"choose from {sorted(FAMILIES)}"
            )

    def with_paths(self, csv: Path | None, out: Path | None) -> "FigureSpec":
        """Copy with ``csv``/``out`` overridden where given."""
        return replace(
            self,
            csv=csv if csv is not None else self.csv,
            out=out if out is not None else self.out,
        )


def parse_figure_spec(text: str, base_dir: Path | None = None) -> FigureSpec:
    """Parse flat ``key=value`` text; lists use ``key=[v1,v2,...]``.

    Blank lines and ``#`` comments are ignored. Relative paths resolve
    against ``base_dir``.
    """
    entries: dict[str, tuple[str, ...]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"spec line {lineno}: expected key=value, got {line!r}")
        key, _, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if key in entries:
            raise ValueError(f"spec line {lineno}: duplicate key {key!r}")
        if value.startswith("[") and value.endswith("]"):
            items = tuple(v.strip() for v in value[1:-1].split(",") if v.strip())
            if not items:
                raise ValueError(f"spec line {lineno}: filter {key!r} is empty")
            entries[key] = items
        else:
            entries[key] = (value,)

    if "family" not in entries:
        raise ValueError("spec must set family=<figure family>")
    for key in _RESERVED:
        if key in entries and len(entries[key]) > 1:
            raise ValueError(f"spec key {key!r} does not take a list")

    def _path(name: str) -> Path | None:
        if name not in entries:
            return None
        p = Path(entries[name][0])
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        return p

    filters = tuple(
        (key, values) for key, values in entries.items() if key not in _RESERVED
    )
    return FigureSpec(
        family=entries["family"][0],
        csv=_path("csv"),
        out=_path("out"),
        group_by=entries.get("group_by", ("tie_break_mode",))[0],
        filters=filters,
    )


def load_figure_spec(path: str | Path) -> FigureSpec:
    path = Path(path)
    return parse_figure_spec(path.read_text(encoding="utf-8"), base_dir=path.parent)
