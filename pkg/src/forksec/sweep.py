"""Batch experiment driver: run configs, cached sweeps, CSV emission.

A run config is flat ``key=value`` text; any model parameter may carry a
list ``key=[v1,v2,...]`` and the sweep executes the full cross-product
in a fixed axis order, so the output row order never depends on worker
scheduling. Solved points land in a content-addressed disk cache keyed
by the parameter vector and the package version, which makes re-runs
and resumed sweeps byte-identical.

Column names and enum vocabulary follow the figure-data conventions
(``tie_break_mode`` first_heard/random/attacker, ``difficulty_source``
uncontested/main, ``ledger_function`` longest/mad, fee columns ``fee``
and ``guaranteed_fee``, path bound ``acceptable_path_param``).
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import __version__
from .analysis import honest_utility, optimal_revenue, security_threshold
from .mdp import ModelError, SolverConfig, SolverError
from .models import (
    DIFFICULTY_LABELS,
    DIFFICULTY_NAMES,
    LEDGER_LABELS,
    LEDGER_NAMES,
    MODEL_BUILDERS,
    ModelParams,
    TIE_BREAK_LABELS,
    TIE_BREAK_NAMES,
)

COLUMNS = [
    "model",
    "tie_break_mode",
    "difficulty_source",
    "ledger_function",
    "acceptable_path_param",
    "max_fork",
    "max_pool",
    "fee",
    "guaranteed_fee",
    "alpha",
    "Honest",
    "ARR Revenue",
    "Threshold",
]

ERROR_MARKER = "error"

# Sweep axes in cross-product order (later axes vary fastest). Keeping
# alpha innermost lets threshold probes share one cache entry per
# parameter combination.
AXIS_KEYS = [
    "model",
    "tie_break_mode",
    "difficulty_source",
    "ledger_function",
    "acceptable_path_param",
    "max_fork",
    "max_pool",
    "fee",
    "guaranteed_fee",
    "gamma",
    "delta",
    "alpha",
]

_AXIS_TYPES = {
    "model": str,
    "tie_break_mode": str,
    "difficulty_source": str,
    "ledger_function": str,
    "acceptable_path_param": int,
    "max_fork": int,
    "max_pool": int,
    "fee": float,
    "guaranteed_fee": float,
    "gamma": float,
    "delta": float,
    "alpha": float,
}

_AXIS_DEFAULTS = {
    "model": "bitcoin_fee",
    "tie_break_mode": "first_heard",
    "difficulty_source": "uncontested",
    "ledger_function": "longest",
    "acceptable_path_param": 15,
    "max_fork": 10,
    "max_pool": 2,
    "fee": 0.0,
    "guaranteed_fee": 0.0,
    "gamma": 0.0,
    "delta": 0.0,
}

_SCALAR_TYPES = {
    "compute": str,
    "out": str,
    "cache_dir": str,
    "seed": int,
    "workers": int,
    "horizon": float,
    "precision": float,
    "tolerance": float,
}

COMPUTE_CHOICES = ("revenue", "threshold")


@dataclass(frozen=True)
class RunConfig:
    """Parsed sweep description: axes, requested outputs, run settings."""

    axes: dict[str, tuple]
    compute: tuple[str, ...]
    out: Path
    cache_dir: Path | None = None
    seed: int = 0
    workers: int = 1
    tolerance: float = 1.0e-3
    solver: SolverConfig = SolverConfig()

    def points(self) -> list[dict]:
        """The cross-product, one axis-value dict per sweep point."""
        keys = [k for k in AXIS_KEYS if k in self.axes]
        return [
            dict(zip(keys, combo))
            for combo in itertools.product(*(self.axes[k] for k in keys))
        ]


def _convert(key: str, raw: str):
    kind = _AXIS_TYPES.get(key) or _SCALAR_TYPES.get(key)
    if kind is None:
        raise ValueError(f"unknown config key {key!r}")
    if kind is str:
        return raw
    try:
        if kind is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ValueError(f"config key {key}: expected {kind.__name__}, got {raw!r}")


def parse_run_config(text: str, base_dir: Path | None = None) -> RunConfig:
    """Parse flat ``key=value`` text; lists use ``key=[v1,v2,...]``.

    Blank lines and ``#`` comments are ignored. Relative paths resolve
    against ``base_dir``.
    """
    entries: dict[str, list[str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"config line {lineno}: expected key=value, got {line!r}")
        key, _, value = body.partition("=")
        key, value = key.strip(), value.strip()
        if key in entries:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        if value.startswith("[") and value.endswith("]"):
            items = [v.strip() for v in value[1:-1].split(",") if v.strip()]
            if not items:
                raise ValueError(f"config line {lineno}: axis {key!r} is empty")
            entries[key] = items
        else:
            entries[key] = [value]

    axes: dict[str, tuple] = {}
    scalars: dict[str, object] = {}
    for key, raws in entries.items():
        if key in _AXIS_TYPES:
            axes[key] = tuple(_convert(key, raw) for raw in raws)
        elif key in _SCALAR_TYPES:
            if key != "compute" and len(raws) > 1:
                raise ValueError(f"config key {key!r} does not take a list")
            scalars[key] = (
                tuple(raws) if key == "compute" else _convert(key, raws[0])
            )
        else:
            raise ValueError(f"unknown config key {key!r}")

    compute = tuple(scalars.get("compute", ("revenue",)))
    for item in compute:
        if item not in COMPUTE_CHOICES:
            raise ValueError(
                f"compute must be drawn from {COMPUTE_CHOICES}, got {item!r}"
            )
    if "revenue" in compute and "alpha" not in axes:
        raise ValueError("computing revenue requires an alpha axis")
    if "out" not in scalars:
        raise ValueError("config must set out=<csv path>")

    for key, values in axes.items():
        if key in ("model", "tie_break_mode", "difficulty_source", "ledger_function"):
            vocab = {
                "model": MODEL_BUILDERS,
                "tie_break_mode": TIE_BREAK_NAMES,
                "difficulty_source": DIFFICULTY_NAMES,
                "ledger_function": LEDGER_NAMES,
            }[key]
            for v in values:
                if v not in vocab:
                    raise ValueError(
                        f"config key {key}: {v!r} not in {sorted(vocab)}"
                    )

    def _path(name: str) -> Path | None:
        raw = scalars.get(name)
        if raw is None:
            return None
        p = Path(str(raw))
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        return p

    solver = SolverConfig(
        horizon=float(scalars.get("horizon", 1.0e5)),
        precision=float(scalars.get("precision", 1.0e-5)),
    )
    return RunConfig(
        axes=axes,
        compute=compute,
        out=_path("out"),
        cache_dir=_path("cache_dir"),
        seed=int(scalars.get("seed", 0)),
        workers=max(1, int(scalars.get("workers", 1))),
        tolerance=float(scalars.get("tolerance", 1.0e-3)),
        solver=solver,
    )


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_run_config(path.read_text(encoding="utf-8"), base_dir=path.parent)


def _params_for(point: dict, alpha: float | None) -> ModelParams:
    return ModelParams(
        # The threshold search rebinds the power itself; any valid
        # template value works when the point fixes no alpha.
        alpha=0.25 if alpha is None else alpha,
        gamma=point.get("gamma", _AXIS_DEFAULTS["gamma"]),
        delta=point.get("delta", _AXIS_DEFAULTS["delta"]),
        whale_fee=point.get("fee", _AXIS_DEFAULTS["fee"]),
        guaranteed_fee=point.get("guaranteed_fee", _AXIS_DEFAULTS["guaranteed_fee"]),
        fork_sensitivity=point.get(
            "acceptable_path_param", _AXIS_DEFAULTS["acceptable_path_param"]
        ),
        max_fork=point.get("max_fork", _AXIS_DEFAULTS["max_fork"]),
        max_pool=point.get("max_pool", _AXIS_DEFAULTS["max_pool"]),
        tie_break=TIE_BREAK_NAMES[
            point.get("tie_break_mode", _AXIS_DEFAULTS["tie_break_mode"])
        ],
        difficulty_source=DIFFICULTY_NAMES[
            point.get("difficulty_source", _AXIS_DEFAULTS["difficulty_source"])
        ],
        ledger=LEDGER_NAMES[
            point.get("ledger_function", _AXIS_DEFAULTS["ledger_function"])
        ],
    )


def _vector(kind: str, model: str, params: ModelParams, extra: tuple) -> str:
    fields = (
        kind,
        model,
        repr(params.alpha),
        repr(params.gamma),
        repr(params.delta),
        repr(params.whale_fee),
        repr(params.guaranteed_fee),
        str(params.fork_sensitivity),
        str(params.max_fork),
        str(params.max_pool),
        params.tie_break.value,
        params.difficulty_source.value,
        params.ledger.value,
    ) + tuple(repr(x) for x in extra)
    return "|".join(fields)


class SolveCache:
    """Content-addressed JSON cache of solved sweep points.

    Keys hash the canonical parameter vector together with the package
    version, so stale entries from older code never resurface. Insertion
    goes through an atomic rename and is safe under concurrent writers.
    """

    def __init__(self, root: Path | None) -> None:
        self.root = root
        if root is not None:
            root.mkdir(parents=True, exist_ok=True)

    def _file(self, vector: str) -> Path:
        digest = hashlib.sha256(
            f"{__version__}|{vector}".encode("utf-8")
        ).hexdigest()
        return self.root / f"{digest}.json"

    def get(self, vector: str) -> dict | None:
        if self.root is None:
            return None
        path = self._file(vector)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError):
            return None

    def put(self, vector: str, payload: dict) -> None:
        if self.root is None:
            return
        path = self._file(vector)
        tmp = path.with_suffix(f".tmp-{threading.get_ident()}")
        tmp.write_text(
            json.dumps({"vector": vector, **payload}, sort_keys=True),
            encoding="utf-8",
        )
        tmp.replace(path)


def _solved_ratio(cache: SolveCache, model: str, params: ModelParams,
                  cfg: SolverConfig) -> float:
    vector = _vector("revenue", model, params, (cfg.horizon, cfg.precision))
    hit = cache.get(vector)
    if hit is not None:
        return float(hit["rho"])
    res = optimal_revenue(params, model, cfg)
    cache.put(vector, {"rho": res.ratio, "rounds": res.rounds,
                       "backend": res.backend})
    return res.ratio


def _solved_threshold(cache: SolveCache, model: str, params: ModelParams,
                      tol: float, cfg: SolverConfig) -> float:
    vector = _vector(
        "threshold", model, replace(params, alpha=0.25),
        (tol, cfg.horizon, cfg.precision),
    )
    hit = cache.get(vector)
    if hit is not None:
        return float(hit["threshold"])
    res = security_threshold(params, model, tol, cfg)
    cache.put(vector, {
        "threshold": res.threshold,
        "bracket": res.bracket,
        "probes": len(res.probes),
        "note": res.note,
    })
    return res.threshold


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _solve_point(point: dict, config: RunConfig, cache: SolveCache) -> tuple[dict, dict]:
    """One sweep point -> (CSV cells, manifest entry)."""
    alpha = point.get("alpha")
    model = point.get("model", _AXIS_DEFAULTS["model"])
    cells = {k: _format(v) for k, v in point.items() if k in COLUMNS}
    cells.setdefault("model", model)
    meta: dict = {"point": {k: point[k] for k in sorted(point)}, "status": "ok"}
    started = time.monotonic()
    try:
        if "revenue" in config.compute:
            params = _params_for(point, alpha)
            cells["Honest"] = _format(honest_utility(params))
            cells["ARR Revenue"] = _format(
                _solved_ratio(cache, model, params, config.solver)
            )
        if "threshold" in config.compute:
            params = _params_for(point, None)
            cells["Threshold"] = _format(
                _solved_threshold(cache, model, params, config.tolerance,
                                  config.solver)
            )
    except (ModelError, SolverError) as err:
        meta["status"] = "error"
        meta["error"] = str(err)
        if "revenue" in config.compute:
            cells.setdefault("Honest", ERROR_MARKER)
            cells["ARR Revenue"] = ERROR_MARKER
        if "threshold" in config.compute:
            cells["Threshold"] = ERROR_MARKER
    meta["seconds"] = round(time.monotonic() - started, 3)
    return cells, meta


def run_sweep(config: RunConfig, log=sys.stderr) -> Path:
    """Execute the cross-product and write the CSV and its manifest.

    Rows are written incrementally in deterministic cross-product order
    no matter how the worker pool schedules the points; failures mark
    their row and are recorded in the ``<out>.manifest.json`` sidecar
    along with solver settings and timings.
    """
    points = config.points()
    if not points:
        raise ValueError("sweep has no points")
    print(f"sweep: {len(points)} points -> {config.out}", file=log, flush=True)
    cache = SolveCache(config.cache_dir)
    config.out.parent.mkdir(parents=True, exist_ok=True)

    results: dict[int, tuple[dict, dict]] = {}
    manifest_entries: list[dict | None] = [None] * len(points)
    lock = threading.Lock()
    next_row = 0

    with config.out.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS, restval="")
        writer.writeheader()
        fh.flush()

        def flush_ready() -> None:
            nonlocal next_row
            while next_row < len(points) and next_row in results:
                cells, meta = results.pop(next_row)
                writer.writerow(cells)
                fh.flush()
                manifest_entries[next_row] = meta
                next_row += 1

        if config.workers == 1:
            for i, point in enumerate(points):
                results[i] = _solve_point(point, config, cache)
                flush_ready()
        else:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                futures = {
                    pool.submit(_solve_point, point, config, cache): i
                    for i, point in enumerate(points)
                }
                for future, i in futures.items():
                    cells_meta = future.result()
                    with lock:
                        results[i] = cells_meta
                        flush_ready()

    failures = sum(1 for m in manifest_entries if m and m["status"] != "ok")
    manifest = {
        "version": __version__,
        "out": str(config.out),
        "compute": list(config.compute),
        "solver": {
            "horizon": config.solver.horizon,
            "precision": config.solver.precision,
        },
        "tolerance": config.tolerance,
        "workers": config.workers,
        "seed": config.seed,
        "points": len(points),
        "failures": failures,
        "entries": manifest_entries,
    }
    manifest_path = config.out.with_name(config.out.name + ".manifest.json")
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )
    if failures:
        print(f"sweep: {failures} points failed; see {manifest_path}",
              file=log, flush=True)
    return config.out


_ENUM_COLUMNS = {
    "model": set(MODEL_BUILDERS),
    "tie_break_mode": set(TIE_BREAK_NAMES),
    "difficulty_source": set(DIFFICULTY_NAMES),
    "ledger_function": set(LEDGER_NAMES),
}


@dataclass
class VerifyReport:
    """Outcome of a CSV-against-golden comparison."""

    ok: bool
    checked_rows: int
    mismatches: list[str] = field(default_factory=list)

    def __str__(self) -> str:
        state = "pass" if self.ok else "fail"
        lines = [f"verify: {state} ({self.checked_rows} rows)"]
        lines.extend(self.mismatches[:50])
        if len(self.mismatches) > 50:
            lines.append(f"... and {len(self.mismatches) - 50} more")
        return "\n".join(lines)


def _read_csv(path: Path) -> tuple[list[str], list[dict]]:
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty CSV")
        return list(reader.fieldnames), list(reader)


def verify_csv(
    path: str | Path,
    golden: str | Path,
    tolerances: dict[str, float] | float = 0.0,
) -> VerifyReport:
    """Row-aligned comparison of ``path`` against ``golden``.

    Numeric cells compare within the column's tolerance (``tolerances``
    may be a single number for all columns or a per-column mapping);
    everything else must match exactly. Mismatched headers or an enum
    value outside the schema vocabulary raise instead of reporting.
    """
    header_a, rows_a = _read_csv(Path(path))
    header_b, rows_b = _read_csv(Path(golden))
    if header_a != header_b:
        raise ValueError(
            f"schema mismatch: {header_a!r} vs {header_b!r}"
        )
    for name, rows in (("file", rows_a), ("golden", rows_b)):
        for i, row in enumerate(rows):
            for col, vocab in _ENUM_COLUMNS.items():
                value = row.get(col, "")
                if value and value not in vocab:
                    raise ValueError(
                        f"{name} row {i}: {col}={value!r} not in {sorted(vocab)}"
                    )

    report = VerifyReport(ok=True, checked_rows=min(len(rows_a), len(rows_b)))
    if len(rows_a) != len(rows_b):
        report.ok = False
        report.mismatches.append(
            f"row count {len(rows_a)} vs {len(rows_b)}"
        )

    def tol_for(column: str) -> float:
        if isinstance(tolerances, dict):
            return float(tolerances.get(column, 0.0))
        return float(tolerances)

    for i, (ra, rb) in enumerate(zip(rows_a, rows_b)):
        for col in header_a:
            va, vb = ra.get(col, ""), rb.get(col, "")
            if va == vb:
                continue
            try:
                fa, fb = float(va), float(vb)
            except ValueError:
                report.ok = False
                report.mismatches.append(f"row {i} {col}: {va!r} != {vb!r}")
                continue
            if abs(fa - fb) > tol_for(col):
                report.ok = False
                report.mismatches.append(
                    f"row {i} {col}: {fa} vs {fb} exceeds tol {tol_for(col)}"
                )
    return report
