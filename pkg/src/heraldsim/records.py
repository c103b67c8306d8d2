"""Output files: a CSV table with a ``#`` metadata preamble and a JSON run record.

The table carries no timing information, so reruns with the same seed are
byte-identical.  The JSON sidecar holds the same rows plus ``wall_time_s``.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable

from . import __version__
from .model import SystemConfig


def unit_of(name: str) -> str:
    base = name.removesuffix("_se").removesuffix("_analytic")
    if base.split("_")[0] in ("N", "n", "dN"):
        return "counts/s"
    if "rate" in base and not base.endswith(("_gain", "_rel_dev")) and "fraction" not in base:
        return "counts/s"
    if base.endswith("deadtime_s") or base.endswith("_tau_s"):
        return "s"
    if base.endswith("clock_rate_hz"):
        return "Hz"
    return "1"


def _clean(x: Any) -> Any:
    """NaN and inf become None so that records survive a JSON round trip."""
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def assumptions(cfg: SystemConfig) -> list[str]:
    """Modelling assumptions that are not measured quantities, for output metadata."""
    out = [f"pair distribution: {cfg.source.pair_distribution.value} (assumed)"]
    for i, d in enumerate(cfg.heralding.detectors):
        out.append(f"heralding detector {i + 1} afterpulsing: A = {d.afterpulse_amplitude!r} per gate, "
                   f"decay {d.afterpulse_tau_s!r} s (assumed, not measured)")
    out.append("noise photons per noisy gate: Poisson, conditioned on at least one (assumed)")
    return out


@dataclass
class RunRecord:
    digest: str
    seed: int
    version: str
    scenario: str
    rows: list[dict[str, Any]]
    wall_time_s: float
    config: dict[str, Any] = field(default_factory=dict)
    assumptions: list[str] = field(default_factory=list)
    counters: dict[str, Any] | None = None

    def __post_init__(self):
        # JSON-native containers, so that from_json(to_json()) compares equal
        self.rows = _clean(self.rows)
        self.config = _clean(self.config)
        self.assumptions = list(self.assumptions)
        self.counters = _clean(self.counters)

    def to_json(self) -> str:
        return json.dumps(_clean(asdict(self)), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls(**json.loads(text))


def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if not math.isfinite(v) else repr(v)
    return str(v)


def table_text(rows: Iterable[dict[str, Any]], *, scenario: str, digest: str, seed: int,
               extra_meta: Iterable[str] = ()) -> str:
    """CSV text for row dicts shaped like ``SweepRow.to_dict()``."""
    rows = list(rows)
    coord_names: list[str] = []
    metric_names: list[str] = []
    analytic_names: list[str] = []
    for r in rows:
        for k in r["coords"]:
            if k not in coord_names:
                coord_names.append(k)
        for k in r["metrics"]:
            if k not in metric_names:
                metric_names.append(k)
        for k in r["analytic"]:
            if k not in analytic_names:
                analytic_names.append(k)
    axis = rows[0]["axis"] if rows else "axis"
    header = [f"{axis} [{unit_of(axis)}]", "replicate", "seed", "config_digest"]
    header += [f"{c} [{unit_of(c)}]" for c in coord_names]
    for mname in metric_names:
        header += [f"{mname} [{unit_of(mname)}]", f"{mname}_se [{unit_of(mname)}]"]
    header += [f"{a}_analytic [{unit_of(a)}]" for a in analytic_names]
    header.append("errors")
    lines = [f"# heraldsim {__version__}", f"# scenario: {scenario}", f"# config_digest: {digest}",
             f"# seed: {seed}"]
    lines += [f"# {m}" for m in extra_meta]
    lines.append(",".join(_csv_cell(h) for h in header))
    for r in rows:
        cells = [_fmt(float(r["axis_value"])), str(r["replicate"]), str(r["seed"]), r["digest"]]
        cells += [_fmt(r["coords"].get(c)) for c in coord_names]
        for mname in metric_names:
            m = r["metrics"].get(mname)
            cells += ["", ""] if m is None else [_fmt(float(m["value"])), _fmt(float(m["std_error"]))]
        cells += [_fmt(r["analytic"].get(a)) for a in analytic_names]
        cells.append(_csv_cell("; ".join(f"{k}: {v}" for k, v in sorted(r["errors"].items()))))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _csv_cell(s: str) -> str:
    if any(ch in s for ch in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def read_table(path: str | Path) -> tuple[dict[str, str], list[dict[str, str]]]:
    """(metadata, rows) from a table written by ``table_text``; values stay strings."""
    import csv
    meta: dict[str, str] = {}
    body = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition(": ")
            if val:
                meta[key] = val
        else:
            body.append(line)
    return meta, list(csv.DictReader(body))


def write_atomic(path: str | Path, text: str) -> None:
    """Write via a temporary file and rename, so a failed run leaves no partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
