"""Path CSV format: header ``t,x=<x1>,...``, one row per observation time."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, TextIO, Union

import numpy as np

from .errors import HeaderMalformed, IrregularGrid, MissingValue
from .model import ObservedPath, SamplingScheme


@dataclass(frozen=True)
class IngestReport:
    inferred_delta: float
    n_times: int
    n_sites: int
    warnings: List[str] = field(default_factory=list)


def _site_label(s) -> str:
    if isinstance(s, tuple):
        return " ".join(f"{c:.17g}" for c in s)
    return f"{s:.17g}"


def format_path_csv(path: ObservedPath) -> str:
    sites = path.scheme.sites
    lines = ["t," + ",".join(f"x={_site_label(s)}" for s in sites)]
    times = np.arange(path.levels.shape[0]) * path.delta
    for t, row in zip(times, path.levels):
        lines.append(",".join([f"{t:.17g}"] + [f"{v:.17g}" for v in row]))
    return "\n".join(lines) + "\n"


def write_path_csv(path: ObservedPath, target: Union[str, Path, TextIO]) -> None:
    text = format_path_csv(path)
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", newline="\n") as fh:
            fh.write(text)


def _parse_site(tok: str):
    if not tok.startswith("x="):
        raise HeaderMalformed(f"column header {tok!r} does not start with 'x='")
    body = tok[2:].strip()
    try:
        parts = [float(c) for c in body.split()]
    except ValueError:
        raise HeaderMalformed(f"cannot parse site coordinate {body!r}") from None
    if not parts:
        raise HeaderMalformed("empty site coordinate")
    return parts[0] if len(parts) == 1 else tuple(parts)


def parse_path_csv(text: str, rtol: float = 1e-9):
    lines = text.splitlines()
    if not lines:
        raise HeaderMalformed("empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if header[0] != "t" or len(header) < 2:
        raise HeaderMalformed("header must be 't,x=<x1>,...'")
    sites = tuple(_parse_site(h) for h in header[1:])
    rows = [ln for ln in lines[1:] if ln.strip()]
    if len(rows) < 3:
        raise IrregularGrid("need at least 3 observation rows")
    data = np.empty((len(rows), len(header)))
    for i, ln in enumerate(rows, start=2):
        cells = ln.split(",")
        if len(cells) != len(header):
            raise HeaderMalformed(f"row {i} has {len(cells)} cells, header has {len(header)}")
        for j, c in enumerate(cells):
            c = c.strip()
            try:
                v = float(c) if c else math.nan
            except ValueError:
                raise MissingValue(f"unparseable value {c!r} at row {i}, column {header[j]}") from None
            if not math.isfinite(v):
                raise MissingValue(f"missing or non-finite value at row {i}, column {header[j]}")
            data[i - 2, j] = v
    t = data[:, 0]
    gaps = np.diff(t)
    delta = float(np.median(gaps))
    if not delta > 0:
        raise IrregularGrid("time stamps must increase")
    dev = np.max(np.abs(gaps - delta))
    if dev > rtol * delta:
        k = int(np.argmax(np.abs(gaps - delta)))
        raise IrregularGrid(f"time gap {gaps[k]:.17g} after row {k + 2} deviates from {delta:.17g}")
    warnings = []
    if t[0] != 0.0:
        warnings.append(f"time origin shifted from {t[0]:.17g} to 0")
    n = len(rows) - 1
    # among rounding-level variants of the median gap, prefer the one that regenerates the stamps
    steps = np.arange(n + 1)
    for cand in ((t[-1] - t[0]) / n, t[1] - t[0]):
        if abs(cand - delta) <= rtol * delta and np.array_equal(t[0] + steps * cand, t):
            delta = float(cand)
            break
    scheme = SamplingScheme(delta, n * delta, sites)
    path = ObservedPath(scheme, data[:, 1:])
    return path, IngestReport(delta, len(rows), len(sites), warnings)


def read_path_csv(source: Union[str, Path, TextIO], rtol: float = 1e-9):
    """Parse a path CSV; returns ``(ObservedPath, IngestReport)``.

    The observation step is the median time gap, and every gap must match
    it to relative tolerance ``rtol``.
    """
    if hasattr(source, "read"):
        return parse_path_csv(source.read(), rtol)
    with open(source, newline="") as fh:
        return parse_path_csv(fh.read(), rtol)
