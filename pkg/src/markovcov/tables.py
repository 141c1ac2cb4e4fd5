"""CSV input and output.

Every CSV written here starts with provenance lines prefixed by ``#``.
Curve files come in two layouts:

* dense: first row is the grid, each further row one curve;
* long: header ``curve_id,t,y`` and one observation per row.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .processes import Grid, ObservationSet

__all__ = ["ResultTable", "config_hash", "read_curves", "write_curves"]


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def _provenance_lines(provenance):
    return "".join(f"# {k}={v}\n" for k, v in (provenance or {}).items())


def config_hash(config: dict) -> str:
    """Short SHA-256 of a JSON-serialized configuration."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ResultTable:
    """Named columns and rows with a provenance block."""

    name: str
    columns: list
    rows: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def add(self, **values):
        missing = set(self.columns) - set(values)
        if missing:
            raise KeyError(f"missing columns {sorted(missing)}")
        self.rows.append([values[c] for c in self.columns])

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def records(self):
        return [dict(zip(self.columns, r)) for r in self.rows]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(_provenance_lines(self.provenance))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(x) for x in r])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def read_csv(cls, path, name=None) -> "ResultTable":
        lines = Path(path).read_text().splitlines()
        prov = {}
        body = []
        for line in lines:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                prov[k] = v
            else:
                body.append(line)
        reader = csv.reader(body)
        columns = next(reader)
        return cls(name or Path(path).stem, columns, [list(r) for r in reader], prov)


def write_curves(obs: ObservationSet, path=None, provenance=None) -> str:
    """Write curves in the dense layout, or the long layout when irregular."""
    buf = io.StringIO()
    buf.write(_provenance_lines(provenance))
    w = csv.writer(buf, lineterminator="\n")
    if obs.is_dense:
        w.writerow([repr(float(t)) for t in obs.grid.points])
        for y in obs.values:
            w.writerow([repr(float(v)) for v in y])
    else:
        w.writerow(["curve_id", "t", "y"])
        for i, (t, y) in enumerate(obs.curves()):
            for a, b in zip(t, y):
                w.writerow([i, repr(float(a)), repr(float(b))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_curves(path, noise_sd: float = 0.0) -> ObservationSet:
    """Read a curve CSV in either layout."""
    rows = [r for r in csv.reader(
        line for line in Path(path).read_text().splitlines()
        if line.strip() and not line.startswith("#"))]
    if not rows:
        raise ValueError(f"{path}: no data")
    header = [c.strip() for c in rows[0]]
    if header[:3] == ["curve_id", "t", "y"]:
        ids, ts, ys = [], [], []
        for r in rows[1:]:
            ids.append(r[0])
            ts.append(float(r[1]))
            ys.append(float(r[2]))
        order = list(dict.fromkeys(ids))
        ids = np.array(ids)
        ts, ys = np.array(ts), np.array(ys)
        return ObservationSet.irregular([ts[ids == k] for k in order],
                                        [ys[ids == k] for k in order], noise_sd)
    grid = Grid([float(x) for x in header])
    try:
        Y = np.array([[float(x) for x in r] for r in rows[1:]])
    except ValueError as exc:
        raise ValueError(f"{path}: missing or non-numeric value in dense curve file") from exc
    if Y.ndim != 2 or Y.shape[1] != len(grid):
        raise ValueError(f"{path}: every curve row must have one value per grid point")
    return ObservationSet.dense(grid, Y, noise_sd)
