"""Column-labeled datasets, CSV ingestion, and result serialization."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import sys
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Dataset",
    "load_csv",
    "emit_result",
    "load_sim_csv",
    "SIM_CSV_HEADER",
    "TIMING_CSV_HEADER",
]

log = logging.getLogger(__name__)

SIM_CSV_HEADER = "dgp,test,n,gamma,level,rate,mc_se"
TIMING_CSV_HEADER = "dgp,test,n,reps,mean_s,sd_s,median_s,median_rel,iqr_rel"


@dataclass
class Dataset:
    """An (n, m) matrix of finite reals with unique column names."""

    columns: tuple[str, ...]
    values: np.ndarray
    provenance: str = ""
    dropped_rows: int = 0

    def __post_init__(self) -> None:
        self.columns = tuple(str(c) for c in self.columns)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-D array")
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("column names must be unique")
        if self.values.shape[1] != len(self.columns):
            raise ValueError("number of columns does not match the header")
        if self.values.shape[0] < 2:
            raise ValueError("need at least 2 rows")
        if not np.isfinite(self.values).all():
            raise ValueError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def col(self, name: str) -> np.ndarray:
        return self.values[:, self._index(name)].copy()

    def cols(self, names) -> np.ndarray:
        return self.values[:, [self._index(n) for n in names]].copy()

    def _index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise KeyError(f"no column named {name!r}; have {list(self.columns)}") from None


def load_csv(path, required=()) -> Dataset:
    """Load a headered numeric CSV, dropping unusable rows.

    Rows with missing, unparseable, or non-finite cells are dropped and
    counted (reported through ``Dataset.dropped_rows`` and a log line).
    Raises on an empty file or a missing required column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        names = tuple(c.strip() for c in header)
        missing = [c for c in required if c not in names]
        if missing:
            raise ValueError(f"{path}: missing required column(s) {missing}")
        rows: list[list[float]] = []
        dropped = 0
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(names):
                dropped += 1
                log.warning("%s:%d: wrong field count, row dropped", path, lineno)
                continue
            try:
                vals = [float(cell) for cell in row]
            except ValueError:
                dropped += 1
                log.warning("%s:%d: unparseable cell, row dropped", path, lineno)
                continue
            if not all(np.isfinite(v) for v in vals):
                dropped += 1
                log.warning("%s:%d: non-finite cell, row dropped", path, lineno)
                continue
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no usable data rows")
    if dropped:
        log.warning("%s: dropped %d row(s)", path, dropped)
    return Dataset(names, np.asarray(rows, dtype=float), provenance=str(path), dropped_rows=dropped)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _fmt_real(x) -> str:
    # repr() of a Python float round-trips exactly.
    return repr(float(x))


def _guard_cell(text: str) -> str:
    if "," in text or "\n" in text or '"' in text:
        raise ValueError(f"CSV cell {text!r} would need quoting; refusing to emit it")
    return text


def _sim_csv_lines(result) -> list[str]:
    lines = [SIM_CSV_HEADER]
    for r in result.rows:
        lines.append(
            ",".join(
                [
                    _guard_cell(r.dgp),
                    _guard_cell(r.test),
                    str(int(r.n)),
                    _fmt_real(r.gamma),
                    _fmt_real(r.level),
                    _fmt_real(r.rate),
                    _fmt_real(r.mc_se),
                ]
            )
        )
    return lines


def _timing_csv_lines(result) -> list[str]:
    lines = [TIMING_CSV_HEADER]
    for t in result.timings:
        lines.append(
            ",".join(
                [
                    _guard_cell(t.dgp),
                    _guard_cell(t.test),
                    str(int(t.n)),
                    str(int(t.reps)),
                    _fmt_real(t.mean_s),
                    _fmt_real(t.sd_s),
                    _fmt_real(t.median_s),
                    _fmt_real(t.median_rel),
                    _fmt_real(t.iqr_rel),
                ]
            )
        )
    return lines


def emit_result(result, fmt: str = "json", path=None) -> str:
    """Serialize a result to JSON or CSV and write it to ``path`` or stdout.

    Field order is stable.  Reals are printed in round-trip-exact form.
    Returns the emitted text.
    """
    if fmt not in ("json", "csv"):
        raise ValueError(f"unknown format {fmt!r}")
    if fmt == "json":
        payload = result.to_json_dict() if hasattr(result, "to_json_dict") else result
        if dataclasses.is_dataclass(payload) and not isinstance(payload, type):
            payload = dataclasses.asdict(payload)
        text = json.dumps(payload, default=_json_default, indent=2) + "\n"
    else:
        if hasattr(result, "rows") and getattr(result, "rows"):
            text = "\n".join(_sim_csv_lines(result)) + "\n"
        elif hasattr(result, "timings") and getattr(result, "timings"):
            text = "\n".join(_timing_csv_lines(result)) + "\n"
        else:
            raise ValueError("CSV output is only defined for simulation results")
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def load_sim_csv(path):
    """Read back a rejection-rate CSV written by :func:`emit_result`."""
    from .mc import SimResult, SimRow  # local import to avoid a cycle

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if ",".join(header) != SIM_CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = [
            SimRow(
                dgp=r[0],
                test=r[1],
                n=int(r[2]),
                gamma=float(r[3]),
                level=float(r[4]),
                rate=float(r[5]),
                mc_se=float(r[6]),
            )
            for r in reader
        ]
    return SimResult(rows=rows)
