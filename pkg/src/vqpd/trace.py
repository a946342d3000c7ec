"""CSV trace files: one row per recorded iteration, 17 significant digits."""

from __future__ import annotations

import csv
import io
import os

from .solvers import TRACE_COLUMNS, IterationRecord


def _fmt(v) -> str:
    if isinstance(v, int):
        return str(v)
    return "%.17g" % v


def format_trace(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for rec in records:
        w.writerow([_fmt(v) for v in rec.as_row()])
    return buf.getvalue()


def write_trace(path: str | os.PathLike, records) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        fh.write(format_trace(records))


def parse_trace(text: str) -> list[IterationRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != TRACE_COLUMNS:
        raise ValueError("not a trace file: header mismatch")
    out = []
    for row in rows[1:]:
        if len(row) != len(TRACE_COLUMNS):
            raise ValueError(f"trace row has {len(row)} fields")
        out.append(IterationRecord(int(row[0]), *(float(v) for v in row[1:7]), int(row[7])))
    return out


def read_trace(path: str | os.PathLike) -> list[IterationRecord]:
    with open(path, newline="", encoding="ascii") as fh:
        return parse_trace(fh.read())
