"""Atomic file writes and the CSV layout shared by the CLI subcommands.

Data files have a header ``x1,...,xp`` optionally followed by ``label``.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile

import numpy as np

from .errors import ParseError


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write through a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def format_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def data_csv(X, labels=None) -> str:
    X = np.asarray(X, dtype=float)
    header = [f"x{j + 1}" for j in range(X.shape[1])]
    if labels is None:
        rows = ([repr(float(v)) for v in row] for row in X)
    else:
        header.append("label")
        rows = ([repr(float(v)) for v in row] + [int(lab)] for row, lab in zip(X, labels))
    return format_csv(header, rows)


def write_data_csv(path, X, labels=None) -> None:
    atomic_write_text(path, data_csv(X, labels))


def read_data_csv(path):
    """Return ``(X, labels)``; ``labels`` is None without a ``label`` column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", f"{path}:1")
    header = [h.strip() for h in rows[0]]
    has_label = bool(header) and header[-1] == "label"
    p = len(header) - has_label
    if p < 1:
        raise ParseError("no data columns", f"{path}:1")
    X, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", f"{path}:{lineno}")
        try:
            X.append([float(v) for v in row[:p]])
            if has_label:
                labels.append(int(row[-1]))
        except ValueError as exc:
            raise ParseError(str(exc), f"{path}:{lineno}") from None
    if not X:
        raise ParseError("no data rows", f"{path}:2")
    X = np.array(X)
    if not np.all(np.isfinite(X)):
        raise ParseError("non-finite value in data", str(path))
    return X, (np.array(labels) if has_label else None)


def read_labels_csv(path) -> np.ndarray:
    """Labels from a one-column file or from the ``label`` column of a data file."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", f"{path}:1")
    header = [h.strip() for h in rows[0]]
    if "label" not in header:
        raise ParseError("no 'label' column", f"{path}:1")
    col = header.index("label")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            out.append(int(row[col]))
        except (ValueError, IndexError):
            raise ParseError("bad label", f"{path}:{lineno}") from None
    return np.array(out)
