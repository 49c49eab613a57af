"""Reader and writer for the LIBSVM sparse text format.

Each non-blank line is ``label idx:val idx:val ...`` with 1-based, strictly
increasing indices.  Anything after ``#`` is a comment.  Rows are densified on
load; labels are normalized to {-1, +1}.
"""
from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass
from typing import Iterable, Optional, TextIO, Union

import numpy as np


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class LabelFormatError(ValueError):
    def __init__(self, labels):
        self.labels = sorted(labels)
        super().__init__(f"cannot map labels {self.labels} to {{-1, +1}}")


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (N, n), dense
    labels: np.ndarray  # (N,), entries in {-1, +1}

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def shape(self):
        return self.features.shape

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.features.shape == other.features.shape
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels))


_LABEL_MAPS = (
    ({-1.0, 1.0}, {-1.0: -1.0, 1.0: 1.0}),
    ({0.0, 1.0}, {0.0: -1.0, 1.0: 1.0}),
    ({1.0, 2.0}, {1.0: 1.0, 2.0: -1.0}),
)


def _map_labels(raw: list) -> np.ndarray:
    distinct = set(raw)
    for alphabet, table in _LABEL_MAPS:
        if distinct <= alphabet:
            return np.array([table[v] for v in raw], dtype=float)
    raise LabelFormatError(distinct)


def _parse_number(token: str, lineno: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(lineno, f"non-numeric {what} {token!r}") from None
    if not math.isfinite(value):
        raise ParseError(lineno, f"non-finite {what} {token!r}")
    return value


def parse_lines(lines: Iterable[str], n_features: Optional[int] = None) -> Dataset:
    labels, rows = [], []
    max_index = 0
    for lineno, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        tokens = body.split()
        labels.append(_parse_number(tokens[0], lineno, "label"))
        row = {}
        last = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep or not idx_s or not val_s:
                raise ParseError(lineno, f"malformed token {tok!r}")
            if not (idx_s.isascii() and idx_s.isdigit()):
                raise ParseError(lineno, f"malformed index in {tok!r}")
            idx = int(idx_s)
            if idx < 1:
                raise ParseError(lineno, f"index {idx} is not 1-based")
            if idx <= last:
                raise ParseError(lineno, f"index {idx} does not increase (previous {last})")
            row[idx] = _parse_number(val_s, lineno, "value")
            last = idx
        max_index = max(max_index, last)
        rows.append(row)

    n = max_index if n_features is None else int(n_features)
    if n < max_index:
        raise ValueError(f"n_features={n} is smaller than the largest index {max_index}")
    features = np.zeros((len(rows), n))
    for i, row in enumerate(rows):
        for idx, val in row.items():
            features[i, idx - 1] = val
    return Dataset(features, _map_labels(labels) if labels else np.zeros(0))


def parse_libsvm(source: Union[str, os.PathLike, TextIO], n_features: Optional[int] = None) -> Dataset:
    """Parse a LIBSVM file path or an open text stream."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return parse_lines(fh, n_features)
    return parse_lines(source, n_features)


def parse_libsvm_text(text: str, n_features: Optional[int] = None) -> Dataset:
    return parse_lines(io.StringIO(text), n_features)


def serialize_libsvm(ds: Dataset) -> str:
    """Canonical text: integer labels, non-zero entries with round-trip floats.

    An explicit ``n:0`` on the first row pins the feature count when the last
    column is entirely zero.
    """
    out = []
    n = ds.n_features
    pin = n > 0 and ds.n_samples > 0 and not np.any(ds.features[:, n - 1])
    for i in range(ds.n_samples):
        parts = ["%+d" % int(ds.labels[i])]
        row = ds.features[i]
        for j in np.flatnonzero(row):
            parts.append(f"{j + 1}:{float(row[j])!r}")
        if pin and i == 0:
            parts.append(f"{n}:0")
        out.append(" ".join(parts))
    return "".join(line + "\n" for line in out)
