"""Canonical dataset file handling and value standardization.

One schema for every dataset: CSV with header ``x,y,t,value,split``,
split either ``train`` or ``test``, UTF-8, LF newlines, decimal points.
Anything else is rejected with the 1-based line number of the offense.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ..errors import DataFormatError
from ..gp_core import ObservationSet

__all__ = ["load_csv", "write_csv", "write_latent_csv", "Standardizer"]

_HEADER = ["x", "y", "t", "value", "split"]


def _parse_float(text: str, what: str, line: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(f"{what} is not a decimal number: {text!r}", line=line)
    if not math.isfinite(v):
        raise DataFormatError(f"{what} must be finite, got {text!r}", line=line)
    return v


def load_csv(path):
    """Read a canonical dataset file into (train, test) observation sets."""
    rows = {"train": ([], []), "test": ([], [])}
    seen = set()
    # open failures stay OSError: an unreadable file is an I/O problem,
    # not a schema violation
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file: missing header", line=1)
        if [h.strip() for h in header] != _HEADER:
            raise DataFormatError(
                f"header must be exactly {','.join(_HEADER)}", line=1
            )
        n_data = 0
        for line, row in enumerate(reader, start=2):
            if not row:
                raise DataFormatError("blank line in data section", line=line)
            if len(row) != 5:
                raise DataFormatError(
                    f"expected 5 fields, got {len(row)}", line=line
                )
            x = _parse_float(row[0], "x", line)
            y = _parse_float(row[1], "y", line)
            t = _parse_float(row[2], "t", line)
            value = _parse_float(row[3], "value", line)
            split = row[4].strip()
            if split not in rows:
                raise DataFormatError(
                    f"split must be 'train' or 'test', got {split!r}", line=line
                )
            key = (x, y, t, split)
            if key in seen:
                raise DataFormatError(
                    f"duplicate (x,y,t,split) row {key!r}", line=line
                )
            seen.add(key)
            rows[split][0].append((x, y, t))
            rows[split][1].append(value)
            n_data += 1
        if n_data == 0:
            raise DataFormatError("file contains a header but no data rows")

    def build(split):
        pts, vals = rows[split]
        if not pts:
            return ObservationSet(np.zeros((0, 3)), np.zeros(0))
        return ObservationSet(np.asarray(pts, dtype=float), np.asarray(vals))

    return build("train"), build("test")


def _fmt(v: float) -> str:
    # repr round-trips doubles exactly, so written files reload bit-equal
    return repr(float(v))


def write_csv(path, train: ObservationSet, test: ObservationSet) -> None:
    """Write two observation sets as one canonical dataset file."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(",".join(_HEADER) + "\n")
        for obs, split in ((train, "train"), (test, "test")):
            for p, v in zip(obs.points, obs.values):
                handle.write(
                    f"{_fmt(p[0])},{_fmt(p[1])},{_fmt(p[2])},{_fmt(v)},{split}\n"
                )


def write_latent_csv(path, points, latent) -> None:
    """Write true latent values (ground truth for recovery scoring)."""
    points = np.asarray(points, dtype=float)
    latent = np.asarray(latent, dtype=float)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("x,y,t,latent\n")
        for p, z in zip(points, latent):
            handle.write(f"{_fmt(p[0])},{_fmt(p[1])},{_fmt(p[2])},{_fmt(z)}\n")


@dataclass(frozen=True)
class Standardizer:
    """Affine map to zero-mean unit-sd values, fitted on the train split.

    A constant column gets divisor 1 so the transform stays defined; the
    fit then sees an all-zero vector.
    """

    mean: float
    sd: float

    @classmethod
    def fit(cls, values) -> "Standardizer":
        v = np.asarray(values, dtype=float)
        sd = float(np.std(v))
        return cls(float(np.mean(v)), sd if sd > 1e-12 else 1.0)

    @classmethod
    def identity(cls) -> "Standardizer":
        return cls(0.0, 1.0)

    def transform(self, values):
        return (np.asarray(values, dtype=float) - self.mean) / self.sd

    def inverse(self, values):
        return np.asarray(values, dtype=float) * self.sd + self.mean

    def transform_set(self, obs: ObservationSet) -> ObservationSet:
        return ObservationSet(obs.points, self.transform(obs.values))
