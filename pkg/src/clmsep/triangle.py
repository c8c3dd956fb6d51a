"""Run-off triangle data model and CSV I/O.

A claims square holds cumulative amounts ``C[i, t]`` for accident year ``i``
and development year ``t`` (both 1-based in documentation and error
messages, 0-based in storage). The observation mask is always the standard
north-west triangle ``{(i, t): i + t <= T + 1}``: cells outside it may still
carry values (simulators produce full squares; the exact-MSEP oracle needs
them) but estimators only ever read the masked region.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DataError


def standard_mask(T: int) -> np.ndarray:
    """Boolean (T, T) mask, True where i + t <= T + 1 (1-based)."""
    idx = np.arange(T)
    return (idx[:, None] + idx[None, :]) <= (T - 1)


@dataclass(frozen=True)
class Triangle:
    """Cumulative claims square with the standard observation mask.

    Attributes:
        cells: (T, T) float64; cumulative amounts. Unobserved entries may be
            NaN (loaded triangles) or simulated values (full squares).
        mask: (T, T) bool; True exactly on the north-west triangle.
    """

    cells: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=np.float64)
        if cells.ndim != 2 or cells.shape[0] != cells.shape[1]:
            raise DataError(f"triangle cells must be square, got shape {cells.shape}")
        T = cells.shape[0]
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != cells.shape or not np.array_equal(mask, standard_mask(T)):
            raise DataError("mask must be the standard north-west triangle")
        obs = cells[mask]
        if not np.all(np.isfinite(obs)):
            raise DataError("observed cells must be finite")
        if np.any(obs < 0):
            raise DataError("observed cells must be non-negative")
        cells = cells.copy()
        cells.flags.writeable = False
        mask = mask.copy()
        mask.flags.writeable = False
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "mask", mask)

    @property
    def T(self) -> int:
        return self.cells.shape[0]

    @classmethod
    def from_cumulative(cls, cells: np.ndarray) -> "Triangle":
        """Wrap a cumulative square (full or NaN-padded) with the standard mask."""
        cells = np.asarray(cells, dtype=np.float64)
        if cells.ndim != 2 or cells.shape[0] != cells.shape[1]:
            raise DataError(f"triangle cells must be square, got shape {cells.shape}")
        return cls(cells=cells, mask=standard_mask(cells.shape[0]))

    def observed_values(self) -> np.ndarray:
        return self.cells[self.mask]


def from_incremental(inc: np.ndarray) -> Triangle:
    """Build a Triangle by cumulating a square of non-negative increments."""
    inc = np.asarray(inc, dtype=np.float64)
    if inc.ndim != 2 or inc.shape[0] != inc.shape[1]:
        raise DataError(f"incremental array must be square, got shape {inc.shape}")
    if not np.all(np.isfinite(inc)):
        raise DataError("incremental entries must be finite")
    if np.any(inc < 0):
        raise DataError("incremental entries must be non-negative")
    return Triangle.from_cumulative(np.cumsum(inc, axis=1))


def to_incremental(tri: Triangle) -> np.ndarray:
    """Difference a Triangle back to incremental amounts (inverse of from_incremental)."""
    inc = tri.cells.copy()
    inc[:, 1:] = inc[:, 1:] - tri.cells[:, :-1]
    return inc


def save_csv(tri: Triangle, path) -> None:
    """Write the observed part of a triangle.

    Format: header ``dev_1,...,dev_T``; data row i is
    ``i, v_1, ..., v_k`` with k = T - i + 1 observed cumulative values
    followed by empty fields. Values use shortest round-trip decimals, so
    save -> load is bit-exact on observed cells.
    """
    T = tri.T
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"dev_{t}" for t in range(1, T + 1)])
        for i in range(T):
            k = T - i
            row = [str(i + 1)]
            row += [repr(float(v)) for v in tri.cells[i, :k]]
            row += [""] * (T - k)
            writer.writerow(row)


def load_csv(path) -> Triangle:
    """Parse a triangle CSV written in the save_csv layout.

    Unobserved cells are NaN. Raises DataError with 1-based (i, t)
    coordinates when the observed/blank pattern does not match the
    standard mask or an observed field is not numeric.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    T = len(header)
    expected_header = [f"dev_{t}" for t in range(1, T + 1)]
    if header != expected_header:
        raise DataError(f"{path}: header must be dev_1,...,dev_T, got {header!r}")
    body = rows[1:]
    if len(body) != T:
        raise DataError(f"{path}: expected {T} accident-year rows, got {len(body)}")
    cells = np.full((T, T), np.nan)
    for i, row in enumerate(body, start=1):
        if len(row) != T + 1:
            raise DataError(
                f"{path}: row {i} has {len(row)} fields, expected {T + 1} (ragged row)"
            )
        if row[0].strip() != str(i):
            raise DataError(f"{path}: row {i} labelled {row[0]!r}, expected {i!r}")
        k = T - i + 1
        for t, field in enumerate(row[1:], start=1):
            field = field.strip()
            if t <= k:
                if field == "":
                    raise DataError(f"{path}: blank observed cell at (i={i}, t={t})")
                try:
                    cells[i - 1, t - 1] = float(field)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric observed cell {field!r} at (i={i}, t={t})"
                    ) from None
            elif field != "":
                raise DataError(
                    f"{path}: unexpected value in unobserved cell at (i={i}, t={t})"
                )
    return Triangle.from_cumulative(cells)
