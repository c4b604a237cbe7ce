"""Fitting and validation point sets and their CSV formats.

Scenarios are rows of an ``(N, D)`` float array. The fitting space is
assumed to be normalized to ``[-1, 1]^D`` by whoever produced the data;
nothing here rescales.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, PreconditionError


class EconomicVariable(enum.Enum):
    BEL = "BEL"
    AC = "AC"
    OTHER = "other"


def _frozen(a, ndim):
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise PreconditionError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FittingSet:
    """Outer fitting scenarios ``X`` (N x D) with noisy responses ``y``."""

    X: np.ndarray
    y: np.ndarray
    label: str = "BEL"

    def __post_init__(self):
        X = _frozen(self.X, 2)
        y = _frozen(self.y, 1)
        if X.shape[0] != y.shape[0]:
            raise PreconditionError("X and y have different numbers of rows")
        if X.shape[0] < 1:
            raise PreconditionError("no fitting points")
        if X.shape[1] < 1:
            raise PreconditionError("dimension must be positive")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise PreconditionError("non-finite scenario or response value")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dimension(self) -> int:
        return self.X.shape[1]

    def subset(self, index) -> "FittingSet":
        return FittingSet(self.X[index], self.y[index], self.label)


@dataclass(frozen=True)
class ValidationSet:
    """Validation scenarios with (nearly noise-free) values.

    ``a`` holds market values of assets for the asset metric and is either
    present for every point or absent. ``base_x``/``base_y`` is the optional
    unstressed base point, which is *not* part of ``X``.
    """

    X: np.ndarray
    y: np.ndarray
    a: np.ndarray | None = None
    base_x: np.ndarray | None = None
    base_y: float | None = None
    label: str = ""

    def __post_init__(self):
        X = _frozen(self.X, 2)
        y = _frozen(self.y, 1)
        if X.shape[0] != y.shape[0]:
            raise PreconditionError("X and y have different numbers of rows")
        if X.shape[0] < 1:
            raise PreconditionError("no validation points")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.a is not None:
            a = _frozen(self.a, 1)
            if a.shape[0] != y.shape[0]:
                raise PreconditionError("asset values must be present for all points or none")
            object.__setattr__(self, "a", a)
        if (self.base_x is None) != (self.base_y is None):
            raise PreconditionError("base point needs both a scenario and a value")
        if self.base_x is not None:
            bx = _frozen(self.base_x, 1)
            if bx.shape[0] != X.shape[1]:
                raise PreconditionError("base scenario has wrong dimension")
            object.__setattr__(self, "base_x", bx)
            object.__setattr__(self, "base_y", float(self.base_y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dimension(self) -> int:
        return self.X.shape[1]

    @property
    def has_base(self) -> bool:
        return self.base_x is not None


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    # drop trailing blank lines but keep numbering of the others
    numbered = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not numbered:
        raise ParseError("empty file", line=1)
    return numbered


def _parse_header(header, line):
    names = [h.strip() for h in header]
    xs = []
    for name in names:
        if name.startswith("x") and name[1:].isdigit():
            xs.append(name)
        else:
            break
    if not xs or xs != [f"x{i + 1}" for i in range(len(xs))]:
        raise ParseError("header must start with x1,...,xD", line=line)
    return names, len(xs)


def _float(cell, line):
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"non-numeric cell {cell!r}", line=line) from None
    if not np.isfinite(v):
        raise ParseError(f"non-finite cell {cell!r}", line=line)
    return v


def read_fitting_csv(path) -> FittingSet:
    """Read a fitting CSV with header ``x1,...,xD,y``."""
    rows = _read_rows(path)
    (hline, header), body = rows[0], rows[1:]
    names, D = _parse_header(header, hline)
    if names[D:] != ["y"]:
        raise ParseError("fitting header must be x1,...,xD,y", line=hline)
    if not body:
        raise ParseError("no fitting points", line=hline + 1)
    X = np.empty((len(body), D))
    y = np.empty(len(body))
    for r, (line, row) in enumerate(body):
        if len(row) != D + 1:
            raise ParseError(f"expected {D + 1} cells, got {len(row)}", line=line)
        vals = [_float(c, line) for c in row]
        X[r] = vals[:D]
        y[r] = vals[D]
    return FittingSet(X, y)


def read_validation_csv(path, label="") -> ValidationSet:
    """Read a validation CSV with header ``x1,...,xD,y[,a][,base]``."""
    rows = _read_rows(path)
    (hline, header), body = rows[0], rows[1:]
    names, D = _parse_header(header, hline)
    rest = names[D:]
    if not rest or rest[0] != "y" or rest[1:] not in ([], ["a"], ["base"], ["a", "base"]):
        raise ParseError("validation header must be x1,...,xD,y[,a][,base]", line=hline)
    has_a = "a" in rest
    has_base = "base" in rest
    ncol = len(names)
    X, y, a = [], [], []
    base_x = base_y = None
    a_seen = set()
    for line, row in body:
        if len(row) != ncol:
            raise ParseError(f"expected {ncol} cells, got {len(row)}", line=line)
        x = [_float(c, line) for c in row[:D]]
        yv = _float(row[D], line)
        if has_base:
            flag = row[-1].strip()
            if flag not in ("0", "1"):
                raise ParseError(f"base flag must be 0 or 1, got {flag!r}", line=line)
            if flag == "1":
                if base_x is not None:
                    raise ParseError("multiple base rows", line=line)
                base_x, base_y = x, yv
                continue
        X.append(x)
        y.append(yv)
        if has_a:
            cell = row[D + 1].strip()
            av = None if cell == "" else _float(cell, line)
            a_seen.add(av is None)
            a.append(av)
    if has_a and len(a_seen) > 1:
        raise ParseError("asset column 'a' present in some rows only")
    if not X:
        raise ParseError("no validation points")
    a_arr = np.array(a, dtype=float) if has_a and a and a[0] is not None else None
    return ValidationSet(np.array(X), np.array(y), a_arr, base_x, base_y, label=label)


def _fmt17(v):
    return format(float(v), ".17g")


def write_fitting_csv(fset: FittingSet, path) -> None:
    D = fset.dimension
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(D)] + ["y"])
        for x, yv in zip(fset.X, fset.y):
            w.writerow([_fmt17(v) for v in x] + [_fmt17(yv)])


def write_validation_csv(vset: ValidationSet, path) -> None:
    D = vset.dimension
    header = [f"x{i + 1}" for i in range(D)] + ["y"]
    if vset.a is not None:
        header.append("a")
    if vset.has_base:
        header.append("base")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(vset.n):
            row = [_fmt17(v) for v in vset.X[i]] + [_fmt17(vset.y[i])]
            if vset.a is not None:
                row.append(_fmt17(vset.a[i]))
            if vset.has_base:
                row.append("0")
            w.writerow(row)
        if vset.has_base:
            row = [_fmt17(v) for v in vset.base_x] + [_fmt17(vset.base_y)]
            if vset.a is not None:
                row.append("")
            row.append("1")
            w.writerow(row)
