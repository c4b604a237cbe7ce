"""Out-of-sample validation figures and tabular reports.

For validation values ``y``, proxy values ``f`` and base value ``y0`` at
the base scenario ``x0``:

* ``mae = sum|y - f| / sum|d|`` with ``d = y`` (relative) or ``d = a`` (asset)
* ``res = mean(y - f)``
* ``mae0 = sum|(y - y0) - (f - f(x0))| / sum|y - y0|``
* ``res0 = mean((y - y0) - (f - f(x0)))``
* ``res_base = y0 - f(x0) = res - res0``
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .data import ValidationSet
from .errors import PreconditionError, ProximaError

REPORT_HEADER = ("model", "set", "mae", "mae_a", "res", "mae0", "res0", "res_base")


class DegenerateNormalizationError(ProximaError):
    pass


@dataclass(frozen=True)
class ValidationFigures:
    mae_rel: float
    res: float
    mae_asset: float | None = None
    mae0: float | None = None
    res0: float | None = None
    res_base: float | None = None


def _normalized_mae(err, d):
    denom = float(np.sum(np.abs(d)))
    if denom == 0:
        raise DegenerateNormalizationError("degenerate normalization: sum of |d| is zero")
    return float(np.sum(np.abs(err))) / denom


def figures_from_values(y, f, a=None, y0=None, f0=None) -> ValidationFigures:
    """Figures from plain arrays; base figures need both ``y0`` and ``f0``."""
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    if y.shape != f.shape or y.ndim != 1 or y.size == 0:
        raise PreconditionError("validation values and proxy values must be equal-length vectors")
    err = y - f
    mae_rel = _normalized_mae(err, y)
    res = float(np.mean(err))
    mae_a = None if a is None else _normalized_mae(err, np.asarray(a, dtype=float))
    if y0 is None or f0 is None:
        return ValidationFigures(mae_rel, res, mae_a)
    dev_y = y - y0
    err0 = dev_y - (f - f0)
    mae0 = _normalized_mae(err0, dev_y)
    res0 = float(np.mean(err0))
    return ValidationFigures(mae_rel, res, mae_a, mae0, res0, float(y0 - f0))


def compute_figures(model, vset: ValidationSet) -> ValidationFigures:
    if model.dimension != vset.dimension:
        raise PreconditionError(f"model dimension {model.dimension} does not match "
                                f"validation set dimension {vset.dimension}")
    f = np.asarray(model.predict(vset.X), dtype=float)
    if vset.has_base:
        return figures_from_values(vset.y, f, vset.a, vset.base_y, model.predict(vset.base_x))
    return figures_from_values(vset.y, f, vset.a)


def _pct(v):
    return "" if v is None else f"{100.0 * v:.3f}"


def _cur(v):
    if v is None:
        return ""
    s = f"{v:.0f}"
    return "0" if s == "-0" else s


def report_rows(models, vsets) -> list:
    """One row per (model, set) pair in input order, formatted for the CSV report.

    ``models`` and ``vsets`` are sequences of ``(name, object)`` pairs.
    """
    rows = []
    for mname, model in models:
        for sname, vset in vsets:
            fig = compute_figures(model, vset)
            rows.append((mname, sname, _pct(fig.mae_rel), _pct(fig.mae_asset), _cur(fig.res),
                         _pct(fig.mae0), _cur(fig.res0), _cur(fig.res_base)))
    return rows


def report(models, vsets) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    w.writerows(report_rows(models, vsets))
    return buf.getvalue()
