"""Plain-text model files.

A file starts with ``key=value`` header lines (``method`` and ``D`` always)
followed by one record per line, first token naming the record type:

* ``term r_1 .. r_D coef`` for ols, glm and fgls proxy terms
* ``vterm r_1 .. r_D alpha`` for fgls variance terms
* ``intercept b0`` and ``smooth r_1 .. r_D J=.. lambda=.. range=lo,hi means=.. coeffs=..`` for gam
* ``hterm coef [d:t:s ...]`` for mars, one factor per hinge (``d`` 1-based, ``s`` is ``+`` or ``-``)
* ``term r_1 .. r_D bandwidth`` for kernel models (``-`` for the intercept), plus ``data=<csv>``

Floats are written with 17 significant digits so files round-trip exactly.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .data import read_fitting_csv, write_fitting_csv
from .errors import ParseError
from .fgls import FglsFit, VarianceModel
from .gam import GamFit, SmoothSpec
from .glm import GlmFit, get_family, get_link
from .kernel import KernelModel, KernelSpec
from .mars import Hinge, HingeTerm, MarsModel
from .ols import OlsFit


def _f(v) -> str:
    return format(float(v), ".17g")


def _floats(text):
    return [float(v) for v in text.split(",")] if text else []


def _term(t) -> str:
    return " ".join(str(e) for e in t)


def write_model(model, path, data_path=None) -> None:
    """Serialize any fitted proxy model. Kernel models also need their data:
    ``data_path`` names an existing fitting CSV, otherwise ``<path>.data.csv``
    is written next to the model."""
    lines = [f"method={model.method}", f"D={model.dimension}"]
    m = model.method
    if m == "ols":
        lines += [f"n={model.n}", f"sigma2_ml={_f(model.sigma2_ml)}"]
        lines += [f"term {_term(t)} {_f(c)}" for t, c in zip(model.terms, model.coefficients)]
    elif m == "glm":
        lines += [f"family={model.family.name}", f"link={model.link.name}", f"n={model.n}",
                  f"dispersion={_f(model.dispersion)}", f"deviance={_f(model.deviance)}"]
        lines += [f"term {_term(t)} {_f(c)}" for t, c in zip(model.terms, model.coefficients)]
    elif m == "fgls":
        lines += [f"n={model.n}", f"loglik={_f(model.log_likelihood)}"]
        lines += [f"term {_term(t)} {_f(c)}" for t, c in zip(model.terms, model.coefficients)]
        vm = model.variance_model
        lines += [f"vterm {_term(t)} {_f(a)}" for t, a in zip(vm.terms, vm.alpha)]
    elif m == "gam":
        lines += [f"family={model.family.name}", f"link={model.link.name}", f"n={model.n}",
                  f"dispersion={_f(model.dispersion)}", f"edf={_f(model.effective_df)}",
                  f"deviance={_f(model.deviance)}", f"intercept {_f(model.intercept)}"]
        for (spec, coef), means in zip(model.smooths, model.column_means):
            lo, hi = spec.knot_range
            lines.append(f"smooth {_term(spec.term)} J={spec.J} lambda={_f(spec.lam)} "
                         f"range={_f(lo)},{_f(hi)} means={','.join(_f(v) for v in means)} "
                         f"coeffs={','.join(_f(v) for v in coef)}")
    elif m == "mars":
        lines += [f"family={model.family}", f"link={model.link}", f"n={model.n}"]
        if model.gcv is not None:
            lines.append(f"gcv={_f(model.gcv)}")
        for t, c in zip(model.terms, model.coefficients):
            factors = " ".join(f"{h.dim + 1}:{_f(h.knot)}:{'+' if h.sign > 0 else '-'}" for h in t.factors)
            lines.append(f"hterm {_f(c)} {factors}".rstrip())
    elif m == "kernel":
        if data_path is None:
            data_path = f"{path}.data.csv"
            write_fitting_csv(model.fit_set, data_path)
        rel = os.path.relpath(os.path.abspath(data_path), os.path.dirname(os.path.abspath(path)))
        lines += [f"shape={model.kernel.shape}", f"order={model.kernel.order}", f"mode={model.mode}",
                  f"data={rel}"]
        bws = ["-"] + [_f(b) for b in model.bandwidths]
        lines += [f"term {_term(t)} {b}" for t, b in zip(model.terms, bws)]
    else:
        raise ValueError(f"cannot serialize method {m!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_model(path):
    header, records = {}, []
    with open(path, encoding="utf-8") as fh:
        for no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            first = line.split(None, 1)[0]
            if "=" in first and " " not in line:
                key, value = line.split("=", 1)
                header[key.strip()] = value.strip()
            else:
                records.append((no, line.split()))
    try:
        method = header["method"]
        D = int(header["D"])
    except (KeyError, ValueError):
        raise ParseError("model file needs method= and D= header lines", line=1) from None
    try:
        return _build(method, D, header, records, path)
    except (KeyError, ValueError, IndexError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed {method} model file: {exc}") from None


def _records(records, kind, D, width):
    out = []
    for no, tok in records:
        if tok[0] != kind:
            continue
        if len(tok) != 1 + D + width:
            raise ParseError(f"{kind} record needs {D} exponents and {width} value(s)", line=no)
        out.append((tuple(int(e) for e in tok[1:1 + D]), tok[1 + D:]))
    return out


def _build(method, D, header, records, path):
    n = int(header.get("n", 0))
    if method in ("ols", "glm", "fgls"):
        rows = _records(records, "term", D, 1)
        terms = tuple(t for t, _ in rows)
        coef = np.array([float(v[0]) for _, v in rows])
        if not terms:
            raise ParseError("model file has no terms")
    if method == "ols":
        s2 = float(header.get("sigma2_ml", "nan"))
        K = len(terms)
        sv = s2 * n / (n - K) if n > K else math.nan
        return OlsFit(terms, coef, s2, sv, n, K)
    if method == "glm":
        fam = get_family(header["family"])
        return GlmFit(terms, coef, fam, get_link(header["link"], fam), float(header.get("dispersion", "nan")),
                      float(header.get("deviance", "nan")), 0, True, n, np.zeros(0), np.zeros(0))
    if method == "fgls":
        vrows = _records(records, "vterm", D, 1)
        vm = VarianceModel(tuple(t for t, _ in vrows), np.array([float(v[0]) for _, v in vrows]))
        return FglsFit(terms, coef, vm, 0, True, float(header.get("loglik", "nan")), n)
    if method == "gam":
        fam = get_family(header["family"])
        b0 = None
        smooths, means = [], []
        for no, tok in records:
            if tok[0] == "intercept":
                b0 = float(tok[1])
            elif tok[0] == "smooth":
                term = tuple(int(e) for e in tok[1:1 + D])
                kv = dict(item.split("=", 1) for item in tok[1 + D:])
                lo, hi = _floats(kv["range"])
                spec = SmoothSpec(term, int(kv["J"]), (lo, hi), float(kv["lambda"]))
                smooths.append((spec, np.array(_floats(kv["coeffs"]))))
                means.append(np.array(_floats(kv["means"])))
        if b0 is None:
            raise ParseError("gam model file needs an intercept record")
        return GamFit(b0, tuple(smooths), fam, get_link(header["link"], fam),
                      float(header.get("dispersion", "nan")), float(header.get("edf", "nan")),
                      float(header.get("deviance", "nan")), tuple(means), n, dim=D)
    if method == "mars":
        terms, coef = [], []
        for no, tok in records:
            if tok[0] != "hterm":
                continue
            coef.append(float(tok[1]))
            factors = []
            for item in tok[2:]:
                d, t, s = item.split(":")
                if s not in "+-" or len(s) != 1:
                    raise ParseError(f"hinge sign must be + or -, got {s!r}", line=no)
                factors.append(Hinge(int(d) - 1, float(t), 1 if s == "+" else -1))
            terms.append(HingeTerm(tuple(factors)))
        gcv = float(header["gcv"]) if "gcv" in header else None
        return MarsModel(tuple(terms), np.array(coef), header.get("family", "gaussian"),
                         header.get("link", "identity"), (), math.nan, n, gcv, D)
    if method == "kernel":
        rows = _records(records, "term", D, 1)
        data = header["data"]
        if not os.path.isabs(data):
            data = os.path.join(os.path.dirname(os.path.abspath(path)), data)
        fit_set = read_fitting_csv(data)
        bws = np.array([float(v[0]) for _, v in rows[1:]])
        return KernelModel(tuple(t for t, _ in rows), bws, header["mode"],
                           KernelSpec(header["shape"], int(header["order"])), fit_set)
    raise ParseError(f"unknown method {method!r} in model file")
