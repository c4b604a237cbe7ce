"""Monomial basis terms, Kmax-d1d2d3 restrictions and the principle of marginality.

A term is a tuple of non-negative exponents ``(r_1, ..., r_D)`` standing for
the monomial ``prod_d x_d ** r_d``; the all-zero tuple is the intercept.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, PreconditionError


def intercept(D: int) -> tuple:
    return (0,) * D


def degree(term) -> int:
    return int(sum(term))


@dataclass(frozen=True)
class Restrictions:
    """Caps on term count and exponents.

    k_max counts every proxy term including the intercept. d1 caps each
    exponent, d2 the total degree and d3 each exponent of an interaction
    term (two or more risk factors with positive exponents).
    """

    k_max: int
    d1: int
    d2: int
    d3: int

    def __post_init__(self):
        if self.k_max < 1:
            raise PreconditionError("k_max must be at least 1")
        if min(self.d1, self.d2, self.d3) < 0:
            raise PreconditionError("exponent caps must be non-negative")

    @classmethod
    def parse(cls, text: str) -> "Restrictions":
        """Parse ``"150-443"`` style settings (single-digit caps).

        A comma separated form ``"150-4,4,3"`` allows caps above 9.
        """
        m = re.fullmatch(r"\s*(\d+)\s*-\s*(\d)(\d)(\d)\s*", text)
        if m is None:
            m = re.fullmatch(r"\s*(\d+)\s*-\s*(\d+),(\d+),(\d+)\s*", text)
        if m is None:
            raise ParseError(f"restriction must look like '<Kmax>-<d1><d2><d3>', got {text!r}")
        return cls(*(int(g) for g in m.groups()))

    def __str__(self):
        if max(self.d1, self.d2, self.d3) < 10:
            return f"{self.k_max}-{self.d1}{self.d2}{self.d3}"
        return f"{self.k_max}-{self.d1},{self.d2},{self.d3}"


def admissible(term, r: Restrictions) -> bool:
    positive = [e for e in term if e > 0]
    if not positive:
        return True
    if max(positive) > r.d1 or sum(positive) > r.d2:
        return False
    if len(positive) >= 2 and max(positive) > r.d3:
        return False
    return True


def marginality_candidates(current, r: Restrictions, D: int) -> list[tuple]:
    """Terms eligible to enter given the current proxy structure.

    A term qualifies when it is admissible, not yet included, and every
    term obtained by lowering one of its positive exponents by one is
    already included. Every candidate is an upward neighbour of some
    current term, so only those are enumerated. Output is sorted
    lexicographically.
    """
    current = {tuple(int(e) for e in t) for t in current}
    if intercept(D) not in current:
        raise PreconditionError("current term set must contain the intercept")
    found = set()
    for t in current:
        for d in range(D):
            c = t[:d] + (t[d] + 1,) + t[d + 1:]
            if c in current or c in found or not admissible(c, r):
                continue
            if all(c[:e] + (c[e] - 1,) + c[e + 1:] in current for e in range(D) if c[e] > 0):
                found.add(c)
    return sorted(found)


def is_downward_closed(terms) -> bool:
    terms = {tuple(t) for t in terms}
    for t in terms:
        for d, e in enumerate(t):
            if e > 0 and t[:d] + (e - 1,) + t[d + 1:] not in terms:
                return False
    return True


def admissible_universe(r: Restrictions, D: int, limit: int | None = None) -> list[tuple]:
    """All admissible terms (ignoring k_max), sorted lexicographically.

    Raises PreconditionError once more than ``limit`` terms are found.
    """
    out = []
    cap = min(r.d1, r.d2)
    for t in itertools.product(range(cap + 1), repeat=D):
        if admissible(t, r):
            out.append(t)
            if limit is not None and len(out) > limit:
                raise PreconditionError(f"candidate universe exceeds {limit} terms")
    return sorted(out)


def design_matrix(terms, X) -> np.ndarray:
    """Evaluate monomials at scenarios: entry (i, k) = prod_d X[i, d] ** terms[k][d].

    ``0 ** 0`` is 1, so the intercept column is all ones everywhere.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    E = np.asarray(terms, dtype=int).reshape(len(terms), -1)
    N, D = X.shape
    if E.size and E.shape[1] != D:
        raise PreconditionError(f"terms have length {E.shape[1]}, scenarios {D}")
    Z = np.ones((N, len(E)))
    if not len(E):
        return Z
    max_e = int(E.max(initial=0))
    # powers[p][:, d] = X[:, d] ** p; integer powers by repeated products
    powers = [np.ones_like(X)]
    for _ in range(max_e):
        powers.append(powers[-1] * X)
    for k, t in enumerate(E):
        for d in np.flatnonzero(t):
            Z[:, k] *= powers[t[d]][:, d]
    return Z


def format_term(term) -> str:
    """Readable monomial, e.g. ``x1^2*x3``; ``1`` for the intercept."""
    parts = []
    for d, e in enumerate(term):
        if e == 1:
            parts.append(f"x{d + 1}")
        elif e > 1:
            parts.append(f"x{d + 1}^{e}")
    return "*".join(parts) if parts else "1"


def parse_term(text: str, D: int) -> tuple:
    """Inverse of ``format_term``: ``"x1^2*x3"`` -> ``(2, 0, 1, ...)``; ``"1"`` is the intercept."""
    text = text.strip()
    exps = [0] * D
    if text == "1":
        return tuple(exps)
    for part in text.split("*"):
        m = re.fullmatch(r"\s*x(\d+)(?:\^(\d+))?\s*", part)
        if m is None:
            raise ParseError(f"cannot parse basis term {text!r}")
        d = int(m.group(1))
        if not 1 <= d <= D:
            raise ParseError(f"term {text!r} refers to x{d} but the dimension is {D}")
        exps[d - 1] += int(m.group(2) or 1)
    return tuple(exps)
