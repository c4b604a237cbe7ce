"""Sobol low-discrepancy points (Gray-code construction, 32-bit).

Direction numbers for dimensions 2 to 21 follow the Joe-Kuo table
(``new-joe-kuo-6.21201``): degree ``s`` of the primitive polynomial, its
coefficient code ``a`` and the initial odd integers ``m_1..m_s``. The first
dimension uses ``m_k = 1`` for all ``k``.
"""

from __future__ import annotations

import numpy as np

from .errors import PreconditionError

MAX_DIMENSION = 21
BITS = 32

# (s, a, m_1, ..., m_s) for dimensions 2..21
_JOE_KUO = (
    (1, 0, 1),
    (2, 1, 1, 3),
    (3, 1, 1, 3, 1),
    (3, 2, 1, 1, 1),
    (4, 1, 1, 1, 3, 3),
    (4, 4, 1, 3, 5, 13),
    (5, 2, 1, 1, 5, 5, 17),
    (5, 4, 1, 1, 5, 5, 5),
    (5, 7, 1, 1, 7, 11, 19),
    (5, 11, 1, 1, 5, 1, 1),
    (5, 13, 1, 1, 1, 3, 11),
    (5, 14, 1, 3, 5, 5, 31),
    (6, 1, 1, 3, 3, 9, 7, 49),
    (6, 13, 1, 1, 1, 15, 21, 21),
    (6, 16, 1, 3, 1, 13, 27, 49),
    (6, 19, 1, 1, 1, 15, 7, 5),
    (6, 22, 1, 3, 1, 15, 13, 25),
    (6, 25, 1, 1, 5, 5, 19, 61),
    (7, 1, 1, 3, 7, 11, 23, 15, 103),
    (7, 4, 1, 3, 7, 13, 13, 15, 69),
)


def direction_numbers(D: int) -> np.ndarray:
    """``V[j, k-1] = v_k * 2^32`` for dimension ``j`` and bit ``k = 1..32``."""
    if not 1 <= D <= MAX_DIMENSION:
        raise PreconditionError(f"Sobol dimension must be in 1..{MAX_DIMENSION}, got {D}")
    V = np.zeros((D, BITS), dtype=np.uint64)
    V[0] = [1 << (BITS - k) for k in range(1, BITS + 1)]
    for j in range(1, D):
        s, a, *m = _JOE_KUO[j - 1]
        v = [0] * (BITS + 1)
        for k in range(1, s + 1):
            v[k] = m[k - 1] << (BITS - k)
        for k in range(s + 1, BITS + 1):
            val = v[k - s] ^ (v[k - s] >> s)
            for ell in range(1, s):
                if (a >> (s - 1 - ell)) & 1:
                    val ^= v[k - ell]
            v[k] = val
        V[j] = v[1:]
    return V


class SobolGenerator:
    """Stateful generator; index 0 (the origin) is skipped."""

    def __init__(self, dimension: int, skip: int = 0):
        self.dimension = dimension
        self._V = direction_numbers(dimension)
        self._state = np.zeros(dimension, dtype=np.uint64)
        self.index = 0
        if skip < 0:
            raise PreconditionError("skip must be non-negative")
        if skip:
            self.draw(skip)

    def draw(self, n: int) -> np.ndarray:
        """Next ``n`` points in ``[0, 1)^D``."""
        if n < 0:
            raise PreconditionError("number of points must be non-negative")
        out = np.empty((n, self.dimension))
        scale = float(2**BITS)
        for i in range(n):
            # Gray code: flip the direction number of the lowest zero bit of the index
            c = ((~self.index) & (self.index + 1)).bit_length() - 1
            if c >= BITS:
                raise PreconditionError("Sobol sequence exhausted")
            self._state ^= self._V[:, c]
            self.index += 1
            out[i] = self._state / scale
        return out


def sobol_unit(D: int, n: int, skip: int = 0) -> np.ndarray:
    if n < 1:
        raise PreconditionError("need at least one point")
    return SobolGenerator(D, skip).draw(n)


def sobol_points(D: int, n: int, skip: int = 0) -> np.ndarray:
    """``n`` Sobol scenarios mapped affinely from ``[0, 1)^D`` to ``[-1, 1)^D``."""
    return 2.0 * sobol_unit(D, n, skip) - 1.0
