"""Tiny generic linear algebra over jets and floats.

The fundamental tensor must be inverted *as a jet-valued matrix* so that
x- and y-derivatives of g^ij are available downstream (Christoffel symbols,
curvature).  numpy cannot help there, so this module carries a small
Gauss-Jordan elimination that works for any entry type supporting +,-,*,/
— floats and jets alike.  Pivoting compares the entries' values at the
base point.
"""

from __future__ import annotations

from .errors import DegenerateMetricError
from .jets import Jet

__all__ = ["value_of", "invert_with_det"]


def value_of(entry) -> float:
    """Base-point value of a jet, or the float itself."""
    return entry.value if isinstance(entry, Jet) else float(entry)


def invert_with_det(matrix):
    """Invert a square matrix of jets/floats; returns (inverse, det_value).

    Gauss-Jordan with partial pivoting on base-point magnitudes.  The
    determinant is returned as a float (the value at the base point); a
    pivot that is exactly zero raises DegenerateMetricError since no
    elimination order can continue past it.
    """
    n = len(matrix)
    work = [list(row) for row in matrix]
    if any(len(row) != n for row in work):
        raise DegenerateMetricError("matrix is not square")
    inverse = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    det = 1.0

    for col in range(n):
        pivot_row = max(range(col, n), key=lambda r: abs(value_of(work[r][col])))
        pivot_value = value_of(work[pivot_row][col])
        if pivot_value == 0.0:
            raise DegenerateMetricError("matrix is singular at the base point")
        if pivot_row != col:
            work[col], work[pivot_row] = work[pivot_row], work[col]
            inverse[col], inverse[pivot_row] = inverse[pivot_row], inverse[col]
            det = -det
        det *= pivot_value
        pivot = work[col][col]
        for j in range(n):
            work[col][j] = work[col][j] / pivot
            inverse[col][j] = inverse[col][j] / pivot
        for r in range(n):
            if r == col:
                continue
            factor = work[r][col]
            if value_of(factor) == 0.0 and not isinstance(factor, Jet):
                continue
            for j in range(n):
                work[r][j] = work[r][j] - factor * work[col][j]
                inverse[r][j] = inverse[r][j] - factor * inverse[col][j]
    return inverse, det
