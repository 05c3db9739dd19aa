"""Exact rational helpers shared by the pivoting and enumeration code."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

SCALE = 10**6


def rationalize(value) -> Fraction:
    """Quantize a payoff to the 1e-6 grid as an exact Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    return Fraction(round(float(value) * SCALE), SCALE)


def rational_matrix(M) -> list[list[Fraction]]:
    return [[rationalize(v) for v in row] for row in np.asarray(M)]


def solve(M: list[list[Fraction]], b: list[Fraction]) -> list[Fraction] | None:
    """Gauss-Jordan solve of a square system; None when singular."""
    n = len(M)
    aug = [list(M[i]) + [b[i]] for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            return None
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        row = [v / p for v in aug[col]]
        aug[col] = row
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * c for a, c in zip(aug[r], row)]
    return [aug[i][n] for i in range(n)]


def as_pq(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"
