"""Lemke-Howson complementary pivoting over the labelled polytopes

    X = {x >= 0, x^T B <= 1}      Y = {y >= 0, A y <= 1}

with exact rational arithmetic, plus a support-enumeration oracle.

Labels follow the usual 1-based convention ``K = {1..l} u {l+1..l+m}``:
``x`` carries label ``i`` when ``x_i = 0`` and label ``l+j`` when
``(x^T B)_j = 1``; ``y`` carries ``l+j`` when ``y_j = 0`` and ``i`` when
``(A y)_i = 1``.  Strategy indices elsewhere stay 0-based.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from ._rational import solve
from .game_model import (
    BimatrixGame,
    EquilibriumPoint,
    MixedStrategyProfile,
    as_bimatrix,
    make_equilibrium,
    positivize,
    uv_to_nash,
)

MAX_VERTEX_DIM = 10
MAX_SUPPORT_DIM = 6


class DegenerateGameWarning(UserWarning):
    """A ratio-test tie was met; lexicographic tie-breaking was used."""


class InfeasibleVertexError(ValueError):
    def __init__(self, message: str, constraint: str):
        super().__init__(message)
        self.constraint = constraint


class LabelledTableau:
    """Dictionary for one polytope; column ``c`` holds the variable with label ``c+1``.

    X side: rows ``B^T x + s = 1`` (``x_i`` label ``i``, slack ``s_j`` label ``l+j``).
    Y side: rows ``r + A y = 1`` (slack ``r_i`` label ``i``, ``y_j`` label ``l+j``).
    """

    def __init__(self, A: list[list[Fraction]], B: list[list[Fraction]], side: str):
        l, m = len(A), len(A[0])
        self.l, self.m, self.side = l, m, side
        one = Fraction(1)
        if side == "X":
            self.rows = [[B[i][j] for i in range(l)] + [one if jj == j else Fraction(0)
                                                       for jj in range(m)] + [one]
                         for j in range(m)]
            self.basis = [l + 1 + j for j in range(m)]
            self.slack_cols = list(range(l, l + m))
        elif side == "Y":
            self.rows = [[one if ii == i else Fraction(0) for ii in range(l)] + list(A[i]) + [one]
                         for i in range(l)]
            self.basis = [1 + i for i in range(l)]
            self.slack_cols = list(range(l))
        else:
            raise ValueError(f"side must be 'X' or 'Y', not {side!r}")

    def copy(self) -> LabelledTableau:
        t = object.__new__(LabelledTableau)
        t.l, t.m, t.side = self.l, self.m, self.side
        t.rows = [list(r) for r in self.rows]
        t.basis = list(self.basis)
        t.slack_cols = self.slack_cols
        return t

    def nonbasic_labels(self) -> frozenset[int]:
        return frozenset(range(1, self.l + self.m + 1)) - set(self.basis)

    def pivot(self, entering: int) -> tuple[int, bool]:
        """Bring label ``entering`` into the basis.

        Returns the label that leaves and whether the plain ratio test tied.
        """
        c = entering - 1
        candidates = [r for r, row in enumerate(self.rows) if row[c] > 0]
        if not candidates:
            raise RuntimeError(f"unbounded direction for label {entering}; payoffs must be positive")

        def key(r):
            row = self.rows[r]
            return [row[-1] / row[c]] + [row[s] / row[c] for s in self.slack_cols]

        keys = {r: key(r) for r in candidates}
        best = min(candidates, key=lambda r: keys[r])
        tied = sum(1 for r in candidates if keys[r][0] == keys[best][0]) > 1
        prow = self.rows[best]
        p = prow[c]
        prow = [v / p for v in prow]
        self.rows[best] = prow
        for r, row in enumerate(self.rows):
            if r != best and row[c] != 0:
                f = row[c]
                self.rows[r] = [a - f * b for a, b in zip(row, prow)]
        leaving = self.basis[best]
        self.basis[best] = entering
        return leaving, tied

    def vertex(self) -> tuple[Fraction, ...]:
        """Values of the structural variables (``x`` or ``y``)."""
        if self.side == "X":
            labels = range(1, self.l + 1)
        else:
            labels = range(self.l + 1, self.l + self.m + 1)
        value = {b: row[-1] for b, row in zip(self.basis, self.rows)}
        return tuple(value.get(lab, Fraction(0)) for lab in labels)


def _polytope_slacks(vertex, side, A, B):
    l, m = len(A), len(A[0])
    if side == "X":
        if len(vertex) != l:
            raise ValueError(f"X-side vertex needs {l} coordinates")
        return [sum(vertex[i] * B[i][j] for i in range(l)) for j in range(m)]
    if len(vertex) != m:
        raise ValueError(f"Y-side vertex needs {m} coordinates")
    return [sum(A[i][j] * vertex[j] for j in range(m)) for i in range(l)]


def labels_of(vertex: Sequence, side: str, game: BimatrixGame) -> frozenset[int]:
    """Exact label set of a point of X (``side='X'``) or Y (``side='Y'``)."""
    A, B = game.exact()
    l = len(A)
    vertex = [Fraction(v) for v in vertex]
    rhs = _polytope_slacks(vertex, side, A, B)
    for idx, v in enumerate(vertex):
        if v < 0:
            raise InfeasibleVertexError(f"coordinate {idx} is negative ({v})",
                                        constraint=f"{'xy'[side == 'Y']}_{idx} >= 0")
    for idx, r in enumerate(rhs):
        if r > 1:
            name = f"(x^T B)_{idx} <= 1" if side == "X" else f"(A y)_{idx} <= 1"
            raise InfeasibleVertexError(f"{name} violated: value {r}", constraint=name)
    if side == "X":
        own = {i + 1 for i, v in enumerate(vertex) if v == 0}
        tight = {l + j + 1 for j, r in enumerate(rhs) if r == 1}
    else:
        own = {l + j + 1 for j, v in enumerate(vertex) if v == 0}
        tight = {i + 1 for i, r in enumerate(rhs) if r == 1}
    return frozenset(own | tight)


def _enumerate_vertices(A, B, side):
    """Every vertex of one polytope with its full tight-label set."""
    l, m = len(A), len(A[0])
    dim = l if side == "X" else m
    seen = {}
    for subset in itertools.combinations(range(1, l + m + 1), dim):
        M, b = [], []
        for lab in subset:
            row = [Fraction(0)] * dim
            if side == "X":
                if lab <= l:
                    row[lab - 1] = Fraction(1)
                    b.append(Fraction(0))
                else:
                    row = [B[i][lab - l - 1] for i in range(l)]
                    b.append(Fraction(1))
            else:
                if lab > l:
                    row[lab - l - 1] = Fraction(1)
                    b.append(Fraction(0))
                else:
                    row = list(A[lab - 1])
                    b.append(Fraction(1))
            M.append(row)
        sol = solve(M, b)
        if sol is None or tuple(sol) in seen:
            continue
        if any(v < 0 for v in sol) or any(r > 1 for r in _polytope_slacks(sol, side, A, B)):
            continue
        if side == "X":
            tight = {i + 1 for i, v in enumerate(sol) if v == 0}
            tight |= {l + j + 1 for j, r in enumerate(_polytope_slacks(sol, side, A, B)) if r == 1}
        else:
            tight = {l + j + 1 for j, v in enumerate(sol) if v == 0}
            tight |= {i + 1 for i, r in enumerate(_polytope_slacks(sol, side, A, B)) if r == 1}
        seen[tuple(sol)] = frozenset(tight)
    return seen


@dataclass(frozen=True)
class NondegeneracyCheck:
    holds: bool
    side: str | None = None
    vertex: tuple[Fraction, ...] | None = None
    labels: frozenset[int] | None = None

    def __bool__(self):
        return self.holds


def is_nondegenerate(game) -> NondegeneracyCheck:
    """Check that every vertex of X has exactly l tight constraints and of Y exactly m."""
    game = as_bimatrix(game)
    l, m = game.rows, game.cols
    if l > MAX_VERTEX_DIM or m > MAX_VERTEX_DIM:
        raise ValueError(f"vertex enumeration limited to {MAX_VERTEX_DIM}x{MAX_VERTEX_DIM}; "
                         "use a sampling check (e.g. random lemke_howson runs) for larger games")
    A, B = positivize(game).exact()
    for side, dim in (("X", l), ("Y", m)):
        for vertex, tight in _enumerate_vertices(A, B, side).items():
            if len(tight) != dim:
                return NondegeneracyCheck(False, side, vertex, tight)
    return NondegeneracyCheck(True)


@dataclass(frozen=True)
class LHStep:
    side: str
    dropped: int  # label of the variable entering the basis
    picked_up: int  # label of the variable leaving it
    vertex_pair: tuple[tuple[Fraction, ...], tuple[Fraction, ...]]


@dataclass
class LHPath:
    label: int
    start: tuple[tuple[Fraction, ...], tuple[Fraction, ...]]
    steps: list[LHStep] = field(default_factory=list)
    degenerate: bool = False
    end_tableaux: tuple[LabelledTableau, LabelledTableau] | None = None

    @property
    def end(self):
        return self.steps[-1].vertex_pair if self.steps else self.start

    @property
    def end_is_artificial(self) -> bool:
        x, y = self.end
        return not any(x) and not any(y)


def _initial_tableaux(game: BimatrixGame):
    A, B = game.exact()
    if min(min(r) for r in A) <= 0 or min(min(r) for r in B) <= 0:
        raise ValueError("pivoting needs strictly positive payoffs; call positivize() first")
    return LabelledTableau(A, B, "X"), LabelledTableau(A, B, "Y")


def _follow(tx: LabelledTableau, ty: LabelledTableau, k: int) -> LHPath:
    """Follow the k-almost completely labelled path from a completely labelled pair."""
    K = frozenset(range(1, tx.l + tx.m + 1))
    if k not in K:
        raise ValueError(f"label {k} not in 1..{len(K)}")
    path = LHPath(label=k, start=(tx.vertex(), ty.vertex()))
    current = tx if k in tx.nonbasic_labels() else ty
    entering = k
    seen = {(frozenset(tx.basis), frozenset(ty.basis))}
    while True:
        leaving, tied = current.pivot(entering)
        path.degenerate |= tied
        path.steps.append(LHStep(current.side, entering, leaving, (tx.vertex(), ty.vertex())))
        if leaving == k:
            break
        state = (frozenset(tx.basis), frozenset(ty.basis))
        if state in seen:
            raise RuntimeError("pivot cycle detected")
        seen.add(state)
        labels = tx.nonbasic_labels() | ty.nonbasic_labels()
        assert labels == K - {k}, "interior vertex is not k-almost completely labelled"
        entering = leaving
        current = ty if current is tx else tx
    assert tx.nonbasic_labels() | ty.nonbasic_labels() == K
    path.end_tableaux = (tx, ty)
    return path


def _endpoint(game: BimatrixGame, shifted: BimatrixGame, tx, ty) -> EquilibriumPoint:
    u = np.array(tx.vertex(), dtype=object)
    v = np.array(ty.vertex(), dtype=object)
    eq = uv_to_nash(shifted, u, v)
    if shifted is not game:
        eq = make_equilibrium(game, eq.profile, exact=eq.exact)
    if not is_nash_exact(game, eq.exact):
        raise AssertionError("pivoting produced a non-equilibrium; this is a bug")
    return eq


def lemke_howson(game, k: int) -> tuple[EquilibriumPoint, LHPath]:
    """Equilibrium at the end of the k-almost completely labelled path from (0, 0).

    Non-positive games are shifted internally; returned payoffs refer to the
    game as given.
    """
    game = as_bimatrix(game)
    shifted = positivize(game)
    tx, ty = _initial_tableaux(shifted)
    path = _follow(tx, ty, k)
    if path.degenerate:
        warnings.warn("ratio-test tie during pivoting; lexicographic rule applied",
                      DegenerateGameWarning, stacklevel=2)
    return _endpoint(game, shifted, tx, ty), path


def trace_path(game, k: int, start: LHPath | None = None) -> LHPath:
    """Follow a path from the artificial equilibrium, or from the end of ``start``."""
    game = as_bimatrix(game)
    shifted = positivize(game)
    if start is None:
        tx, ty = _initial_tableaux(shifted)
    else:
        tx, ty = (t.copy() for t in start.end_tableaux)
    return _follow(tx, ty, k)


def enumerate_equilibria_lh(game) -> list[EquilibriumPoint]:
    """All equilibria in the path-connected component of the artificial equilibrium.

    Every completely labelled pair reached is re-used as a start for every
    label.  Complete for nondegenerate games only when no equilibrium lies
    on a separate component; :func:`support_enumeration` is the full oracle.
    """
    game = as_bimatrix(game)
    l, m = game.rows, game.cols
    if l > MAX_VERTEX_DIM or m > MAX_VERTEX_DIM:
        raise ValueError(f"enumeration limited to {MAX_VERTEX_DIM}x{MAX_VERTEX_DIM} games")
    shifted = positivize(game)
    tx, ty = _initial_tableaux(shifted)
    queue = [(tx, ty)]
    seen_states = {(frozenset(tx.basis), frozenset(ty.basis))}
    found: dict = {}
    degenerate = False
    while queue:
        sx, sy = queue.pop(0)
        for k in range(1, l + m + 1):
            ax, ay = sx.copy(), sy.copy()
            path = _follow(ax, ay, k)
            degenerate |= path.degenerate
            state = (frozenset(ax.basis), frozenset(ay.basis))
            if state in seen_states:
                continue
            seen_states.add(state)
            queue.append((ax, ay))
            if not path.end_is_artificial:
                eq = _endpoint(game, shifted, ax, ay)
                found.setdefault(eq.key(), eq)
    if degenerate:
        warnings.warn("degenerate game: lexicographic perturbation used, result may be incomplete",
                      DegenerateGameWarning, stacklevel=2)
    return [found[key] for key in sorted(found)]


def is_nash_exact(game, exact) -> bool:
    """Exact support test for rational strategies ``(x, y)``."""
    A, B = as_bimatrix(game).exact()
    x, y = exact
    l, m = len(A), len(A[0])
    Ay = [sum(A[i][j] * y[j] for j in range(m)) for i in range(l)]
    xB = [sum(x[i] * B[i][j] for i in range(l)) for j in range(m)]
    return (all(Ay[i] == max(Ay) for i in range(l) if x[i] > 0)
            and all(xB[j] == max(xB) for j in range(m) if y[j] > 0))


def _indifferent_mix(M, support_rows, support_cols):
    """Mix over ``support_cols`` making every row in ``support_rows`` of M equal."""
    s = len(support_cols)
    eqs = [[M[i][j] for j in support_cols] + [Fraction(-1)] for i in support_rows]
    eqs.append([Fraction(1)] * s + [Fraction(0)])
    rhs = [Fraction(0)] * s + [Fraction(1)]
    return solve(eqs, rhs)


def support_enumeration(game) -> list[EquilibriumPoint]:
    """All equilibria of a nondegenerate bimatrix game by equal-size support pairs."""
    game = as_bimatrix(game)
    l, m = game.rows, game.cols
    if l > MAX_SUPPORT_DIM or m > MAX_SUPPORT_DIM:
        raise ValueError(f"support enumeration limited to {MAX_SUPPORT_DIM}x{MAX_SUPPORT_DIM}")
    A, B = game.exact()
    BT = [[B[i][j] for i in range(l)] for j in range(m)]
    found: dict = {}
    for s in range(1, min(l, m) + 1):
        for I in itertools.combinations(range(l), s):
            for J in itertools.combinations(range(m), s):
                ysol = _indifferent_mix(A, I, J)
                if ysol is None or any(v < 0 for v in ysol[:-1]):
                    continue
                xsol = _indifferent_mix(BT, J, I)
                if xsol is None or any(v < 0 for v in xsol[:-1]):
                    continue
                y = [Fraction(0)] * m
                x = [Fraction(0)] * l
                for j, v in zip(J, ysol):
                    y[j] = v
                for i, v in zip(I, xsol):
                    x[i] = v
                row_value, col_value = ysol[-1], xsol[-1]
                if any(sum(A[i][j] * y[j] for j in range(m)) > row_value for i in range(l)):
                    continue
                if any(sum(x[i] * B[i][j] for i in range(l)) > col_value for j in range(m)):
                    continue
                key = (tuple(x), tuple(y))
                if key not in found:
                    profile = MixedStrategyProfile((np.array([float(v) for v in x]),
                                                    np.array([float(v) for v in y])))
                    found[key] = make_equilibrium(game, profile, exact=key)
    return [found[key] for key in sorted(found)]
