"""Finite games, mixed strategies and Nash verification.

Strategy and agent indices are 0-based throughout.  A payoff tensor for an
``n``-agent game has shape ``(k_1, ..., k_n, n)``; entry ``[c_1, ..., c_n, i]``
is the payoff to agent ``i`` when agent ``j`` plays choice ``c_j``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from ._rational import rational_matrix

TIE_TOL = 1e-9
SUM_TOL = 1e-12


class GameDimensionError(ValueError):
    """A profile or matrix does not fit the game it is used with."""

    def __init__(self, message: str, agent: int | None = None):
        super().__init__(message)
        self.agent = agent


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NormalFormGame:
    payoffs: np.ndarray

    def __post_init__(self):
        g = _frozen(self.payoffs)
        if g.ndim < 3 or g.shape[-1] != g.ndim - 1:
            raise GameDimensionError(
                f"payoff tensor of shape {g.shape} is not (k_1, ..., k_n, n) with n >= 2")
        if any(k < 1 for k in g.shape[:-1]):
            raise GameDimensionError("every agent needs at least one choice")
        if not np.all(np.isfinite(g)):
            raise ValueError("payoffs must be finite")
        object.__setattr__(self, "payoffs", g)

    @property
    def num_agents(self) -> int:
        return self.payoffs.shape[-1]

    @property
    def choice_counts(self) -> tuple[int, ...]:
        return self.payoffs.shape[:-1]

    def to_bimatrix(self) -> BimatrixGame:
        if self.num_agents != 2:
            raise GameDimensionError(f"a {self.num_agents}-agent game is not a bimatrix game")
        return BimatrixGame(self.payoffs[..., 0], self.payoffs[..., 1])


@dataclass(frozen=True, eq=False)
class BimatrixGame:
    """Two-agent game: ``A`` pays the row agent, ``B`` the column agent."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A, B = _frozen(self.A), _frozen(self.B)
        if A.ndim != 2 or A.shape != B.shape or 0 in A.shape:
            raise GameDimensionError(f"A {A.shape} and B {B.shape} must be equal-shaped matrices")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("payoffs must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def rows(self) -> int:
        return self.A.shape[0]

    @property
    def cols(self) -> int:
        return self.A.shape[1]

    @property
    def num_agents(self) -> int:
        return 2

    @property
    def choice_counts(self) -> tuple[int, int]:
        return self.A.shape

    def to_normal_form(self) -> NormalFormGame:
        return NormalFormGame(np.stack([self.A, self.B], axis=-1))

    def exact(self) -> tuple[list[list[Fraction]], list[list[Fraction]]]:
        """A and B as exact Fractions, quantized to the 1e-6 grid."""
        return rational_matrix(self.A), rational_matrix(self.B)

    def is_positive(self) -> bool:
        return bool(self.A.min() > 0 and self.B.min() > 0)

    def same_payoffs(self, other: BimatrixGame) -> bool:
        return np.array_equal(self.A, other.A) and np.array_equal(self.B, other.B)


def as_normal_form(game) -> NormalFormGame:
    return game.to_normal_form() if isinstance(game, BimatrixGame) else game


def as_bimatrix(game) -> BimatrixGame:
    return game if isinstance(game, BimatrixGame) else game.to_bimatrix()


@dataclass(frozen=True, eq=False)
class MixedStrategyProfile:
    """One probability vector per agent (``x`` and ``y`` for bimatrix games)."""

    distributions: tuple[np.ndarray, ...]

    def __post_init__(self):
        dists = tuple(_frozen(p) for p in self.distributions)
        for i, p in enumerate(dists):
            if p.ndim != 1 or p.size == 0:
                raise GameDimensionError(f"distribution of agent {i} is not a vector", agent=i)
            if not np.all(np.isfinite(p)) or p.min() < 0:
                raise ValueError(f"distribution of agent {i} has negative or non-finite entries")
            if abs(p.sum() - 1.0) > SUM_TOL:
                raise ValueError(f"distribution of agent {i} sums to {p.sum()!r}, not 1")
        object.__setattr__(self, "distributions", dists)

    @classmethod
    def pure(cls, choice_counts: Sequence[int], choices: Sequence[int]) -> MixedStrategyProfile:
        dists = []
        for k, c in zip(choice_counts, choices, strict=True):
            p = np.zeros(k)
            p[c] = 1.0
            dists.append(p)
        return cls(tuple(dists))

    @classmethod
    def uniform(cls, choice_counts: Sequence[int]) -> MixedStrategyProfile:
        return cls(tuple(np.full(k, 1.0 / k) for k in choice_counts))

    def __len__(self):
        return len(self.distributions)

    def __getitem__(self, i) -> np.ndarray:
        return self.distributions[i]

    @property
    def is_pure(self) -> bool:
        return all(np.all((p == 0) | (p == 1)) for p in self.distributions)

    def without(self, agent: int) -> tuple[np.ndarray, ...]:
        return self.distributions[:agent] + self.distributions[agent + 1:]

    def max_distance(self, other: MixedStrategyProfile) -> float:
        return max(float(np.max(np.abs(p - q))) for p, q in zip(self, other, strict=True))


def as_profile(profile) -> MixedStrategyProfile:
    if isinstance(profile, MixedStrategyProfile):
        return profile
    return MixedStrategyProfile(tuple(profile))


@dataclass(frozen=True, eq=False)
class EquilibriumPoint:
    profile: MixedStrategyProfile
    payoffs: np.ndarray
    kind: str  # "pure" or "mixed"
    epsilon: float
    # exact rational strategies when produced by the pivoting/enumeration code
    exact: tuple[tuple[Fraction, ...], ...] | None = field(default=None)

    @property
    def x(self) -> np.ndarray:
        return self.profile[0]

    @property
    def y(self) -> np.ndarray:
        return self.profile[1]

    def key(self):
        """Hashable identity: exact rationals when available."""
        if self.exact is not None:
            return self.exact
        return tuple(tuple(p) for p in self.profile)


@dataclass(frozen=True)
class Deviation:
    """Witness that a profile is not a Nash equilibrium."""

    agent: int
    choice: int
    gain: float

    def __bool__(self):
        return False


def _check_others(game: NormalFormGame, agent: int, others) -> list[np.ndarray]:
    n = game.num_agents
    if not 0 <= agent < n:
        raise GameDimensionError(f"agent index {agent} out of range for {n} agents", agent=agent)
    others = [np.asarray(p, dtype=float) for p in others]
    if len(others) != n - 1:
        raise GameDimensionError(f"expected {n - 1} opponent distributions, got {len(others)}",
                                 agent=agent)
    opponents = [j for j in range(n) if j != agent]
    for j, p in zip(opponents, others):
        if p.shape != (game.choice_counts[j],):
            raise GameDimensionError(
                f"agent {j} distribution has shape {p.shape}, game expects "
                f"({game.choice_counts[j]},)", agent=j)
    return others


def _check_profile(game: NormalFormGame, profile: MixedStrategyProfile) -> None:
    if len(profile) != game.num_agents:
        raise GameDimensionError(
            f"profile has {len(profile)} distributions for a {game.num_agents}-agent game")
    for i, (p, k) in enumerate(zip(profile, game.choice_counts)):
        if p.shape != (k,):
            raise GameDimensionError(f"agent {i} distribution has length {p.size}, expected {k}",
                                     agent=i)


def expected_payoff(game, profile) -> np.ndarray:
    """Expected payoff vector, multilinear in the agents' distributions."""
    game = as_normal_form(game)
    profile = as_profile(profile)
    _check_profile(game, profile)
    t = game.payoffs
    for p in profile:
        t = np.tensordot(p, t, axes=(0, 0))
    return t


def conditional_payoff(game, agent: int, others) -> np.ndarray:
    """Payoff to ``agent`` for each of its pure choices, opponents fixed.

    ``others`` holds the distributions of every agent except ``agent``, in
    agent order.
    """
    game = as_normal_form(game)
    others = _check_others(game, agent, others)
    t = game.payoffs[..., agent]
    opponents = [j for j in range(game.num_agents) if j != agent]
    # contract from the last axis so earlier axis numbers stay valid
    for j, p in reversed(list(zip(opponents, others))):
        t = np.tensordot(t, p, axes=([j], [0]))
    return t


def best_response_set(game, agent: int, others, tol: float = TIE_TOL) -> frozenset[int]:
    u = conditional_payoff(game, agent, others)
    return frozenset(int(j) for j in np.flatnonzero(u >= u.max() - tol))


def _deviation_gains(game: NormalFormGame, profile: MixedStrategyProfile):
    """Per agent: (conditional payoffs, best deviation gain)."""
    out = []
    for i in range(game.num_agents):
        u = conditional_payoff(game, i, profile.without(i))
        out.append((u, float(u.max() - profile[i] @ u)))
    return out


def make_equilibrium(game, profile, exact=None) -> EquilibriumPoint:
    game = as_normal_form(game)
    profile = as_profile(profile)
    gains = _deviation_gains(game, profile)
    return EquilibriumPoint(
        profile=profile,
        payoffs=expected_payoff(game, profile),
        kind="pure" if profile.is_pure else "mixed",
        epsilon=max(0.0, max(g for _, g in gains)),
        exact=exact,
    )


def is_nash(game, profile, tol: float = TIE_TOL) -> EquilibriumPoint | Deviation:
    """Accept when no agent gains more than ``tol`` by a pure deviation.

    The gain ``max(u) - p.u`` weights each played choice's shortfall by its
    probability, so mass far below ``tol`` on a worse choice is not a deviation.
    Returns the accepted :class:`EquilibriumPoint`, or the :class:`Deviation`
    of the agent with the largest gain.  ``Deviation`` is falsy.
    """
    game = as_normal_form(game)
    profile = as_profile(profile)
    _check_profile(game, profile)
    gains = _deviation_gains(game, profile)
    worst = None
    for i, (u, gain) in enumerate(gains):
        if gain > tol:
            if worst is None or gain > worst.gain:
                worst = Deviation(agent=i, choice=int(np.argmax(u)), gain=gain)
    if worst is not None:
        return worst
    return EquilibriumPoint(
        profile=profile,
        payoffs=expected_payoff(game, profile),
        kind="pure" if profile.is_pure else "mixed",
        epsilon=max(0.0, max(g for _, g in gains)),
    )


def positivize(game: BimatrixGame) -> BimatrixGame:
    """Shift all payoffs by ``1 - min`` when any entry is <= 0."""
    c = payoff_shift(game)
    if c == 0:
        return game
    return BimatrixGame(game.A + c, game.B + c)


def payoff_shift(game: BimatrixGame) -> float:
    lo = min(game.A.min(), game.B.min())
    return 0.0 if lo > 0 else float(1 - lo)


def _is_exact(v) -> bool:
    return len(v) > 0 and all(isinstance(e, Fraction) for e in v)


def _check_uv(A, B, u, v, tol) -> None:
    """Relations (u^T B <= 1, A v <= 1, u, v >= 0, complementarity)."""
    uB = [sum(u[i] * B[i][j] for i in range(len(u))) for j in range(len(v))]
    Av = [sum(A[i][j] * v[j] for j in range(len(v))) for i in range(len(u))]
    bad = []
    if any(e < -tol for e in list(u) + list(v)):
        bad.append("negative entry")
    if any(e > 1 + tol for e in uB + Av):
        bad.append("constraint u^T B <= 1 or A v <= 1 violated")
    if any(u[i] > tol and abs(Av[i] - 1) > tol for i in range(len(u))):
        bad.append("u_i > 0 without (A v)_i = 1")
    if any(v[j] > tol and abs(uB[j] - 1) > tol for j in range(len(v))):
        bad.append("v_j > 0 without (u^T B)_j = 1")
    if bad:
        raise ValueError("(u, v) violates the equilibrium relations: " + "; ".join(bad))


def nash_to_uv(game: BimatrixGame, eq: EquilibriumPoint, tol: float = TIE_TOL):
    """Map an equilibrium of a positive game to ``(u, v)`` with unit slack rows.

    ``u = x / (x^T B y)`` and ``v = y / (x^T A y)``.  When ``eq`` carries exact
    rationals the result is exact (object arrays of Fractions).
    """
    if not game.is_positive():
        raise ValueError("nash_to_uv needs strictly positive payoffs; call positivize() first")
    if eq.exact is not None:
        A, B = game.exact()
        x, y = eq.exact
        xAy = sum(x[i] * A[i][j] * y[j] for i in range(len(x)) for j in range(len(y)))
        xBy = sum(x[i] * B[i][j] * y[j] for i in range(len(x)) for j in range(len(y)))
        u = np.array([xi / xBy for xi in x], dtype=object)
        v = np.array([yj / xAy for yj in y], dtype=object)
        _check_uv(A, B, u, v, 0)
        return u, v
    x, y = eq.x, eq.y
    u = x / (x @ game.B @ y)
    v = y / (x @ game.A @ y)
    _check_uv(game.A, game.B, u, v, tol)
    return u, v


def uv_to_nash(game: BimatrixGame, u, v, tol: float = TIE_TOL) -> EquilibriumPoint:
    """Inverse of :func:`nash_to_uv`: normalize ``u`` and ``v`` to strategies."""
    exact = _is_exact(u) and _is_exact(v)
    if exact:
        su, sv = sum(u), sum(v)
    else:
        u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
        su, sv = u.sum(), v.sum()
    if su == 0 or sv == 0:
        raise ValueError("artificial equilibrium has no strategy image")
    if exact:
        A, B = game.exact()
        _check_uv(A, B, u, v, 0)
        x = tuple(e / su for e in u)
        y = tuple(e / sv for e in v)
        profile = MixedStrategyProfile((np.array([float(e) for e in x]),
                                        np.array([float(e) for e in y])))
        return make_equilibrium(game, profile, exact=(x, y))
    _check_uv(game.A, game.B, u, v, tol)
    return make_equilibrium(game, MixedStrategyProfile((u / su, v / sv)))


def game_potential(A, p) -> float:
    """``V(p) = 1/2 sum_ij a_ij p_i p_j``."""
    A = np.asarray(A, dtype=float)
    p = np.asarray(p, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or p.shape != (A.shape[0],):
        raise GameDimensionError(f"need a square matrix and matching vector, got {A.shape}, {p.shape}")
    return 0.5 * float(p @ A @ p)


@dataclass(frozen=True)
class PotentialCheck:
    holds: bool
    triple: tuple[int, int, int] | None
    violation: float

    def __bool__(self):
        return self.holds


def has_potential_condition(A, tol: float = 1e-12) -> PotentialCheck:
    """Triple condition ``a_ij + a_jk + a_ki = a_ik + a_kj + a_ji`` for all i, j, k.

    Writing ``S = A - A^T`` the violation at ``(i, j, k)`` is
    ``S_ij + S_jk + S_ki``.  It vanishes whenever two indices coincide, so
    matrices smaller than 3x3 always pass.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise GameDimensionError(f"potential condition needs a square matrix, got {A.shape}")
    S = A - A.T
    D = S[:, :, None] + S[None, :, :] + S.T[:, None, :]
    if D.size == 0:
        return PotentialCheck(True, None, 0.0)
    idx = np.unravel_index(int(np.argmax(np.abs(D))), D.shape)
    worst = float(abs(D[idx]))
    if worst <= tol:
        return PotentialCheck(True, None, worst)
    return PotentialCheck(False, tuple(int(i) for i in idx), worst)


@dataclass(frozen=True)
class TSFamilyPoint:
    """Symmetric 2x2 game with reward 1, punishment 0, temptation T, sucker S."""

    T: float
    S: float


def ts_family_game(point: TSFamilyPoint) -> BimatrixGame:
    A = np.array([[1.0, point.S], [point.T, 0.0]])
    return BimatrixGame(A, A.T)


def ts_region(T: float, S: float) -> str:
    """Name of the (T, S) plane sector the game falls in."""
    if T > 1 and S < 0:
        return "Prisoner's Dilemma"
    if T < 1 and S < 0:
        return "Stag Hunt"
    if T > 1 and S > 0:
        return "Chicken"
    if T < 1 and S > 0:
        return "Harmony"
    return "boundary"


def symmetric_region(game: BimatrixGame) -> str | None:
    """Sector of a symmetric 2x2 game after rescaling to R = 1, P = 0.

    Returns None when the game is not symmetric 2x2 or has R <= P.
    """
    if game.A.shape != (2, 2) or not np.array_equal(game.B, game.A.T):
        return None
    (R, S), (T, P) = game.A
    if R <= P:
        return None
    return ts_region((T - P) / (R - P), (S - P) / (R - P))


def prisoners_dilemma() -> BimatrixGame:
    """Row/column 0 = cooperate, 1 = defect."""
    return BimatrixGame([[-1, -3], [0, -2]], [[-1, 0], [-3, -2]])


def chicken() -> BimatrixGame:
    """Row/column 0 = swerve, 1 = straight."""
    return BimatrixGame([[0, -1], [1, -10]], [[0, 1], [-1, -10]])


def pure_profiles(choice_counts: Sequence[int]):
    for choices in itertools.product(*(range(k) for k in choice_counts)):
        yield choices, MixedStrategyProfile.pure(choice_counts, choices)
