"""Logit quantal response equilibria and their singular set for 2x2 games.

For a 2x2 game write ``x`` (``y``) for the probability that agent 1 (2)
plays its first choice, and ``Q_i = 2 p_i - 1``.  The conditional payoff
difference of agent ``i`` is affine in the opponent's coordinate,
``D_i(Q_-i) = alpha_i + gamma_i Q_-i``, and the logit response is
``Q_i = tanh(beta_i D_i(Q_-i) / 2)``; ``beta_i`` scales agent ``i``'s payoffs.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .game_model import (
    BimatrixGame,
    EquilibriumPoint,
    GameDimensionError,
    MixedStrategyProfile,
    as_bimatrix,
    as_normal_form,
    as_profile,
    conditional_payoff,
)

RESIDUAL_TOL = 1e-10
SCAN_POINTS = 4096
MARGINAL_TOL = 1e-8
SINGULAR_TOL = 1e-12
CRITICAL_TOL = 1e-8
DEFAULT_BETA_MAX = 50.0


@dataclass(frozen=True)
class LogitParams:
    betas: tuple[float, ...]

    def __post_init__(self):
        b = tuple(float(v) for v in self.betas)
        if not all(np.isfinite(v) and v >= 0 for v in b):
            raise ValueError(f"betas must be finite and nonnegative, got {b}")
        object.__setattr__(self, "betas", b)

    def __iter__(self):
        return iter(self.betas)

    def __getitem__(self, i):
        return self.betas[i]


def _betas(betas) -> LogitParams:
    return betas if isinstance(betas, LogitParams) else LogitParams(tuple(betas))


@dataclass(frozen=True)
class QCoordinates:
    Q1: float
    Q2: float

    @classmethod
    def from_profile(cls, profile) -> QCoordinates:
        profile = as_profile(profile)
        return cls(2 * profile[0][0] - 1, 2 * profile[1][0] - 1)

    def to_profile(self) -> MixedStrategyProfile:
        x, y = (1 + self.Q1) / 2, (1 + self.Q2) / 2
        return MixedStrategyProfile((np.array([x, 1 - x]), np.array([y, 1 - y])))


@dataclass(frozen=True, eq=False)
class QreFixedPoint:
    profile: MixedStrategyProfile
    betas: LogitParams
    residual: float
    stability: str  # "stable", "unstable" or "marginal"
    derivative: float  # slope of the composed scalar response map

    @property
    def Q(self) -> QCoordinates:
        return QCoordinates.from_profile(self.profile)


def logit_response(game, profile, betas) -> MixedStrategyProfile:
    """Softmax of ``beta_i`` times each agent's conditional payoffs."""
    game = as_normal_form(game)
    profile = as_profile(profile)
    betas = _betas(betas)
    if len(betas.betas) != game.num_agents:
        raise GameDimensionError(f"need {game.num_agents} betas, got {len(betas.betas)}")
    out = []
    for i in range(game.num_agents):
        z = betas[i] * conditional_payoff(game, i, profile.without(i))
        w = np.exp(z - z.max())
        out.append(w / w.sum())
    return MixedStrategyProfile(tuple(out))


def _residual(game, profile, betas) -> float:
    return as_profile(profile).max_distance(logit_response(game, profile, betas))


def _g22(game) -> BimatrixGame:
    game = as_bimatrix(game)
    if game.A.shape != (2, 2):
        raise GameDimensionError(f"a 2x2 game is required, got {game.A.shape}")
    return game


@dataclass(frozen=True)
class PayoffDifferences:
    """``D_1(Q2) = alpha1 + gamma1 Q2`` and ``D_2(Q1) = alpha2 + gamma2 Q1``."""

    alpha1: float
    gamma1: float
    alpha2: float
    gamma2: float

    def d1(self, Q2):
        return self.alpha1 + self.gamma1 * Q2

    def d2(self, Q1):
        return self.alpha2 + self.gamma2 * Q1


def payoff_differences(game) -> PayoffDifferences:
    g = _g22(game)
    A, B = g.A, g.B
    r1, r2 = A[0, 0] - A[1, 0], A[0, 1] - A[1, 1]
    c1, c2 = B[0, 0] - B[0, 1], B[1, 0] - B[1, 1]
    return PayoffDifferences((r1 + r2) / 2, (r1 - r2) / 2, (c1 + c2) / 2, (c1 - c2) / 2)


def _sigmoid(t):
    return np.exp(-np.logaddexp(0.0, -t))


def _scalar_map(pd: PayoffDifferences, b1: float, b2: float, t):
    """``F(t) = t - b1 D_1(Q2(t))`` where ``t`` is agent 1's log-odds."""
    q1 = np.tanh(0.5 * t)
    s = b2 * pd.d2(q1)
    q2 = np.tanh(0.5 * s)
    return t - b1 * pd.d1(q2), q1, q2, s


def _slope(pd, b1, b2, q1, q2) -> float:
    """Derivative of the composed response map, equal to ``f1_1 * f1_2``."""
    return b1 * b2 * pd.gamma1 * pd.gamma2 * (1 - q1 * q1) * (1 - q2 * q2) / 4


def _refine(pd, b1, b2, lo, hi, flo):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        fm = _scalar_map(pd, b1, b2, mid)[0]
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    t = 0.5 * (lo + hi)
    # one Newton step, kept only if it improves the residual
    f, q1, q2, _ = _scalar_map(pd, b1, b2, t)
    d = 1 - _slope(pd, b1, b2, q1, q2)
    if d != 0:
        t2 = t - f / d
        if abs(_scalar_map(pd, b1, b2, t2)[0]) < abs(f):
            t = t2
    return t


def solve_qre_fixed_points(game, betas, scan_points: int = SCAN_POINTS) -> list[QreFixedPoint]:
    """All logit QRE of a 2x2 game via the scalar reduction ``x = R1(R2(x))``.

    The scan runs over agent 1's log-odds on the interval that must contain
    every fixed point, which keeps near-pure equilibria resolvable at both
    ends.  Fixed points are sorted by agent 1's first-choice probability.
    """
    game = _g22(game)
    b1, b2 = _betas(betas)
    pd = payoff_differences(game)
    span = b1 * (abs(pd.alpha1) + abs(pd.gamma1)) + 1.0
    t = np.linspace(-span, span, scan_points)
    F = _scalar_map(pd, b1, b2, t)[0]
    roots = []
    for i in range(scan_points - 1):
        if F[i] == 0:
            roots.append(t[i])
        elif F[i + 1] != 0 and (F[i] > 0) != (F[i + 1] > 0):
            roots.append(_refine(pd, b1, b2, t[i], t[i + 1], F[i]))
    if F[-1] == 0:
        roots.append(t[-1])
    absF = np.abs(F)
    pitch = t[1] - t[0]
    dips = (absF[1:-1] < absF[:-2]) & (absF[1:-1] < absF[2:]) & (absF[1:-1] < pitch)
    dips &= (np.sign(F[:-2]) == np.sign(F[2:])) & (np.sign(F[1:-1]) == np.sign(F[2:]))
    if np.any(dips):
        warnings.warn("possible fixed-point pair closer than the scan pitch (near a fold)",
                      RuntimeWarning, stacklevel=2)
    out = []
    for r in roots:
        _, q1, q2, s = _scalar_map(pd, b1, b2, r)
        x, xc = _sigmoid(r), _sigmoid(-r)
        y, yc = _sigmoid(s), _sigmoid(-s)
        profile = MixedStrategyProfile((np.array([x, xc]), np.array([y, yc])))
        slope = float(_slope(pd, b1, b2, q1, q2))
        if abs(slope - 1) <= MARGINAL_TOL:
            stability = "marginal"
        else:
            stability = "stable" if abs(slope) < 1 else "unstable"
        out.append(QreFixedPoint(profile, LogitParams((b1, b2)),
                                 _residual(game, profile, (b1, b2)), stability, slope))
    return out


@dataclass(frozen=True)
class QreIteration:
    profile: MixedStrategyProfile
    residual: float
    iterations: int
    converged: bool


def qre_iterate(game, profile, betas, damping: float = 1.0, tol: float = RESIDUAL_TOL,
                max_iter: int = 100_000) -> QreIteration:
    """Damped fixed-point iteration ``p <- (1 - l) p + l L(p)`` for any game."""
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    game = as_normal_form(game)
    p = as_profile(profile)
    betas = _betas(betas)
    for it in range(max_iter + 1):
        r = logit_response(game, p, betas)
        res = p.max_distance(r)
        if res <= tol:
            return QreIteration(p, res, it, True)
        if it == max_iter:
            break
        mixed = tuple((1 - damping) * a + damping * b for a, b in zip(p, r))
        p = MixedStrategyProfile(tuple(m / m.sum() for m in mixed))
    return QreIteration(p, res, max_iter, False)


@dataclass
class NashLimitReport:
    pairs: list[tuple[int, int, float]]  # (qre index, nash index, max-norm distance)
    max_distance: float
    qre_count: int
    nash_count: int
    cardinality_match: bool
    degenerate: bool


def nash_limit_check(game, beta_max: float = DEFAULT_BETA_MAX,
                     equilibria: Sequence[EquilibriumPoint] | None = None) -> NashLimitReport:
    """Greedy nearest matching between QRE at ``(beta_max, beta_max)`` and Nash equilibria."""
    from .lemke_howson import is_nondegenerate, support_enumeration

    game = _g22(game)
    if not is_nondegenerate(game):
        return NashLimitReport([], float("nan"), 0, 0, False, True)
    if equilibria is None:
        equilibria = support_enumeration(game)
    qre = solve_qre_fixed_points(game, (beta_max, beta_max))
    dist = [[q.profile.max_distance(e.profile) for e in equilibria] for q in qre]
    pairs, used_q, used_e = [], set(), set()
    candidates = sorted((d, i, j) for i, row in enumerate(dist) for j, d in enumerate(row))
    for d, i, j in candidates:
        if i in used_q or j in used_e:
            continue
        pairs.append((i, j, d))
        used_q.add(i)
        used_e.add(j)
    worst = max((d for _, _, d in pairs), default=float("nan"))
    return NashLimitReport(sorted(pairs), worst, len(qre), len(equilibria),
                           len(qre) == len(equilibria), False)


@dataclass(frozen=True)
class JacobianTerms:
    f1: tuple[float, float]  # d f_i / d Q_-i
    f2: tuple[float, float]  # d f_i / d beta_i
    matrix: np.ndarray | None  # d Q_i / d beta_j, None when singular
    singular: bool

    @property
    def critical_value(self) -> float:
        return self.f1[0] * self.f1[1] - 1


def _sech2(x: float) -> float:
    e = np.exp(-2.0 * abs(x))
    return float(4.0 * e / (1.0 + e) ** 2)


def jacobian_terms(game, Q, betas) -> JacobianTerms:
    """Partials of ``Q_i = tanh(beta_i D_i(Q_-i) / 2)`` and the Jacobian dQ/dbeta.

    Implicit differentiation of the two fixed-point equations gives
    ``dQ/dbeta = [[f2_1, f1_1 f2_2], [f1_2 f2_1, f2_2]] / (1 - f1_1 f1_2)``.
    """
    pd = payoff_differences(game)
    Q = Q if isinstance(Q, QCoordinates) else QCoordinates(*Q)
    b1, b2 = _betas(betas)
    # D = alpha + gamma Q rounded once, so partials stay accurate near D = 0
    d1 = float(Fraction(pd.alpha1) + Fraction(pd.gamma1) * Fraction(float(Q.Q2)))
    d2 = float(Fraction(pd.alpha2) + Fraction(pd.gamma2) * Fraction(float(Q.Q1)))
    s1, s2 = _sech2(0.5 * b1 * d1), _sech2(0.5 * b2 * d2)
    f1 = (float(s1 * b1 * pd.gamma1 / 2), float(s2 * b2 * pd.gamma2 / 2))
    f2 = (float(s1 * d1 / 2), float(s2 * d2 / 2))
    denom = 1 - f1[0] * f1[1]
    if abs(denom) < SINGULAR_TOL:
        return JacobianTerms(f1, f2, None, True)
    J = np.array([[f2[0], f1[0] * f2[1]], [f1[1] * f2[0], f2[1]]]) / denom
    return JacobianTerms(f1, f2, J, False)


class SurfaceRejection(ValueError):
    def __init__(self, reason: str, agent: int):
        super().__init__(f"{reason} (agent {agent})")
        self.reason = reason
        self.agent = agent


def invert_beta_on_surface(game, Q) -> LogitParams:
    """The betas that make ``Q`` a logit fixed point: ``beta_i = 2 artanh(Q_i) / D_i``."""
    pd = payoff_differences(game)
    Q = Q if isinstance(Q, QCoordinates) else QCoordinates(*Q)
    if not (-1 < Q.Q1 < 1 and -1 < Q.Q2 < 1):
        raise SurfaceRejection("off-surface: Q must be interior", 0 if abs(Q.Q1) >= 1 else 1)
    betas = []
    for agent, (q, d) in enumerate(((Q.Q1, pd.d1(Q.Q2)), (Q.Q2, pd.d2(Q.Q1)))):
        if d == 0:
            raise SurfaceRejection("indeterminate" if q == 0 else "off-surface", agent)
        b = 2 * np.arctanh(q) / d
        if b < 0:
            raise SurfaceRejection("off-surface: negative beta", agent)
        betas.append(float(b))
    return LogitParams(tuple(betas))


def beta_field(game, Q1, Q2):
    """Vectorized inversion; returns ``(beta1, beta2, valid)``."""
    pd = payoff_differences(game)
    Q1, Q2 = np.broadcast_arrays(np.asarray(Q1, float), np.asarray(Q2, float))
    d1, d2 = pd.d1(Q2), pd.d2(Q1)
    with np.errstate(divide="ignore", invalid="ignore"):
        b1 = 2 * np.arctanh(Q1) / d1
        b2 = 2 * np.arctanh(Q2) / d2
    valid = np.isfinite(b1) & np.isfinite(b2) & (b1 >= 0) & (b2 >= 0)
    return b1, b2, valid


def critical_value(game, Q1, Q2):
    """``f1_1 f1_2 - 1`` on the fixed-point surface over the Q plane (NaN off it)."""
    pd = payoff_differences(game)
    b1, b2, valid = beta_field(game, Q1, Q2)
    Q1, Q2 = np.broadcast_arrays(np.asarray(Q1, float), np.asarray(Q2, float))
    c = (1 - Q1**2) * b1 * pd.gamma1 / 2 * (1 - Q2**2) * b2 * pd.gamma2 / 2 - 1
    return np.where(valid, c, np.nan)


def surface_residual(game, Q1, Q2, b1, b2) -> float:
    pd = payoff_differences(game)
    return float(max(abs(Q1 - np.tanh(0.5 * b1 * pd.d1(Q2))),
                     abs(Q2 - np.tanh(0.5 * b2 * pd.d2(Q1)))))


@dataclass
class CriticalCurve:
    points: np.ndarray  # rows (Q1, Q2, beta1, beta2)
    closure: str  # "open_arc" or "closed_loop"


def _bisect_edge(game, p0, p1, c0):
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    for _ in range(200):
        mid = 0.5 * (p0 + p1)
        cm = float(critical_value(game, mid[0], mid[1]))
        if not np.isfinite(cm):
            return None
        if abs(cm) <= CRITICAL_TOL * 1e-3 or np.all(mid == p0) or np.all(mid == p1):
            return mid, cm
        if (cm > 0) == (c0 > 0):
            p0, c0 = mid, cm
        else:
            p1 = mid
    return mid, cm


def trace_critical_set(game, grid_resolution: int = 256) -> list[CriticalCurve]:
    """Zero set of ``f1_1 f1_2 - 1`` over the admissible part of the open Q square.

    Marching squares on a ``grid_resolution``-square grid; cells touching the
    inadmissible region are skipped, crossings are bisected along grid edges.
    """
    if grid_resolution < 64:
        raise ValueError("grid_resolution must be at least 64")
    game = _g22(game)
    q = np.linspace(-1, 1, grid_resolution + 2)[1:-1]
    Q1, Q2 = np.meshgrid(q, q, indexing="ij")
    c = critical_value(game, Q1, Q2)
    valid = np.isfinite(c)
    pos = c > 0
    n = grid_resolution
    cache: dict = {}

    def crossing(key):
        if key in cache:
            return cache[key]
        kind, i, j = key
        a, b = ((i, j), (i + 1, j)) if kind == "h" else ((i, j), (i, j + 1))
        res = _bisect_edge(game, (q[a[0]], q[a[1]]), (q[b[0]], q[b[1]]), c[a])
        cache[key] = res
        return res

    segments = []
    for i in range(n - 1):
        for j in range(n - 1):
            if not (valid[i, j] and valid[i + 1, j] and valid[i, j + 1] and valid[i + 1, j + 1]):
                continue
            s00, s10, s11, s01 = pos[i, j], pos[i + 1, j], pos[i + 1, j + 1], pos[i, j + 1]
            edges = []
            if s00 != s10:
                edges.append(("bottom", ("h", i, j)))
            if s10 != s11:
                edges.append(("right", ("v", i + 1, j)))
            if s01 != s11:
                edges.append(("top", ("h", i, j + 1)))
            if s00 != s01:
                edges.append(("left", ("v", i, j)))
            if len(edges) == 2:
                segments.append((edges[0][1], edges[1][1]))
            elif len(edges) == 4:
                e = dict(edges)
                centre = (c[i, j] + c[i + 1, j] + c[i + 1, j + 1] + c[i, j + 1]) / 4 > 0
                if centre == s00:
                    segments += [(e["bottom"], e["right"]), (e["top"], e["left"])]
                else:
                    segments += [(e["bottom"], e["left"]), (e["right"], e["top"])]

    adj: dict = {}
    for a, b in segments:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)

    def walk(start):
        chain, prev, cur = [start], None, start
        while True:
            nxt = [k for k in adj[cur] if k != prev]
            if not nxt or nxt[0] == start:
                return chain, bool(nxt)
            prev, cur = cur, nxt[0]
            chain.append(cur)

    curves, done = [], set()
    starts = sorted(k for k, v in adj.items() if len(v) == 1) + sorted(adj)
    for s in starts:
        if s in done:
            continue
        chain, closed = walk(s)
        done.update(chain)
        rows = []
        for key in chain:
            res = crossing(key)
            if res is None:
                continue
            (a, b), cv = res
            b1, b2, ok = beta_field(game, a, b)
            if not ok or abs(cv) > CRITICAL_TOL:
                continue
            rows.append((a, b, float(b1), float(b2)))
        if len(rows) >= 2:
            curves.append(CriticalCurve(np.array(rows), "closed_loop" if closed else "open_arc"))
    return curves


def branch_locus(curves: Sequence[CriticalCurve],
                 beta_max: float = DEFAULT_BETA_MAX) -> list[np.ndarray]:
    """Project critical curves to the (beta1, beta2) plane, split where they leave the box."""
    out = []
    for curve in curves:
        betas = curve.points[:, 2:4]
        inside = np.all((betas >= 0) & (betas <= beta_max), axis=1)
        start = None
        for k, ok in enumerate(list(inside) + [False]):
            if ok and start is None:
                start = k
            elif not ok and start is not None:
                if k - start >= 2:
                    out.append(betas[start:k].copy())
                start = None
    return out


@dataclass
class RegionMap:
    beta1: np.ndarray
    beta2: np.ndarray
    counts: np.ndarray  # (len(beta1), len(beta2))


def count_fixed_points_region(game, beta1_values, beta2_values, threads: int = 1) -> RegionMap:
    """Number of logit QRE at every (beta1, beta2) grid node."""
    game = _g22(game)
    b1 = np.asarray(beta1_values, float)
    b2 = np.asarray(beta2_values, float)

    def row(i):
        return [len(solve_qre_fixed_points(game, (b1[i], v))) for v in b2]

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if threads and threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                rows = list(pool.map(row, range(len(b1))))
        else:
            rows = [row(i) for i in range(len(b1))]
    return RegionMap(b1, b2, np.array(rows, dtype=int))


def distance_to_polylines(points, polylines: Sequence[np.ndarray]) -> np.ndarray:
    """Euclidean distance from each point to the nearest polyline segment."""
    pts = np.atleast_2d(np.asarray(points, float))
    best = np.full(len(pts), np.inf)
    for line in polylines:
        a, b = line[:-1], line[1:]
        ab = b - a
        L2 = np.maximum((ab**2).sum(axis=1), 1e-300)
        for k, p in enumerate(pts):
            t = np.clip(((p - a) * ab).sum(axis=1) / L2, 0, 1)
            d = np.sqrt((((a + t[:, None] * ab) - p) ** 2).sum(axis=1)).min()
            best[k] = min(best[k], d)
    return best


# --- Heaviside best-response map --------------------------------------------------

def _heaviside(value: Fraction, tie: Fraction) -> Fraction:
    if value > 0:
        return Fraction(1)
    if value < 0:
        return Fraction(0)
    return tie


def _exact_differences(game):
    A, B = _g22(game).exact()

    def dq1(y):
        return (A[0][0] - A[1][0]) * y + (A[0][1] - A[1][1]) * (1 - y)

    def dq2(x):
        return (B[0][0] - B[0][1]) * x + (B[1][0] - B[1][1]) * (1 - x)

    return dq1, dq2


def heaviside_best_response_map(game, point, tie=None) -> tuple[Fraction, Fraction]:
    """``Psi(x, y) = (H(dq1(y)), H(dq2(x)))`` in first-choice probabilities.

    At a payoff tie ``H`` returns ``tie``; the default keeps the current
    coordinate, which makes the fixed points exactly the Nash equilibria.
    """
    dq1, dq2 = _exact_differences(game)
    x, y = (Fraction(v) for v in point)
    if not (0 <= x <= 1 and 0 <= y <= 1):
        raise ValueError("point must lie in the unit square")
    tx = x if tie is None else Fraction(tie)
    ty = y if tie is None else Fraction(tie)
    return _heaviside(dq1(y), tx), _heaviside(dq2(x), ty)


@dataclass
class HeavisideFixedPoints:
    points: list[tuple[Fraction, Fraction]]
    degenerate: bool


def _affine_root(f):
    f0, f1 = f(Fraction(0)), f(Fraction(1))
    if f0 == f1:
        return None
    r = f0 / (f0 - f1)
    return r if 0 <= r <= 1 else None


def heaviside_fixed_points(game) -> HeavisideFixedPoints:
    """Fixed points of the Heaviside map; ``degenerate`` flags a payoff difference identically 0."""
    dq1, dq2 = _exact_differences(game)
    degenerate = dq1(Fraction(0)) == dq1(Fraction(1)) == 0 or dq2(Fraction(0)) == dq2(Fraction(1)) == 0
    xs = {Fraction(0), Fraction(1)}
    ys = {Fraction(0), Fraction(1)}
    if (r := _affine_root(dq2)) is not None:
        xs.add(r)
    if (r := _affine_root(dq1)) is not None:
        ys.add(r)
    pts = sorted((x, y) for x in xs for y in ys
                 if heaviside_best_response_map(game, (x, y)) == (x, y))
    return HeavisideFixedPoints(pts, degenerate)
