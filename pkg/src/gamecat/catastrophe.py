"""Cusp equilibrium surface, Thom's elementary unfoldings and stochastic
catastrophe densities.

The cusp potential is ``G(x | u1, u2) = x^4/4 - u1 x^2/2 - u2 x`` whose
stationary points solve ``-x^3 + u1 x + u2 = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

BOUNDARY_BAND = 1e-12


@dataclass(frozen=True)
class CuspControl:
    u1: float
    u2: float


@dataclass(frozen=True)
class StationaryPoint:
    x: float
    stability: str  # "stable" or "unstable"
    multiplicity: int = 1


@dataclass(frozen=True)
class StationarySet:
    roots: tuple[StationaryPoint, ...]
    control: CuspControl
    residual: float

    @property
    def count(self) -> int:
        return len(self.roots)

    @property
    def values(self) -> list[float]:
        return [r.x for r in self.roots]


def cusp_potential(x, u1: float, u2: float):
    return 0.25 * x**4 - 0.5 * u1 * x**2 - u2 * x


def cusp_drift(u1: float, u2: float) -> Callable:
    """``g(x) = -dG/dx = -x^3 + u1 x + u2``."""
    return lambda x: -x**3 + u1 * x + u2


def cusp_discriminant(u1: float, u2: float) -> float:
    return 4.0 * u1**3 - 27.0 * u2**2


def cusp_region(c: CuspControl) -> str:
    d = cusp_discriminant(c.u1, c.u2)
    if abs(d) <= BOUNDARY_BAND:
        return "boundary"
    return "A_three" if d > 0 else "B_one"


def _cubic(x, u1, u2):
    return x**3 - u1 * x - u2


def _polish(x, u1, u2):
    d = 3 * x * x - u1
    if d == 0:
        return x
    try:
        y = x - _cubic(x, u1, u2) / d
        return y if abs(_cubic(y, u1, u2)) <= abs(_cubic(x, u1, u2)) else x
    except OverflowError:
        return x


def _as_control(c) -> CuspControl:
    return c if isinstance(c, CuspControl) else CuspControl(*c)


def _regular_roots(u1, u2, disc):
    if disc > 0:
        r = 2.0 * math.sqrt(u1 / 3.0)
        arg = 1.5 * u2 / u1 * math.sqrt(3.0 / u1)
        theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        xs = [r * math.cos(theta - 2.0 * math.pi * k / 3.0) for k in range(3)]
    elif u1 == 0 or abs(u2) * math.sqrt(3.0 / abs(u1)) > 1e8 * abs(u1):
        # |u1| negligible next to u2^(2/3): expand around the cube root
        r = float(np.cbrt(u2))
        xs = [r + u1 / (3.0 * r)]
    elif u1 > 0:
        arg = max(1.0, 1.5 * abs(u2) / u1 * math.sqrt(3.0 / u1))
        xs = [math.copysign(2.0 * math.sqrt(u1 / 3.0) * math.cosh(math.acosh(arg) / 3.0), u2)]
    else:
        a = -u1
        arg = 1.5 * u2 / a * math.sqrt(3.0 / a)
        xs = [2.0 * math.sqrt(a / 3.0) * math.sinh(math.asinh(arg) / 3.0)]
    return [_polish(x, u1, u2) for x in xs]


def _fold_roots(u1, u2):
    """Simple and double root on the fold ``27 u2^2 = 4 u1^3``, or None if too far off it."""
    if not (u1 > 0 and u2 != 0):
        return None
    if abs(cusp_discriminant(u1, u2)) >= 1e-9 * (4.0 * u1**3 + 27.0 * u2**2):
        return None
    h = math.copysign(math.sqrt(u1 / 3.0), u2)
    xs = [_polish(2.0 * h, u1, u2), -h]
    if max(abs(_cubic(x, u1, u2)) for x in xs) > 1e-10:
        return None
    return xs


def cusp_stationary_points(c) -> StationarySet:
    """Real roots of ``x^3 - u1 x - u2 = 0``, closed form plus one Newton step.

    Inside the boundary band a fold is reported as a simple root plus a
    double root (flagged unstable) when that fits to 1e-10; near the cusp
    point the band is wider than the roots' conditioning allows, so the
    regular formulas are used there.
    """
    c = _as_control(c)
    u1, u2 = float(c.u1), float(c.u2)
    disc = cusp_discriminant(u1, u2)
    if u1 == 0 and u2 == 0:
        xs, mult = [0.0], [3]
    elif abs(disc) <= BOUNDARY_BAND and (fold := _fold_roots(u1, u2)) is not None:
        xs, mult = fold, [1, 2]
    else:
        xs = _regular_roots(u1, u2, disc)
        mult = [1] * len(xs)
    order = np.argsort(xs)
    roots = []
    for i in order:
        x, m = xs[i], mult[i]
        stable = m == 1 and 3 * x * x - u1 > 0
        roots.append(StationaryPoint(x, "stable" if stable else "unstable", m))
    residual = max(abs(-x**3 + u1 * x + u2) for x in xs)
    return StationarySet(tuple(roots), c, residual)


def cusp_fold_points(u1: float) -> tuple[float, ...]:
    """``u2`` values where a fold occurs on the slice ``u1 = const``."""
    if u1 <= 0:
        return ()
    h = math.sqrt(4.0 * u1**3 / 27.0)
    return (-h, h)


def locate_folds(u1: float, u2_range: tuple[float, float], n: int = 401,
                 xtol: float = 1e-13) -> list[float]:
    """Numerically find where the root count changes along ``u2``, by bisection."""
    u2 = np.linspace(u2_range[0], u2_range[1], n)
    counts = [cusp_stationary_points((u1, v)).count for v in u2]
    folds = []
    for i in range(n - 1):
        if counts[i] == counts[i + 1]:
            continue
        lo, hi, clo = u2[i], u2[i + 1], counts[i]
        while hi - lo > xtol:
            mid = 0.5 * (lo + hi)
            if cusp_stationary_points((u1, mid)).count == clo:
                lo = mid
            else:
                hi = mid
        folds.append(0.5 * (lo + hi))
    return folds


@dataclass
class CuspSurface:
    u1: np.ndarray
    u2: np.ndarray
    counts: np.ndarray  # (len(u1), len(u2))
    rows: list[tuple[float, float, float, str]]  # (u1, u2, root, stability)


def _axis(rng, n):
    lo, hi = rng
    return np.linspace(lo, hi, n)


def sweep_cusp_surface(u1_range, u2_range, resolution) -> CuspSurface:
    """Sample the equilibrium surface on a grid; one row per stationary point."""
    n1, n2 = (resolution, resolution) if np.isscalar(resolution) else resolution
    if n1 < 2 or n2 < 2:
        raise ValueError("resolution must be at least 2 per axis")
    a1, a2 = _axis(u1_range, n1), _axis(u2_range, n2)
    counts = np.zeros((n1, n2), dtype=int)
    rows = []
    for i, u1 in enumerate(a1):
        for j, u2 in enumerate(a2):
            s = cusp_stationary_points((float(u1), float(u2)))
            counts[i, j] = s.count
            rows.extend((float(u1), float(u2), r.x, r.stability) for r in s.roots)
    return CuspSurface(a1, a2, counts, rows)


# --- Thom's seven elementary catastrophes --------------------------------------

# a term is (coefficient, state exponents, control index or None)
Term = tuple[float, tuple[int, ...], "int | None"]


@dataclass(frozen=True)
class UnfoldingSpec:
    name: str
    codimension: int
    n_states: int
    terms: tuple[Term, ...]

    @property
    def germ_terms(self) -> tuple[Term, ...]:
        return tuple(t for t in self.terms if t[2] is None)


UNFOLDINGS = {
    "Fold": UnfoldingSpec("Fold", 1, 1, ((1, (3,), None), (1, (1,), 0))),
    "Cusp": UnfoldingSpec("Cusp", 2, 1, ((1, (4,), None), (1, (2,), 0), (1, (1,), 1))),
    "SwallowTail": UnfoldingSpec("SwallowTail", 3, 1, (
        (1, (5,), None), (1, (3,), 0), (1, (2,), 1), (1, (1,), 2))),
    "Butterfly": UnfoldingSpec("Butterfly", 4, 1, (
        (1, (6,), None), (1, (4,), 0), (1, (3,), 1), (1, (2,), 2), (1, (1,), 3))),
    "HyperbolicUmbilic": UnfoldingSpec("HyperbolicUmbilic", 3, 2, (
        (1, (3, 0), None), (1, (0, 3), None), (1, (1, 1), 0), (1, (1, 0), 1), (1, (0, 1), 2))),
    "EllipticUmbilic": UnfoldingSpec("EllipticUmbilic", 3, 2, (
        (1, (3, 0), None), (-3, (1, 2), None),
        (1, (2, 0), 0), (1, (0, 2), 0), (1, (1, 0), 1), (1, (0, 1), 2))),
    "ParabolicUmbilic": UnfoldingSpec("ParabolicUmbilic", 4, 2, (
        (1, (2, 1), None), (1, (0, 4), None),
        (1, (2, 0), 0), (1, (0, 2), 1), (1, (1, 0), 2), (1, (0, 1), 3))),
}


def _eval_terms(terms, controls, state):
    value = 0.0
    grad = [0.0] * len(state)
    for coef, powers, ctl in terms:
        w = coef if ctl is None else coef * controls[ctl]
        mono = w
        for s, p in zip(state, powers):
            mono *= s**p
        value += mono
        for k, p in enumerate(powers):
            if p == 0:
                continue
            d = w * p
            for idx, (s, q) in enumerate(zip(state, powers)):
                d *= s ** (q - 1 if idx == k else q)
            grad[k] += d
    return value, np.array(grad)


def _spec(spec) -> UnfoldingSpec:
    return UNFOLDINGS[spec] if isinstance(spec, str) else spec


def evaluate_unfolding(spec, controls: Sequence[float], state: Sequence[float]):
    """Value and state-gradient of the unfolding polynomial."""
    spec = _spec(spec)
    controls, state = list(controls), list(np.atleast_1d(state))
    if len(controls) != spec.codimension:
        raise ValueError(f"{spec.name} takes {spec.codimension} controls, got {len(controls)}")
    if len(state) != spec.n_states:
        raise ValueError(f"{spec.name} takes {spec.n_states} state variables, got {len(state)}")
    return _eval_terms(spec.terms, controls, state)


def evaluate_germ(spec, state: Sequence[float]):
    spec = _spec(spec)
    state = list(np.atleast_1d(state))
    if len(state) != spec.n_states:
        raise ValueError(f"{spec.name} takes {spec.n_states} state variables, got {len(state)}")
    return _eval_terms(spec.germ_terms, [], state)


# --- stochastic catastrophe densities -------------------------------------------

def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-12, max_depth: int = 40) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) * (fa + 4 * fm + fb) / 6
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a0, b0, fa0, fm0, fb0, s, eps, depth = stack.pop()
        m = 0.5 * (a0 + b0)
        flm, frm = f(0.5 * (a0 + m)), f(0.5 * (m + b0))
        left = (m - a0) * (fa0 + 4 * flm + fm0) / 6
        right = (b0 - m) * (fm0 + 4 * frm + fb0) / 6
        delta = left + right - s
        if depth >= max_depth or abs(delta) <= 15 * eps:
            total += left + right + delta / 15
        else:
            stack.append((a0, m, fa0, flm, fm0, left, eps / 2, depth + 1))
            stack.append((m, b0, fm0, frm, fb0, right, eps / 2, depth + 1))
    return total


@dataclass
class StationaryDensity:
    x: np.ndarray
    density: np.ndarray
    log_z: float  # log of the normalizer of exp(exponent)
    support: tuple[float, float]
    xi: float | None = None

    @property
    def z(self) -> float:
        return math.exp(self.log_z)

    @property
    def spacing(self) -> float:
        return float(self.x[1] - self.x[0])

    def modes(self) -> np.ndarray:
        """Grid locations of strict local maxima."""
        d = self.density
        idx = np.flatnonzero((d[1:-1] > d[:-2]) & (d[1:-1] >= d[2:])) + 1
        return self.x[idx]

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.x))


def stationary_density(drift: Callable, sigma, support: tuple[float, float],
                       grid_size: int = 2001, sigma_sq_derivative: Callable | None = None,
                       tol: float = 1e-12) -> StationaryDensity:
    """Stationary density of ``dx = g(x) dt + sigma(x) dW`` on ``support``.

    ``sigma`` is a positive constant or a callable.  The exponent is
    integrated from the lower end of ``support``; a constant ``sigma``
    uses ``xi = 2 / sigma^2`` directly.  ``d(sigma^2)/dx`` is taken from
    ``sigma_sq_derivative`` when given, else by central differences.
    """
    lo, hi = map(float, support)
    if not hi > lo:
        raise ValueError("support must have hi > lo")
    x = np.linspace(lo, hi, grid_size)
    constant = not callable(sigma)
    xi = None
    if constant:
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        xi = 2.0 / sigma**2

        def integrand(z):
            return xi * drift(z)
    else:
        s = np.array([sigma(v) for v in x], dtype=float)
        if not np.all(s > 0):
            bad = x[np.argmin(s)]
            raise ValueError(f"sigma must be positive on the support; sigma({bad}) = {sigma(bad)}")

        def dsig2(z):
            if sigma_sq_derivative is not None:
                return sigma_sq_derivative(z)
            h = 1e-6 * max(1.0, abs(z))
            return (sigma(z + h) ** 2 - sigma(z - h) ** 2) / (2 * h)

        def integrand(z):
            return 2.0 * (drift(z) - 0.5 * dsig2(z)) / sigma(z) ** 2

    pieces = [adaptive_simpson(integrand, x[i], x[i + 1], tol) for i in range(grid_size - 1)]
    exponent = np.concatenate([[0.0], np.cumsum(pieces)])
    top = exponent.max()
    w = np.exp(exponent - top)
    norm = np.trapezoid(w, x)
    return StationaryDensity(x, w / norm, float(math.log(norm) + top), (lo, hi), xi)


class TrajectoryEscape(RuntimeError):
    def __init__(self, time: float, step: int, trajectory: np.ndarray):
        super().__init__(f"trajectory left the guard interval at t = {time:g} (step {step})")
        self.time = time
        self.step = step
        self.trajectory = trajectory


@dataclass
class SDEResult:
    trajectory: np.ndarray
    dt: float
    seed: int
    edges: np.ndarray
    histogram: np.ndarray  # empirical density per bin

    def histogram_at(self, x) -> np.ndarray:
        """Piecewise-constant empirical density evaluated at points ``x``."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.edges, x, side="right") - 1
        idx[x == self.edges[-1]] = len(self.histogram) - 1
        inside = (idx >= 0) & (idx < len(self.histogram))
        out = np.zeros_like(x)
        out[inside] = self.histogram[idx[inside]]
        return out

    def l1_distance(self, density: StationaryDensity) -> float:
        """L1 distance between bin masses and the density's mass per bin.

        Mass of ``density`` outside the histogram range counts fully.
        """
        x, p = density.x, density.density
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(x))])
        mass = np.diff(np.interp(self.edges, x, cdf))
        emp = self.histogram * np.diff(self.edges)
        return float(np.abs(emp - mass).sum() + max(0.0, cdf[-1] - mass.sum()))


def make_rng(seed: int) -> np.random.Generator:
    """Philox-4x64 counter-based generator; reproducible across platforms."""
    return np.random.Generator(np.random.Philox(seed))


def simulate_sde(drift: Callable, sigma, x0: float, dt: float, steps: int, seed: int,
                 guard: tuple[float, float] = (-1e3, 1e3), bins: int = 60) -> SDEResult:
    """Euler-Maruyama path of ``dx = g(x) dt + sigma(x) dW``.

    Raises :class:`TrajectoryEscape` if the path leaves ``guard``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    lo, hi = guard
    if not lo <= x0 <= hi:
        raise ValueError(f"x0 = {x0:g} is outside the guard interval [{lo:g}, {hi:g}]")
    noise = make_rng(seed).standard_normal(steps) * math.sqrt(dt)
    traj = np.empty(steps + 1)
    traj[0] = x = float(x0)
    const = not callable(sigma)
    for n in range(steps):
        s = sigma if const else sigma(x)
        try:
            x = x + drift(x) * dt + s * noise[n]
        except OverflowError:
            x = math.inf
        if not lo <= x <= hi:
            traj[n + 1] = x
            raise TrajectoryEscape((n + 1) * dt, n + 1, traj[:n + 2].copy())
        traj[n + 1] = x
    hist, edges = np.histogram(traj, bins=bins, density=True)
    return SDEResult(traj, dt, seed, edges, hist)
