import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage, optimize

from gamecat.game_model import BimatrixGame, NormalFormGame, chicken, prisoners_dilemma
from gamecat.lemke_howson import is_nondegenerate, support_enumeration
from gamecat.qre import (
    LogitParams,
    QCoordinates,
    SurfaceRejection,
    beta_field,
    branch_locus,
    count_fixed_points_region,
    critical_value,
    distance_to_polylines,
    heaviside_best_response_map,
    heaviside_fixed_points,
    invert_beta_on_surface,
    jacobian_terms,
    logit_response,
    nash_limit_check,
    payoff_differences,
    qre_iterate,
    solve_qre_fixed_points,
    surface_residual,
    trace_critical_set,
)

F = Fraction


def random_game(rng):
    return BimatrixGame(rng.integers(-5, 6, (2, 2)), rng.integers(-5, 6, (2, 2)))


def softmax(z):
    w = np.exp(z - z.max())
    return w / w.sum()


def dense_fixed_point_count(game, betas, n=200_001):
    """Sign changes of x - R1(R2(x)) on a dense grid, built from the general logit response."""
    x = np.linspace(0, 1, n)
    A, B = game.A, game.B
    b1, b2 = betas
    # agent 2 answers x with softmax(b2 * B^T x); agent 1 answers y with softmax(b1 * A y)
    zb = b2 * np.stack([x * B[0, 0] + (1 - x) * B[1, 0], x * B[0, 1] + (1 - x) * B[1, 1]], axis=1)
    y = 1 / (1 + np.exp(zb[:, 1] - zb[:, 0]))
    za = b1 * np.stack([y * A[0, 0] + (1 - y) * A[0, 1], y * A[1, 0] + (1 - y) * A[1, 1]], axis=1)
    r = 1 / (1 + np.exp(za[:, 1] - za[:, 0]))
    f = x - r
    return int(np.sum(np.sign(f[1:]) * np.sign(f[:-1]) < 0) + np.sum(f == 0))


def cusp_free_locus_points(locus, skip=0.05):
    """Sample locus points away from cusp tips (where the projected curve turns back)."""
    out = []
    for line in locus:
        # a cusp tip is where the direction reverses within a few samples
        w = 4
        turns = [k for k in range(w, len(line) - w)
                 if np.dot(line[k + w] - line[k], line[k] - line[k - w]) < 0]
        tips = line[turns] if turns else np.empty((0, 2))
        for k in np.linspace(2, len(line) - 3, 9).astype(int):
            p = line[k]
            if len(tips) and np.min(np.linalg.norm(tips - p, axis=1)) < skip * max(1, np.linalg.norm(p)):
                continue
            t = line[k + 1] - line[k - 1]
            out.append((p, t / np.linalg.norm(t)))
    return out


class TestLogitResponse:
    def test_beta_zero_uniform(self):
        g = NormalFormGame(np.random.default_rng(0).normal(size=(3, 2, 4, 3)))
        p = (np.array([1.0, 0, 0]), np.array([0.0, 1]), np.array([0.0, 0, 1, 0]))
        r = logit_response(g, p, (0, 0, 0))
        for k, q in zip((3, 2, 4), r):
            np.testing.assert_allclose(q, np.full(k, 1 / k))

    def test_chicken_large_beta(self):
        r = logit_response(chicken(), (np.array([0.5, 0.5]), np.array([1.0, 0.0])), (1e3, 1e3))
        assert r[0][1] >= 1 - 1e-9

    def test_constant_game(self):
        g = BimatrixGame(np.full((2, 3), 4.0), np.full((2, 3), -1.0))
        r = logit_response(g, (np.array([0.2, 0.8]), np.array([1.0, 0, 0])), (7, 3))
        np.testing.assert_allclose(r[0], [0.5, 0.5])
        np.testing.assert_allclose(r[1], [1 / 3] * 3)

    def test_against_direct_softmax(self):
        rng = np.random.default_rng(1)
        g = BimatrixGame(rng.normal(size=(3, 4)), rng.normal(size=(3, 4)))
        x, y = softmax(rng.normal(size=3)), softmax(rng.normal(size=4))
        r = logit_response(g, (x, y), (1.7, 0.4))
        np.testing.assert_allclose(r[0], softmax(1.7 * g.A @ y), atol=1e-15)
        np.testing.assert_allclose(r[1], softmax(0.4 * x @ g.B), atol=1e-15)

    def test_overflow_safe(self):
        r = logit_response(chicken(), (np.array([0.5, 0.5]), np.array([0.5, 0.5])), (1e6, 1e6))
        assert all(np.all(np.isfinite(q)) for q in r)

    def test_beta_count_checked(self):
        with pytest.raises(ValueError):
            logit_response(chicken(), (np.array([0.5, 0.5]), np.array([0.5, 0.5])), (1.0,))

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**16), b1=st.floats(0, 20), b2=st.floats(0, 20),
           Q2=st.floats(-0.999, 0.999))
    def test_tanh_identity(self, seed, b1, b2, Q2):
        g = random_game(np.random.default_rng(seed))
        pd = payoff_differences(g)
        y = (1 + Q2) / 2
        r = logit_response(g, (np.array([0.5, 0.5]), np.array([y, 1 - y])), (b1, b2))
        assert 2 * r[0][0] - 1 == pytest.approx(math.tanh(b1 * pd.d1(Q2) / 2), abs=1e-12)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            LogitParams((-1.0, 0.0))
        with pytest.raises(ValueError):
            LogitParams((math.inf, 0.0))


class TestQCoordinates:
    def test_round_trip(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            q = QCoordinates(*rng.uniform(-1, 1, 2))
            back = QCoordinates.from_profile(q.to_profile())
            assert abs(back.Q1 - q.Q1) <= 1e-15 and abs(back.Q2 - q.Q2) <= 1e-15


class TestSolve:
    def test_beta_zero(self):
        rng = np.random.default_rng(3)
        for g in [chicken(), prisoners_dilemma()] + [random_game(rng) for _ in range(20)]:
            fps = solve_qre_fixed_points(g, (0, 0))
            assert len(fps) == 1
            assert fps[0].profile.max_distance(((0.5, 0.5), (0.5, 0.5))) == 0

    def test_chicken_counts(self):
        assert len(solve_qre_fixed_points(chicken(), (0.01, 0.01))) == 1
        fps = solve_qre_fixed_points(chicken(), (10, 10))
        assert len(fps) == 3
        assert [f.stability for f in fps] == ["stable", "unstable", "stable"]

    def test_residuals_and_interior(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            g = random_game(rng)
            b = rng.uniform(0, 30, 2)
            for f in solve_qre_fixed_points(g, b):
                assert f.residual <= 1e-10
                assert all(np.all(p > 0) for p in f.profile)

    def test_against_dense_oracle_and_parity(self):
        rng = np.random.default_rng(5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for _ in range(40):
                g = random_game(rng)
                b = rng.uniform(0, 8, 2)
                n = len(solve_qre_fixed_points(g, b))
                assert n == dense_fixed_point_count(g, b)
                assert n % 2 == 1

    def test_stability_matches_iteration(self):
        g = chicken()
        for f in solve_qre_fixed_points(g, (3, 3)):
            start = f.profile.distributions
            # nudge toward the centre so the start stays a distribution
            nudged = tuple(np.array([p[0], p[1]]) + 1e-4 * np.sign(0.5 - p[0]) * np.array([1, -1])
                           for p in start)
            res = qre_iterate(g, nudged, (3, 3), damping=1.0, max_iter=20000)
            moved = res.profile.max_distance(f.profile)
            if f.stability == "stable":
                assert res.converged and moved < 1e-8
            else:
                assert moved > 1e-3

    def test_marginal_flag_at_pitchfork(self):
        g = chicken()
        pd = payoff_differences(g)
        # symmetric point where the one-agent slope is exactly -1, located in Q space
        q = optimize.brentq(
            lambda q: (1 - q * q) * np.arctanh(q) * pd.gamma1 / pd.d1(q) + 1, 0.01, 0.79, xtol=1e-16
        )
        b = 2 * np.arctanh(q) / pd.d1(q)
        fps = solve_qre_fixed_points(g, (b, b))
        assert [f.stability for f in fps] == ["marginal"]
        assert abs(fps[0].Q.Q1 - q) < 1e-4

    def test_near_fold_pair_slopes(self):
        g = chicken()
        curve = trace_critical_set(g, 128)[1]
        b1, b2 = curve.points[len(curve.points) // 3, 2:4]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fps = solve_qre_fixed_points(g, (b1 * 1.001, b2 * 1.001))
        assert min(abs(f.derivative - 1) for f in fps) < 0.1

    def test_requires_2x2(self):
        with pytest.raises(ValueError):
            solve_qre_fixed_points(BimatrixGame(np.ones((3, 2)), np.ones((3, 2))), (1, 1))


class TestIterate:
    def test_beta_zero_one_step(self):
        res = qre_iterate(chicken(), ((1.0, 0.0), (0.0, 1.0)), (0, 0))
        assert res.converged and res.iterations == 1
        assert res.profile.max_distance(((0.5, 0.5), (0.5, 0.5))) == 0

    def test_three_agent_constant(self):
        g = NormalFormGame(np.zeros((2, 2, 2, 3)))
        res = qre_iterate(g, ((1.0, 0), (1.0, 0), (0.0, 1)), (2, 2, 2))
        assert res.converged
        for p in res.profile:
            np.testing.assert_allclose(p, [0.5, 0.5])

    def test_chicken_near_pure(self):
        g = chicken()
        res = qre_iterate(g, ((0.01, 0.99), (0.99, 0.01)), (10, 10), damping=0.5)
        assert res.converged and res.residual <= 1e-10
        nearest = min(solve_qre_fixed_points(g, (10, 10)),
                      key=lambda f: f.profile.max_distance(res.profile))
        assert nearest.profile.max_distance(res.profile) < 1e-9

    def test_non_convergence_status(self):
        res = qre_iterate(chicken(), ((0.3, 0.7), (0.6, 0.4)), (10, 10), max_iter=2)
        assert not res.converged and res.residual > 1e-10

    def test_damping_range(self):
        with pytest.raises(ValueError):
            qre_iterate(chicken(), ((0.5, 0.5), (0.5, 0.5)), (1, 1), damping=0)


class TestNashLimit:
    def test_chicken(self):
        rep = nash_limit_check(chicken(), 50)
        assert rep.cardinality_match and rep.qre_count == 3
        assert rep.max_distance <= 1e-2

    def test_pd(self):
        rep = nash_limit_check(prisoners_dilemma(), 50)
        assert rep.qre_count == rep.nash_count == 1 and rep.max_distance <= 1e-2
        eq = support_enumeration(prisoners_dilemma())[rep.pairs[0][1]]
        assert eq.exact == ((0, 1), (0, 1))

    def test_constant_game_degenerate(self):
        rep = nash_limit_check(BimatrixGame(np.ones((2, 2)), np.ones((2, 2))))
        assert rep.degenerate
        for b in (0.1, 10, 50):
            fps = solve_qre_fixed_points(BimatrixGame(np.ones((2, 2)), np.ones((2, 2))), (b, b))
            assert len(fps) == 1 and fps[0].Q.Q1 == 0 and fps[0].Q.Q2 == 0


def implicit_Q(game, b, near):
    fps = solve_qre_fixed_points(game, b)
    f = min(fps, key=lambda f: abs(f.Q.Q1 - near[0]) + abs(f.Q.Q2 - near[1]))
    return np.array([f.Q.Q1, f.Q.Q2])


class TestJacobian:
    @staticmethod
    def check_partials(game, Q, b, h=1e-5):
        pd = payoff_differences(game)
        jt = jacobian_terms(game, Q, b)
        f1 = lambda q, beta: math.tanh(beta * pd.d1(q) / 2)
        f2 = lambda q, beta: math.tanh(beta * pd.d2(q) / 2)
        fd = (
            ((f1(Q[1] + h, b[0]) - f1(Q[1] - h, b[0])) / (2 * h),
             (f2(Q[0] + h, b[1]) - f2(Q[0] - h, b[1])) / (2 * h)),
            ((f1(Q[1], b[0] + h) - f1(Q[1], b[0] - h)) / (2 * h),
             (f2(Q[0], b[1] + h) - f2(Q[0], b[1] - h)) / (2 * h)),
        )
        for closed, approx in zip((jt.f1, jt.f2), fd):
            for c, a in zip(closed, approx):
                scale = max(abs(a), 1e-3)
                assert abs(c - a) / scale < 1e-5

    def test_random_points(self):
        rng = np.random.default_rng(6)
        games = [chicken()] + [random_game(rng) for _ in range(5)]
        for g in games:
            for _ in range(30):
                self.check_partials(g, rng.uniform(-0.99, 0.99, 2), rng.uniform(0, 10, 2))

    def test_beta_zero(self):
        g = chicken()
        jt = jacobian_terms(g, (0.0, 0.0), (0, 0))
        assert jt.f1 == (0.0, 0.0)
        np.testing.assert_allclose(jt.matrix, np.diag(jt.f2))
        # finite differences of the solved surface confirm the positive sign
        h = 1e-5
        d1 = (implicit_Q(g, (h, 0), (0, 0)) - implicit_Q(g, (0, 0), (0, 0))) / h
        assert d1[0] == pytest.approx(jt.f2[0], rel=1e-4)

    def test_matrix_against_implicit_solution(self):
        g = chicken()
        h = 1e-5
        for b in [(0.3, 0.2), (2.0, 5.0), (10.0, 10.0), (0.5, 3.0)]:
            for f in solve_qre_fixed_points(g, b):
                q = np.array([f.Q.Q1, f.Q.Q2])
                J = jacobian_terms(g, q, b).matrix
                for j in range(2):
                    e = np.eye(2)[j] * h
                    fd = (implicit_Q(g, np.add(b, e), q) - implicit_Q(g, np.subtract(b, e), q)) / (2 * h)
                    np.testing.assert_allclose(J[:, j], fd, rtol=1e-4, atol=1e-9)

    def test_singular_on_critical_curve(self, chicken_curves):
        g = chicken()
        q1, q2, b1, b2 = chicken_curves[1].points[len(chicken_curves[1].points) // 2]
        jt = jacobian_terms(g, (q1, q2), (b1, b2))
        assert abs(jt.critical_value) <= 1e-8
        assert jt.singular or np.max(np.abs(jt.matrix)) > 1e5
        # a symmetric critical point found independently by root bracketing
        q = optimize.brentq(lambda v: critical_value(g, v, v), 0.3, 0.79, xtol=1e-15)
        b = invert_beta_on_surface(g, (q, q))
        exact = jacobian_terms(g, (q, q), b)
        assert exact.singular and exact.matrix is None


class TestInvertBeta:
    def test_origin(self):
        assert invert_beta_on_surface(chicken(), (0, 0)).betas == (0.0, 0.0)

    def test_chicken_forward_check(self):
        g = chicken()
        b = invert_beta_on_surface(g, (0.7, 0.7))
        assert all(v > 0 for v in b.betas)
        prof = QCoordinates(0.7, 0.7).to_profile()
        assert prof.max_distance(logit_response(g, prof, b)) <= 1e-12

    def test_rejections(self):
        g = chicken()
        with pytest.raises(SurfaceRejection) as exc:
            invert_beta_on_surface(g, (0.8, 0.8))  # D_1(0.8) = 0 with Q_1 != 0
        assert exc.value.reason.startswith("off-surface")
        with pytest.raises(SurfaceRejection) as exc:
            invert_beta_on_surface(g, (0.0, 0.8))
        assert exc.value.reason == "indeterminate"
        with pytest.raises(SurfaceRejection) as exc:
            invert_beta_on_surface(g, (-0.5, -0.5))
        assert "negative" in exc.value.reason
        with pytest.raises(SurfaceRejection):
            invert_beta_on_surface(g, (1.0, 0.0))

    def test_vector_field_agrees(self):
        g = chicken()
        rng = np.random.default_rng(7)
        Q = rng.uniform(-0.99, 0.99, (200, 2))
        b1, b2, ok = beta_field(g, Q[:, 0], Q[:, 1])
        for (q1, q2), v1, v2, good in zip(Q, b1, b2, ok):
            try:
                b = invert_beta_on_surface(g, (q1, q2))
            except SurfaceRejection:
                assert not good
                continue
            assert good and b.betas == pytest.approx((v1, v2), rel=1e-14)


@pytest.fixture(scope="module")
def chicken_curves():
    return trace_critical_set(chicken(), 256)


class TestCriticalSet:
    def test_points_on_gamma_and_sigma(self, chicken_curves):
        g = chicken()
        assert chicken_curves
        for c in chicken_curves:
            assert c.closure in ("open_arc", "closed_loop")
            for q1, q2, b1, b2 in c.points:
                assert b1 >= 0 and b2 >= 0
                assert abs(critical_value(g, q1, q2)) <= 1e-8
                assert surface_residual(g, q1, q2, b1, b2) <= 1e-8
                prof = QCoordinates(q1, q2).to_profile()
                back = QCoordinates.from_profile(logit_response(g, prof, (b1, b2)))
                assert abs(back.Q1 - q1) <= 1e-8 and abs(back.Q2 - q2) <= 1e-8

    def test_each_admissible_sheet_is_cut(self, chicken_curves):
        g = chicken()
        q = np.linspace(-1, 1, 258)[1:-1]
        Q1, Q2 = np.meshgrid(q, q, indexing="ij")
        c = critical_value(g, Q1, Q2)
        valid = np.isfinite(c)
        sheets, n_sheets = ndimage.label(valid)
        assert n_sheets == 3
        for s in range(1, n_sheets + 1):
            inside = sheets == s
            # each sheet holds both signs of the critical function, split by traced points
            assert np.any(c[inside] > 0) and np.any(c[inside] < 0)
        parts = ndimage.label(valid & (c > 0))[1] + ndimage.label(valid & (c < 0))[1]
        assert parts == 2 * n_sheets
        pts = np.vstack([cv.points[:, :2] for cv in chicken_curves])
        idx = np.clip(np.searchsorted(q, pts), 0, len(q) - 1)
        touched = {sheets[i, j] for i, j in idx if sheets[i, j]}
        assert touched == {1, 2, 3}

    def test_pd_empty(self):
        assert trace_critical_set(prisoners_dilemma(), 128) == []
        q = np.linspace(-0.999, 0.999, 201)
        c = critical_value(prisoners_dilemma(), *np.meshgrid(q, q, indexing="ij"))
        assert np.all(c[np.isfinite(c)] < 0)

    def test_resolution_guard(self):
        with pytest.raises(ValueError):
            trace_critical_set(chicken(), 32)

    def test_resolution_consistent(self, chicken_curves):
        coarse = branch_locus(trace_critical_set(chicken(), 128))
        fine = branch_locus(chicken_curves)
        pts = np.vstack(coarse)
        pts = pts[np.all(pts < 20, axis=1)]
        assert np.max(distance_to_polylines(pts, fine)) < 0.05


class TestBranchLocus:
    def test_empty(self):
        assert branch_locus([]) == []

    def test_clipped(self, chicken_curves):
        for line in branch_locus(chicken_curves, beta_max=5):
            assert np.all((line >= 0) & (line <= 5))

    def test_fold_crossings(self, chicken_curves):
        g = chicken()
        samples = cusp_free_locus_points(branch_locus(chicken_curves))
        assert len(samples) >= 10
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for p, t in samples:
                n = np.array([-t[1], t[0]])
                h = 1e-3 * max(1.0, np.linalg.norm(p))
                a = len(solve_qre_fixed_points(g, p + h * n))
                b = len(solve_qre_fixed_points(g, p - h * n))
                assert abs(a - b) == 2


class TestRegions:
    def test_small_box_single(self):
        b = np.linspace(0, 0.45, 10)
        assert np.all(count_fixed_points_region(chicken(), b, b).counts == 1)

    def test_three_at_ten(self):
        assert count_fixed_points_region(chicken(), [10.0], [10.0]).counts[0, 0] == 3

    def test_odd_and_threads_deterministic(self):
        b = np.linspace(0, 4, 25)
        one = count_fixed_points_region(chicken(), b, b, threads=1)
        many = count_fixed_points_region(chicken(), b, b, threads=4)
        assert np.array_equal(one.counts, many.counts)
        assert np.all(one.counts % 2 == 1)

    def test_boundary_near_locus(self, chicken_curves):
        b = np.linspace(0, 5, 51)
        h = b[1] - b[0]
        rm = count_fixed_points_region(chicken(), b, b)
        locus = branch_locus(chicken_curves)
        mids = []
        for i in range(50):
            for j in range(51):
                if rm.counts[i, j] != rm.counts[i + 1, j]:
                    mids.append(((b[i] + b[i + 1]) / 2, b[j]))
                if rm.counts[j, i] != rm.counts[j, i + 1]:
                    mids.append((b[j], (b[i] + b[i + 1]) / 2))
        assert mids
        assert np.max(distance_to_polylines(mids, locus)) <= h


class TestHeaviside:
    @staticmethod
    def nash_points(game):
        return sorted((e.exact[0][0], e.exact[1][0]) for e in support_enumeration(game))

    def test_pd(self):
        hf = heaviside_fixed_points(prisoners_dilemma())
        assert hf.points == [(0, 0)] and not hf.degenerate

    def test_chicken(self):
        hf = heaviside_fixed_points(chicken())
        assert hf.points == self.nash_points(chicken())
        assert (F(9, 10), F(9, 10)) in hf.points

    def test_random_games(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            g = BimatrixGame(rng.integers(1, 10, (2, 2)), rng.integers(1, 10, (2, 2)))
            if not is_nondegenerate(g):
                continue
            assert heaviside_fixed_points(g).points == self.nash_points(g)

    def test_map_values(self):
        g = chicken()
        assert heaviside_best_response_map(g, (1, 1)) == (0, 0)
        assert heaviside_best_response_map(g, (0, 0)) == (1, 1)
        # at the mixed point both differences vanish: default tie keeps the coordinate
        assert heaviside_best_response_map(g, (F(9, 10), F(9, 10))) == (F(9, 10), F(9, 10))
        assert heaviside_best_response_map(g, (F(9, 10), F(9, 10)), tie=F(1, 2)) == (F(1, 2), F(1, 2))

    def test_constant_degenerate(self):
        hf = heaviside_fixed_points(BimatrixGame(np.ones((2, 2)), np.ones((2, 2))))
        assert hf.degenerate

    def test_domain(self):
        with pytest.raises(ValueError):
            heaviside_best_response_map(chicken(), (1.5, 0))
