"""``gamecat`` command line: solvers and sweeps writing JSON or CSV."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .catastrophe import (
    TrajectoryEscape,
    cusp_drift,
    simulate_sde,
    stationary_density,
    sweep_cusp_surface,
)
from .game_model import (
    BimatrixGame,
    GameDimensionError,
    as_bimatrix,
    has_potential_condition,
    symmetric_region,
)
from .gamefile import GameFileError, builtin_game, parse_game_file
from .lemke_howson import enumerate_equilibria_lh, lemke_howson, support_enumeration
from ._rational import as_pq
from .qre import RESIDUAL_TOL, solve_qre_fixed_points, trace_critical_set

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2

# flags whose values may start with "-" (negative numbers, ranges)
_VALUE_FLAGS = {"--u1", "--u2", "--support", "--beta", "--beta-grid", "--x0", "--sigma", "--matrix"}


class InputError(Exception):
    pass


def _grid(text: str) -> tuple[float, float, int]:
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI:N, got {text!r}") from None
    if n < 2 or not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
        raise argparse.ArgumentTypeError(f"need finite LO <= HI and N >= 2, got {text!r}")
    return lo, hi, n


def _interval(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
        raise argparse.ArgumentTypeError(f"need finite LO < HI, got {text!r}")
    return lo, hi


def _betas(text: str) -> tuple[float, float]:
    try:
        b = tuple(float(v) for v in text.split(","))
    except ValueError:
        b = ()
    if len(b) != 2 or not all(np.isfinite(v) and v >= 0 for v in b):
        raise argparse.ArgumentTypeError(f"expected b1,b2 with finite b >= 0, got {text!r}")
    return b


def _finite(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        v = float("nan")
    if not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a finite number, got {text!r}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        v = 0
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _fmt(v) -> str:
    return format(float(v), ".17g")


# --- game input and outputs ----------------------------------------------------------------

def _load_game(args):
    if args.builtin is not None:
        game = builtin_game(args.builtin)
        digest = hashlib.sha256(
            json.dumps({"A": game.A.tolist(), "B": game.B.tolist()}).encode()).hexdigest()
    else:
        game = parse_game_file(args.game)
        digest = hashlib.sha256(Path(args.game).read_bytes()).hexdigest()
    args._game_sha256 = digest
    return game


def _bimatrix(game) -> BimatrixGame:
    try:
        return as_bimatrix(game)
    except GameDimensionError as exc:
        raise InputError(str(exc)) from None


def _threads(args) -> int:
    n = args.threads
    if n is None:
        env = os.environ.get("SG_THREADS")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise InputError(f"SG_THREADS must be an integer, got {env!r}") from None
    if n < 0:
        raise InputError("--threads must be >= 0")
    return n or (os.cpu_count() or 1)


def _emit(args, text: str, required: bool = False) -> None:
    out = getattr(args, "out", None)
    if out is None:
        if required:
            raise InputError("--out is required for CSV output")
        sys.stdout.write(text)
        return
    Path(out).write_text(text)
    manifest = {
        "command": " ".join(args._argv),
        "game_sha256": getattr(args, "_game_sha256", None),
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "wall_time_s": time.perf_counter() - args._t0,
        "output_sha256": hashlib.sha256(text.encode()).hexdigest(),
    }
    Path(f"{out}.manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, (str, int, np.integer)) else _fmt(v) for v in row])
    return buf.getvalue()


def _eq_json(eq) -> dict:
    if eq.exact is not None:
        x, y = ([as_pq(v) for v in part] for part in eq.exact)
    else:
        x, y = ([_fmt(v) for v in part] for part in (eq.x, eq.y))
    return {"x": x, "y": y, "payoffs": [float(v) for v in eq.payoffs], "kind": eq.kind}


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


# --- subcommands ---------------------------------------------------------------------------

def cmd_solve_nash(args) -> int:
    game = _bimatrix(_load_game(args))
    if not 1 <= args.label <= game.rows + game.cols:
        raise InputError(f"--label must lie in 1..{game.rows + game.cols}")
    eq, _ = lemke_howson(game, args.label)
    _emit(args, _dump([_eq_json(eq)]))
    return EXIT_OK


def cmd_enumerate_nash(args) -> int:
    game = _bimatrix(_load_game(args))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        eqs = enumerate_equilibria_lh(game) if args.method == "lh" else support_enumeration(game)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _emit(args, _dump([_eq_json(e) for e in eqs]))
    return EXIT_OK


def _fp_json(fp) -> dict:
    return {"x": [float(v) for v in fp.profile[0]], "y": [float(v) for v in fp.profile[1]],
            "Q1": fp.Q.Q1, "Q2": fp.Q.Q2, "stability": fp.stability, "residual": fp.residual}


def cmd_qre_solve(args) -> int:
    game = _bimatrix(_load_game(args))
    fps = solve_qre_fixed_points(game, args.beta)
    _emit(args, _dump([_fp_json(f) for f in fps]))
    bad = [f.residual for f in fps if not f.residual <= RESIDUAL_TOL]
    if bad:
        print(f"error: fixed-point residual {max(bad):.3g} exceeds {RESIDUAL_TOL:g}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_qre_sweep(args) -> int:
    game = _bimatrix(_load_game(args))
    if args.out is None:
        raise InputError("--out is required for CSV output")
    lo, hi, n = args.beta_grid
    axis = np.linspace(lo, hi, n)
    if lo < 0:
        raise InputError("--beta-grid must be nonnegative")
    pairs = [(b1, b2) for b1 in axis for b2 in axis]

    def solve(b):
        return solve_qre_fixed_points(game, b)

    threads = _threads(args)
    # warning filters are process-wide, so set them once around the pool
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                results = list(pool.map(solve, pairs))
        else:
            results = [solve(b) for b in pairs]
    rows = []
    for (b1, b2), fps in zip(pairs, results):
        for f in fps:
            q = f.Q
            rows.append((b1, b2, len(fps), q.Q1, q.Q2))
    _emit(args, _csv(["beta1", "beta2", "count", "Q1", "Q2"], rows), required=True)
    return EXIT_OK


def cmd_qre_critical(args) -> int:
    game = _bimatrix(_load_game(args))
    if args.out is None:
        raise InputError("--out is required for CSV output")
    if args.resolution < 64:
        raise InputError("--resolution must be at least 64")
    curves = trace_critical_set(game, args.resolution)
    rows = [(*p, cid) for cid, c in enumerate(curves) for p in c.points]
    _emit(args, _csv(["Q1", "Q2", "beta1", "beta2", "curve_id"], rows), required=True)
    return EXIT_OK


def cmd_cusp_surface(args) -> int:
    if args.out is None:
        raise InputError("--out is required for CSV output")
    (a, b, n1), (c, d, n2) = args.u1, args.u2
    surf = sweep_cusp_surface((a, b), (c, d), (n1, n2))
    _emit(args, _csv(["u1", "u2", "root", "stability"], surf.rows), required=True)
    return EXIT_OK


def _model(args):
    if args.model == "ou":
        return lambda x: -x
    return cusp_drift(args.u1, args.u2)


def cmd_sct_density(args) -> int:
    if args.out is None:
        raise InputError("--out is required for CSV output")
    if not args.sigma > 0:
        raise InputError("--sigma must be positive")
    dens = stationary_density(_model(args), args.sigma, args.support, grid_size=args.grid)
    _emit(args, _csv(["x", "density"], zip(dens.x, dens.density)), required=True)
    return EXIT_OK


def cmd_sct_sim(args) -> int:
    if not args.dt > 0:
        raise InputError("--dt must be positive")
    if args.sigma < 0:
        raise InputError("--sigma must be nonnegative")
    drift = _model(args)
    try:
        res = simulate_sde(drift, args.sigma, args.x0, args.dt, args.steps, args.seed,
                           bins=args.bins)
    except TrajectoryEscape as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        raise InputError(str(exc)) from None
    rows = zip(res.edges[:-1], res.edges[1:], res.histogram)
    text = _csv(["bin_lo", "bin_hi", "density"], rows)
    if args.out is None:
        summary = {"seed": args.seed, "dt": args.dt, "steps": args.steps,
                   "mean": float(res.trajectory.mean()), "var": float(res.trajectory.var())}
        if args.sigma > 0:
            lo, hi = res.edges[0], res.edges[-1]
            pad = hi - lo
            dens = stationary_density(drift, args.sigma, (lo - pad, hi + pad), grid_size=4001)
            summary["l1_to_stationary"] = res.l1_distance(dens)
        sys.stdout.write(_dump(summary))
    else:
        _emit(args, text)
    return EXIT_OK


def cmd_classify_game(args) -> int:
    game = _bimatrix(_load_game(args))
    eqs = support_enumeration(game)
    pure = sum(e.kind == "pure" for e in eqs)
    region = symmetric_region(game) or "n/a"
    _emit(args, f"{pure} pure NE, region: {region}\n")
    return EXIT_OK


def cmd_potential_check(args) -> int:
    if args.matrix is not None:
        try:
            A = np.array(json.loads(args.matrix, parse_constant=lambda c: float("nan")), dtype=float)
        except (json.JSONDecodeError, ValueError, TypeError):
            raise InputError("--matrix must be a JSON array of rows") from None
        if not np.all(np.isfinite(A)):
            raise InputError("--matrix entries must be finite")
    else:
        A = _bimatrix(_load_game(args)).A
    check = has_potential_condition(A)
    out = {"holds": check.holds,
           "triple": list(check.triple) if check.triple else None,
           "violation": check.violation}
    _emit(args, _dump(out))
    return EXIT_OK


# --- parser --------------------------------------------------------------------------------

def _add_game(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--game", metavar="FILE", help="JSON game file")
    g.add_argument("--builtin", metavar="NAME", help="pd, chicken or ts:T,S")


def _add_common(p):
    p.add_argument("--out", metavar="PATH", help="output file (default stdout for JSON)")
    p.add_argument("--threads", type=int, default=None, help="worker threads, 0 = auto")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gamecat", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-nash", help="one Lemke-Howson run")
    _add_game(p)
    p.add_argument("--label", type=int, required=True)
    p.set_defaults(func=cmd_solve_nash)

    p = sub.add_parser("enumerate-nash", help="all equilibria of a bimatrix game")
    _add_game(p)
    p.add_argument("--method", choices=("lh", "support"), default="lh")
    p.set_defaults(func=cmd_enumerate_nash)

    p = sub.add_parser("qre-solve", help="logit QRE of a 2x2 game")
    _add_game(p)
    p.add_argument("--beta", type=_betas, required=True, metavar="B1,B2")
    p.set_defaults(func=cmd_qre_solve)

    p = sub.add_parser("qre-sweep", help="QRE over a square beta grid (CSV)")
    _add_game(p)
    p.add_argument("--beta-grid", type=_grid, required=True, metavar="LO:HI:N")
    p.set_defaults(func=cmd_qre_sweep)

    p = sub.add_parser("qre-critical", help="critical curves in the Q plane (CSV)")
    _add_game(p)
    p.add_argument("--resolution", type=int, default=256)
    p.set_defaults(func=cmd_qre_critical)

    p = sub.add_parser("cusp-surface", help="cusp equilibrium surface (CSV)")
    p.add_argument("--u1", type=_grid, required=True, metavar="LO:HI:N")
    p.add_argument("--u2", type=_grid, required=True, metavar="LO:HI:N")
    p.set_defaults(func=cmd_cusp_surface)

    for name, func in (("sct-density", cmd_sct_density), ("sct-sim", cmd_sct_sim)):
        p = sub.add_parser(name)
        p.add_argument("--model", choices=("cusp", "ou"), default="cusp",
                       help="cusp drift -x^3 + u1 x + u2, or ou drift -x")
        p.add_argument("--u1", type=_finite, default=1.0)
        p.add_argument("--u2", type=_finite, default=0.0)
        p.add_argument("--sigma", type=_finite, required=True)
        p.set_defaults(func=func)
        if name == "sct-density":
            p.add_argument("--support", type=_interval, required=True, metavar="LO:HI")
            p.add_argument("--grid", type=_positive_int, default=2001)
        else:
            p.add_argument("--seed", type=int, required=True)
            p.add_argument("--dt", type=_finite, default=1e-3)
            p.add_argument("--steps", type=_positive_int, default=10**6)
            p.add_argument("--x0", type=_finite, default=0.0)
            p.add_argument("--bins", type=_positive_int, default=60)

    p = sub.add_parser("classify-game", help="pure NE count and (T,S) region")
    _add_game(p)
    p.set_defaults(func=cmd_classify_game)

    p = sub.add_parser("potential-check", help="potential-game triple condition")
    _add_game(p, required=False)
    p.add_argument("--matrix", metavar="JSON", help="square matrix, e.g. '[[0,1],[1,0]]'")
    p.set_defaults(func=cmd_potential_check)

    for p in sub.choices.values():
        _add_common(p)
    return parser


def _join_values(argv):
    """Turn ``--u1 -2:2:9`` into ``--u1=-2:2:9`` so argparse accepts leading minus signs."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_FLAGS and i + 1 < len(argv):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_join_values(argv))
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    args._argv = ["gamecat", *argv]
    args._t0 = time.perf_counter()
    if args.command == "potential-check" and args.matrix is None and args.game is None \
            and args.builtin is None:
        print("error: potential-check needs --matrix, --game or --builtin", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, GameFileError, GameDimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
