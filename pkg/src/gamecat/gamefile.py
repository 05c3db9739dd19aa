"""Reading games from JSON files and built-in names."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .game_model import (
    BimatrixGame,
    NormalFormGame,
    TSFamilyPoint,
    chicken,
    prisoners_dilemma,
    ts_family_game,
)


class GameFileError(ValueError):
    """Invalid game input; ``where`` names the line or field at fault."""

    def __init__(self, message: str, where: str | None = None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


def _reject_constant(name):
    raise GameFileError(f"non-finite number {name} is not allowed")


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise GameFileError(f"expected a number, got {type(v).__name__}", where)
    if not math.isfinite(float(v)):
        raise GameFileError("payoff is not finite", where)
    return float(v)


def _matrix(rows, where) -> np.ndarray:
    if not isinstance(rows, list) or not rows:
        raise GameFileError("expected a non-empty list of rows", where)
    width = None
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or not row:
            raise GameFileError("expected a non-empty list", f"{where}[{i}]")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise GameFileError(f"ragged row of length {len(row)}, expected {width}", f"{where}[{i}]")
        out.append([_number(v, f"{where}[{i}][{j}]") for j, v in enumerate(row)])
    return np.array(out)


def _tensor(node, shape, n, where):
    if not shape:
        if not isinstance(node, list) or len(node) != n:
            raise GameFileError(f"expected a payoff vector of length {n}", where)
        return [_number(v, f"{where}[{j}]") for j, v in enumerate(node)]
    if not isinstance(node, list) or len(node) != shape[0]:
        size = len(node) if isinstance(node, list) else type(node).__name__
        raise GameFileError(f"expected {shape[0]} entries, got {size}", where)
    return [_tensor(sub, shape[1:], n, f"{where}[{i}]") for i, sub in enumerate(node)]


def game_from_dict(data) -> NormalFormGame | BimatrixGame:
    if not isinstance(data, dict):
        raise GameFileError("top level must be a JSON object")
    if "A" in data or "B" in data:
        A = _matrix(data.get("A"), "A")
        B = _matrix(data.get("B"), "B")
        if A.shape != B.shape:
            raise GameFileError(f"A is {A.shape[0]}x{A.shape[1]} but B is {B.shape[0]}x{B.shape[1]}", "B")
        return BimatrixGame(A, B)
    for key in ("agents", "choices", "payoffs"):
        if key not in data:
            raise GameFileError("missing field", key)
    n, choices = data["agents"], data["choices"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 2:
        raise GameFileError("must be an integer >= 2", "agents")
    if (not isinstance(choices, list) or len(choices) != n
            or any(isinstance(k, bool) or not isinstance(k, int) or k < 1 for k in choices)):
        raise GameFileError(f"must list {n} positive integers", "choices")
    payoffs = _tensor(data["payoffs"], choices, n, "payoffs")
    game = NormalFormGame(np.array(payoffs, dtype=float))
    return game.to_bimatrix() if n == 2 else game


def parse_game_file(path) -> NormalFormGame | BimatrixGame:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise GameFileError(f"cannot read game file: {exc.strerror}", str(path)) from None
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise GameFileError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    return game_from_dict(data)


def builtin_game(name: str) -> BimatrixGame:
    """``pd``, ``chicken`` or ``ts:T,S``."""
    if name == "pd":
        return prisoners_dilemma()
    if name == "chicken":
        return chicken()
    if name.startswith("ts:"):
        try:
            T, S = (float(v) for v in name[3:].split(","))
        except ValueError:
            raise GameFileError("expected ts:T,S with two numbers", "--builtin") from None
        if not (math.isfinite(T) and math.isfinite(S)):
            raise GameFileError("T and S must be finite", "--builtin")
        return ts_family_game(TSFamilyPoint(T, S))
    raise GameFileError(f"unknown builtin game {name!r}; choose pd, chicken or ts:T,S", "--builtin")
