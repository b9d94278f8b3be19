"""Cached builders shared across test modules (grids and ergodic pairs
at the fine resolutions are expensive enough to compute only once)."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

import hjblab as hj

PRESETS = ("constantL", "smoothA", "degenerateB", "twoControlA")


@lru_cache(maxsize=None)
def problem(preset: str, L: float = 2.0) -> hj.ControlProblem:
    cfg = {"preset": preset}
    if preset == "constantL":
        cfg["L"] = L
    return hj.assemble_problem(cfg)


@lru_cache(maxsize=None)
def grid(preset: str, h: float) -> hj.Grid:
    return hj.build_grid(problem(preset), h)


@lru_cache(maxsize=None)
def rvi_pair(preset: str, h: float, tol: float = 1e-9, dt: float = 0.05) -> hj.ErgodicPair:
    return hj.solve_ergodic_rvi(grid(preset, h), hj.ErgodicSolverParams(tolerance=tol, dt=dt))


@lru_cache(maxsize=None)
def longtime_pair(preset: str, h: float, tol: float = 1e-7, dt: float = 0.02) -> hj.ErgodicPair:
    return hj.solve_ergodic_longtime(grid(preset, h), hj.ErgodicSolverParams(tolerance=tol, dt=dt))


def dyadic_field(n: int, seed: int = 0, bits: int = 20) -> np.ndarray:
    """Random field of dyadic rationals: adding a small integer to these
    is exact in IEEE doubles, so translation tests can demand bit equality."""
    rng = np.random.default_rng(seed)
    return rng.integers(-(2**bits), 2**bits, n) / float(2**bits)


def sigma_one_config() -> dict:
    """The smooth single-control problem with the degeneracy broken."""
    return {
        "domain": {"kind": "interval", "x_lo": 0.0, "x_hi": 1.0},
        "controls": [{"b": ["1-2*x1"], "sigma": [["1"]], "l": "x1"}],
        "regularity": {"B": 2.0, "eta": 1.0, "beta": 1.0},
    }
