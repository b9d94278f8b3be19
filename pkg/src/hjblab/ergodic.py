"""The ergodic pair (c, chi): H[chi] = c with sup chi = 0.

Two independent solvers:

* :func:`solve_ergodic_longtime` reads c off the linear-in-time drift of
  a long evolution started from zero and takes chi as the drift-corrected
  final profile, doubling the horizon until the estimate settles;
* :func:`solve_ergodic_rvi` is relative value iteration: implicit steps
  re-anchored at a fixed interior node, converging to the discrete fixed
  point directly.

Both report the residual ``sup |H[chi] - c|`` over nodes with d >= 10 h;
the boundary layer, where the scheme loses consistency, is excluded from
that norm and reported separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cauchy import CauchyState, initial_state, step_implicit_policy
from .errors import ConfigError, NumericalError
from .grid import Grid, GridField, apply_H, cfl_dt


@dataclass
class ErgodicSolverParams:
    tolerance: float = 1e-8
    max_iterations: int = 500_000
    anchor_node: int | None = None      # rvi re-anchoring node, default: deepest
    t1: float = 2.0                     # longtime first sampling time
    t2: float = 8.0                     # longtime second sampling time
    dt: float | None = None             # step; defaults per method

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ConfigError("tolerance must be positive")
        if not 1 <= self.t1 < self.t2:
            raise ConfigError("need 1 <= t1 < t2")


@dataclass
class ErgodicPair:
    c: float
    chi: GridField
    method: str
    residual: float
    iterations: int
    boundary_residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "method": self.method,
            "residual": self.residual,
            "boundary_residual": self.boundary_residual,
            "iterations": self.iterations,
            "chi_sup": float(np.abs(self.chi).max()),
        }


def normalize_chi(chi: GridField) -> GridField:
    """Shift so that the maximum is exactly zero; a field already at
    max 0 is returned unchanged bit for bit."""
    top = float(np.max(chi))
    if top == 0.0:
        return chi
    return chi - top


def _residuals(grid: Grid, chi: GridField, c: float) -> tuple[float, float]:
    r = np.abs(apply_H(grid, chi) - c)
    interior = grid.d >= 10 * grid.h
    if not interior.any():
        return float(r.max()), 0.0
    boundary = ~interior
    return float(r[interior].max()), float(r[boundary].max()) if boundary.any() else 0.0


def _default_anchor(grid: Grid) -> int:
    return int(np.argmax(grid.d))


def solve_ergodic_longtime(grid: Grid, params: ErgodicSolverParams | None = None) -> ErgodicPair:
    """Ergodic pair from the long-time drift of the zero-start evolution.

    c is minus the slope of the node-average between two sampling times;
    the window then doubles (rolling forward) until successive estimates
    differ by less than the tolerance and the corrector residual is small.
    """
    params = params or ErgodicSolverParams()
    dt = params.dt if params.dt is not None else 0.01
    state = initial_state(grid, np.zeros(grid.n))

    def advance(state: CauchyState, target: float) -> CauchyState:
        while state.t < target - 1e-12:
            step = min(dt, target - state.t)
            state = step_implicit_policy(grid, state, step)
        return state

    state = advance(state, params.t1)
    t_prev, mean_prev = state.t, float(state.u.mean())
    t_hi = params.t2
    c_prev = None
    steps = 0
    max_doublings = 60
    for doubling in range(max_doublings):
        state = advance(state, t_hi)
        steps = state.step_count
        mean_now = float(state.u.mean())
        c_now = -(mean_now - mean_prev) / (state.t - t_prev)
        chi = normalize_chi(state.u + c_now * state.t)
        residual, boundary_res = _residuals(grid, chi, c_now)
        settled = c_prev is not None and abs(c_now - c_prev) < params.tolerance
        if settled and residual < max(params.tolerance, 1e-8):
            return ErgodicPair(
                c=c_now,
                chi=chi,
                method="longtime",
                residual=residual,
                iterations=steps,
                boundary_residual=boundary_res,
            )
        c_prev = c_now
        t_prev, mean_prev = state.t, mean_now
        t_hi *= 2.0
        if doubling + 1 >= min(max_doublings, 60):
            break
    raise NumericalError(
        f"longtime ergodic estimate did not settle (last c={c_prev}, horizon {t_hi})"
    )


def solve_ergodic_rvi(grid: Grid, params: ErgodicSolverParams | None = None) -> ErgodicPair:
    """Ergodic pair by relative value iteration.

    Implicit steps followed by re-anchoring v <- v - v(anchor); minus the
    anchored shift per unit time estimates c, and the iteration stops when
    the interior residual of the candidate pair is below the tolerance.
    """
    params = params or ErgodicSolverParams()
    dt = params.dt if params.dt is not None else 10.0 * cfl_dt(grid)
    anchor = params.anchor_node if params.anchor_node is not None else _default_anchor(grid)
    if not 0 <= anchor < grid.n:
        raise ConfigError(f"anchor node {anchor} is out of range")

    v = np.zeros(grid.n)
    c_est = 0.0
    best_update = np.inf
    check_every = 20
    state = CauchyState(t=0.0, u=v, u0_sup=0.0, l_sup=grid.l_sup())
    for it in range(1, params.max_iterations + 1):
        raw = step_implicit_policy(grid, state, dt).u
        c_est = -(raw[anchor] - v[anchor]) / dt
        v_new = raw - raw[anchor]
        update = float(np.abs(v_new - v).max())
        v = v_new
        state = CauchyState(t=0.0, u=v, u0_sup=float(np.abs(v).max()), l_sup=state.l_sup)
        best_update = min(best_update, update)
        if update > 1e3 * best_update + 1e-12 and it > 100:
            raise NumericalError(
                f"relative value iteration oscillates (update {update:.3e} "
                f"after best {best_update:.3e})"
            )
        if update < params.tolerance * max(dt, 1.0) or it % check_every == 0:
            chi = normalize_chi(v)
            residual, boundary_res = _residuals(grid, chi, c_est)
            if residual < params.tolerance:
                return ErgodicPair(
                    c=float(c_est),
                    chi=chi,
                    method="rvi",
                    residual=residual,
                    iterations=it,
                    boundary_residual=boundary_res,
                )
    chi = normalize_chi(v)
    residual, _ = _residuals(grid, chi, c_est)
    raise NumericalError(
        f"relative value iteration did not reach tolerance {params.tolerance} "
        f"in {params.max_iterations} iterations (residual {residual:.3e})"
    )
