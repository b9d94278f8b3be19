"""Quantitative checks on computed solutions.

* boundary envelopes: inside a collar of width delta, a solution is
  pinched between the extrema of its values on the inner rim shifted by
  +-(delta^rho - d^rho); violations are measured node-wise;
* Hoelder fits: the boundary limit of the corrector is estimated by
  Richardson extrapolation from the deepest nodes, then the exponent is
  the log-log slope of |chi - limit| against d;
* long-time convergence: for w = u + c t - chi, the running extrema
  m_low(t) = min w and m_high(t) = max w are monotone brackets whose
  common limit -K certifies uniform convergence of u + c t - chi to -K;
* an independent ergodic constant for single-control problems from the
  stationary density: solve the zero-flux conservative form of
  (a mu)'' - (b mu)' = 0 on a finer grid and return -integral of l dmu.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .barriers import find_barrier_delta
from .cauchy import Trajectory, initial_state, step_implicit_policy
from .ergodic import ErgodicPair
from .errors import ConfigError, NumericalError
from .grid import Grid, GridField
from .problem import ControlProblem, DegeneracyCertificate, degeneracy_certificate

MONOTONE_TOL_PER_STEP = 1e-9


@dataclass
class EnvelopeReport:
    rho: float
    delta: float
    lower_violation: float
    upper_violation: float
    checked_at_t: float | str
    rim_min: float
    rim_max: float
    n_nodes: int
    certified_delta: float | None = None
    certified: bool | None = None

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "delta": self.delta,
            "lower_violation": self.lower_violation,
            "upper_violation": self.upper_violation,
            "checked_at_t": self.checked_at_t,
            "rim_min": self.rim_min,
            "rim_max": self.rim_max,
            "n_nodes": self.n_nodes,
            "certified_delta": self.certified_delta,
            "certified": self.certified,
        }

    @property
    def violation(self) -> float:
        return max(self.lower_violation, self.upper_violation)


def boundary_envelope_check(
    grid: Grid,
    field_values: GridField,
    rho: float,
    delta: float,
    history: Trajectory | None = None,
    t: float | None = None,
    certificate: DegeneracyCertificate | None = None,
    barrier_M: float | None = None,
    require_certified: bool = False,
) -> EnvelopeReport:
    """Check the boundary envelope of a field inside the collar of width delta.

    For the stationary check (``history`` is None) the rim extrema are
    taken from ``field_values`` itself; for the evolutive check they run
    over all recorded snapshots up to time ``t`` (which must be >= 1).
    The rim consists of the nodes within h/2 of d = delta.  Violations
    are max(0, bound - value) and max(0, value - bound) over the collar
    nodes.  The certified barrier width for the matching margin M is
    computed and reported; with ``require_certified`` it is enforced.
    """
    cert = certificate or degeneracy_certificate(grid.problem)
    if not 0 < rho < 1 - cert.gamma:
        raise ConfigError(f"rho={rho} outside the certified range (0, {1 - cert.gamma})")
    if not 0 < delta < geo.collar_width(grid.domain):
        raise ConfigError(f"delta={delta} outside the collar (0, {geo.collar_width(grid.domain)})")

    field_values = np.asarray(field_values, dtype=float)
    if field_values.shape != (grid.n,):
        raise ConfigError("field does not match the grid")

    rim = np.abs(grid.d - delta) <= grid.h / 2
    if not rim.any():
        raise ConfigError(f"no rim nodes near d={delta} on this grid (h={grid.h})")

    if history is None:
        rim_min = float(field_values[rim].min())
        rim_max = float(field_values[rim].max())
        checked_at: float | str = "stationary"
        if barrier_M is None:
            barrier_M = 1.0
    else:
        if t is None or t < 1.0:
            raise ConfigError("the evolutive envelope requires t >= 1")
        in_window = [s for ts, s in zip(history.times, history.snapshots) if ts <= t + 1e-12]
        if not in_window:
            raise ConfigError("trajectory holds no snapshots up to the requested time")
        stack = np.stack(in_window)
        rim_min = float(stack[:, rim].min())
        rim_max = float(stack[:, rim].max())
        checked_at = float(t)
        if barrier_M is None:
            barrier_M = 2.0 * history.metadata.get("u0_sup", 0.0) + grid.l_sup()

    certified_delta = None
    certified = None
    try:
        bc = find_barrier_delta(grid.problem, rho, barrier_M, certificate=cert)
        certified_delta = bc.delta
        certified = delta <= bc.delta
    except NumericalError:
        certified = False
    if require_certified and not certified:
        raise ConfigError(
            f"delta={delta} is not below the certified barrier width "
            f"({certified_delta}) for margin M={barrier_M}"
        )

    collar = grid.d < delta
    dpow = grid.d[collar] ** rho
    lower = rim_min - delta**rho + dpow
    upper = rim_max + delta**rho - dpow
    vals = field_values[collar]
    lower_violation = float(np.maximum(lower - vals, 0.0).max(initial=0.0))
    upper_violation = float(np.maximum(vals - upper, 0.0).max(initial=0.0))
    return EnvelopeReport(
        rho=rho,
        delta=delta,
        lower_violation=lower_violation,
        upper_violation=upper_violation,
        checked_at_t=checked_at,
        rim_min=rim_min,
        rim_max=rim_max,
        n_nodes=int(collar.sum()),
        certified_delta=certified_delta,
        certified=certified,
    )


@dataclass
class HolderFit:
    side: str
    exponent: float            # capped at 1 for reporting
    uncapped_slope: float
    fit_range: tuple[float, float]
    r_squared: float
    boundary_limit_value: float
    lipschitz_consistent: bool
    flat: bool = False
    n_samples: int = 0

    def to_dict(self) -> dict:
        return {
            "side": self.side,
            "exponent": self.exponent,
            "uncapped_slope": self.uncapped_slope,
            "fit_range": list(self.fit_range),
            "r_squared": self.r_squared,
            "boundary_limit_value": self.boundary_limit_value,
            "lipschitz_consistent": self.lipschitz_consistent,
            "flat": self.flat,
            "n_samples": self.n_samples,
        }


def _side_profile(grid: Grid, chi: GridField, side: str):
    """(d, value) samples of one boundary side, ordered by increasing d."""
    if side == "radial":
        order = np.argsort(grid.d)
        return grid.d[order], chi[order]
    if grid.ndim != 1:
        raise ConfigError("left/right sides exist only on interval domains")
    dom = grid.domain
    mid = 0.5 * (dom.x_lo + dom.x_hi)
    mask = grid.x[:, 0] < mid if side == "left" else grid.x[:, 0] > mid
    if side not in ("left", "right"):
        raise ConfigError(f"unknown side {side!r}")
    d = grid.d[mask]
    v = chi[mask]
    order = np.argsort(d)
    return d[order], v[order]


def holder_fit(
    grid: Grid,
    chi: GridField,
    side: str = "left",
    fit_range: tuple[float, float] | None = None,
) -> HolderFit:
    """Boundary regularity exponent of ``chi`` on one side.

    The boundary limit is Richardson-extrapolated from the deepest
    samples that sit outside the scheme's boundary layer (the layer
    d < 10 h is excluded from residual norms for the same reason: the
    discretization loses consistency there); the exponent is then the
    least-squares slope of log|chi - limit| against log d over the fit
    range, which must contain at least 10 nodes.  Slopes of 0.95 or more
    report as exponent 1 with the Lipschitz-consistent flag.
    """
    d, v = _side_profile(grid, np.asarray(chi, dtype=float), side)
    if fit_range is None:
        hi_default = min(0.05, 0.8 * geo.collar_width(grid.domain))
        fit_range = (min(10 * grid.h, hi_default / 4), hi_default)
    lo, hi = fit_range
    if hi > geo.collar_width(grid.domain):
        raise ConfigError("fit range exceeds the collar")

    # Richardson limit from the samples nearest base, 2 base, 4 base
    base = min(10 * grid.h, float(d[-1]) / 5)
    i1 = int(np.argmin(np.abs(d - base)))
    d1 = d[i1]
    i2 = int(np.argmin(np.abs(d - 2 * d1)))
    i4 = int(np.argmin(np.abs(d - 4 * d1)))
    g1, g2 = v[i2] - v[i1], v[i4] - v[i2]
    if abs(g1) < 1e-14 and abs(g2) < 1e-14:
        return HolderFit(side, 0.0, 0.0, fit_range, 0.0, float(v[i1]), False, flat=True)
    ratio = g2 / g1 if g1 != 0 else np.inf
    if ratio <= 0 or not np.isfinite(ratio):
        limit = float(v[i1])  # non-power-law start; fall back to the base value
    else:
        s = np.log2(ratio)
        limit = float(v[i1] - g1 / (2**s - 1)) if abs(2**s - 1) > 1e-12 else float(v[i1])

    mask = (d >= lo) & (d <= hi)
    resid = np.abs(v - limit)
    usable = mask & (resid > 1e-12)
    if int(mask.sum()) < 10:
        raise ConfigError(f"fit range {fit_range} holds fewer than 10 nodes")
    if int(usable.sum()) < max(3, int(0.5 * mask.sum())):
        return HolderFit(side, 0.0, 0.0, fit_range, 0.0, limit, False, flat=True,
                         n_samples=int(mask.sum()))
    x = np.log(d[usable])
    y = np.log(resid[usable])
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    yhat = y.mean() + slope * xc
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    lipschitz = slope >= 0.95
    return HolderFit(
        side=side,
        exponent=min(slope, 1.0),
        uncapped_slope=slope,
        fit_range=fit_range,
        r_squared=r2,
        boundary_limit_value=limit,
        lipschitz_consistent=lipschitz,
        n_samples=int(usable.sum()),
    )


@dataclass
class ConvergenceReport:
    times: list[float]
    inf_gap: list[float]       # m_low(t) = min over nodes of u + c t - chi
    sup_gap: list[float]       # m_high(t)
    K: float
    uniform_error: list[float]
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "times": self.times,
            "inf_gap": self.inf_gap,
            "sup_gap": self.sup_gap,
            "K": self.K,
            "uniform_error": self.uniform_error,
            "metadata": self.metadata,
        }


def _gap_curves(traj: Trajectory, pair: ErgodicPair):
    lows, highs = [], []
    for t, snap in zip(traj.times, traj.snapshots):
        w = snap + pair.c * t - pair.chi
        lows.append(float(w.min()))
        highs.append(float(w.max()))
    return np.array(lows), np.array(highs)


def convergence_diagnostics(traj: Trajectory, pair: ErgodicPair, grid: Grid) -> ConvergenceReport:
    """Monotone brackets and limit shift for w = u + c t - chi.

    Asserts that min w is nondecreasing and max w nonincreasing between
    recorded snapshots (up to the per-step tolerance), estimates the
    shift K as minus the final midpoint, and reports the uniform error
    sup over nodes of |u + c t - chi + K| per snapshot.
    """
    if len(pair.chi) != grid.n or len(traj.snapshots[0]) != grid.n:
        raise ConfigError("trajectory, pair and grid do not match")
    lows, highs = _gap_curves(traj, pair)
    dt = traj.metadata.get("dt", 1.0)
    for j in range(1, len(traj.times)):
        steps = max(1, int(round((traj.times[j] - traj.times[j - 1]) / dt)))
        tol = MONOTONE_TOL_PER_STEP * steps
        if lows[j] < lows[j - 1] - tol:
            raise NumericalError(
                f"lower bracket decreased at t={traj.times[j]}: {lows[j]} < {lows[j-1]}"
            )
        if highs[j] > highs[j - 1] + tol:
            raise NumericalError(
                f"upper bracket increased at t={traj.times[j]}: {highs[j]} > {highs[j-1]}"
            )
    K = -0.5 * (lows[-1] + highs[-1])
    uniform = np.maximum(np.abs(lows + K), np.abs(highs + K))
    return ConvergenceReport(
        times=list(map(float, traj.times)),
        inf_gap=lows.tolist(),
        sup_gap=highs.tolist(),
        K=float(K),
        uniform_error=uniform.tolist(),
        metadata={"problem": traj.metadata.get("problem"), "c": pair.c, "dt": dt},
    )


def run_until_flat(
    grid: Grid,
    u0: GridField,
    pair: ErgodicPair,
    tol: float = 1e-3,
    dt: float = 0.02,
    t_max: float = 500.0,
) -> tuple[Trajectory, ConvergenceReport]:
    """Evolve implicitly until the bracket gap of w = u + c t - chi is
    below 2 tol (so the uniform error at the stop is below tol), recording
    every step.  Raises if the gap has not closed by ``t_max``."""
    state = initial_state(grid, u0)
    traj = Trajectory(
        times=[0.0],
        snapshots=[state.u.copy()],
        metadata={
            "problem": grid.problem.fingerprint(),
            "h": grid.h,
            "dt": dt,
            "mode": "implicit",
            "u0_sup": state.u0_sup,
            "l_sup": state.l_sup,
        },
    )
    while state.t < t_max:
        state = step_implicit_policy(grid, state, dt)
        traj.times.append(state.t)
        traj.snapshots.append(state.u.copy())
        w = state.u + pair.c * state.t - pair.chi
        if float(w.max() - w.min()) < 2 * tol * 0.95:
            return traj, convergence_diagnostics(traj, pair, grid)
    raise NumericalError(f"bracket gap did not close below {2 * tol} by t={t_max}")


def linear_oracle_c(problem: ControlProblem, grid: Grid, refine: int = 4) -> float:
    """Ergodic constant of a single-control interval problem from the
    stationary density.

    Solves the conservative zero-flux form of (a mu)'' - (b mu)' = 0 on a
    grid ``refine`` times finer than ``grid``: with every face flux zero,
    (a mu) at neighboring nodes obeys a two-term recurrence that is
    marched outward from the deepest node; mu is then normalized by the
    trapezoid rule and c = -integral of l dmu.  Independent of the
    Bellman discretization.
    """
    if len(problem.controls) != 1:
        raise ConfigError("the stationary-density oracle needs exactly one control")
    if problem.dim != 1:
        raise ConfigError("the stationary-density oracle is one-dimensional")
    dom = problem.domain
    hf = grid.h / refine
    m = int(round((dom.x_hi - dom.x_lo) / hf)) - 1
    xs = dom.x_lo + hf * np.arange(1, m + 1)

    def a_of(x: float) -> float:
        return float(problem.diffusion([x], 0)[0, 0])

    def b_of(x: float) -> float:
        return float(problem.drift([x], 0)[0])

    a = np.array([a_of(x) for x in xs])
    b_face = np.array([b_of(x + hf / 2) for x in xs[:-1]])

    mu = np.zeros(m)
    mid = m // 2
    mu[mid] = 1.0
    for i in range(mid, m - 1):  # march right; zero flux across every face
        num = a[i] + 0.5 * hf * b_face[i]
        den = a[i + 1] - 0.5 * hf * b_face[i]
        if den <= 0.0 or num <= 0.0 or mu[i] == 0.0:
            break  # density is below resolution from here outward
        mu[i + 1] = mu[i] * num / den
    for i in range(mid, 0, -1):  # march left
        num = a[i] - 0.5 * hf * b_face[i - 1]
        den = a[i - 1] + 0.5 * hf * b_face[i - 1]
        if den <= 0.0 or num <= 0.0 or mu[i] == 0.0:
            break
        mu[i - 1] = mu[i] * num / den

    if not np.isfinite(mu).all() or mu.max() <= 0:
        raise NumericalError("stationary density solve failed")
    # mass escaping to the boundary signals a violated invariance condition
    fringe = max(10 * hf, 0.05 * (dom.x_hi - dom.x_lo))
    near = (xs - dom.x_lo < fringe) | (dom.x_hi - xs < fringe)
    total = np.trapezoid(mu, xs)
    if total <= 0 or np.trapezoid(mu * near, xs) > 0.5 * total:
        raise NumericalError("stationary density concentrates at the boundary; "
                             "the domain is not invariant")
    mu /= total
    l_vals = np.array([problem.cost([x], 0) for x in xs])
    return -float(np.trapezoid(l_vals * mu, xs))
