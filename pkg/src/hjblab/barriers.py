"""Radial test functions of the boundary distance and their certificates.

For a profile g of the distance d, the homogeneous operator acts through
the exact chain rule

    F[g(d)](x) = max over controls of
        ( -b . Dd g'(d) - tr(a D2d) g'(d) - (Dd^T a Dd) g''(d) ),

no finite differences involved.  Two families matter:

* the confinement profile g(d) = -d^(-lambda), lambda > 0, which blows up
  at the boundary and satisfies F[g] <= -M on a small enough collar;
* the bounded barrier g(d) = d^rho - 1, 0 < rho < 1 - gamma, with the
  same property, which yields boundary envelopes for solutions.

The certificate search scans a descending lattice of collar widths and
verifies the inequality pointwise on a geometric sample ladder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import ConfigError, NumericalError
from .problem import ControlProblem, DegeneracyCertificate, degeneracy_certificate


class LyapunovProfile:
    """g(d) = -d^(-lambda); unbounded confinement profile."""

    def __init__(self, lam: float):
        if not lam > 0:
            raise ConfigError("lambda must be positive")
        self.lam = lam

    def value(self, d: float) -> float:
        return -d ** (-self.lam)

    def d1(self, d: float) -> float:
        return self.lam * d ** (-self.lam - 1)

    def d2(self, d: float) -> float:
        return -self.lam * (self.lam + 1) * d ** (-self.lam - 2)


class BarrierProfile:
    """g(d) = d^rho - 1; bounded barrier profile."""

    def __init__(self, rho: float):
        self.rho = rho

    def value(self, d: float) -> float:
        return d**self.rho - 1.0

    def d1(self, d: float) -> float:
        return self.rho * d ** (self.rho - 1)

    def d2(self, d: float) -> float:
        return self.rho * (self.rho - 1) * d ** (self.rho - 2)


class CallableProfile:
    """Profile from explicit g, g', g'' callables."""

    def __init__(self, g, g1, g2):
        self.value, self.d1, self.d2 = g, g1, g2


@dataclass(frozen=True)
class BarrierSpec:
    family: str          # "lyapunov" or "barrier"
    param: float         # lambda or rho
    M: float

    def __post_init__(self):
        if self.family not in ("lyapunov", "barrier"):
            raise ConfigError(f"unknown certificate family {self.family!r}")


@dataclass
class BarrierCertificate:
    spec: BarrierSpec
    delta: float
    margin: float                      # max over samples of F[g] + M, <= 0
    witness_table: list = field(default_factory=list)  # (d, F) rows
    theoretical_margin: float | None = None            # barrier family only

    def to_dict(self) -> dict:
        return {
            "family": self.spec.family,
            "param": self.spec.param,
            "M": self.spec.M,
            "delta": self.delta,
            "margin": self.margin,
            "theoretical_margin": self.theoretical_margin,
            "witness_table": [[float(d), float(v)] for d, v in self.witness_table],
        }


def eval_F_radial(problem: ControlProblem, profile, x) -> float:
    """Exact value of the homogeneous operator on profile(d) at ``x``.

    ``x`` must avoid the distance function's singular set (the interval
    midpoint / the disk center, where d attains the inradius); certificate
    searches stay inside the collar, where d is always smooth.
    """
    d, Dd, D2d = geo.distance(problem.domain, x)
    if d >= geo.inradius(problem.domain):
        raise ConfigError(f"point at d={d} is on the distance function's ridge")
    g1 = profile.d1(d)
    g2 = profile.d2(d)
    if not (np.isfinite(g1) and np.isfinite(g2)):
        raise ConfigError(f"profile is singular at d={d}")
    best = -np.inf
    for ci in range(len(problem.controls)):
        b = problem.drift(x, ci)
        a = np.atleast_2d(problem.diffusion(x, ci))
        val = -float(b @ Dd) * g1 - float(np.trace(a @ D2d)) * g1 - float(Dd @ a @ Dd) * g2
        if val > best:
            best = val
    return best


def _collar_samples(dom: geo.Domain, n_per_side: int = 2000, directions: int = 16):
    """Geometric d-ladder over the full collar, returned sorted by d."""
    width = geo.collar_width(dom)
    d_min = 1e-9 * geo.diameter(dom)
    ds = np.geomspace(d_min, width * (1 - 1e-9), n_per_side)
    pts, dvals = [], []
    if isinstance(dom, geo.Interval):
        for d in ds:
            pts.append(np.array([dom.x_lo + d]))
            dvals.append(d)
            pts.append(np.array([dom.x_hi - d]))
            dvals.append(d)
    else:
        c = np.asarray(dom.center)
        for th in np.linspace(0.0, 2 * np.pi, directions, endpoint=False):
            u = np.array([np.cos(th), np.sin(th)])
            for d in ds:
                pts.append(c + (dom.radius - d) * u)
                dvals.append(d)
    order = np.argsort(dvals)
    return [pts[i] for i in order], np.asarray(dvals)[order]


def _scan_delta(problem, profile, M, grid_step, theoretical=None):
    """Largest lattice delta with F[g] <= -M at every sample below it."""
    dom = problem.domain
    width = geo.collar_width(dom)
    pts, dvals = _collar_samples(dom)
    F = np.array([eval_F_radial(problem, profile, x) for x in pts])
    # cumulative max of F over samples with d below a threshold
    cummax = np.maximum.accumulate(F)
    lattice = np.arange(width, grid_step * (1 - 1e-12), -grid_step)
    for delta in lattice:
        inside = np.searchsorted(dvals, delta, side="left")
        if inside == 0:
            continue
        margin = float(cummax[inside - 1] + M)
        if margin <= 0.0:
            step = max(1, inside // 24)
            table = [(float(dvals[i]), float(F[i])) for i in range(0, inside, step)]
            theo = None
            if theoretical is not None:
                theo = float(max(theoretical(dvals[i]) for i in range(inside)) + M)
            return BarrierCertificate(
                spec=BarrierSpec(
                    family="lyapunov" if isinstance(profile, LyapunovProfile) else "barrier",
                    param=profile.lam if isinstance(profile, LyapunovProfile) else profile.rho,
                    M=M,
                ),
                delta=float(delta),
                margin=margin,
                witness_table=table,
                theoretical_margin=theo,
            )
    raise NumericalError(
        f"no admissible delta found down to {grid_step}; the profile inequality "
        f"F <= -{M} fails on every lattice collar (assumption violation or "
        f"sampling too coarse)"
    )


def find_lyapunov_delta(
    problem: ControlProblem, lam: float, M: float, grid_step: float = 1e-3
) -> BarrierCertificate:
    """Largest collar width on which F[-d^(-lambda)] <= -M holds pointwise."""
    if not lam > 0:
        raise ConfigError("lambda must be positive")
    if M < 0:
        raise ConfigError("M must be nonnegative")
    return _scan_delta(problem, LyapunovProfile(lam), M, grid_step)


def find_barrier_delta(
    problem: ControlProblem,
    rho: float,
    M: float,
    grid_step: float = 1e-3,
    certificate: DegeneracyCertificate | None = None,
) -> BarrierCertificate:
    """Largest collar width on which F[d^rho - 1] <= -M holds pointwise.

    Requires 0 < rho < 1 - gamma with gamma taken from the problem's
    degeneracy certificate.  The certificate also reports the sufficient
    bound rho d^(gamma+rho-1) (-k + (rho-1) B^2 d^(2 beta - gamma - 1))
    alongside the exact evaluation.
    """
    if M <= 0:
        raise ConfigError("M must be positive")
    cert = certificate or degeneracy_certificate(problem)
    if not 0 < rho < 1 - cert.gamma:
        raise ConfigError(
            f"rho must lie in (0, {1 - cert.gamma}) for fitted gamma={cert.gamma}, got {rho}"
        )
    reg = problem.reg
    k, gamma = cert.k, cert.gamma

    def theoretical(d: float) -> float:
        return rho * d ** (gamma + rho - 1) * (
            -k + (rho - 1) * reg.B**2 * d ** (2 * reg.beta - gamma - 1)
        )

    return _scan_delta(problem, BarrierProfile(rho), M, grid_step, theoretical=theoretical)
