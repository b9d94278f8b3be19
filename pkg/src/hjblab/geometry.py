"""Domains and their exact distance fields.

Supported domains are open intervals and open disks; for both, the
boundary distance, its gradient and its Hessian are analytic:

* interval (lo, hi): d = min(x - lo, hi - x), Dd = +1 on the left half
  and -1 on the right half, D2d = 0 (d is not twice differentiable at
  the midpoint; the cached Hessian there is 0, and nothing outside the
  boundary collar ever uses it);
* disk of radius R around c: d = R - |x - c|, Dd = -(x - c)/|x - c|,
  D2d = -(I - n n^T)/|x - c| with n the unit radial direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class Interval:
    x_lo: float
    x_hi: float

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise ConfigError(f"interval needs x_lo < x_hi, got ({self.x_lo}, {self.x_hi})")


@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError(f"disk needs radius > 0, got {self.radius}")
        if len(self.center) != 2:
            raise ConfigError("disk center must have two coordinates")


Domain = Interval | Disk


def dim(dom: Domain) -> int:
    return 1 if isinstance(dom, Interval) else 2


def diameter(dom: Domain) -> float:
    if isinstance(dom, Interval):
        return dom.x_hi - dom.x_lo
    return 2.0 * dom.radius


def inradius(dom: Domain) -> float:
    if isinstance(dom, Interval):
        return 0.5 * (dom.x_hi - dom.x_lo)
    return dom.radius


def collar_width(dom: Domain) -> float:
    """Width of the boundary collar on which d is smooth and certificates live."""
    return 0.5 * inradius(dom)


def distance_value(dom: Domain, x) -> float:
    """Boundary distance alone; valid on the closed domain (d = 0 on the
    boundary is allowed, unlike :func:`distance`)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(dom, Interval):
        d = min(x[0] - dom.x_lo, dom.x_hi - x[0])
    else:
        d = dom.radius - float(np.hypot(x[0] - dom.center[0], x[1] - dom.center[1]))
    if d < -1e-12 * diameter(dom):
        raise ConfigError(f"point {x.tolist()} lies outside the domain")
    return max(d, 0.0)


def distance(dom: Domain, x):
    """Distance triple (d, Dd, D2d) at a strictly interior point.

    Raises :class:`ConfigError` for points outside the domain and for the
    disk center, where Dd is undefined.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(dom, Interval):
        left = x[0] - dom.x_lo
        right = dom.x_hi - x[0]
        if left <= 0 or right <= 0:
            raise ConfigError(f"point {x[0]} is not strictly inside ({dom.x_lo}, {dom.x_hi})")
        # tie at the midpoint resolves to the left branch
        if left <= right:
            return left, np.array([1.0]), np.zeros((1, 1))
        return right, np.array([-1.0]), np.zeros((1, 1))

    delta = x - np.asarray(dom.center, dtype=float)
    r = float(np.hypot(delta[0], delta[1]))
    if r >= dom.radius:
        raise ConfigError(f"point {x.tolist()} is not strictly inside the disk")
    if r == 0.0:
        raise ConfigError("distance gradient is undefined at the disk center")
    n = delta / r
    d2 = -(np.eye(2) - np.outer(n, n)) / r
    return dom.radius - r, -n, d2


def boundary_foot(dom: Domain, x):
    """Nearest boundary point to ``x`` and the inward unit normal there."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(dom, Interval):
        if x[0] - dom.x_lo <= dom.x_hi - x[0]:
            return np.array([dom.x_lo]), np.array([1.0])
        return np.array([dom.x_hi]), np.array([-1.0])
    delta = x - np.asarray(dom.center, dtype=float)
    r = float(np.hypot(delta[0], delta[1]))
    if r == 0.0:
        raise ConfigError("boundary foot is undefined at the disk center")
    n = delta / r
    return np.asarray(dom.center) + dom.radius * n, -n
