"""Single-vehicle longitudinal dynamics along a navigation path.

A vehicle is a point constrained to its path; its configuration is the polar
position about the roundabout centre, forward speed, and traversal status.
One control step applies a constant acceleration for ``delta`` seconds with
the usual kinematic update

    arclen' = arclen + v*delta + a*delta^2 / 2,    v' = v + a*delta,

except that braking through zero stops at the standstill point: when
``v + a*delta < 0`` the vehicle travels ``v^2 / (2|a|)`` and ends with
``v' = 0`` (no reversing).

Status advances monotonically enter -> inside -> exit against the occupancy
disc of radius ``r_in + diameter``: a vehicle becomes *inside* when its
centre distance first drops to that radius and *exit* when the distance first
exceeds it again.  Because centre distance is monotone along each block of
every path built here, this hysteresis rule is equivalent to switching at the
two crossing arclens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import Geometry, NavigationPath, Status

#: vehicle occupancy diameter [m]; also the collision distance
VEHICLE_DIAMETER = 4.5

__all__ = ["Configuration", "Rollout", "VEHICLE_DIAMETER", "step", "update_status",
           "advance_status", "rollout"]


@dataclass(frozen=True)
class Configuration:
    """Vehicle state: polar pose, speed, status, and optional path coordinate.

    ``arclen`` binds the configuration to a point on a specific path; it is
    None for configurations observed of *other* vehicles, whose paths are
    unknown.
    """

    r: float
    theta: float
    v: float
    status: Status
    arclen: float | None = None

    def xy(self):
        return self.r * math.cos(self.theta), self.r * math.sin(self.theta)


def advance_status(status: Status, rho: float, threshold: float) -> Status:
    """One hysteresis update of the traversal status given centre distance."""
    if status == Status.ENTER and rho <= threshold:
        return Status.INSIDE
    if status == Status.INSIDE and rho > threshold:
        return Status.EXIT
    return status


def update_status(x: Configuration, geometry: Geometry,
                  diameter: float = VEHICLE_DIAMETER) -> Configuration:
    """Re-evaluate ``x.status`` against the occupancy disc ``r_in + diameter``."""
    new = advance_status(x.status, x.r, geometry.r_in + diameter)
    return x if new == x.status else replace(x, status=new)


def step(x: Configuration, a: float, delta: float, path: NavigationPath,
         diameter: float = VEHICLE_DIAMETER) -> Configuration:
    """Apply acceleration ``a`` for ``delta`` seconds along ``path``."""
    if delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    if x.v < 0.0:
        raise ValueError(f"speed must be non-negative, got {x.v}")
    if x.arclen is None:
        raise ValueError("configuration is not bound to a path position")
    v_next = x.v + a * delta
    if v_next < 0.0:
        disp = x.v * x.v / (2.0 * abs(a))  # brake to standstill mid-step
        v_next = 0.0
    else:
        disp = x.v * delta + 0.5 * a * delta * delta
    arclen = x.arclen + disp
    rho, theta, _ = path.pose(arclen)
    status = advance_status(x.status, rho, path.r_in + diameter)
    return Configuration(r=rho, theta=theta, v=v_next, status=status, arclen=arclen)


@dataclass
class Rollout:
    """States of one vehicle under every candidate strategy.

    All arrays are ``(n_strategies, horizon)``; column ``tau`` is the state
    at stage ``tau``, so column 0 repeats the shared start state and the
    strategy's acceleration at stage ``tau`` produces column ``tau + 1``.
    The acceleration scheduled for the final stage never affects a stored
    state and is therefore irrelevant to costs.
    """

    theta: np.ndarray
    rho: np.ndarray
    v: np.ndarray
    status: np.ndarray  # int8 Status codes
    arclen: np.ndarray


def rollout(path: NavigationPath, arclen0: float, v0: float, status0: Status,
            accels: np.ndarray, delta: float,
            diameter: float = VEHICLE_DIAMETER) -> Rollout:
    """Vectorised ``step`` over strategies: same kinematics, same hysteresis."""
    accels = np.asarray(accels, dtype=float)
    n, h = accels.shape
    thr = path.r_in + diameter
    theta = np.empty((n, h))
    rho = np.empty((n, h))
    vel = np.empty((n, h))
    status = np.empty((n, h), dtype=np.int8)
    arc = np.empty((n, h))
    rho0, theta0, _ = path.pose(arclen0)
    theta[:, 0] = theta0
    rho[:, 0] = rho0
    vel[:, 0] = v0
    status[:, 0] = int(status0)
    arc[:, 0] = arclen0
    v = np.full(n, float(v0))
    s = np.full(n, float(arclen0))
    st = np.full(n, int(status0), dtype=np.int8)
    for tau in range(1, h):
        a = accels[:, tau - 1]
        v_next = v + a * delta
        neg = v_next < 0.0
        denom = np.where(neg, np.abs(a), 1.0)
        disp = np.where(neg, v * v / (2.0 * denom), v * delta + 0.5 * a * delta * delta)
        v = np.where(neg, 0.0, v_next)
        s = s + disp
        r_t, th_t, _ = path.pose_batch(s)
        st = np.where((st == int(Status.ENTER)) & (r_t <= thr),
                      int(Status.INSIDE), st).astype(np.int8)
        st = np.where((st == int(Status.INSIDE)) & (r_t > thr),
                      int(Status.EXIT), st).astype(np.int8)
        theta[:, tau] = th_t
        rho[:, tau] = r_t
        vel[:, tau] = v
        status[:, tau] = st
        arc[:, tau] = s
    return Rollout(theta=theta, rho=rho, v=vel, status=status, arclen=arc)
