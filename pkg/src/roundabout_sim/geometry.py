"""Roundabout geometry: arms, navigation paths, and path-frame queries.

A ``ways``-way single-lane roundabout is built from arcs of five circles:
the inner driving circle of radius ``r_in`` (traffic moves counter-clockwise
on it) and connector circles of radius ``r_en`` that join each arm's straight
approach/exit lanes tangentially to the driving circle.

Construction used here, for a path entering at arm ``a`` and exiting at arm
``b`` with connector angle ``theta`` (one of ``theta1/theta2/theta3`` for
right/straight/left maneuvers):

* the merge point sits ``theta/2`` radians counter-clockwise past the arm
  heading, the departure point ``theta/2`` before the exit arm, so the two
  connectors together claim a centre angle of ``theta`` and the arc driven on
  the inner circle spans ``(angle(b) - angle(a)) - theta``;
* each connector is an arc of radius ``r_en`` externally tangent to the inner
  circle at the merge/departure point and tangent to a straight lane parallel
  to the arm axis; the lane's lateral offset ``(r_in + r_en)*sin(theta/2) -
  r_en`` falls out of the tangency instead of being a free parameter.

Every joint is tangent-continuous and the lateral lane offsets keep entry and
exit lanes of all arms more than one vehicle diameter apart, so no two paths
overlap head-on.

Arclength is the single path coordinate.  ``pose`` maps arclen to the polar
configuration ``(rho, theta)`` about the roundabout centre plus the
structural block label (enter / inside / exit); querying past the path end
extrapolates along the final segment, negative arclen is an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

TWO_PI = 2.0 * math.pi

__all__ = [
    "Status",
    "Maneuver",
    "PathKind",
    "RoundaboutSpec",
    "Segment",
    "NavigationPath",
    "Geometry",
    "build_roundabout",
    "build_path",
    "path_pose",
    "path_distance",
]


class Status(IntEnum):
    """Structural position of a vehicle relative to the roundabout."""

    ENTER = 0
    INSIDE = 1
    EXIT = 2

    def label(self):
        return self.name.lower()


class Maneuver(Enum):
    TURN_RIGHT = "turn_right"
    GO_STRAIGHT = "go_straight"
    TURN_LEFT = "turn_left"


# arms advanced in traffic (counter-clockwise) direction per maneuver
_MANEUVER_STEPS = {
    Maneuver.TURN_RIGHT: 1,
    Maneuver.GO_STRAIGHT: 2,
    Maneuver.TURN_LEFT: 3,
}


@dataclass(frozen=True)
class PathKind:
    """A maneuver together with the entrance arm index it starts from."""

    maneuver: Maneuver
    arm: int


@dataclass(frozen=True)
class RoundaboutSpec:
    """User-facing geometry parameters.

    ``theta1/theta2/theta3`` are the connector angles of the right / straight
    / left paths: the total centre angle claimed by the two connector arcs of
    that maneuver (split evenly between entry and exit side).
    """

    ways: int = 4
    r_in: float = 20.0
    r_en: float = 8.0
    approach_len: float = 40.0
    theta1: float = 0.38
    theta2: float = math.pi / 2
    theta3: float = 0.40
    entrance_angles: tuple = ()

    def arm_angles(self):
        if self.entrance_angles:
            return tuple(self.entrance_angles)
        return tuple(TWO_PI * k / self.ways for k in range(self.ways))


_LINE = 0
_ARC = 1
_CIRCLE = 2  # arc centred on the roundabout origin: rho is exact


class Segment:
    """One piecewise-constant-curvature piece of a navigation path."""

    __slots__ = ("type", "label", "length", "ax", "ay", "bx", "by", "radius", "psi0", "orient")

    def __init__(self, type_, label, length, ax=0.0, ay=0.0, bx=0.0, by=0.0,
                 radius=0.0, psi0=0.0, orient=0.0):
        self.type = type_
        self.label = label
        self.length = length
        # line: (ax, ay) origin, (bx, by) unit direction
        # arc/circle: (ax, ay) centre, radius, psi0 start angle, orient +-1
        self.ax = ax
        self.ay = ay
        self.bx = bx
        self.by = by
        self.radius = radius
        self.psi0 = psi0
        self.orient = orient

    def point_at(self, t):
        if self.type == _LINE:
            return self.ax + t * self.bx, self.ay + t * self.by
        psi = self.psi0 + self.orient * t / self.radius
        return (self.ax + self.radius * math.cos(psi),
                self.ay + self.radius * math.sin(psi))

    def heading_at(self, t):
        if self.type == _LINE:
            return math.atan2(self.by, self.bx)
        psi = self.psi0 + self.orient * t / self.radius
        return psi + self.orient * math.pi / 2.0


@dataclass
class NavigationPath:
    """Immutable polyline-of-arcs path with arclen as the sole coordinate."""

    kind: PathKind | None
    exit_arm: int | None
    segments: list
    r_in: float
    endless: bool = False
    total_length: float = field(init=False)
    total_enter_len: float = field(init=False)
    exit_angle: float = field(init=False)
    _s0: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cum = [0.0]
        for seg in self.segments:
            cum.append(cum[-1] + seg.length)
        self._s0 = np.asarray(cum[:-1])
        self.total_length = cum[-1]
        self.total_enter_len = sum(
            s.length for s in self.segments if s.label == Status.ENTER)
        last = self.segments[-1]
        if last.type == _LINE and last.label == Status.EXIT:
            self.exit_angle = math.atan2(last.by, last.bx) % TWO_PI
        else:
            self.exit_angle = math.nan
        # flat parameter table for vectorised pose queries
        n = len(self.segments)
        self._types = np.array([s.type for s in self.segments], dtype=np.int8)
        self._labels = np.array([int(s.label) for s in self.segments], dtype=np.int8)
        self._params = np.zeros((n, 6))
        for i, s in enumerate(self.segments):
            self._params[i] = (s.ax, s.ay, s.bx, s.by, s.radius, s.psi0)
        self._orients = np.array([s.orient for s in self.segments])

    def _segment_index(self, arclen):
        if arclen < 0.0:
            raise ValueError(f"arclen must be non-negative, got {arclen}")
        lo, hi = 0, len(self.segments) - 1
        s0 = self._s0
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if s0[mid] <= arclen:
                lo = mid
            else:
                hi = mid - 1
        return lo

    def pose(self, arclen):
        """Map arclen to (rho, theta, base label); extrapolates past the end."""
        i = self._segment_index(arclen)
        seg = self.segments[i]
        t = arclen - float(self._s0[i])
        if seg.type == _CIRCLE:
            theta = (seg.psi0 + seg.orient * t / seg.radius) % TWO_PI
            return seg.radius, theta, Status(seg.label)
        x, y = seg.point_at(t)
        return math.hypot(x, y), math.atan2(y, x) % TWO_PI, Status(seg.label)

    def pose_batch(self, arclens):
        """Vectorised ``pose``: returns (rho, theta, label_code) arrays."""
        s = np.asarray(arclens, dtype=float)
        if np.any(s < 0.0):
            raise ValueError("arclen must be non-negative")
        idx = np.searchsorted(self._s0, s, side="right") - 1
        t = s - self._s0[idx]
        p = self._params[idx]
        types = self._types[idx]
        rho = np.empty_like(s)
        theta = np.empty_like(s)
        line = types == _LINE
        if line.any():
            x = p[line, 0] + t[line] * p[line, 2]
            y = p[line, 1] + t[line] * p[line, 3]
            rho[line] = np.hypot(x, y)
            theta[line] = np.arctan2(y, x) % TWO_PI
        arc = types == _ARC
        if arc.any():
            psi = p[arc, 5] + self._orients[idx[arc]] * t[arc] / p[arc, 4]
            x = p[arc, 0] + p[arc, 4] * np.cos(psi)
            y = p[arc, 1] + p[arc, 4] * np.sin(psi)
            rho[arc] = np.hypot(x, y)
            theta[arc] = np.arctan2(y, x) % TWO_PI
        circ = types == _CIRCLE
        if circ.any():
            rho[circ] = p[circ, 4]
            theta[circ] = (p[circ, 5] + self._orients[idx[circ]] * t[circ] / p[circ, 4]) % TWO_PI
        return rho, theta, self._labels[idx]

    def heading(self, arclen):
        i = self._segment_index(arclen)
        return self.segments[i].heading_at(arclen - float(self._s0[i])) % TWO_PI

    def project(self, x, y):
        """Arclen of the path point nearest to (x, y); first minimum wins."""
        best_s, best_d2 = 0.0, math.inf
        for i, seg in enumerate(self.segments):
            s0 = float(self._s0[i])
            if seg.type == _LINE:
                t = (x - seg.ax) * seg.bx + (y - seg.ay) * seg.by
                t = min(max(t, 0.0), seg.length)
            else:
                phi = math.atan2(y - seg.ay, x - seg.ax)
                t = ((phi - seg.psi0) * seg.orient) % TWO_PI * seg.radius
                if t > seg.length:
                    # off the arc span: nearer endpoint
                    t = 0.0 if _point_d2(seg, 0.0, x, y) <= _point_d2(seg, seg.length, x, y) else seg.length
            d2 = _point_d2(seg, t, x, y)
            if d2 < best_d2 - 1e-12:
                best_s, best_d2 = s0 + t, d2
        return best_s


def _point_d2(seg, t, x, y):
    px, py = seg.point_at(t)
    return (px - x) ** 2 + (py - y) ** 2


@dataclass
class Geometry:
    """Validated roundabout with cached navigation and hypothesis paths."""

    spec: RoundaboutSpec
    arm_angles: tuple

    def __post_init__(self):
        self._paths = {}
        self._entry_hypo = {}
        self._exit_hypo = {}
        self._circle_hypo = None

    @property
    def r_in(self):
        return self.spec.r_in

    def connector_angle(self, maneuver):
        return {
            Maneuver.TURN_RIGHT: self.spec.theta1,
            Maneuver.GO_STRAIGHT: self.spec.theta2,
            Maneuver.TURN_LEFT: self.spec.theta3,
        }[maneuver]

    def path(self, kind):
        if kind not in self._paths:
            self._paths[kind] = build_path(self, kind)
        return self._paths[kind]

    def entry_hypothesis(self, kind):
        """Entry connector then indefinite circulation, for observed entering vehicles."""
        if kind not in self._entry_hypo:
            segs = _entry_segments(self, kind)
            segs.append(Segment(_CIRCLE, Status.INSIDE, 3 * TWO_PI * self.r_in,
                                radius=self.r_in, psi0=_merge_angle(self, kind), orient=1.0))
            self._entry_hypo[kind] = NavigationPath(kind, None, segs, self.r_in, endless=True)
        return self._entry_hypo[kind]

    def exit_hypothesis(self, arm):
        """One circulation lap then a straight-maneuver exit at ``arm``."""
        if arm not in self._exit_hypo:
            chi = self.spec.theta2 / 2.0
            phi_out = self.arm_angles[arm] - chi
            segs = [Segment(_CIRCLE, Status.INSIDE, TWO_PI * self.r_in,
                            radius=self.r_in, psi0=phi_out % TWO_PI, orient=1.0)]
            segs.extend(_exit_segments(self, arm, chi))
            self._exit_hypo[arm] = NavigationPath(None, arm, segs, self.r_in)
        return self._exit_hypo[arm]

    def circle_hypothesis(self):
        """Pure circulation on the driving circle, for observed inside vehicles."""
        if self._circle_hypo is None:
            seg = Segment(_CIRCLE, Status.INSIDE, 4 * TWO_PI * self.r_in,
                          radius=self.r_in, psi0=0.0, orient=1.0)
            self._circle_hypo = NavigationPath(None, None, [seg], self.r_in, endless=True)
        return self._circle_hypo


def build_roundabout(spec: RoundaboutSpec) -> Geometry:
    """Validate ``spec`` and derive the arm layout."""
    if spec.ways < 3:
        raise ValueError(f"ways must be >= 3, got {spec.ways}")
    for name in ("r_in", "r_en", "approach_len"):
        if getattr(spec, name) <= 0.0:
            raise ValueError(f"{name} must be positive")
    spacing = TWO_PI / spec.ways
    for theta, maneuver in ((spec.theta1, Maneuver.TURN_RIGHT),
                            (spec.theta2, Maneuver.GO_STRAIGHT),
                            (spec.theta3, Maneuver.TURN_LEFT)):
        if not 0.0 < theta < math.pi:
            raise ValueError(f"connector angle for {maneuver.value} must be in (0, pi)")
        budget = spacing * _MANEUVER_STEPS[maneuver]
        if theta > budget + 1e-12:
            raise ValueError(
                f"connector angle {theta} for {maneuver.value} exceeds the "
                f"angular budget {budget} between its arms")
    angles = spec.arm_angles()
    if len(angles) != spec.ways:
        raise ValueError(f"entrance_angles must have exactly {spec.ways} entries")
    for a, b in zip(angles, angles[1:]):
        if not a < b:
            raise ValueError("entrance_angles must be strictly increasing")
    if angles and not (0.0 <= angles[0] and angles[-1] < TWO_PI):
        raise ValueError("entrance_angles must lie in [0, 2*pi)")
    return Geometry(spec=spec, arm_angles=angles)


def _merge_angle(geom, kind):
    return geom.arm_angles[kind.arm] + geom.connector_angle(kind.maneuver) / 2.0


def _entry_segments(geom, kind):
    """Approach lane plus entry connector, tangent at the merge point."""
    spec = geom.spec
    alpha = geom.arm_angles[kind.arm]
    chi = geom.connector_angle(kind.maneuver) / 2.0
    phi_in = alpha + chi
    rc = spec.r_in + spec.r_en
    qx, qy = rc * math.cos(phi_in), rc * math.sin(phi_in)
    # lane normal points to the inbound driver's right
    nx, ny = math.cos(alpha + math.pi / 2.0), math.sin(alpha + math.pi / 2.0)
    sx, sy = qx - spec.r_en * nx, qy - spec.r_en * ny
    ux, uy = math.cos(alpha), math.sin(alpha)
    approach = Segment(_LINE, Status.ENTER, spec.approach_len,
                       ax=sx + spec.approach_len * ux, ay=sy + spec.approach_len * uy,
                       bx=-ux, by=-uy)
    connector = Segment(_ARC, Status.ENTER, spec.r_en * (math.pi / 2.0 - chi),
                        ax=qx, ay=qy, radius=spec.r_en,
                        psi0=alpha - math.pi / 2.0, orient=-1.0)
    return [approach, connector]


def _exit_segments(geom, arm, chi):
    """Exit connector plus outbound lane, tangent at the departure point."""
    spec = geom.spec
    alpha = geom.arm_angles[arm]
    phi_out = alpha - chi
    rc = spec.r_in + spec.r_en
    qx, qy = rc * math.cos(phi_out), rc * math.sin(phi_out)
    connector = Segment(_ARC, Status.EXIT, spec.r_en * (math.pi / 2.0 - chi),
                        ax=qx, ay=qy, radius=spec.r_en,
                        psi0=phi_out + math.pi, orient=-1.0)
    nx, ny = math.cos(alpha + math.pi / 2.0), math.sin(alpha + math.pi / 2.0)
    sx, sy = qx + spec.r_en * nx, qy + spec.r_en * ny
    lane = Segment(_LINE, Status.EXIT, spec.approach_len,
                   ax=sx, ay=sy, bx=math.cos(alpha), by=math.sin(alpha))
    return [connector, lane]


def build_path(geometry: Geometry, kind: PathKind) -> NavigationPath:
    """Full navigation path for ``kind``: approach, merge, circulate, exit."""
    spec = geometry.spec
    if not 0 <= kind.arm < spec.ways:
        raise ValueError(f"arm index {kind.arm} out of range for {spec.ways}-way roundabout")
    exit_arm = (kind.arm + _MANEUVER_STEPS[kind.maneuver]) % spec.ways
    chi = geometry.connector_angle(kind.maneuver) / 2.0
    phi_in = geometry.arm_angles[kind.arm] + chi
    phi_out = geometry.arm_angles[exit_arm] - chi
    extent = (phi_out - phi_in) % TWO_PI
    if extent > TWO_PI - 1e-9:
        extent = 0.0  # degenerate shortcut: connectors meet on the circle
    segs = _entry_segments(geometry, kind)
    if extent > 1e-12:
        segs.append(Segment(_CIRCLE, Status.INSIDE, spec.r_in * extent,
                            radius=spec.r_in, psi0=phi_in % TWO_PI, orient=1.0))
    segs.extend(_exit_segments(geometry, exit_arm, chi))
    return NavigationPath(kind, exit_arm, segs, spec.r_in)


def path_pose(path: NavigationPath, arclen: float):
    """(rho, theta, base status label) at ``arclen`` along ``path``."""
    return path.pose(arclen)


def path_distance(theta_from: float, theta_to: float, geometry: Geometry) -> float:
    """Driving-circle arc length of the counter-clockwise gap between angles.

    Directional: the gap is measured counter-clockwise from ``theta_from`` to
    ``theta_to``; callers pass arguments in the direction they need.
    """
    return geometry.r_in * ((theta_to - theta_from) % TWO_PI)
