"""Stage costs traded off by each vehicle: keep clear of neighbours, keep speed.

The per-step cost of a vehicle is a convex combination, weighted by its
aggressiveness ``w``, of a safety term and a speed term:

    phi = (1 - w) * phi_safe + w * phi_speed.

``phi_safe`` is the worse of a front-vehicle and a back-vehicle penalty; both
grow quadratically as the gap ``d`` closes on the interaction range ``D`` and
jump to an effectively infinite wall ``E_inf`` when the gap drops below a
context-dependent comfort threshold (``D_en`` when merging into circulating
traffic, the following distance ``D_c`` otherwise).  A circulating vehicle
discounts queued entering traffic with the softer coefficient ``C_ins``.
``phi_speed`` penalises deviation from the reference speed ``v_l``,
overspeeding much harder than dawdling, with creeping punished more inside
the roundabout than on approach/exit lanes.

Pair gaps combine the counter-clockwise driving-circle arc between the two
position angles with the radial offset:

    d(i, j) = hypot(r_in * ((theta_j - theta_i) mod 2pi), rho_i - rho_j)

so that a queue on an approach lane (tiny angular gap, matching radial
spacing) measures its true spacing rather than collapsing to zero, while on
the driving circle the radial term vanishes and the gap is the pure arc
length.  The hypot form (rather than the sum) matters at merges, where the
gap splits between both components: a comfort wall at ``D_c`` then still
guarantees roughly ``D_c`` of true clearance, whereas a summed gap of ``D_c``
can shrink to ``D_c / sqrt(2)`` of actual separation.

The module also evaluates these costs over whole strategy spaces at once:
``payoff_tensors`` turns per-player rollout bundles into discounted-cost
tensors with one axis per player, which the game solver consumes directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

from .dynamics import Configuration
from .geometry import Geometry, Status, path_distance

TWO_PI = 2.0 * math.pi

__all__ = [
    "CostParams",
    "beta",
    "phi_front",
    "phi_back",
    "phi_safe",
    "phi_speed",
    "step_cost",
    "horizon_weights",
    "pair_distance",
    "front_back",
    "payoff_tensors",
]


@dataclass(frozen=True)
class CostParams:
    """Cost coefficients; defaults are the reference parameterisation."""

    lam: float = 0.8        # per-step discount
    E_inf: float = 1e12     # hard-wall cost
    C: float = 10.0         # proximity coefficient, circulating pairs
    C_ins: float = 1.0      # proximity coefficient toward entering traffic
    C_en: float = 1.0       # speed-tracking coefficient while entering/exiting
    C_in: float = 10.0      # speed-tracking coefficient while inside
    C_o: float = 1e3        # overspeed coefficient
    D: float = 30.0         # interaction range [m]
    D_en: float = 10.0      # merge comfort distance [m]
    D_c: float = 6.0        # following comfort distance [m]
    v_l: float = 11.0       # reference speed [m/s]

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"discount lam must be in (0, 1), got {self.lam}")
        for name in ("E_inf", "C", "C_ins", "C_en", "C_in", "C_o", "D", "D_en", "D_c", "v_l"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not self.D_c < self.D_en < self.D:
            raise ValueError("comfort distances must satisfy D_c < D_en < D")
        if not self.C_ins < self.C:
            raise ValueError("C_ins must be smaller than C")
        if not (self.C_o > self.C_in and self.C_o > self.C_en):
            raise ValueError("overspeed coefficient C_o must dominate C_in and C_en")


def beta(d: float, threshold: float, params: CostParams) -> float:
    """Hard comfort wall: prohibitive once the gap is at or below threshold."""
    return params.E_inf if d <= threshold else 0.0


def _phi_pair(ego_status: Status, other_status: Status, d: float, params: CostParams) -> float:
    q = (params.D - d) ** 2
    if ego_status == Status.INSIDE and other_status == Status.ENTER:
        return params.C_ins * q
    if ego_status == Status.ENTER and other_status == Status.INSIDE:
        return params.C * q + beta(d, params.D_en, params)
    return params.C * q + beta(d, params.D_c, params)


def phi_front(ego_status: Status, front_status: Optional[Status], d: Optional[float],
              params: CostParams) -> float:
    """Proximity cost toward the front neighbour; zero when there is none."""
    if front_status is None or d is None:
        return 0.0
    return _phi_pair(ego_status, front_status, d, params)


def phi_back(ego_status: Status, back_status: Optional[Status], d: Optional[float],
             params: CostParams) -> float:
    """Proximity cost toward the back neighbour; zero when there is none."""
    if back_status is None or d is None:
        return 0.0
    return _phi_pair(ego_status, back_status, d, params)


def phi_safe(front_cost: float, back_cost: float) -> float:
    return max(front_cost, back_cost)


def phi_speed(v: float, status: Status, params: CostParams) -> float:
    """Speed-tracking cost at speed ``v`` in traversal ``status``.

    The lenient coefficient applies only while entering; past the merge the
    pull toward the limit is ten times stronger.
    """
    dv2 = (params.v_l - v) ** 2
    if v > params.v_l:
        return params.C_o * dv2
    if status == Status.ENTER:
        return params.C_en * dv2
    return params.C_in * dv2


def step_cost(w_agg: float, safe: float, speed: float) -> float:
    """Aggressiveness-weighted combination of the two stage terms."""
    if not 0.0 <= w_agg <= 1.0:
        raise ValueError(f"aggressiveness must be in [0, 1], got {w_agg}")
    return (1.0 - w_agg) * safe + w_agg * speed


def horizon_weights(lam: float, horizon: int) -> np.ndarray:
    """Discount weights ``lam**tau`` for the horizon stages ``tau = 0..h-1``."""
    return lam ** np.arange(horizon)


def pair_distance(cfg_from: Configuration, cfg_to: Configuration, geometry: Geometry) -> float:
    """Composite gap: hypot of ccw arc from ``cfg_from`` to ``cfg_to`` and radial offset."""
    return math.hypot(path_distance(cfg_from.theta, cfg_to.theta, geometry),
                      cfg_from.r - cfg_to.r)


def front_back(ego: Configuration, others: Mapping[int, Configuration],
               geometry: Geometry, params: CostParams,
               ) -> Tuple[Optional[Tuple[int, float]], Optional[Tuple[int, float]]]:
    """Nearest relevant neighbours of ``ego`` among ``others``.

    The front neighbour is the vehicle with the smallest ccw angular gap ahead
    in [0, pi], the back neighbour the smallest gap behind in (0, pi); both
    must be within the interaction range ``D`` in composite distance.  Ties
    go to the lower vehicle id.  Returns ``(front, back)`` as ``(id, d)``
    pairs or ``None``.

    Vehicles that have exited take no further part in the interaction: an
    exited ego has no neighbours, and exited others are never selected.
    """
    if ego.status == Status.EXIT:
        return None, None
    front = back = None
    front_key = back_key = None
    for vid in sorted(others):
        other = others[vid]
        if other.status == Status.EXIT:
            continue
        fgap = (other.theta - ego.theta) % TWO_PI
        if fgap <= math.pi:
            d = math.hypot(geometry.r_in * fgap, ego.r - other.r)
            if d < params.D and (front_key is None or fgap < front_key):
                front_key, front = fgap, (vid, d)
        bgap = (ego.theta - other.theta) % TWO_PI
        if 0.0 < bgap < math.pi:
            d = math.hypot(geometry.r_in * bgap, ego.r - other.r)
            if d < params.D and (back_key is None or bgap < back_key):
                back_key, back = bgap, (vid, d)
    return front, back


# --- strategy-space evaluation ---------------------------------------------


def _pair_arrays(theta, rho, p, q, h, shape):
    """ccw gaps p->q and q->p plus radial offset, broadcast into profile space.

    Both gaps are reduced from the raw angle difference independently (a
    second mod of the negated first gap would round tiny gaps to zero).
    """
    diff = theta[q][None, :, :] - theta[p][:, None, :]
    fgap = diff % TWO_PI
    bgap = (-diff) % TWO_PI
    dr = np.abs(rho[p][:, None, :] - rho[q][None, :, :])
    if p > q:
        # reshape consumes buffer axes in order; put the lower axis first
        fgap = np.swapaxes(fgap, 0, 1)
        bgap = np.swapaxes(bgap, 0, 1)
        dr = np.swapaxes(dr, 0, 1)
    view = [1] * len(shape) + [h]
    view[p], view[q] = shape[p], shape[q]
    return fgap.reshape(view), bgap.reshape(view), dr.reshape(view)


def payoff_tensors(trajs: Sequence, w: Sequence[float], params: CostParams,
                   r_in: float):
    """Discounted game costs over the joint strategy space.

    ``trajs`` holds one rollout bundle per player *in ascending vehicle-id
    order* (neighbour ties resolve to the earlier bundle); each bundle has
    ``theta/rho/v/status`` arrays of shape ``(S_k, h)``.  Stages where a
    vehicle has exited contribute no pair terms, mirroring ``front_back``.
    Returns ``(costs, safe, speed)``, three lists of ``(S_0, ..., S_{K-1})``
    tensors, where ``costs[k] = (1-w[k])*safe[k] + w[k]*speed[k]``.
    """
    K = len(trajs)
    h = trajs[0].theta.shape[1]
    shape = tuple(t.theta.shape[0] for t in trajs)
    theta = [t.theta for t in trajs]
    rho = [t.rho for t in trajs]
    wts = horizon_weights(params.lam, h)
    inside = int(Status.INSIDE)
    enter = int(Status.ENTER)
    exited = int(Status.EXIT)

    stat_v, v_v = [], []
    for k in range(K):
        view = [1] * (K + 1)
        view[k], view[-1] = shape[k], h
        stat_v.append(trajs[k].status.reshape(view))
        v_v.append(trajs[k].v.reshape(view))

    # Pair geometry is shared between the two orientations: the ccw gap a->b
    # is the gap b->a measured the other way round.  Window-masked gap arrays
    # (inf = not a candidate) are built once per unordered pair in the small
    # (S_a, S_b, h) space; a stage where either member has exited carries no
    # interaction.
    pairs = {}
    for a in range(K):
        for b in range(a + 1, K):
            fg, bg, dr = _pair_arrays(theta, rho, a, b, h, shape)
            alive = (stat_v[a] != exited) & (stat_v[b] != exited)
            d_fg = np.hypot(r_in * fg, dr)
            d_bg = np.hypot(r_in * bg, dr)
            fg_ok = alive & (d_fg < params.D)
            bg_ok = alive & (d_bg < params.D)
            pairs[a, b] = (
                np.where(fg_ok & (fg <= math.pi), fg, np.inf),            # a front
                np.where(bg_ok & (bg > 0.0) & (bg < math.pi), bg, np.inf),  # a back
                np.where(bg_ok & (bg <= math.pi), bg, np.inf),            # b front
                np.where(fg_ok & (fg > 0.0) & (fg < math.pi), fg, np.inf),  # b back
                d_fg, d_bg,
            )

    safe_out, speed_out, cost_out = [], [], []
    for p in range(K):
        est, ev = stat_v[p], v_v[p]
        # nearest-by-angle neighbour per side: running strict minimum in
        # ascending id order keeps the first (lowest-id) tie, like argmin
        best = {"front": None, "back": None}
        for q in range(K):
            if q == p:
                continue
            a, b = (p, q) if p < q else (q, p)
            f_a, b_a, f_b, b_b, d_fg, d_bg = pairs[a, b]
            if p == a:
                cand = {"front": (f_a, d_fg), "back": (b_a, d_bg)}
            else:
                cand = {"front": (f_b, d_bg), "back": (b_b, d_fg)}
            for side, (gap, d) in cand.items():
                cur = best[side]
                if cur is None:
                    best[side] = (gap, d, stat_v[q])
                else:
                    m = gap < cur[0]
                    best[side] = (np.where(m, gap, cur[0]),
                                  np.where(m, d, cur[1]),
                                  np.where(m, stat_v[q], cur[2]))

        est_enter = est == enter
        est_inside = est == inside
        sides = []
        for side in ("front", "back"):
            if best[side] is None:
                sides.append(0.0)
                continue
            gap, d, st = best[side]
            exists = np.isfinite(gap)
            quad = (params.D - d) ** 2
            wall_thr = np.where(est_enter & (st == inside), params.D_en, params.D_c)
            val = np.where(est_inside & (st == enter),
                           params.C_ins * quad,
                           params.C * quad + np.where(d <= wall_thr, params.E_inf, 0.0))
            sides.append(np.where(exists, val, 0.0))

        safe = np.maximum(sides[0], sides[1])
        dv2 = (params.v_l - ev) ** 2
        speed = np.where(ev > params.v_l, params.C_o * dv2,
                         np.where(est_enter, params.C_en * dv2, params.C_in * dv2))

        safe_sum = np.broadcast_to((safe * wts).sum(axis=-1), shape)
        speed_sum = np.broadcast_to((speed * wts).sum(axis=-1), shape)
        safe_out.append(safe_sum)
        speed_out.append(speed_sum)
        cost_out.append((1.0 - w[p]) * safe_sum + w[p] * speed_sum)
    return cost_out, safe_out, speed_out
