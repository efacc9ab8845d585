"""Per-vehicle decision logic: observe, estimate neighbours, play the game.

Each vehicle runs the same loop every control step:

1. **Observe** its neighbourhood: itself plus up to two vehicles ahead and
   one behind (smallest angular gaps within the interaction range).  Only
   kinematic state ``(rho, theta, v, status)`` of others is visible — never
   their route, aggressiveness, or path coordinate.

2. **Estimate** what it cannot see.  Every neighbour gets a hypothesis path
   (entering via the nearest entry geometry, circulating indefinitely, or
   exiting at the next arm — chosen from its status, radial position, and
   radial trend) and an aggressiveness estimate, initialised to 0.5.  When a
   neighbour's observed position deviates from the position predicted for it
   at the previous step by more than ``eps_dev``, the estimator replays last
   step's two-player game between itself and that neighbour once per
   candidate weight and keeps the weight whose equilibrium first-stage
   acceleration best explains the observed speed change; ties stick near the
   previous estimate, then prefer the smaller weight.  The hypothesis path is
   re-estimated at the same time.

3. **Decide** by building the sequential game among the observed vehicles
   (most aggressive first, by estimated weight; ego uses its true weight) and
   applying the first acceleration of its own equilibrium strategy.

A deadlock breaker keeps the system live: when every observed vehicle
(including ego) is at a standstill, the vehicle flips a private coin and, on
success, accelerates — unless it is still entering while a circulating
neighbour is present, in which case it keeps yielding.  The coin is drawn
from a per-vehicle stream whenever the standstill condition holds, so runs
stay reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from .cost import CostParams, payoff_tensors
from .dynamics import VEHICLE_DIAMETER, Configuration, Rollout, rollout, step
from .game import GameParams, order_players, tensor_equilibrium
from .geometry import Geometry, Maneuver, NavigationPath, PathKind, Status

TWO_PI = 2.0 * math.pi

DEFAULT_W_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))

__all__ = [
    "AgentParams",
    "AgentState",
    "DecisionResult",
    "observe",
    "estimate_path",
    "update_estimates",
    "decide",
]


@dataclass(frozen=True)
class AgentParams:
    """Estimator and liveness knobs."""

    w_grid: tuple = DEFAULT_W_GRID
    initial_estimate: float = 0.5
    eps_dev: float = 0.3        # position deviation that triggers re-estimation [m]
    eps_r: float = 0.5          # radial slack around the driving circle [m]
    deadlock_prob: float = 0.5
    deadlock_accel: float = 10.0
    deadlock_speed_eps: float = 1e-6
    estimator_ego_uses_true_weight: bool = False
    player_cap: int = 4

    def __post_init__(self):
        if not self.w_grid or any(not 0.0 <= w <= 1.0 for w in self.w_grid):
            raise ValueError("w_grid must be non-empty with weights in [0, 1]")
        if list(self.w_grid) != sorted(self.w_grid):
            raise ValueError("w_grid must be ascending")
        if not 0.0 <= self.initial_estimate <= 1.0:
            raise ValueError("initial_estimate must be in [0, 1]")
        for name in ("eps_dev", "eps_r", "deadlock_speed_eps"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.deadlock_prob <= 1.0:
            raise ValueError("deadlock_prob must be a probability")
        if self.player_cap < 1:
            raise ValueError("player_cap must be at least 1")


@dataclass(frozen=True)
class ReplayInput:
    """Rollout inputs for one player, frozen at decision time."""

    path: NavigationPath
    arclen: float
    v: float
    status: Status


@dataclass
class AgentState:
    """Everything one vehicle remembers between steps."""

    vid: int
    w_agg: float
    rng: np.random.Generator
    w_hat: Dict[int, float] = field(default_factory=dict)
    est_path: Dict[int, NavigationPath] = field(default_factory=dict)
    prev_obs: Dict[int, Configuration] = field(default_factory=dict)
    pred_xy: Dict[int, tuple] = field(default_factory=dict)
    replay: Dict[int, ReplayInput] = field(default_factory=dict)
    ego_replay: Optional[ReplayInput] = None
    order_weights: Dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class DecisionResult:
    accel: float
    override: bool
    profile: Dict[int, int]     # strategy index per game participant
    order: tuple                # decision order used
    weights: Dict[int, float]   # weight table used (ego entry is its true weight)


def observe(ego_id: int, configs: Mapping[int, Configuration], geometry: Geometry,
            params: CostParams) -> Dict[int, Configuration]:
    """Ego's view: itself plus <= 2 nearest ahead and 1 behind, paths hidden.

    Vehicles that have completed their traversal (status exit) are no longer
    relevant and are excluded.  Neighbour configurations are stripped of the
    path coordinate: position, speed, and status are observable, routes are
    not.
    """
    ego = configs[ego_id]
    ahead, behind = [], []
    for vid in sorted(configs):
        if vid == ego_id:
            continue
        c = configs[vid]
        if c.status == Status.EXIT:
            continue
        fgap = (c.theta - ego.theta) % TWO_PI
        bgap = (ego.theta - c.theta) % TWO_PI
        if fgap <= math.pi:
            if math.hypot(geometry.r_in * fgap, ego.r - c.r) < params.D:
                ahead.append((fgap, vid))
        elif 0.0 < bgap < math.pi:
            if math.hypot(geometry.r_in * bgap, ego.r - c.r) < params.D:
                behind.append((bgap, vid))
    ahead.sort()
    behind.sort()
    out = {ego_id: ego}
    for _, vid in ahead[:2] + behind[:1]:
        c = configs[vid]
        out[vid] = Configuration(r=c.r, theta=c.theta, v=c.v, status=c.status)
    return out


def _wrap_pi(angle):
    return (angle + math.pi) % TWO_PI - math.pi


def _nearest_arm(theta, arm_angles):
    return min(range(len(arm_angles)), key=lambda m: abs(_wrap_pi(arm_angles[m] - theta)))


def _next_arm_ahead(theta, arm_angles, grace=0.3):
    # smallest ccw angle to an arm, allowing `grace` of overshoot for a
    # vehicle already abreast of its departure point
    return min(range(len(arm_angles)),
               key=lambda m: (arm_angles[m] - theta + grace) % TWO_PI)


def _nearest_entry(observed: Configuration, geometry: Geometry) -> NavigationPath:
    x, y = observed.xy()
    best = None
    for arm in range(geometry.spec.ways):
        for maneuver in Maneuver:
            h = geometry.entry_hypothesis(PathKind(maneuver, arm))
            s = h.project(x, y)
            rho, theta, _ = h.pose(s)
            d2 = (rho * math.cos(theta) - x) ** 2 + (rho * math.sin(theta) - y) ** 2
            if best is None or d2 < best[0] - 1e-12:
                best = (d2, h)
    return best[1]


def estimate_path(observed: Configuration, geometry: Geometry,
                  prev: Optional[Configuration] = None,
                  eps_r: float = 0.5) -> NavigationPath:
    """Hypothesis path for an observed vehicle.

    Entering vehicles are matched to the nearest entry geometry; vehicles on
    the driving circle are assumed to circulate until contradicted; a vehicle
    drifting radially outward (needs the previous observation, ``prev``) is
    assumed to exit at the next arm ahead.
    """
    if observed.status == Status.EXIT:
        return geometry.exit_hypothesis(_nearest_arm(observed.theta, geometry.arm_angles))
    if observed.status == Status.ENTER:
        return _nearest_entry(observed, geometry)
    if observed.r <= geometry.r_in + eps_r:
        return geometry.circle_hypothesis()
    if prev is not None and observed.r > prev.r + 1e-9:
        return geometry.exit_hypothesis(_next_arm_ahead(observed.theta, geometry.arm_angles))
    return _nearest_entry(observed, geometry)


def _rollout_cached(ri: ReplayInput, strategies, delta, diameter, cache) -> Rollout:
    key = ("roll", id(ri.path), ri.arclen, ri.v, int(ri.status))
    hit = cache.get(key)
    if hit is None:
        hit = rollout(ri.path, ri.arclen, ri.v, ri.status, strategies, delta, diameter)
        cache[key] = hit
    return hit


def _project_cached(path, x, y, cache):
    key = ("proj", id(path), x, y)
    s = cache.get(key)
    if s is None:
        s = path.project(x, y)
        cache[key] = s
    return s


def decide(state: AgentState, obs: Mapping[int, Configuration], ego_path: NavigationPath,
           geometry: Geometry, cost_params: CostParams, game_params: GameParams,
           agent_params: AgentParams, delta: float, cache: Optional[dict] = None,
           diameter: float = VEHICLE_DIAMETER) -> DecisionResult:
    """One decision round for ``state.vid`` given its observation ``obs``."""
    if cache is None:
        cache = {}
    ego_id = state.vid
    ego = obs[ego_id]
    ids = sorted(obs)
    if len(ids) > agent_params.player_cap:
        ranked = sorted((min((obs[j].theta - ego.theta) % TWO_PI,
                             (ego.theta - obs[j].theta) % TWO_PI), j)
                        for j in ids if j != ego_id)
        keep = {ego_id} | {j for _, j in ranked[:agent_params.player_cap - 1]}
        ids = sorted(keep)

    weights = {vid: state.w_agg if vid == ego_id
               else state.w_hat.get(vid, agent_params.initial_estimate)
               for vid in ids}
    strategies = game_params.strategies()
    trajs, inputs = [], {}
    for vid in ids:
        if vid == ego_id:
            ri = ReplayInput(ego_path, ego.arclen, ego.v, ego.status)
        else:
            path = state.est_path.get(vid)
            if path is None:
                path = estimate_path(obs[vid], geometry, eps_r=agent_params.eps_r)
                state.est_path[vid] = path
            x, y = obs[vid].xy()
            ri = ReplayInput(path, _project_cached(path, x, y, cache),
                             obs[vid].v, obs[vid].status)
        inputs[vid] = ri
        trajs.append(_rollout_cached(ri, strategies, delta, diameter, cache))

    costs, _, _ = payoff_tensors(trajs, [weights[v] for v in ids], cost_params,
                                 geometry.r_in)
    axis_of = {vid: k for k, vid in enumerate(ids)}
    order = tuple(order_players(weights))
    prof, _ = tensor_equilibrium(costs, [axis_of[v] for v in order])
    profile = {vid: prof[axis_of[vid]] for vid in ids}
    accel = float(strategies[profile[ego_id], 0])

    override = False
    if all(obs[v].v < agent_params.deadlock_speed_eps for v in obs):
        draw = state.rng.random()  # consumed whenever everyone is stopped
        yielding = ego.status == Status.ENTER and any(
            obs[j].status == Status.INSIDE for j in obs if j != ego_id)
        if draw < agent_params.deadlock_prob and not yielding:
            accel = agent_params.deadlock_accel
            override = True

    # freeze what the estimator needs to check and replay this decision
    state.ego_replay = inputs[ego_id]
    state.replay = {v: inputs[v] for v in ids if v != ego_id}
    state.order_weights = dict(weights)
    state.pred_xy = {}
    for vid in ids:
        if vid == ego_id:
            continue
        ri = inputs[vid]
        rho0, theta0, _ = ri.path.pose(ri.arclen)
        bound = Configuration(r=rho0, theta=theta0, v=ri.v, status=ri.status,
                              arclen=ri.arclen)
        nxt = step(bound, float(strategies[profile[vid], 0]), delta, ri.path, diameter)
        state.pred_xy[vid] = nxt.xy()
    return DecisionResult(accel=accel, override=override, profile=profile,
                          order=order, weights=weights)


def _reestimate(state: AgentState, j: int, obs_j: Configuration,
                cost_params: CostParams, game_params: GameParams,
                agent_params: AgentParams, delta: float, diameter: float,
                cache: dict) -> float:
    """Replay last step's two-player game per candidate weight; pick the best fit."""
    ri_e, ri_j = state.ego_replay, state.replay[j]
    strategies = game_params.strategies()
    ids = sorted((state.vid, j))
    rolls = {state.vid: _rollout_cached(ri_e, strategies, delta, diameter, cache),
             j: _rollout_cached(ri_j, strategies, delta, diameter, cache)}
    trajs = [rolls[v] for v in ids]
    _, safe, speed = payoff_tensors(trajs, [0.0, 0.0], cost_params, ri_e.path.r_in)
    axis_of = {vid: k for k, vid in enumerate(ids)}
    order_axes = [axis_of[v] for v in order_players(
        {v: state.order_weights[v] for v in ids})]
    v_prev = ri_j.v
    a_obs = (obs_j.v - v_prev) / delta
    prev_est = state.w_hat[j]
    best = None
    for w in agent_params.w_grid:
        w_ego = state.w_agg if agent_params.estimator_ego_uses_true_weight else w
        wt = {state.vid: w_ego, j: w}
        costs = [(1.0 - wt[ids[k]]) * safe[k] + wt[ids[k]] * speed[k] for k in range(2)]
        prof, _ = tensor_equilibrium(costs, order_axes)
        v1 = float(rolls[j].v[prof[axis_of[j]], 1])
        err = abs((v1 - v_prev) / delta - a_obs)
        key = (err, abs(w - prev_est), w)
        if best is None or key < best[0]:
            best = (key, w)
    return best[1]


def update_estimates(state: AgentState, obs: Mapping[int, Configuration],
                     geometry: Geometry, cost_params: CostParams,
                     game_params: GameParams, agent_params: AgentParams,
                     delta: float, cache: Optional[dict] = None,
                     diameter: float = VEHICLE_DIAMETER) -> None:
    """Reconcile predictions with observations before deciding this step."""
    if cache is None:
        cache = {}
    ego_id = state.vid
    for vid in obs:
        if vid == ego_id:
            continue
        c = obs[vid]
        if vid not in state.w_hat:
            state.w_hat[vid] = agent_params.initial_estimate
            state.est_path[vid] = estimate_path(c, geometry, eps_r=agent_params.eps_r)
            continue
        pred = state.pred_xy.get(vid)
        if pred is None:
            if vid not in state.est_path:
                state.est_path[vid] = estimate_path(
                    c, geometry, prev=state.prev_obs.get(vid), eps_r=agent_params.eps_r)
            continue
        x, y = c.xy()
        if math.hypot(x - pred[0], y - pred[1]) > agent_params.eps_dev:
            if vid in state.replay and state.ego_replay is not None:
                state.w_hat[vid] = _reestimate(state, vid, c, cost_params, game_params,
                                               agent_params, delta, diameter, cache)
            state.est_path[vid] = estimate_path(
                c, geometry, prev=state.prev_obs.get(vid), eps_r=agent_params.eps_r)
    state.prev_obs = {vid: obs[vid] for vid in obs if vid != ego_id}
