"""Observation windows, path/aggressiveness estimation, and decisions."""

import math

import numpy as np
import pytest

from roundabout_sim.agent import (
    AgentParams,
    AgentState,
    decide,
    estimate_path,
    observe,
    update_estimates,
)
from roundabout_sim.cost import CostParams
from roundabout_sim.dynamics import Configuration
from roundabout_sim.game import GameParams
from roundabout_sim.geometry import (
    Maneuver,
    PathKind,
    RoundaboutSpec,
    Status,
    build_roundabout,
)

P = CostParams()
GP = GameParams()
AP = AgentParams()
DELTA = 0.25


@pytest.fixture(scope="module")
def geom():
    return build_roundabout(RoundaboutSpec())


def on_circle(theta, v=5.0, status=Status.INSIDE, r=20.0, arclen=None):
    return Configuration(r=r, theta=theta, v=v, status=status, arclen=arclen)


def fresh_state(vid=0, w=0.5, seed=0):
    return AgentState(vid=vid, w_agg=w, rng=np.random.default_rng(seed))


class TestObserve:
    def test_windows_two_ahead_one_behind(self, geom):
        configs = {
            0: on_circle(0.0),
            1: on_circle(0.3),   # ahead, nearest
            2: on_circle(0.6),   # ahead, second
            3: on_circle(0.9),   # ahead, third -> dropped
            4: on_circle(-0.4 % (2 * math.pi)),  # behind, nearest
            5: on_circle(-0.7 % (2 * math.pi)),  # behind, second -> dropped
        }
        obs = observe(0, configs, geom, P)
        assert sorted(obs) == [0, 1, 2, 4]

    def test_exited_vehicles_invisible(self, geom):
        configs = {
            0: on_circle(0.0),
            1: on_circle(0.3, status=Status.EXIT, r=22.0),
            2: on_circle(0.6),
        }
        obs = observe(0, configs, geom, P)
        assert sorted(obs) == [0, 2]

    def test_out_of_range_excluded(self, geom):
        # same-lane gap r_in * 1.6 = 32 m >= D = 30
        configs = {0: on_circle(0.0), 1: on_circle(1.6)}
        assert sorted(observe(0, configs, geom, P)) == [0]
        configs = {0: on_circle(0.0), 1: on_circle(1.4)}
        assert sorted(observe(0, configs, geom, P)) == [0, 1]

    def test_radial_offset_counts_against_range(self, geom):
        # nearly abreast in angle but far out on an approach lane:
        # hypot(20*0.05, 30.5) = 30.5 m >= D, hypot(20*0.05, 25) = 25 m < D
        far = {0: on_circle(0.0), 1: on_circle(0.05, status=Status.ENTER, r=50.5)}
        assert sorted(observe(0, far, geom, P)) == [0]
        near = {0: on_circle(0.0), 1: on_circle(0.05, status=Status.ENTER, r=45.0)}
        assert sorted(observe(0, near, geom, P)) == [0, 1]

    def test_neighbour_paths_hidden(self, geom):
        configs = {0: on_circle(0.0, arclen=12.0), 1: on_circle(0.3, arclen=7.0)}
        obs = observe(0, configs, geom, P)
        assert obs[0].arclen == 12.0      # ego knows its own path coordinate
        assert obs[1].arclen is None      # the neighbour's is not observable

class TestEstimatePath:
    def test_entering_vehicle_matched_to_entry_geometry(self, geom):
        path = geom.path(PathKind(Maneuver.TURN_LEFT, 1))
        rho, theta, status = path.pose(15.0)
        assert status == Status.ENTER
        cfg = Configuration(r=rho, theta=theta, v=5.0, status=status)
        hyp = estimate_path(cfg, geom)
        s = hyp.project(*cfg.xy())
        hr, ht, _ = hyp.pose(s)
        assert math.hypot(hr * math.cos(ht) - cfg.xy()[0],
                          hr * math.sin(ht) - cfg.xy()[1]) < 1e-6

    def test_on_circle_assumed_to_circulate(self, geom):
        hyp = estimate_path(on_circle(1.0), geom)
        assert hyp.endless
        r, _, status = hyp.pose(37.0)
        assert r == pytest.approx(20.0)
        assert status == Status.INSIDE

    def test_outward_drift_reads_as_exit_at_next_arm(self, geom):
        prev = on_circle(1.4, r=20.6)
        cur = on_circle(1.5, r=21.4)
        hyp = estimate_path(cur, geom, prev=prev)
        assert not hyp.endless
        assert hyp.exit_arm == 1  # next arm ahead of theta=1.5 is pi/2... with grace
        r_end, _, st_end = hyp.pose(hyp.total_length)
        assert st_end == Status.EXIT and r_end > 20.0

    def test_exited_vehicle_gets_exit_path_at_nearest_arm(self, geom):
        cfg = Configuration(r=24.0, theta=math.pi / 2 + 0.1, v=5.0, status=Status.EXIT)
        hyp = estimate_path(cfg, geom)
        assert hyp.exit_arm == 1


class TestUpdateEstimates:
    def test_new_neighbour_initialised(self, geom):
        state = fresh_state(vid=0)
        obs = {0: on_circle(0.0, arclen=10.0), 1: on_circle(0.3)}
        update_estimates(state, obs, geom, P, GP, AP, DELTA)
        assert state.w_hat == {1: 0.5}
        assert 1 in state.est_path
        assert state.prev_obs == {1: obs[1]}

    def test_estimate_kept_while_prediction_holds(self, geom):
        state = fresh_state(vid=0)
        obs = {0: on_circle(0.0, arclen=10.0), 1: on_circle(0.3)}
        update_estimates(state, obs, geom, P, GP, AP, DELTA)
        # pretend last step predicted exactly where the neighbour now is
        state.pred_xy[1] = obs[1].xy()
        update_estimates(state, obs, geom, P, GP, AP, DELTA)
        assert state.w_hat[1] == 0.5

    def test_deviation_triggers_reestimate_onto_grid(self, geom):
        state = fresh_state(vid=0)
        circle = geom.circle_hypothesis()
        obs0 = {0: on_circle(0.0, arclen=0.0), 1: on_circle(0.5, v=4.0)}
        update_estimates(state, obs0, geom, P, GP, AP, DELTA)
        decide(state, obs0, circle, geom, P, GP, AP, DELTA)
        # neighbour shows up somewhere else entirely, moving faster
        obs1 = {0: on_circle(0.05, arclen=1.0), 1: on_circle(0.8, v=9.0)}
        update_estimates(state, obs1, geom, P, GP, AP, DELTA)
        assert state.w_hat[1] in AP.w_grid


class TestDecide:
    def test_lone_slow_vehicle_floors_it(self, geom):
        state = fresh_state(vid=3)
        obs = {3: on_circle(2.0, v=1.0, arclen=40.0)}
        d = decide(state, obs, geom.circle_hypothesis(), geom, P, GP, AP, DELTA)
        assert d.accel == 30.0
        assert not d.override
        assert d.order == (3,)

    def test_deterministic_given_equal_state(self, geom):
        obs = {0: on_circle(0.0, v=6.0, arclen=10.0),
               1: on_circle(0.4, v=3.0),
               2: on_circle(5.9, v=7.0)}
        results = []
        for _ in range(2):
            state = fresh_state(vid=0, seed=7)
            results.append(decide(state, dict(obs), geom.circle_hypothesis(),
                                  geom, P, GP, AP, DELTA))
        assert results[0] == results[1]

    def test_player_cap_keeps_angular_nearest(self, geom):
        obs = {0: on_circle(0.0, arclen=10.0),
               1: on_circle(0.2), 2: on_circle(0.5), 3: on_circle(1.1),
               4: on_circle(6.0)}
        d = decide(fresh_state(vid=0), obs, geom.circle_hypothesis(),
                   geom, P, GP, AP, DELTA)
        # cap 4: ego + gaps 0.2, 0.28 (ccw 6.0), 0.5; vehicle 3 is trimmed
        assert sorted(d.weights) == [0, 1, 2, 4]
        assert sorted(d.profile) == [0, 1, 2, 4]

    def test_ego_plays_true_weight_neighbours_estimates(self, geom):
        state = fresh_state(vid=0, w=0.7)
        state.w_hat[1] = 0.2
        obs = {0: on_circle(0.0, arclen=10.0), 1: on_circle(0.4)}
        d = decide(state, obs, geom.circle_hypothesis(), geom, P, GP, AP, DELTA)
        assert d.weights == {0: 0.7, 1: 0.2}
        assert d.order == (0, 1)  # higher weight decides first

    def test_replay_snapshot_frozen(self, geom):
        state = fresh_state(vid=0)
        obs = {0: on_circle(0.0, v=6.0, arclen=10.0), 1: on_circle(0.4, v=3.0)}
        decide(state, obs, geom.circle_hypothesis(), geom, P, GP, AP, DELTA)
        assert state.ego_replay is not None and state.ego_replay.v == 6.0
        assert set(state.replay) == {1}
        assert set(state.pred_xy) == {1}
        assert set(state.order_weights) == {0, 1}


class TestDeadlockOverride:
    def stopped_obs(self, ego_status=Status.INSIDE, other_status=Status.INSIDE):
        ego = Configuration(r=20.0, theta=0.0, v=0.0, status=ego_status, arclen=10.0)
        other = Configuration(r=20.0, theta=0.4, v=0.0, status=other_status)
        return {0: ego, 1: other}

    def test_coin_decides_and_is_consumed(self, geom):
        for seed in range(6):
            state = fresh_state(vid=0, seed=seed)
            twin = np.random.default_rng(seed)
            d = decide(state, self.stopped_obs(), geom.circle_hypothesis(),
                       geom, P, GP, AP, DELTA)
            assert d.override == (twin.random() < AP.deadlock_prob)
            if d.override:
                assert d.accel == AP.deadlock_accel
            # exactly one draw was consumed either way
            assert state.rng.random() == twin.random()

    def test_entering_vehicle_yields_to_circulating(self, geom):
        # seed 2 wins its coin flip, but an entering ego must keep waiting
        state = fresh_state(vid=0, seed=2)
        assert np.random.default_rng(2).random() < AP.deadlock_prob
        obs = self.stopped_obs(ego_status=Status.ENTER)
        path = geom.path(PathKind(Maneuver.GO_STRAIGHT, 0))
        d = decide(state, obs, path, geom, P, GP, AP, DELTA)
        assert not d.override
        # the draw still happened, keeping streams aligned across branches
        assert state.rng.random() == np.random.default_rng(2).random(2)[1]

    def test_no_draw_while_anyone_moves(self, geom):
        state = fresh_state(vid=0, seed=2)
        obs = self.stopped_obs()
        obs[1] = Configuration(r=20.0, theta=0.4, v=2.0, status=Status.INSIDE)
        decide(state, obs, geom.circle_hypothesis(), geom, P, GP, AP, DELTA)
        assert state.rng.random() == np.random.default_rng(2).random()
