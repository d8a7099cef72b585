"""World model: scenarios, kinematics, pedestrians, occupancy, attention,
rendering, and episode rollouts."""

import json
import math

import numpy as np
import pytest

from vilad import sim
from vilad.costmap import Frame, Role
from vilad.planner import PlannerConfig, VelocityCommand
from vilad.sim import (
    AttentionMode,
    Box,
    EpisodeStatus,
    OccupancyGrid,
    PedestrianSpec,
    ScenarioSpec,
    Segment,
    TerminalStateError,
    WorldState,
    advance_pose,
    bundled_scenario,
    initial_state,
    jitter_scenario,
    run_episode,
    step,
    synth_attention,
)


def simple_scenario(**kw):
    defaults = dict(name="t", bounds=(-2.0, -4.0, 10.0, 4.0),
                    robot_start=(0.0, 0.0, 0.0), goal=(5.0, 0.0), time_limit=10.0)
    defaults.update(kw)
    return ScenarioSpec(**defaults)


class TestScenarioSpec:
    def test_bundled_scenarios_load(self):
        for name in ("scen1", "scen2", "scen3", "scen4"):
            scen = bundled_scenario(name)
            assert scen.name == name
            assert len(scen.bounds) == 4

    def test_round_trip_identity(self, tmp_path):
        scen = bundled_scenario("scen2")
        path = tmp_path / "s.json"
        sim.save_scenario(scen, path)
        again = sim.load_scenario(path)
        assert again == scen

    def test_round_trip_is_fixed_point(self, tmp_path):
        scen = bundled_scenario("scen3")
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        sim.save_scenario(scen, p1)
        sim.save_scenario(sim.load_scenario(p1), p2)
        assert p1.read_text() == p2.read_text()

    def test_curb_is_hidden_from_lidar(self):
        scen = bundled_scenario("scen2")
        hidden = [b for b in scen.boxes if not b.lidar_visible]
        assert len(hidden) == 1
        occ = OccupancyGrid.from_scenario(scen)
        occ_all = OccupancyGrid.from_scenario(scen, include_hidden=True)
        cx, cy = hidden[0].center
        assert not occ.disc_collides(cx, cy, 0.05)
        assert occ_all.disc_collides(cx, cy, 0.05)


class TestGeometry:
    def test_box_distance(self):
        b = Box(1.0, 1.0, 3.0, 2.0)
        assert b.distance_to(2.0, 1.5) == 0.0  # inside
        assert b.distance_to(0.0, 1.5) == pytest.approx(1.0)
        assert b.distance_to(4.0, 3.0) == pytest.approx(math.hypot(1.0, 1.0))

    def test_segment_distance(self):
        s = Segment(0.0, 0.0, 2.0, 0.0)
        assert s.distance_to(1.0, 0.5) == pytest.approx(0.5)
        assert s.distance_to(3.0, 0.0) == pytest.approx(1.0)
        assert s.distance_to(-1.0, -1.0) == pytest.approx(math.hypot(1.0, 1.0))


class TestAdvancePose:
    def test_straight(self):
        x, y, th = advance_pose((0.0, 0.0, 0.0), VelocityCommand(1.0, 0.0), 0.5)
        assert (x, y, th) == (pytest.approx(0.5), 0.0, 0.0)

    def test_quarter_circle(self):
        pose = (0.0, 0.0, 0.0)
        # v = omega = 1: unit-radius left turn; integrate a quarter turn
        for _ in range(100):
            pose = advance_pose(pose, VelocityCommand(1.0, 1.0), math.pi / 200.0)
        assert pose[0] == pytest.approx(1.0, abs=1e-9)
        assert pose[1] == pytest.approx(1.0, abs=1e-9)
        assert pose[2] == pytest.approx(math.pi / 2.0, abs=1e-9)

    def test_exact_arc_independent_of_substepping(self):
        one = advance_pose((1.0, -1.0, 0.3), VelocityCommand(0.8, 0.6), 1.0)
        many = (1.0, -1.0, 0.3)
        for _ in range(10):
            many = advance_pose(many, VelocityCommand(0.8, 0.6), 0.1)
        assert one[0] == pytest.approx(many[0], abs=1e-12)
        assert one[1] == pytest.approx(many[1], abs=1e-12)


class TestPedestrians:
    def test_delay_holds_position(self):
        spec = PedestrianSpec(start=(1.0, 1.0), waypoints=((1.0, 5.0),),
                              speed=1.0, delay=2.0)
        s = sim._ped_state_at(spec, 1.0)
        assert (s.x, s.y, s.vx, s.vy) == (1.0, 1.0, 0.0, 0.0)

    def test_constant_speed_along_path(self):
        spec = PedestrianSpec(start=(0.0, 0.0), waypoints=((3.0, 0.0), (3.0, 4.0)),
                              speed=1.0, delay=0.0)
        s = sim._ped_state_at(spec, 2.0)
        assert (s.x, s.y) == (pytest.approx(2.0), 0.0)
        assert (s.vx, s.vy) == (pytest.approx(1.0), 0.0)
        s = sim._ped_state_at(spec, 5.0)  # two metres up the second leg
        assert (s.x, s.y) == (pytest.approx(3.0), pytest.approx(2.0))
        assert (s.vx, s.vy) == (0.0, pytest.approx(1.0))

    def test_stops_at_final_waypoint(self):
        spec = PedestrianSpec(start=(0.0, 0.0), waypoints=((2.0, 0.0),), speed=1.0)
        s = sim._ped_state_at(spec, 100.0)
        assert (s.x, s.y, s.vx, s.vy) == (2.0, 0.0, 0.0, 0.0)

    def test_zero_speed_sits(self):
        spec = PedestrianSpec(start=(1.0, 2.0), waypoints=((1.0, 2.0),), speed=0.0)
        s = sim._ped_state_at(spec, 50.0)
        assert (s.x, s.y) == (1.0, 2.0)


class TestStep:
    def test_goal_detection(self):
        scen = simple_scenario(robot_start=(4.8, 0.0, 0.0))
        state = initial_state(scen)
        state = step(state, VelocityCommand(1.0, 0.0), 0.1)
        assert state.status == EpisodeStatus.REACHED_GOAL

    def test_collision_with_box(self):
        scen = simple_scenario(boxes=(Box(0.5, -1.0, 1.0, 1.0),))
        state = initial_state(scen)
        state = step(state, VelocityCommand(1.0, 0.0), 0.2)
        assert state.status == EpisodeStatus.COLLISION

    def test_bounds_are_walls(self):
        scen = simple_scenario(robot_start=(9.5, 0.0, 0.0), goal=(-50.0, 0.0))
        state = initial_state(scen)
        state = step(state, VelocityCommand(1.0, 0.0), 0.5)
        assert state.status == EpisodeStatus.COLLISION

    def test_timeout(self):
        scen = simple_scenario(time_limit=0.2)
        state = initial_state(scen)
        state = step(state, VelocityCommand(0.0, 0.0), 0.1)
        assert state.status == EpisodeStatus.RUNNING
        state = step(state, VelocityCommand(0.0, 0.0), 0.1)
        assert state.status == EpisodeStatus.TIMEOUT

    def test_terminal_state_cannot_step(self):
        scen = simple_scenario(time_limit=0.1)
        state = step(initial_state(scen), VelocityCommand(0.0, 0.0), 0.1)
        with pytest.raises(TerminalStateError):
            step(state, VelocityCommand(0.0, 0.0), 0.1)

    def test_check_flags_disable_termination(self):
        scen = simple_scenario(boxes=(Box(0.5, -1.0, 1.0, 1.0),), time_limit=0.1)
        state = initial_state(scen)
        state = step(state, VelocityCommand(1.0, 0.0), 0.2, check_goal=False,
                     check_collision=False, check_timeout=False)
        assert state.status == EpisodeStatus.RUNNING

    def test_pedestrian_collision(self):
        scen = simple_scenario(
            pedestrians=(PedestrianSpec(start=(0.6, 0.0), waypoints=((0.6, 0.0),),
                                        speed=0.0),))
        state = step(initial_state(scen), VelocityCommand(0.0, 0.0), 0.1)
        assert state.status == EpisodeStatus.COLLISION


class TestOccupancy:
    def test_rasterizes_boxes(self):
        scen = simple_scenario(boxes=(Box(2.0, -1.0, 3.0, 1.0),))
        occ = OccupancyGrid.from_scenario(scen)
        assert occ.disc_collides(2.5, 0.0, 0.1)
        assert not occ.disc_collides(6.0, 0.0, 0.1)

    def test_dilation_is_conservative(self):
        scen = simple_scenario(boxes=(Box(2.0, -1.0, 3.0, 1.0),))
        occ = OccupancyGrid.from_scenario(scen)
        # a disc of radius r centred within r of the box face must collide
        assert occ.disc_collides(1.75, 0.0, 0.3)
        # well clear of the dilation reach it must not
        assert not occ.disc_collides(1.0, 0.0, 0.3)

    def test_outside_bounds_collides(self):
        occ = OccupancyGrid.from_scenario(simple_scenario())
        assert occ.disc_collides(-3.0, 0.0, 0.3)

    def test_hidden_obstacles_excluded(self):
        scen = simple_scenario(boxes=(Box(2.0, -1.0, 3.0, 1.0, lidar_visible=False),))
        occ = OccupancyGrid.from_scenario(scen)
        assert not occ.disc_collides(2.5, 0.0, 0.3)

    def test_segments_rasterized(self):
        scen = simple_scenario(segments=(Segment(2.0, -1.0, 2.0, 1.0),))
        occ = OccupancyGrid.from_scenario(scen)
        assert occ.disc_collides(2.0, 0.0, 0.2)


class TestSynthAttention:
    def test_empty_scene_all_zero(self):
        scen = simple_scenario()
        state = initial_state(scen)
        m = synth_attention(state, sim.default_camera())
        assert m.values.sum() == 0.0

    def test_output_is_valid_map(self):
        state = initial_state(bundled_scenario("scen1"))
        for mode in AttentionMode:
            m = synth_attention(state, sim.default_camera(), mode)
            assert m.frame == Frame.IMAGE
            assert 0.0 <= m.values.min() and m.values.max() <= 1.0

    def test_social_mode_covers_more_cells(self):
        scen = simple_scenario(
            pedestrians=(PedestrianSpec(start=(4.0, 2.0), waypoints=((4.0, -3.0),),
                                        speed=1.0, delay=0.0),))
        state = step(initial_state(scen), VelocityCommand(0.0, 0.0), 0.5,
                     check_goal=False)
        cam = sim.default_camera()
        pre = synth_attention(state, cam, AttentionMode.PRETRAINED_LIKE)
        soc = synth_attention(state, cam, AttentionMode.GROUND_TRUTH_SOCIAL)
        assert (soc.values > 0.05).sum() > (pre.values > 0.05).sum()

    def test_stationary_pedestrian_modes_agree(self):
        scen = simple_scenario(
            pedestrians=(PedestrianSpec(start=(4.0, 1.0), waypoints=((4.0, 1.0),),
                                        speed=0.0),))
        state = initial_state(scen)
        cam = sim.default_camera()
        pre = synth_attention(state, cam, AttentionMode.PRETRAINED_LIKE)
        soc = synth_attention(state, cam, AttentionMode.GROUND_TRUTH_SOCIAL)
        assert np.allclose(pre.values, soc.values)

    def test_roles(self):
        state = initial_state(bundled_scenario("scen1"))
        cam = sim.default_camera()
        assert synth_attention(state, cam, AttentionMode.PRETRAINED_LIKE).role == Role.PRETRAINED
        assert synth_attention(state, cam, AttentionMode.GROUND_TRUTH_SOCIAL).role == Role.SYNTHETIC


class TestRenderFrame:
    def test_empty_scene_is_pure_gradient(self):
        frame = sim.render_frame(initial_state(simple_scenario()), sim.default_camera())
        # every row is constant (sky/ground gradients have no horizontal texture)
        px = frame.pixels
        assert np.all(px == px[:, :1, :])

    def test_obstacles_paint_pixels(self):
        scen = simple_scenario(boxes=(Box(2.0, -0.5, 3.0, 0.5, height=0.5),))
        base = sim.render_frame(initial_state(simple_scenario()), sim.default_camera())
        with_box = sim.render_frame(initial_state(scen), sim.default_camera())
        assert not np.array_equal(base.pixels, with_box.pixels)

    def test_lighting_darkens(self):
        state = initial_state(simple_scenario())
        bright = sim.render_frame(state, sim.default_camera(), lighting=1.0)
        dark = sim.render_frame(state, sim.default_camera(), lighting=0.5)
        assert dark.pixels.mean() < bright.pixels.mean()


class TestJitter:
    def test_seeded_and_deterministic(self):
        scen = bundled_scenario("scen1")
        a = jitter_scenario(scen, 3)
        b = jitter_scenario(scen, 3)
        c = jitter_scenario(scen, 4)
        assert a == b
        assert a != c

    def test_only_pedestrians_change(self):
        scen = bundled_scenario("scen1")
        j = jitter_scenario(scen, 1)
        assert j.boxes == scen.boxes
        assert j.robot_start == scen.robot_start
        assert j.pedestrians != scen.pedestrians


class TestRunEpisode:
    def test_full_determinism(self):
        scen = bundled_scenario("scen1")
        a = run_episode(scen, "synth:ground_truth_social", seed=1)
        b = run_episode(scen, "synth:ground_truth_social", seed=1)
        assert a.status == b.status
        assert a.trajectory == b.trajectory

    def test_goal_only_reaches_goal_in_open_world(self):
        scen = simple_scenario(time_limit=30.0)
        result = run_episode(scen, "goal_only", seed=0)
        assert result.status == EpisodeStatus.REACHED_GOAL
        assert result.time_to_goal is not None

    def test_wall_across_goal_line_never_collides(self):
        # occupancy-visible wall with no gap: safe terminal, never collision
        scen = simple_scenario(
            boxes=(Box(3.0, -4.0, 3.4, 4.0),), time_limit=8.0)
        for policy in ("goal_only", "synth:pretrained_like"):
            result = run_episode(scen, policy, seed=0)
            assert result.status != EpisodeStatus.COLLISION

    def test_teleop_policy_follows_source(self):
        scen = simple_scenario(goal=(50.0, 0.0), bounds=(-2.0, -4.0, 60.0, 4.0),
                               time_limit=2.0)
        result = run_episode(scen, "teleop", teleop_source=lambda t: (1.0, 0.0),
                             jitter=False)
        assert result.status == EpisodeStatus.TIMEOUT
        t, x, y, th, v, w = result.trajectory[-1]
        assert x == pytest.approx(2.0, abs=1e-9)
        assert y == 0.0

    def test_unknown_policy_rejected(self):
        with pytest.raises(ValueError):
            run_episode(simple_scenario(), "wat", seed=0)

    def test_trajectory_csv_round_trip(self, tmp_path):
        scen = simple_scenario(time_limit=1.0)
        result = run_episode(scen, "goal_only", seed=0)
        path = tmp_path / "traj.csv"
        result.write_trajectory_csv(path)
        rows = sim.read_trajectory_csv(path)
        assert len(rows) == len(result.trajectory)
        for got, want in zip(rows, result.trajectory):
            assert got == pytest.approx(want, abs=1e-9)

    def test_result_json_round_trip(self):
        scen = simple_scenario(time_limit=1.0)
        result = run_episode(scen, "goal_only", seed=0)
        d = json.loads(json.dumps(result.to_dict()))
        again = sim.EpisodeResult.from_dict(d)
        assert again.status == result.status
        assert again.trajectory == pytest.approx(result.trajectory)
        assert again.scenario == result.scenario
