import numpy as np
import pytest

from attack.engine import (
    AttackConfig,
    estimate_marker_earth,
    falsify_marker,
    falsify_sensors,
    propagate_s,
)
from config.scenario import scenario_from_dict
from harness.simulation import PlantSide, build_attack_engine, initial_state
from perception.camera import CameraModel, MarkerObservation, marker_in_camera
from tests.scenarios import SMALL_CAMERA
from utils.errors import FakeMarkerOutOfViewError
from utils.frames import CameraMount
from vehicle.dynamics import STATE_DIM, VehicleParams, hover_command, level_state, step, step_jacobian

IDENTITY_MOUNT = CameraMount(np.eye(3), np.zeros(3))
PARAMS = VehicleParams()
DT = 0.02


def _config(**attack):
    settings = {"enabled": True, "start_step": 0}
    settings.update(attack)
    return scenario_from_dict({"camera": SMALL_CAMERA, "attack": settings})


def _first_packet(config):
    return PlantSide(config, seed=5).sense()


class TestPrimitives:
    def test_zero_deviation_stays_zero(self):
        x = level_state([0.0, 0.0, 3.0])
        s = propagate_s(np.zeros(STATE_DIM), x, hover_command(PARAMS), lambda z, u: step(z, u, DT, PARAMS))
        np.testing.assert_array_equal(s, 0.0)

    def test_linear_transition_maps_deviation(self, rng):
        matrix = rng.normal(size=(STATE_DIM, STATE_DIM))
        s = rng.normal(size=STATE_DIM)
        out = propagate_s(s, rng.normal(size=STATE_DIM), np.zeros(4), lambda z, u: matrix @ z)
        np.testing.assert_allclose(out, matrix @ s, atol=1e-12)

    def test_small_deviation_follows_step_jacobian(self):
        x = level_state([0.0, 0.0, 3.0], [0.5, 0.0, 0.0])
        u = hover_command(PARAMS) * 1.02
        s = np.eye(STATE_DIM)[6] * 1e-6
        out = propagate_s(s, x, u, lambda z, v: step(z, v, DT, PARAMS))
        np.testing.assert_allclose(out, step_jacobian(x, u, DT, PARAMS) @ s, rtol=1e-4, atol=1e-14)

    def test_deviation_tracks_twin_trajectories(self):
        # the fake state x - s must follow the model from the fake start
        transition = lambda z, v: step(z, v, DT, PARAMS)
        x = level_state([0.0, 0.0, 5.0])
        s = np.eye(STATE_DIM)[6] * 0.01
        fake = x - s
        u = hover_command(PARAMS) * 1.01
        for _ in range(20):
            s = propagate_s(s, x, u, transition)
            x = transition(x, u)
            fake = transition(fake, u)
        np.testing.assert_allclose(x - s, fake, atol=1e-12)

    def test_falsify_sensors_shifts_measurement(self):
        y = np.arange(STATE_DIM, dtype=float)
        s = np.full(STATE_DIM, 0.1)
        np.testing.assert_allclose(falsify_sensors(y, level_state([1.0, 2.0, 3.0]), s), y - 0.1, atol=1e-12)

    def test_falsify_marker_projects_from_fake_state(self):
        camera = CameraModel(height=1200, mount=IDENTITY_MOUNT)
        s = np.zeros(STATE_DIM)
        s[:3] = [0.0, 1.0, 2.0]
        fake = falsify_marker(np.zeros(STATE_DIM), s, np.zeros(3), camera, 0.5, step=7)
        np.testing.assert_allclose(fake.point_camera, [0.0, 1.0, 2.0])
        np.testing.assert_allclose(fake.observation.center, [0.0, 400.0])
        assert fake.observation.side == pytest.approx(200.0)
        assert fake.observation.step == 7

    def test_falsify_marker_out_of_view(self):
        camera = CameraModel(mount=IDENTITY_MOUNT)
        s = np.zeros(STATE_DIM)
        s[:3] = [0.0, 1.0, 2.0]
        with pytest.raises(FakeMarkerOutOfViewError):
            falsify_marker(np.zeros(STATE_DIM), s, np.zeros(3), camera, 0.5)
        s[:3] = [0.0, 0.0, -1.0]
        with pytest.raises(FakeMarkerOutOfViewError):
            falsify_marker(np.zeros(STATE_DIM), s, np.zeros(3), camera, 0.5)

    def test_estimate_marker_earth_from_detection(self):
        camera = CameraModel()
        obs = MarkerObservation(np.zeros(2), 80.0, True)
        estimate = level_state([1.0, 2.0, 5.0])
        np.testing.assert_allclose(estimate_marker_earth(obs, estimate, camera, 0.5), [1.0, 2.0, 0.0], atol=1e-12)
        offset = MarkerObservation(np.array([160.0, 0.0]), 80.0, True)
        np.testing.assert_allclose(estimate_marker_earth(offset, estimate, camera, 0.5), [2.0, 2.0, 0.0], atol=1e-12)

    @pytest.mark.parametrize("kwargs", [
        {"mode": "replay"},
        {"stop_rule": "never"},
        {"s0": np.zeros(3)},
        {"alpha": 0.0},
        {"start_step": -1},
        {"image_only_direction": np.zeros(3)},
    ])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            AttackConfig(**kwargs)


class TestAttackEngine:
    def test_pass_through_before_start(self):
        config = _config(start_step=10)
        engine = build_attack_engine(config)
        packet = _first_packet(config)
        assert engine.on_measurement(0, packet.measurement) is packet.measurement
        assert engine.on_frame(0, packet.frame) is packet.frame
        assert not engine.falsifying
        assert engine.tracker.initialized

    def test_consistent_attack_rewrites_both_channels(self):
        config = _config()
        engine = build_attack_engine(config)
        packet = _first_packet(config)
        s0 = config.attack.s0

        y_f = engine.on_measurement(0, packet.measurement)
        assert engine.falsifying
        np.testing.assert_allclose(y_f, packet.measurement - s0, atol=1e-12)

        frame_f = engine.on_frame(0, packet.frame)
        assert frame_f is not packet.frame
        expected = marker_in_camera(engine.estimate - s0, engine.tracker.position, config.camera)
        np.testing.assert_allclose(engine.last_fake.point_camera, expected, atol=1e-12)

        u = hover_command(config.vehicle)
        s_next = propagate_s(s0, engine.estimate, u, engine.estimator.transition)
        engine.on_command(0, u)
        np.testing.assert_allclose(engine.state.s, s_next)
        assert engine.estimator.belief.step == 1

    def test_zero_deviation_is_an_identity(self):
        config = _config(s0=[0.0] * STATE_DIM)
        engine = build_attack_engine(config)
        plant = PlantSide(config, seed=2)
        for t in range(5):
            packet = plant.sense()
            assert engine.on_measurement(t, packet.measurement) is packet.measurement
            assert engine.on_frame(t, packet.frame) is packet.frame
            engine.on_command(t, hover_command(config.vehicle))
            plant.advance(hover_command(config.vehicle))
        np.testing.assert_array_equal(engine.state.s, 0.0)
        assert engine.falsifying
        assert not engine.state.stopped

    def test_marker_unavailable_stops_attack(self):
        engine = build_attack_engine(_config())
        engine.on_observation(0, MarkerObservation.invisible(0))
        assert engine.state.stopped
        assert engine.state.stop_reason == "marker_unavailable"
        assert engine.state.stop_step == 0

    def test_marker_lost_stops_attack(self):
        config = _config(start_step=100, max_blind_steps=3)
        engine = build_attack_engine(config)
        packet = _first_packet(config)
        engine.on_frame(0, packet.frame)
        engine.state.start_step = 1
        for t in range(1, 5):
            engine.on_observation(t, MarkerObservation.invisible(t))
        assert engine.state.stop_reason == "marker_lost"
        assert engine.state.stop_step == 4

    def test_fake_marker_out_of_view_stops_attack(self):
        s0 = np.zeros(STATE_DIM)
        s0[0] = 50.0
        config = _config(s0=s0)
        engine = build_attack_engine(config)
        packet = _first_packet(config)
        engine.on_measurement(0, packet.measurement)
        assert engine.on_frame(0, packet.frame) is packet.frame
        assert engine.state.stop_reason == "fake_marker_out_of_view"

    def test_step_limit(self):
        config = _config(stop_rule="step_limit", max_steps=1)
        engine = build_attack_engine(config)
        y = initial_state(config)
        assert engine.on_measurement(0, y) is not y
        engine.on_command(0, hover_command(config.vehicle))
        assert engine.on_measurement(1, y) is y
        assert engine.state.stop_reason == "step_limit"

    def test_step_limit_ignored_under_marker_rule(self):
        config = _config(stop_rule="marker_out_of_view", max_steps=1)
        engine = build_attack_engine(config)
        y = initial_state(config)
        engine.on_measurement(0, y)
        engine.on_command(0, hover_command(config.vehicle))
        assert engine.on_measurement(1, y) is not y
        assert engine.falsifying
        assert engine.state.stop_reason is None

    def test_auto_start_arms_after_acquisition(self):
        config = scenario_from_dict({"camera": SMALL_CAMERA, "attack": {"enabled": True}})
        engine = build_attack_engine(config)
        x = level_state([0.0, 0.0, config.thresholds.cruise_altitude])
        engine.estimator.belief = type(engine.estimator.belief)(x, engine.estimator.belief.cov, 0)
        obs = MarkerObservation(np.zeros(2), 20.0, True, 3)
        engine.on_observation(3, obs)
        assert engine.state.start_step == 4
        assert not engine.falsifying
        engine.on_measurement(4, x)
        assert engine.falsifying

    def test_image_only_leaves_sensors_alone(self):
        config = _config(mode="image_only", alpha=1.0, ramp_steps=50)
        engine = build_attack_engine(config)
        packet = _first_packet(config)
        assert engine.on_measurement(0, packet.measurement) is packet.measurement
        engine.on_frame(0, packet.frame)
        shown = engine.tracker.position + np.array([0.0, 1.0, 0.0]) / 50.0
        expected = marker_in_camera(engine.estimate, shown, config.camera)
        np.testing.assert_allclose(engine.last_fake.point_camera, expected, atol=1e-12)

    def test_attack_step_runs_all_three_messages(self):
        config = _config()
        engine = build_attack_engine(config)
        packet = _first_packet(config)
        y_f, frame_f = engine.attack_step(0, packet.measurement, packet.frame, hover_command(config.vehicle))
        assert y_f is not packet.measurement
        assert frame_f is not packet.frame
        assert engine.estimator.belief.step == 1
