import numpy as np
import pytest

from vehicle.dynamics import level_state
from vehicle.sensing import (
    BEACON_DIM,
    IDENTITY_MODEL,
    MEASUREMENT_DIM,
    MeasurementModel,
    SensorNoiseParams,
    TargetBeacon,
    h,
    measure,
)


def test_identity_model_returns_a_copy():
    x = level_state([1.0, 2.0, 3.0])
    y = h(x)
    np.testing.assert_array_equal(y, x)
    y[0] = 99.0
    assert x[0] == 1.0


def test_std_vector_layout():
    noise = SensorNoiseParams(position=1.0, velocity=2.0, attitude=3.0, rate=4.0)
    np.testing.assert_array_equal(noise.std_vector(), np.repeat([1.0, 2.0, 3.0, 4.0], 3))
    np.testing.assert_array_equal(np.diag(noise.covariance()), np.repeat([1.0, 4.0, 9.0, 16.0], 3))


def test_zero_noise_still_advances_rng():
    rng_a = np.random.default_rng(7)
    rng_b = np.random.default_rng(7)
    noise = SensorNoiseParams(position=0.0, velocity=0.0, attitude=0.0, rate=0.0)
    x = level_state([0.0, 0.0, 2.0])
    np.testing.assert_array_equal(measure(x, noise, rng_a), x)
    assert not noise.is_strictly_positive()

    rng_b.standard_normal(MEASUREMENT_DIM)
    assert rng_a.standard_normal() == rng_b.standard_normal()


def test_measure_adds_scaled_normals():
    noise = SensorNoiseParams()
    x = level_state([0.0, 0.0, 2.0])
    y = measure(x, noise, np.random.default_rng(3))
    expected = x + np.random.default_rng(3).standard_normal(MEASUREMENT_DIM) * noise.std_vector()
    np.testing.assert_allclose(y, expected)


def test_measure_checks_channel_count():
    model = MeasurementModel(fn=lambda x: np.concatenate([x, x[..., :1]], axis=-1), dim=MEASUREMENT_DIM + 1)
    with pytest.raises(ValueError):
        measure(level_state(), SensorNoiseParams(), np.random.default_rng(0), model)
    y = measure(level_state(), SensorNoiseParams(extra=(0.1,)), np.random.default_rng(0), model)
    assert y.shape == (MEASUREMENT_DIM + 1,)


def test_identity_model_jacobian():
    np.testing.assert_array_equal(IDENTITY_MODEL.jacobian(level_state()), np.eye(MEASUREMENT_DIM))


@pytest.mark.parametrize("kwargs", [{"position": -0.1}, {"rate": float("nan")}, {"extra": (-1.0,)}])
def test_noise_validation(kwargs):
    with pytest.raises(ValueError):
        SensorNoiseParams(**kwargs)


def test_beacon_draws_only_when_enabled():
    marker = np.array([1.0, 2.0, 0.0])
    rng = np.random.default_rng(11)
    assert TargetBeacon(enabled=False).measure(marker, rng) is None
    # a disabled beacon leaves the stream untouched
    fix = TargetBeacon(sigma=0.2).measure(marker, rng)
    expected = marker + 0.2 * np.random.default_rng(11).standard_normal(BEACON_DIM)
    np.testing.assert_allclose(fix, expected)


def test_beacon_covariance_and_validation():
    np.testing.assert_allclose(TargetBeacon(sigma=0.5).covariance(), 0.25 * np.eye(BEACON_DIM))
    with pytest.raises(ValueError):
        TargetBeacon(sigma=0.0)


def test_measurement_noise_has_configured_variance():
    noise = SensorNoiseParams()
    x = level_state([0.0, 0.0, 2.0])
    rng = np.random.default_rng(11)
    draws = np.array([measure(x, noise, rng) for _ in range(100_000)])
    np.testing.assert_allclose(draws.mean(axis=0), x, atol=5 * noise.std_vector() / np.sqrt(100_000) + 1e-12)
    np.testing.assert_allclose(draws.var(axis=0), noise.std_vector() ** 2, rtol=0.05)
