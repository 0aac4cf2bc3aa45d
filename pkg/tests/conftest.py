import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hofilter.model import ModelSpec, make_model, point_mass

settings.register_profile("suite", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


@pytest.fixture
def lg_scalar():
    """a = -1, b = 1, c = 1 with X_0 ~ N(0, 1)."""
    return make_model("linear_gaussian",
                      {"a": -1.0, "b": 1.0, "c": 1.0,
                       "x0": {"kind": "gaussian", "mean": [0.0], "var": 1.0}})


@pytest.fixture
def lg_2d():
    return make_model("linear_gaussian_2d", {"x0": {"kind": "point", "value": [0.5, -0.3]}})


@pytest.fixture
def bounded():
    return make_model("bounded_sensor", {"x0": {"kind": "point", "value": [1.0]}})


@pytest.fixture
def blind():
    """BoundedSensor dynamics with h = 0."""
    return make_model("bounded_sensor", {"gain": 0.0, "x0": {"kind": "point", "value": [1.0]}})


def custom_model(drift, diffusion, sensor, x0=0.0, name="custom"):
    """Scalar model without closed-form operators (finite-difference fallback)."""
    return ModelSpec(name=name, d_X=1, d_V=1, d_Y=1, drift=drift, diffusion=diffusion,
                     sensor=sensor, initial_law=point_mass([x0]))


def rng(seed=0):
    return np.random.default_rng(seed)
