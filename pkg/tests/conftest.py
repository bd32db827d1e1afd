import sys

import numpy as np
import pytest

from manifoldrecon.acquisition import (RadialSenseOperator, acquire, extract_navigators,
                                       golden_angle_trajectory)
from manifoldrecon.dae import TrainConfig, dae_train, prepare_training_vectors
from manifoldrecon.phantom import PhantomConfig, generate_coil_maps, generate_phantom


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size pipeline runs (minutes)")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture(scope="session")
def small_case():
    """48x48, 60 frames, 4 coils, noiseless radial data and navigators."""
    cfg = PhantomConfig(48, 48, 60, cardiac_period_frames=9, resp_period_frames=31,
                        resp_amplitude=2.0)
    x = generate_phantom(cfg)
    maps = generate_coil_maps(48, 48, 4, seed=0)
    traj = golden_angle_trajectory(60, 10, 96)
    op = RadialSenseOperator(maps, traj)
    kd = acquire(x, maps, traj, 0.0, operator=op)
    nav = extract_navigators(kd)
    return {"cfg": cfg, "x": x, "maps": maps, "traj": traj, "op": op, "kd": kd, "nav": nav}


@pytest.fixture(scope="session")
def small_dae(small_case):
    ts = prepare_training_vectors(small_case["nav"])
    theta = dae_train(ts, TrainConfig(epochs=600, seed=0))
    return ts, theta


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
