import logging

import numpy as np
import pytest
from scipy import ndimage

from manifoldrecon.acquisition import (CartesianSenseOperator, RadialSenseOperator, acquire,
                                       extract_navigators, golden_angle_trajectory)
from manifoldrecon.dae import TrainConfig, dae_apply_casorati, dae_train, init_params, \
    prepare_training_vectors
from manifoldrecon.errors import ConfigError, DimensionError, NumericalError
from manifoldrecon.metrics import mean_ser
from manifoldrecon.phantom import (PhantomConfig, casorati_of, frames_of, generate_coil_maps,
                                   generate_phantom)
from manifoldrecon.priors import cg_sense
from manifoldrecon.recon import (ReconConfig, data_term, default_lambda, objective_value,
                                 recon_dae, x_update)

from conftest import crandn


class Identity:
    def forward(self, x):
        return x

    def adjoint(self, y):
        return y

    def normal(self, x):
        return x


@pytest.fixture(scope="module")
def rank3_dae():
    h, n = 32, 30
    cfg = PhantomConfig(h, h, n, cardiac_period_frames=7, resp_period_frames=23,
                        resp_amplitude=1.0)
    fr = ndimage.gaussian_filter(frames_of(generate_phantom(cfg), h, h).real, (0, 1, 1))
    u, s, vh = np.linalg.svd(casorati_of(fr), full_matrices=False)
    x = (u[:, :3] * s[:3]) @ vh[:3]
    maps = generate_coil_maps(h, h, 4, seed=0)
    op = RadialSenseOperator(maps, golden_angle_trajectory(n, 10, 2 * h))
    kd = acquire(x, maps, op.traj, 0.0, operator=op)
    theta = dae_train(prepare_training_vectors(extract_navigators(kd)),
                      TrainConfig(epochs=300, seed=0))
    return {"x": x, "op": op, "y": kd.data, "theta": theta, "h": h}


def test_config_validation():
    for kw in (dict(outer_iters=0), dict(cg_iters=0), dict(lam=-1.0), dict(init="nope")):
        with pytest.raises(ConfigError):
            ReconConfig(**kw).validate()


def test_default_lambda_scale_relative(small_case):
    op, y = small_case["op"], small_case["kd"].data
    lam = default_lambda(y, op)
    assert lam == pytest.approx(0.1 * np.abs(op.adjoint(y)).max() / 60)
    assert default_lambda(3 * y, op) == pytest.approx(3 * lam)


def test_x_update_identity_closed_form(rng):
    y, q = crandn(rng, 20, 5), crandn(rng, 20, 5)
    x = x_update(y, Identity(), q, 1.0, cg_tol=1e-12)
    np.testing.assert_allclose(x, (y + q) / 2, atol=1e-8)


def test_x_update_large_lambda_returns_q(rng, small_case):
    op, y = small_case["op"], small_case["kd"].data
    q = crandn(rng, *small_case["x"].shape)
    x = x_update(y, op, q, 1e8, cg_tol=1e-10)
    assert np.linalg.norm(x - q) <= 1e-3 * np.linalg.norm(q)


def test_x_update_truth_is_fixed_point(small_case):
    op, y, truth = small_case["op"], small_case["kd"].data, small_case["x"]
    x, info = x_update(y, op, truth, 1.0, cg_iters=100, cg_tol=1e-8, return_info=True)
    assert info.converged
    assert np.linalg.norm(x - truth) <= 1e-6 * np.linalg.norm(truth)


def test_x_update_shape_check(small_case):
    with pytest.raises(DimensionError):
        x_update(small_case["kd"].data, small_case["op"], np.zeros((5, 5), complex), 1.0)


def test_lambda_zero_equals_cg_sense(small_case):
    op, y = small_case["op"], small_case["kd"].data
    res = recon_dae(y, op, None, cfg=ReconConfig(lam=0.0, cg_iters=12, cg_tol=1e-10))
    ref = cg_sense(y, op, tol=1e-10, max_iter=12)
    assert res.x.tobytes() == ref.tobytes()
    assert res.prior_term == [0.0] and len(res.data_term) == 1


def test_lambda_zero_never_calls_network(small_case):
    class Exploding:
        gamma = 1.0

        def __getattr__(self, name):
            raise AssertionError("network touched")

    op, y = small_case["op"], small_case["kd"].data
    recon_dae(y, op, Exploding(), cfg=ReconConfig(lam=0.0, cg_iters=2))


def test_cartesian_full_sampling_exact(rng):
    maps = generate_coil_maps(32, 32, 4, seed=2)
    op = CartesianSenseOperator(maps, 4)
    cfg = PhantomConfig(32, 32, 4, cardiac_period_frames=3, resp_period_frames=5)
    x = generate_phantom(cfg)
    res = recon_dae(op.forward(x), op, None,
                    cfg=ReconConfig(lam=0.0, cg_iters=200, cg_tol=1e-13))
    assert mean_ser(x, res.x, 32, 32) >= 80.0


def test_objective_value_terms(small_case, small_dae):
    op, x = small_case["op"], small_case["x"]
    _, theta = small_dae
    y = op.forward(x)
    d, p = objective_value(x, y, op, theta, theta.gamma, 0.5)
    assert d <= 1e-12
    q = dae_apply_casorati(theta, x, theta.gamma)
    assert p == pytest.approx(np.linalg.norm(x - q) ** 2, rel=1e-12)
    d0, _ = objective_value(x, small_case["kd"].data * 1.01, op, theta, theta.gamma, 0.0)
    assert d0 == pytest.approx(data_term(x, small_case["kd"].data * 1.01, op))
    assert objective_value(x, y, op, None, 1.0, 0.0) == (d, 0.0)


def test_trace_lengths_and_finite(small_case, small_dae):
    op, y = small_case["op"], small_case["kd"].data
    _, theta = small_dae
    res = recon_dae(y, op, theta, cfg=ReconConfig(lam=0.05, outer_iters=3, cg_iters=4,
                                                  stop_tol=0.0))
    assert len(res.data_term) == len(res.prior_term) == len(res.cg_residuals) == 3
    assert np.all(np.isfinite(res.objective))
    assert res.gamma == theta.gamma


def test_early_stop_shortens_trace(small_case, small_dae):
    op, y = small_case["op"], small_case["kd"].data
    _, theta = small_dae
    res = recon_dae(y, op, theta, cfg=ReconConfig(lam=0.05, outer_iters=5, cg_iters=3,
                                                  stop_tol=1e3))
    assert len(res.objective) == 1


def test_width_mismatch(small_case):
    op, y = small_case["op"], small_case["kd"].data
    with pytest.raises(DimensionError):
        recon_dae(y, op, init_params([10, 6, 2, 6, 10]), cfg=ReconConfig(lam=1.0))


def test_numerical_error_carries_partial(small_case, small_dae):
    class Broken:
        def __init__(self, op):
            self.op = op
            self.calls = 0

        def adjoint(self, y):
            return self.op.adjoint(y)

        def forward(self, x):
            return self.op.forward(x)

        def gridding(self, y):
            return self.op.gridding(y)

        def normal(self, x):
            return x * np.nan

    _, theta = small_dae
    with pytest.raises(NumericalError) as err:
        recon_dae(small_case["kd"].data, Broken(small_case["op"]), theta,
                  cfg=ReconConfig(lam=0.1, outer_iters=2, cg_iters=3))
    assert err.value.partial is not None
    assert np.all(np.isfinite(err.value.partial.x))


def test_rank3_objective_monotone_and_gain(rank3_dae, caplog):
    c = rank3_dae
    with caplog.at_level(logging.INFO, logger="manifoldrecon.recon"):
        res = recon_dae(c["y"], c["op"], c["theta"],
                        cfg=ReconConfig(lam=0.01, outer_iters=6, cg_iters=10, stop_tol=0.0))
    obj = np.array(res.objective)
    assert np.all(obj[1:] <= obj[:-1] * 1.01)
    assert "objective rose" not in caplog.text
    grid = mean_ser(c["x"], c["op"].gridding(c["y"]), c["h"], c["h"])
    assert mean_ser(c["x"], res.x, c["h"], c["h"]) >= grid + 6.0


def test_objective_rise_is_logged_not_fatal(rng, caplog):
    # a "denoiser" that pushes far away raises the objective; recon carries on
    theta = init_params([5, 3, 2, 3, 5], seed=0)
    for w in theta.weights:
        w[:] = 0
    theta.biases[-1][:] = 50.0
    y = crandn(rng, 8, 5)
    with caplog.at_level(logging.INFO, logger="manifoldrecon.recon"):
        res = recon_dae(y, Identity(), theta, gamma=1.0,
                        cfg=ReconConfig(lam=1.0, outer_iters=3, init="zeros", stop_tol=0.0))
    assert len(res.objective) == 3
