import numpy as np
import pytest

from manifoldrecon.dae import (Adam, DaeParameters, TrainConfig, TrainingSet, dae_apply,
                               dae_apply_casorati, dae_train, default_dims, init_params,
                               loss_and_grad, loss_only, prepare_training_vectors,
                               relative_residual)
from manifoldrecon.errors import ConfigError, DegenerateInputError, DimensionError


def held_out(ts, theta):
    return ts.vectors[np.array(theta.meta["val_index"])]


def train_part(ts, theta):
    mask = np.ones(len(ts.vectors), bool)
    mask[np.array(theta.meta["val_index"])] = False
    return ts.vectors[mask]


# --------------------------------------------------------------------------
# architecture

def test_default_dims_width_400():
    assert default_dims(400) == [400, 225, 50, 225, 400]


def test_default_dims_scaled_bottleneck():
    assert default_dims(200) == [200, 113, 25, 113, 200]
    assert default_dims(8, bottleneck=2) == [8, 5, 2, 5, 8]


def test_init_four_layers_finite():
    theta = init_params([20, 12, 3, 12, 20], seed=1)
    assert len(theta.weights) == 4 and theta.dims == [20, 12, 3, 12, 20]
    assert theta.all_finite()
    with pytest.raises(DimensionError):
        init_params([20, 10, 20])


def test_zero_network_outputs_zero(rng):
    theta = init_params([10, 6, 2, 6, 10])
    for w in theta.weights:
        w[:] = 0
    assert np.all(dae_apply(theta, rng.standard_normal(10)) == 0)


def test_constant_network_outputs_bias(rng):
    theta = init_params([10, 6, 2, 6, 10])
    theta.weights[0][:] = 0
    theta.biases[-1][:] = np.arange(10.0)
    np.testing.assert_array_equal(dae_apply(theta, rng.standard_normal((3, 10))),
                                  np.tile(np.arange(10.0), (3, 1)))


def test_apply_dimension_mismatch():
    theta = init_params([10, 6, 2, 6, 10])
    with pytest.raises(DimensionError):
        dae_apply(theta, np.zeros(9))
    with pytest.raises(DimensionError):
        dae_apply_casorati(theta, np.zeros((4, 9), complex), 1.0)


def test_nonlinearity_witness():
    theta = init_params([6, 4, 2, 4, 6], seed=3)
    theta.biases[0][:] = -0.5
    x = np.ones(6)
    assert not np.allclose(dae_apply(theta, 2 * x), 2 * dae_apply(theta, x))


def test_casorati_matches_rowwise_realified(rng):
    theta = init_params([12, 7, 2, 7, 12], seed=2)
    x = rng.standard_normal((5, 12)) + 1j * rng.standard_normal((5, 12))
    g = 3.0
    out = dae_apply_casorati(theta, x, g)
    ref = g * (dae_apply(theta, x.real / g) + 1j * dae_apply(theta, x.imag / g))
    np.testing.assert_allclose(out, ref, atol=1e-14)
    # chunking does not change the result
    np.testing.assert_array_equal(dae_apply_casorati(theta, x, g, chunk=2), out)


# --------------------------------------------------------------------------
# training set

def test_training_vectors_shape_and_scale():
    z = np.array([[1 + 2j, -4 + 0.5j, 0.25j]])
    ts = prepare_training_vectors(z)
    assert ts.vectors.shape == (2, 3)
    assert ts.gamma == 4.0
    assert np.max(np.abs(ts.vectors)) == 1.0
    np.testing.assert_array_equal(ts.vectors[0], z.real[0] / 4)
    np.testing.assert_array_equal(ts.vectors[1], z.imag[0] / 4)


def test_real_navigators_keep_zero_imag_vectors():
    ts = prepare_training_vectors(np.arange(12.0).reshape(3, 4))
    assert ts.vectors.shape == (6, 4)
    assert np.all(ts.vectors[1::2] == 0)


@pytest.mark.parametrize("z", [np.zeros((3, 5)), np.zeros((0, 5))])
def test_degenerate_navigators(z):
    with pytest.raises(DegenerateInputError):
        prepare_training_vectors(z)


@pytest.mark.parametrize("kw", [dict(noise_levels=(0.1, 1.5), realizations_per_level=(1, 1)),
                                dict(noise_levels=(0.1, 0.01), realizations_per_level=(2, 1)),
                                dict(noise_levels=(0.1,), realizations_per_level=(0,)),
                                dict(noise_levels=(0.1, 0.01), realizations_per_level=(1,)),
                                dict(epochs=0)])
def test_train_config_validation(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw).validate()


# --------------------------------------------------------------------------
# gradients and optimizer

def test_backprop_matches_central_differences():
    rng = np.random.default_rng(11)
    theta = init_params(default_dims(8, bottleneck=2), seed=4)
    for b in theta.biases:
        b[:] = 0.1 * rng.standard_normal(b.shape)
    noisy = rng.standard_normal((6, 8))
    clean = rng.standard_normal((6, 8))
    _, gw, gb = loss_and_grad(theta, noisy, clean)
    h = 1e-5
    worst = 0.0
    for params, grads in ((theta.weights, gw), (theta.biases, gb)):
        for p, g in zip(params, grads):
            for idx in np.ndindex(p.shape):
                keep = p[idx]
                p[idx] = keep + h
                up = loss_only(theta, noisy, clean)
                p[idx] = keep - h
                dn = loss_only(theta, noisy, clean)
                p[idx] = keep
                fd = (up - dn) / (2 * h)
                worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-8))
    assert worst <= 1e-5


def test_adam_first_step_is_lr_sign():
    theta = DaeParameters([np.ones((1, 1))] * 4, [np.zeros(1)] * 4)
    theta = theta.copy()
    opt = Adam(theta, lr=0.01)
    g = [np.full((1, 1), 3.0)] * 4 + [np.full(1, -2.0)] * 4
    opt.step(theta, g)
    assert theta.weights[0][0, 0] == pytest.approx(1 - 0.01, abs=1e-9)
    assert theta.biases[0][0] == pytest.approx(0.01, abs=1e-9)


# --------------------------------------------------------------------------
# training behaviour

def test_overfit_single_vector():
    z = np.sin(2 * np.pi * np.linspace(0, 1, 64))[None, :]
    cfg = TrainConfig(noise_levels=(0.001,), realizations_per_level=(1,), epochs=2000, seed=0)
    with pytest.warns(UserWarning):
        theta = dae_train(TrainingSet(z, 1.0), cfg)
    assert relative_residual(theta, z)[0] <= 1e-2


def test_training_progress_and_reproducibility(small_case):
    ts = prepare_training_vectors(small_case["nav"])
    cfg = TrainConfig(epochs=100, seed=3)
    a = dae_train(ts, cfg)
    b = dae_train(ts, cfg)
    assert a.meta["train_loss"][99] < a.meta["train_loss"][0]
    assert abs(a.meta["train_loss"][-1] - b.meta["train_loss"][-1]) <= 1e-12
    assert a.flat().tobytes() == b.flat().tobytes()
    assert a.gamma == ts.gamma


def test_best_validation_checkpoint_returned(small_dae):
    ts, theta = small_dae
    vl = theta.meta["val_loss"]
    assert theta.meta["best_val_loss"] == pytest.approx(min(vl))
    assert vl[theta.meta["best_epoch"] - 1] == theta.meta["best_val_loss"]


def test_trained_residual_on_training_vectors(small_dae):
    ts, theta = small_dae
    assert np.median(relative_residual(theta, train_part(ts, theta))) <= 0.05


def test_denoising_gain_held_out(small_dae):
    ts, theta = small_dae
    v = held_out(ts, theta)
    s = 0.10 * np.random.default_rng(2).standard_normal(v.shape)
    assert np.linalg.norm(dae_apply(theta, v + s) - v) <= 0.5 * np.linalg.norm(s)


def test_origin_maps_near_origin(small_dae):
    ts, theta = small_dae
    n = theta.dims[0]
    d0 = dae_apply_casorati(theta, np.zeros((1, n), complex), theta.gamma)
    assert np.linalg.norm(d0) <= 0.01 * theta.gamma * np.sqrt(n) * np.sqrt(2)
    assert np.linalg.norm(dae_apply(theta, np.zeros(n))) <= 0.01 * np.sqrt(n)


def test_near_projection_on_manifold(small_dae):
    ts, theta = small_dae
    z = held_out(ts, theta)
    d = dae_apply(theta, z)
    dd = dae_apply(theta, d)
    assert np.linalg.norm(dd - d) <= np.linalg.norm(d - z) + 0.02 * np.linalg.norm(z)


def test_residual_discriminates_manifold(small_dae):
    ts, theta = small_dae
    v = held_out(ts, theta)
    g = np.random.default_rng(4).standard_normal(v.shape)
    g *= (np.linalg.norm(v, axis=1) / np.linalg.norm(g, axis=1))[:, None]
    on = np.linalg.norm(dae_apply(theta, v) - v, axis=1).mean()
    off = np.linalg.norm(dae_apply(theta, g) - g, axis=1).mean()
    assert on < off


def test_warns_on_tiny_training_set():
    ts = TrainingSet(np.random.default_rng(0).standard_normal((4, 40)) * 0.1, 1.0)
    with pytest.warns(UserWarning):
        dae_train(ts, TrainConfig(epochs=2))
