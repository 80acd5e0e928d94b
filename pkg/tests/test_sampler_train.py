import numpy as np
import pytest

from harmovid.diffusion import (
    Adam,
    ConditioningLayout,
    DenoiserConfig,
    DenoiserNet,
    LayoutError,
    TrainingDiverged,
    apply_update,
    denoise_step,
    epsilon_loss,
    linear_schedule,
    sample,
    train_step,
)


LAYOUT = ConditioningLayout((("noisy_target", 4), ("cond", 4), ("mask", 1)))


def small_net(seed=0, randomize=True):
    cfg = DenoiserConfig(in_channels=LAYOUT.total_channels, out_channels=4,
                         width=8, blocks=2, heads=2, temb_dim=8)
    net = DenoiserNet(cfg, seed=seed)
    if randomize:
        rng = np.random.default_rng(seed + 100)
        for k in net.params:
            net.params[k] = rng.normal(0.0, 0.2, net.params[k].shape)
    return net


def make_cond(rng, shape=(2, 2, 2)):
    return {
        "cond": rng.standard_normal(shape + (4,)),
        "mask": rng.random(shape + (1,)),
    }


class OracleNet:
    """Stub denoiser that returns a fixed noise field regardless of input."""

    def __init__(self, eps):
        self.eps = eps

    def predict(self, x, ts):
        return np.broadcast_to(self.eps, (x.shape[0],) + self.eps.shape)


class TestLayout:
    def test_requires_noisy_first(self):
        with pytest.raises(LayoutError):
            ConditioningLayout((("cond", 4), ("noisy_target", 4)))

    def test_pack_orders_and_validates(self):
        rng = np.random.default_rng(0)
        noisy = rng.standard_normal((2, 2, 2, 4))
        cond = make_cond(rng)
        packed = LAYOUT.pack(noisy, cond)
        assert packed.shape == (2, 2, 2, 9)
        np.testing.assert_array_equal(packed[..., :4], noisy)
        np.testing.assert_array_equal(packed[..., 4:8], cond["cond"])
        with pytest.raises(LayoutError, match="missing"):
            LAYOUT.pack(noisy, {"cond": cond["cond"]})
        with pytest.raises(LayoutError, match="channels"):
            LAYOUT.pack(noisy, {"cond": cond["mask"], "mask": cond["mask"]})

    def test_roundtrip_list(self):
        again = ConditioningLayout.from_list(LAYOUT.to_list())
        assert again == LAYOUT


class TestReverseSteps:
    def test_oracle_eps_recovers_z0_from_any_t(self):
        rng = np.random.default_rng(1)
        sched = linear_schedule(64)
        z0 = rng.standard_normal((2, 2, 2, 4))
        eps = rng.standard_normal(z0.shape)
        net = OracleNet(eps)
        cond = make_cond(rng)
        for t_start in (1, 13, 40, 64):
            ab = sched.abar(t_start)
            z = np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps
            for t in range(t_start, 0, -1):
                z = denoise_step(net, z, cond, t, sched, LAYOUT)
            np.testing.assert_allclose(z, z0, atol=1e-5)

    def test_final_step_collapses_to_x0(self):
        rng = np.random.default_rng(2)
        sched = linear_schedule(64)
        z1 = rng.standard_normal((2, 2, 2, 4))
        eps_hat = rng.standard_normal(z1.shape)
        out = apply_update(z1, eps_hat, 1, sched, "deterministic")
        x0 = (z1 - np.sqrt(1.0 - sched.abar(1)) * eps_hat) / np.sqrt(sched.abar(1))
        np.testing.assert_allclose(out, x0, atol=1e-12)

    def test_zero_prediction_is_pure_rescaling(self):
        rng = np.random.default_rng(3)
        sched = linear_schedule(64)
        z = rng.standard_normal((1, 2, 2, 4))
        t = 20
        out = apply_update(z, np.zeros_like(z), t, sched, "deterministic")
        ratio = np.sqrt(sched.abar(t - 1) / sched.abar(t))
        np.testing.assert_allclose(out, ratio * z, atol=1e-12)

    def test_timestep_bounds(self):
        rng = np.random.default_rng(4)
        sched = linear_schedule(8)
        net = small_net()
        cond = make_cond(rng)
        z = rng.standard_normal((2, 2, 2, 4))
        with pytest.raises(ValueError):
            denoise_step(net, z, cond, 0, sched, LAYOUT)
        with pytest.raises(ValueError):
            denoise_step(net, z, cond, 9, sched, LAYOUT)


class TestSample:
    def test_deterministic_sampler_is_seed_pure(self):
        rng = np.random.default_rng(5)
        net = small_net(seed=1)
        sched = linear_schedule(16)
        cond = make_cond(rng)
        a = sample(net, cond, (2, 2, 2, 4), sched, LAYOUT, seed=7)
        b = sample(net, cond, (2, 2, 2, 4), sched, LAYOUT, seed=7)
        np.testing.assert_array_equal(a.data, b.data)
        c = sample(net, cond, (2, 2, 2, 4), sched, LAYOUT, seed=8)
        assert np.abs(a.data - c.data).max() > 0

    def test_single_step_schedule_is_x0_prediction(self):
        rng = np.random.default_rng(6)
        sched = linear_schedule(1)
        z0 = rng.standard_normal((1, 2, 2, 4))
        eps = rng.standard_normal(z0.shape)
        net = OracleNet(eps)
        cond = make_cond(rng, (1, 2, 2))
        out = sample(net, cond, z0.shape, sched, LAYOUT, seed=3)
        # chain of length one: the initial noise is mapped straight to x0
        init = np.random.default_rng(3).standard_normal(z0.shape)
        ab = sched.abar(1)
        expected = (init - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_ancestral_sampler_runs(self):
        rng = np.random.default_rng(7)
        net = small_net(seed=2)
        sched = linear_schedule(8)
        cond = make_cond(rng)
        out = sample(net, cond, (2, 2, 2, 4), sched, LAYOUT, mode="ancestral", seed=1)
        assert np.isfinite(out.data).all()


class TestTraining:
    def batch_of(self, rng, n):
        batch = []
        for _ in range(n):
            cond = make_cond(rng)
            z0 = rng.standard_normal((2, 2, 2, 4))
            batch.append((cond, z0))
        return batch

    def test_duplicated_sample_loss_equals_single(self):
        rng = np.random.default_rng(8)
        net = small_net(seed=3)
        sched = linear_schedule(16)
        cond = make_cond(rng)
        z0 = rng.standard_normal((2, 2, 2, 4))
        eps = rng.standard_normal(z0.shape)
        single, _, _ = epsilon_loss(net, LAYOUT, sched, [(cond, z0)], [5], [eps])
        tripled, _, _ = epsilon_loss(
            net, LAYOUT, sched, [(cond, z0)] * 3, [5, 5, 5], [eps, eps, eps]
        )
        assert tripled == pytest.approx(single, rel=1e-12)

    def test_initial_loss_near_one(self):
        # zero-initialized head predicts zero noise, so the first losses sit
        # near the unit noise energy
        rng = np.random.default_rng(9)
        net = small_net(seed=4, randomize=False)
        sched = linear_schedule(16)
        opt = Adam(lr=1e-3)
        losses = [
            train_step(net, opt, LAYOUT, sched, self.batch_of(rng, 4), rng)
            for _ in range(5)
        ]
        assert 0.7 < losses[0] < 1.3

    def test_random_labels_plateau_at_noise_energy(self):
        # labels drawn independently of the inputs: nothing to learn, so the
        # optimum is eps_hat = 0 and the loss plateaus at the unit noise energy
        rng = np.random.default_rng(10)
        net = small_net(seed=5, randomize=False)
        opt = Adam(lr=2e-3)
        losses = []
        for _ in range(150):
            x = rng.standard_normal((2, 2, 2, 2, LAYOUT.total_channels))
            target = rng.standard_normal((2, 2, 2, 2, 4))
            ts = rng.integers(1, 17, size=2)
            loss, grads, _ = net.mse_and_grad(x, ts, target)
            opt.step(net.params, grads)
            losses.append(loss)
        assert abs(np.mean(losses[-50:]) - 1.0) < 0.1

    def test_tiny_overfit_descends(self):
        rng = np.random.default_rng(11)
        net = small_net(seed=6, randomize=False)
        sched = linear_schedule(16)
        opt = Adam(lr=3e-3)
        batch = self.batch_of(rng, 1)
        losses = [
            train_step(net, opt, LAYOUT, sched, batch, rng) for _ in range(300)
        ]
        assert np.mean(losses[-30:]) < np.mean(losses[:30]) * 0.7

    def test_nan_loss_names_offending_index(self):
        rng = np.random.default_rng(12)
        net = small_net(seed=7)
        net.params["head.w"] = np.full_like(net.params["head.w"], np.inf)
        sched = linear_schedule(16)
        opt = Adam()
        with pytest.raises(TrainingDiverged, match="batch index 0"):
            train_step(net, opt, LAYOUT, sched, self.batch_of(rng, 2), rng)

    def test_empty_batch_rejected(self):
        rng = np.random.default_rng(13)
        net = small_net(seed=8)
        with pytest.raises(ValueError):
            train_step(net, Adam(), LAYOUT, linear_schedule(8), [], rng)
