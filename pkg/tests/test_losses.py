import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from a3gan.errors import CapabilityError, ConfigurationError, DimensionError
from a3gan.losses import (
    LossWeights,
    attribute_consistency_loss,
    authenticity_loss,
    discriminator_total_loss,
    generator_adversarial_loss,
    generator_total_loss,
    gradient_penalty,
    identity_loss,
    lambda_att_schedule,
    pixel_loss,
)

PAPER_WEIGHTS = LossWeights()


def constant_critic(c):
    return lambda images, alpha: torch.full((images.shape[0],), float(c), dtype=images.dtype)


def first_attribute_critic(images, alpha):
    return alpha[:, 0].to(images.dtype)


def mean_pixel_critic(images, alpha):
    return images.flatten(1).mean(dim=1)


class SeededStubCritic:
    """Random but fixed linear functional of (image, alpha)."""

    def __init__(self, seed, image_shape, attr_dim):
        rng = np.random.default_rng(seed)
        self.w_img = torch.tensor(rng.normal(size=image_shape), dtype=torch.float64)
        self.w_att = torch.tensor(rng.normal(size=attr_dim), dtype=torch.float64)

    def __call__(self, images, alpha):
        img_term = (images.to(torch.float64) * self.w_img).flatten(1).sum(dim=1)
        att_term = (alpha.to(torch.float64) * self.w_att).sum(dim=1)
        return img_term + att_term


class TestSchedule:
    def test_endpoints_and_midpoint(self):
        assert lambda_att_schedule(0, 100) == 0.0
        assert lambda_att_schedule(100, 100) == pytest.approx(0.75)
        assert lambda_att_schedule(50, 100) == pytest.approx(0.375)

    def test_zero_total_steps(self):
        with pytest.raises(ValueError):
            lambda_att_schedule(0, 0)

    @settings(max_examples=50, deadline=None)
    @given(total=st.integers(1, 10_000), data=st.data())
    def test_monotone_and_clamped(self, total, data):
        s1 = data.draw(st.integers(0, total))
        s2 = data.draw(st.integers(s1, total))
        v1 = lambda_att_schedule(s1, total)
        v2 = lambda_att_schedule(s2, total)
        assert 0.0 <= v1 <= v2 <= 0.75


class TestAdversarialTerms:
    def batch(self, seed, n=4, shape=(3, 8, 8)):
        rng = np.random.default_rng(seed)
        imgs = torch.tensor(rng.uniform(-1, 1, size=(n, *shape)), dtype=torch.float64)
        alpha = torch.tensor(rng.integers(0, 2, size=(n, 2)), dtype=torch.float64)
        return imgs, alpha

    def test_constant_critic_cancels(self):
        imgs, alpha = self.batch(0)
        alpha_bar = 1.0 - alpha
        assert float(attribute_consistency_loss(constant_critic(3.7), imgs, alpha, alpha_bar)) == 0.0

    def test_first_attribute_stub(self):
        imgs, _ = self.batch(1)
        alpha = torch.tensor([[1.0, 0.0]] * 4)
        alpha_bar = torch.tensor([[0.0, 1.0]] * 4)
        val = attribute_consistency_loss(first_attribute_critic, imgs, alpha, alpha_bar)
        assert float(val) == pytest.approx(-1.0)

    def test_attribute_term_matches_direct_evaluation(self):
        imgs, alpha = self.batch(2)
        alpha_bar = 1.0 - alpha
        critic = SeededStubCritic(7, (3, 8, 8), 2)
        got = float(attribute_consistency_loss(critic, imgs, alpha, alpha_bar))
        # Oracle: eight independent critic calls, averaged by hand.
        per_sample = [
            float(critic(imgs[i : i + 1], alpha_bar[i : i + 1])) - float(critic(imgs[i : i + 1], alpha[i : i + 1]))
            for i in range(4)
        ]
        assert got == pytest.approx(float(np.mean(per_sample)), abs=1e-6)

    def test_authenticity_mean_gap(self):
        real = torch.ones(4, 3, 8, 8)
        fake = torch.zeros(4, 3, 8, 8)
        alpha = torch.zeros(4, 2)
        assert float(authenticity_loss(mean_pixel_critic, real, alpha, fake)) == pytest.approx(-1.0)

    def test_authenticity_identical_batches(self):
        imgs, alpha = self.batch(3)
        assert float(authenticity_loss(SeededStubCritic(8, (3, 8, 8), 2), imgs, alpha, imgs)) == pytest.approx(0.0)

    def test_authenticity_matches_direct_evaluation(self):
        real, alpha = self.batch(4)
        fake, _ = self.batch(5)
        critic = SeededStubCritic(9, (3, 8, 8), 2)
        got = float(authenticity_loss(critic, real, alpha, fake))
        want = float(critic(fake, alpha).mean() - critic(real, alpha).mean())
        assert got == pytest.approx(want, abs=1e-6)

    def test_generator_term(self):
        imgs, alpha = self.batch(6)
        assert float(generator_adversarial_loss(constant_critic(2.5), imgs, alpha)) == pytest.approx(-2.5)
        fakes = torch.full((4, 3, 8, 8), 0.5)
        assert float(generator_adversarial_loss(mean_pixel_critic, fakes, alpha)) == pytest.approx(-0.5)
        critic = SeededStubCritic(10, (3, 8, 8), 2)
        got = float(generator_adversarial_loss(critic, imgs, alpha))
        assert got == pytest.approx(-float(critic(imgs, alpha).mean()), abs=1e-6)

    def test_empty_batch(self):
        empty = torch.zeros(0, 3, 8, 8)
        alpha = torch.zeros(0, 2)
        with pytest.raises(ValueError):
            generator_adversarial_loss(constant_critic(1), empty, alpha)
        with pytest.raises(ValueError):
            attribute_consistency_loss(constant_critic(1), empty, alpha, alpha)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), scale=st.floats(-4, 4, allow_nan=False))
    def test_scale_covariance(self, seed, scale):
        imgs, alpha = self.batch(seed % 1000)
        alpha_bar = 1.0 - alpha
        critic = SeededStubCritic(seed, (3, 8, 8), 2)
        scaled = lambda i, a: scale * critic(i, a)
        for fn in (
            lambda c: attribute_consistency_loss(c, imgs, alpha, alpha_bar),
            lambda c: authenticity_loss(c, imgs, alpha, imgs.flip(0)),
            lambda c: generator_adversarial_loss(c, imgs, alpha),
        ):
            assert float(fn(scaled)) == pytest.approx(scale * float(fn(critic)), abs=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_attribute_term_antisymmetry(self, seed):
        imgs, alpha = self.batch(seed % 1000)
        alpha_bar = 1.0 - alpha
        critic = SeededStubCritic(seed, (3, 8, 8), 2)
        forward = float(attribute_consistency_loss(critic, imgs, alpha, alpha_bar))
        backward = float(attribute_consistency_loss(critic, imgs, alpha_bar, alpha))
        assert forward == pytest.approx(-backward, abs=1e-9)


class LinearCritic:
    def __init__(self, weight):
        self.weight = weight

    def __call__(self, images, alpha):
        return (images * self.weight.to(images.dtype)).flatten(1).sum(dim=1)


class TestGradientPenalty:
    def unit_weight(self, shape, seed=0, norm=1.0):
        rng = np.random.default_rng(seed)
        w = torch.tensor(rng.normal(size=shape), dtype=torch.float64)
        return w / w.norm() * norm

    def test_unit_norm_linear_critic(self):
        w = self.unit_weight((3, 8, 8), seed=1)
        real = torch.rand(4, 3, 8, 8, dtype=torch.float64)
        fake = torch.rand(4, 3, 8, 8, dtype=torch.float64)
        gp = gradient_penalty(LinearCritic(w), real, fake, torch.zeros(4, 2), lambda_gp=10.0,
                              rng=np.random.default_rng(0))
        assert abs(float(gp)) <= 1e-6

    def test_norm_two_linear_critic(self):
        w = self.unit_weight((3, 8, 8), seed=2, norm=2.0)
        real = torch.rand(4, 3, 8, 8, dtype=torch.float64)
        fake = torch.rand(4, 3, 8, 8, dtype=torch.float64)
        gp = gradient_penalty(LinearCritic(w), real, fake, torch.zeros(4, 2), lambda_gp=10.0,
                              rng=np.random.default_rng(1))
        assert float(gp) == pytest.approx(10.0, abs=1e-5)

    def test_nonnegative(self):
        from a3gan.discriminator import build_discriminator, desk_discriminator_config

        cfg = desk_discriminator_config(image_size=16, base_channels=8, n_pathways=2, profile="custom")
        critic = build_discriminator(cfg, seed=3).double()
        real = torch.rand(2, 3, 16, 16, dtype=torch.float64) * 2 - 1
        fake = torch.rand(2, 3, 16, 16, dtype=torch.float64) * 2 - 1
        gp = gradient_penalty(critic, real, fake, torch.zeros(2, 2, dtype=torch.float64),
                              rng=np.random.default_rng(2))
        assert float(gp.detach()) >= 0.0

    def test_matches_finite_difference_gradient_norm(self):
        """Penalty recomputed from finite-difference estimates of the critic gradient."""
        from a3gan.discriminator import build_discriminator, desk_discriminator_config

        cfg = desk_discriminator_config(image_size=16, base_channels=8, n_pathways=2, profile="custom")
        critic = build_discriminator(cfg, seed=4).double()
        rng = np.random.default_rng(3)
        real = torch.tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))
        fake = torch.tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))
        alpha = torch.zeros(1, 2, dtype=torch.float64)
        eps = torch.tensor([0.3], dtype=torch.float64)
        gp = float(gradient_penalty(critic, real, fake, alpha, lambda_gp=10.0, eps=eps).detach())

        x_hat = (0.3 * real + 0.7 * fake).numpy()[0]
        h = 1e-5
        sq = 0.0
        with torch.no_grad():
            for c in range(3):
                for i in range(16):
                    for j in range(16):
                        up = x_hat.copy()
                        up[c, i, j] += h
                        down = x_hat.copy()
                        down[c, i, j] -= h
                        batch = torch.tensor(np.stack([up, down]))
                        s = critic(batch, torch.zeros(2, 2, dtype=torch.float64))
                        sq += (float(s[0] - s[1]) / (2 * h)) ** 2
        want = 10.0 * (np.sqrt(sq) - 1.0) ** 2
        assert gp == pytest.approx(want, rel=1e-2)

    def test_non_differentiable_critic(self):
        def dead_critic(images, alpha):
            return torch.zeros(images.shape[0])

        real = torch.rand(2, 3, 4, 4)
        with pytest.raises(CapabilityError):
            gradient_penalty(dead_critic, real, real, torch.zeros(2, 2))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            gradient_penalty(constant_critic(0), torch.rand(2, 3, 4, 4),
                             torch.rand(2, 3, 8, 8), torch.zeros(2, 2))


class TestTotals:
    def test_discriminator_composition(self):
        assert float(discriminator_total_loss(2.0, 3.0, 0.0, 0.0)) == 3.0
        assert float(discriminator_total_loss(2.0, 3.0, 1.0, 0.75)) == 5.5
        assert float(discriminator_total_loss(0.0, 0.0, 0.0, 0.3)) == 0.0

    def test_generator_composition(self):
        got = generator_total_loss(1.0, 10.0, 0.5, PAPER_WEIGHTS)
        assert float(got) == pytest.approx(5.2)
        zero = LossWeights(lambda_att_max=0.0, lambda_pix=0.0, lambda_id=0.0, lambda_gp=0.0)
        assert float(generator_total_loss(1.5, 99.0, 99.0, zero)) == 1.5
        assert float(generator_total_loss(0.0, 0.0, 0.0, PAPER_WEIGHTS)) == 0.0

    def test_weights_validation(self):
        with pytest.raises(ValueError):
            LossWeights(lambda_pix=-1.0)


class IdentityMapEmbedder:
    """Stand-in whose features are the flattened pixels themselves."""

    def embed_pool(self, images):
        return images

    def embed_fc(self, images):
        return images.flatten(1)


class TestIdentityAndPixelLosses:
    def test_identity_loss_zero_for_equal_batches(self):
        from a3gan.embedder import make_fixed_embedder

        emb = make_fixed_embedder(0)
        imgs = torch.rand(2, 3, 16, 16) * 2 - 1
        assert float(identity_loss(emb, imgs, imgs)) == 0.0

    def test_identity_loss_closed_form(self):
        young = torch.zeros(2, 3, 4, 4)
        fake = torch.full((2, 3, 4, 4), 0.1)
        p = 3 * 4 * 4
        got = float(identity_loss(IdentityMapEmbedder(), young, fake))
        assert got == pytest.approx(2 * p * 0.01, rel=1e-6)

    def test_identity_loss_matches_recomputation(self):
        from a3gan.embedder import make_fixed_embedder

        emb = make_fixed_embedder(5)
        rng = np.random.default_rng(4)
        young = torch.tensor(rng.uniform(-1, 1, size=(2, 3, 16, 16)), dtype=torch.float32)
        fake = torch.tensor(rng.uniform(-1, 1, size=(2, 3, 16, 16)), dtype=torch.float32)
        got = float(identity_loss(emb, young, fake))
        pool_y = emb.embed_pool(young).numpy()
        pool_f = emb.embed_pool(fake).numpy()
        fc_y = emb.embed_fc(young).numpy()
        fc_f = emb.embed_fc(fake).numpy()
        want = np.mean(
            ((pool_f - pool_y) ** 2).reshape(2, -1).sum(axis=1)
            + ((fc_f - fc_y) ** 2).sum(axis=1)
        )
        assert got == pytest.approx(float(want), abs=1e-6)

    def test_identity_loss_shape_mismatch(self):
        from a3gan.embedder import make_fixed_embedder

        emb = make_fixed_embedder(0)
        with pytest.raises(ConfigurationError):
            identity_loss(emb, torch.rand(2, 1, 16, 16), torch.rand(2, 1, 16, 16))

    def test_pixel_loss_cases(self):
        imgs = torch.rand(3, 3, 8, 8)
        assert float(pixel_loss(imgs, imgs)) == 0.0
        assert float(pixel_loss(imgs, imgs + 0.5)) == pytest.approx(0.25, rel=1e-6)
        rng = np.random.default_rng(5)
        a = torch.tensor(rng.uniform(-1, 1, size=(2, 3, 8, 8)))
        b = torch.tensor(rng.uniform(-1, 1, size=(2, 3, 8, 8)))
        want = float(np.mean(np.mean(((a - b).numpy()) ** 2, axis=(1, 2, 3))))
        assert float(pixel_loss(a, b)) == pytest.approx(want, abs=1e-7)

    def test_pixel_loss_shape_mismatch(self):
        with pytest.raises(DimensionError):
            pixel_loss(torch.rand(2, 3, 8, 8), torch.rand(2, 3, 4, 4))


class TestFiniteness:
    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_all_terms_finite_on_finite_inputs(self, seed):
        rng = np.random.default_rng(seed)
        imgs = torch.tensor(rng.uniform(-1, 1, size=(2, 3, 8, 8)))
        fake = torch.tensor(rng.uniform(-1, 1, size=(2, 3, 8, 8)))
        alpha = torch.tensor(rng.integers(0, 2, size=(2, 2)), dtype=torch.float64)
        critic = SeededStubCritic(seed, (3, 8, 8), 2)
        vals = [
            attribute_consistency_loss(critic, imgs, alpha, 1 - alpha),
            authenticity_loss(critic, imgs, alpha, fake),
            generator_adversarial_loss(critic, fake, alpha),
            gradient_penalty(critic, imgs, fake, alpha, rng=rng),
            pixel_loss(imgs, fake),
        ]
        assert all(np.isfinite(float(v)) for v in vals)
