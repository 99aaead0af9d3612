import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from a3gan.errors import DimensionError, ValidationError
from a3gan.generator import (
    AgingGenerator,
    GeneratorConfig,
    build_generator,
    desk_generator_config,
    embed_attributes,
    fuse,
)
from a3gan.images import batch_to_tensor

TINY = GeneratorConfig(image_size=16, base_channels=8, n_resblocks=2, attr_dim=2, profile="custom")


def rand_image(size, seed=0, channels=3):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1, 1, size=(size, size, channels)).astype(np.float32)


class TestEmbedAttributes:
    def test_shapes_and_constant_planes(self):
        feats = np.random.default_rng(0).normal(size=(64, 64, 256)).astype(np.float32)
        alpha = np.array([1.0, 0.0])
        out = embed_attributes(feats, alpha)
        assert out.shape == (64, 64, 258)
        assert np.array_equal(out[:, :, :256], feats)
        assert np.all(out[:, :, 256] == 1.0)
        assert np.all(out[:, :, 257] == 0.0)

    def test_zero_attributes_is_identity(self):
        feats = np.random.default_rng(1).normal(size=(4, 4, 8))
        assert np.array_equal(embed_attributes(feats, np.zeros(0)), feats)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            embed_attributes(np.zeros((4, 4, 8)), np.array([1.0]), attr_dim=2)


class TestFuse:
    def test_all_input(self):
        i_y = rand_image(8, seed=2)
        m_i = rand_image(8, seed=3)
        assert np.array_equal(fuse(i_y, np.ones((8, 8, 1)), m_i), i_y)

    def test_all_map(self):
        i_y = rand_image(8, seed=4)
        m_i = rand_image(8, seed=5)
        assert np.array_equal(fuse(i_y, np.zeros((8, 8, 1)), m_i), m_i)

    def test_midpoint(self):
        i_y = np.full((4, 4, 3), 0.2)
        m_i = np.full((4, 4, 3), 0.8)
        out = fuse(i_y, np.full((4, 4, 1), 0.5), m_i)
        assert np.allclose(out, 0.5)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            fuse(np.zeros((4, 4, 3)), np.ones((4, 4, 1)), np.zeros((8, 8, 3)))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_stays_in_range(self, seed):
        rng = np.random.default_rng(seed)
        i_y = rng.uniform(-1, 1, size=(4, 4, 3))
        m_i = rng.uniform(-1, 1, size=(4, 4, 3))
        mask = rng.uniform(0, 1, size=(4, 4, 1))
        out = fuse(i_y, mask, m_i)
        assert out.min() >= -1.0 - 1e-12 and out.max() <= 1.0 + 1e-12


class TestArchitecture:
    def test_paper_profile_intermediate_shapes(self):
        model = AgingGenerator(GeneratorConfig())
        shapes = {}

        def hook(name):
            def fn(_m, _inp, out):
                shapes[name] = tuple(out.shape[1:])

            return fn

        for name in ["enc1", "enc2", "enc3", "dec1", "dec2", "image_head", "mask_head"]:
            getattr(model, name).register_forward_hook(hook(name))
        for i, block in enumerate(model.resblocks):
            block.register_forward_hook(hook(f"res{i + 1}"))

        with torch.no_grad():
            out = model(torch.zeros(1, 3, 256, 256), torch.zeros(1, 2))

        assert shapes["enc1"] == (64, 256, 256)
        assert shapes["enc2"] == (128, 128, 128)
        assert shapes["enc3"] == (256, 64, 64)
        for i in range(1, 7):
            assert shapes[f"res{i}"] == (256, 64, 64)
        assert shapes["dec1"] == (128, 128, 128)
        assert shapes["dec2"] == (64, 256, 256)
        assert shapes["mask_head"] == (1, 256, 256)
        assert shapes["image_head"] == (3, 256, 256)
        assert tuple(out.output.shape) == (1, 3, 256, 256)

    def test_mask_head_forced_open_copies_input(self):
        model = build_generator(TINY, seed=3)
        with torch.no_grad():
            model.mask_head.weight.zero_()
            model.mask_head.bias.fill_(30.0)
        image = rand_image(16, seed=6)
        out = model.generate(image, np.array([1.0, 0.0]))
        assert np.max(np.abs(out.output - image)) <= 1e-6

    def test_output_ranges(self):
        model = build_generator(TINY, seed=4)
        out = model.generate(rand_image(16, seed=7), np.array([0.0, 1.0]))
        assert out.mask.min() >= 0.0 and out.mask.max() <= 1.0
        assert out.image_map.min() >= -1.0 and out.image_map.max() <= 1.0
        assert out.output.min() >= -1.0 and out.output.max() <= 1.0
        assert out.output.shape == (16, 16, 3)
        assert out.mask.shape == (16, 16, 1)

    def test_attributes_change_output(self):
        image = rand_image(16, seed=8)
        a = np.array([1.0, 0.0])
        b = np.array([0.0, 1.0])
        gaps = []
        for seed in range(10):
            model = build_generator(TINY, seed=seed)
            out_a = model.generate(image, a)
            out_b = model.generate(image, b)
            gaps.append(np.max(np.abs(out_a.output - out_b.output)))
        assert all(g > 0 for g in gaps)

    def test_deterministic_forward(self):
        model = build_generator(TINY, seed=5)
        image = rand_image(16, seed=9)
        a = model.generate(image, np.array([1.0, 1.0]))
        b = model.generate(image, np.array([1.0, 1.0]))
        assert np.array_equal(a.output, b.output)

    def test_no_attention_variant(self):
        cfg = GeneratorConfig(
            image_size=16, base_channels=8, n_resblocks=2, attr_dim=2,
            use_attention=False, profile="custom",
        )
        model = build_generator(cfg, seed=6)
        out = model.generate(rand_image(16, seed=10), np.array([1.0, 0.0]))
        assert out.mask is None
        assert np.array_equal(out.output, out.image_map)

    def test_wrong_size_rejected(self):
        model = build_generator(TINY, seed=7)
        with pytest.raises(DimensionError):
            model.generate(rand_image(32, seed=11), np.array([0.0, 0.0]))

    def test_unnormalized_pixels_rejected(self):
        model = build_generator(TINY, seed=8)
        bad = rand_image(16, seed=12) + 3.0
        with pytest.raises(ValidationError):
            model.generate(bad, np.array([0.0, 0.0]))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GeneratorConfig(image_size=18)
        with pytest.raises(ValueError):
            GeneratorConfig(n_resblocks=0)
        with pytest.raises(ValueError):
            GeneratorConfig(attr_dim=-1)


class TestGradients:
    def test_output_energy_gradient_matches_finite_differences(self):
        cfg = desk_generator_config(image_size=16, base_channels=8, n_resblocks=2, profile="custom")
        model = build_generator(cfg, seed=11).double()
        images = batch_to_tensor([rand_image(16, seed=13)], dtype=torch.float64)
        alpha = torch.tensor([[1.0, 0.0]], dtype=torch.float64)

        def loss_value():
            return (model(images, alpha).output ** 2).sum()

        loss = loss_value()
        loss.backward()

        rng = np.random.default_rng(99)
        params = [p for p in model.parameters() if p.grad is not None]
        checked, ok = 0, 0
        # Rectifier kinks make 1e-3 steps truncation-dominated; 1e-5 in
        # float64 isolates the analytic-gradient check.
        h = 1e-5
        for _ in range(40):
            p = params[rng.integers(len(params))]
            idx = tuple(rng.integers(s) for s in p.shape)
            analytic = float(p.grad[idx])
            with torch.no_grad():
                orig = float(p[idx])
                p[idx] = orig + h
                up = float(loss_value())
                p[idx] = orig - h
                down = float(loss_value())
                p[idx] = orig
            fd = (up - down) / (2 * h)
            rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-8)
            checked += 1
            ok += rel <= 1e-3
        assert ok / checked >= 0.99
