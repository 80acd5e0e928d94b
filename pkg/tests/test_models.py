import numpy as np
import pytest

from harmovid.diffusion import Codec, linear_schedule
from harmovid.metrics import frame_similarity
from harmovid.models import (
    DeflickerModel,
    HarmonizationExample,
    HarmonizationScene,
    HarmonizerModel,
    TrainRecipe,
    build_deflicker_pair,
    build_harmonization_batch,
    classical_deflicker,
    deflicker,
    harmonize,
)
from harmovid.synth import (
    PATH_REAL_TO_SYNTH,
    PATH_SYNTH_TO_REAL,
    grade_lut,
    apply_lut,
    inpaint_remove,
    make_flicker_video,
    per_frame_harmonize,
)
from harmovid.video import AlphaVideo, MaskVideo, VideoTensor, composite, pseudo_alpha
from tests_common import toy_scene


def tiny_deflicker(frames_window=16):
    return DeflickerModel.create(codec=Codec(4), schedule=linear_schedule(8),
                                 width=16, blocks=2, heads=2, temb_dim=8,
                                 window=frames_window, seed=0)


def tiny_harmonizer(frames_window=16):
    return HarmonizerModel.create(codec=Codec(4), schedule=linear_schedule(8),
                                  width=16, blocks=2, heads=2, temb_dim=8,
                                  window=frames_window, seed=0)


def make_scene(seed=3, frames=8):
    from harmovid.synth import LightSpec, MotionSpec, SceneSpec, render_scene
    rng = np.random.default_rng(seed)
    angle = rng.uniform(0, 2 * np.pi)
    spec = SceneSpec(
        seed=seed, frames=frames, size=(32, 32),
        fg_motion=MotionSpec(start=(16.0, 14.0), velocity=(0.8, 1.1)),
        light=LightSpec(direction=(np.sin(angle), np.cos(angle)),
                        intensity=0.9, color=(1.0, 0.95, 0.9)),
        shadow_opacity=0.4,
    )
    fg, bg, mask = render_scene(spec)
    real = composite(fg, bg, mask)
    alpha = pseudo_alpha(mask, 2)
    bg_synth = apply_lut(bg, grade_lut(np.random.default_rng(seed + 1)))
    stage1 = per_frame_harmonize(fg, bg_synth, mask)
    return HarmonizationScene(
        fg=fg, bg_real=bg, bg_synth=bg_synth, mask=mask, alpha=alpha,
        real=real, target_synth=stage1,
        bg_inpaint=inpaint_remove(real, mask),
    )


class TestLayouts:
    def test_deflicker_groups(self):
        model = tiny_deflicker()
        assert [n for n, _ in model.layout.groups] == [
            "noisy_target", "flicker_input", "mask"]

    def test_harmonizer_groups(self):
        model = tiny_harmonizer()
        assert [n for n, _ in model.layout.groups] == [
            "noisy_target", "composite_input", "background", "mask"]

    def test_mismatched_net_rejected(self):
        good = tiny_deflicker()
        with pytest.raises(ValueError):
            HarmonizerModel(net=good.net, schedule=good.schedule, codec=good.codec)


class TestDeflickerPair:
    def test_background_bit_equal(self):
        real, mask = toy_scene(seed=41, frames=8)
        synth_fg = make_flicker_video(real, mask, seed=5)
        pair = build_deflicker_pair(real, synth_fg, mask)
        outside = ~mask.as_bool()
        np.testing.assert_array_equal(pair.input_composite.data[outside],
                                      real.data[outside])

    def test_zero_amplitude_flicker_degenerates(self):
        real, mask = toy_scene(seed=43, frames=6)
        synth_fg = make_flicker_video(real, mask, seed=5, amplitude=0.0)
        pair = build_deflicker_pair(real, synth_fg, mask)
        np.testing.assert_allclose(pair.input_composite.data, pair.target.data,
                                   atol=1e-6)

    def test_flicker_score_ordering(self):
        for seed in (45, 46, 47, 48):
            real, mask = toy_scene(seed=seed, frames=10)
            synth_fg = make_flicker_video(real, mask, seed=seed)
            pair = build_deflicker_pair(real, synth_fg, mask)
            assert frame_similarity(pair.input_composite) < frame_similarity(pair.target)


class TestClassicalDeflicker:
    def test_constant_video_unchanged(self):
        v = VideoTensor(np.full((4, 8, 8, 3), 0.4))
        m = MaskVideo(np.ones((4, 8, 8, 1)))
        out = classical_deflicker(v, m, 3)
        np.testing.assert_allclose(out.data, v.data, rtol=0, atol=1e-15)

    def test_alternating_pixel_window_three(self):
        data = np.zeros((6, 8, 8, 3))
        data[1::2, 4, 4] = 1.0
        m = np.zeros((6, 8, 8, 1))
        m[:, 4, 4] = 1.0
        out = classical_deflicker(VideoTensor(data), MaskVideo(m), 3)
        # interior frames average the alternating neighborhood
        for t in range(1, 5):
            expected = 2.0 / 3.0 if data[t, 4, 4, 0] == 0.0 else 1.0 / 3.0
            assert out.data[t, 4, 4, 0] == pytest.approx(expected)

    def test_background_untouched(self):
        real, mask = toy_scene(seed=49, frames=8)
        flick = make_flicker_video(real, mask, seed=5)
        out = classical_deflicker(flick, mask, 3)
        outside = ~mask.as_bool()
        np.testing.assert_array_equal(out.data[outside], flick.data[outside])

    def test_window_validation(self):
        v = VideoTensor(np.zeros((4, 8, 8, 3)))
        m = MaskVideo(np.ones((4, 8, 8, 1)))
        with pytest.raises(ValueError):
            classical_deflicker(v, m, 2)
        with pytest.raises(ValueError):
            classical_deflicker(v, m, 1)

    def test_loses_spatial_detail_on_flicker(self):
        real, mask = toy_scene(seed=51, frames=10)
        flick = make_flicker_video(real, mask, seed=7)
        out = classical_deflicker(flick, mask, 3)

        def fg_laplacian_var(video):
            from scipy import ndimage
            from harmovid.flow import luma
            kernel = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], float)
            vals = []
            for t in range(video.shape[0]):
                resp = ndimage.correlate(luma(video.data[t]), kernel, mode="reflect")
                vals.append(resp[mask.as_bool()[t]].var())
            return np.mean(vals)

        assert fg_laplacian_var(out) <= fg_laplacian_var(flick)


class TestMaskPolicy:
    def test_r2s_requires_binary(self):
        scene = make_scene()
        with pytest.raises(ValueError, match="mask policy"):
            HarmonizationExample(
                input_composite=scene.real, background=scene.bg_synth,
                target=scene.target_synth, cond_mask=scene.alpha,
                path_tag=PATH_REAL_TO_SYNTH,
            )

    def test_s2r_requires_feathered(self):
        scene = make_scene()
        with pytest.raises(ValueError, match="mask policy"):
            HarmonizationExample(
                input_composite=scene.real, background=scene.bg_real,
                target=scene.real, cond_mask=scene.mask,
                path_tag=PATH_SYNTH_TO_REAL,
            )
        binary_alpha = AlphaVideo(scene.mask.data)
        with pytest.raises(ValueError, match="mask policy"):
            HarmonizationExample(
                input_composite=scene.real, background=scene.bg_real,
                target=scene.real, cond_mask=binary_alpha,
                path_tag=PATH_SYNTH_TO_REAL,
            )


class TestBatchBuilder:
    def test_path_mix_one_gives_only_s2r(self):
        scenes = [make_scene(seed=s) for s in (3, 4)]
        recipe = TrainRecipe(batch_size=6, path_mix=1.0)
        batch = build_harmonization_batch(scenes, recipe, seed=0)
        assert all(ex.path_tag == PATH_SYNTH_TO_REAL for ex in batch)

    def test_single_path_r2s_masks_binary(self):
        scenes = [make_scene(seed=5)]
        recipe = TrainRecipe(batch_size=4, single_path="r2s")
        batch = build_harmonization_batch(scenes, recipe, seed=1)
        for ex in batch:
            assert ex.path_tag == PATH_REAL_TO_SYNTH
            assert np.isin(ex.cond_mask.data, (0.0, 1.0)).all()

    def test_s2r_masks_soft_on_boundary(self):
        scenes = [make_scene(seed=6)]
        recipe = TrainRecipe(batch_size=2, single_path="s2r")
        batch = build_harmonization_batch(scenes, recipe, seed=2)
        for ex in batch:
            soft = (ex.cond_mask.data > 0.0) & (ex.cond_mask.data < 1.0)
            assert soft.any()

    def test_seed_determinism(self):
        scenes = [make_scene(seed=s) for s in (7, 8)]
        recipe = TrainRecipe(batch_size=5)
        a = build_harmonization_batch(scenes, recipe, seed=9)
        b = build_harmonization_batch(scenes, recipe, seed=9)
        for ex_a, ex_b in zip(a, b):
            assert ex_a.path_tag == ex_b.path_tag
            np.testing.assert_array_equal(ex_a.input_composite.data,
                                          ex_b.input_composite.data)

    def test_missing_path_raises(self):
        scene = make_scene(seed=10)
        no_synth = HarmonizationScene(
            fg=scene.fg, bg_real=scene.bg_real, bg_synth=scene.bg_synth,
            mask=scene.mask, alpha=scene.alpha, real=scene.real,
            target_synth=None, bg_inpaint=None,
        )
        with pytest.raises(ValueError, match="no real_to_synth"):
            build_harmonization_batch([no_synth], TrainRecipe(batch_size=1,
                                                              single_path="r2s"), 0)

    def test_recipe_validation(self):
        with pytest.raises(ValueError):
            TrainRecipe(path_mix=1.5)
        with pytest.raises(ValueError):
            TrainRecipe(single_path="both")


class TestInference:
    def test_deflicker_seed_pure(self):
        model = tiny_deflicker()
        real, mask = toy_scene(seed=53, frames=4)
        flick = make_flicker_video(real, mask, seed=3)
        a = deflicker(model, flick, mask, seed=11)
        b = deflicker(model, flick, mask, seed=11)
        np.testing.assert_array_equal(a.data, b.data)
        assert a.shape == flick.shape

    def test_harmonize_seed_pure_and_shapes(self):
        model = tiny_harmonizer()
        scene = make_scene(seed=11, frames=4)
        a = harmonize(model, scene.fg, scene.bg_synth, scene.mask, seed=4)
        b = harmonize(model, scene.fg, scene.bg_synth, scene.mask, seed=4)
        np.testing.assert_array_equal(a.data, b.data)
        assert a.shape == scene.fg.shape

    def test_harmonize_accepts_alpha_and_long_clips(self):
        model = tiny_harmonizer(frames_window=4)
        scene = make_scene(seed=12, frames=6)
        out = harmonize(model, scene.fg, scene.bg_synth, scene.alpha, seed=1)
        assert out.shape == scene.fg.shape
