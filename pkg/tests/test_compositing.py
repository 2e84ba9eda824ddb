import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.linalg import spsolve

from scenefit.backends import MockGenerator
from scenefit.compositing import (
    INSERT_STAGES,
    CutoutObject,
    _bilinear,
    alpha_composite,
    build_generation_request,
    insert_object,
    matte_from_white,
    resize_to_box,
    seamless_clone,
    seamless_clone_float,
)
from scenefit.errors import (
    AllBackground,
    BoxOutOfBounds,
    DegenerateBox,
    EmptyObjectPhrase,
    NonConvergence,
    NoOverlap,
    StageError,
)
from scenefit.scene_model import PlacementBox, SceneImage
from scenefit.suggestion import SuggestionResult

from conftest import random_scene


def _cutout(rng, w, h, alpha=None):
    rgb = rng.uniform(0, 255, (h, w, 3))
    return CutoutObject(rgb, np.ones((h, w)) if alpha is None else alpha)


# -- matting ---------------------------------------------------------------------


def test_matte_hard_threshold_without_feather():
    px = np.full((4, 4, 3), 255, np.uint8)
    px[1, 2] = (250, 250, 244)
    px[2, 1] = (245, 245, 245)
    cut = matte_from_white(SceneImage.from_array(px), threshold=245, feather=0)
    expected = np.zeros((4, 4))
    expected[1, 2] = 1
    assert np.array_equal(cut.alpha, expected)


def test_matte_feather_is_mean_filter():
    px = np.full((7, 7, 3), 255, np.uint8)
    px[3, 3] = 0
    cut = matte_from_white(SceneImage.from_array(px), feather=1)
    assert cut.alpha[3, 3] == pytest.approx(1 / 9)
    assert cut.alpha[2, 2] == pytest.approx(1 / 9)
    assert cut.alpha[0, 0] == 0.0


def test_matte_all_background():
    with pytest.raises(AllBackground):
        matte_from_white(SceneImage.from_array(np.full((3, 3, 3), 255, np.uint8)))


# -- resizing ---------------------------------------------------------------------


@given(st.integers(1, 12), st.integers(1, 12), st.integers(1, 12), st.integers(1, 12),
       st.floats(0, 255), st.floats(0, 1))
def test_bilinear_preserves_constants(h, w, oh, ow, colour, a):
    cut = CutoutObject(np.full((h, w, 3), colour), np.full((h, w), a))
    out = resize_to_box(cut, PlacementBox(0, 0, ow, oh))
    assert out.rgb.shape == (oh, ow, 3)
    assert np.allclose(out.rgb, colour) and np.allclose(out.alpha, a)


def test_bilinear_hand_value():
    values = np.array([[0.0, 10.0]])
    # 2 -> 4 samples at pixel centres 0.25 apart from the input grid
    assert np.allclose(_bilinear(values, 1, 4), [[0.0, 2.5, 7.5, 10.0]])


def test_resize_degenerate_box():
    with pytest.raises(DegenerateBox):
        resize_to_box(_cutout(np.random.default_rng(0), 3, 3), PlacementBox(0, 0, 0.4, 3))


# -- alpha compositing ------------------------------------------------------------------


def test_opacity_zero_is_identity():
    rng = np.random.default_rng(0)
    scene = random_scene(rng)
    assert alpha_composite(scene, _cutout(rng, 5, 5), PlacementBox(3, 3, 8, 8), opacity=0.0) == scene


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(-4, 30), st.integers(-4, 20), st.integers(1, 10), st.integers(1, 10),
       st.floats(0, 1))
def test_alpha_composite_invariants(seed, x, y, w, h, opacity):
    rng = np.random.default_rng(seed)
    scene = random_scene(rng)
    box = PlacementBox(x, y, x + w, y + h)
    cut = CutoutObject(rng.uniform(0, 255, (h, w, 3)), rng.uniform(0, 1, (h, w)))
    try:
        out = alpha_composite(scene, cut, box, opacity).pixels.astype(int)
    except NoOverlap:
        assert x + w <= 0 or y + h <= 0 or x >= scene.width or y >= scene.height
        return
    inside = np.zeros((scene.height, scene.width), bool)
    inside[max(y, 0):y + h, max(x, 0):x + w] = True
    bg = scene.pixels.astype(int)
    assert np.array_equal(out[~inside], bg[~inside])
    # each output pixel lies between background and object colour (within rounding)
    fg = np.zeros_like(scene.pixels, dtype=float)
    fg[max(y, 0):y + h, max(x, 0):x + w] = cut.rgb[max(-y, 0):, max(-x, 0):][: inside.any(1).sum(), : inside.any(0).sum()]
    lo, hi = np.minimum(bg, fg), np.maximum(bg, fg)
    assert np.all(out[inside] >= np.floor(lo[inside])) and np.all(out[inside] <= np.ceil(hi[inside]))


def test_alpha_composite_no_overlap():
    rng = np.random.default_rng(0)
    with pytest.raises(NoOverlap):
        alpha_composite(random_scene(rng), _cutout(rng, 3, 3), PlacementBox(100, 100, 103, 103))


# -- seamless cloning -----------------------------------------------------------------------


def _dense_poisson(dst, src, alpha, y0, x0, h, w):
    """Assemble and solve the discrete Poisson system directly, pixel by pixel."""
    idx = {(y0 + i, x0 + j): i * w + j for i in range(h) for j in range(w)}
    a_full = np.zeros(dst.shape[:2])
    a_full[y0:y0 + h, x0:x0 + w] = alpha
    s_full = dst.astype(float).copy()
    s_full[y0:y0 + h, x0:x0 + w] = src
    out = dst.astype(float).copy()
    for c in range(3):
        A = sp.lil_matrix((h * w, h * w))
        b = np.zeros(h * w)
        for (py, px), k in idx.items():
            A[k, k] = 4
            for qy, qx in ((py - 1, px), (py + 1, px), (py, px - 1), (py, px + 1)):
                a = min(a_full[py, px], a_full[qy, qx])
                b[k] += a * (s_full[py, px, c] - s_full[qy, qx, c]) + (1 - a) * (
                    float(dst[py, px, c]) - float(dst[qy, qx, c]))
                if (qy, qx) in idx:
                    A[k, idx[(qy, qx)]] = -1
                else:
                    b[k] += dst[qy, qx, c]
        sol = spsolve(A.tocsr(), b)
        out[y0:y0 + h, x0:x0 + w, c] = sol.reshape(h, w)
    return out


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_seamless_matches_dense_solve(seed):
    rng = np.random.default_rng(seed)
    scene = random_scene(rng, 12, 12)
    cut = CutoutObject(rng.uniform(0, 255, (8, 8, 3)), rng.uniform(0, 1, (8, 8)))
    box = PlacementBox(2, 2, 10, 10)
    got, report = seamless_clone_float(scene, cut, box, eps=1e-6)
    oracle = _dense_poisson(scene.pixels, cut.rgb, cut.alpha, 2, 2, 8, 8)
    assert np.abs(got - oracle).mean() < 1e-2
    assert report.sweeps > 0


def test_seamless_self_clone_is_fixed_point():
    rng = np.random.default_rng(3)
    scene = random_scene(rng, 16, 16)
    box = PlacementBox(3, 4, 11, 12)
    cut = CutoutObject(scene.pixels[4:12, 3:11].astype(float), np.ones((8, 8)))
    assert seamless_clone(scene, cut, box) == scene


def test_seamless_outside_box_untouched_and_margin_enforced():
    rng = np.random.default_rng(4)
    scene = random_scene(rng, 16, 16)
    cut = _cutout(rng, 6, 6)
    out = seamless_clone(scene, cut, PlacementBox(5, 5, 11, 11)).pixels
    outside = np.ones((16, 16), bool)
    outside[5:11, 5:11] = False
    assert np.array_equal(out[outside], scene.pixels[outside])
    with pytest.raises(BoxOutOfBounds):
        seamless_clone(scene, cut, PlacementBox(0, 5, 6, 11))
    with pytest.raises(BoxOutOfBounds):
        seamless_clone(scene, cut, PlacementBox(10, 5, 16, 11))


def test_seamless_non_convergence():
    rng = np.random.default_rng(5)
    with pytest.raises(NonConvergence):
        seamless_clone(random_scene(rng, 16, 16), _cutout(rng, 8, 8), PlacementBox(4, 4, 12, 12), max_sweeps=1)


# -- end to end ----------------------------------------------------------------------------------


def _suggestion(phrase="a red mug"):
    return SuggestionResult(("Food", "Drinks", "FMCG"), "Food", phrase, (), "two-stage")


@pytest.mark.parametrize("mode", ["alpha", "seamless"])
def test_insert_object_stages_and_determinism(mode):
    scene = random_scene(np.random.default_rng(6), 32, 24)
    box = PlacementBox(4, 4, 20, 18)
    gen = MockGenerator()
    a = insert_object(scene, _suggestion(), box, gen, mode=mode, seed=7, size=(64, 64))
    b = insert_object(scene, _suggestion(), box, gen, mode=mode, seed=7, size=(64, 64))
    assert tuple(a.stage_artifacts) == INSERT_STAGES
    assert a.image == b.image and a.image != scene
    assert a.metadata["seed"] == 7


def test_generation_request_template():
    req = build_generation_request("a can of Coke", 3, (64, 64))
    assert req.prompt.startswith("cinematic product photo of a can of Coke, single object only,")
    assert "text, watermark, signature" in req.negative_prompt
    assert (req.seed, req.size) == (3, (64, 64))


def test_insert_object_stage_errors():
    scene = random_scene(np.random.default_rng(6), 32, 24)
    with pytest.raises(EmptyObjectPhrase):
        build_generation_request("  ", 0)
    with pytest.raises(StageError) as info:
        insert_object(scene, _suggestion(""), PlacementBox(4, 4, 20, 18), MockGenerator(), size=(16, 16))
    assert info.value.stage == "generate"
    with pytest.raises(StageError) as info:
        insert_object(scene, _suggestion(), PlacementBox(0, 4, 20, 18), MockGenerator(), mode="seamless",
                      size=(16, 16))
    assert info.value.stage == "composite" and isinstance(info.value.cause, BoxOutOfBounds)
