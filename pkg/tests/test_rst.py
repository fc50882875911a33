import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sigkit.dataset import SyntheticSpec, distort, generate_signature
from sigkit.errors import ConstantImage, DegenerateRange, DimensionMismatch
from sigkit.imagecore import GrayImage, crop, ink_bbox, rotate
from sigkit.rst import (
    CorrelationProfile,
    RstCorrector,
    RstParams,
    correct_rst,
    estimate_rotation,
    estimate_scale,
    minmax_normalize,
    ncc,
    remove_translation,
)


def ncc_oracle(p, q):
    """Direct double sum over pixels."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    h, w = p.shape
    pm = sum(p[i, j] for i in range(h) for j in range(w)) / (h * w)
    qm = sum(q[i, j] for i in range(h) for j in range(w)) / (h * w)
    num = spp = sqq = 0.0
    for i in range(h):
        for j in range(w):
            a, b = p[i, j] - pm, q[i, j] - qm
            num += a * b
            spp += a * a
            sqq += b * b
    return num / math.sqrt(spp * sqq)


nonconst = arrays(np.float64, (5, 6), elements=st.floats(0, 255)).filter(lambda a: np.ptp(a) > 1e-3)


class TestNcc:
    def test_small_example(self):
        p = [[1, 2], [3, 4]]
        q = [[1, 2], [3, 5]]
        # frozen from ncc_oracle: 6.5 / sqrt(5 * 8.75)
        assert ncc(p, q) == pytest.approx(0.9827076298239908, abs=1e-12)
        assert ncc(p, q) == pytest.approx(ncc_oracle(p, q), abs=1e-12)

    def test_self_and_inverse(self, signature):
        assert ncc(signature, signature) == pytest.approx(1.0, abs=1e-12)
        inv = GrayImage(255 - signature.pixels)
        assert ncc(signature, inv) == pytest.approx(-1.0, abs=1e-12)

    def test_random_vs_oracle(self, rng):
        for _ in range(20):
            h, w = rng.integers(2, 9, 2)
            p = rng.integers(0, 256, (h, w))
            q = rng.integers(0, 256, (h, w))
            if np.ptp(p) == 0 or np.ptp(q) == 0:
                continue
            assert abs(ncc(p, q) - ncc_oracle(p, q)) <= 1e-12

    @settings(max_examples=50, deadline=None)
    @given(nonconst, nonconst)
    def test_symmetric(self, p, q):
        assert abs(ncc(p, q) - ncc(q, p)) <= 1e-12

    @settings(max_examples=50, deadline=None)
    @given(nonconst, nonconst, st.floats(0.01, 100), st.floats(-500, 500))
    def test_affine_invariance(self, p, q, a, b):
        assert abs(ncc(p, a * q + b) - ncc(p, q)) <= 1e-9

    def test_errors(self):
        with pytest.raises(DimensionMismatch):
            ncc(np.zeros((2, 2)), np.zeros((2, 3)))
        with pytest.raises(ConstantImage):
            ncc(np.ones((3, 3)), np.arange(9.0).reshape(3, 3))


class TestMinMax:
    def test_examples(self):
        assert minmax_normalize([2, 4, 6]) == [0.0, 0.5, 1.0]
        assert minmax_normalize([-1, 0, 3]) == [0.0, 0.25, 1.0]

    def test_degenerate(self):
        with pytest.raises(DegenerateRange):
            minmax_normalize([5, 5, 5])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=30).filter(lambda x: max(x) > min(x)))
    def test_range_and_ranks(self, xs):
        out = minmax_normalize(xs)
        assert min(out) == 0.0 and max(out) == 1.0
        for i in range(len(xs)):
            for j in range(len(xs)):
                if xs[i] < xs[j]:
                    assert out[i] <= out[j]


class TestRotation:
    def test_identity(self, signature):
        angle, profile = estimate_rotation(signature, signature)
        assert angle == 0
        assert isinstance(profile, CorrelationProfile)
        assert len(profile.angles) == 25
        assert min(profile.scores) == 0.0 and max(profile.scores) == 1.0

    def test_plus_fifteen(self, signature):
        angle, _ = estimate_rotation(signature, rotate(signature, 15))
        assert abs(angle - 15) <= 2

    @pytest.mark.parametrize("theta", range(-55, 56, 5))
    def test_five_degree_grid(self, signatures, theta):
        ref = signatures[abs(theta) // 5 % len(signatures)]
        angle, _ = estimate_rotation(ref, rotate(ref, theta))
        assert abs(angle - theta) <= 1

    def test_clamped(self, signature):
        angle, _ = estimate_rotation(signature, rotate(signature, 75))
        assert -60 <= angle <= 60


class TestTranslation:
    def test_example_box(self):
        px = np.full((10, 10), 255, np.uint8)
        px[4:7, 4:7] = 0
        out, tx, ty = remove_translation(GrayImage(px))
        assert (tx, ty) == (4, 3)
        assert out.shape == (3, 3)

    def test_tight_input(self, signature):
        tight = crop(signature, ink_bbox(signature))
        out, tx, ty = remove_translation(tight)
        assert (tx, ty) == (0, 0)
        assert out == tight

    def test_synthetic_shift(self, signature):
        box = ink_bbox(signature)
        left = box.left
        bottom = signature.height - 1 - box.bottom
        canvas = (signature.width + 40, signature.height + 40)
        base = distort(signature, canvas=canvas, pad=0)
        moved = distort(signature, translation=(7, 5), canvas=canvas, pad=0)
        _, tx0, ty0 = remove_translation(base)
        _, tx1, ty1 = remove_translation(moved)
        assert (tx1 - tx0, ty1 - ty0) == (7, -5)
        # both placements keep the ink box the same size as the original
        assert crop(moved, ink_bbox(moved)).shape == (box.height, box.width)
        assert left >= 0 and bottom >= 0


class TestScale:
    def test_ratio(self):
        assert estimate_scale(GrayImage.blank(10, 120, 0), GrayImage.blank(30, 60, 0)) == 2.0

    def test_identity(self, signature):
        tight = crop(signature, ink_bbox(signature))
        assert estimate_scale(tight, tight) == 1.0

    def test_point_nine(self, signature):
        probe = distort(signature, scale=0.9)
        _, params = correct_rst(signature, probe)
        assert abs(params.scale_ratio - 1 / 0.9) <= 0.1


class TestCorrectRst:
    def test_identity(self, signature):
        aligned, params = correct_rst(signature, signature)
        box = ink_bbox(signature)
        assert params.rotation_deg == 0
        assert params.scale_ratio == 1.0
        assert (params.translation_x, params.translation_y) == (
            box.left, signature.height - 1 - box.bottom)
        tight = crop(signature, box)
        assert np.max(np.abs(aligned.to_float() - tight.to_float())) <= 2

    def test_minus_fifty_small(self, signature):
        probe = distort(signature, rotation_deg=-50, scale=0.54)
        _, params = correct_rst(signature, probe)
        assert abs(params.rotation_deg + 50) <= 2
        assert abs(params.scale_ratio - 1 / 0.54) <= 0.1

    def test_output_matches_reference_crop(self, signatures):
        ref = signatures[0]
        tight = crop(ref, ink_bbox(ref))
        for i, probe in enumerate(signatures[1:]):
            aligned, _ = correct_rst(ref, distort(probe, rotation_deg=10 * i, scale=0.8 + 0.1 * i))
            assert aligned.shape == tight.shape

    def test_params_validate(self):
        with pytest.raises(ValueError):
            RstParams(61, 0, 0, 1.0)
        with pytest.raises(ValueError):
            RstParams(0, 0, 0, 0.0)
        assert RstParams(0, 0, 0, 2.0).detected_scale == 0.5


class TestRstCorrector:
    def test_transform(self, signature):
        probe = distort(signature, rotation_deg=20, scale=1.2)
        est = RstCorrector().fit(signature)
        (aligned,) = est.transform([probe])
        assert aligned.shape == est.reference_.cropped.shape
        assert abs(est.params_[0].rotation_deg - 20) <= 2

    def test_fresh_generator_reference(self):
        ref = generate_signature(SyntheticSpec(subject_seed=3))
        est = RstCorrector(frame_size=32).fit([ref])
        assert est.get_params() == {"frame_size": 32, "threshold": 128}
