"""The three color operators: golden values, invariants, analytic gradients."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import grad_rel_err, random_images

from chromadapt import colorops as co
from chromadapt.colorops import AdjustParams


def images(rng, n=4, size=8, lo=0.0, hi=1.0):
    return random_images(n, size, rng, lo, hi)


# ---------------------------------------------------------------------------
# Golden values (hand evaluation of the closed-form operators)
# ---------------------------------------------------------------------------


class TestGoldenValues:
    def test_brightness_up(self):
        x = np.full((2, 2, 3), 0.5)
        assert np.allclose(co.adjust_brightness(x, 0.5), 0.75)

    def test_brightness_down(self):
        x = np.full((2, 2, 3), 0.5)
        assert np.allclose(co.adjust_brightness(x, -0.5), 0.25)

    def test_brightness_full(self):
        x = np.random.default_rng(0).uniform(size=(3, 3, 3))
        assert np.allclose(co.adjust_brightness(x, 1.0), 1.0)

    def test_brightness_zero_is_identity(self):
        x = np.random.default_rng(1).uniform(size=(3, 3, 3))
        assert np.array_equal(co.adjust_brightness(x, 0.0), x)

    def test_saturation_example(self):
        # pixel (0.8, 0.4, 0.2): L = 0.5, S = 0.6, alpha 0.3 below the cap
        px = np.array([[[0.8, 0.4, 0.2]]])
        out = co.adjust_saturation(px, 0.3)[0, 0]
        assert np.allclose(out, [0.92857142, 0.35714285, 0.07142857], atol=1e-7)

    def test_saturation_zero_is_identity(self):
        x = np.random.default_rng(2).uniform(size=(4, 4, 3))
        assert np.array_equal(co.adjust_saturation(x, 0.0), x)

    def test_contrast_two_pixel(self):
        x = np.zeros((1, 2, 3))
        x[0, 0], x[0, 1] = 0.2, 0.6
        out = co.adjust_contrast(x, 0.5)
        assert np.allclose(out[0, 0], 0.0) and np.allclose(out[0, 1], 0.8)

    def test_contrast_collapse(self):
        x = np.zeros((1, 2, 3))
        x[0, 0], x[0, 1] = 0.2, 0.6
        assert np.allclose(co.adjust_contrast(x, -1.0), 0.4)

    def test_compose_reduces_to_brightness(self):
        x = np.full((4, 4, 3), 0.5)
        out = co.compose(x, AdjustParams(0.5, 0.0, 0.0))
        assert np.allclose(out, 0.75)


# ---------------------------------------------------------------------------
# Structural invariants
# ---------------------------------------------------------------------------


class TestInvariants:
    def test_identity_composition_exact(self, rng):
        x = images(rng, n=8, size=16)
        out = co.compose(x, (0.0, 0.0, 0.0))
        assert np.abs(out - x).max() <= 1e-12

    def test_gray_pixels_fixed_under_saturation(self):
        g = np.full((5, 5, 3), 0.37)
        for a in (-0.9, -0.3, 0.3, 0.9):
            assert np.array_equal(co.adjust_saturation(g, a), g)

    def test_brightness_monotone(self, rng):
        x = images(rng)
        assert (co.adjust_brightness(x, 0.4) >= x - 1e-15).all()
        assert (co.adjust_brightness(x, -0.4) <= x + 1e-15).all()

    def test_contrast_preserves_mean_preclamp(self, rng):
        # inputs kept near mid-range so the exit clamp never activates
        x = images(rng, lo=0.35, hi=0.65)
        for a in (-0.8, -0.2, 0.2, 0.45):
            out = co.adjust_contrast(x, a)
            assert abs(out.mean() - x.mean()) < 1e-9

    def test_range_closure(self, rng):
        x = images(rng, n=6, size=12)
        for _ in range(50):
            params = AdjustParams(*rng.uniform(-1, 1, 3)).clipped()
            out = co.compose(x, params)
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_printed_saturation_branches_agree(self, rng):
        # The two printed branch expressions are one identity:
        # x + (x-L)s == L + (x-L)(1+s) for every alpha, not just 0.
        x = images(rng, n=3, size=10)
        for a in (-0.9, -0.2, 0.0, 0.2, 0.9):
            s, _, stats = co._saturation_scale(x, a)
            lhs = x + (x - stats.lightness[..., None]) * s[..., None]
            rhs = stats.lightness[..., None] + (x - stats.lightness[..., None]) * (1.0 + s[..., None])
            assert np.allclose(lhs, rhs, atol=1e-12)

    def test_params_clipping(self):
        p = AdjustParams(1.5, 1.0, -2.0).clipped()
        assert p.brightness == 1.0
        assert p.saturation == pytest.approx(1.0 - co.ALPHA_MARGIN)
        assert p.contrast == -1.0

    def test_batched_alpha_matches_per_image(self, rng):
        x = images(rng, n=5, size=6)
        alphas = rng.uniform(-0.8, 0.8, size=(5, 3))
        batched = co.compose(x, (alphas[:, 0], alphas[:, 1], alphas[:, 2]))
        for i in range(5):
            single = co.compose(x[i], AdjustParams(*alphas[i]))
            assert np.array_equal(batched[i], single)


@settings(max_examples=50, deadline=None)
@given(
    value=st.floats(0.0, 1.0),
    alpha=st.floats(-1.0, 1.0),
)
def test_gray_invariance_property(value, alpha):
    g = np.full((2, 2, 3), value)
    out = co.adjust_saturation(g, alpha)
    assert np.allclose(out, np.clip(g, 0, 1), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    seed=st.integers(0, 2**16),
    ab=st.floats(-1.0, 1.0),
    as_=st.floats(-1.0, 0.999),
    ac=st.floats(-1.0, 0.999),
)
def test_range_closure_property(seed, ab, as_, ac):
    x = np.random.default_rng(seed).uniform(size=(3, 3, 3))
    out = co.compose(x, (ab, as_, ac))
    assert out.min() >= 0.0 and out.max() <= 1.0


# ---------------------------------------------------------------------------
# Analytic alpha-derivatives vs the finite-difference oracle
# ---------------------------------------------------------------------------

H = 1e-5


def fd_alpha(fn, x, a, h=H):
    return (fn(x, a + h, clamp=False) - fn(x, a - h, clamp=False)) / (2 * h)


class TestAlphaGradients:
    def test_brightness_grad_point(self):
        # d/dalpha [x(1-a)+a] = 1-x on the positive branch
        x = np.full((1, 1, 3), 0.5)
        assert np.allclose(co.brightness_alpha_grad(x, 0.5), 0.5)

    def test_contrast_grad_point(self):
        # (x - mean)/(1-a)^2 with x=0.6, mean=0.4, a=0.5 -> 0.8
        x = np.zeros((1, 2, 3))
        x[0, 0], x[0, 1] = 0.6, 0.2
        g = co.contrast_alpha_grad(x, 0.5)
        assert np.allclose(g[0, 0], 0.8)

    def test_saturation_grad_gray_zero(self):
        g = np.full((3, 3, 3), 0.6)
        assert np.allclose(co.saturation_alpha_grad(g, 0.4), 0.0)

    @pytest.mark.parametrize("alpha", [-0.85, -0.3, 0.02, 0.45, 0.9])
    def test_brightness_grad_fd(self, rng, alpha):
        x = images(rng, n=2, size=10)
        err = grad_rel_err(co.brightness_alpha_grad(x, alpha), fd_alpha(co.adjust_brightness, x, alpha))
        assert err < 1e-6

    @pytest.mark.parametrize("alpha", [-0.85, -0.3, 0.02, 0.45, 0.9])
    def test_contrast_grad_fd(self, rng, alpha):
        x = images(rng, n=2, size=10)
        err = grad_rel_err(co.contrast_alpha_grad(x, alpha), fd_alpha(co.adjust_contrast, x, alpha))
        assert err < 1e-6

    @pytest.mark.parametrize("alpha", [-0.85, -0.3, 0.02, 0.45, 0.9])
    def test_saturation_grad_fd(self, rng, alpha):
        x = images(rng, n=2, size=10)
        # exclude pixels whose cap branch flips inside the FD stencil
        ratio = co.pixel_stats(x).sat_ratio
        keep = np.abs(alpha + ratio - 1.0) > 50 * H
        an = co.saturation_alpha_grad(x, alpha)[keep]
        fd = fd_alpha(co.adjust_saturation, x, alpha)[keep]
        assert grad_rel_err(an, fd) < 1e-6

    def test_saturation_input_jvp_fd(self, rng):
        x = images(rng, n=2, size=8, lo=0.1, hi=0.9)
        v = rng.normal(size=x.shape)
        for alpha in (-0.5, 0.35):
            eps = 1e-7
            up = co.adjust_saturation(x + eps * v, alpha, clamp=False)
            dn = co.adjust_saturation(x - eps * v, alpha, clamp=False)
            fd = (up - dn) / (2 * eps)
            jvp = co.saturation_input_jvp(x, alpha, v)
            assert grad_rel_err(jvp, fd) < 1e-5

    def test_composition_grads_fd(self, rng):
        # mild alphas and mid-range input keep the exit clamps inactive
        x = images(rng, n=3, size=8, lo=0.2, hi=0.8)
        params = (0.25, -0.3, 0.2)
        _, grads = co.compose_with_alpha_grads(x, params)
        for i in range(3):
            pp = list(params)
            pp[i] += H
            up = co.compose(x, tuple(pp))
            pp[i] -= 2 * H
            dn = co.compose(x, tuple(pp))
            err = grad_rel_err(grads[i], (up - dn) / (2 * H))
            assert err < 1e-5, f"component {i}: {err}"

    def test_composition_grad_zero_beyond_param_clip(self, rng):
        # contrast alpha past its legal upper bound is clipped; derivative 0
        x = images(rng, n=1, size=6)
        _, (_, _, gc) = co.compose_with_alpha_grads(x, (0.0, 0.0, 0.9999))
        assert np.allclose(gc, 0.0)

    def test_clamp_mask_zeroes_grad(self):
        # alpha_b = 0.9 pushes a 0.95 pixel's raw value past... it cannot;
        # use contrast to force clamping instead
        x = np.zeros((1, 2, 3))
        x[0, 0], x[0, 1] = 0.05, 0.95
        out, (_, _, gc) = co.compose_with_alpha_grads(x, (0.0, 0.0, 0.8))
        clamped = (out == 0.0) | (out == 1.0)
        assert clamped.any()
        assert np.allclose(gc[clamped], 0.0)
