"""Closed-form brightness / saturation / contrast operators.

All three operators act on RGB rasters with channel-last layout and values
in [0, 1].  They accept either a single image ``(H, W, 3)`` or a batch
``(N, H, W, 3)``; the adjustment parameter may be a scalar or a per-image
vector ``(N,)``.  Every operator is a pure function, clamps its output back
into [0, 1] on exit (toggle with ``clamp=False``), and never moves pixels,
so segmentation masks attached to an image remain valid by construction.

Besides the forward maps, this module provides the analytic derivatives of
each operator with respect to its adjustment parameter, and the chained
per-pixel derivative fields of the full composition (contrast, then
saturation, then brightness) that generator training needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Upper clip margin for the saturation/contrast parameters: the printed
# formulas contain 1/(1-alpha), singular at alpha=+1.
ALPHA_MARGIN = 1e-3

BRIGHTNESS_RANGE = (-1.0, 1.0)
SATURATION_RANGE = (-1.0, 1.0 - ALPHA_MARGIN)
CONTRAST_RANGE = (-1.0, 1.0 - ALPHA_MARGIN)


@dataclass(frozen=True)
class AdjustParams:
    """The (brightness, saturation, contrast) adjustment triple."""

    brightness: float
    saturation: float
    contrast: float

    def clipped(self) -> "AdjustParams":
        return AdjustParams(
            brightness=float(np.clip(self.brightness, *BRIGHTNESS_RANGE)),
            saturation=float(np.clip(self.saturation, *SATURATION_RANGE)),
            contrast=float(np.clip(self.contrast, *CONTRAST_RANGE)),
        )

    def as_array(self) -> np.ndarray:
        return np.array([self.brightness, self.saturation, self.contrast])

    @staticmethod
    def from_array(a) -> "AdjustParams":
        b, s, c = (float(v) for v in a)
        return AdjustParams(b, s, c)


@dataclass(frozen=True)
class PixelStats:
    """Per-pixel lightness/saturation statistics plus the per-image mean."""

    lightness: np.ndarray  # (max+min)/2 per pixel
    delta: np.ndarray  # max-min per pixel
    sat_ratio: np.ndarray  # saturation ratio S per pixel, in [0, 1]
    mean: np.ndarray  # mean over all pixels and channels, per image


def _as_image(x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim < 3 or x.shape[-1] != 3:
        raise ValueError(f"expected (..., H, W, 3) image array, got shape {x.shape}")
    return x


def _per_image(alpha, x: np.ndarray) -> np.ndarray:
    """Broadcast a scalar or per-image alpha against image axes (..., H, W, 3)."""
    a = np.asarray(alpha, dtype=x.dtype)
    if a.ndim == 0:
        return a
    if a.shape != x.shape[: x.ndim - 3]:
        raise ValueError(
            f"alpha shape {a.shape} does not match batch shape {x.shape[:x.ndim - 3]}"
        )
    return a.reshape(a.shape + (1, 1, 1))


def _per_pixel(alpha, x: np.ndarray) -> np.ndarray:
    """Broadcast a scalar or per-image alpha against pixel-stat axes (..., H, W)."""
    a = np.asarray(alpha, dtype=x.dtype)
    if a.ndim == 0:
        return a
    return a.reshape(a.shape + (1, 1))


def _clamp(x: np.ndarray, clamp: bool) -> np.ndarray:
    return np.clip(x, 0.0, 1.0) if clamp else x


def clamp_mask(raw: np.ndarray) -> np.ndarray:
    """1 where the exit clamp passes gradient through, 0 where it zeroes it."""
    return ((raw >= 0.0) & (raw <= 1.0)).astype(raw.dtype)


def pixel_stats(x) -> PixelStats:
    """Lightness, channel spread, saturation ratio, and per-image mean.

    The saturation ratio uses delta/(2L) below mid lightness and
    delta/(2-2L) at or above it; gray pixels (delta=0) get ratio 0.
    """
    x = _as_image(x)
    mx = x.max(axis=-1)
    mn = x.min(axis=-1)
    light = (mx + mn) / 2.0
    delta = mx - mn
    denom = np.where(light < 0.5, 2.0 * light, 2.0 - 2.0 * light)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(delta > 0.0, delta / np.maximum(denom, np.finfo(x.dtype).tiny), 0.0)
    mean = x.mean(axis=(-3, -2, -1))
    return PixelStats(lightness=light, delta=delta, sat_ratio=ratio, mean=mean)


# ---------------------------------------------------------------------------
# Brightness
# ---------------------------------------------------------------------------


def adjust_brightness(x, alpha, clamp: bool = True) -> np.ndarray:
    """Push pixels toward white (alpha > 0) or black (alpha < 0).

    Positive branch: x*(1-alpha) + alpha.  Negative branch: x + x*alpha.
    For in-range input both branches already land in [0, 1].
    """
    x = _as_image(x)
    a = _per_image(np.clip(alpha, *BRIGHTNESS_RANGE), x)
    out = np.where(a >= 0.0, x * (1.0 - a) + a, x * (1.0 + a))
    return _clamp(out, clamp)


def brightness_alpha_grad(x, alpha) -> np.ndarray:
    """d adjust_brightness / d alpha, before the exit clamp."""
    x = _as_image(x)
    a = _per_image(np.clip(alpha, *BRIGHTNESS_RANGE), x)
    return np.where(a >= 0.0, 1.0 - x, x)


def _brightness_input_scale(x: np.ndarray, alpha) -> np.ndarray:
    # The brightness map is affine in x; its Jacobian is a per-image scalar.
    a = _per_image(np.clip(alpha, *BRIGHTNESS_RANGE), x)
    return np.where(a >= 0.0, 1.0 - a, 1.0 + a)


# ---------------------------------------------------------------------------
# Saturation
# ---------------------------------------------------------------------------


def _saturation_scale(x: np.ndarray, alpha) -> tuple[np.ndarray, np.ndarray, PixelStats]:
    """The per-pixel chroma scale s and its alpha-derivative.

    s = 1/S - 1 once alpha + S reaches 1 (full-saturation cap), otherwise
    s = 1/(1-alpha) - 1.  Gray pixels are pinned to s = 0 so they stay
    exact fixed points.
    """
    stats = pixel_stats(x)
    a_pix = _per_pixel(np.clip(alpha, *SATURATION_RANGE), x)
    capped = a_pix + stats.sat_ratio >= 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        s_cap = np.where(stats.sat_ratio > 0.0, 1.0 / np.maximum(stats.sat_ratio, np.finfo(x.dtype).tiny) - 1.0, 0.0)
    s_free = 1.0 / (1.0 - a_pix) - 1.0
    s = np.where(capped, s_cap, s_free)
    ds_dalpha = np.where(capped, 0.0, 1.0 / (1.0 - a_pix) ** 2)
    gray = stats.delta == 0.0
    s = np.where(gray, 0.0, s)
    ds_dalpha = np.where(gray, 0.0, ds_dalpha)
    return s, ds_dalpha, stats


def adjust_saturation(x, alpha, clamp: bool = True) -> np.ndarray:
    """Scale each pixel's spread around its lightness by the chroma scale.

    The two printed branches, x + (x-L)*s and L + (x-L)*(1+s), are the same
    expression expanded differently, so one formula covers every alpha.
    """
    x = _as_image(x)
    s, _, stats = _saturation_scale(x, alpha)
    out = x + (x - stats.lightness[..., None]) * s[..., None]
    return _clamp(out, clamp)


def saturation_alpha_grad(x, alpha) -> np.ndarray:
    """d adjust_saturation / d alpha, before the exit clamp."""
    x = _as_image(x)
    _, ds, stats = _saturation_scale(x, alpha)
    return (x - stats.lightness[..., None]) * ds[..., None]


def saturation_input_jvp(x, alpha, v) -> np.ndarray:
    """Jacobian-vector product d adjust_saturation(x)/dx applied to v.

    Per pixel the Jacobian couples only the three channels: it is
    (1+s)*I plus rank-one corrections through the lightness L and, on the
    capped branch, through the saturation ratio S.  Channel argmax/argmin
    ties resolve to the first channel, matching the forward statistics.
    """
    x = _as_image(x)
    v = np.asarray(v, dtype=x.dtype)
    s, _, stats = _saturation_scale(x, alpha)
    light = stats.lightness
    delta = stats.delta
    ratio = stats.sat_ratio

    idx_max = x.argmax(axis=-1)
    idx_min = x.argmin(axis=-1)
    eye = np.eye(3, dtype=x.dtype)
    onehot_max = eye[idx_max]
    onehot_min = eye[idx_min]
    d_light = (onehot_max + onehot_min) / 2.0
    d_delta = onehot_max - onehot_min

    a_pix = _per_pixel(np.clip(alpha, *SATURATION_RANGE), x)
    capped = (a_pix + ratio >= 1.0) & (delta > 0.0)

    # dS/dx on each lightness branch (valid only where delta > 0)
    tiny = np.finfo(x.dtype).tiny
    low = light < 0.5
    denom_low = np.maximum(2.0 * light, tiny)
    denom_high = np.maximum(2.0 - 2.0 * light, tiny)
    dS_low = d_delta / denom_low[..., None] - (delta / np.maximum(denom_low**2, tiny))[..., None] * 2.0 * d_light
    dS_high = d_delta / denom_high[..., None] + (delta / np.maximum(denom_high**2, tiny))[..., None] * 2.0 * d_light
    dS = np.where(low[..., None], dS_low, dS_high)
    with np.errstate(divide="ignore", invalid="ignore"):
        ds_dx = np.where(
            capped[..., None],
            -dS / np.maximum(ratio, tiny)[..., None] ** 2,
            0.0,
        )
    ds_dx = np.where((delta == 0.0)[..., None], 0.0, ds_dx)

    vdot_dlight = (d_light * v).sum(axis=-1)
    vdot_ds = (ds_dx * v).sum(axis=-1)
    out = (
        v * (1.0 + s[..., None])
        - vdot_dlight[..., None] * s[..., None]
        + (x - light[..., None]) * vdot_ds[..., None]
    )
    # Gray pixels are forced fixed points with identity Jacobian.
    return np.where((delta == 0.0)[..., None], v, out)


# ---------------------------------------------------------------------------
# Contrast
# ---------------------------------------------------------------------------


def adjust_contrast(x, alpha, clamp: bool = True) -> np.ndarray:
    """Spread (alpha > 0) or flatten (alpha < 0) pixels around the image mean.

    Positive branch: mean + (x-mean)/(1-alpha).  Negative branch:
    mean + (x-mean)*(1+alpha).  The image mean is taken over all pixels and
    all three channels and is preserved exactly before the exit clamp.
    """
    x = _as_image(x)
    a = _per_image(np.clip(alpha, *CONTRAST_RANGE), x)
    mean = x.mean(axis=(-3, -2, -1), keepdims=True)
    scale = np.where(a >= 0.0, 1.0 / (1.0 - a), 1.0 + a)
    out = mean + (x - mean) * scale
    return _clamp(out, clamp)


def contrast_alpha_grad(x, alpha) -> np.ndarray:
    """d adjust_contrast / d alpha, before the exit clamp."""
    x = _as_image(x)
    a = _per_image(np.clip(alpha, *CONTRAST_RANGE), x)
    mean = x.mean(axis=(-3, -2, -1), keepdims=True)
    return np.where(a >= 0.0, (x - mean) / (1.0 - a) ** 2, x - mean)


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------


def compose(x, params, clamp: bool = True) -> np.ndarray:
    """Apply contrast, then saturation, then brightness.

    ``params`` is an AdjustParams or anything unpackable into the
    (brightness, saturation, contrast) triple; each entry may be a scalar
    or a per-image vector.
    """
    b, s, c = _unpack(params)
    out = adjust_contrast(x, c, clamp=clamp)
    out = adjust_saturation(out, s, clamp=clamp)
    out = adjust_brightness(out, b, clamp=clamp)
    return out


def compose_with_alpha_grads(x, params) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Composed output plus per-pixel derivatives w.r.t. each parameter.

    Returns ``(out, (d_brightness, d_saturation, d_contrast))`` where the
    derivative fields account for the full chain (the contrast derivative is
    pushed through the saturation and brightness Jacobians) and for the
    exit clamps, whose gradient is pass-through in range and zero outside.
    The per-pixel statistics of each operator's own input are constants
    with respect to the parameters, so no further terms arise.
    """
    x = _as_image(x)
    b, s, c = _unpack(params)
    # Parameters outside their legal range are clipped by the operators,
    # so their derivative vanishes there.
    def in_range(alpha, lo, hi):
        a = np.asarray(alpha, dtype=x.dtype)
        return _per_image((a >= lo) & (a <= hi), x).astype(x.dtype)

    m_ab = in_range(b, *BRIGHTNESS_RANGE)
    m_as = in_range(s, *SATURATION_RANGE)
    m_ac = in_range(c, *CONTRAST_RANGE)

    y_c_raw = adjust_contrast(x, c, clamp=False)
    m_c = clamp_mask(y_c_raw)
    y_c = np.clip(y_c_raw, 0.0, 1.0)
    g_c = contrast_alpha_grad(x, c) * m_c * m_ac

    y_s_raw = adjust_saturation(y_c, s, clamp=False)
    m_s = clamp_mask(y_s_raw)
    y_s = np.clip(y_s_raw, 0.0, 1.0)
    g_s = saturation_alpha_grad(y_c, s) * m_s * m_as
    g_c = saturation_input_jvp(y_c, s, g_c) * m_s

    y_b_raw = adjust_brightness(y_s, b, clamp=False)
    m_b = clamp_mask(y_b_raw)
    out = np.clip(y_b_raw, 0.0, 1.0)
    g_b = brightness_alpha_grad(y_s, b) * m_b * m_ab
    k_b = _brightness_input_scale(y_s, b)
    g_s = g_s * k_b * m_b
    g_c = g_c * k_b * m_b

    return out, (g_b, g_s, g_c)


def _unpack(params):
    if isinstance(params, AdjustParams):
        return params.brightness, params.saturation, params.contrast
    b, s, c = params
    return b, s, c
