"""Shared test utilities: fixture image generation and gradient checking."""

from __future__ import annotations

import numpy as np

from chromadapt import colorops
from chromadapt import dataset as dio


def make_fixture_image(size: int = 64, rng: np.random.Generator | None = None,
                       layout_jitter: float = 0.1) -> np.ndarray:
    """Sky-like scene: blue gradient plus soft pale blobs.

    Per-image color variation is driven by two scalars (warmth, lightness)
    so the image family forms a tight color manifold; layout varies by
    ``layout_jitter``.
    """
    rng = rng or np.random.default_rng(0)
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w] / max(h - 1, 1)
    warmth = rng.uniform(-1.0, 1.0)
    light = rng.uniform(-1.0, 1.0)
    tint = 0.01 * warmth * np.array([1.0, 0.2, -1.0])
    top = np.array([0.28, 0.42, 0.72]) + 0.013 * light + tint
    bot = np.array([0.55, 0.68, 0.86]) + 0.013 * light + tint
    img = top[None, None, :] * (1 - yy[..., None]) + bot[None, None, :] * yy[..., None]
    anchors = [(0.25, 0.3, 0.16, 0.22), (0.6, 0.7, 0.13, 0.2),
               (0.75, 0.25, 0.1, 0.18), (0.4, 0.55, 0.12, 0.25)]
    for (cy, cx, ry, rx) in anchors:
        cy += rng.uniform(-layout_jitter, layout_jitter)
        cx += rng.uniform(-layout_jitter, layout_jitter)
        ry *= rng.uniform(1 - layout_jitter, 1 + layout_jitter)
        rx *= rng.uniform(1 - layout_jitter, 1 + layout_jitter)
        base = 0.85 + 0.013 * light
        col = np.array([base, base * (0.985 + 0.004 * warmth), base * (0.97 - 0.007 * warmth)])
        d2 = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
        wgt = np.exp(-d2)[..., None] * rng.uniform(0.6, 0.8)
        img = img * (1 - wgt) + col[None, None, :] * wgt
    img += rng.normal(0, 0.008, img.shape)
    return np.clip(img, 0.02, 0.98)


def make_mask(size: int, rng: np.random.Generator) -> np.ndarray:
    """Elliptical {0,1} mask."""
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    cy, cx = rng.uniform(0.3, 0.7, 2)
    ry, rx = rng.uniform(0.15, 0.35, 2)
    return ((((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2) <= 1.0).astype(np.uint8)


def build_image_dir(path, n: int, size: int = 64, seed: int = 1234,
                    masks: bool = False, layout_jitter: float = 0.1):
    """Write n fixture PNGs (optionally with masks) and return the manifest."""
    path.mkdir(parents=True, exist_ok=True)
    master = np.random.default_rng(seed)
    for i in range(n):
        rng = np.random.default_rng(master.integers(2**32))
        dio.save_image(make_fixture_image(size, rng, layout_jitter), path / f"img{i:03d}.png")
        if masks:
            dio.save_mask(make_mask(size, rng), path / f"img{i:03d}_mask.png")
    return dio.scan_manifest(path)


def push_through_ops(manifest, params: colorops.AdjustParams, out_dir):
    """Apply a fixed adjustment to every image of a manifest."""
    out_dir.mkdir(parents=True, exist_ok=True)
    for e in manifest.entries:
        img = dio.load_image(manifest.image_path(e))
        dio.save_image(colorops.compose(img, params), out_dir / f"{e.uid}.png")
    return dio.scan_manifest(out_dir)


def random_images(n: int, size: int, rng: np.random.Generator, lo: float = 0.0, hi: float = 1.0):
    return rng.uniform(lo, hi, size=(n, size, size, 3))


def grad_rel_err(analytic: np.ndarray, fd: np.ndarray) -> float:
    """Norm-ratio relative error between gradient fields."""
    denom = max(np.linalg.norm(fd.ravel()), 1e-300)
    return float(np.linalg.norm((analytic - fd).ravel()) / denom)


def fd_gradcheck(build, params, h: float = 1e-5) -> float:
    """Central finite differences on every entry of each parameter tensor.

    ``build`` must rebuild the scalar loss from current parameter data.
    Returns the worst norm-ratio relative error across parameters.
    """
    for p in params:
        p.grad = None
    loss = build()
    loss.backward()
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        fd = np.zeros_like(p.data)
        it = np.nditer(p.data, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p.data[i]
            p.data[i] = old + h
            up = float(build().data)
            p.data[i] = old - h
            dn = float(build().data)
            p.data[i] = old
            fd[i] = (up - dn) / (2 * h)
        worst = max(worst, grad_rel_err(analytic, fd))
    return worst
