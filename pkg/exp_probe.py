"""Fast stage-1 probes: fixture family x capacity."""
import numpy as np, sys, time, shutil
from pathlib import Path
from chromadapt import colorops, dataset as D, trainer as TR, networks as N


def make_image(uid, size, rng, layout_jitter):
    """Sky-like scene; per-image color variation driven by two scalars."""
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w] / max(h - 1, 1)
    warmth = rng.uniform(-1.0, 1.0)   # shifts red/blue balance slightly
    light = rng.uniform(-1.0, 1.0)    # overall lightness of the scene
    top = np.array([0.28, 0.42, 0.72]) + 0.013 * light + 0.01 * warmth * np.array([1, 0.2, -1])
    bot = np.array([0.55, 0.68, 0.86]) + 0.013 * light + 0.01 * warmth * np.array([1, 0.2, -1])
    img = top[None, None, :] * (1 - yy[..., None]) + bot[None, None, :] * yy[..., None]
    anchors = [(0.25, 0.3, 0.16, 0.22), (0.6, 0.7, 0.13, 0.2), (0.75, 0.25, 0.1, 0.18), (0.4, 0.55, 0.12, 0.25)]
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


def build(td, n, size, layout_jitter, seed=1234):
    td = Path(td)
    if td.exists():
        shutil.rmtree(td)
    base_dir = td / "base"; base_dir.mkdir(parents=True)
    rng_master = np.random.default_rng(seed)
    for i in range(n):
        rng = np.random.default_rng(rng_master.integers(2**32))
        D.save_image(make_image(f"img{i:03d}", size, rng, layout_jitter), base_dir / f"img{i:03d}.png")
    base = D.scan_manifest(base_dir)
    alpha_star = colorops.AdjustParams(0.3, -0.2, 0.25)
    real_dir = td / "real"; real_dir.mkdir()
    for e in base.entries:
        img = D.load_image(base.image_path(e))
        D.save_image(colorops.compose(img, alpha_star), real_dir / f"{e.uid}.png")
    return base, D.scan_manifest(real_dir)


if __name__ == "__main__":
    layout_jitter = float(sys.argv[1])
    chans = tuple(int(c) for c in sys.argv[2].split(","))
    iters = int(sys.argv[3]) if len(sys.argv) > 3 else 750
    size = 64
    base, real = build(f"/tmp/probe_{layout_jitter}_{sys.argv[2]}", 200, size, layout_jitter)
    dspec = N.discriminator_spec(resolution=(size, size), channels=chans)
    cfg = TR.TrainConfig(batch_size=24, iterations=iters, eval_interval=125, log_interval=100, seed=7)
    t0 = time.time()
    dck, dlog = TR.train_stage1(real, cfg, spec=dspec)
    print(f"jitter={layout_jitter} chans={chans}: {time.time()-t0:.0f}s", flush=True)
