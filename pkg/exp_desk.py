"""Desk-scale tuning experiment for the training acceptance criteria."""
import numpy as np, sys, time
from pathlib import Path
from chromadapt import colorops, dataset as D, trainer as TR, networks as N, metrics as M


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


def build(td, n=200, size=64, seed=1234):
    td = Path(td)
    base_dir = td / "base"; base_dir.mkdir(parents=True, exist_ok=True)
    rng_master = np.random.default_rng(seed)
    for i in range(n):
        D.save_image(make_image(f"img{i:03d}", size, np.random.default_rng(rng_master.integers(2**32)), 0.1),
                     base_dir / f"img{i:03d}.png")
    base = D.scan_manifest(base_dir)
    alpha_star = colorops.AdjustParams(0.3, -0.2, 0.25)
    real_dir = td / "real"; real_dir.mkdir(exist_ok=True)
    for e in base.entries:
        img = D.load_image(base.image_path(e))
        D.save_image(colorops.compose(img, alpha_star), real_dir / f"{e.uid}.png")
    real = D.scan_manifest(real_dir)
    return base, real


def main():
    td = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("/tmp/desk")
    d_chan = tuple(int(c) for c in (sys.argv[2] if len(sys.argv) > 2 else "8,16,32,64").split(","))
    g_chan = tuple(int(c) for c in (sys.argv[3] if len(sys.argv) > 3 else "8,16,32,64,64").split(","))
    iters1 = int(sys.argv[4]) if len(sys.argv) > 4 else 3000
    iters2 = int(sys.argv[5]) if len(sys.argv) > 5 else 3000
    size = 64
    base, real = build(td, n=200, size=size)
    print("fixture built", flush=True)

    dspec = N.discriminator_spec(resolution=(size, size), channels=d_chan)
    cfg = TR.TrainConfig(batch_size=24, iterations=iters1, eval_interval=250, log_interval=50, seed=7)
    t0 = time.time()
    dck, dlog = TR.train_stage1(real, cfg, spec=dspec, run_dir=td / "run_d")
    t1 = time.time() - t0
    accs = [l for l in dlog.lines if "heldout_accuracy" in l]
    print(f"STAGE1 {t1:.0f}s  last evals: {accs[-4:]}", flush=True)

    gspec = N.generator_spec(resolution=(size, size), channels=g_chan)
    cfg2 = TR.TrainConfig(batch_size=24, iterations=iters2, eval_interval=250, log_interval=50, seed=7)
    t0 = time.time()
    gck, glog = TR.train_stage2(base, dck, cfg2, g_spec=gspec, run_dir=td / "run_g")
    t2 = time.time() - t0
    print(f"STAGE2 {t2:.0f}s", flush=True)

    adapted, recs = TR.adapt_dataset(base, gck, td / "adapted")
    arr = np.array([r.params.as_array() for r in recs])
    print("alpha mean:", arr.mean(axis=0), "std:", arr.std(axis=0), flush=True)

    swd_cfg = M.SwdConfig(patch_size=7, patches_per_image=128, projections=256, seed=1)
    t0 = time.time()
    d0 = M.swd(base, real, swd_cfg).distance
    d1 = M.swd(adapted, real, swd_cfg).distance
    print(f"SWD base={d0:.5f} adapted={d1:.5f} ratio={d1/d0:.3f} ({time.time()-t0:.0f}s)", flush=True)


if __name__ == "__main__":
    main()
