"""Two-stage adaptation training and dataset adaptation.

Stage 1 pre-trains the discriminator to separate a real image set from its
own color-randomized variants; the variants are produced on the fly by the
sampler and the color operators, and synthetic images are never shown to
the discriminator.  Stage 2 trains the generator to predict per-image
adjustment parameters that make adapted synthetic images score as real
under the stage-1 discriminator, which stays frozen by default.  The two
stages run once each and are never alternated.

Color operators act in [0, 1] image space; network inputs are zero-
centered and rescaled to [-1, 1].  The conversion is a fixed affine map
applied at the module boundary, so the round trip is exact to floating
point precision.
"""

from __future__ import annotations

import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import colorops
from .dataset import DatasetManifest, ManifestEntry, copy_mask, load_image, save_image, write_manifest
from .errors import DatasetError, DivergenceError, InvalidSpecError
from .networks import (
    Checkpoint,
    Discriminator,
    Generator,
    NetworkSpec,
    discriminator_spec,
    generator_spec,
    load_checkpoint,
    save_checkpoint,
)
from .optim import Adam
from .sampler import SamplerConfig, VariantRecord, batch_params, stream, write_variant_records
from .tensor import Tensor, bce_loss

log = logging.getLogger(__name__)

GENERATOR_LOSSES = ("nonsaturating", "literal")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 24  # images per class per iteration
    iterations: int = 3000
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    p: float = 0.99
    per_op: bool = True
    freeze_d: bool = True
    seed: int = 0
    holdout_fraction: float = 0.10
    log_interval: int = 25
    eval_interval: int = 250
    generator_loss: str = "nonsaturating"

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 1:
            raise ValueError("batch_size and iterations must be >= 1")
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must be in [0, 1)")
        if self.generator_loss not in GENERATOR_LOSSES:
            raise ValueError(f"generator_loss must be one of {GENERATOR_LOSSES}")


# ---------------------------------------------------------------------------
# Train log
# ---------------------------------------------------------------------------


@dataclass
class TrainLog:
    """Append-only training record.

    Serialized as line-delimited text: data rows are
    ``iteration<TAB>d_loss<TAB>g_loss<TAB>split`` with '-' for absent
    fields; evaluation snapshots and metadata are '#'-prefixed lines.
    """

    lines: list[str] = field(default_factory=list)

    def row(self, iteration: int, d_loss=None, g_loss=None, split: str = "train") -> None:
        d = "-" if d_loss is None else repr(float(d_loss))
        g = "-" if g_loss is None else repr(float(g_loss))
        self.lines.append(f"{iteration}\t{d}\t{g}\t{split}")

    def note(self, text: str) -> None:
        self.lines.append(f"# {text}")

    def write(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.lines) + "\n")

    @staticmethod
    def parse(path) -> tuple[list[tuple[int, float | None, float | None, str]], list[str]]:
        rows, notes = [], []
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                notes.append(line[1:].strip())
                continue
            it, d, g, split = line.split("\t")
            rows.append(
                (int(it), None if d == "-" else float(d), None if g == "-" else float(g), split)
            )
        return rows, notes


# ---------------------------------------------------------------------------
# Domain conversion and batch assembly
# ---------------------------------------------------------------------------


def to_network(x01: np.ndarray) -> np.ndarray:
    """[0,1] channel-last images -> zero-centered [-1,1] NCHW batch."""
    return np.ascontiguousarray((x01 * 2.0 - 1.0).transpose(0, 3, 1, 2))


def from_network(xnet: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(xnet.transpose(0, 2, 3, 1) + 1.0) / 2.0


class _ImageCache:
    """Preloaded [0,1] images at the working resolution, keyed by uid."""

    def __init__(self, manifest: DatasetManifest, resolution: tuple[int, int], dtype):
        h, w = resolution
        self.uids = [e.uid for e in manifest.entries]
        self.images = np.stack(
            [load_image(manifest.image_path(e), dtype=dtype, size=(w, h)) for e in manifest.entries]
        )

    def __len__(self):
        return len(self.uids)

    def take(self, indices) -> tuple[np.ndarray, list[str]]:
        return self.images[indices], [self.uids[i] for i in indices]


def _split_holdout(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    order = stream(seed, "holdout-split").permutation(n)
    k = int(round(n * fraction))
    if fraction > 0.0 and k == 0 and n > 1:
        k = 1
    return order[k:], order[:k]  # train, holdout


# ---------------------------------------------------------------------------
# Stage 1: discriminator pre-training on real vs color-randomized real
# ---------------------------------------------------------------------------


def _d_loss_on(d: Discriminator, real_01: np.ndarray, var_01: np.ndarray):
    dt = d.spec.np_dtype()
    pred_r = d.forward(Tensor(to_network(real_01)))
    pred_v = d.forward(Tensor(to_network(var_01)))
    loss = 0.5 * bce_loss(pred_r, np.ones(pred_r.shape, dtype=dt)) + 0.5 * bce_loss(
        pred_v, np.zeros(pred_v.shape, dtype=dt)
    )
    return loss, pred_r, pred_v


def _eval_stage1(d, cache, idx, sampler_cfg, replica):
    imgs, uids = cache.take(idx)
    alphas = batch_params(sampler_cfg, uids, replica=replica)
    variants = colorops.compose(imgs, (alphas[:, 0], alphas[:, 1], alphas[:, 2]))
    loss, pred_r, pred_v = _d_loss_on(d, imgs, variants.astype(imgs.dtype))
    real_rate = float((pred_r.data >= 0.5).mean())
    var_rate = float((pred_v.data < 0.5).mean())
    return float(loss.data), 0.5 * (real_rate + var_rate), real_rate, var_rate


def train_stage1(
    real: DatasetManifest,
    config: TrainConfig,
    spec: NetworkSpec | None = None,
    run_dir=None,
) -> tuple[Checkpoint, TrainLog]:
    """Pre-train D on real images vs their color-randomized variants."""
    if len(real) == 0:
        raise DatasetError("real dataset is empty")
    spec = spec or discriminator_spec()
    if spec.role != "discriminator":
        raise InvalidSpecError("train_stage1 needs a discriminator spec")
    run_dir = Path(run_dir) if run_dir is not None else None

    sampler_cfg = SamplerConfig(p=config.p, seed=config.seed, per_op=config.per_op)
    cache = _ImageCache(real, spec.resolution, spec.np_dtype())
    train_idx, hold_idx = _split_holdout(len(cache), config.holdout_fraction, config.seed)
    if len(train_idx) == 0:
        raise DatasetError("holdout split left no training images")

    d = Discriminator(spec, seed=config.seed)
    opt = Adam(d.params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps)
    logbook = TrainLog()
    logbook.note(
        f"stage 1: real vs variants, {len(train_idx)} train / {len(hold_idx)} holdout, "
        f"p={config.p} sigma={sampler_cfg.sigma:.5f} batch={config.batch_size} seed={config.seed}"
    )
    t_start = time.time()
    last_good: Checkpoint | None = None

    for it in range(1, config.iterations + 1):
        rng = stream(config.seed, "stage1-batch", it)
        ridx = train_idx[rng.integers(0, len(train_idx), size=config.batch_size)]
        # Variants are the same batch pushed through randomized ops: the
        # adversarial set is the image-wise transform of the real set, and
        # pairing keeps image identity useless for separating the classes.
        real_imgs, uids = cache.take(ridx)
        alphas = batch_params(sampler_cfg, uids, replica=it)
        variants = colorops.compose(real_imgs, (alphas[:, 0], alphas[:, 1], alphas[:, 2]))
        var_src = real_imgs

        opt.zero_grad()
        loss, _, _ = _d_loss_on(d, real_imgs, variants.astype(var_src.dtype))
        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            if run_dir is not None and last_good is not None:
                _write_checkpoint(run_dir / "d_last_good.ckpt", last_good)
            raise DivergenceError(f"stage 1 loss became non-finite at iteration {it}")
        loss.backward()
        opt.step()

        if it % config.log_interval == 0 or it == 1 or it == config.iterations:
            logbook.row(it, d_loss=loss_val, split="train")
        if it % config.eval_interval == 0 or it == config.iterations:
            if len(hold_idx) > 0:
                hloss, hacc, rrate, vrate = _eval_stage1(d, cache, hold_idx, sampler_cfg, replica=-it)
                logbook.row(it, d_loss=hloss, split="heldout")
                logbook.note(
                    f"eval iteration={it} heldout_accuracy={hacc:.4f} "
                    f"real_rate={rrate:.4f} variant_rate={vrate:.4f}"
                )
                print(
                    f"[stage1] iter {it}/{config.iterations} train={loss_val:.4f} "
                    f"heldout={hloss:.4f} acc={hacc:.3f} (r={rrate:.2f} v={vrate:.2f})",
                    file=sys.stderr,
                )
            last_good = Checkpoint(
                spec=spec, arrays={k: p.data.copy() for k, p in d.params.items()}, step=it
            )

    logbook.note(f"wallclock seconds={time.time() - t_start:.1f}")
    ckpt = Checkpoint(spec=spec, arrays={k: p.data.copy() for k, p in d.params.items()},
                      step=config.iterations)
    if run_dir is not None:
        save_checkpoint(run_dir / "d.ckpt", spec, d.params, step=config.iterations, optimizer=opt)
        logbook.write(run_dir / "train_d.log")
    return ckpt, logbook


# ---------------------------------------------------------------------------
# Stage 2: generator training against the (frozen) discriminator
# ---------------------------------------------------------------------------


def _color_adjust_node(x01: np.ndarray, alpha: Tensor) -> Tensor:
    """Graph node applying the operator composition with per-image alphas.

    Forward runs in [0,1] channel-last space and emits an NCHW tensor;
    backward contracts the upstream gradient with the analytic per-pixel
    derivative fields of the composition.
    """
    a = alpha.data
    out01, (g_b, g_s, g_c) = colorops.compose_with_alpha_grads(
        x01, (a[:, 0], a[:, 1], a[:, 2])
    )
    node = Tensor(np.ascontiguousarray(out01.transpose(0, 3, 1, 2)))
    node.requires_grad = alpha.requires_grad
    if node.requires_grad:
        node._parents = (alpha,)

        def bw(g):
            gh = g.transpose(0, 2, 3, 1)  # back to channel-last
            grad_alpha = np.stack(
                [
                    (gh * g_b).sum(axis=(1, 2, 3)),
                    (gh * g_s).sum(axis=(1, 2, 3)),
                    (gh * g_c).sum(axis=(1, 2, 3)),
                ],
                axis=1,
            ).astype(a.dtype)
            alpha._accumulate(grad_alpha)

        node._backward = bw
    return node


def predict_alphas(g: Generator, x01: np.ndarray) -> Tensor:
    """Generator forward on [0,1] images; returns the (N, 3) alpha tensor."""
    return g.forward(Tensor(to_network(x01)))


def _g_loss_on(g: Generator, d: Discriminator, x01: np.ndarray, loss_kind: str):
    alphas = predict_alphas(g, x01)
    adapted = _color_adjust_node(x01, alphas)
    score = d.forward(adapted * 2.0 - 1.0)
    dt = d.spec.np_dtype()
    if loss_kind == "literal":
        loss = (1.0 - score).log().mean()
    else:
        loss = bce_loss(score, np.ones(score.shape, dtype=dt))
    return loss, score, alphas


def train_stage2(
    synthetic: DatasetManifest,
    d_checkpoint: Checkpoint | str | Path,
    config: TrainConfig,
    g_spec: NetworkSpec | None = None,
    run_dir=None,
) -> tuple[Checkpoint, TrainLog]:
    """Train G so adapted synthetic images score as real under D."""
    if len(synthetic) == 0:
        raise DatasetError("synthetic dataset is empty")
    if not isinstance(d_checkpoint, Checkpoint):
        d_checkpoint = load_checkpoint(d_checkpoint)
    if d_checkpoint.spec.role != "discriminator":
        raise InvalidSpecError("stage 2 requires a discriminator checkpoint")
    d = d_checkpoint.build()
    g_spec = g_spec or generator_spec(resolution=d.spec.resolution, dtype=d.spec.dtype)
    if g_spec.role != "generator":
        raise InvalidSpecError("train_stage2 needs a generator spec")
    if g_spec.resolution != d.spec.resolution:
        raise InvalidSpecError(
            f"generator resolution {g_spec.resolution} != discriminator {d.spec.resolution}"
        )
    run_dir = Path(run_dir) if run_dir is not None else None

    d_bytes_before = d.weight_bytes()
    d.set_trainable(not config.freeze_d)
    g = Generator(g_spec, seed=config.seed)

    params = dict(g.params)
    if not config.freeze_d:
        params.update({f"d:{k}": p for k, p in d.params.items()})
    opt = Adam(params, lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps)

    cache = _ImageCache(synthetic, g_spec.resolution, g_spec.np_dtype())
    train_idx, hold_idx = _split_holdout(len(cache), config.holdout_fraction, config.seed)
    if len(train_idx) == 0:
        raise DatasetError("holdout split left no training images")

    logbook = TrainLog()
    logbook.note(
        f"stage 2: generator vs {'frozen' if config.freeze_d else 'non-fixed'} discriminator, "
        f"{len(train_idx)} train / {len(hold_idx)} holdout, loss={config.generator_loss} "
        f"batch={config.batch_size} seed={config.seed}"
    )
    if not config.freeze_d:
        logbook.note("ablation: discriminator in backprop (non-fixed D)")
    t_start = time.time()
    last_good: Checkpoint | None = None

    for it in range(1, config.iterations + 1):
        rng = stream(config.seed, "stage2-batch", it)
        idx = train_idx[rng.integers(0, len(train_idx), size=config.batch_size)]
        imgs, _ = cache.take(idx)

        opt.zero_grad()
        loss, score, alphas = _g_loss_on(g, d, imgs, config.generator_loss)
        loss_val = float(loss.data)
        if not np.isfinite(loss_val):
            if run_dir is not None and last_good is not None:
                _write_checkpoint(run_dir / "g_last_good.ckpt", last_good)
            raise DivergenceError(f"stage 2 loss became non-finite at iteration {it}")
        loss.backward()
        opt.step()

        if it % config.log_interval == 0 or it == 1 or it == config.iterations:
            logbook.row(it, g_loss=loss_val, split="train")
        if it % config.eval_interval == 0 or it == config.iterations:
            mean_alpha = alphas.data.mean(axis=0)
            logbook.note(
                f"eval iteration={it} mean_score={float(score.data.mean()):.4f} "
                f"mean_alpha={mean_alpha[0]:.4f},{mean_alpha[1]:.4f},{mean_alpha[2]:.4f}"
            )
            if len(hold_idx) > 0:
                himgs, _ = cache.take(hold_idx)
                hloss, _, _ = _g_loss_on(g, d, himgs, config.generator_loss)
                logbook.row(it, g_loss=float(hloss.data), split="heldout")
            print(
                f"[stage2] iter {it}/{config.iterations} g_loss={loss_val:.4f} "
                f"score={float(score.data.mean()):.3f} alpha=({mean_alpha[0]:+.3f},"
                f"{mean_alpha[1]:+.3f},{mean_alpha[2]:+.3f})",
                file=sys.stderr,
            )
            last_good = Checkpoint(
                spec=g_spec, arrays={k: p.data.copy() for k, p in g.params.items()}, step=it
            )

    if config.freeze_d and d.weight_bytes() != d_bytes_before:
        raise AssertionError("frozen discriminator weights changed during stage 2")
    logbook.note(f"wallclock seconds={time.time() - t_start:.1f}")
    logbook.note(f"frozen_d={config.freeze_d}")
    ckpt = Checkpoint(spec=g_spec, arrays={k: p.data.copy() for k, p in g.params.items()},
                      step=config.iterations)
    if run_dir is not None:
        save_checkpoint(run_dir / "g.ckpt", g_spec, g.params, step=config.iterations, optimizer=opt)
        if not config.freeze_d:
            save_checkpoint(run_dir / "d_nonfixed.ckpt", d.spec, d.params, step=config.iterations)
        logbook.write(run_dir / "train_g.log")
    return ckpt, logbook


def _write_checkpoint(path, ckpt: Checkpoint) -> None:
    params = {k: Tensor(v) for k, v in ckpt.arrays.items() if not k.startswith("opt.")}
    save_checkpoint(path, ckpt.spec, params, step=ckpt.step)


# ---------------------------------------------------------------------------
# Dataset adaptation
# ---------------------------------------------------------------------------


def adapt_dataset(
    synthetic: DatasetManifest,
    g_checkpoint: Checkpoint | str | Path,
    out_dir,
    batch_size: int = 32,
) -> tuple[DatasetManifest, list[VariantRecord]]:
    """Map every synthetic image through ops with its predicted parameters.

    Adapted images keep their source file names; mask files are copied
    byte-identically.  The predicted alpha triple per image is written to
    an ``alphas.tsv`` sidecar whose records replay bitwise.
    """
    if len(synthetic) == 0:
        raise DatasetError("synthetic dataset is empty")
    if not isinstance(g_checkpoint, Checkpoint):
        g_checkpoint = load_checkpoint(g_checkpoint)
    if g_checkpoint.spec.role != "generator":
        raise InvalidSpecError("adapt_dataset requires a generator checkpoint")
    g = g_checkpoint.build()
    h, w = g.spec.resolution
    dt = g.spec.np_dtype()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries: list[ManifestEntry] = []
    records: list[VariantRecord] = []
    for lo in range(0, len(synthetic), batch_size):
        chunk = synthetic.entries[lo : lo + batch_size]
        # network input at the generator's working resolution
        net_in = np.stack(
            [load_image(synthetic.image_path(e), dtype=dt, size=(w, h)) for e in chunk]
        )
        alphas = predict_alphas(g, net_in).data.astype(np.float64)
        for e, a in zip(chunk, alphas):
            # ops run at the image's native resolution in float64
            img = load_image(synthetic.image_path(e))
            params = colorops.AdjustParams.from_array(a)
            adapted = colorops.compose(img, params)
            save_image(adapted, out_dir / f"{e.uid}.png")
            mask_rel = None
            if e.mask:
                mask_rel = f"{e.uid}_mask.png"
                copy_mask(synthetic.mask_path(e), out_dir / mask_rel)
            entries.append(ManifestEntry(uid=e.uid, image=f"{e.uid}.png", mask=mask_rel))
            records.append(VariantRecord(e.uid, e.uid, params, 0))

    manifest = DatasetManifest(root=out_dir, entries=entries, split="adapted")
    write_manifest(manifest, out_dir / "manifest.tsv")
    write_variant_records(records, out_dir / "alphas.tsv")
    return manifest, records
