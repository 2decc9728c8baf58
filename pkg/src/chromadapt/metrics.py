"""Quantitative evaluation: sliced Wasserstein distance and D accuracy.

The SWD between two image sets is the mean, over random unit directions,
of the 1-D Wasserstein-1 distance between the projected descriptor
samples, computed with the sorted-difference formula on matched counts.
Descriptors default to 7x7 RGB patches sampled per image from seeded
counter-based streams, so the distance is deterministic given the seed,
zero between a set and itself, and symmetric when both sides share one
seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import DatasetManifest, load_image
from .errors import DatasetError
from .networks import Checkpoint, Discriminator
from .sampler import stream
from .tensor import Tensor


@dataclass(frozen=True)
class SwdConfig:
    descriptor: str = "patch"  # "patch" (k x k x 3) or "pixel" (RGB triple)
    patch_size: int = 7
    patches_per_image: int = 128
    projections: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.descriptor not in ("patch", "pixel"):
            raise ValueError(f"unknown descriptor kind {self.descriptor!r}")
        if self.projections < 1:
            raise ValueError("projections must be >= 1")
        if self.patches_per_image < 1:
            raise ValueError("patches_per_image must be >= 1")

    def digest(self) -> str:
        if self.descriptor == "pixel":
            return f"pixel:{self.patches_per_image}"
        return f"patch{self.patch_size}x{self.patch_size}:{self.patches_per_image}"


@dataclass(frozen=True)
class SwdResult:
    distance: float
    config: SwdConfig
    count_a: int
    count_b: int

    @property
    def record(self) -> str:
        c = self.config
        return (
            f"swd descriptor={c.digest()} projections={c.projections} seed={c.seed} "
            f"n_a={self.count_a} n_b={self.count_b} distance={self.distance!r}"
        )


def image_descriptors(img: np.ndarray, uid: str, config: SwdConfig) -> np.ndarray:
    """Sample per-image descriptors from the image's own seeded stream."""
    rng = stream(config.seed, f"swd/{uid}")
    h, w, _ = img.shape
    n = config.patches_per_image
    if config.descriptor == "pixel":
        ys = rng.integers(0, h, size=n)
        xs = rng.integers(0, w, size=n)
        return img[ys, xs, :].reshape(n, 3)
    k = config.patch_size
    if h < k or w < k:
        raise DatasetError(f"image {uid} smaller than the {k}x{k} descriptor patch")
    ys = rng.integers(0, h - k + 1, size=n)
    xs = rng.integers(0, w - k + 1, size=n)
    out = np.empty((n, k * k * 3), dtype=img.dtype)
    for i, (y, x) in enumerate(zip(ys, xs)):
        out[i] = img[y : y + k, x : x + k, :].ravel()
    return out


def set_descriptors(manifest: DatasetManifest, config: SwdConfig) -> np.ndarray:
    if len(manifest) == 0:
        raise DatasetError("cannot compute descriptors of an empty dataset")
    parts = [
        image_descriptors(load_image(manifest.image_path(e)), e.uid, config)
        for e in manifest.entries
    ]
    return np.concatenate(parts, axis=0)


def sliced_w1(desc_a: np.ndarray, desc_b: np.ndarray, directions: np.ndarray) -> float:
    """Mean over directions of the sorted-difference 1-D Wasserstein-1.

    Requires matched sample counts; ``directions`` has one unit row per
    projection.
    """
    if desc_a.shape[0] != desc_b.shape[0]:
        raise ValueError("sliced_w1 requires matched descriptor counts")
    if desc_a.shape[1] != directions.shape[1]:
        raise ValueError("direction dimensionality does not match descriptors")
    pa = desc_a @ directions.T
    pb = desc_b @ directions.T
    pa.sort(axis=0)
    pb.sort(axis=0)
    return float(np.abs(pa - pb).mean())


def _match_counts(desc: np.ndarray, target: int, seed: int) -> np.ndarray:
    if desc.shape[0] == target:
        return desc
    rng = stream(seed, f"swd/subsample/{desc.shape[0]}->{target}")
    idx = rng.choice(desc.shape[0], size=target, replace=False)
    idx.sort()
    return desc[idx]


def random_directions(dim: int, count: int, seed: int) -> np.ndarray:
    rng = stream(seed, f"swd/directions/{dim}")
    d = rng.normal(size=(count, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def swd(set_a: DatasetManifest, set_b: DatasetManifest, config: SwdConfig) -> SwdResult:
    """Sliced Wasserstein distance between two image sets.

    The larger descriptor set is subsampled (seeded, per set) to match
    counts; doing this per set keeps the result symmetric in its
    arguments under a shared seed.
    """
    da = set_descriptors(set_a, config)
    db = set_descriptors(set_b, config)
    n = min(da.shape[0], db.shape[0])
    da = _match_counts(da, n, config.seed)
    db = _match_counts(db, n, config.seed)
    dirs = random_directions(da.shape[1], config.projections, config.seed)
    dist = sliced_w1(da, db, dirs)
    return SwdResult(distance=dist, config=config, count_a=da.shape[0], count_b=db.shape[0])


# ---------------------------------------------------------------------------
# Discriminator accuracy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AccuracyReport:
    accuracy: float
    real_rate: float  # fraction of real images scored >= 0.5
    variant_rate: float  # fraction of variants scored < 0.5
    n_real: int
    n_variant: int

    @property
    def record(self) -> str:
        return (
            f"accuracy overall={self.accuracy:.4f} real={self.real_rate:.4f} "
            f"variant={self.variant_rate:.4f} n_real={self.n_real} n_variant={self.n_variant}"
        )


def score_manifest(d: Discriminator, manifest: DatasetManifest, batch_size: int = 64) -> np.ndarray:
    """D's sigmoid scores for every image in a manifest, in manifest order."""
    h, w = d.spec.resolution
    dt = d.spec.np_dtype()
    scores = []
    for lo in range(0, len(manifest), batch_size):
        chunk = manifest.entries[lo : lo + batch_size]
        imgs = np.stack(
            [load_image(manifest.image_path(e), dtype=dt, size=(w, h)) for e in chunk]
        )
        xnet = np.ascontiguousarray((imgs * 2.0 - 1.0).transpose(0, 3, 1, 2))
        scores.append(d.forward(Tensor(xnet)).data[:, 0])
    return np.concatenate(scores)


def classifier_accuracy(
    d: Discriminator | Checkpoint,
    real: DatasetManifest,
    variants: DatasetManifest,
    batch_size: int = 64,
) -> AccuracyReport:
    """Threshold D at 0.5 and report overall plus per-class rates."""
    if isinstance(d, Checkpoint):
        d = d.build()
    sr = score_manifest(d, real, batch_size)
    sv = score_manifest(d, variants, batch_size)
    real_rate = float((sr >= 0.5).mean())
    variant_rate = float((sv < 0.5).mean())
    correct = (sr >= 0.5).sum() + (sv < 0.5).sum()
    return AccuracyReport(
        accuracy=float(correct / (len(sr) + len(sv))),
        real_rate=real_rate,
        variant_rate=variant_rate,
        n_real=len(sr),
        n_variant=len(sv),
    )
