"""Gaussian sampling of adjustment parameters and adversarial variants.

The adjustment parameters are drawn from a zero-mean normal whose width is
chosen so that a draw lands inside [-1, 1] with a configured probability p:
the defining condition integrates the density over [-1, 1], which gives
sigma = 1 / Phi^-1((1+p)/2).  Out-of-range draws are clipped into the
operator's legal range by default (a rejection mode is available).

Every per-image draw comes from its own counter-based stream keyed by
(seed, image id, replica), so results are reproducible and independent of
the order in which images are processed.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import colorops
from .colorops import AdjustParams
from .dataset import DatasetManifest, ManifestEntry, load_image, save_image, copy_mask
from .errors import DatasetError, InvalidProbabilityError

log = logging.getLogger(__name__)

_COMPONENT_RANGES = (
    colorops.BRIGHTNESS_RANGE,
    colorops.SATURATION_RANGE,
    colorops.CONTRAST_RANGE,
)


# ---------------------------------------------------------------------------
# Inverse normal CDF and the sigma-from-p solver
# ---------------------------------------------------------------------------

# Acklam's rational approximation to the standard normal quantile,
# refined below with Newton steps on the erf-based CDF.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def _normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def normal_quantile(q: float) -> float:
    """Standard normal quantile, accurate to ~1e-15.

    Rational initial guess followed by two Newton iterations on the CDF.
    """
    if not 0.0 < q < 1.0:
        raise InvalidProbabilityError(f"quantile argument must be in (0, 1), got {q}")
    if q < _P_LOW:
        u = math.sqrt(-2.0 * math.log(q))
        x = ((((( _C[0]*u + _C[1])*u + _C[2])*u + _C[3])*u + _C[4])*u + _C[5]) / \
            ((((_D[0]*u + _D[1])*u + _D[2])*u + _D[3])*u + 1.0)
    elif q <= 1.0 - _P_LOW:
        u = q - 0.5
        r = u * u
        x = ((((( _A[0]*r + _A[1])*r + _A[2])*r + _A[3])*r + _A[4])*r + _A[5]) * u / \
            (((((_B[0]*r + _B[1])*r + _B[2])*r + _B[3])*r + _B[4])*r + 1.0)
    else:
        u = math.sqrt(-2.0 * math.log(1.0 - q))
        x = -((((( _C[0]*u + _C[1])*u + _C[2])*u + _C[3])*u + _C[4])*u + _C[5]) / \
             ((((_D[0]*u + _D[1])*u + _D[2])*u + _D[3])*u + 1.0)
    for _ in range(2):
        err = _normal_cdf(x) - q
        x -= err / _normal_pdf(x)
    return x


def sigma_from_p(p: float) -> float:
    """Width of the zero-mean normal whose mass over [-1, 1] equals p."""
    if not 0.0 < p < 1.0:
        raise InvalidProbabilityError(f"coverage probability must be in (0, 1), got {p}")
    return 1.0 / normal_quantile((1.0 + p) / 2.0)


# ---------------------------------------------------------------------------
# Parameter sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplerConfig:
    p: float = 0.99
    seed: int = 0
    per_op: bool = True  # independent draw per operator vs one shared draw
    rejection: bool = False  # resample out-of-range draws instead of clipping

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise InvalidProbabilityError(f"p must be in (0, 1), got {self.p}")

    @property
    def sigma(self) -> float:
        return sigma_from_p(self.p)


def _uid_key(uid: str) -> int:
    digest = hashlib.blake2b(uid.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, uid: str, replica: int = 0) -> np.random.Generator:
    """Counter-based per-image stream; independent of processing order."""
    key = (_uid_key(uid) + replica) % (1 << 64)
    return np.random.Generator(np.random.Philox(key=[seed % (1 << 64), key]))


def _draw_triple(rng: np.random.Generator, config: SamplerConfig) -> np.ndarray:
    sigma = config.sigma
    if config.per_op:
        raw = rng.normal(0.0, sigma, size=3)
    else:
        raw = np.full(3, rng.normal(0.0, sigma))
    if config.rejection:
        for i, (lo, hi) in enumerate(_COMPONENT_RANGES):
            while not lo <= raw[i] <= hi:
                raw[i] = rng.normal(0.0, sigma)
        return raw
    return np.array([np.clip(raw[i], *_COMPONENT_RANGES[i]) for i in range(3)])


def sample_raw(config: SamplerConfig, n: int) -> np.ndarray:
    """(n, 3) of pre-clip draws; exposes the coverage property for testing."""
    out = np.empty((n, 3))
    sigma = config.sigma
    for i in range(n):
        rng = stream(config.seed, f"raw/{i}")
        if config.per_op:
            out[i] = rng.normal(0.0, sigma, size=3)
        else:
            out[i] = np.full(3, rng.normal(0.0, sigma))
    return out


def sample_params(config: SamplerConfig, n: int) -> list[AdjustParams]:
    """n adjustment triples, each from its own index-keyed stream."""
    out = []
    for i in range(n):
        rng = stream(config.seed, f"raw/{i}")
        out.append(AdjustParams.from_array(_draw_triple(rng, config)))
    return out


def draw_for_image(config: SamplerConfig, uid: str, replica: int = 0) -> AdjustParams:
    rng = stream(config.seed, uid, replica)
    return AdjustParams.from_array(_draw_triple(rng, config))


def batch_params(config: SamplerConfig, uids: list[str], replica: int = 0) -> np.ndarray:
    """(n, 3) clipped triples for a batch of image ids."""
    return np.stack([draw_for_image(config, uid, replica).as_array() for uid in uids])


# ---------------------------------------------------------------------------
# Adversarial variant datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VariantRecord:
    source_id: str
    variant_id: str
    params: AdjustParams
    seed: int


def write_variant_records(records: list[VariantRecord], path) -> None:
    """Line-delimited audit records: ids, the alpha triple, and the seed.

    Alphas are written with full precision (repr of the float64) so that
    replaying a record reproduces the variant bitwise.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for r in records:
        lines.append(
            f"{r.source_id}\t{r.variant_id}\t{r.params.brightness!r}"
            f"\t{r.params.saturation!r}\t{r.params.contrast!r}\t{r.seed}"
        )
    path.write_text("\n".join(lines) + "\n")


def read_variant_records(path) -> list[VariantRecord]:
    path = Path(path)
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 6:
            raise DatasetError(f"{path}:{lineno}: expected 6 tab-separated fields")
        src, vid, b, s, c, seed = parts
        records.append(
            VariantRecord(src, vid, AdjustParams(float(b), float(s), float(c)), int(seed))
        )
    return records


def make_adversarial_set(
    real: DatasetManifest,
    config: SamplerConfig,
    multiplier: int,
    out_dir,
) -> tuple[DatasetManifest, list[VariantRecord]]:
    """Emit multiplier x |real| color-randomized variants of a dataset.

    Masks, when present, are copied byte-identically next to each variant.
    Unreadable source images are skipped with a logged diagnostic.
    """
    if len(real) == 0:
        raise DatasetError("input manifest is empty")
    if multiplier < 1:
        raise ValueError(f"multiplier must be >= 1, got {multiplier}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries: list[ManifestEntry] = []
    records: list[VariantRecord] = []
    failures: list[tuple[str, str]] = []
    for entry in real.entries:
        try:
            img = load_image(real.image_path(entry))
        except DatasetError as exc:
            log.error("skipping %s: %s", entry.uid, exc)
            failures.append((entry.uid, str(exc)))
            continue
        for k in range(multiplier):
            params = draw_for_image(config, entry.uid, replica=k)
            variant = colorops.compose(img, params)
            uid = f"{entry.uid}_v{k}"
            image_rel = f"{uid}.png"
            save_image(variant, out_dir / image_rel)
            mask_rel = None
            if entry.mask:
                mask_rel = f"{uid}_mask.png"
                copy_mask(real.mask_path(entry), out_dir / mask_rel)
            entries.append(ManifestEntry(uid=uid, image=image_rel, mask=mask_rel))
            records.append(VariantRecord(entry.uid, uid, params, config.seed))
    if not entries:
        raise DatasetError(f"no variant produced; all {len(failures)} source images failed")
    manifest = DatasetManifest(root=out_dir, entries=entries, split="variants")
    return manifest, records


def replay_records(
    records: list[VariantRecord],
    source: DatasetManifest,
    out_dir,
) -> DatasetManifest:
    """Re-apply recorded alphas to the source images; output is bit-exact."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_uid = {e.uid: e for e in source.entries}
    entries = []
    for r in records:
        if r.source_id not in by_uid:
            raise DatasetError(f"record references unknown source id {r.source_id!r}")
        entry = by_uid[r.source_id]
        img = load_image(source.image_path(entry))
        variant = colorops.compose(img, r.params)
        image_rel = f"{r.variant_id}.png"
        save_image(variant, out_dir / image_rel)
        mask_rel = None
        if entry.mask:
            mask_rel = f"{r.variant_id}_mask.png"
            copy_mask(source.mask_path(entry), out_dir / mask_rel)
        entries.append(ManifestEntry(uid=r.variant_id, image=image_rel, mask=mask_rel))
    return DatasetManifest(root=out_dir, entries=entries, split="replay")
