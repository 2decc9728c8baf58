"""On-disk dataset representation: PNG codec boundary and manifests.

Images live on disk as 8-bit RGB PNG, masks as 8-bit single-channel PNG
with class ids in {0, 1}.  In memory everything is floating point in
[0, 1]; quantization happens only at the file boundary, with
round-half-away-from-zero so that identical pixel data always produces
identical bytes.

A manifest lists (id, image, optional mask) entries.  Mask pairing follows
the ``name.png`` / ``name_mask.png`` convention.  Scanning is
order-deterministic (lexicographic by id) regardless of filesystem
enumeration order.
"""

from __future__ import annotations

import logging
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import DatasetError, DecodeError

log = logging.getLogger(__name__)

MASK_SUFFIX = "_mask"
NO_MASK = "-"


@dataclass(frozen=True)
class ManifestEntry:
    uid: str
    image: str  # path relative to the manifest root
    mask: str | None = None


@dataclass
class DatasetManifest:
    root: Path
    entries: list[ManifestEntry] = field(default_factory=list)
    split: str = ""

    def __len__(self) -> int:
        return len(self.entries)

    def image_path(self, entry: ManifestEntry) -> Path:
        return self.root / entry.image

    def mask_path(self, entry: ManifestEntry) -> Path | None:
        return self.root / entry.mask if entry.mask else None

    def subset(self, indices, split: str | None = None) -> "DatasetManifest":
        return DatasetManifest(
            root=self.root,
            entries=[self.entries[i] for i in indices],
            split=self.split if split is None else split,
        )


def load_image(path, dtype=np.float64, size: tuple[int, int] | None = None) -> np.ndarray:
    """Decode an 8-bit raster to (H, W, 3) floats in [0, 1].

    Grayscale inputs are promoted to three channels.  ``size`` (W, H)
    resizes bilinearly before conversion.
    """
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            im = im.convert("RGB")
            if size is not None and im.size != tuple(size):
                im = im.resize(tuple(size), PILImage.BILINEAR)
            arr = np.asarray(im, dtype=dtype)
    except DecodeError:
        raise
    except FileNotFoundError:
        raise DatasetError(f"image file not found: {path}") from None
    except Exception as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc
    return arr / 255.0


def save_image(img: np.ndarray, path) -> None:
    """Encode floats in [0, 1] as 8-bit RGB PNG, rounding half away from zero."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[-1] != 3:
        raise DatasetError(f"expected (H, W, 3) image, got shape {img.shape}")
    q = np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(q, mode="RGB").save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    """Decode a single-channel mask of class ids in {0, 1}."""
    path = Path(path)
    try:
        with PILImage.open(path) as im:
            arr = np.asarray(im.convert("L"), dtype=np.uint8)
    except Exception as exc:
        raise DecodeError(f"cannot decode mask {path}: {exc}") from exc
    return (arr > 0).astype(np.uint8)


def save_mask(mask: np.ndarray, path) -> None:
    mask = np.asarray(mask).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(mask, mode="L").save(path, format="PNG")


def copy_mask(src, dst) -> None:
    """Byte-exact mask copy; label files are never re-encoded."""
    dst = Path(dst)
    dst.parent.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(src, dst)


def _image_size(path: Path) -> tuple[int, int]:
    with PILImage.open(path) as im:
        return im.size


def scan_manifest(root, pattern: str = "*.png", split: str = "") -> DatasetManifest:
    """Build a manifest from a directory tree.

    Files matching ``pattern`` become entries unless they carry the mask
    suffix; a sibling ``<stem>_mask.png`` is paired as the entry's mask.
    Masks whose dimensions disagree with their image are rejected with a
    diagnostic, dangling masks produce a warning, zero usable images is an
    error.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"not a directory: {root}")
    files = sorted(root.rglob(pattern))
    images: dict[str, Path] = {}
    masks: dict[str, Path] = {}
    for f in files:
        rel = f.relative_to(root)
        stem = rel.with_suffix("").as_posix()
        if stem.endswith(MASK_SUFFIX):
            masks[stem[: -len(MASK_SUFFIX)]] = f
        else:
            images[stem] = f

    for stem, m in sorted(masks.items()):
        if stem not in images:
            log.warning("dangling mask with no image: %s", m)

    entries: list[ManifestEntry] = []
    for stem in sorted(images):
        img = images[stem]
        mask = masks.get(stem)
        mask_rel = None
        if mask is not None:
            if _image_size(img) != _image_size(mask):
                log.warning(
                    "rejecting %s: mask dimensions %s do not match image %s",
                    stem, _image_size(mask), _image_size(img),
                )
                continue
            mask_rel = mask.relative_to(root).as_posix()
        entries.append(ManifestEntry(uid=stem, image=img.relative_to(root).as_posix(), mask=mask_rel))

    if not entries:
        raise DatasetError(f"no images matching {pattern!r} under {root}")
    return DatasetManifest(root=root, entries=entries, split=split)


def write_manifest(manifest: DatasetManifest, path) -> None:
    """One line per entry: id<TAB>image_path<TAB>mask_path, '-' for no mask."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{e.uid}\t{e.image}\t{e.mask or NO_MASK}" for e in manifest.entries]
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path, split: str = "") -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    root = path.parent
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DatasetError(f"{path}:{lineno}: expected 3 tab-separated fields")
        uid, image, mask = parts
        if uid in seen:
            raise DatasetError(f"{path}:{lineno}: duplicate id {uid!r}")
        seen.add(uid)
        entries.append(ManifestEntry(uid=uid, image=image, mask=None if mask == NO_MASK else mask))
    if not entries:
        raise DatasetError(f"manifest is empty: {path}")
    missing = [e for e in entries if not (root / e.image).is_file()]
    if missing:
        raise DatasetError(f"{path}: {len(missing)} referenced image files missing, first: {missing[0].image}")
    return DatasetManifest(root=root, entries=entries, split=split)


def resolve_manifest(path_or_dir, pattern: str = "*.png") -> DatasetManifest:
    """Accept either a manifest file or a directory to scan."""
    p = Path(path_or_dir)
    if p.is_dir():
        return scan_manifest(p, pattern)
    return read_manifest(p)
