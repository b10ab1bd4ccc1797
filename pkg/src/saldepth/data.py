"""Dataset loading, domain-paired batch sampling, and the synthetic toy set.

Two source datasets drive training: an RGB saliency source (images + binary
masks) and an RGB-D source (images + depth maps, masks withheld from the
training path). Samples are immutable after construction and safe to share
across threads; the batch sequence is a pure function of (seed, step), so
prefetching can never change it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .config import Domain, ToyDatasetSpec

log = logging.getLogger(__name__)

IMAGE_EXTS = (".png", ".jpg", ".jpeg")
_DEPTH_RANGE_EPS = 1e-8


class DatasetError(Exception):
    pass


class DatasetLayoutError(DatasetError):
    """A required dataset directory is missing."""


class EmptyDatasetError(DatasetError):
    """No image/label pair could be matched."""


@dataclass(frozen=True)
class ImageSample:
    """One image with whatever supervision its source domain provides.

    rgb is [3, H, W] in [0, 1]; saliency_gt is [1, H, W] in {0, 1};
    depth_gt is [1, H, W] min-max normalized to [0, 1] per image.
    """

    id: str
    rgb: np.ndarray
    domain: Domain
    saliency_gt: np.ndarray | None = None
    depth_gt: np.ndarray | None = None

    def __post_init__(self):
        for arr in (self.rgb, self.saliency_gt, self.depth_gt):
            if arr is not None:
                arr.flags.writeable = False


@dataclass
class DomainBatch:
    """One aligned pair of same-size mini-batches, one per source domain."""

    rgb_batch: list[ImageSample]
    rgbd_batch: list[ImageSample]

    def __post_init__(self):
        if not self.rgb_batch or not self.rgbd_batch:
            raise ValueError("both sides of a DomainBatch must be non-empty")
        if len(self.rgb_batch) != len(self.rgbd_batch):
            raise ValueError("rgb and rgbd sides must have equal batch size")


def _resize(img: Image.Image, size: int, resample) -> Image.Image:
    if img.size == (size, size):
        return img
    return img.resize((size, size), resample)


def _load_rgb(path, size):
    img = _resize(Image.open(path).convert("RGB"), size, Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def _load_mask(path, size):
    # nearest keeps the mask binary through resizing
    img = _resize(Image.open(path).convert("L"), size, Image.NEAREST)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return (arr > 0.5).astype(np.float32)[None]


def normalize_depth(arr: np.ndarray) -> np.ndarray:
    """Per-image min-max to [0, 1]; constant maps go to all-zeros."""
    lo, hi = float(arr.min()), float(arr.max())
    if hi - lo > _DEPTH_RANGE_EPS:
        return ((arr - lo) / (hi - lo)).astype(np.float32)
    return np.zeros_like(arr, dtype=np.float32)


def _load_depth(path, size):
    img = _resize(Image.open(path).convert("L"), size, Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return normalize_depth(arr)[None]


def _label_path(label_dir: Path, stem: str) -> Path | None:
    for ext in IMAGE_EXTS:
        candidate = label_dir / (stem + ext)
        if candidate.exists():
            return candidate
    return None


def load_dataset(root_dir, domain: Domain, input_size: int) -> list[ImageSample]:
    """Load one source split from ``<root>/images`` plus its label directory.

    RGB_SOURCE expects ``gt/`` masks; RGBD_SOURCE expects ``depth/`` maps and
    never reads saliency masks, so the training path cannot touch them.
    Images without a matching label are skipped with a warning.
    """
    root = Path(root_dir)
    images_dir = root / "images"
    label_name = "gt" if domain is Domain.RGB_SOURCE else "depth"
    label_dir = root / label_name
    if not images_dir.is_dir():
        raise DatasetLayoutError(f"missing directory: {images_dir}")
    if not label_dir.is_dir():
        raise DatasetLayoutError(f"missing directory: {label_dir}")

    samples = []
    for img_path in sorted(p for p in images_dir.iterdir() if p.suffix.lower() in IMAGE_EXTS):
        stem = img_path.stem
        lbl = _label_path(label_dir, stem)
        if lbl is None:
            log.warning("skipping %s: no %s label for basename %r", img_path, label_name, stem)
            continue
        rgb = _load_rgb(img_path, input_size)
        if domain is Domain.RGB_SOURCE:
            sample = ImageSample(id=stem, rgb=rgb, domain=domain,
                                 saliency_gt=_load_mask(lbl, input_size))
        else:
            sample = ImageSample(id=stem, rgb=rgb, domain=domain,
                                 depth_gt=_load_depth(lbl, input_size))
        samples.append(sample)

    if not samples:
        raise EmptyDatasetError(f"no image/{label_name} pairs matched under {root}")
    return samples


class PairSampler:
    """Yields DomainBatch objects pairing the two sources.

    The index sequence of each side is a concatenation of per-epoch
    permutations, derived from (seed, side, epoch) alone, so ``batch_at`` is a
    pure function of the step index: resuming a run or prefetching in parallel
    cannot alter the sequence. An epoch is one pass over the larger dataset;
    the smaller side reshuffles and cycles to match.
    """

    def __init__(self, rgb_set: list[ImageSample], rgbd_set: list[ImageSample],
                 batch_size: int, seed: int):
        if not rgb_set or not rgbd_set:
            raise ValueError("both datasets must be non-empty")
        if batch_size > len(rgb_set) or batch_size > len(rgbd_set):
            raise ValueError(
                f"batch_size {batch_size} exceeds a dataset size "
                f"({len(rgb_set)} rgb, {len(rgbd_set)} rgbd)"
            )
        self.rgb_set = rgb_set
        self.rgbd_set = rgbd_set
        self.batch_size = batch_size
        self.seed = seed
        self._perm_cache: dict[tuple[int, int], np.ndarray] = {}

    @property
    def batches_per_epoch(self) -> int:
        return max(len(self.rgb_set), len(self.rgbd_set)) // self.batch_size

    def _perm(self, side: int, epoch: int) -> np.ndarray:
        key = (side, epoch)
        if key not in self._perm_cache:
            n = len(self.rgb_set) if side == 0 else len(self.rgbd_set)
            rng = np.random.default_rng([self.seed, side, epoch])
            self._perm_cache[key] = rng.permutation(n)
        return self._perm_cache[key]

    def _indices(self, side: int, start: int, count: int) -> list[int]:
        n = len(self.rgb_set) if side == 0 else len(self.rgbd_set)
        out = []
        for draw in range(start, start + count):
            epoch, pos = divmod(draw, n)
            out.append(int(self._perm(side, epoch)[pos]))
        return out

    def batch_at(self, step: int) -> DomainBatch:
        if step < 0:
            raise ValueError("step must be >= 0")
        start = step * self.batch_size
        rgb_idx = self._indices(0, start, self.batch_size)
        rgbd_idx = self._indices(1, start, self.batch_size)
        return DomainBatch(
            rgb_batch=[self.rgb_set[i] for i in rgb_idx],
            rgbd_batch=[self.rgbd_set[i] for i in rgbd_idx],
        )

    def iter_batches(self, n_batches: int):
        for step in range(n_batches):
            yield self.batch_at(step)


def make_pair_sampler(rgb_set, rgbd_set, batch_size: int, seed: int) -> PairSampler:
    return PairSampler(rgb_set, rgbd_set, batch_size, seed)


_SHAPE_KINDS = ("disk", "box", "ellipse")


def _draw_shape(mask_out: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Rasterize one random shape, OR it into mask_out, return its own mask."""
    s = mask_out.shape[0]
    kind = _SHAPE_KINDS[rng.integers(len(_SHAPE_KINDS))]
    r = rng.uniform(0.10, 0.24) * s
    cy = rng.uniform(r + 1, s - r - 1)
    cx = rng.uniform(r + 1, s - r - 1)
    yy, xx = np.mgrid[0:s, 0:s]
    if kind == "disk":
        m = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    elif kind == "box":
        ry = r * rng.uniform(0.6, 1.0)
        rx = r * rng.uniform(0.6, 1.0)
        m = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
    else:
        ry = r * rng.uniform(0.5, 1.0)
        rx = r
        m = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    mask_out |= m
    return m


def _upsample_field(coarse: np.ndarray, size: int) -> np.ndarray:
    """Bilinear blow-up of a coarse [h, w, c] field to [size, size, c]."""
    img = Image.fromarray(coarse.astype(np.uint8))
    return np.asarray(img.resize((size, size), Image.BILINEAR), dtype=np.float32)


_SHAPE_PALETTE = (15, 150)  # shared across domains: dark saturated fills


def _add_distractors(img, size, count, rng, texture_sigma):
    """Shape-palette rectangles overlaid with texture: same colors as real
    shapes, distinguishable only by their roughness (and, on the RGB-D side,
    by being far in depth). The RGB-D domain uses much subtler texture, so a
    foreground rule learned on the RGB source alone misfires there."""
    for _ in range(count):
        ph = int(rng.integers(size // 9, size // 4))
        pw = int(rng.integers(size // 9, size // 4))
        py = int(rng.integers(0, size - ph))
        px = int(rng.integers(0, size - pw))
        color = rng.uniform(*_SHAPE_PALETTE, size=3)
        patch = color + rng.normal(0, texture_sigma, (ph, pw, 3))
        img[py:py + ph, px:px + pw] = patch


def _paint_shapes(img, shape_masks, rng):
    for m in shape_masks:
        color = rng.uniform(*_SHAPE_PALETTE, size=3)
        img[m] = color + rng.normal(0, 2.0, (int(m.sum()), 3))


def _render_rgb_source(size: int, n_shapes: int, rng: np.random.Generator):
    """The supervised saliency domain: lighter, mildly cluttered backgrounds
    with a couple of textured distractor patches. Hard enough that saliency
    supervision keeps training signal alive for the whole run."""
    coarse = rng.uniform(150, 245, size=(max(2, size // 6), max(2, size // 6), 3))
    img = _upsample_field(coarse, size)
    _add_distractors(img, size, int(rng.integers(1, 3)), rng, texture_sigma=32.0)
    img += rng.normal(0, 5.0, img.shape)

    mask = np.zeros((size, size), dtype=bool)
    shape_masks = [_draw_shape(mask, rng) for _ in range(n_shapes)]
    _paint_shapes(img, shape_masks, rng)
    return np.clip(img, 0, 255).astype(np.uint8), mask


def _render_rgbd_source(size: int, n_shapes: int, rng: np.random.Generator):
    """The depth-supervised domain: darker, heavily cluttered backgrounds,
    more distractors, plus a uniform-per-shape depth map (near = dark);
    distractor patches belong to the far background."""
    coarse = rng.uniform(70, 215, size=(max(2, size // 8), max(2, size // 8), 3))
    img = _upsample_field(coarse, size)
    _add_distractors(img, size, int(rng.integers(4, 8)), rng, texture_sigma=12.0)
    img += rng.normal(0, 9.0, img.shape)

    mask = np.zeros((size, size), dtype=bool)
    depth = np.full((size, size), float(rng.uniform(205, 240)), dtype=np.float32)
    shape_masks = [_draw_shape(mask, rng) for _ in range(n_shapes)]
    shape_depths = sorted(rng.uniform(30, 160, size=n_shapes), reverse=True)
    _paint_shapes(img, shape_masks, rng)
    for m, d in zip(shape_masks, shape_depths):
        depth[m] = d
    return (np.clip(img, 0, 255).astype(np.uint8), mask,
            np.clip(depth, 0, 255).astype(np.uint8))


def _save_gray(arr: np.ndarray, path: Path):
    Image.fromarray(arr, mode="L").save(path)


def generate_toy_dataset(spec: ToyDatasetSpec, out_dir) -> dict:
    """Write the toy RGB-source and RGB-D-source splits under out_dir.

    Layout mirrors the loader contract: ``rgb/{images,gt}`` and
    ``rgbd/{images,depth,gt}``; the rgbd masks exist only for evaluation.
    Generation is deterministic per (seed, split, index), so re-running
    produces bit-identical files.
    """
    spec.validate()
    out = Path(out_dir)
    rgb_root = out / "rgb"
    rgbd_root = out / "rgbd"
    for sub in ("images", "gt"):
        (rgb_root / sub).mkdir(parents=True, exist_ok=True)
    for sub in ("images", "depth", "gt"):
        (rgbd_root / sub).mkdir(parents=True, exist_ok=True)

    lo, hi = spec.shapes_per_image
    for i in range(spec.n_rgb):
        rng = np.random.default_rng([spec.seed, 0, i])
        n_shapes = int(rng.integers(lo, hi + 1))
        img, mask = _render_rgb_source(spec.image_size, n_shapes, rng)
        name = f"rgb_{i:04d}.png"
        Image.fromarray(img).save(rgb_root / "images" / name)
        _save_gray(mask.astype(np.uint8) * 255, rgb_root / "gt" / name)

    for i in range(spec.n_rgbd):
        rng = np.random.default_rng([spec.seed, 1, i])
        n_shapes = int(rng.integers(lo, hi + 1))
        img, mask, depth = _render_rgbd_source(spec.image_size, n_shapes, rng)
        name = f"rgbd_{i:04d}.png"
        Image.fromarray(img).save(rgbd_root / "images" / name)
        _save_gray(depth, rgbd_root / "depth" / name)
        _save_gray(mask.astype(np.uint8) * 255, rgbd_root / "gt" / name)

    return {
        "rgb_root": str(rgb_root),
        "rgbd_root": str(rgbd_root),
        "n_rgb": spec.n_rgb,
        "n_rgbd": spec.n_rgbd,
        "image_size": spec.image_size,
    }
