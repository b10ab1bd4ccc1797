"""Saliency evaluation metrics: MAE, adaptive F-measure, S-measure, E-measure.

All metrics take a prediction map in [0, 1] and a binary ground-truth mask
of the same shape, and return a scalar in [0, 1]. F- and E-measure binarize
the prediction at the adaptive threshold min(1, 2 * mean(pred)).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

FBETA_SQUARED = 0.3
S_MEASURE_ALPHA = 0.5
_EPS = 1e-20


def _check_pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return pred, (gt > 0.5)


def adaptive_threshold(pred) -> float:
    return min(1.0, 2.0 * float(np.mean(pred)))


def mae(pred, gt) -> float:
    pred, gt = _check_pair(pred, gt)
    return float(np.mean(np.abs(pred - gt)))


# S-measure pieces: object-aware similarity on the (inverted) foreground and
# background, plus SSIM-style block similarity around the mask centroid.


def f_measure(pred, gt) -> float:
    """Adaptive-threshold F-beta (beta^2 = 0.3) of the binarized prediction."""
    pred, gt = _check_pair(pred, gt)
    if not gt.any():
        raise ValueError("f_measure undefined: ground truth has no positive pixel")
    binary = pred >= adaptive_threshold(pred)
    tp = float(np.logical_and(binary, gt).sum())
    n_pred = float(binary.sum())
    n_gt = float(gt.sum())
    precision = tp / n_pred if n_pred > 0 else 0.0
    recall = tp / n_gt
    denom = FBETA_SQUARED * precision + recall
    if denom == 0:
        return 0.0
    return float((1 + FBETA_SQUARED) * precision * recall / denom)


def _object_score(values: np.ndarray) -> float:
    x = float(values.mean())
    sigma = float(values.std())
    return 2.0 * x / (x * x + 1.0 + sigma + _EPS)


def _s_object(pred, gt) -> float:
    fg = pred[gt]
    bg = 1.0 - pred[~gt]
    u = float(gt.mean())
    return u * _object_score(fg) + (1 - u) * _object_score(bg)


def _gt_centroid_boundaries(gt) -> tuple[int, int]:
    """Grid boundaries nearest the mask centroid (mirror-symmetric split)."""
    rows, cols = gt.shape
    total = gt.sum()
    if total == 0:
        return round(rows / 2), round(cols / 2)
    ys = (gt.sum(axis=1) * np.arange(rows)).sum() / total
    xs = (gt.sum(axis=0) * np.arange(cols)).sum() / total
    return int(np.round(ys + 0.5)), int(np.round(xs + 0.5))


def _ssim_like(pred_block, gt_block) -> float:
    gtf = gt_block.astype(np.float64)
    n = pred_block.size
    x = float(pred_block.mean())
    y = float(gtf.mean())
    sigma_x2 = float(((pred_block - x) ** 2).sum()) / (n - 1 + _EPS)
    sigma_y2 = float(((gtf - y) ** 2).sum()) / (n - 1 + _EPS)
    sigma_xy = float(((pred_block - x) * (gtf - y)).sum()) / (n - 1 + _EPS)
    alpha = 4 * x * y * sigma_xy
    beta = (x * x + y * y) * (sigma_x2 + sigma_y2)
    if alpha != 0:
        return alpha / (beta + _EPS)
    return 1.0 if beta == 0 else 0.0


def _s_region(pred, gt) -> float:
    cy, cx = _gt_centroid_boundaries(gt)
    h, w = gt.shape
    area = h * w
    score = 0.0
    for ys, xs in ((slice(0, cy), slice(0, cx)), (slice(0, cy), slice(cx, w)),
                   (slice(cy, h), slice(0, cx)), (slice(cy, h), slice(cx, w))):
        gt_block = gt[ys, xs]
        weight = gt_block.size / area
        if gt_block.size == 0:
            continue
        score += weight * _ssim_like(pred[ys, xs], gt_block)
    return score


def s_measure(pred, gt) -> float:
    """Structure measure: object-aware plus 4-block region-aware similarity."""
    pred, gt = _check_pair(pred, gt)
    y = float(gt.mean())
    if y == 0:
        score = 1.0 - float(pred.mean())
    elif y == 1:
        score = float(pred.mean())
    else:
        score = (S_MEASURE_ALPHA * _s_object(pred, gt)
                 + (1 - S_MEASURE_ALPHA) * _s_region(pred, gt))
    return float(np.clip(score, 0.0, 1.0))


def e_measure(pred, gt) -> float:
    """Enhanced-alignment measure of the adaptively binarized prediction.

    Both maps are mean-centered; the alignment matrix is quadratically
    enhanced and averaged over pixels. Degenerate all-background or
    all-foreground ground truth falls back to direct (mis)match scoring.
    """
    pred, gt = _check_pair(pred, gt)
    binary = (pred >= adaptive_threshold(pred)).astype(np.float64)
    gtf = gt.astype(np.float64)
    if gtf.mean() == 0:
        enhanced = 1.0 - binary
    elif gtf.mean() == 1:
        enhanced = binary
    else:
        fm = binary - binary.mean()
        gc = gtf - gtf.mean()
        align = 2 * gc * fm / (gc * gc + fm * fm + _EPS)
        enhanced = (align + 1) ** 2 / 4
    return float(np.clip(enhanced.mean(), 0.0, 1.0))


@dataclass
class EvalResult:
    mae: float
    f_measure: float
    s_measure: float
    e_measure: float
    n_images: int
    f_skipped: int = 0

    def csv_row(self, dataset: str) -> str:
        return (f"{dataset},{self.mae:.6f},{self.f_measure:.6f},"
                f"{self.s_measure:.6f},{self.e_measure:.6f},{self.n_images}")


EVAL_CSV_HEADER = "dataset,mae,f_measure,s_measure,e_measure,n_images"


def _load_gray01(path: Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L"), dtype=np.float64) / 255.0


def evaluate_pairs(pairs) -> EvalResult:
    """Aggregate per-image metrics over (pred, gt) array pairs.

    Images whose ground truth has no positive pixel are skipped for the
    F-measure only; the skip count is reported on the result.
    """
    maes, fs, ss, es = [], [], [], []
    f_skipped = 0
    for pred, gt in pairs:
        if pred.shape != gt.shape:
            h, w = np.asarray(gt).shape
            pred = np.asarray(
                Image.fromarray(np.asarray(pred, dtype=np.float32), mode="F").resize(
                    (w, h), Image.BILINEAR), dtype=np.float64)
        maes.append(mae(pred, gt))
        ss.append(s_measure(pred, gt))
        es.append(e_measure(pred, gt))
        if (np.asarray(gt) > 0.5).any():
            fs.append(f_measure(pred, gt))
        else:
            f_skipped += 1
    if not maes:
        raise ValueError("no prediction/ground-truth pairs to evaluate")
    if f_skipped:
        log.warning("f_measure skipped %d image(s) with empty ground truth", f_skipped)
    return EvalResult(
        mae=float(np.mean(maes)),
        f_measure=float(np.mean(fs)) if fs else 0.0,
        s_measure=float(np.mean(ss)),
        e_measure=float(np.mean(es)),
        n_images=len(maes),
        f_skipped=f_skipped,
    )


def evaluate_dataset(pred_dir, gt_dir) -> EvalResult:
    """Score a directory of prediction maps against ground-truth masks,
    aligned by file basename."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    preds = {p.stem: p for p in sorted(pred_dir.iterdir())
             if p.suffix.lower() in (".png", ".jpg", ".jpeg")}
    gts = {p.stem: p for p in sorted(gt_dir.iterdir())
           if p.suffix.lower() in (".png", ".jpg", ".jpeg")}
    stems = sorted(set(preds) & set(gts))
    if not stems:
        raise ValueError(f"no basenames shared between {pred_dir} and {gt_dir}")

    def gen():
        for stem in stems:
            yield _load_gray01(preds[stem]), _load_gray01(gts[stem]) > 0.5

    return evaluate_pairs(gen())


def write_eval_csv(path, dataset: str, result: EvalResult) -> None:
    path = Path(path)
    new_file = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(EVAL_CSV_HEADER.split(","))
        writer.writerow(result.csv_row(dataset).split(","))
