"""
Embedding Contour Overlap

Both embedding sets are projected to 2-D with a PCA fitted on their union.
The convex hull of each projected set is rasterized on a square grid over
the joint bounding box; the real hull is treated as ground truth and the
synthetic hull as the prediction.
"""

from typing import Dict, Optional, Tuple

import numpy as np
from matplotlib.path import Path as PolygonPath
from scipy.spatial import ConvexHull, QhullError

from .segmentation import ConfusionCounts, seg_scores


def project_pca(real: np.ndarray, synth: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    2-D PCA projection fitted on the union of both sets.

    Component signs are fixed so the largest-magnitude loading is positive.
    """
    real = np.asarray(real, dtype=np.float64)
    synth = np.asarray(synth, dtype=np.float64)
    if real.ndim != 2 or synth.ndim != 2 or real.shape[1] != synth.shape[1]:
        raise ValueError(f"Embedding sets must be (n, d) with equal d, got {real.shape}, {synth.shape}")
    union = np.vstack([real, synth])
    mean = union.mean(axis=0)
    _, _, vt = np.linalg.svd(union - mean, full_matrices=False)
    comps = vt[:2]
    if comps.shape[0] < 2:
        comps = np.vstack([comps, np.zeros((2 - comps.shape[0], union.shape[1]))])
    for k in range(comps.shape[0]):
        pivot = np.argmax(np.abs(comps[k]))
        if comps[k, pivot] < 0:
            comps[k] = -comps[k]
    return (real - mean) @ comps.T, (synth - mean) @ comps.T


def convex_hull(points: np.ndarray) -> np.ndarray:
    """
    Hull vertices (counter-clockwise) of a 2-D point set.

    Raises:
        ValueError: fewer than 3 points or all points collinear
    """
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] < 3:
        raise ValueError(f"Need >= 3 points for a hull, got {points.shape[0]}")
    try:
        hull = ConvexHull(points)
    except QhullError as e:
        raise ValueError(f"Degenerate point set (collinear or coincident): {e}") from None
    return points[hull.vertices]


def rasterize(polygon: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Grid cells whose centres fall inside a polygon, shape (len(ys), len(xs))."""
    gx, gy = np.meshgrid(xs, ys)
    inside = PolygonPath(polygon).contains_points(np.column_stack([gx.ravel(), gy.ravel()]))
    return inside.reshape(gy.shape)


def contour_overlap(real: np.ndarray, synth: np.ndarray, grid: int = 512,
                    projected: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> Dict[str, float]:
    """
    Overlap scores of the real and synthetic hulls.

    Args:
        real: (n, d) real embeddings
        synth: (m, d) synthetic embeddings
        grid: Raster resolution per axis
        projected: Precomputed 2-D projections (skips PCA)

    Returns:
        Dict with iou, ppv, tpr and f1
    """
    p_real, p_synth = projected if projected is not None else project_pca(real, synth)
    real_hull = convex_hull(p_real)
    synth_hull = convex_hull(p_synth)

    both = np.vstack([p_real, p_synth])
    lo = both.min(axis=0)
    hi = both.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    step = span / grid
    xs = lo[0] + step[0] * (np.arange(grid) + 0.5)
    ys = lo[1] + step[1] * (np.arange(grid) + 0.5)

    gt = rasterize(real_hull, xs, ys)
    pred = rasterize(synth_hull, xs, ys)
    tp = int(np.count_nonzero(gt & pred))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(gt & ~pred))
    scores = seg_scores(ConfusionCounts(tp, fp, fn, gt.size - tp - fp - fn))
    return {'iou': scores.iou, 'ppv': scores.ppv, 'tpr': scores.tpr, 'f1': scores.f1}
