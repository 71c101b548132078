"""Evaluation metrics: superpixel (ASA, BR/BP), pixel confusion metrics,
and vector instance metrics (AP50/75, WC, BF, HD, VNE).

Vector metric formulas follow the common instance-polygon evaluation
convention (greedy one-to-one IoU matching); exact definitions are noted
per function since sources differ.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.spatial import cKDTree

from .synth import label_boundaries
from .vectorize import FootprintPolygon, rasterize_polygon


class UndefinedMetricError(ValueError):
    pass


@dataclass
class MetricReport:
    name: str
    value: float
    support: int = 0
    params: dict = field(default_factory=dict)


def asa(m: np.ndarray, gt_instances: np.ndarray) -> float:
    """Achievable segmentation accuracy; background counts as one segment."""
    s = m.size
    n_sp = int(m.max()) + 1
    n_gt = int(gt_instances.max()) + 1
    joint = np.bincount((m.astype(np.int64) * n_gt + gt_instances.astype(np.int64)).reshape(-1),
                        minlength=n_sp * n_gt).reshape(n_sp, n_gt)
    return float(joint.max(axis=1).sum() / s)


def default_boundary_tol(shape: tuple[int, int]) -> int:
    return max(1, int(round(0.0025 * float(np.hypot(*shape)))))


def br_bp(sp_boundary: np.ndarray, gt_boundary: np.ndarray,
          tol: int | None = None) -> tuple[float, float]:
    """Boundary recall and precision at a Chebyshev pixel tolerance."""
    if not gt_boundary.any():
        raise UndefinedMetricError("ground-truth boundary set is empty")
    if tol is None:
        tol = default_boundary_tol(gt_boundary.shape)
    size = 2 * tol + 1
    sp_near = maximum_filter(sp_boundary.astype(np.uint8), size=size) > 0
    gt_near = maximum_filter(gt_boundary.astype(np.uint8), size=size) > 0
    br = float((gt_boundary & sp_near).sum() / gt_boundary.sum())
    bp = float((sp_boundary & gt_near).sum() / sp_boundary.sum()) if sp_boundary.any() else 0.0
    return br, bp


def pixel_metrics(pred: np.ndarray, gt: np.ndarray) -> dict[str, float]:
    p, g = pred > 0, gt > 0
    tp = float((p & g).sum())
    fp = float((p & ~g).sum())
    fn = float((~p & g).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    iou = tp / (tp + fp + fn) if tp + fp + fn else 0.0
    return {"precision": precision, "recall": recall, "f1": f1, "iou": iou}


# ---------------------------------------------------------------------------
# Vector metrics
# ---------------------------------------------------------------------------

def _boundary_points(poly: FootprintPolygon, step: float = 0.5) -> np.ndarray:
    pts = []
    for ring in [poly.exterior] + poly.holes:
        n = len(ring)
        for i in range(n):
            a, b = ring[i], ring[(i + 1) % n]
            length = float(np.hypot(*(b - a)))
            k = max(1, int(np.ceil(length / step)))
            t = np.arange(k) / k
            pts.append(a[None, :] + t[:, None] * (b - a)[None, :])
    return np.concatenate(pts) if pts else np.zeros((0, 2))


def _hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    ta, tb = cKDTree(a), cKDTree(b)
    return float(max(tb.query(a)[0].max(), ta.query(b)[0].max()))


def _boundary_f(pred: FootprintPolygon, gt: FootprintPolygon, tol: float) -> float:
    pa, pb = _boundary_points(pred), _boundary_points(gt)
    da = cKDTree(pb).query(pa)[0]
    db = cKDTree(pa).query(pb)[0]
    prec = float((da <= tol).mean()) if len(da) else 0.0
    rec = float((db <= tol).mean()) if len(db) else 0.0
    return 2 * prec * rec / (prec + rec) if prec + rec else 0.0


def _match(iou: np.ndarray, thresh: float) -> list[tuple[int, int]]:
    """Greedy one-to-one matching by descending IoU above the threshold."""
    pairs = []
    used_p: set[int] = set()
    used_g: set[int] = set()
    order = np.argsort(iou, axis=None)[::-1]
    for flat in order:
        i, j = np.unravel_index(flat, iou.shape)
        if iou[i, j] < thresh:
            break
        if i in used_p or j in used_g:
            continue
        pairs.append((int(i), int(j)))
        used_p.add(int(i))
        used_g.add(int(j))
    return pairs


def vector_metrics(pred: list[FootprintPolygon], gt: list[FootprintPolygon],
                   shape: tuple[int, int], bf_tol: float = 3.0) -> dict[str, float]:
    """Instance polygon metrics via rasterized IoU at native resolution.

    AP@t: matched count / max(#pred, #gt) as a percentage.
    WC: area-weighted best IoU per ground-truth polygon.
    BF / HD / VNE: means over AP50-matched pairs.
    """
    if not gt:
        raise UndefinedMetricError("no ground-truth polygons")
    h, w = shape
    rp = [rasterize_polygon(p, h, w) for p in pred]
    rg = [rasterize_polygon(g, h, w) for g in gt]
    iou = np.zeros((len(pred), len(gt)))
    for i, a in enumerate(rp):
        for j, b in enumerate(rg):
            union = (a | b).sum()
            iou[i, j] = (a & b).sum() / union if union else 0.0

    denom = max(len(pred), len(gt))
    out: dict[str, float] = {}
    matched50 = _match(iou, 0.5) if len(pred) else []
    out["AP50"] = 100.0 * len(matched50) / denom
    out["AP75"] = 100.0 * len(_match(iou, 0.75) if len(pred) else []) / denom

    areas = np.array([r.sum() for r in rg], dtype=np.float64)
    best = iou.max(axis=0) if len(pred) else np.zeros(len(gt))
    out["WC"] = float((areas * best).sum() / areas.sum())

    if matched50:
        bfs, hds, vnes = [], [], []
        for i, j in matched50:
            bfs.append(_boundary_f(pred[i], gt[j], bf_tol))
            hds.append(_hausdorff(_boundary_points(pred[i]), _boundary_points(gt[j])))
            vg = len(gt[j].exterior)
            vnes.append(abs(len(pred[i].exterior) - vg) / vg)
        out["BF"] = float(np.mean(bfs))
        out["HD"] = float(np.mean(hds))
        out["VNE"] = float(np.mean(vnes))
    else:
        out["BF"] = 0.0
        out["HD"] = float("inf")
        out["VNE"] = float("inf")
    return out


def superpixel_boundaries(m: np.ndarray) -> np.ndarray:
    return label_boundaries(m)
