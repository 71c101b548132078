"""Raster-to-vector conversion of building masks.

Contours are traced along the pixel-corner lattice (crack following), so a
polygon's area is exactly its pixel count and rasterization round-trips
bit-exactly.  Rings are then Douglas-Peucker simplified and snapped to a
dominant direction and its perpendicular.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from shapely.geometry import Polygon as ShPolygon

FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
DEFAULT_EPS = 1.5
DEFAULT_ANGLE_TOL = 15.0


class DegeneratePolygonError(ValueError):
    pass


@dataclass
class FootprintPolygon:
    exterior: np.ndarray                 # K x 2 open ring, CCW (positive shoelace)
    holes: list[np.ndarray] = field(default_factory=list)  # CW rings
    source_instance: int = 0
    stage: str = "raw"


def ring_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


# ---------------------------------------------------------------------------
# Tracing
# ---------------------------------------------------------------------------

def _component_rings(comp: np.ndarray) -> list[np.ndarray]:
    """Closed crack-edge loops of one foreground component.

    Directed so foreground stays on the consistent side; junction vertices
    (diagonal pixel contacts) resolve by the sharpest right turn, which keeps
    separate loops from merging.
    """
    h, w = comp.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = comp
    edges: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(p, q):
        edges.setdefault(p, []).append(q)

    fg = np.argwhere(comp)
    for y, x in fg:
        if not padded[y, x + 1]:          # no fg above
            add((x, y), (x + 1, y))
        if not padded[y + 2, x + 1]:      # no fg below
            add((x + 1, y + 1), (x, y + 1))
        if not padded[y + 1, x]:          # no fg left
            add((x, y + 1), (x, y))
        if not padded[y + 1, x + 2]:      # no fg right
            add((x + 1, y), (x + 1, y + 1))

    rings = []
    while edges:
        start = min(edges)
        prev = start
        cur = edges[start][0]
        _pop(edges, start, cur)
        ring = [start]
        while cur != start:
            ring.append(cur)
            outs = edges[cur]
            if len(outs) == 1:
                nxt = outs[0]
            else:
                din = (cur[0] - ring[-2][0], cur[1] - ring[-2][1])
                # sharpest right turn first: cross(din, dout) ascending
                nxt = min(outs, key=lambda q: din[0] * (q[1] - cur[1]) - din[1] * (q[0] - cur[0]))
            _pop(edges, cur, nxt)
            prev, cur = cur, nxt
        rings.append(np.array(ring, dtype=np.float64))
    return rings


def _pop(edges, p, q):
    lst = edges[p]
    lst.remove(q)
    if not lst:
        del edges[p]


def trace(mask: np.ndarray) -> list[FootprintPolygon]:
    """One polygon (exterior ring + holes) per 4-connected component."""
    mask = np.asarray(mask) > 0
    labels, n = ndimage.label(mask, structure=FOUR_CONN)
    polys = []
    for cid in range(1, n + 1):
        rings = _component_rings(labels == cid)
        areas = [ring_area(r) for r in rings]
        ext_i = int(np.argmax(np.abs(areas)))
        exterior = rings[ext_i]
        if areas[ext_i] < 0:
            exterior = exterior[::-1]
        holes = []
        for i, r in enumerate(rings):
            if i == ext_i:
                continue
            holes.append(r if areas[i] < 0 else r[::-1])
        polys.append(FootprintPolygon(exterior=exterior, holes=holes,
                                      source_instance=cid, stage="raw"))
    return polys


def rasterize_rings(rings: list[np.ndarray], height: int, width: int) -> np.ndarray:
    """Even-odd fill over pixel centers; exterior/hole pairs cancel."""
    out = np.zeros((height, width), dtype=bool)
    if not rings:
        return out
    allpts = np.concatenate(rings)
    x0 = max(0, int(np.floor(allpts[:, 0].min())))
    x1 = min(width, int(np.ceil(allpts[:, 0].max())) + 1)
    y0 = max(0, int(np.floor(allpts[:, 1].min())))
    y1 = min(height, int(np.ceil(allpts[:, 1].max())) + 1)
    if x1 <= x0 or y1 <= y0:
        return out
    ys, xs = np.mgrid[y0:y1, x0:x1]
    px, py = xs + 0.5, ys + 0.5
    inside = np.zeros(px.shape, dtype=bool)
    for ring in rings:
        n = len(ring)
        for i in range(n):
            ax, ay = ring[i]
            bx, by = ring[(i + 1) % n]
            if ay == by:
                continue
            cond = (py >= min(ay, by)) & (py < max(ay, by))
            xcross = ax + (py - ay) * (bx - ax) / (by - ay)
            inside ^= cond & (px < xcross)
    out[y0:y1, x0:x1] = inside
    return out


def rasterize_polygon(poly: FootprintPolygon, height: int, width: int) -> np.ndarray:
    return rasterize_rings([poly.exterior] + poly.holes, height, width)


# ---------------------------------------------------------------------------
# Simplification (Douglas-Peucker on closed rings)
# ---------------------------------------------------------------------------

def _dp_chain(pts: np.ndarray, eps: float) -> np.ndarray:
    """Open-chain Douglas-Peucker keeping both endpoints."""
    if len(pts) <= 2:
        return pts
    a, b = pts[0], pts[-1]
    ab = b - a
    norm = np.hypot(*ab)
    if norm == 0:
        d = np.hypot(*(pts[1:-1] - a).T)
    else:
        rel = pts[1:-1] - a
        d = np.abs(ab[0] * rel[:, 1] - ab[1] * rel[:, 0]) / norm
    i = int(np.argmax(d))
    if d[i] <= eps:
        return np.array([a, b])
    left = _dp_chain(pts[:i + 2], eps)
    right = _dp_chain(pts[i + 1:], eps)
    return np.concatenate([left[:-1], right])


def simplify(ring: np.ndarray, eps: float) -> np.ndarray:
    """Closed-ring Douglas-Peucker split at the two mutually farthest vertices."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    pts = np.asarray(ring, dtype=np.float64)
    if len(pts) < 3:
        raise DegeneratePolygonError("ring has fewer than 3 vertices")
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
    i, j = np.unravel_index(int(np.argmax(d2)), d2.shape)
    i, j = min(i, j), max(i, j)
    rolled = np.roll(pts, -i, axis=0)
    split = j - i
    half1 = _dp_chain(rolled[:split + 1], eps)
    half2 = _dp_chain(np.concatenate([rolled[split:], rolled[:1]]), eps)
    out = np.concatenate([half1[:-1], half2[:-1]])
    out = _drop_collinear(out)
    if len(out) < 3:
        raise DegeneratePolygonError("simplification collapsed the ring")
    return out


def _drop_collinear(ring: np.ndarray) -> np.ndarray:
    keep = []
    n = len(ring)
    for i in range(n):
        a, b, c = ring[i - 1], ring[i], ring[(i + 1) % n]
        u, v = b - a, c - b
        if abs(u[0] * v[1] - u[1] * v[0]) > 1e-12:
            keep.append(i)
    return ring[keep] if keep else ring[:0]


# ---------------------------------------------------------------------------
# Regularization
# ---------------------------------------------------------------------------

def _edge_angles(ring: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vec = np.roll(ring, -1, axis=0) - ring
    return np.arctan2(vec[:, 1], vec[:, 0]), np.hypot(vec[:, 0], vec[:, 1])


def dominant_direction(ring: np.ndarray, angle_tol: float) -> float:
    """Length-weighted mod-90 circular histogram peak, refined by the
    circular mean of edges near the peak.  Radians in [0, pi/2)."""
    ang, length = _edge_angles(ring)
    a90 = np.mod(ang, np.pi / 2)
    bins = np.minimum((np.degrees(a90)).astype(int), 89)
    hist = np.bincount(bins, weights=length, minlength=90)
    # circular smoothing over +-1 degree so peaks at bin borders are stable
    peak = int(np.argmax(hist + np.roll(hist, 1) + np.roll(hist, -1)))
    peak_rad = np.radians(peak + 0.5)
    diff = np.angle(np.exp(1j * 4 * (a90 - peak_rad))) / 4
    near = np.abs(np.degrees(diff)) <= max(angle_tol, 2.0)
    if not near.any():
        return peak_rad % (np.pi / 2)
    mean = np.angle(np.sum(length[near] * np.exp(1j * 4 * a90[near]))) / 4
    return mean % (np.pi / 2)


def _line_intersect(p0, d0, p1, d1):
    denom = d0[0] * d1[1] - d0[1] * d1[0]
    if abs(denom) < 1e-9:
        return None
    t = ((p1[0] - p0[0]) * d1[1] - (p1[1] - p0[1]) * d1[0]) / denom
    return p0 + t * d0


def _is_simple(ring: np.ndarray) -> bool:
    try:
        return ShPolygon(ring).is_valid
    except Exception:
        return False


def regularize(poly: FootprintPolygon, angle_tol: float = DEFAULT_ANGLE_TOL) -> FootprintPolygon:
    """Snap edges near the dominant direction (or its perpendicular) to it.

    Vertices are rebuilt as consecutive-line intersections.  Near-parallel
    snapped neighbors are merged once; if the result self-intersects or
    drifts (IoU guard in vectorize_all), the polygon stays simplified.
    """
    ring = poly.exterior
    theta = dominant_direction(ring, angle_tol)
    tol = np.radians(angle_tol)

    def snapped(r: np.ndarray) -> np.ndarray | None:
        ang, _ = _edge_angles(r)
        dirs = []
        mids = []
        n = len(r)
        for i in range(n):
            a = ang[i]
            d = np.angle(np.exp(1j * 4 * (a - theta))) / 4   # offset to nearest of theta + k*90
            if abs(d) <= tol:
                a_snap = a - d
                dirs.append(np.array([np.cos(a_snap), np.sin(a_snap)]))
            else:
                dirs.append(np.array([np.cos(a), np.sin(a)]))
            mids.append(0.5 * (r[i] + r[(i + 1) % n]))
        out = []
        for i in range(n):
            p = _line_intersect(mids[i - 1], dirs[i - 1], mids[i], dirs[i])
            if p is None:
                return None
            out.append(p)
        return np.array(out)

    new = snapped(ring)
    if new is None:
        # merge consecutive near-parallel edges by deleting the shared vertex
        merged = _merge_parallel(ring, theta, tol)
        new = snapped(merged) if merged is not None else None
    if new is None or len(new) < 3 or not _is_simple(new) or abs(ring_area(new)) <= 0:
        return poly  # rollback
    return FootprintPolygon(exterior=new, holes=list(poly.holes),
                            source_instance=poly.source_instance, stage="regularized")


def _merge_parallel(ring: np.ndarray, theta: float, tol: float) -> np.ndarray | None:
    ang, _ = _edge_angles(ring)
    snap = np.angle(np.exp(1j * 4 * (ang - theta))) / 4
    eff = np.where(np.abs(snap) <= tol, ang - snap, ang)
    drop = []
    n = len(ring)
    for i in range(n):
        if abs(np.angle(np.exp(1j * (eff[i] - eff[i - 1])))) < 1e-6 or \
           abs(abs(np.angle(np.exp(1j * (eff[i] - eff[i - 1])))) - np.pi) < 1e-6:
            drop.append(i)
    if not drop:
        return None
    keep = [i for i in range(n) if i not in drop]
    return ring[keep] if len(keep) >= 3 else None


# ---------------------------------------------------------------------------
# Pipeline + GeoJSON
# ---------------------------------------------------------------------------

def polygon_iou(a: FootprintPolygon, b: FootprintPolygon, height: int, width: int) -> float:
    ra = rasterize_polygon(a, height, width)
    rb = rasterize_polygon(b, height, width)
    union = (ra | rb).sum()
    return float((ra & rb).sum() / union) if union else 0.0


def vectorize_mask(mask: np.ndarray, eps: float = DEFAULT_EPS,
                   angle_tol: float = DEFAULT_ANGLE_TOL,
                   iou_guard: float = 0.9,
                   min_area: float = 0.0) -> list[FootprintPolygon]:
    """trace -> simplify -> regularize, with per-polygon rollback guards.

    Components whose traced area is below ``min_area`` pixels are dropped;
    the default keeps everything so trace/rasterize round-trips stay exact.
    """
    h, w = mask.shape
    out = []
    for poly in trace(mask):
        if min_area > 0 and abs(ring_area(poly.exterior)) < min_area:
            continue
        try:
            ring = simplify(poly.exterior, eps)
            holes = [simplify(r, eps) for r in poly.holes if len(r) >= 3]
        except DegeneratePolygonError:
            out.append(poly)
            continue
        simp = FootprintPolygon(exterior=ring, holes=holes,
                                source_instance=poly.source_instance, stage="simplified")
        reg = regularize(simp, angle_tol)
        if reg.stage == "regularized" and polygon_iou(simp, reg, h, w) < iou_guard:
            reg = simp  # rollback: regularization drifted too far
        out.append(reg)
    return out


def _closed(ring: np.ndarray) -> list[list[float]]:
    pts = [[float(x), float(y)] for x, y in ring]
    pts.append(pts[0])
    return pts


def to_geojson(polys: list[FootprintPolygon]) -> dict:
    features = []
    for p in polys:
        coords = [_closed(p.exterior)] + [_closed(h) for h in p.holes]
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": coords},
            "properties": {"instance": int(p.source_instance), "stage": p.stage},
        })
    return {"type": "FeatureCollection", "features": features}


def vectorize_all(labels: np.ndarray, m: np.ndarray, eps: float = DEFAULT_EPS,
                  angle_tol: float = DEFAULT_ANGLE_TOL,
                  min_area: float = 0.0) -> dict:
    """Node labels + superpixel map -> GeoJSON FeatureCollection."""
    mask = labels[m].astype(np.uint8)
    return to_geojson(vectorize_mask(mask, eps, angle_tol, min_area=min_area))


def save_geojson(fc: dict, path) -> None:
    from pathlib import Path
    Path(path).write_text(json.dumps(fc))
