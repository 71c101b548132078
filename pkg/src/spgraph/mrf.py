"""Stroke editing and exact binary MRF optimization.

The energy is a weighted Potts model: unary terms from node building
probabilities (hard-seeded where strokes apply) and pairwise terms
phi * alpha on 4-adjacency edges.  Binary + nonnegative weights means the
global optimum is a single s-t min-cut, computed here with Dinic's
algorithm.  Source-side nodes take label 0.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

DEFAULT_PHI = 10.0
DEFAULT_RADIUS = 3


@dataclass
class Stroke:
    points: list[tuple[float, float]]   # image coords (x, y)
    action: str                         # "add" | "delete"
    radius: int = DEFAULT_RADIUS

    def __post_init__(self):
        if not self.points:
            raise ValueError("stroke needs at least one point")
        if self.radius < 1:
            raise ValueError("stroke radius must be >= 1")
        if self.action not in ("add", "delete"):
            raise ValueError(f"unknown stroke action {self.action!r}")


@dataclass
class MrfProblem:
    unary: np.ndarray                      # N x 2 costs, label 0 / label 1
    edges: np.ndarray                      # E x 2
    weights: np.ndarray                    # E nonnegative
    seeds: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if (self.unary < 0).any() or (self.weights < 0).any():
            raise ValueError("unary costs and edge weights must be nonnegative")

    def energy(self, labels: np.ndarray) -> float:
        e = float(self.unary[np.arange(len(labels)), labels].sum())
        if len(self.edges):
            diff = labels[self.edges[:, 0]] != labels[self.edges[:, 1]]
            e += float(self.weights[diff].sum())
        return e


class _Dinic:
    def __init__(self, n):
        self.n = n
        self.head = [[] for _ in range(n)]
        self.to = []
        self.cap = []

    def add(self, u, v, c, rc=0.0):
        self.head[u].append(len(self.to)); self.to.append(v); self.cap.append(float(c))
        self.head[v].append(len(self.to)); self.to.append(u); self.cap.append(float(rc))

    def maxflow(self, s, t):
        flow = 0.0
        INF = float("inf")
        while True:
            level = [-1] * self.n
            level[s] = 0
            queue = [s]
            for u in queue:
                for ei in self.head[u]:
                    v = self.to[ei]
                    if self.cap[ei] > 1e-12 and level[v] < 0:
                        level[v] = level[u] + 1
                        queue.append(v)
            if level[t] < 0:
                return flow
            it = [0] * self.n

            def dfs(u, pushed):
                if u == t:
                    return pushed
                while it[u] < len(self.head[u]):
                    ei = self.head[u][it[u]]
                    v = self.to[ei]
                    if self.cap[ei] > 1e-12 and level[v] == level[u] + 1:
                        got = dfs(v, min(pushed, self.cap[ei]))
                        if got > 0:
                            self.cap[ei] -= got
                            self.cap[ei ^ 1] += got
                            return got
                    it[u] += 1
                return 0.0

            while True:
                pushed = dfs(s, INF)
                if pushed <= 0:
                    break
                flow += pushed

    def source_side(self, s):
        seen = [False] * self.n
        seen[s] = True
        queue = [s]
        for u in queue:
            for ei in self.head[u]:
                v = self.to[ei]
                if self.cap[ei] > 1e-12 and not seen[v]:
                    seen[v] = True
                    queue.append(v)
        return np.array(seen[:self.n - 2] if self.n >= 2 else [], dtype=bool)


def solve(problem: MrfProblem) -> tuple[np.ndarray, float]:
    """Globally optimal labels and the independently recomputed energy."""
    n = len(problem.unary)
    s, t = n, n + 1
    net = _Dinic(n + 2)
    # Node i on the source side takes label 0 and pays cap(i->t);
    # on the sink side it takes label 1 and pays cap(s->i).
    smooth_sum = np.zeros(n)
    for k, (i, j) in enumerate(problem.edges):
        smooth_sum[i] += problem.weights[k]
        smooth_sum[j] += problem.weights[k]
    for i in range(n):
        seed = problem.seeds.get(i)
        if seed is None:
            c0, c1 = problem.unary[i, 0], problem.unary[i, 1]
        else:
            big = 1.0 + smooth_sum[i]
            c0, c1 = (0.0, big) if seed == 0 else (big, 0.0)
        net.add(s, i, c1)   # paid when i lands on the sink side (label 1)
        net.add(i, t, c0)   # paid when i stays on the source side (label 0)
    for k, (i, j) in enumerate(problem.edges):
        w = problem.weights[k]
        if w > 0:
            net.add(int(i), int(j), w, w)
    net.maxflow(s, t)
    src = net.source_side(s)
    labels = np.where(src, 0, 1).astype(np.int64)
    # seeds are hard by construction; assert rather than trust capacities
    for i, seed in problem.seeds.items():
        labels[i] = seed
    return labels, problem.energy(labels)


def unary_from_prob(prob: np.ndarray) -> np.ndarray:
    """Data term 1 - B(label): cost(0) = prob, cost(1) = 1 - prob."""
    p = np.clip(np.asarray(prob, dtype=np.float64), 0.0, 1.0)
    return np.stack([p, 1.0 - p], axis=1)


# ---------------------------------------------------------------------------
# Strokes
# ---------------------------------------------------------------------------

def rasterize_stroke(stroke: Stroke, height: int, width: int) -> np.ndarray:
    """Boolean pixel mask: integer line walk dilated by a disk of the radius."""
    hit = np.zeros((height, width), dtype=bool)
    pts = [(int(round(x)), int(round(y))) for x, y in stroke.points]
    line = []
    if len(pts) == 1:
        line = [pts[0]]
    else:
        for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
            steps = max(abs(x1 - x0), abs(y1 - y0), 1)
            for k in range(steps + 1):
                line.append((round(x0 + (x1 - x0) * k / steps),
                             round(y0 + (y1 - y0) * k / steps)))
    r = stroke.radius
    offs = [(dx, dy) for dy in range(-r, r + 1) for dx in range(-r, r + 1)
            if dx * dx + dy * dy <= r * r]
    for x, y in line:
        for dx, dy in offs:
            xx, yy = x + dx, y + dy
            if 0 <= xx < width and 0 <= yy < height:
                hit[yy, xx] = True
    return hit


def apply_strokes(node_prob: np.ndarray, m: np.ndarray,
                  strokes: list[Stroke]) -> tuple[np.ndarray, dict[int, int]]:
    """Reset stroked node probabilities and collect hard seeds.

    Later strokes override earlier ones per node.  Strokes entirely outside
    the image warn and change nothing.
    """
    prob = np.array(node_prob, dtype=np.float64)
    seeds: dict[int, int] = {}
    h, w = m.shape
    for s in strokes:
        hit = rasterize_stroke(s, h, w)
        if not hit.any():
            warnings.warn("stroke entirely outside image; ignored")
            continue
        label = 1 if s.action == "add" else 0
        for node in np.unique(m[hit]):
            seeds[int(node)] = label
            prob[int(node)] = float(label)
    return prob, seeds


def edit_cycle(node_prob: np.ndarray, edges: np.ndarray, edge_alpha: np.ndarray,
               m: np.ndarray, strokes: list[Stroke], phi: float = DEFAULT_PHI,
               prev_labels: np.ndarray | None = None):
    """Apply strokes, solve the MRF, render the mask.

    Returns (labels, changed node ids vs prev_labels, binary mask H x W).
    """
    prob, seeds = apply_strokes(node_prob, m, strokes)
    problem = MrfProblem(unary=unary_from_prob(prob), edges=edges,
                         weights=phi * np.asarray(edge_alpha, dtype=np.float64),
                         seeds=seeds)
    labels, energy = solve(problem)
    changed = (np.flatnonzero(labels != prev_labels)
               if prev_labels is not None else np.flatnonzero(labels))
    mask = labels[m].astype(np.uint8)
    return labels, changed, mask, energy
