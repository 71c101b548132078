"""Superpixel graph construction: pooled node features, 4-adjacency edges,
and superpixel-level labels."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .superpixel import CellGrid, aggregate, superpixel_normalizer, EMPTY_Z_EPS


@dataclass
class SpGraph:
    n_nodes: int
    node_feat: np.ndarray              # N x C
    centroid: np.ndarray               # N x 2 pixel coords (x, y)
    area: np.ndarray                   # N pixel counts
    edges: np.ndarray                  # E x 2, i < j, lexicographic
    relabel: np.ndarray                # raw grid id -> compact id (-1 if empty)
    node_label: np.ndarray | None = None   # N binary (training)
    node_prob: np.ndarray | None = None    # N in [0, 1] (inference)
    edge_alpha: np.ndarray | None = None   # per-edge similarity in [0, 1]

    def to_json(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            node = {"id": int(i),
                    "centroid": [float(self.centroid[i, 0]), float(self.centroid[i, 1])],
                    "area": int(self.area[i])}
            if self.node_prob is not None:
                node["prob"] = float(self.node_prob[i])
            nodes.append(node)
        edges = []
        for k, (i, j) in enumerate(self.edges):
            e = {"i": int(i), "j": int(j)}
            if self.edge_alpha is not None:
                e["alpha"] = float(self.edge_alpha[k])
            edges.append(e)
        return {"nodes": nodes, "edges": edges}

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))


def compact_labels(m_raw: np.ndarray, n_raw: int) -> tuple[np.ndarray, np.ndarray]:
    """Relabel raw superpixel map to dense ids: empty superpixels dropped."""
    present = np.unique(m_raw)
    relabel = np.full(n_raw, -1, dtype=np.int64)
    relabel[present] = np.arange(len(present))
    return relabel[m_raw], relabel


def pool_features(feats: torch.Tensor, q: torch.Tensor, grid: CellGrid) -> torch.Tensor:
    """Eqivalent soft pooling of the feature map into raw superpixel slots."""
    return aggregate(feats, q, grid)


def build_edges(m: np.ndarray) -> np.ndarray:
    """Undirected 4-adjacency edges between compact superpixel regions."""
    pairs = []
    a, b = m[:, :-1].reshape(-1), m[:, 1:].reshape(-1)
    pairs.append(np.stack([a, b], axis=1))
    a, b = m[:-1, :].reshape(-1), m[1:, :].reshape(-1)
    pairs.append(np.stack([a, b], axis=1))
    p = np.concatenate(pairs)
    p = p[p[:, 0] != p[:, 1]]
    if len(p) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    p = np.sort(p, axis=1)
    return np.unique(p, axis=0).astype(np.int64)


def aggregate_labels(m: np.ndarray, b: np.ndarray, n_nodes: int) -> np.ndarray:
    """Majority-vote superpixel labels: 1 iff mean mask in region > 0.5."""
    ones = np.bincount(m.reshape(-1), weights=(b > 0).reshape(-1).astype(np.float64),
                       minlength=n_nodes)
    total = np.bincount(m.reshape(-1), minlength=n_nodes)
    return (ones > 0.5 * total).astype(np.int64)


def build_graph(q: torch.Tensor, m_raw: np.ndarray, feats: torch.Tensor,
                grid: CellGrid, gt_mask: np.ndarray | None = None) -> tuple[SpGraph, np.ndarray]:
    """Assemble the graph from network outputs; returns (graph, compact M)."""
    m, relabel = compact_labels(m_raw, grid.n_superpixels)
    keep = np.flatnonzero(relabel >= 0)
    with torch.no_grad():
        pooled = pool_features(feats, q, grid).cpu().numpy()
    node_feat = pooled[keep]
    n_nodes = len(keep)

    ys, xs = np.mgrid[0:m.shape[0], 0:m.shape[1]]
    area = np.bincount(m.reshape(-1), minlength=n_nodes)
    cx = np.bincount(m.reshape(-1), weights=xs.reshape(-1), minlength=n_nodes) / area
    cy = np.bincount(m.reshape(-1), weights=ys.reshape(-1), minlength=n_nodes) / area
    centroid = np.stack([cx, cy], axis=1)

    g = SpGraph(n_nodes=n_nodes, node_feat=node_feat, centroid=centroid,
                area=area, edges=build_edges(m), relabel=relabel)
    if gt_mask is not None:
        g.node_label = aggregate_labels(m, gt_mask, n_nodes)
    return g, m
