"""End-to-end inference: image -> superpixels -> graph -> labels -> polygons."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .gat import GatModel, classify_graph
from .graph import SpGraph, build_graph
from .mrf import DEFAULT_PHI, Stroke, edit_cycle
from .superpixel import CellGrid, SuperpixelNet, hard_assign
from .vectorize import to_geojson, vectorize_mask


@dataclass
class InferenceResult:
    grid: CellGrid
    m: np.ndarray                 # compact superpixel map
    graph: SpGraph
    labels: np.ndarray            # current node labels
    mask: np.ndarray              # rendered binary mask
    energy: float


def run_inference(sp_net: SuperpixelNet, gat: GatModel, rgb: np.ndarray,
                  cell: int = 16, phi: float = DEFAULT_PHI,
                  strokes: list[Stroke] | None = None) -> InferenceResult:
    h, w, _ = rgb.shape
    grid = CellGrid(h, w, cell)
    with torch.no_grad():
        q, _, feats = sp_net(torch.tensor(rgb, dtype=torch.float32), grid)
    m_raw = hard_assign(q.numpy(), grid)
    graph, m = build_graph(q, m_raw, feats, grid)
    classify_graph(gat, graph)
    labels, _, mask, energy = edit_cycle(
        graph.node_prob, graph.edges, graph.edge_alpha, m, strokes or [], phi)
    return InferenceResult(grid=grid, m=m, graph=graph, labels=labels,
                           mask=mask, energy=energy)


def replay_strokes(res: InferenceResult, strokes: list[Stroke],
                   phi: float = DEFAULT_PHI) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Recompute labels from the full stroke log (event-sourced state)."""
    prev = res.labels
    labels, changed, mask, _ = edit_cycle(
        res.graph.node_prob, res.graph.edges, res.graph.edge_alpha,
        res.m, strokes, phi, prev_labels=prev)
    return labels, changed, mask


def polygons_for(res: InferenceResult, eps: float, angle_tol: float) -> dict:
    return to_geojson(vectorize_mask(res.mask, eps, angle_tol))
