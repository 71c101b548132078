"""Graph attention classifier over the superpixel graph.

Each layer projects node features with a shared linear map, scores directed
neighbor pairs (self-loops included) with a learned attention vector, and
aggregates neighbor projections weighted by the per-row softmax of those
scores.  The final layer's attention doubles as the edge-similarity signal
for interactive graph-cut editing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .graph import SpGraph
from .substrate import NumericError, save_module, seed_all

ATT_SLOPE = 0.2


def directed_pairs(n_nodes: int, edges: np.ndarray) -> tuple[torch.Tensor, torch.Tensor]:
    """Source/destination indices: self-loops plus both edge directions."""
    src = np.concatenate([np.arange(n_nodes), edges[:, 0], edges[:, 1]])
    dst = np.concatenate([np.arange(n_nodes), edges[:, 1], edges[:, 0]])
    return torch.from_numpy(src), torch.from_numpy(dst)


def segment_softmax(scores: torch.Tensor, seg: torch.Tensor, n_seg: int) -> torch.Tensor:
    """Softmax of scores grouped by segment id, numerically stabilized."""
    big = torch.full((n_seg,), float("-inf"), dtype=scores.dtype)
    mx = big.scatter_reduce(0, seg, scores, reduce="amax", include_self=True)
    ex = (scores - mx[seg]).exp()
    denom = torch.zeros(n_seg, dtype=scores.dtype).index_add(0, seg, ex)
    return ex / denom[seg]


class GatLayer(nn.Module):
    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.proj = nn.Linear(c_in, c_out, bias=False)
        self.att = nn.Parameter(torch.empty(2 * c_out))
        nn.init.normal_(self.att, std=1.0 / np.sqrt(2 * c_out))

    def attention(self, v: torch.Tensor, src: torch.Tensor,
                  dst: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-directed-pair coefficients; rows (fixed dst) sum to 1."""
        pv = self.proj(v)
        c = pv.shape[1]
        e = F.leaky_relu(
            pv[dst] @ self.att[:c] + pv[src] @ self.att[c:], negative_slope=ATT_SLOPE)
        return segment_softmax(e, dst, v.shape[0]), pv

    def forward(self, v, src, dst):
        alpha, pv = self.attention(v, src, dst)
        out = torch.zeros_like(pv).index_add(0, dst, alpha[:, None] * pv[src])
        return out, alpha


class GatModel(nn.Module):
    """Default 4 attention layers 32->64->64->64->64 plus a 2-class head."""

    def __init__(self, c_in: int = 32, width: int = 64, n_layers: int = 4):
        super().__init__()
        dims = [c_in] + [width] * n_layers
        self.layers = nn.ModuleList(GatLayer(dims[i], dims[i + 1])
                                    for i in range(n_layers))
        self.head = nn.Linear(width, 2)

    def forward(self, node_feat: torch.Tensor, edges: np.ndarray):
        """Returns final embeddings, per-node logits, and last-layer alphas."""
        n = node_feat.shape[0]
        src, dst = directed_pairs(n, edges)
        v = node_feat
        alpha = None
        for li, layer in enumerate(self.layers):
            v, alpha = layer(v, src, dst)
            if li < len(self.layers) - 1:
                v = F.relu(v)
        return v, self.head(v), alpha


def export_edge_alpha(model: GatModel, node_feat: torch.Tensor,
                      edges: np.ndarray) -> np.ndarray:
    """Symmetric [0,1] similarity per undirected edge from last-layer attention.

    Directed coefficients are rescaled by their row maximum (self-loop
    included) before averaging the two directions.
    """
    n = node_feat.shape[0]
    with torch.no_grad():
        _, _, alpha = model(node_feat, edges)
    src, dst = directed_pairs(n, edges)
    a = alpha.detach()
    row_max = torch.zeros(n, dtype=a.dtype).scatter_reduce(
        0, dst, a, reduce="amax", include_self=False)
    scaled = (a / row_max.clamp_min(1e-12)[dst]).cpu().numpy()
    ne = len(edges)
    fwd = scaled[n:n + ne]
    bwd = scaled[n + ne:]
    return np.clip(0.5 * (fwd + bwd), 0.0, 1.0)


def loss_g(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    out = F.cross_entropy(logits, labels)
    if not torch.isfinite(out):
        raise NumericError("non-finite graph loss")
    return out


@dataclass
class GatTrainConfig:
    lr: float = 1e-3
    epochs: int = 50
    width: int = 64
    n_layers: int = 4
    seed: int = 0
    # Wall-clock cap: stop before an epoch that would overshoot it.
    time_budget_s: float | None = None


def train_gat(graphs: list[SpGraph], cfg: GatTrainConfig, out_path=None,
              progress=None) -> tuple[GatModel, list[float]]:
    """Train on prebuilt labeled graphs (superpixel net frozen upstream)."""
    if not graphs:
        raise ValueError("empty training set")
    seed_all(cfg.seed)
    c_in = graphs[0].node_feat.shape[1]
    model = GatModel(c_in, cfg.width, cfg.n_layers)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    data = [(torch.tensor(g.node_feat, dtype=torch.float32), g.edges,
             torch.tensor(g.node_label)) for g in graphs]
    rng = np.random.default_rng(cfg.seed)
    order = np.arange(len(data))
    history = []
    t_start = time.monotonic()
    for epoch in range(cfg.epochs):
        rng.shuffle(order)
        losses = []
        for i in order:
            feat, edges, labels = data[i]
            opt.zero_grad()
            _, logits, _ = model(feat, edges)
            loss = loss_g(logits, labels)
            if not torch.isfinite(loss):
                raise NumericError(f"divergence at epoch {epoch}")
            loss.backward()
            opt.step()
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
        if progress:
            progress(epoch, history[-1])
        if cfg.time_budget_s is not None:
            elapsed = time.monotonic() - t_start
            if elapsed + elapsed / (epoch + 1) > cfg.time_budget_s:
                break
    if out_path is not None:
        save_module(out_path, model, meta={
            "kind": "gat", "c_in": c_in, "width": cfg.width,
            "n_layers": cfg.n_layers, "history": history})
    return model, history


def load_gat(path) -> tuple[GatModel, dict]:
    from .substrate import load_checkpoint
    arrays, meta = load_checkpoint(path)
    model = GatModel(int(meta.get("c_in", 32)), int(meta.get("width", 64)),
                     int(meta.get("n_layers", 4)))
    model.load_state_dict({k: torch.tensor(v) for k, v in arrays.items()})
    model.eval()
    return model, meta


def classify_graph(model: GatModel, graph: SpGraph) -> SpGraph:
    """Fill node probabilities and edge similarities on an inference graph."""
    feat = torch.tensor(graph.node_feat, dtype=torch.float32)
    with torch.no_grad():
        _, logits, _ = model(feat, graph.edges)
        graph.node_prob = torch.softmax(logits, dim=-1)[:, 1].cpu().numpy()
    graph.edge_alpha = export_edge_alpha(model, feat, graph.edges)
    return graph
