"""Semantically-sensitive superpixel network.

An encoder-decoder produces a per-pixel feature map; two 1x1 heads emit
(a) logits over the 9 grid-adjacent candidate superpixels, softmaxed into
the association field Q, and (b) binary building segmentation logits.
Q drives soft aggregation of pixel values into superpixels and weighted
dispersion back, which is what makes the superpixels learnable.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .substrate import NumericError, cross_entropy_soft, save_module, seed_all

EMPTY_Z_EPS = 1e-8
DEFAULT_LAMBDA = 0.003


class InvalidArgument(ValueError):
    pass


# ---------------------------------------------------------------------------
# Cell grid and candidate neighborhoods
# ---------------------------------------------------------------------------

@dataclass
class CellGrid:
    """Fixed lattice of g x g cells; each cell seeds one candidate superpixel."""

    height: int
    width: int
    cell: int = 16

    def __post_init__(self):
        self.rows = -(-self.height // self.cell)
        self.cols = -(-self.width // self.cell)
        self.n_superpixels = self.rows * self.cols
        self._candidates = None

    def cell_of(self, x: int, y: int) -> tuple[int, int]:
        return y // self.cell, x // self.cell

    def neighborhood(self, x: int, y: int) -> tuple[np.ndarray, np.ndarray]:
        """9 candidate superpixel ids for a pixel plus their validity flags."""
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise InvalidArgument(f"pixel ({x},{y}) outside {self.width}x{self.height}")
        r, c = self.cell_of(x, y)
        ids = np.empty(9, dtype=np.int64)
        valid = np.empty(9, dtype=bool)
        k = 0
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                rr, cc = r + dr, c + dc
                ok = 0 <= rr < self.rows and 0 <= cc < self.cols
                ids[k] = rr * self.cols + cc if ok else -1
                valid[k] = ok
                k += 1
        return ids, valid

    def candidate_maps(self) -> tuple[np.ndarray, np.ndarray]:
        """H x W x 9 candidate ids (0 where invalid) and validity mask."""
        if self._candidates is None:
            ys, xs = np.mgrid[0:self.height, 0:self.width]
            r, c = ys // self.cell, xs // self.cell
            ids = np.zeros((self.height, self.width, 9), dtype=np.int64)
            valid = np.zeros((self.height, self.width, 9), dtype=bool)
            k = 0
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr, cc = r + dr, c + dc
                    ok = (rr >= 0) & (rr < self.rows) & (cc >= 0) & (cc < self.cols)
                    ids[..., k] = np.where(ok, rr * self.cols + cc, 0)
                    valid[..., k] = ok
                    k += 1
            self._candidates = (ids, valid)
        return self._candidates

    def cell_center_pixels(self) -> np.ndarray:
        """Flat pixel index of each cell's center, one per raw superpixel."""
        rs = np.arange(self.rows)
        cs = np.arange(self.cols)
        cy = np.minimum(rs * self.cell + self.cell // 2, self.height - 1)
        cx = np.minimum(cs * self.cell + self.cell // 2, self.width - 1)
        return (cy[:, None] * self.width + cx[None, :]).reshape(-1)


def masked_softmax_q(logits: torch.Tensor, grid: CellGrid) -> torch.Tensor:
    """H x W x 9 logits -> association field; invalid candidates exactly 0."""
    _, valid = grid.candidate_maps()
    v = torch.from_numpy(valid)
    neg = torch.tensor(float("-inf"), dtype=logits.dtype)
    return torch.softmax(torch.where(v, logits, neg), dim=-1)


def aggregate(values: torch.Tensor, q: torch.Tensor, grid: CellGrid) -> torch.Tensor:
    """Soft-pool H x W x K pixel values into N x K superpixel values.

    Empty superpixels (normalizer below EMPTY_Z_EPS) fall back to the value
    at the cell-center pixel.
    """
    h, w, k = values.shape
    ids, valid = grid.candidate_maps()
    idx = torch.from_numpy(ids.reshape(-1))
    q_flat = q.reshape(-1)  # invalid entries are exactly 0
    contrib = (values[:, :, None, :] * q[..., None]).reshape(-1, k)
    num = torch.zeros(grid.n_superpixels, k, dtype=values.dtype).index_add(0, idx, contrib)
    z = torch.zeros(grid.n_superpixels, dtype=values.dtype).index_add(0, idx, q_flat)
    centers = torch.from_numpy(grid.cell_center_pixels())
    fallback = values.reshape(-1, k).index_select(0, centers)
    ok = z > EMPTY_Z_EPS
    safe_z = torch.where(ok, z, torch.ones_like(z))
    return torch.where(ok[:, None], num / safe_z[:, None], fallback)


def superpixel_normalizer(q: torch.Tensor, grid: CellGrid) -> torch.Tensor:
    ids, _ = grid.candidate_maps()
    idx = torch.from_numpy(ids.reshape(-1))
    return torch.zeros(grid.n_superpixels, dtype=q.dtype).index_add(0, idx, q.reshape(-1))


def disperse(sp_values: torch.Tensor, q: torch.Tensor, grid: CellGrid) -> torch.Tensor:
    """Reconstruct H x W x K pixel values from N x K superpixel values."""
    ids, _ = grid.candidate_maps()
    gathered = sp_values[torch.from_numpy(ids)]       # H x W x 9 x K
    return (gathered * q[..., None]).sum(dim=2)


def pixel_positions(grid: CellGrid, dtype=torch.float32) -> torch.Tensor:
    """H x W x 2 pixel positions (x, y) in cell units."""
    ys, xs = np.mgrid[0:grid.height, 0:grid.width]
    pos = np.stack([xs / grid.cell, ys / grid.cell], axis=-1)
    return torch.tensor(pos, dtype=dtype)


def positions(q: torch.Tensor, grid: CellGrid) -> tuple[torch.Tensor, torch.Tensor]:
    """Superpixel centroids and reconstructed per-pixel positions, cell units."""
    pos = pixel_positions(grid, dtype=q.dtype)
    centers = aggregate(pos, q, grid)
    return centers, disperse(centers, q, grid)


def loss_sp(h: torch.Tensor, h_hat: torch.Tensor, p: torch.Tensor,
            p_hat: torch.Tensor, lam: float = DEFAULT_LAMBDA) -> torch.Tensor:
    """Reconstruction cross-entropy plus position-regularity term."""
    ce = cross_entropy_soft(h_hat, h)  # clamps before log
    reg = (p - p_hat).pow(2).sum(dim=-1).clamp_min(1e-24).sqrt().mean()
    out = ce + lam * reg
    if not torch.isfinite(out):
        raise NumericError("non-finite superpixel loss")
    return out


def loss_se(b_onehot: torch.Tensor, b_logits: torch.Tensor) -> torch.Tensor:
    """Standard segmentation cross-entropy with soft logits."""
    out = cross_entropy_soft(torch.softmax(b_logits, dim=-1), b_onehot)
    if not torch.isfinite(out):
        raise NumericError("non-finite segmentation loss")
    return out


def hard_assign(q: np.ndarray, grid: CellGrid) -> np.ndarray:
    """Per-pixel argmax superpixel id; ties resolve to the smallest id.

    Candidate ids are ascending in slot order, so numpy's first-maximum
    argmax implements the tie-break.
    """
    ids, valid = grid.candidate_maps()
    qm = np.where(valid, q, -1.0)
    k_star = qm.argmax(axis=-1)
    return np.take_along_axis(ids, k_star[..., None], axis=-1)[..., 0]


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

class ResBlock(nn.Module):
    def __init__(self, ch):
        super().__init__()
        self.c1 = nn.Conv2d(ch, ch, 3, padding=1)
        self.n1 = nn.InstanceNorm2d(ch, affine=True)
        self.c2 = nn.Conv2d(ch, ch, 3, padding=1)
        self.n2 = nn.InstanceNorm2d(ch, affine=True)

    def forward(self, x):
        y = F.relu(self.n1(self.c1(x)))
        y = self.n2(self.c2(y))
        return F.relu(x + y)


class SuperpixelNet(nn.Module):
    """4-level residual encoder-decoder with association and segmentation heads."""

    LEVELS = 4

    def __init__(self, base_width: int = 16, feat_channels: int = 32):
        super().__init__()
        w = [base_width * (2 ** i) for i in range(self.LEVELS)]  # e.g. 16,32,64,128
        self.downsampling = 2 ** (self.LEVELS - 1)
        self.feat_channels = feat_channels
        self.stem = nn.Conv2d(3, w[0], 3, padding=1)
        self.enc = nn.ModuleList([ResBlock(c) for c in w])
        self.down = nn.ModuleList([nn.Conv2d(w[i], w[i + 1], 3, stride=2, padding=1)
                                   for i in range(self.LEVELS - 1)])
        self.up = nn.ModuleList([nn.Conv2d(w[i + 1], w[i], 3, padding=1)
                                 for i in range(self.LEVELS - 1)])
        self.dec = nn.ModuleList([ResBlock(w[i]) for i in range(self.LEVELS - 1)])
        self.fuse = nn.ModuleList([nn.Conv2d(2 * w[i], w[i], 1)
                                   for i in range(self.LEVELS - 1)])
        if feat_channels <= 3:
            raise InvalidArgument("feat_channels must exceed the 3 color channels")
        # The last 3 feature channels are the raw color planes, so the
        # association head always sees sharp image edges even when the
        # learned channels become piecewise-constant semantic maps.
        self.feat_head = nn.Conv2d(w[0], feat_channels - 3, 1)
        self.q_head = nn.Conv2d(feat_channels, 9, 1)
        self.seg_head = nn.Conv2d(feat_channels, 2, 1)

    def zero_init_heads(self):
        for head in (self.q_head, self.seg_head):
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)

    def forward(self, rgb: torch.Tensor, grid: CellGrid):
        """rgb H x W x 3 -> (Q [H,W,9], seg logits [H,W,2], features [H,W,C+2]).

        The returned feature map appends the segmentation posterior to the
        C-channel map seen by the heads, so downstream superpixel pooling
        carries explicit class evidence alongside appearance features.
        """
        h, w, _ = rgb.shape
        if h % self.downsampling or w % self.downsampling:
            raise InvalidArgument(
                f"image size {w}x{h} not divisible by {self.downsampling}")
        x = rgb.permute(2, 0, 1)[None]
        skips = []
        x = self.enc[0](self.stem(x))
        for i in range(self.LEVELS - 1):
            skips.append(x)
            x = self.enc[i + 1](self.down[i](x))
        for i in reversed(range(self.LEVELS - 1)):
            x = self.up[i](F.interpolate(x, scale_factor=2, mode="nearest"))
            x = self.fuse[i](torch.cat([x, skips[i]], dim=1))
            x = self.dec[i](x)
        f = torch.cat([self.feat_head(x), rgb.permute(2, 0, 1)[None].to(x.dtype)], dim=1)
        q_logits = self.q_head(f)[0].permute(1, 2, 0)
        b_logits = self.seg_head(f)[0].permute(1, 2, 0)
        feats = torch.cat([f[0].permute(1, 2, 0), torch.softmax(b_logits, dim=-1)],
                          dim=-1)
        q = masked_softmax_q(q_logits, grid)
        return q, b_logits, feats


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class SpTrainConfig:
    cell: int = 16
    feat_channels: int = 32
    base_width: int = 16
    lam: float = DEFAULT_LAMBDA
    lr: float = 1e-3
    epochs: int = 30
    seed: int = 0
    ablate_semantic: bool = False
    # Wall-clock cap: stop before an epoch that would overshoot it.
    time_budget_s: float | None = None


def total_loss(net: SuperpixelNet, rgb: torch.Tensor, h_onehot: torch.Tensor,
               grid: CellGrid, cfg: SpTrainConfig) -> torch.Tensor:
    q, b_logits, _ = net(rgb, grid)
    p = pixel_positions(grid, dtype=q.dtype)
    p_ctr = aggregate(p, q, grid)
    p_hat = disperse(p_ctr, q, grid)
    if cfg.ablate_semantic:
        # Appearance-only baseline: superpixels reconstruct pixel color
        # instead of the building one-hot, and the segmentation head is
        # not trained.  This removes every label signal from clustering.
        c_sp = aggregate(rgb, q, grid)
        c_hat = disperse(c_sp, q, grid)
        recon = (rgb - c_hat).pow(2).sum(dim=-1).mean()
        reg = (p - p_hat).pow(2).sum(dim=-1).clamp_min(1e-24).sqrt().mean()
        loss = recon + cfg.lam * reg
        if not torch.isfinite(loss):
            raise NumericError("non-finite superpixel loss")
        return loss
    h_sp = aggregate(h_onehot, q, grid)
    h_hat = disperse(h_sp, q, grid)
    loss = loss_sp(h_onehot, h_hat, p, p_hat, cfg.lam)
    return loss + loss_se(h_onehot, b_logits)


def train_superpixel_net(tiles, cfg: SpTrainConfig, out_path=None,
                         progress=None) -> tuple[SuperpixelNet, list[float]]:
    """Train on a list of ImageTiles; returns net and per-epoch mean losses."""
    from .synth import one_hot

    if not tiles:
        raise InvalidArgument("empty training set")
    seed_all(cfg.seed)
    net = SuperpixelNet(cfg.base_width, cfg.feat_channels)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    order = np.arange(len(tiles))
    rng = np.random.default_rng(cfg.seed)
    data = []
    grids = {}
    for t in tiles:
        key = (t.height, t.width)
        if key not in grids:
            grids[key] = CellGrid(t.height, t.width, cfg.cell)
        data.append((torch.tensor(t.rgb, dtype=torch.float32),
                     torch.tensor(one_hot(t.mask), dtype=torch.float32),
                     grids[key]))
    history = []
    t_start = time.monotonic()
    for epoch in range(cfg.epochs):
        rng.shuffle(order)
        losses = []
        for i in order:
            rgb, h, grid = data[i]
            opt.zero_grad()
            loss = total_loss(net, rgb, h, grid, cfg)
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
        save_module(out_path, net, meta={
            "kind": "superpixel", "cell": cfg.cell,
            "feat_channels": cfg.feat_channels, "base_width": cfg.base_width,
            "ablate_semantic": cfg.ablate_semantic, "history": history})
    return net, history


def load_superpixel_net(path) -> tuple[SuperpixelNet, dict]:
    from .substrate import load_checkpoint
    arrays, meta = load_checkpoint(path)
    net = SuperpixelNet(int(meta.get("base_width", 16)),
                        int(meta.get("feat_channels", 32)))
    net.load_state_dict({k: torch.tensor(v) for k, v in arrays.items()})
    net.eval()
    return net, meta
