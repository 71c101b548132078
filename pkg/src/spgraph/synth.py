"""Synthetic aerial-style scenes and tile dataset I/O.

A scene is a flat-textured background crossed by linear "road" bands
(strong image gradients, never labeled) plus non-overlapping rectangular
or L-shaped buildings with distinct flat textures.  Buildings are the only
positive class, so boundary metrics can distinguish building edges from
other image edges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

MIN_SIZE = 64
ROTATIONS_DEG = (0.0, 15.0, 30.0, 45.0)
SIZE_RANGE = (40, 112)
ROAD_WIDTH_RANGE = (4, 10)
SEPARATION_PX = 12



class SynthError(ValueError):
    pass


@dataclass
class ImageTile:
    """One training/eval unit: raster image, building mask, instance ids."""

    rgb: np.ndarray          # H x W x 3 float in [0, 1]
    mask: np.ndarray         # H x W uint8, 1 = building
    instances: np.ndarray    # H x W uint16, 0 = background
    footprints: list[np.ndarray] = field(default_factory=list)  # per-instance vertex rings
    instance_areas: list[int] = field(default_factory=list)     # pixel counts recorded at generation
    object_map: np.ndarray | None = None  # internal labels incl. distractors

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def boundary_building(self) -> np.ndarray:
        return label_boundaries(self.mask)

    @property
    def boundary_all(self) -> np.ndarray:
        obj = self.object_map if self.object_map is not None else self.instances
        return label_boundaries(obj)

    def validate(self) -> None:
        if self.rgb.min() < 0 or self.rgb.max() > 1:
            raise SynthError("rgb values outside [0,1]")
        if not np.array_equal(self.instances > 0, self.mask > 0):
            raise SynthError("instances and mask disagree")


def label_boundaries(labels: np.ndarray) -> np.ndarray:
    """Pixels whose 4-neighborhood contains a different label."""
    b = np.zeros(labels.shape, dtype=bool)
    b[:-1, :] |= labels[:-1, :] != labels[1:, :]
    b[1:, :] |= labels[1:, :] != labels[:-1, :]
    b[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    b[:, 1:] |= labels[:, 1:] != labels[:, :-1]
    return b


def one_hot(mask: np.ndarray) -> np.ndarray:
    """Binary mask -> H x W x 2 with channel 0 = background, 1 = building."""
    m = (np.asarray(mask) > 0).astype(np.float64)
    return np.stack([1.0 - m, m], axis=-1)


def _rect_ring(cx: float, cy: float, w: float, h: float, theta_deg: float) -> np.ndarray:
    c, s = np.cos(np.radians(theta_deg)), np.sin(np.radians(theta_deg))
    rot = np.array([[c, -s], [s, c]])
    corners = np.array([[-w / 2, -h / 2], [w / 2, -h / 2], [w / 2, h / 2], [-w / 2, h / 2]])
    return corners @ rot.T + np.array([cx, cy])


def _l_ring(cx: float, cy: float, w: float, h: float, theta_deg: float, rng: np.random.Generator) -> np.ndarray:
    # Rectangle with one quadrant removed; notch between 30% and 60% per side.
    nx = w * rng.uniform(0.3, 0.6)
    ny = h * rng.uniform(0.3, 0.6)
    pts = np.array([
        [-w / 2, -h / 2], [w / 2, -h / 2], [w / 2, h / 2 - ny],
        [w / 2 - nx, h / 2 - ny], [w / 2 - nx, h / 2], [-w / 2, h / 2],
    ])
    c, s = np.cos(np.radians(theta_deg)), np.sin(np.radians(theta_deg))
    rot = np.array([[c, -s], [s, c]])
    return pts @ rot.T + np.array([cx, cy])


def rasterize_ring(ring: np.ndarray, height: int, width: int) -> np.ndarray:
    """Even-odd fill of a polygon: a pixel is inside iff its center is."""
    ys, xs = np.mgrid[0:height, 0:width]
    px = xs + 0.5
    py = ys + 0.5
    inside = np.zeros((height, width), dtype=bool)
    n = len(ring)
    for i in range(n):
        x0, y0 = ring[i]
        x1, y1 = ring[(i + 1) % n]
        if y0 == y1:
            continue
        cond = (py >= min(y0, y1)) & (py < max(y0, y1))
        xcross = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
        inside ^= cond & (px < xcross)
    return inside


def synth_scene(size: int, n_buildings: int, seed: int) -> ImageTile:
    """Deterministic synthetic scene with roads as unlabeled distractors."""
    if size < MIN_SIZE:
        raise SynthError(f"size must be >= {MIN_SIZE}, got {size}")
    if n_buildings < 0:
        raise SynthError("n_buildings must be >= 0")
    rng = np.random.default_rng(seed)

    base = rng.uniform(0.2, 0.4, size=3)
    rgb = np.tile(base, (size, size, 1)) + rng.normal(0, 0.015, (size, size, 3))
    object_map = np.zeros((size, size), dtype=np.int32)

    # Roads: straight bands at arbitrary angles, bright, never labeled.
    ys, xs = np.mgrid[0:size, 0:size]
    n_roads = int(rng.integers(1, 4))
    for r in range(n_roads):
        theta = rng.uniform(0, np.pi)
        nx, ny = np.cos(theta), np.sin(theta)
        offset = rng.uniform(0.15, 0.85) * size
        halfw = rng.integers(ROAD_WIDTH_RANGE[0], ROAD_WIDTH_RANGE[1] + 1) / 2.0
        band = np.abs((xs + 0.5) * nx + (ys + 0.5) * ny - offset) < halfw
        color = rng.uniform(0.55, 0.7, size=3)
        rgb[band] = color + rng.normal(0, 0.01, (int(band.sum()), 3))
        object_map[band] = 1000 + r  # distractor ids, outside instance range

    mask = np.zeros((size, size), dtype=np.uint8)
    instances = np.zeros((size, size), dtype=np.uint16)
    occupied = np.zeros((size, size), dtype=bool)
    footprints: list[np.ndarray] = []
    areas: list[int] = []

    placed = 0
    attempts = 0
    while placed < n_buildings and attempts < 200 * max(1, n_buildings):
        attempts += 1
        w = rng.uniform(*SIZE_RANGE)
        h = rng.uniform(*SIZE_RANGE)
        theta = ROTATIONS_DEG[rng.integers(0, len(ROTATIONS_DEG))]
        margin = 0.5 * np.hypot(w, h) + 2
        if size - 2 * margin <= 0:
            continue
        cx = rng.uniform(margin, size - margin)
        cy = rng.uniform(margin, size - margin)
        if rng.random() < 0.4 and min(w, h) >= 24:
            ring = _l_ring(cx, cy, w, h, theta, rng)
        else:
            ring = _rect_ring(cx, cy, w, h, theta)
        fill = rasterize_ring(ring, size, size)
        if fill.sum() < 32:
            continue
        # Enforce 4 px Chebyshev separation from previously placed buildings.
        y0, y1 = ys[fill].min(), ys[fill].max()
        x0, x1 = xs[fill].min(), xs[fill].max()
        y0g, y1g = max(0, y0 - SEPARATION_PX), min(size, y1 + SEPARATION_PX + 1)
        x0g, x1g = max(0, x0 - SEPARATION_PX), min(size, x1 + SEPARATION_PX + 1)
        if occupied[y0g:y1g, x0g:x1g].any():
            # cheap reject on dilated bounding boxes; exact check below
            from scipy.ndimage import binary_dilation
            grown = binary_dilation(fill, iterations=SEPARATION_PX)
            if (grown & occupied).any():
                continue
        placed += 1
        color = rng.uniform(0.5, 0.95, size=3)
        rgb[fill] = color + rng.normal(0, 0.02, (int(fill.sum()), 3))
        mask[fill] = 1
        instances[fill] = placed
        object_map[fill] = placed
        occupied |= fill
        footprints.append(ring)
        areas.append(int(fill.sum()))

    rgb = np.clip(rgb, 0.0, 1.0)
    tile = ImageTile(rgb=rgb, mask=mask, instances=instances,
                     footprints=footprints, instance_areas=areas,
                     object_map=object_map)
    tile.validate()
    return tile


# ---------------------------------------------------------------------------
# Dataset manifest and raster I/O
# ---------------------------------------------------------------------------

@dataclass
class ManifestEntry:
    image: str
    mask: str
    instances: str
    split: str  # train | val | test


@dataclass
class DatasetManifest:
    tiles: list[ManifestEntry]
    seed: int
    root: Path

    def paths(self, split: str | None = None) -> list[ManifestEntry]:
        if split is None:
            return list(self.tiles)
        return [t for t in self.tiles if t.split == split]


def save_tile(tile: ImageTile, out_dir: str | Path, stem: str) -> dict[str, str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rgb8 = np.clip(np.rint(tile.rgb * 255), 0, 255).astype(np.uint8)
    Image.fromarray(rgb8).save(out / f"{stem}_rgb.png")
    Image.fromarray((tile.mask * 255).astype(np.uint8)).save(out / f"{stem}_mask.png")
    Image.fromarray(tile.instances.astype(np.uint16)).save(out / f"{stem}_inst.png")
    return {"image": f"{stem}_rgb.png", "mask": f"{stem}_mask.png", "instances": f"{stem}_inst.png"}


def load_tile(root: str | Path, entry: ManifestEntry) -> ImageTile:
    root = Path(root)
    for name in (entry.image, entry.mask, entry.instances):
        if not (root / name).exists():
            raise FileNotFoundError(root / name)
    rgb = np.asarray(Image.open(root / entry.image), dtype=np.float64) / 255.0
    mask = (np.asarray(Image.open(root / entry.mask)) > 127).astype(np.uint8)
    instances = np.asarray(Image.open(root / entry.instances)).astype(np.uint16)
    if rgb.shape[:2] != mask.shape or mask.shape != instances.shape:
        raise SynthError("raster size mismatch between image/mask/instances")
    return ImageTile(rgb=rgb, mask=mask, instances=instances)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    payload = {
        "seed": manifest.seed,
        "tiles": [vars(t) for t in manifest.tiles],
    }
    Path(path).write_text(json.dumps(payload, indent=1))


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SynthError(f"malformed manifest: {e}") from e
    root = path.parent
    tiles = [ManifestEntry(**t) for t in payload["tiles"]]
    for t in tiles:
        for name in (t.image, t.mask, t.instances):
            if not (root / name).exists():
                raise FileNotFoundError(root / name)
    return DatasetManifest(tiles=tiles, seed=int(payload.get("seed", 0)), root=root)


def generate_dataset(out_dir: str | Path, n_tiles: int, size: int, seed: int,
                     train_frac: float = 0.75,
                     buildings_range: tuple[int, int] = (2, 6)) -> DatasetManifest:
    """Write a synthetic dataset plus manifest.json; deterministic per seed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    n_train = int(round(n_tiles * train_frac))
    for i in range(n_tiles):
        n_b = int(rng.integers(buildings_range[0], buildings_range[1] + 1))
        tile = synth_scene(size, n_b, seed=int(rng.integers(0, 2**31)))
        paths = save_tile(tile, out, f"tile_{i:04d}")
        split = "train" if i < n_train else "test"
        entries.append(ManifestEntry(split=split, **paths))
    manifest = DatasetManifest(tiles=entries, seed=seed, root=out)
    save_manifest(manifest, out / "manifest.json")
    return manifest
