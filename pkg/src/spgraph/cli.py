"""Command-line entry points tying the pipeline together."""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np
from PIL import Image


@click.group()
def main():
    """spgraph: interactive building-footprint extraction toolkit."""


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--tiles", default=80, show_default=True)
@click.option("--size", default=256, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--train-frac", default=0.75, show_default=True)
def synth(out_dir, tiles, size, seed, train_frac):
    """Generate a synthetic dataset plus manifest.json."""
    from .synth import generate_dataset
    manifest = generate_dataset(out_dir, tiles, size, seed, train_frac)
    click.echo(f"wrote {len(manifest.tiles)} tiles to {out_dir}")


def _load_tiles(manifest_path, split):
    from .synth import load_manifest, load_tile
    manifest = load_manifest(manifest_path)
    return [load_tile(manifest.root, e) for e in manifest.paths(split)]


@main.command("train-sp")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--epochs", default=30, show_default=True)
@click.option("--cell", default=16, show_default=True)
@click.option("--lam", default=0.003, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--ablate-semantic", is_flag=True)
def train_sp(manifest_path, out_path, epochs, cell, lam, lr, seed, ablate_semantic):
    """Train the superpixel network."""
    from .superpixel import SpTrainConfig, train_superpixel_net
    tiles = _load_tiles(manifest_path, "train")
    cfg = SpTrainConfig(cell=cell, lam=lam, lr=lr, epochs=epochs, seed=seed,
                        ablate_semantic=ablate_semantic)
    t0 = time.time()
    _, history = train_superpixel_net(
        tiles, cfg, out_path,
        progress=lambda e, l: click.echo(f"epoch {e}: loss {l:.4f}"))
    click.echo(f"done in {time.time() - t0:.0f}s, final loss {history[-1]:.4f}")


@main.command("train-gat")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--sp-ckpt", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--epochs", default=50, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train_gat_cmd(manifest_path, sp_ckpt, out_path, epochs, lr, seed):
    """Train the graph-attention classifier on frozen superpixel outputs."""
    import torch
    from .gat import GatTrainConfig, train_gat
    from .graph import build_graph
    from .superpixel import CellGrid, hard_assign, load_superpixel_net
    net, meta = load_superpixel_net(sp_ckpt)
    cell = int(meta.get("cell", 16))
    graphs = []
    for tile in _load_tiles(manifest_path, "train"):
        grid = CellGrid(tile.height, tile.width, cell)
        with torch.no_grad():
            q, _, feats = net(torch.tensor(tile.rgb, dtype=torch.float32), grid)
        g, _ = build_graph(q, hard_assign(q.numpy(), grid), feats, grid,
                           gt_mask=tile.mask)
        graphs.append(g)
    cfg = GatTrainConfig(lr=lr, epochs=epochs, seed=seed)
    _, history = train_gat(graphs, cfg, out_path,
                           progress=lambda e, l: click.echo(f"epoch {e}: loss {l:.4f}"))
    click.echo(f"final loss {history[-1]:.4f}")


def _load_models(sp_ckpt, gat_ckpt):
    from .gat import load_gat
    from .superpixel import load_superpixel_net
    sp_net, meta = load_superpixel_net(sp_ckpt)
    gat_model, _ = load_gat(gat_ckpt)
    return sp_net, gat_model, int(meta.get("cell", 16))


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--sp-ckpt", required=True, type=click.Path(exists=True))
@click.option("--gat-ckpt", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--phi", default=10.0, show_default=True)
@click.option("--eps", default=1.5, show_default=True)
@click.option("--angle-tol", default=15.0, show_default=True)
def infer(image_path, sp_ckpt, gat_ckpt, out_dir, phi, eps, angle_tol):
    """Run the full pipeline on one image; write all artifacts."""
    from .pipeline import polygons_for, run_inference
    sp_net, gat_model, cell = _load_models(sp_ckpt, gat_ckpt)
    rgb = np.asarray(Image.open(image_path).convert("RGB"), dtype=np.float64) / 255.0
    res = run_inference(sp_net, gat_model, rgb, cell=cell, phi=phi)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    Image.fromarray(res.m.astype(np.uint16)).save(out / "superpixels.png")
    res.graph.save_json(out / "graph.json")
    Image.fromarray((res.mask * 255).astype(np.uint8)).save(out / "mask.png")
    (out / "polygons.geojson").write_text(json.dumps(polygons_for(res, eps, angle_tol)))
    click.echo(f"{res.graph.n_nodes} superpixels, energy {res.energy:.3f}")


@main.command()
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--phi", default=10.0, show_default=True)
@click.option("--strokes", "strokes_path", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path())
def cut(graph_path, phi, strokes_path, out_path):
    """Solve the MRF over a serialized graph JSON."""
    from .mrf import MrfProblem, solve, unary_from_prob
    g = json.loads(Path(graph_path).read_text())
    prob = np.array([n.get("prob", 0.5) for n in g["nodes"]])
    edges = np.array([[e["i"], e["j"]] for e in g["edges"]], dtype=np.int64).reshape(-1, 2)
    alpha = np.array([e.get("alpha", 0.0) for e in g["edges"]])
    seeds = {}
    if strokes_path:
        for s in json.loads(Path(strokes_path).read_text()).get("seeds", []):
            seeds[int(s["node"])] = int(s["label"])
    problem = MrfProblem(unary=unary_from_prob(prob), edges=edges,
                         weights=phi * alpha, seeds=seeds)
    labels, energy = solve(problem)
    payload = {"labels": [int(v) for v in labels], "energy": energy}
    if out_path:
        Path(out_path).write_text(json.dumps(payload))
    click.echo(f"energy {energy:.4f}, {int(labels.sum())} building nodes")


@main.command()
@click.option("--mask", "mask_path", required=True, type=click.Path(exists=True))
@click.option("--eps", default=1.5, show_default=True)
@click.option("--angle-tol", default=15.0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def vectorize(mask_path, eps, angle_tol, out_path):
    """Vectorize a binary mask PNG into GeoJSON footprints."""
    from .vectorize import to_geojson, vectorize_mask
    mask = (np.asarray(Image.open(mask_path).convert("L")) > 127).astype(np.uint8)
    fc = to_geojson(vectorize_mask(mask, eps, angle_tol))
    Path(out_path).write_text(json.dumps(fc))
    click.echo(f"{len(fc['features'])} footprints")


@main.command("eval")
@click.option("--pred", "pred_dir", required=True, type=click.Path(exists=True))
@click.option("--gt", "gt_dir", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
def eval_cmd(pred_dir, gt_dir, report_path):
    """Compare predicted masks against ground truth; write a JSON report."""
    from .metrics import pixel_metrics
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    preds = sorted(pred_dir.glob("*.png"))
    if not preds:
        click.echo("no predictions found", err=True)
        sys.exit(1)
    agg = {}
    n = 0
    for p in preds:
        gt_p = gt_dir / p.name
        if not gt_p.exists():
            continue
        pm = pixel_metrics(np.asarray(Image.open(p).convert("L")) > 127,
                           np.asarray(Image.open(gt_p).convert("L")) > 127)
        for k, v in pm.items():
            agg[k] = agg.get(k, 0.0) + v
        n += 1
    if n == 0:
        click.echo("no matching ground-truth files", err=True)
        sys.exit(1)
    report = {k: {"value": v / n, "params": {"tiles": n}} for k, v in agg.items()}
    Path(report_path).write_text(json.dumps(report, indent=1))
    click.echo(json.dumps({k: round(v["value"], 4) for k, v in report.items()}))


@main.command()
@click.option("--port", default=8787, show_default=True)
@click.option("--checkpoint-sp", required=True, type=click.Path(exists=True))
@click.option("--checkpoint-gat", required=True, type=click.Path(exists=True))
@click.option("--phi", default=10.0, show_default=True)
def serve(port, checkpoint_sp, checkpoint_gat, phi):
    """Run the interactive editing HTTP service."""
    import uvicorn
    from .service import create_app
    sp_net, gat_model, cell = _load_models(checkpoint_sp, checkpoint_gat)
    app = create_app(sp_net, gat_model, cell=cell, phi=phi)
    uvicorn.run(app, host="0.0.0.0", port=port)


if __name__ == "__main__":
    main()
