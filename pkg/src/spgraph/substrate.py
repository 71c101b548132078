"""Differentiable-computation substrate.

Thin, named wrappers over torch for every op the networks need, a central
finite-difference gradient checker that is independent of autograd, and a
single-file checkpoint format (JSON header + raw little-endian float32
payload).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F


class NumericError(ArithmeticError):
    pass


def seed_all(seed: int, deterministic: bool = True) -> None:
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True, warn_only=True)


# ---------------------------------------------------------------------------
# Required op set.  Each entry is (fn, input sampler) so the whole set can be
# gradient-checked mechanically.
# ---------------------------------------------------------------------------

def conv2d(x, weight, bias=None, stride=1):
    return F.conv2d(x, weight, bias, stride=stride, padding="same" if stride == 1 else 1)


def upsample_conv(x, weight, bias=None):
    """Nearest-neighbor 2x upsample followed by a stride-1 convolution."""
    return conv2d(F.interpolate(x, scale_factor=2, mode="nearest"), weight, bias)


def softmax(x, dim):
    return torch.softmax(x, dim=dim)


def leaky_relu(x, slope=0.01):
    return F.leaky_relu(x, negative_slope=slope)


def instance_norm(x, weight=None, bias=None, eps=1e-5):
    return F.instance_norm(x, weight=weight, bias=bias, eps=eps)


def cross_entropy_soft(probs, targets, eps=1e-7):
    """Mean cross-entropy between soft target rows and probability rows."""
    p = probs.clamp(eps, 1.0 - eps)
    return -(targets * p.log()).sum(dim=-1).mean()


def scatter_add(values, index, n_slots):
    """Sum `values` rows into `n_slots` bins given a 1-d integer index."""
    out_shape = (n_slots,) + tuple(values.shape[1:])
    out = torch.zeros(out_shape, dtype=values.dtype, device=values.device)
    return out.index_add(0, index, values)


def gather_rows(table, index):
    return table.index_select(0, index)


def _rt(shape, rng):
    return torch.tensor(rng.standard_normal(shape), dtype=torch.float64, requires_grad=True)


def _sample_conv(rng):
    x, w, b = _rt((1, 3, 8, 8), rng), _rt((4, 3, 3, 3), rng), _rt((4,), rng)
    return lambda: conv2d(x, w, b).pow(2).sum(), [x, w, b]


def _sample_conv_s2(rng):
    x, w = _rt((1, 3, 8, 8), rng), _rt((4, 3, 3, 3), rng)
    return lambda: conv2d(x, w, stride=2).pow(2).sum(), [x, w]


def _sample_upconv(rng):
    x, w = _rt((1, 2, 4, 4), rng), _rt((3, 2, 3, 3), rng)
    return lambda: upsample_conv(x, w).pow(2).sum(), [x, w]


def _sample_add(rng):
    a, b = _rt((5, 4), rng), _rt((5, 4), rng)
    return lambda: (a + b).pow(2).sum(), [a, b]


def _sample_mul(rng):
    a, b = _rt((5, 4), rng), _rt((5, 4), rng)
    return lambda: (a * b).sin().sum(), [a, b]


def _sample_matmul(rng):
    a, b = _rt((4, 6), rng), _rt((6, 3), rng)
    return lambda: (a @ b).pow(2).sum(), [a, b]


def _sample_softmax(rng):
    x = _rt((5, 9), rng)
    t = torch.tensor(rng.random((5, 9)), dtype=torch.float64)
    return lambda: (softmax(x, -1) * t).sum(), [x]


def _sample_leaky(rng):
    x = _rt((6, 6), rng)
    return lambda: leaky_relu(x, 0.2).pow(2).sum(), [x]


def _sample_relu(rng):
    x = _rt((6, 6), rng)
    # keep entries away from the kink so finite differences are valid
    with torch.no_grad():
        x += torch.sign(x) * 0.5
    return lambda: F.relu(x).pow(2).sum(), [x]


def _sample_inorm(rng):
    x, w, b = _rt((2, 3, 6, 6), rng), _rt((3,), rng), _rt((3,), rng)
    return lambda: instance_norm(x, w, b).pow(2).sum(), [x, w, b]


def _sample_ce(rng):
    logits = _rt((5, 2), rng)
    t = torch.tensor(rng.random((5, 2)), dtype=torch.float64)
    t = t / t.sum(-1, keepdim=True)
    return lambda: cross_entropy_soft(softmax(logits, -1), t), [logits]


def _sample_scatter(rng):
    v = _rt((10, 3), rng)
    idx = torch.tensor(rng.integers(0, 4, 10))
    t = torch.tensor(rng.random((4, 3)), dtype=torch.float64)
    return lambda: (scatter_add(v, idx, 4) * t).sum(), [v]


def _sample_gather(rng):
    tbl = _rt((6, 3), rng)
    idx = torch.tensor(rng.integers(0, 6, 10))
    return lambda: gather_rows(tbl, idx).pow(2).sum(), [tbl]


def _sample_concat(rng):
    a, b = _rt((4, 3), rng), _rt((4, 5), rng)
    return lambda: torch.cat([a, b], dim=1).pow(2).sum(), [a, b]


REQUIRED_OPS: dict[str, Callable] = {
    "conv2d": _sample_conv,
    "conv2d_stride2": _sample_conv_s2,
    "upsample_conv": _sample_upconv,
    "add": _sample_add,
    "multiply": _sample_mul,
    "matmul": _sample_matmul,
    "softmax": _sample_softmax,
    "leaky_relu": _sample_leaky,
    "relu": _sample_relu,
    "instance_norm": _sample_inorm,
    "cross_entropy_soft": _sample_ce,
    "scatter_add": _sample_scatter,
    "gather": _sample_gather,
    "concatenate": _sample_concat,
}


# ---------------------------------------------------------------------------
# Gradient check
# ---------------------------------------------------------------------------

@dataclass
class GradReport:
    max_rel_err: float
    per_param: list[float]
    passed: bool


def grad_check(fn: Callable[[], torch.Tensor], params: list[torch.Tensor],
               eps: float = 1e-5, tol: float = 1e-4) -> GradReport:
    """Compare autograd gradients of a scalar fn against central differences."""
    loss = fn()
    if not torch.isfinite(loss):
        raise NumericError("non-finite loss in grad_check")
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    errs = []
    for p, g in zip(params, grads):
        analytic = torch.zeros_like(p) if g is None else g
        num = torch.zeros_like(p)
        flat = p.detach().reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            lp = fn().item()
            flat[i] = orig - eps
            lm = fn().item()
            flat[i] = orig
            nflat[i] = (lp - lm) / (2 * eps)
        denom = max(1.0, analytic.abs().max().item(), num.abs().max().item())
        errs.append((analytic - num).abs().max().item() / denom)
    worst = max(errs) if errs else 0.0
    return GradReport(max_rel_err=worst, per_param=errs, passed=worst <= tol)


# ---------------------------------------------------------------------------
# Checkpoint format: uint64 header length | JSON header | float32 LE payload
# ---------------------------------------------------------------------------

def save_checkpoint(path, named_arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    offset = 0
    blobs = []
    for name, arr in named_arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({"name": name, "shape": list(a.shape),
                        "dtype": "float32", "byte_offset": offset})
        blobs.append(a.tobytes())
        offset += len(blobs[-1])
    header = json.dumps({"tensors": entries, "meta": meta or {}}).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        payload = fh.read()
    out = {}
    for e in header["tensors"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        a = np.frombuffer(payload, dtype="<f4", count=n, offset=e["byte_offset"])
        out[e["name"]] = a.reshape(e["shape"]).copy()
    return out, header.get("meta", {})


def save_module(path, module: torch.nn.Module, meta: dict | None = None) -> None:
    arrays = {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}
    save_checkpoint(path, arrays, meta)


def load_module(path, module: torch.nn.Module) -> dict:
    arrays, meta = load_checkpoint(path)
    state = {k: torch.tensor(v) for k, v in arrays.items()}
    module.load_state_dict(state)
    return meta
