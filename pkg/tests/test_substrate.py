import numpy as np
import pytest
import torch

from spgraph.substrate import (REQUIRED_OPS, NumericError, grad_check,
                               leaky_relu, load_checkpoint, load_module,
                               save_checkpoint, save_module, scatter_add,
                               softmax)


def test_softmax_equal_logits():
    out = softmax(torch.zeros(9, dtype=torch.float64), dim=0)
    assert torch.allclose(out, torch.full((9,), 1 / 9, dtype=torch.float64))


def test_leaky_relu_definition():
    assert leaky_relu(torch.tensor(-1.0), 0.01).item() == pytest.approx(-0.01)


def test_scatter_add_definition():
    v = torch.tensor([[1.0], [2.0], [3.0]])
    out = scatter_add(v, torch.tensor([0, 0, 1]), 2)
    assert out.squeeze().tolist() == [3.0, 3.0]


@pytest.mark.parametrize("name", sorted(REQUIRED_OPS))
def test_required_op_gradients(name):
    for seed in range(3):
        fn, params = REQUIRED_OPS[name](np.random.default_rng(seed))
        report = grad_check(fn, params, tol=1e-4)
        assert report.passed, f"{name} seed {seed}: {report.max_rel_err}"


def test_grad_check_quadratic_exactness():
    x = torch.tensor([1.0, -2.0, 3.0], dtype=torch.float64, requires_grad=True)
    report = grad_check(lambda: (x ** 2).sum(), [x])
    assert report.max_rel_err < 1e-8


def test_grad_check_nonfinite():
    x = torch.tensor([1.0], dtype=torch.float64, requires_grad=True)
    with pytest.raises(NumericError):
        grad_check(lambda: (x / 0).sum(), [x])


def test_checkpoint_round_trip(tmp_path):
    arrays = {"a": np.arange(6, dtype=np.float32).reshape(2, 3),
              "b": np.array([1.5], dtype=np.float32)}
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, arrays, meta={"kind": "test"})
    back, meta = load_checkpoint(path)
    assert meta["kind"] == "test"
    for k in arrays:
        assert np.array_equal(back[k], arrays[k])


def test_module_checkpoint_round_trip(tmp_path):
    m1 = torch.nn.Linear(4, 2)
    m2 = torch.nn.Linear(4, 2)
    save_module(tmp_path / "m.bin", m1)
    load_module(tmp_path / "m.bin", m2)
    x = torch.randn(3, 4)
    assert torch.allclose(m1(x), m2(x), atol=1e-6)
