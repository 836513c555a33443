import numpy as np
import pytest

from tdam.autodiff import Tensor, concat, dwconv2d, linear_recurrence


def numeric_grad(f, x, h=1e-6):
    """Central finite differences of scalar f at array x."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f(x)
        flat[i] = orig - h
        lo = f(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * h)
    return g


def check_op(build, *shapes, seed=0, tol=1e-6):
    """Compare engine gradients of scalar build(*tensors) to finite differences."""
    rng = np.random.default_rng(seed)
    arrays = [rng.standard_normal(s) for s in shapes]
    tensors = [Tensor(a.copy()) for a in arrays]
    out = build(*tensors)
    out.backward()
    for k, (a, t) in enumerate(zip(arrays, tensors)):
        fd = numeric_grad(lambda _: build(*[Tensor(x.copy()) for x in arrays]).data.item(), a)
        assert t.grad is not None, f"missing grad for operand {k}"
        np.testing.assert_allclose(t.grad, fd, rtol=tol, atol=tol)


def test_add_mul_broadcast():
    check_op(lambda a, b: ((a + b) * a).sum(), (3, 4), (4,))


def test_scalar_ops_preserve_dtype():
    t = Tensor(np.ones((2, 2), dtype=np.float32))
    out = ((t * 2.0 + 1.0) / 3.0 - 0.5).sum()
    assert out.dtype == np.float32


def test_matmul_batched():
    check_op(lambda a, b: (a @ b).sum(), (2, 3, 4), (2, 4, 5))


def test_matmul_broadcast_leading():
    check_op(lambda a, b: (a @ b).sum(), (1, 3, 4), (5, 4, 2))


def test_unary_chain():
    check_op(lambda a: (a.tanh().exp() + a.sigmoid() + a.softplus() + a.erf()).sum(), (4, 3))


def test_expm1_log_sqrt():
    check_op(lambda a: ((a * a + 1.0).log() + (a * a + 2.0).sqrt() + a.expm1()).sum(), (6,))


def test_softmax_grad():
    check_op(lambda a: (a.softmax(axis=-1) * np.arange(5.0)).sum(), (3, 5))


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(1)
    y = Tensor(rng.standard_normal((4, 7))).softmax()
    np.testing.assert_allclose(y.data.sum(axis=-1), 1.0, atol=1e-12)


def test_reductions_and_max():
    check_op(lambda a: a.mean(axis=0).sum() + a.max(axis=1).sum(), (4, 5))


def test_reshape_transpose_slice():
    def f(a):
        b = a.reshape(2, 6).transpose(1, 0)
        return (b[2:5] * 3.0).sum() + b.sum()

    check_op(f, (3, 4))


def test_concat_and_take():
    def f(a, b):
        c = concat([a, b], axis=0)
        picked = c.take_rows(np.array([0, 2, 2, 3]))
        cols = c.take(np.array([1, 1]), axis=1)
        return picked.sum() + cols.sum()

    check_op(f, (2, 3), (3, 3))


def test_linear_recurrence_matches_loop():
    rng = np.random.default_rng(2)
    a = rng.uniform(0.1, 0.9, size=(5, 2, 3))
    c = rng.standard_normal((5, 2, 3))
    h = linear_recurrence(Tensor(a), Tensor(c)).data
    acc = np.zeros((2, 3))
    for t in range(5):
        acc = a[t] * acc + c[t]
        np.testing.assert_allclose(h[t], acc)


def test_linear_recurrence_grad():
    def f(a, c):
        return (linear_recurrence(a.sigmoid(), c) * 0.5).sum()

    check_op(f, (4, 2, 3), (4, 2, 3))


def test_dwconv2d_identity_kernel():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 5, 2))
    k = np.zeros((3, 3, 2))
    k[1, 1] = 1.0
    y = dwconv2d(Tensor(x), Tensor(k)).data
    np.testing.assert_allclose(y, x)


def test_dwconv2d_grad():
    check_op(lambda x, k: (dwconv2d(x, k) * 2.0).sum(), (4, 4, 2), (3, 3, 2))


def test_backward_requires_scalar():
    t = Tensor(np.ones(3))
    with pytest.raises(ValueError):
        (t * 2.0).backward()


def test_grad_accumulates_over_reuse():
    x = Tensor(np.array([2.0]))
    y = x * x + x * 3.0
    y.backward(np.ones(1))
    np.testing.assert_allclose(x.grad, [2 * 2.0 + 3.0])
