import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from augan import tensor as T
from augan.errors import ContractError, NumericalError, ShapeError
from augan.tensor import Tape, Tensor

from conftest import GRAD_TOL, grad_error

N_POINTS = 10


def _away_from_zero(x, eps=1e-2):
    return np.where(np.abs(x) < eps, np.sign(x + 1e-12) * eps * 2, x)


# (name, function of one tensor, input sampler)
UNARY = [
    ("add", lambda x: T.add(x, np.linspace(-1, 1, 12).reshape(3, 4)), lambda r: r.standard_normal((3, 4))),
    ("add_broadcast", lambda x: T.add(x, Tensor(np.ones((2, 3, 4)))), lambda r: r.standard_normal((3, 4))),
    ("sub", lambda x: T.sub(np.arange(12.0).reshape(3, 4), x), lambda r: r.standard_normal((3, 4))),
    ("mul", lambda x: T.mul(x, x), lambda r: r.standard_normal((3, 4))),
    ("mul_broadcast", lambda x: T.mul(x, np.arange(4.0)), lambda r: r.standard_normal((3, 4))),
    ("scalar_mul", lambda x: T.scalar_mul(x, -2.5), lambda r: r.standard_normal((3, 4))),
    ("matmul_left", lambda x: T.matmul(x, np.arange(20.0).reshape(4, 5) / 10), lambda r: r.standard_normal((3, 4))),
    ("matmul_self", lambda x: T.matmul(x, T.transpose(x)), lambda r: r.standard_normal((3, 4))),
    ("transpose", T.transpose, lambda r: r.standard_normal((3, 4))),
    ("leaky_relu", lambda x: T.leaky_relu(x, 0.2), lambda r: _away_from_zero(r.standard_normal((3, 4)))),
    ("relu", T.relu, lambda r: _away_from_zero(r.standard_normal((3, 4)))),
    ("tanh", T.tanh, lambda r: r.standard_normal((3, 4))),
    ("exp", T.exp, lambda r: r.standard_normal((3, 4))),
    ("log", T.log, lambda r: r.uniform(0.2, 3.0, (3, 4))),
    ("clip01", T.clip01, lambda r: np.where(r.uniform(size=(3, 4)) < 0.5, r.uniform(0.05, 0.95, (3, 4)),
                                             r.choice([-1.0, 1.0], (3, 4)) * r.uniform(1.1, 2.0, (3, 4)))),
    ("sum_all", T.sum, lambda r: r.standard_normal((3, 4))),
    ("sum_axis", lambda x: T.sum(x, axis=1, keepdims=True), lambda r: r.standard_normal((3, 4))),
    ("mean_all", T.mean, lambda r: r.standard_normal((3, 4))),
    ("mean_axes", lambda x: T.mean(x, axis=(0, 2)), lambda r: r.standard_normal((2, 3, 4))),
    ("reshape", lambda x: T.reshape(x, (4, 3)), lambda r: r.standard_normal((3, 4))),
    ("concat", lambda x: T.concat([x, T.scalar_mul(x, 2.0), Tensor(np.ones((3, 4)))], axis=1),
     lambda r: r.standard_normal((3, 4))),
    ("l2_normalize", lambda x: T.l2_normalize(x, axis=1), lambda r: r.standard_normal((3, 4))),
    ("bilinear_sample", lambda x: T.bilinear_sample(x, _GRID), lambda r: r.uniform(0, 1, (2, 2, 4, 5))),
]

_GRID = np.random.default_rng(7).uniform(-3.0, 7.0, (2, 3, 6, 2)) + 0.013  # reflected both ways


@pytest.mark.parametrize("name,f,sample", UNARY, ids=[u[0] for u in UNARY])
def test_backward_matches_central_differences(name, f, sample):
    r = np.random.default_rng(zlib.crc32(name.encode()))
    worst = max(grad_error(f, sample(r), seed=i) for i in range(N_POINTS))
    assert worst < GRAD_TOL


def test_forward_op_dispatch_matches_functions(rng):
    x = rng.standard_normal((3, 4))
    assert np.array_equal(T.forward_op("tanh", x).data, np.tanh(x))
    assert np.array_equal(T.forward_op("matmul", x, x.T).data, x @ x.T)
    assert np.array_equal(T.forward_op("sum", x, axis=0).data, x.sum(axis=0))
    assert np.array_equal(T.forward_op("concat", x, x, axis=0).data, np.concatenate([x, x]))
    with pytest.raises(ContractError):
        T.forward_op("softmax", x)


def test_mean_gradient_example():
    tape = Tape()
    x = tape.watch([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(tape.backward(T.mean(x))[x], [0.25] * 4)


def test_shared_subexpression_accumulates():
    tape = Tape()
    x = tape.watch(3.0)
    y = x * x + x * 2.0  # dy/dx = 2x + 2
    assert tape.backward(y)[x] == 8.0


def test_unreached_leaf_gets_zeros():
    tape = Tape()
    a = tape.watch(np.ones(3))
    b = tape.watch(np.ones((2, 2)))
    g = tape.backward(T.sum(a))
    assert np.array_equal(g[b], np.zeros((2, 2)))


def test_constants_do_not_record():
    tape = Tape()
    x = tape.watch(np.ones(2))
    n = len(tape)
    c = Tensor(np.ones(2)) * 3.0 + 1.0
    assert c.tape is None and len(tape) == n
    assert not c.requires_grad


def test_backward_requires_scalar_root():
    tape = Tape()
    x = tape.watch(np.ones(3))
    with pytest.raises(ContractError):
        tape.backward(x * 2.0)


def test_mixing_tapes_is_rejected():
    a = Tape().watch(1.0)
    b = Tape().watch(1.0)
    with pytest.raises(ContractError):
        a + b


def test_shape_mismatch_names_kind():
    with pytest.raises(ShapeError) as info:
        T.matmul(np.ones((2, 3)), np.ones((2, 3)))
    assert info.value.kind == "matmul"
    with pytest.raises(ShapeError):
        T.add(np.ones((2, 3)), np.ones((3, 2)))


def test_non_finite_result_names_node():
    tape = Tape()
    x = tape.watch(np.array([1.0, 0.0]))
    with pytest.raises(NumericalError) as info:
        T.log(x)
    assert info.value.node_id == len(tape)


def test_clip01_subgradient_convention():
    tape = Tape()
    x = tape.watch([-0.5, 0.0, 0.3, 1.0, 1.5])
    g = tape.backward(T.sum(T.clip01(x)))[x]
    assert np.array_equal(g, [0.0, 0.0, 1.0, 0.0, 0.0])


def test_leaky_relu_kink_uses_slope():
    tape = Tape()
    x = tape.watch([-1.0, 0.0, 2.0])
    g = tape.backward(T.sum(T.leaky_relu(x, 0.2)))[x]
    assert np.array_equal(g, [0.2, 0.2, 1.0])


def test_bilinear_centre_of_2x2():
    img = np.array([[0.0, 1.0], [2.0, 3.0]]).reshape(1, 1, 2, 2)
    grid = np.array([0.5, 0.5]).reshape(1, 1, 1, 2)
    assert T.bilinear_sample(img, grid).data.item() == 1.5


def test_bilinear_integer_grid_is_exact_copy(rng):
    img = rng.uniform(0, 1, (2, 3, 5, 6))
    rows, cols = np.meshgrid(np.arange(5.0), np.arange(6.0), indexing="ij")
    grid = np.broadcast_to(np.stack([rows, cols], -1), (2, 5, 6, 2))
    assert np.array_equal(T.bilinear_sample(img, grid).data, img)


def _reflect_oracle(c, n):
    # walk back and forth across [0, n-1] one unit at a time
    c = float(c)
    while c < 0 or c > n - 1:
        c = -c if c < 0 else 2 * (n - 1) - c
    return c


@settings(max_examples=200, deadline=None)
@given(st.floats(-40, 40, allow_nan=False), st.integers(2, 9))
def test_reflect_coords_matches_unfolding(c, n):
    assert T.reflect_coords(np.array([c]), n)[0] == pytest.approx(_reflect_oracle(c, n), abs=1e-9)


def test_reflect_integer_shift_matches_numpy_pad(rng):
    img = rng.uniform(0, 1, (1, 1, 1, 8))
    shift = 3
    cols = np.arange(8.0) - shift
    grid = np.stack([np.zeros(8), cols], -1).reshape(1, 1, 8, 2)
    expected = np.pad(img[0, 0, 0], (shift, 0), mode="reflect")[:8]
    assert np.array_equal(T.bilinear_sample(img, grid).data[0, 0, 0], expected)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 5), elements=st.floats(-5, 5)).filter(lambda a: (np.abs(a).sum(1) > 1e-3).all()))
def test_l2_normalize_rows_have_unit_norm(a):
    out = T.l2_normalize(a, axis=1).data
    assert np.allclose(np.linalg.norm(out, axis=1), 1.0)


def test_l2_normalize_rejects_zero_row():
    with pytest.raises((ContractError, NumericalError)):
        T.l2_normalize(np.zeros((2, 3)), axis=1)


def test_ndarray_on_the_left_defers_to_tensor():
    tape = Tape()
    x = tape.watch(np.ones(3))
    y = np.arange(3.0) * x
    assert isinstance(y, Tensor) and y.requires_grad
    assert np.array_equal(tape.backward(T.sum(y))[x], np.arange(3.0))


def test_finite_diff_check_detects_wrong_gradient():
    # a deliberately wrong vjp must be caught
    def bad_square(x):
        return T._record("bad", (x,), x.data ** 2, lambda g: (g * x.data,))

    assert T.finite_diff_check(lambda x: T.sum(bad_square(x)), np.array([1.0, 2.0])) > 0.1
