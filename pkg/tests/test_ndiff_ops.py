"""Primitive ops: hand-checked values plus finite-difference gradients."""

import math

import numpy as np
import pytest

from gath.ndiff import (
    BatchNormState,
    Tape,
    Tensor,
    add,
    batch_norm_1d,
    binary_cross_entropy_mean,
    concat_last_dim,
    conv2d,
    dropout,
    finite_diff_check,
    gather_rows,
    hadamard,
    leaky_rectifier,
    matmul,
    reduce_sum,
    reshape,
    scale,
    scatter_add_rows,
    segment_softmax,
    segment_sum_rows,
    sigmoid,
    stack_rows,
    tanh,
    transpose,
)


def leaf(arr):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


def grad_of(build, *leaves):
    """Run build() under a tape and return each leaf's gradient."""
    for p in leaves:
        p.grad = None
    with Tape() as tape:
        out = build()
        tape.backward(out)
    return [p.grad for p in leaves]


# ---------------------------------------------------------------- matmul


def test_matmul_identity():
    m = leaf([[1.0, 2.0], [3.0, 4.0]])
    out = matmul(leaf(np.eye(2)), m)
    assert np.array_equal(out.data, m.data)


def test_matmul_hand_arithmetic():
    out = matmul(leaf([[1.0, 2.0]]), leaf([[3.0], [4.0]]))
    assert out.data.tolist() == [[11.0]]


def test_matmul_gradient():
    rng = np.random.default_rng(0)
    a = leaf(rng.normal(size=(5, 4)))
    b = leaf(rng.normal(size=(4, 3)))
    err = finite_diff_check(lambda: reduce_sum(tanh(matmul(a, b))), [a, b])
    assert err < 1e-6


# --------------------------------------------------------------- hadamard


def test_hadamard_ones_and_zeros():
    rng = np.random.default_rng(1)
    a = leaf(rng.normal(size=(3, 4)))
    assert np.array_equal(hadamard(a, leaf(np.ones((3, 4)))).data, a.data)
    assert np.all(hadamard(a, leaf(np.zeros((3, 4)))).data == 0.0)


def test_hadamard_gradient():
    rng = np.random.default_rng(2)
    a = leaf(rng.normal(size=(3, 4)))
    b = leaf(rng.normal(size=(3, 4)))
    err = finite_diff_check(lambda: reduce_sum(hadamard(a, b)), [a, b])
    assert err < 1e-6


def test_hadamard_broadcast_column():
    """Column vector against matrix; gradient must unbroadcast correctly."""
    rng = np.random.default_rng(3)
    col = leaf(rng.normal(size=(3, 1)))
    mat = leaf(rng.normal(size=(3, 4)))
    err = finite_diff_check(lambda: reduce_sum(hadamard(col, mat)), [col, mat])
    assert err < 1e-6


# ------------------------------------------------------- segment softmax


def test_segment_softmax_values():
    offsets = np.array([0, 1, 3, 6], dtype=np.int64)
    x = leaf([5.0, 2.0, 2.0, 1.0, 0.0, 0.0])
    y = segment_softmax(x, offsets).data
    assert y[0] == pytest.approx(1.0)
    assert y[1] == pytest.approx(0.5)
    assert np.allclose(y[3:6], [0.5761, 0.2119, 0.2119], atol=1e-4)


def test_segment_softmax_gradient():
    rng = np.random.default_rng(4)
    offsets = np.array([0, 2, 2, 5, 8], dtype=np.int64)
    x = leaf(rng.normal(size=8))
    w = leaf(rng.normal(size=8))
    err = finite_diff_check(
        lambda: reduce_sum(hadamard(segment_softmax(x, offsets), w)), [x]
    )
    assert err < 1e-5


# ----------------------------------------------------------------- conv2d


def test_conv2d_identity_kernel():
    rng = np.random.default_rng(5)
    x = leaf(rng.normal(size=(2, 1, 4, 4)))
    k = leaf(np.ones((1, 1, 1, 1)))
    assert np.allclose(conv2d(x, k).data, x.data)


def test_conv2d_zero_kernel():
    x = leaf(np.random.default_rng(6).normal(size=(1, 1, 5, 5)))
    k = leaf(np.zeros((2, 1, 2, 2)))
    assert np.all(conv2d(x, k).data == 0.0)


def test_conv2d_gradient():
    rng = np.random.default_rng(7)
    x = leaf(rng.normal(size=(1, 1, 6, 6)))
    k = leaf(rng.normal(size=(2, 1, 3, 3)))
    err = finite_diff_check(lambda: reduce_sum(tanh(conv2d(x, k))), [x, k])
    assert err < 1e-5


# ------------------------------------------------------------ activations


def test_sigmoid_at_zero():
    assert sigmoid(leaf([0.0])).data[0] == 0.5


def test_sigmoid_extremes_are_stable():
    y = sigmoid(leaf([-1000.0, 1000.0])).data
    assert y[0] == pytest.approx(0.0, abs=1e-12)
    assert y[1] == pytest.approx(1.0, abs=1e-12)


def test_leaky_rectifier_values():
    y = leaky_rectifier(leaf([-1.0, 0.0, 2.0]), 0.2).data
    assert np.allclose(y, [-0.2, 0.0, 2.0])


def test_dropout_eval_is_identity():
    rng = np.random.default_rng(8)
    a = leaf(rng.normal(size=(10, 10)))
    out = dropout(a, 0.5, False, rng)
    assert out.data is a.data or np.array_equal(out.data, a.data)


def test_dropout_train_scales_survivors():
    rng = np.random.default_rng(9)
    a = leaf(np.ones((200, 50)))
    out = dropout(a, 0.25, True, rng).data
    kept = out != 0.0
    assert np.allclose(out[kept], 1.0 / 0.75)
    assert 0.70 < kept.mean() < 0.80


# ------------------------------------------------------------- batch norm


def test_batch_norm_train_normalizes_columns():
    rng = np.random.default_rng(10)
    state = BatchNormState(4)
    a = leaf(rng.normal(loc=3.0, scale=2.0, size=(64, 4)))
    out = batch_norm_1d(a, state, True).data
    assert np.allclose(out.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(out.var(axis=0), 1.0, atol=1e-4)


def test_batch_norm_eval_is_affine_in_running_stats():
    state = BatchNormState(3)
    state.mean[:] = [1.0, 2.0, 3.0]
    state.var[:] = [4.0, 4.0, 4.0]
    a = leaf([[1.0, 2.0, 3.0], [3.0, 4.0, 5.0]])
    out = batch_norm_1d(a, state, False).data
    want = (a.data - [1.0, 2.0, 3.0]) / math.sqrt(4.0 + 1e-5)
    assert np.allclose(out, want, atol=1e-12)


def test_batch_norm_gradient():
    rng = np.random.default_rng(11)
    state = BatchNormState(3)
    a = leaf(rng.normal(size=(7, 3)))
    w = leaf(rng.normal(size=(7, 3)))
    err = finite_diff_check(
        lambda: reduce_sum(
            hadamard(batch_norm_1d(a, state, True, update_stats=False), w)
        ),
        [a],
    )
    assert err < 1e-5


def test_batch_norm_update_stats_moves_running_mean():
    state = BatchNormState(2)
    a = leaf(np.full((8, 2), 10.0))
    batch_norm_1d(a, state, True, momentum=0.1)
    assert np.allclose(state.mean, 1.0)  # 0.9*0 + 0.1*10


# -------------------------------------------------------------------- bce


def test_bce_perfect_prediction_is_tiny():
    y = np.array([[1.0, 0.0]])
    p = leaf(y.copy())
    assert binary_cross_entropy_mean(p, y).item() <= 1e-11


def test_bce_half_everywhere_is_ln2():
    p = leaf(np.full((3, 5), 0.5))
    y = (np.random.default_rng(12).random((3, 5)) > 0.5).astype(float)
    assert binary_cross_entropy_mean(p, y).item() == pytest.approx(math.log(2))


def test_bce_hand_example():
    p = leaf([[0.9, 0.1]])
    y = np.array([[1.0, 0.0]])
    want = -(math.log(0.9) + math.log(0.9)) / 2
    assert binary_cross_entropy_mean(p, y).item() == pytest.approx(want, abs=1e-9)
    assert want == pytest.approx(0.10536, abs=1e-5)


def test_bce_gradient_is_finite_at_clamped_probs():
    """Saturated probabilities must still produce a finite pull."""
    p = leaf([[1.0, 0.0, 0.5]])
    y = np.array([[0.0, 1.0, 1.0]])
    (g,) = grad_of(lambda: binary_cross_entropy_mean(p, y), p)
    assert np.all(np.isfinite(g))
    assert g[0, 0] > 0 and g[0, 1] < 0


# ------------------------------------------------------- tape / gradcheck


def test_linear_function_has_zero_error():
    x = leaf(np.random.default_rng(13).normal(size=(4, 3)))
    assert finite_diff_check(lambda: reduce_sum(x), [x]) < 1e-10


def test_quadratic_gradient_is_two_x():
    x = leaf(np.random.default_rng(14).normal(size=(5,)))
    (g,) = grad_of(lambda: reduce_sum(hadamard(x, x)), x)
    rel = np.max(np.abs(g - 2 * x.data)) / max(1.0, np.max(np.abs(2 * x.data)))
    assert rel < 1e-7


def test_leaf_used_twice_accumulates():
    x = leaf([2.0, 3.0])
    (g,) = grad_of(lambda: reduce_sum(add(hadamard(x, x), x)), x)
    assert np.allclose(g, 2 * x.data + 1.0)


def test_gradcheck_reports_per_leaf():
    a = leaf([1.0, 2.0])
    b = leaf([[3.0, 4.0]])
    res = finite_diff_check(
        lambda: reduce_sum(add(reshape(a, (1, 2)), b)), [a, b], names=["a", "b"]
    )
    assert {name for name, _ in res.per_leaf} == {"a", "b"}
    assert all(v < 1e-9 for _, v in res.per_leaf)


# ----------------------------------------- every primitive, random shapes


def _cases():
    rng = np.random.default_rng(15)
    offs = np.array([0, 2, 5, 5, 9], dtype=np.int64)
    ids = np.array([3, 0, 3, 1], dtype=np.int64)
    out = []
    for trial in range(3):
        r, c = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        a = rng.normal(size=(r, c))
        b = rng.normal(size=(r, c))
        m2 = rng.normal(size=(c, int(rng.integers(2, 5))))
        out.extend(
            [
                ("matmul", lambda a=a, m2=m2: _fd([a, m2], lambda t: matmul(t[0], t[1]))),
                ("hadamard", lambda a=a, b=b: _fd([a, b], lambda t: hadamard(t[0], t[1]))),
                ("add", lambda a=a, b=b: _fd([a, b], lambda t: add(t[0], t[1]))),
                ("scale", lambda a=a: _fd([a], lambda t: scale(t[0], -1.7))),
                ("transpose", lambda a=a: _fd([a], lambda t: transpose(t[0]))),
                ("reshape", lambda a=a, r=r, c=c: _fd([a], lambda t: reshape(t[0], (c, r)))),
                ("concat", lambda a=a, b=b: _fd([a, b], lambda t: concat_last_dim([t[0], t[1]]))),
                ("stack", lambda a=a, b=b: _fd([a, b], lambda t: stack_rows([t[0], t[1]]))),
                ("tanh", lambda a=a: _fd([a], lambda t: tanh(t[0]))),
                ("sigmoid", lambda a=a: _fd([a], lambda t: sigmoid(t[0]))),
                ("leaky", lambda a=a: _fd([a], lambda t: leaky_rectifier(t[0], 0.2))),
            ]
        )
        table = rng.normal(size=(4, 3))
        seg = rng.normal(size=(9, 2))
        sc = rng.normal(size=9)
        out.extend(
            [
                ("gather", lambda table=table: _fd([table], lambda t: gather_rows(t[0], ids))),
                ("scatter", lambda: _fd(
                    [rng.normal(size=(4, 3))],
                    lambda t: scatter_add_rows(t[0], ids, 5),
                )),
                ("segsum", lambda seg=seg: _fd([seg], lambda t: segment_sum_rows(t[0], offs))),
                ("segsoft", lambda sc=sc: _fd([sc], lambda t: segment_softmax(t[0], offs))),
            ]
        )
    return out


def _fd(arrays, make):
    leaves = [leaf(a) for a in arrays]
    weights = None

    def build():
        nonlocal weights
        out = make(leaves)
        if weights is None:
            weights = np.random.default_rng(99).normal(size=out.shape)
        # weighted sum so the scalar mixes every output element
        return reduce_sum(hadamard(out, Tensor(weights)))

    return finite_diff_check(build, leaves)


@pytest.mark.parametrize("name,fn", _cases(), ids=lambda v: v if isinstance(v, str) else "")
def test_primitive_gradients(name, fn):
    assert fn() < 1e-5


# -------------------------------------------------------------- serialize


def test_array_round_trip_is_bitwise(tmp_path):
    from gath.ndiff.serialize import load_array, save_array

    rng = np.random.default_rng(16)
    for arr in (
        rng.normal(size=(3, 4, 2)),
        np.array([], dtype=np.float64),
        rng.integers(-5, 5, size=7),
    ):
        path = tmp_path / "arr.bin"
        save_array(path, arr)
        back = load_array(path)
        assert back.dtype == arr.dtype
        assert back.shape == arr.shape
        assert np.array_equal(back, arr)


def test_corrupt_array_headers_are_rejected(tmp_path):
    from gath.errors import CheckpointError
    from gath.ndiff.serialize import array_to_bytes, load_array, save_array

    path = tmp_path / "arr.bin"
    save_array(path, np.arange(4.0))
    blob = path.read_bytes()

    bad_magic = b"XXXX" + blob[4:]
    path.write_bytes(bad_magic)
    with pytest.raises(CheckpointError):
        load_array(path)

    path.write_bytes(blob[:-3])  # truncated payload
    with pytest.raises(CheckpointError):
        load_array(path)

    # trailing garbage after a well-formed record
    path.write_bytes(array_to_bytes(np.arange(4.0)) + b"\x00")
    with pytest.raises(CheckpointError):
        load_array(path)
