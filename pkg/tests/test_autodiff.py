import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cmsanet import autodiff as ad
from cmsanet.autodiff import AdamState, Tensor, adam_step, load_checkpoint, save_checkpoint
from cmsanet.errors import DimensionError, ParseError, UsageError

from conftest import fd_check, param

PRIMITIVE_TOL = 1e-6

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


# matmul ----------------------------------------------------------------------

def test_matmul_identity():
    out = ad.matmul(Tensor([[1, 0], [0, 1]]), Tensor([[3], [4]]))
    np.testing.assert_array_equal(out.data, [[3], [4]])


def test_matmul_row_col():
    assert ad.matmul(Tensor([[1, 2]]), Tensor([[3], [4]])).data.tolist() == [[11.0]]


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_grad(rng):
    a, b = param(rng.normal(size=(3, 4))), param(rng.normal(size=(4, 2)))
    w = rng.normal(size=(3, 2))
    fd_check(lambda: ad.sum(ad.mul(ad.matmul(a, b), w)), {"a": a, "b": b}, PRIMITIVE_TOL)


def test_batched_matmul_grad(rng):
    a, b = param(rng.normal(size=(2, 3, 4))), param(rng.normal(size=(2, 4, 5)))
    w = rng.normal(size=(2, 3, 5))
    fd_check(lambda: ad.sum(ad.mul(ad.matmul(a, b), w)), {"a": a, "b": b}, PRIMITIVE_TOL)


# softmax ---------------------------------------------------------------------

def test_softmax_uniform():
    np.testing.assert_allclose(ad.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, rtol=0, atol=1e-15)


def test_softmax_large_inputs():
    np.testing.assert_array_equal(ad.softmax(Tensor([1000.0, 1000.0])).data, [0.5, 0.5])


def test_softmax_hand_values():
    e = [math.exp(x - 3) for x in (1, 2, 3)]
    expected = [v / sum(e) for v in e]
    np.testing.assert_allclose(ad.softmax(Tensor([1.0, 2.0, 3.0])).data, expected, rtol=1e-15)


def test_softmax_grad(rng):
    x = param(rng.normal(size=(3, 5)))
    w = rng.normal(size=(3, 5))
    for axis in (0, 1):
        fd_check(lambda: ad.sum(ad.mul(ad.softmax(x, axis), w)), {"x": x}, PRIMITIVE_TOL)


def test_softmax_bad_axis():
    with pytest.raises(UsageError):
        ad.softmax(Tensor([1.0, 2.0]), axis=3)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite),
       st.sampled_from([0, 1]))
def test_softmax_rows_sum_to_one(x, axis):
    y = ad.softmax(Tensor(x), axis).data
    np.testing.assert_allclose(y.sum(axis=axis), 1.0, rtol=0, atol=1e-9)
    assert np.all(y >= 0)


# conv2d ----------------------------------------------------------------------

def test_conv1x1_identity(rng):
    x = rng.normal(size=(3, 4, 5))
    w = np.eye(3).reshape(3, 3, 1, 1)
    np.testing.assert_array_equal(ad.conv2d(Tensor(x), Tensor(w)).data, x)


def test_conv3x3_hand_values():
    out = ad.conv2d(Tensor(np.ones((1, 3, 3))), Tensor(np.ones((1, 1, 3, 3)))).data[0]
    assert out[1, 1] == 9.0
    assert out[0, 0] == out[0, 2] == out[2, 0] == out[2, 2] == 4.0
    assert out[0, 1] == 6.0


def test_conv_matches_direct_loop(rng):
    x = rng.normal(size=(2, 5, 6))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    for stride in (1, 2):
        out = ad.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride).data
        ref = np.zeros((3, (5 - 1) // stride + 1, (6 - 1) // stride + 1))
        for o in range(3):
            for i in range(ref.shape[1]):
                for j in range(ref.shape[2]):
                    patch = xp[:, i * stride:i * stride + 3, j * stride:j * stride + 3]
                    ref[o, i, j] = np.sum(patch * w[o]) + b[o]
        np.testing.assert_allclose(out, ref, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("k,stride", [(1, 1), (3, 1), (3, 2)])
def test_conv_grad(rng, k, stride):
    x = param(rng.normal(size=(2, 5, 5)))
    w = param(rng.normal(size=(3, 2, k, k)))
    b = param(rng.normal(size=3))
    out_hw = (5 - 1) // stride + 1
    proj = rng.normal(size=(3, out_hw, out_hw))
    fd_check(lambda: ad.sum(ad.mul(ad.conv2d(x, w, b, stride=stride), proj)),
             {"x": x, "w": w, "b": b}, PRIMITIVE_TOL)


def test_conv_channel_mismatch():
    with pytest.raises(DimensionError):
        ad.conv2d(Tensor(np.ones((2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))


# elementwise -----------------------------------------------------------------

def test_elementwise_anchors():
    assert ad.sigmoid(Tensor(0.0)).data == 0.5
    assert ad.tanh(Tensor(0.0)).data == 0.0
    np.testing.assert_array_equal(ad.hadamard(Tensor([1, 2, 3]), Tensor([4, 5, 6])).data, [4, 10, 18])


def test_hadamard_shape_mismatch():
    with pytest.raises(DimensionError):
        ad.hadamard(Tensor([1, 2, 3]), Tensor([4, 5]))


def test_sigmoid_derivative_at_one():
    x = param(1.0)
    results = fd_check(lambda: ad.sigmoid(x), {"x": x}, 1e-8)
    s = 1 / (1 + math.exp(-1))
    assert abs(results[0].analytic[0] - s * (1 - s)) < 1e-15


def test_sigmoid_saturates_without_overflow():
    y = ad.sigmoid(Tensor([-800.0, 800.0])).data
    np.testing.assert_array_equal(y, [0.0, 1.0])


@pytest.mark.parametrize("op", ["add", "sub", "mul", "tanh", "sigmoid", "log", "scalar"])
def test_elementwise_grads(rng, op):
    a = param(rng.uniform(0.2, 2.0, size=(3, 4)))
    b = param(rng.normal(size=(3, 4)))
    w = rng.normal(size=(3, 4))
    fns = {
        "add": lambda: ad.add(a, b),
        "sub": lambda: ad.sub(a, b),
        "mul": lambda: ad.mul(a, b),
        "tanh": lambda: ad.tanh(b),
        "sigmoid": lambda: ad.sigmoid(b),
        "log": lambda: ad.log(a),
        "scalar": lambda: ad.scalar_mul(b, -2.5),
    }
    fd_check(lambda: ad.sum(ad.mul(fns[op](), w)), {"a": a, "b": b}, PRIMITIVE_TOL)


def test_broadcast_mul_grad(rng):
    x = param(rng.normal(size=(4, 3, 3)))
    g = param(rng.normal(size=(3, 3)))
    s = param(rng.normal(size=(1,)))
    w = rng.normal(size=(4, 3, 3))
    fd_check(lambda: ad.sum(ad.mul(ad.mul(s, ad.mul(g, x)), w)), {"x": x, "g": g, "s": s}, PRIMITIVE_TOL)


def test_log_clamp_has_zero_grad_outside():
    x = param([0.0, 0.5, 2.0])
    y = ad.log(x, 1e-12, 1.0)
    np.testing.assert_allclose(y.data, [math.log(1e-12), math.log(0.5), 0.0])
    ad.sum(y).backward()
    np.testing.assert_array_equal(x.grad, [0.0, 2.0, 0.0])


# l2 normalise ----------------------------------------------------------------

def test_l2_normalize_values():
    np.testing.assert_allclose(ad.l2_normalize(Tensor([3.0, 4.0])).data, [0.6, 0.8], rtol=1e-15)
    np.testing.assert_array_equal(ad.l2_normalize(Tensor([0.0, 0.0])).data, [0.0, 0.0])


def test_l2_normalize_zero_vector_grad():
    x = param([[0.0, 0.0], [3.0, 4.0]])
    ad.sum(ad.mul(ad.l2_normalize(x), Tensor([[1.0, 2.0], [1.0, 2.0]]))).backward()
    np.testing.assert_array_equal(x.grad[0], [0.0, 0.0])


def test_l2_normalize_grad(rng):
    x = param(rng.normal(size=5))
    w = rng.normal(size=5)
    fd_check(lambda: ad.sum(ad.mul(ad.l2_normalize(x), w)), {"x": x}, PRIMITIVE_TOL)


# shape ops and reductions ----------------------------------------------------

def test_concat_and_mean():
    np.testing.assert_array_equal(ad.concat([Tensor([1.0]), Tensor([2.0, 3.0])], 0).data, [1, 2, 3])
    np.testing.assert_array_equal(ad.mean(Tensor([[1.0, 3.0], [5.0, 7.0]]), 0).data, [3, 5])


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_concat_grad_routes_slices(rng, axis):
    shapes = [[2, 3, 4], [2, 3, 4], [2, 3, 4]]
    for s, extra in zip(shapes, (1, 2, 3)):
        s[axis] = extra
    ts = {f"t{i}": param(rng.normal(size=s)) for i, s in enumerate(shapes)}
    total = [2, 3, 4]
    total[axis] = 6
    w = rng.normal(size=total)
    fd_check(lambda: ad.sum(ad.mul(ad.concat(list(ts.values()), axis), w)), ts, PRIMITIVE_TOL)


def test_reduction_and_shape_grads(rng):
    x = param(rng.normal(size=(2, 3, 4)))
    w1 = rng.normal(size=(3, 4))
    w2 = rng.normal(size=(4, 2, 3))
    fd_check(lambda: ad.add(ad.sum(ad.mul(ad.mean(x, 0), w1)),
                            ad.sum(ad.mul(ad.transpose(x, (2, 0, 1)), w2))),
             {"x": x}, PRIMITIVE_TOL)
    w3 = Tensor(rng.normal(size=(3, 24)))
    fd_check(lambda: ad.sum(ad.mul(ad.broadcast_to(ad.reshape(x, (1, 24)), (3, 24)), w3)),
             {"x": x}, PRIMITIVE_TOL)


def test_take_rows_grad(rng):
    t = param(rng.normal(size=(5, 3)))
    w = rng.normal(size=(4, 3))
    fd_check(lambda: ad.sum(ad.mul(ad.take_rows(t, [3, 0, 3, 1]), w)), {"t": t}, PRIMITIVE_TOL)


@settings(max_examples=50, deadline=None)
@given(st.lists(arrays(np.float64, st.integers(1, 5), elements=st.floats(-1e6, 1e6)), min_size=1, max_size=4))
def test_concat_sum_roundtrip(parts):
    joined = float(ad.sum(ad.concat([Tensor(p) for p in parts], 0)).data)
    separate = sum(float(ad.sum(Tensor(p)).data) for p in parts)
    assert abs(joined - separate) <= 1e-12 * max(1.0, sum(np.abs(p).sum() for p in parts))


# backward --------------------------------------------------------------------

def test_backward_of_sum_is_ones():
    x = param(np.zeros((2, 3)))
    ad.sum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_square():
    x = param(3.0)
    ad.mul(x, x).backward()
    assert x.grad == 6.0


def test_backward_accumulates():
    x = param(3.0)
    loss = ad.mul(x, x)
    loss.backward()
    loss.backward()
    assert x.grad == 12.0


def test_backward_needs_scalar():
    with pytest.raises(UsageError):
        ad.mul(param([1.0, 2.0]), 2.0).backward()


def test_backward_diamond_graph():
    x = param(2.0)
    y = ad.mul(x, x)  # used twice downstream
    ad.add(ad.mul(y, 3.0), ad.tanh(y)).backward()
    expected = 3 * 4 + (1 - math.tanh(4) ** 2) * 4
    assert abs(x.grad - expected) < 1e-12


def test_topological_order_visits_each_node_once():
    x = param(1.0)
    y = ad.add(x, x)
    z = ad.mul(y, y)
    order = ad.topological_order(z)
    assert len(order) == len({id(n) for n in order}) == 3
    assert order[0] is x and order[-1] is z


def test_backward_is_deterministic(rng):
    data = rng.normal(size=(4, 6))

    def run():
        x = param(data)
        w = param(np.arange(12.0).reshape(6, 2) / 7)
        ad.sum(ad.softmax(ad.matmul(x, w))).backward()
        return x.grad.tobytes(), w.grad.tobytes()

    assert run() == run()


def test_no_grad_builds_no_graph():
    x = param(1.0)
    with ad.no_grad():
        y = ad.mul(x, x)
    assert not y.requires_grad


# adam --------------------------------------------------------------------------

def test_adam_zero_grad_leaves_params():
    p = param([1.0, -2.0])
    p.grad = np.zeros(2)
    adam_step({"p": p}, AdamState(base_lr=0.1, max_steps=10))
    np.testing.assert_array_equal(p.data, [1.0, -2.0])


def test_poly_lr_schedule():
    state = AdamState(base_lr=2.5e-4, max_steps=100, power=0.9)
    assert state.lr == 2.5e-4
    assert ad.poly_lr(2.5e-4, 50, 100, 0.9) == pytest.approx(2.5e-4 * 0.5 ** 0.9, rel=1e-15)
    assert ad.poly_lr(2.5e-4, 100, 100, 0.9) == 0.0
    assert ad.poly_lr(2.5e-4, 150, 100, 0.9) == 0.0


def test_adam_first_step_hand_value():
    p = param([0.7])
    p.grad = np.ones(1)
    state = AdamState(base_lr=2.5e-4, max_steps=100)
    used = adam_step({"p": p}, state)
    assert used == 2.5e-4
    np.testing.assert_allclose(p.data, [0.7 - 2.5e-4 / (1 + 1e-8)], rtol=0, atol=1e-15)
    assert state.t == 1


def test_adam_decoupled_weight_decay():
    p = param([2.0])
    p.grad = np.zeros(1)
    adam_step({"p": p}, AdamState(base_lr=0.1, max_steps=10, weight_decay=5e-4))
    np.testing.assert_allclose(p.data, [2.0 - 0.1 * 5e-4 * 2.0], rtol=1e-15)


# checkpoints ---------------------------------------------------------------------

def test_checkpoint_roundtrip_bitwise(tmp_path, rng):
    tensors = {"a": rng.normal(size=(2, 3)), "scalar": np.array(1.5), "ü/b": rng.normal(size=(4,)),
               "weird": np.array([np.finfo(float).tiny, -0.0, 1e308])}
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, tensors)
    back = load_checkpoint(path)
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].shape == tensors[k].shape
        assert back[k].tobytes() == tensors[k].tobytes()


def test_checkpoint_layout(tmp_path):
    path = tmp_path / "c.bin"
    save_checkpoint(path, {"w": np.array([[1.0, 2.0]])})
    raw = path.read_bytes()
    assert raw[:8] == b"CMSA0001"
    assert raw[8:12] == (1).to_bytes(4, "little")
    assert raw[12:16] == (1).to_bytes(4, "little") and raw[16:17] == b"w"
    assert raw[17:21] == (2).to_bytes(4, "little")
    assert raw[21:37] == (1).to_bytes(8, "little") + (2).to_bytes(8, "little")
    assert np.frombuffer(raw[37:], "<f8").tolist() == [1.0, 2.0]


def test_checkpoint_malformed(tmp_path):
    path = tmp_path / "c.bin"
    save_checkpoint(path, {"w": np.ones(3)})
    raw = path.read_bytes()
    (tmp_path / "trunc.bin").write_bytes(raw[:-4])
    with pytest.raises(ParseError, match="trunc.bin"):
        load_checkpoint(tmp_path / "trunc.bin")
    (tmp_path / "magic.bin").write_bytes(b"XXXX0001" + raw[8:])
    with pytest.raises(ParseError, match="magic"):
        load_checkpoint(tmp_path / "magic.bin")
