import numpy as np
import pytest

import sata.autodiff as ad
from sata.autodiff import Tensor, checkpoint, gradcheck
from sata.autodiff.nn import MLP, Linear
from sata.autodiff.optim import Adam, AdamState, adam_step, lr_schedule
from sata.errors import CheckpointError, IndexOutOfRange, InvalidAxis, NonScalarLoss, ShapeMismatch

TOL = 1e-3
R = np.random.default_rng(42)


def rnd(*shape):
    return R.standard_normal(shape)


def pos(*shape):
    return R.uniform(0.5, 2.0, shape)


def wsum(y):
    # random fixed weights make every output entry matter
    w = np.random.default_rng(y.size).standard_normal(y.shape)
    return ad.sum(ad.mul(y, w))


IDX = np.array([0, 2, 2, 1, 3])

OP_CASES = {
    "add_broadcast": (lambda a, b: ad.add(a, b), [rnd(3, 4), rnd(1, 4)]),
    "sub_broadcast": (lambda a, b: ad.sub(a, b), [rnd(2, 3, 4), rnd(4)]),
    "hadamard": (lambda a, b: ad.mul(a, b), [rnd(3, 4), rnd(3, 1)]),
    "div": (lambda a, b: ad.div(a, b), [rnd(3, 4), pos(3, 4)]),
    "neg": (lambda a: ad.neg(a), [rnd(5)]),
    "scalar_mul": (lambda a: ad.scalar_mul(a, -2.5), [rnd(2, 3)]),
    "pow": (lambda a: ad.power(a, 3), [rnd(4)]),
    "square": (lambda a: ad.square(a), [rnd(4)]),
    "matmul": (lambda a, b: ad.matmul(a, b), [rnd(3, 4), rnd(4, 5)]),
    "matmul_batched_broadcast": (lambda a, b: ad.matmul(a, b), [rnd(2, 3, 4), rnd(4, 2)]),
    "cross": (lambda a, b: ad.cross(a, b), [rnd(4, 3), rnd(4, 3)]),
    "exp": (lambda a: ad.exp(a), [rnd(3, 2)]),
    "log": (lambda a: ad.log(a), [pos(3, 2)]),
    "sqrt": (lambda a: ad.sqrt(a), [pos(3, 2)]),
    "sin": (lambda a: ad.sin(a), [rnd(6)]),
    "cos": (lambda a: ad.cos(a), [rnd(6)]),
    "tanh": (lambda a: ad.tanh(a), [rnd(3, 3)]),
    "sigmoid": (lambda a: ad.sigmoid(a), [rnd(3, 3)]),
    "relu": (lambda a: ad.relu(a), [R.choice([-1, 1], (4, 4)) * pos(4, 4)]),
    "sum_axis": (lambda a: ad.sum(a, axis=1), [rnd(3, 4, 2)]),
    "sum_keepdims": (lambda a: ad.sum(a, axis=(0, 2), keepdims=True), [rnd(3, 4, 2)]),
    "mean_axis": (lambda a: ad.mean(a, axis=-1), [rnd(3, 5)]),
    "max_axis": (lambda a: ad.max(a, axis=0), [rnd(5, 4)]),
    "cumsum": (lambda a: ad.cumsum(a, axis=0), [rnd(6, 2)]),
    "reshape": (lambda a: ad.reshape(a, (6, 2)), [rnd(3, 4)]),
    "transpose": (lambda a: ad.transpose(a, (2, 0, 1)), [rnd(2, 3, 4)]),
    "slice": (lambda a: a[1:, ::2], [rnd(4, 5)]),
    "index_repeat": (lambda a: a[np.array([0, 0, 2])], [rnd(3, 2)]),
    "concat": (lambda a, b: ad.concat([a, b], axis=1), [rnd(2, 3), rnd(2, 2)]),
    "stack": (lambda a, b: ad.stack([a, b], axis=1), [rnd(2, 3), rnd(2, 3)]),
    "softmax": (lambda a: ad.softmax(a, axis=-1), [rnd(3, 5)]),
    "layer_norm": (lambda a, g, b: ad.layer_norm(a, g, b), [rnd(4, 8), rnd(8), rnd(8)]),
    "layer_norm_plain": (lambda a: ad.layer_norm(a), [rnd(2, 3, 8)]),
    "dropout": (lambda a: ad.dropout(a, 0.3, True, ad.DropoutStream(7)), [rnd(4, 6)]),
    "gather_rows": (lambda a: ad.gather_rows(a, IDX), [rnd(4, 3)]),
    "gather_rows_axis1": (lambda a: ad.gather_rows(a, IDX, axis=1), [rnd(2, 4, 3)]),
    "scatter_add_rows": (lambda a: ad.scatter_add_rows(a, IDX, 4), [rnd(5, 3)]),
    "scatter_add_axis1": (lambda a: ad.scatter_add_rows(a, IDX, 4, axis=1), [rnd(2, 5, 3)]),
    "broadcast_rows": (lambda a: ad.broadcast_rows(a, 4), [rnd(1, 3)]),
    "segment_max": (lambda a: ad.segment_max(a, [0, 0, 1, 1, 1], 2, axis=1)[0], [rnd(2, 5, 3)]),
    "where": (lambda a, b: ad.where(np.arange(6).reshape(2, 3) % 2 == 0, a, b), [rnd(2, 3), rnd(2, 3)]),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_finite_differences(name):
    fn, inputs = OP_CASES[name]
    res = gradcheck.check(lambda *t: wsum(fn(*t)), inputs, h=1e-3, name=name)
    assert res.max_rel_error < TOL, (name, res.max_rel_error)


def test_forward_is_float32_by_default():
    x = Tensor(rnd(3, 4))
    assert x.dtype == np.float32
    y = ad.layer_norm(ad.matmul(x, Tensor(rnd(4, 2))) * 2.0 + 1.0)
    assert y.dtype == np.float32


def test_relu_backward_example():
    x = Tensor([-1.0, 2.0], requires_grad=True)
    ad.relu(x).backward(np.ones(2))
    np.testing.assert_array_equal(x.grad, [0, 1])


def test_softmax_uniform():
    np.testing.assert_allclose(ad.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, rtol=1e-6)


def test_layer_norm_4x8_fd():
    res = gradcheck.check(lambda x: wsum(ad.layer_norm(x)), [rnd(4, 8)], h=1e-3)
    assert res.max_rel_error < 1e-3


def test_backward_examples():
    x = Tensor([3.0], requires_grad=True)
    ad.sum(x * x).backward()
    np.testing.assert_array_equal(x.grad, [6.0])
    ad.sum(x * x).backward()
    np.testing.assert_array_equal(x.grad, [12.0])  # accumulation doubles


def test_two_backwards_double_exactly():
    a = Tensor(rnd(3, 4), requires_grad=True)
    b = Tensor(rnd(4, 2), requires_grad=True)
    loss = ad.sum(ad.tanh(a @ b))
    loss.backward()
    first = a.grad.copy(), b.grad.copy()
    loss.backward()
    assert np.array_equal(a.grad, 2 * first[0]) and np.array_equal(b.grad, 2 * first[1])


def test_matmul_sum_fd():
    res = gradcheck.check(lambda a, b: ad.sum(a @ b), [rnd(3, 4), rnd(4, 2)])
    assert res.max_rel_error < 1e-3


def test_non_scalar_loss():
    with pytest.raises(NonScalarLoss):
        Tensor(rnd(2), requires_grad=True).backward()


def test_errors():
    with pytest.raises(ShapeMismatch):
        ad.add(Tensor(rnd(2, 3)), Tensor(rnd(4)))
    with pytest.raises(ShapeMismatch):
        ad.matmul(Tensor(rnd(2, 3)), Tensor(rnd(2, 3)))
    with pytest.raises(InvalidAxis):
        ad.sum(Tensor(rnd(2, 3)), axis=2)
    with pytest.raises(InvalidAxis):
        ad.softmax(Tensor(rnd(2)), axis=1)
    with pytest.raises(IndexOutOfRange):
        ad.gather_rows(Tensor(rnd(3, 2)), [0, 3])
    with pytest.raises(IndexOutOfRange):
        ad.scatter_add_rows(Tensor(rnd(2, 2)), [0, -1], 3)
    with pytest.raises(ShapeMismatch):
        ad.concat([Tensor(rnd(2, 3)), Tensor(rnd(3, 2))], axis=0)


def test_tape_visits_each_record_once():
    x = Tensor(rnd(3), requires_grad=True)
    y = x * 2.0
    z = ad.sum(y * y + y)  # y used twice
    order = ad.tape(z)
    assert len(order) == len({id(t) for t in order})
    assert order[0] is x and order[-1] is z
    z.backward()
    np.testing.assert_allclose(x.grad, (8 * x.data + 2), rtol=1e-6)


def test_no_grad_records_nothing():
    x = Tensor(rnd(3), requires_grad=True)
    with ad.no_grad():
        y = x * 2.0
    assert y.record is None and not y.requires_grad


def test_max_ties_route_to_lowest_index():
    x = Tensor([[1.0, 5.0], [3.0, 5.0], [3.0, 2.0]], requires_grad=True)
    m, idx = ad.max_with_argmax(x, axis=0)
    assert idx.tolist() == [1, 0]
    ad.sum(m).backward()
    np.testing.assert_array_equal(x.grad, [[0, 1], [1, 0], [0, 0]])
    s, win = ad.segment_max(Tensor([[2.0], [2.0], [1.0]]), [0, 0, 1], 2)
    assert win[:, 0].tolist() == [0, 2]


def test_dropout_is_keyed_and_inactive_in_eval():
    x = Tensor(np.ones((50, 50)))
    a = ad.dropout(x, 0.5, True, ad.DropoutStream(3)).data
    b = ad.dropout(x, 0.5, True, ad.DropoutStream(3)).data
    assert np.array_equal(a, b)
    s = ad.DropoutStream(3)
    first, second = ad.dropout(x, 0.5, True, s).data, ad.dropout(x, 0.5, True, s).data
    assert not np.array_equal(first, second)
    assert set(np.unique(a)) == {0.0, 2.0}
    assert ad.dropout(x, 0.5, False, s) is x


def test_bit_determinism():
    rng = np.random.default_rng(0)
    lin = MLP([6, 16, 3], rng)
    x = Tensor(np.random.default_rng(1).standard_normal((10, 6)))

    def run():
        lin.zero_grad()
        loss = ad.sum(ad.softmax(lin(x), -1) ** 2)
        loss.backward()
        return loss.data.tobytes(), b"".join(p.grad.tobytes() for p in lin.parameters())

    assert run() == run()


# --- optimizer --------------------------------------------------------------

def test_adam_zero_grad_keeps_params():
    p = [np.array([1.0, -2.0])]
    adam_step(p, [np.zeros(2)], AdamState(), lr=0.1)
    np.testing.assert_array_equal(p[0], [1.0, -2.0])


def test_adam_first_step():
    p = [np.array([0.0])]
    adam_step(p, [np.array([1.0])], AdamState(), lr=0.1)
    assert p[0][0] == pytest.approx(-0.1, abs=1e-6)


def _scalar_adam(p, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, 1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1 ** t)) / ((v / (1 - b2 ** t)) ** 0.5 + eps)
        out.append(p)
    return out


def test_adam_matches_scalar_reference():
    p = [np.array([0.5, -0.3])]
    state = AdamState()
    trace = []
    for g in ([0.2, -1.0], [0.2, -1.0]):
        adam_step(p, [np.array(g)], state, lr=0.01)
        trace.append(p[0].copy())
    for k, (p0, gs) in enumerate(((0.5, [0.2, 0.2]), (-0.3, [-1.0, -1.0]))):
        ref = _scalar_adam(p0, gs, 0.01)
        assert [t[k] for t in trace] == pytest.approx(ref, abs=1e-12)


def test_adam_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adam_step([np.zeros(2)], [np.zeros(3)], AdamState(), 0.1)


def test_adam_optimizer_class_decreases_loss():
    lin = Linear(3, 1, np.random.default_rng(0))
    x = Tensor(np.random.default_rng(1).standard_normal((20, 3)))
    y = x.data @ np.array([[1.0], [-2.0], [0.5]])
    opt = Adam(lin.parameters(), lr=0.05)
    losses = []
    for _ in range(100):
        opt.zero_grad()
        loss = ad.mean(ad.square(lin(x) - y))
        loss.backward()
        opt.step()
        losses.append(loss.item())
    assert losses[-1] < 0.01 * losses[0]


def test_lr_schedule():
    assert lr_schedule(0, 1e-4) == pytest.approx(1e-4 / 30)
    assert lr_schedule(29, 1e-4) == pytest.approx(1e-4)
    assert lr_schedule(30, 1e-4) == pytest.approx(1e-4 * 0.99)
    assert lr_schedule(100000, 1e-4) == pytest.approx(1e-6)


# --- checkpoint --------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    params = {"a.weight": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.float32([1.5]), "s": np.float32(2.0)}
    p = tmp_path / "m.ck"
    checkpoint.save(p, {"hidden": 8}, params)
    raw = p.read_bytes()
    assert raw[:4] == b"SATA"
    cfg, back = checkpoint.load(p)
    assert cfg == {"hidden": 8}
    for k in params:
        np.testing.assert_array_equal(back[k], params[k])
    assert checkpoint.dumps(cfg, back) == raw


@pytest.mark.parametrize("mutate", [lambda b: b"XXXX" + b[4:], lambda b: b[:-3], lambda b: b + b"\0"])
def test_checkpoint_corruption(mutate):
    raw = checkpoint.dumps({}, {"w": np.ones((2, 2), np.float32)})
    with pytest.raises(CheckpointError):
        checkpoint.loads(mutate(raw))
