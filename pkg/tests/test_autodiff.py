import warnings

import numpy as np
import pytest

from retrograph import autodiff as ad
from retrograph.autodiff import (AdamState, DisconnectedParameter, NonFinite, ParamStore, PlateauDecay,
                                 ShapeMismatch, Tensor, adam_step, backward)

from gradcheck import max_rel_error


def P(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def test_relu_values():
    assert ad.relu(Tensor(np.array([[-1.0, 0.0, 2.0]]))).data.tolist() == [[0.0, 0.0, 2.0]]


def test_softmax_uniform():
    out = ad.softmax(Tensor(np.zeros((1, 3))))
    assert np.allclose(out.data, 1 / 3)


def test_masked_softmax():
    out = ad.softmax(Tensor(np.zeros((1, 3))), np.array([[True, False, True]]))
    assert out.data.tolist() == [[0.5, 0.0, 0.5]]
    out = ad.softmax(Tensor(np.ones((1, 3))), np.array([[False, True, False]]))
    assert out.data.tolist() == [[0.0, 1.0, 0.0]]


def test_softmax_rows_sum_to_one(rng):
    x = Tensor(rng.normal(size=(20, 7)) * 30)
    assert np.abs(ad.softmax(x).data.sum(1) - 1).max() < 1e-9


def test_segment_log_softmax_normalizes(rng):
    x = Tensor(rng.normal(size=(10, 1)))
    seg = np.array([0, 0, 1, 1, 1, 2, 2, 2, 2, 0])
    lp = ad.segment_log_softmax(x, seg, 3).data[:, 0]
    for s in range(3):
        assert abs(np.exp(lp[seg == s]).sum() - 1) < 1e-12


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_non_finite_aborts():
    with pytest.raises(NonFinite):
        ad.scale(Tensor(np.array([[1e308]])), 1e10)


def test_sum_relu_grad(rng):
    W, x = P(rng, 4, 3), Tensor(rng.normal(size=(5, 4)))
    assert max_rel_error(lambda: ad.total(ad.relu(x @ W)), [W]) < 1e-6


def test_loss_sum_p_grad_ones(rng):
    p = P(rng, 3, 2)
    backward(ad.total(p))
    assert (p.grad == 1).all()


def test_disconnected_param_warns():
    store = ParamStore(seed=0)
    a = store.add("a", (2, 2))
    store.add("b", (2, 2))
    with pytest.warns(DisconnectedParameter):
        backward(ad.total(a), store)
    assert (store["b"].grad == 0).all()


def test_three_layer_composite(rng):
    W1, W2, W3 = P(rng, 6, 5), P(rng, 5, 4), P(rng, 4, 3)
    x = Tensor(rng.normal(size=(7, 6)))
    labels = rng.integers(0, 3, 7)

    def loss():
        h = ad.relu(x @ W1)
        h = ad.sigmoid(h @ W2)
        return ad.cross_entropy(h @ W3, labels)

    assert max_rel_error(loss, [W1, W2, W3]) < 1e-5


@pytest.mark.parametrize("op", ["concat", "gather", "scatter", "abs_diff", "log_softmax", "segment", "bce",
                                "masked_ce", "take", "reshape", "transpose", "sum_rows", "mul", "sub", "log_sigmoid",
                                "add_bias"])
def test_op_gradients(op, rng):
    a, b = P(rng, 5, 4), P(rng, 5, 4)
    seg = np.array([0, 1, 1, 2, 2])
    mask = rng.random((5, 4)) > 0.3
    mask[:, 0] = True
    f = {
        "concat": lambda: ad.total(ad.relu(ad.concat([a, b], axis=1)) @ Tensor(np.arange(8.0).reshape(8, 1))),
        "gather": lambda: ad.total(ad.mul(ad.gather_rows(a, [0, 0, 3, 4]), ad.gather_rows(b, [1, 2, 2, 0]))),
        "scatter": lambda: ad.total(ad.mul(ad.scatter_add_rows(a, seg, 3), ad.scatter_add_rows(b, seg, 3))),
        "abs_diff": lambda: ad.total(ad.mul(ad.abs_diff(a, b), a)),
        "log_softmax": lambda: ad.total(ad.mul(ad.log_softmax(a), b)),
        "segment": lambda: ad.total(ad.mul(ad.segment_log_softmax(ad.reshape(a, (-1, 1)), np.repeat(np.arange(5), 4), 5),
                                           ad.reshape(b, (-1, 1)))),
        "bce": lambda: ad.binary_cross_entropy(ad.mul(a, b), (rng_fixed.random((5, 4)) > 0.5)),
        "masked_ce": lambda: ad.cross_entropy(ad.mul(a, b), [0, 0, 0, 0, 0], mask),
        "take": lambda: ad.total(ad.mul(ad.take(a, [0, 1, 4], [3, 2, 0]), ad.take(b, [1, 1, 1], [0, 1, 2]))),
        "reshape": lambda: ad.total(ad.mul(ad.reshape(a, (2, 10)), ad.reshape(b, (2, 10)))),
        "transpose": lambda: ad.total(ad.transpose(a) @ b),
        "sum_rows": lambda: ad.total(ad.mul(ad.sum_rows(a), ad.sum_rows(b))),
        "mul": lambda: ad.total(ad.mul(ad.mul(a, b), a)),
        "sub": lambda: ad.total(ad.mul(ad.sub(a, b), ad.sub(a, b))),
        "log_sigmoid": lambda: ad.total(ad.mul(ad.log_sigmoid(a), b)),
        "add_bias": lambda: ad.total(ad.mul(ad.add(a, ad.sum_rows(b)), a)),
    }[op]
    rng_fixed = np.random.default_rng(5)
    if op == "bce":
        targets = rng_fixed.random((5, 4)) > 0.5
        f = lambda: ad.binary_cross_entropy(ad.mul(a, b), targets)  # noqa: E731
    assert max_rel_error(f, [a, b]) < 1e-6


# optimiser -------------------------------------------------------------------

def _store_with(value):
    s = ParamStore(seed=0)
    p = s.add("p", (1, 1), init="zeros")
    p.data[...] = value
    return s, p


def test_adam_zero_grad_unchanged():
    s, p = _store_with(1.5)
    p.grad = np.zeros((1, 1))
    adam_step(s, AdamState(lr=0.1))
    assert p.data[0, 0] == 1.5


def test_adam_first_step():
    s, p = _store_with(0.0)
    p.grad = np.ones((1, 1))
    adam_step(s, AdamState(lr=0.1))
    assert abs(p.data[0, 0] + 0.1) < 1e-6


def test_adam_converges_on_quadratic():
    s, p = _store_with(0.0)
    st = AdamState(lr=0.01)
    for _ in range(2000):
        p.grad = 2 * (p.data - 3.0)
        adam_step(s, st)
    assert abs(p.data[0, 0] - 3.0) < 1e-3


def test_plateau_decay():
    st = AdamState(lr=1.0, decay=0.9)
    sched = PlateauDecay(st, patience=2, min_delta=0.01)
    assert not sched.update(0.5)
    assert not sched.update(0.505)
    assert sched.update(0.505)
    assert st.lr == pytest.approx(0.9)
    assert not sched.update(0.6)


# checkpoints -------------------------------------------------------------------

@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_checkpoint_round_trip(tmp_path, dtype):
    s = ParamStore(seed=3, dtype=dtype, meta={"hidden_dim": 4})
    s.add("center/W", (4, 3))
    s.add("synthon/V", (3, 1))
    s.save(tmp_path / "ck")
    back = ParamStore.load(tmp_path / "ck")
    assert back.names() == s.names() and back.dtype == np.dtype(dtype)
    for k, v in s.items():
        assert np.array_equal(back[k].data, v.data)
    assert back.meta == {"hidden_dim": 4}


def test_same_seed_same_init():
    a, b = ParamStore(seed=9), ParamStore(seed=9)
    for s in (a, b):
        s.add("x", (5, 5))
        s.add("y", (5, 2))
    assert all(np.array_equal(a[k].data, b[k].data) for k in a.names())


def test_no_warning_when_all_reached():
    s = ParamStore(seed=0)
    a = s.add("a", (2, 2))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        backward(ad.total(a), s)
