import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deepyc.autodiff import (
    AdamState,
    ParamStore,
    Tape,
    Tensor,
    adam_step,
    apply_op,
    attention,
    backward,
    central_loss,
    dense,
    dropout,
    embed,
    gaussian_nll,
    grad_check,
    linear,
    mul,
    pinball_loss,
    softmax_np,
    softplus_np,
    sum_all,
)
from deepyc.autodiff.ops import attention_weights
from deepyc.errors import NumericalError


def _grad(f, *arrays):
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = f(*leaves)
    backward(out, tape)
    return out, [t.grad for t in leaves]


def _store(**arrays):
    s = ParamStore()
    for k, v in arrays.items():
        s.add(k, v)
    return s


# ------------------------------------------------------------------ tensor/tape


def test_quadratic_gradient():
    w = np.array([1.0, -2.0, 3.0])
    out, (g,) = _grad(lambda t: sum_all(mul(t, t)), w)
    assert out.item() == 14.0
    np.testing.assert_array_equal(g, 2 * w)


def test_non_finite_trips_error():
    with pytest.raises(NumericalError):
        apply_op("bad", np.array([np.nan]), (), lambda g: ())


def test_backward_requires_scalar_and_tape():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = mul(x, x)
    with pytest.raises(ValueError, match="scalar"):
        backward(y, tape)
    with Tape():
        z = sum_all(mul(x, x))
    with pytest.raises(ValueError, match="tape"):
        backward(z, Tape())


def test_no_recording_without_grad():
    with Tape() as tape:
        sum_all(mul(Tensor(np.ones(2)), Tensor(np.ones(2))))
    assert len(tape) == 0


# ------------------------------------------------------------------ dense


def test_dense_identity_and_softplus_example():
    x = Tensor(np.array([0.3, -0.7]))
    out = dense(x, Tensor(np.eye(2)), Tensor(np.zeros(2)), "linear")
    np.testing.assert_array_equal(out.data, x.data)
    sp = dense(Tensor(np.array([1.0, -1.0])), Tensor(np.array([[1.0, 1.0]])), Tensor(np.array([0.5])), "softplus")
    assert sp.data[0] == pytest.approx(math.log1p(math.exp(0.5)), abs=1e-15)
    assert sp.data[0] == pytest.approx(0.974077, abs=1e-6)


def test_dense_shape_errors():
    with pytest.raises(ValueError):
        dense(Tensor(np.ones(3)), Tensor(np.ones((2, 2))), Tensor(np.zeros(2)))
    with pytest.raises(ValueError):
        dense(Tensor(np.ones(2)), Tensor(np.ones((2, 2))), Tensor(np.zeros(3)))
    with pytest.raises(ValueError):
        dense(Tensor(np.ones(2)), Tensor(np.ones((2, 2))), Tensor(np.zeros(2)), "swish")


def test_time_distributed_rows_independent():
    rng = np.random.default_rng(0)
    H = rng.standard_normal((10, 6))
    W, b = Tensor(rng.standard_normal((8, 6))), Tensor(rng.standard_normal(8))
    base = dense(Tensor(H), W, b, "tanh").data
    assert base.shape == (10, 8)
    H2 = H.copy()
    H2[4] += 1.0
    diff = np.abs(dense(Tensor(H2), W, b, "tanh").data - base).max(axis=1)
    assert diff[4] > 0 and np.all(np.delete(diff, 4) == 0)


def test_softplus_stable_branches():
    x = np.array([-800.0, -31.0, -30.0, 0.0, 30.0, 31.0, 800.0])
    ref = np.array([float(np.logaddexp(0.0, v)) for v in x])
    np.testing.assert_allclose(softplus_np(x), ref, rtol=1e-12)
    assert np.all(softplus_np(np.array([-700.0])) > 0)


# ------------------------------------------------------------------ embedding


def test_embed_lookup_and_gradient():
    table = np.array([[0.0, 0.0], [0.1, 0.2], [0.3, 0.4]])
    out = embed(1, Tensor(table))
    np.testing.assert_array_equal(out.data, [0.1, 0.2])
    g = np.array([2.0, -1.0])
    _, (gt,) = _grad(lambda t: sum_all(mul(embed(1, t), Tensor(g))), table)
    np.testing.assert_array_equal(gt, [[0, 0], g, [0, 0]])
    _, (gt2,) = _grad(lambda t: sum_all(mul(embed([1, 1], t), Tensor(np.stack([g, g])))), table)
    np.testing.assert_array_equal(gt2[1], 2 * g)
    with pytest.raises(IndexError):
        embed(3, Tensor(table))


# ------------------------------------------------------------------ attention


def test_attention_uniform_and_single_row():
    V = np.array([[1.0, 2.0], [3.0, 5.0], [8.0, -1.0]])
    out = attention(Tensor(np.zeros((3, 2))), Tensor(np.ones((3, 2))), Tensor(V))
    np.testing.assert_array_equal(out.data, np.tile(V.mean(axis=0), (3, 1)))
    one = attention(Tensor([[0.3, 0.1]]), Tensor([[1.0, 2.0]]), Tensor([[4.0, 5.0]]))
    np.testing.assert_array_equal(one.data, [[4.0, 5.0]])


def test_attention_hand_example():
    out = attention(Tensor([[1.0], [0.0]]), Tensor([[1.0], [0.0]]), Tensor([[2.0], [4.0]]))
    e = math.e
    assert out.data[0, 0] == pytest.approx((2 * e + 4) / (e + 1), abs=1e-12)
    assert out.data[0, 0] == pytest.approx(2.537883, abs=1e-6)
    assert out.data[1, 0] == pytest.approx(3.0, abs=1e-12)


@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 10_000), st.floats(0.1, 20.0))
def test_softmax_rows(q, d, seed, scale):
    rng = np.random.default_rng(seed)
    S = attention_weights(rng.standard_normal((q, d)) * scale, rng.standard_normal((q, d)))
    np.testing.assert_allclose(S.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(S >= 0) and np.all(S <= 1)


def test_softmax_interior_for_moderate_logits():
    S = softmax_np(np.array([[1.0, 2.0, -3.0]]))
    assert np.all((S > 0) & (S < 1))


def test_attention_gradient_finite_differences():
    rng = np.random.default_rng(2)
    w = rng.standard_normal((4, 3))
    params = _store(Q=rng.standard_normal((4, 3)), K=rng.standard_normal((4, 3)), V=rng.standard_normal((4, 3)))
    rep = grad_check(lambda lv: sum_all(mul(attention(lv["Q"], lv["K"], lv["V"]), Tensor(w))), params, tol=1e-7)
    assert rep.passed, rep.summary()


def test_attention_shape_errors():
    with pytest.raises(ValueError):
        attention(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3))))


# ------------------------------------------------------------------ dropout


def test_dropout_modes():
    x = Tensor(np.arange(1.0, 7.0))
    rng = np.random.default_rng(0)
    assert dropout(x, 1.0, "train", rng) is x and dropout(x, 1.0, "eval") is x
    assert not dropout(x, 0.0, "train", rng).data.any()
    np.testing.assert_array_equal(dropout(x, 0.5, "eval").data, 0.5 * x.data)
    with pytest.raises(ValueError):
        dropout(x, 1.5, "train", rng)
    with pytest.raises(ValueError):
        dropout(x, 0.5, "train")


def test_dropout_keep_fraction_and_reproducible():
    x = Tensor(np.ones(100_000))
    a = dropout(x, 0.5, "train", np.random.default_rng(5)).data
    b = dropout(x, 0.5, "train", np.random.default_rng(5)).data
    assert abs(a.mean() - 0.5) <= 0.01
    assert a.tobytes() == b.tobytes()


def test_dropout_gradient_uses_mask():
    x = np.arange(1.0, 11.0)
    rng = np.random.default_rng(1)
    mask_out = dropout(Tensor(x), 0.5, "train", np.random.default_rng(1)).data
    _, (g,) = _grad(lambda t: sum_all(dropout(t, 0.5, "train", rng)), x)
    np.testing.assert_array_equal(g, (mask_out != 0).astype(float))


# ------------------------------------------------------------------ losses


def test_pinball_examples():
    assert pinball_loss(Tensor([-1.0]), 0.025).item() == pytest.approx(0.975)
    assert pinball_loss(Tensor([2.0]), 0.025).item() == pytest.approx(0.05)
    assert pinball_loss(Tensor([3.0, -3.0]), 0.5).item() == pytest.approx(1.5)
    with pytest.raises(ValueError):
        pinball_loss(Tensor([1.0]), 1.0)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30))
def test_pinball_half_is_half_mae(u):
    u = np.array(u)
    assert pinball_loss(Tensor(u), 0.5).item() == pytest.approx(0.5 * np.abs(u).mean(), rel=1e-12, abs=1e-12)


def test_pinball_subgradient_zero_at_kink():
    _, (g,) = _grad(lambda t: pinball_loss(t, 0.3, "sum"), np.array([0.0, 1.0, -1.0]))
    np.testing.assert_allclose(g, [0.0, 0.3, -0.7])


def test_central_loss_examples():
    assert central_loss(Tensor([1.0, -1.0]), 2).item() == 1.0
    assert central_loss(Tensor([1.0, -1.0]), 1).item() == 1.0
    assert central_loss(Tensor([2.0]), 2).item() == 4.0
    assert central_loss(Tensor([2.0]), 1).item() == 2.0
    with pytest.raises(ValueError):
        central_loss(Tensor([1.0]), 3)


def test_gaussian_nll_examples():
    z = Tensor([0.0])
    assert gaussian_nll(Tensor([0.3]), Tensor([0.3]), z).item() == 0.0
    assert gaussian_nll(Tensor([1.0]), Tensor([0.0]), z).item() == 1.0
    at_e = gaussian_nll(Tensor([1.0]), Tensor([0.0]), Tensor([1.0])).item()
    assert at_e == pytest.approx(math.exp(-1) + 0.5, abs=1e-12)
    assert at_e < 1.0
    with pytest.raises(ValueError):
        gaussian_nll(Tensor([1.0, 2.0]), Tensor([0.0]), z)


def test_loss_gradients_finite_differences():
    rng = np.random.default_rng(4)
    y = rng.standard_normal(6)
    params = _store(mu=rng.standard_normal(6), s=rng.standard_normal(6))
    rep = grad_check(lambda lv: gaussian_nll(Tensor(y), lv["mu"], lv["s"]), params, tol=1e-7)
    assert rep.passed, rep.summary()
    rep = grad_check(
        lambda lv: pinball_loss(Tensor(y) - lv["mu"], 0.025, "sum"),
        params,
        kinks=lambda lv: y - lv["mu"].data,
    )
    assert rep.passed, rep.summary()


# ------------------------------------------------------------------ params / adam


def test_param_store_roundtrip_exact():
    rng = np.random.default_rng(0)
    s = _store(W=rng.standard_normal((3, 4)), b=np.array([1e-300, -0.1, np.pi]))
    s.freeze(["b"])
    t = ParamStore.loads(s.dumps())
    assert t.names() == s.names() and t.trainable("b") is False
    for n in s.names():
        assert t[n].tobytes() == s[n].tobytes()
    assert t.fingerprint() == s.fingerprint()
    with pytest.raises(KeyError):
        s.add("W", np.ones(1))
    with pytest.raises(ValueError):
        ParamStore.from_dict({"format": "other"})


def test_leaves_respect_freeze():
    s = _store(a=np.ones(2), b=np.ones(2))
    s.freeze(["a"])
    lv = s.leaves()
    with Tape() as tape:
        out = sum_all(mul(lv["a"], lv["b"]))
    backward(out, tape)
    assert lv["a"].grad is None and lv["b"].grad is not None


def test_adam_examples():
    s = _store(x=np.array([0.0]))
    st_ = AdamState()
    adam_step(s, {"x": np.array([1.0])}, st_, lr=0.1)
    assert s["x"][0] == pytest.approx(-0.1, abs=1e-6)
    s2 = _store(a=np.array([1.0, 2.0]), b=np.array([3.0]))
    s2.freeze(["b"])
    adam_step(s2, {"a": np.zeros(2), "b": np.array([5.0])}, AdamState())
    np.testing.assert_array_equal(s2["a"], [1.0, 2.0])
    np.testing.assert_array_equal(s2["b"], [3.0])
    with pytest.raises(ValueError):
        adam_step(s2, {"a": np.zeros(3)}, AdamState())


def test_adam_matches_reference_sequence():
    # hand-rolled reference over several steps
    s = _store(x=np.array([0.5, -1.0]))
    st_ = AdamState()
    x = np.array([0.5, -1.0])
    m = v = np.zeros(2)
    for t in range(1, 6):
        g = 2 * x
        adam_step(s, {"x": 2 * s["x"]}, st_, lr=0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x = x - 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(s["x"], x, rtol=1e-14)


# ------------------------------------------------------------------ grad check


def test_grad_check_quadratic_and_sabotage():
    rng = np.random.default_rng(0)
    params = _store(w=rng.standard_normal(5))
    rep = grad_check(lambda lv: sum_all(mul(lv["w"], lv["w"])), params)
    assert rep.passed and rep.max_rel_error <= 1e-8

    def broken(lv):
        w = lv["w"]
        return apply_op("bad_square", (w.data**2).sum(), (w,), lambda g: (g * 3.0 * w.data,))

    bad = grad_check(broken, params)
    assert not bad.passed
    assert {e.name for e in bad.failures} == {"w"}
    assert "w[" in bad.summary()


def test_grad_check_excludes_kinks():
    y = np.array([0.0, 1.0])
    params = _store(mu=np.array([1e-6, 0.0]))
    rep = grad_check(lambda lv: pinball_loss(Tensor(y) - lv["mu"], 0.3, "sum"), params, kinks=lambda lv: y - lv["mu"].data)
    assert [e.excluded for e in rep.entries] == [True, False]


def test_linear_batched_gradient():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((2, 3, 4))
    w = rng.standard_normal((2, 3, 5))
    params = _store(W=rng.standard_normal((5, 4)), b=rng.standard_normal(5))
    rep = grad_check(lambda lv: sum_all(mul(linear(Tensor(x), lv["W"], lv["b"]), Tensor(w))), params, tol=1e-8)
    assert rep.passed, rep.summary()
