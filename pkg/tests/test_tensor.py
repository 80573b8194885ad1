import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chebyodo import tensor as T
from chebyodo.errors import ContractError, DomainError, ShapeError
from chebyodo.gradcheck import check_gradients, relative_error
from chebyodo.tensor import Tensor

from oracles import chebyshev_recurrence, conv1d_loop, matmul_loop


def leaf(data):
    return Tensor(data, requires_grad=True)


class TestElementwise:
    def test_tanh_zero(self):
        assert T.tanh(Tensor(0.0)).item() == 0.0

    def test_arccos_one(self):
        assert T.arccos(Tensor(1.0)).item() == 0.0

    def test_cos_double_angle_matches_recurrence(self):
        t = math.tanh(1.0)
        got = T.cos(T.scale(T.arccos(Tensor(t)), 2.0)).item()
        assert got == pytest.approx(chebyshev_recurrence(t, 2)[2], abs=1e-12)
        assert got == pytest.approx(0.16004, abs=1e-4)

    def test_arccos_domain(self):
        with pytest.raises(DomainError):
            T.arccos(Tensor([0.5, 1.5]))

    def test_div_by_zero(self):
        with pytest.raises(DomainError):
            T.div(Tensor([1.0]), Tensor([0.0]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))

    def test_scalar_broadcast(self):
        np.testing.assert_array_equal((Tensor([1.0, 2.0]) * 3.0).data, [3.0, 6.0])
        np.testing.assert_array_equal((2.0 - Tensor([1.0, 2.0])).data, [1.0, 0.0])

    def test_dispatch_by_name(self):
        x = Tensor([0.25, -0.5])
        np.testing.assert_array_equal(T.elementwise("square", x).data, [0.0625, 0.25])
        np.testing.assert_array_equal(T.elementwise("mul", x, 2.0).data, [0.5, -1.0])

    def test_relu(self):
        x = Tensor([-1.0, 0.0, 2.5], requires_grad=True)
        y = T.relu(x)
        np.testing.assert_array_equal(y.data, [0.0, 0.0, 2.5])
        T.reduce("sum", y).backward()
        np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])

    def test_relu_propagates_nan(self):
        assert np.isnan(T.relu(Tensor([np.nan, 1.0])).data[0])

    @given(st.floats(-1e6, 1e6, allow_nan=False))
    def test_clamped_arccos_never_nan(self, x):
        t = T.clamp(T.tanh(Tensor([x])), -1 + T.ARCCOS_EPS, 1 - T.ARCCOS_EPS)
        assert np.isfinite(T.arccos(t).data).all()


class TestCosMultiples:
    def test_matches_direct_cosines(self):
        theta = np.random.default_rng(0).uniform(0, math.pi, size=(3, 7))
        got = T.cos_multiples(Tensor(theta), 6).data
        for n in range(7):
            np.testing.assert_allclose(got[..., n, :], np.cos(n * theta), atol=1e-13)

    def test_degree_zero_is_ones(self):
        np.testing.assert_array_equal(T.cos_multiples(Tensor(np.zeros((2, 3))), 0).data, np.ones((2, 1, 3)))

    def test_gradient(self):
        x = leaf(np.random.default_rng(1).uniform(0.1, 3.0, size=(2, 5)))
        w = Tensor(np.random.default_rng(2).normal(size=(2, 5, 5)))
        res = check_gradients(lambda: T.reduce("sum", T.cos_multiples(x, 4) * w), [("x", x)])
        assert res[0].rel_error < 1e-8


class TestMatmul:
    def test_identity(self):
        m = np.arange(6.0).reshape(3, 2)
        np.testing.assert_array_equal(T.matmul(Tensor(np.eye(3)), Tensor(m)).data, m)

    def test_hand(self):
        assert T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]

    def test_triple_loop_oracle(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(4, 5)), rng.normal(size=(5, 6))
        np.testing.assert_allclose(T.matmul(Tensor(a), Tensor(b)).data, matmul_loop(a, b), atol=1e-12)

    def test_inner_mismatch(self):
        with pytest.raises(ShapeError):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_associativity(self):
        rng = np.random.default_rng(1)
        a, b, c = (Tensor(rng.normal(size=s)) for s in [(8, 6), (6, 7), (7, 5)])
        np.testing.assert_allclose(T.matmul(T.matmul(a, b), c).data, T.matmul(a, T.matmul(b, c)).data, atol=1e-10)

    def test_batched_gradient(self):
        rng = np.random.default_rng(2)
        a, b = leaf(rng.normal(size=(3, 2, 4))), leaf(rng.normal(size=(4, 5)))
        for r in check_gradients(lambda: T.reduce("sum", T.square(T.matmul(a, b))), [("a", a), ("b", b)]):
            assert r.passed(1e-6), r


class TestConv1d:
    def test_identity_kernel(self):
        x = np.random.default_rng(0).normal(size=(3, 10))
        w = np.eye(3)[:, :, None]
        np.testing.assert_array_equal(T.conv1d(Tensor(x), Tensor(w)).data, x)

    def test_hand(self):
        y = T.conv1d(Tensor([[1.0, 2.0, 3.0, 4.0]]), Tensor([[[1.0, 1.0]]]))
        np.testing.assert_array_equal(y.data, [[3.0, 5.0, 7.0]])

    @pytest.mark.parametrize("stride,padding,groups", [(1, 0, 1), (2, 1, 2), (3, 2, 4), (1, 1, 4)])
    def test_loop_oracle(self, stride, padding, groups):
        rng = np.random.default_rng(stride + padding + groups)
        x = rng.normal(size=(4, 13))
        w = rng.normal(size=(8, 4 // groups, 3))
        got = T.conv1d(Tensor(x), Tensor(w), stride=stride, padding=padding, groups=groups).data
        np.testing.assert_allclose(got, conv1d_loop(x, w, stride, padding, groups), atol=1e-12)

    def test_batched_equals_per_sample(self):
        rng = np.random.default_rng(3)
        x, w = rng.normal(size=(3, 4, 11)), rng.normal(size=(6, 2, 3))
        y = T.conv1d(Tensor(x), Tensor(w), stride=2, padding=1, groups=2).data
        for b in range(3):
            np.testing.assert_allclose(y[b], conv1d_loop(x[b], w, 2, 1, 2), atol=1e-12)

    def test_depthwise_equals_grouped(self):
        rng = np.random.default_rng(4)
        x, w = rng.normal(size=(2, 5, 9)), rng.normal(size=(5, 1, 3))
        a = T.conv1d(Tensor(x), Tensor(w), padding=1, depthwise=True).data
        b = T.conv1d(Tensor(x), Tensor(w), padding=1, groups=5).data
        np.testing.assert_allclose(a, b, atol=1e-13)

    def test_bad_groups(self):
        with pytest.raises(ShapeError):
            T.conv1d(Tensor(np.ones((3, 8))), Tensor(np.ones((4, 1, 3))), groups=2)

    def test_depthwise_requires_square(self):
        with pytest.raises(ShapeError):
            T.conv1d(Tensor(np.ones((3, 8))), Tensor(np.ones((6, 1, 3))), depthwise=True)

    def test_too_short(self):
        with pytest.raises(ShapeError):
            T.conv1d(Tensor(np.ones((1, 2))), Tensor(np.ones((1, 1, 5))))

    def test_gradient(self):
        rng = np.random.default_rng(5)
        x, w = leaf(rng.normal(size=(2, 4, 10))), leaf(rng.normal(size=(6, 2, 3)))
        fn = lambda: T.reduce("sum", T.square(T.conv1d(x, w, stride=2, padding=1, groups=2)))
        for r in check_gradients(fn, [("x", x), ("w", w)]):
            assert r.passed(1e-6), r


class TestReduce:
    def test_mean(self):
        assert T.reduce("mean", Tensor([1.0, 2.0, 3.0])).item() == 2.0

    def test_l2norm(self):
        assert T.reduce("l2norm", Tensor([3.0, 4.0])).item() == 5.0

    def test_keeps_axis(self):
        assert T.reduce("sum", Tensor(np.ones((2, 3, 4))), 1).shape == (2, 1, 4)

    def test_bad_axis(self):
        with pytest.raises(ShapeError):
            T.reduce("sum", Tensor(np.ones((2, 3))), 2)

    def test_sum_backward_is_ones(self):
        x = leaf(np.random.default_rng(0).normal(size=(3, 4)))
        T.reduce("sum", x).backward()
        np.testing.assert_array_equal(x.grad, np.ones((3, 4)))

    @pytest.mark.parametrize("op", ["sum", "mean", "l2norm"])
    def test_finite_differences(self, op):
        x = leaf(np.random.default_rng(1).normal(size=(3, 4)))
        w = Tensor(np.random.default_rng(2).normal(size=(3, 1)))
        res = check_gradients(lambda: T.reduce("sum", T.reduce(op, x, -1) * w), [("x", x)])
        assert res[0].rel_error < 1e-6


class TestBackward:
    def test_square(self):
        x = leaf(3.0)
        T.square(x).backward()
        assert x.grad == 6.0

    def test_tanh_rule(self):
        xs = np.random.default_rng(0).normal(size=10)
        x = leaf(xs)
        T.reduce("sum", T.tanh(x)).backward()
        np.testing.assert_allclose(x.grad, 1 - np.tanh(xs) ** 2, rtol=1e-12)
        res = check_gradients(lambda: T.reduce("sum", T.tanh(x)), [("x", x)])
        assert res[0].rel_error < 1e-6

    def test_accumulates(self):
        x = leaf([1.0, 2.0])
        T.reduce("sum", T.square(x)).backward()
        T.reduce("sum", T.square(x)).backward()
        np.testing.assert_array_equal(x.grad, [4.0, 8.0])
        x.zero_grad()
        assert x.grad is None

    def test_shared_subexpression(self):
        x = leaf(2.0)
        y = T.square(x)
        (y * y).backward()  # d(x^4)/dx = 32
        assert x.grad == 32.0

    def test_non_scalar_loss(self):
        with pytest.raises(ContractError):
            T.square(leaf([1.0, 2.0])).backward()

    def test_loss_not_on_tape(self):
        with pytest.raises(ContractError):
            T.square(Tensor(2.0)).backward()

    def test_no_grad_records_nothing(self):
        x = leaf(1.0)
        with T.no_grad():
            y = T.square(x)
        assert y.op is None and not y.requires_grad

    def test_topological_order(self):
        x = leaf(np.ones(3))
        a = T.tanh(x)
        b = a * a
        loss = T.reduce("sum", b + a)
        order = T.topological_order(loss)
        pos = {id(t): i for i, t in enumerate(order)}
        for node in order:
            for p in node.parents:
                assert pos[id(p)] < pos[id(node)]


class TestShapeOps:
    def test_softmax_rows(self):
        s = T.softmax(Tensor(np.random.default_rng(0).normal(size=(4, 6))), -1).data
        np.testing.assert_allclose(s.sum(axis=-1), 1.0, rtol=1e-14)

    def test_getitem_repeated_index_gradient(self):
        x = leaf(np.arange(4.0))
        T.reduce("sum", T.getitem(x, [0, 0, 3])).backward()
        np.testing.assert_array_equal(x.grad, [2.0, 0.0, 0.0, 1.0])

    def test_expand_only_size_one(self):
        with pytest.raises(ShapeError):
            T.expand(Tensor(np.ones((2, 3))), (4, 3))

    def test_stack_concat(self):
        a, b = Tensor(np.ones((2, 3))), Tensor(np.zeros((2, 3)))
        assert T.stack([a, b], axis=1).shape == (2, 2, 3)
        assert T.concat([a, b], axis=0).shape == (4, 3)


def test_relative_error_definition():
    assert relative_error(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 0.0
    assert relative_error(np.array([3.0, 4.0]), np.array([0.0, 0.0])) == 1.0
    assert relative_error(np.zeros(2), np.zeros(2)) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2), st.integers(5, 12))
def test_conv_oracle_property(groups, stride, padding, length):
    rng = np.random.default_rng(groups * 100 + stride * 10 + padding)
    x = rng.normal(size=(groups * 2, length))
    w = rng.normal(size=(groups * 3, 2, 3))
    got = T.conv1d(Tensor(x), Tensor(w), stride=stride, padding=padding, groups=groups).data
    np.testing.assert_allclose(got, conv1d_loop(x, w, stride, padding, groups), atol=1e-12)
