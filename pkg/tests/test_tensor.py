import numpy as np
import pytest

from bnadapt import tensor as T
from bnadapt.exceptions import (
    EmptyBatchError,
    NonScalarLossError,
    NumericError,
    ShapeError,
)


def triple_loop_matmul(a, b):
    """Independent oracle: textbook three-loop matrix product."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for l in range(k):
                out[i, j] += a[i, l] * b[l, j]
    return out


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = T.matmul(np.eye(2), a)
        np.testing.assert_array_equal(out.data, a)

    def test_zero(self):
        out = T.matmul([[1.0, 2.0], [3.0, 4.0]], [[0.0], [0.0]])
        np.testing.assert_array_equal(out.data, [[0.0], [0.0]])

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        np.testing.assert_allclose(T.matmul(a, b).data, triple_loop_matmul(a, b),
                                   atol=1e-12, rtol=0)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            T.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_non_2d(self):
        with pytest.raises(ShapeError):
            T.matmul(np.ones(3), np.ones((3, 2)))


class TestBatchStats:
    def test_hand_evaluated_population_variance(self):
        mean, var = T.batch_stats([[1.0], [2.0], [3.0]])
        assert mean.data[0] == 2.0
        assert var.data[0] == 2.0 / 3.0

    def test_constant_column(self):
        mean, var = T.batch_stats([[5.0], [5.0], [5.0]])
        assert mean.data[0] == 5.0
        assert var.data[0] == 0.0

    def test_single_row_zero_variance(self):
        row = np.array([[1.5, -2.0, 7.0]])
        mean, var = T.batch_stats(row)
        np.testing.assert_array_equal(mean.data, row[0])
        np.testing.assert_array_equal(var.data, np.zeros(3))

    def test_empty_batch(self):
        with pytest.raises(EmptyBatchError):
            T.batch_stats(np.empty((0, 3)))

    def test_variance_nonnegative(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            x = rng.normal(scale=rng.uniform(0.01, 100), size=(rng.integers(1, 9), 4))
            _, var = T.batch_stats(x)
            assert np.all(var.data >= 0)


class TestSoftmax:
    def test_symmetry(self):
        out = T.softmax([[0.0, 0.0, 0.0]])
        np.testing.assert_allclose(out.data, [[1 / 3] * 3], atol=1e-15)

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(4, 6))
        np.testing.assert_allclose(T.softmax(x).data, T.softmax(x + 17.25).data,
                                   atol=1e-12, rtol=0)

    def test_direct_evaluation(self):
        out = T.softmax([[np.log(2.0), 0.0, 0.0]])
        np.testing.assert_allclose(out.data, [[0.5, 0.25, 0.25]], atol=1e-15)

    def test_rows_sum_to_one_entries_in_open_interval(self):
        rng = np.random.default_rng(6)
        x = rng.normal(scale=5, size=(20, 7))
        s = T.softmax(x).data
        np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12, rtol=0)
        assert np.all(s > 0) and np.all(s < 1)

    def test_nonfinite_input(self):
        with pytest.raises(NumericError):
            T.softmax([[np.nan, 0.0]])


class TestBackward:
    def test_identity_loss(self):
        tape = T.DiffTape()
        x = tape.leaf(2.5)
        grads = T.backward(tape, x)
        assert grads[x.node].data == 1.0

    def test_untouched_leaf_gets_zero(self):
        tape = T.DiffTape()
        x = tape.leaf(2.5)
        y = tape.leaf(np.array([1.0, 2.0]))
        grads = T.backward(tape, x * x)
        assert grads[x.node].data == 5.0
        np.testing.assert_array_equal(grads[y.node].data, [0.0, 0.0])

    def test_non_scalar_loss_rejected(self):
        tape = T.DiffTape()
        x = tape.leaf(np.array([1.0, 2.0]))
        with pytest.raises(NonScalarLossError):
            T.backward(tape, x * 2.0)

    def test_repeated_backward_bit_identical(self):
        tape = T.DiffTape()
        rng = np.random.default_rng(7)
        w = tape.leaf(rng.normal(size=(3, 3)))
        x = T.Tensor(rng.normal(size=(2, 3)))
        loss = T.sum_all(T.softmax(T.matmul(x, w)))
        g1 = T.backward(tape, loss)[w.node].data
        g2 = T.backward(tape, loss)[w.node].data
        assert g1.tobytes() == g2.tobytes()


class TestFiniteDiff:
    def test_known_derivative(self):
        fd = T.finite_diff(lambda v: float(v ** 2), 3.0, h=1e-6)
        assert abs(float(fd) - 6.0) < 1e-6

    def test_constant_function(self):
        fd = T.finite_diff(lambda v: 4.2, np.array([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(fd, np.zeros(3))

    def test_positive_step_required(self):
        with pytest.raises(ValueError):
            T.finite_diff(lambda v: 0.0, 1.0, h=0.0)


def _fd_check(op, shapes, seed, transform=None, atol=1e-7):
    """Every differentiable primitive agrees with central differences."""
    rng = np.random.default_rng(seed)
    raws = [rng.normal(size=s) for s in shapes]
    if transform:
        raws = [t(r) for t, r in zip(transform, raws)]

    for i in range(len(raws)):
        tape = T.DiffTape()
        args = []
        leaf = None
        for j, r in enumerate(raws):
            if j == i:
                leaf = tape.leaf(r)
                args.append(leaf)
            else:
                args.append(T.Tensor(r))
        loss = T.sum_all(op(*args))
        got = T.backward(tape, loss)[leaf.node].data

        def loss_at(v, i=i):
            vals = [v if j == i else raws[j] for j in range(len(raws))]
            return T.sum_all(op(*[T.Tensor(x) for x in vals])).item()

        want = T.finite_diff(loss_at, raws[i], h=1e-6)
        denom = np.maximum(np.abs(want), 1e-4)
        assert np.max(np.abs(got - want) / denom) < 1e-5


@pytest.mark.parametrize("op,shapes,transform", [
    (T.add, [(3, 4), (3, 4)], None),
    (T.add, [(3, 4), (4,)], None),
    (T.sub, [(3, 4), (4,)], None),
    (T.mul, [(3, 4), (3, 4)], None),
    (T.mul, [(), (3, 4)], None),
    (T.div, [(3, 4), (4,)], [None, lambda r: np.abs(r) + 1.0]),
    (T.matmul, [(3, 4), (4, 2)], None),
    (T.relu, [(5, 5)], None),
    (lambda a: T.leaky_relu(a, -0.001), [(5, 5)], None),
    (T.log, [(3, 3)], [lambda r: np.abs(r) + 0.5]),
    (T.sqrt, [(3, 3)], [lambda r: np.abs(r) + 0.5]),
    (lambda a: T.clamp_min(a, 0.1), [(4, 4)], [lambda r: np.abs(r)]),
    (T.sum_rows, [(4, 3)], None),
    (T.softmax, [(4, 5)], None),
    (T.row_max, [(4, 5)], None),
    (T.row_min, [(4, 5)], None),
    (lambda a: T.batch_stats(a)[0], [(4, 3)], None),
    (lambda a: T.batch_stats(a)[1], [(4, 3)], None),
    (lambda a, b: T.vstack([a, b]), [(2, 3), (4, 3)], None),
])
def test_primitive_gradients_match_finite_diff(op, shapes, transform):
    if transform is not None:
        transform = [t if t is not None else (lambda r: r) for t in transform]
    _fd_check(op, shapes, seed=23, transform=transform)


def test_row_max_tie_routes_to_first_index():
    tape = T.DiffTape()
    x = tape.leaf(np.array([[1.0, 1.0, 0.0]]))
    grads = T.backward(tape, T.sum_all(T.row_max(x)))
    np.testing.assert_array_equal(grads[x.node].data, [[1.0, 0.0, 0.0]])


def test_row_min_tie_routes_to_first_index():
    tape = T.DiffTape()
    x = tape.leaf(np.array([[2.0, 0.5, 0.5]]))
    grads = T.backward(tape, T.sum_all(T.row_min(x)))
    np.testing.assert_array_equal(grads[x.node].data, [[0.0, 1.0, 0.0]])


def test_mixed_tapes_rejected():
    t1, t2 = T.DiffTape(), T.DiffTape()
    a = t1.leaf(1.0)
    b = t2.leaf(2.0)
    with pytest.raises(ValueError):
        T.add(a, b)
