"""Core tensor op semantics, gradient correctness, and tape structure."""

import numpy as np
import pytest

from asd.errors import ShapeError
from asd.tensor import (
    Tensor,
    add,
    backward,
    exp,
    finite_diff_check,
    log,
    matmul,
    mean_all,
    mean_rows,
    mul,
    relu,
    reshape,
    row_l2_normalize,
    row_sums,
    scalar_mul,
    sigmoid,
    softmax_rows,
    square,
    sub,
    sum_all,
    tape_nodes,
    transpose,
)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def matmul_oracle(a, b):
    """Naive triple loop, no numpy matmul."""
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for t in range(k):
                out[i, j] += a[i, t] * b[t, j]
    return out


class TestMatmul:
    def test_identity(self):
        out = matmul(Tensor(np.eye(2)), Tensor([[1.0, 2.0], [3.0, 4.0]]))
        assert np.array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])

    def test_projector(self):
        out = matmul(Tensor([[1.0, 0.0], [0.0, 0.0]]), Tensor([[5.0], [7.0]]))
        assert np.array_equal(out.data, [[5.0], [0.0]])

    def test_against_triple_loop(self, rng):
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((4, 2))
        out = matmul(Tensor(a), Tensor(b))
        assert np.abs(out.data - matmul_oracle(a, b)).max() <= 1e-12

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))

    def test_associativity(self, rng):
        for _ in range(10):
            a = rng.standard_normal((3, 4))
            b = rng.standard_normal((4, 5))
            c = rng.standard_normal((5, 2))
            left = matmul(matmul(Tensor(a), Tensor(b)), Tensor(c)).data
            right = matmul(Tensor(a), matmul(Tensor(b), Tensor(c))).data
            assert np.abs(left - right).max() / max(np.abs(left).max(), 1.0) <= 1e-9


class TestRowNormalize:
    def test_3_4_5(self):
        out = row_l2_normalize(Tensor([[3.0, 4.0]]))
        assert np.allclose(out.data, [[0.6, 0.8]], atol=1e-15)

    def test_zero_row_preserved(self):
        out = row_l2_normalize(Tensor([[0.0, 0.0]]), eps=1e-12)
        assert np.array_equal(out.data, [[0.0, 0.0]])

    def test_unit_norms(self, rng):
        out = row_l2_normalize(Tensor(rng.standard_normal((5, 3))))
        norms = np.linalg.norm(out.data, axis=1)
        assert np.abs(norms - 1.0).max() <= 1e-12


class TestSoftmax:
    def test_uniform_row(self):
        out = softmax_rows(Tensor([[2.0, 2.0, 2.0, 2.0]]))
        assert np.allclose(out.data, 0.25, atol=1e-15)

    def test_closed_form(self):
        out = softmax_rows(Tensor([[0.0, np.log(3.0)]]))
        assert np.allclose(out.data, [[0.25, 0.75]], atol=1e-12)

    def test_matches_unstabilized_formula(self, rng):
        a = rng.standard_normal((4, 6))
        direct = np.exp(a) / np.exp(a).sum(axis=1, keepdims=True)
        assert np.abs(softmax_rows(Tensor(a)).data - direct).max() <= 1e-12

    def test_rows_sum_to_one_entries_open_interval(self, rng):
        out = softmax_rows(Tensor(rng.standard_normal((7, 5)) * 5)).data
        assert np.abs(out.sum(axis=1) - 1.0).max() <= 1e-9
        assert (out > 0).all() and (out < 1).all()

    def test_shift_invariance(self, rng):
        a = rng.standard_normal((3, 5))
        shifted = a + rng.standard_normal((3, 1))
        diff = softmax_rows(Tensor(a)).data - softmax_rows(Tensor(shifted)).data
        assert np.abs(diff).max() <= 1e-12


class TestElementwise:
    def test_sigmoid_symmetry_point(self):
        assert sigmoid(Tensor(0.0)).item() == 0.5

    def test_log_clamp(self):
        out = log(Tensor([0.0]))
        assert np.isfinite(out.data).all()
        assert np.allclose(out.data, np.log(1e-12))

    def test_square(self):
        assert np.array_equal(square(Tensor([-2.0, 3.0])).data, [4.0, 9.0])

    def test_exp_overflow_guard(self):
        assert np.isfinite(exp(Tensor([1000.0])).data).all()

    def test_scalar_broadcast(self):
        out = sub(1.0, Tensor([0.25, 0.5]))
        assert np.array_equal(out.data, [0.75, 0.5])

    def test_row_vector_broadcast(self):
        out = add(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([10.0, 20.0]))
        assert np.array_equal(out.data, [[11.0, 22.0], [13.0, 24.0]])

    def test_disallowed_broadcast(self):
        with pytest.raises(ShapeError):
            add(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 1))))
        with pytest.raises(ShapeError):
            mul(Tensor(np.ones((4, 3))), Tensor(np.ones(4)))


class TestReduces:
    def test_mean_rows(self):
        out = mean_rows(Tensor([[1.0, 3.0], [3.0, 5.0]]))
        assert np.array_equal(out.data, [2.0, 4.0])

    def test_sum_all_zeros(self):
        assert sum_all(Tensor(np.zeros((3, 2)))).item() == 0.0

    def test_transpose_involution_bitwise(self, rng):
        a = rng.standard_normal((4, 3))
        out = transpose(transpose(Tensor(a)))
        assert np.array_equal(out.data, a)

    def test_row_sums(self):
        assert np.array_equal(row_sums(Tensor([[1.0, 2.0], [3.0, 4.0]])).data, [3.0, 7.0])

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((0, 3)))


class TestBackward:
    def test_sum_gives_ones(self, rng):
        x = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
        backward(sum_all(x))
        assert np.array_equal(x.grad, np.ones((3, 2)))

    def test_sum_of_squares(self, rng):
        data = rng.standard_normal(5)
        x = Tensor(data, requires_grad=True)
        backward(sum_all(square(x)))
        assert np.allclose(x.grad, 2 * data, atol=1e-15)

    def test_fan_out_accumulates(self, rng):
        data = rng.standard_normal(4)
        x = Tensor(data, requires_grad=True)
        backward(sum_all(mul(x, x)))  # same tensor used twice
        assert np.allclose(x.grad, 2 * data, atol=1e-15)

    def test_non_scalar_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            backward(add(x, x))

    def test_untracked_rejected(self):
        with pytest.raises(ValueError, match="tracked"):
            backward(sum_all(Tensor(np.ones(3))))

    def test_grad_accumulates_across_calls(self, rng):
        x = Tensor(rng.standard_normal(3), requires_grad=True)
        backward(sum_all(x))
        backward(sum_all(x))
        assert np.array_equal(x.grad, 2 * np.ones(3))


class TestTape:
    def test_topological_order_and_single_visit(self, rng):
        x = Tensor(rng.standard_normal((3, 3)), requires_grad=True)
        y = mul(x, x)
        z = sum_all(add(y, transpose(y)))
        nodes = tape_nodes(z)
        seen = {}
        for node in nodes:
            assert node.output_id not in seen, "node replayed twice"
            seen[node.output_id] = node
            for input_id in node.input_ids:
                assert input_id == x._id or input_id in seen, "input after its consumer"

    def test_leaf_not_on_tape(self):
        x = Tensor(np.ones(2), requires_grad=True)
        nodes = tape_nodes(sum_all(x))
        assert len(nodes) == 1 and nodes[0].op == "sum_all"


# Every differentiable op, checked against central differences.
GRAD_CASES = [
    ("add", lambda t, c: sum_all(square(add(t, c["mat"])))),
    ("add_rowvec", lambda t, c: sum_all(square(add(c["mat_t"], t)))),
    ("sub", lambda t, c: sum_all(square(sub(t, c["mat"])))),
    ("mul", lambda t, c: sum_all(mul(t, c["mat"]))),
    ("mul_scalar_operand", lambda t, c: sum_all(square(mul(t, c["scalar"])))),
    ("scalar_mul", lambda t, c: sum_all(square(scalar_mul(t, 1.7)))),
    ("exp", lambda t, c: sum_all(exp(t))),
    ("log", lambda t, c: sum_all(log(add(square(t), 0.5)))),
    ("sigmoid", lambda t, c: sum_all(sigmoid(t))),
    ("relu", lambda t, c: sum_all(square(relu(t)))),
    ("square", lambda t, c: sum_all(square(t))),
    ("matmul_left", lambda t, c: sum_all(square(matmul(t, c["right"])))),
    ("matmul_right", lambda t, c: sum_all(square(matmul(c["left"], t)))),
    ("transpose", lambda t, c: sum_all(square(transpose(t)))),
    ("reshape", lambda t, c: sum_all(square(reshape(t, (t.size,))))),
    ("row_l2_normalize", lambda t, c: sum_all(mul(row_l2_normalize(t), c["mat"]))),
    ("softmax_rows", lambda t, c: sum_all(mul(softmax_rows(t), c["mat"]))),
    ("sum_all", lambda t, c: square(sum_all(t))),
    ("mean_all", lambda t, c: square(mean_all(t))),
    ("mean_rows", lambda t, c: sum_all(square(mean_rows(t)))),
    ("row_sums", lambda t, c: sum_all(square(row_sums(t)))),
]


@pytest.mark.parametrize("name,fn", GRAD_CASES, ids=[c[0] for c in GRAD_CASES])
def test_gradients_match_finite_differences(name, fn, rng):
    for trial in range(5):
        x = rng.standard_normal((3, 4))
        if name == "relu":
            x = x + np.sign(x) * 0.2  # keep clear of the kink
        if name == "add_rowvec":
            x = x[0]
        consts = {
            "mat": Tensor(rng.standard_normal((3, 4))),
            "mat_t": Tensor(rng.standard_normal((5, 4))),
            "scalar": Tensor(0.8),
            "right": Tensor(rng.standard_normal((4, 2))),
            "left": Tensor(rng.standard_normal((2, 3))),
        }
        err = finite_diff_check(lambda t: fn(t, consts), Tensor(x), h=1e-5)
        assert err <= 1e-4, f"{name} trial {trial}: {err}"


class TestFiniteDiffCheck:
    def test_quadratic_form_is_tight(self, rng):
        q = rng.standard_normal((4, 4))
        err = finite_diff_check(
            lambda t: sum_all(mul(t, matmul(Tensor(q), t))), Tensor(rng.standard_normal((4, 1)))
        )
        assert err <= 1e-7

    def test_sigmoid_chain(self, rng):
        mix = Tensor(rng.standard_normal((3, 3)))
        err = finite_diff_check(
            lambda t: mean_all(sigmoid(mul(sigmoid(t), mix))),
            Tensor(rng.standard_normal((3, 3))),
        )
        assert err <= 1e-4

    def test_constant_function(self):
        err = finite_diff_check(lambda t: sum_all(mul(t, Tensor(np.zeros((2, 2))))), Tensor(np.ones((2, 2))))
        assert err == 0.0
