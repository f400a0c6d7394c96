import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadscore.autodiff import Tensor, load_tensor, save_tensor, stack
from roadscore.autodiff.serialize import tensor_from_bytes, tensor_to_bytes

from oracles import finite_difference_gradient, relative_gradient_error


def check_gradient(fn, x, eps=1e-5, tol=1e-4):
    """Compare analytic gradient of scalar fn(Tensor) against central differences."""
    t = Tensor(x, requires_grad=True)
    loss = fn(t)
    loss.backward()
    numeric = finite_difference_gradient(lambda arr: fn(Tensor(arr)).item(), x, eps)
    err = relative_gradient_error(t.grad, numeric)
    assert err < tol, f"gradient mismatch: rel err {err:.3e}"


class TestForwardOracles:
    def test_conv_scalar_product(self):
        x = Tensor(np.full((1, 1, 1, 1), 2.0))
        k = Tensor(np.full((1, 1, 1, 1), 3.0))
        out = x.conv2d(k, stride=1, padding="valid")
        assert out.data.reshape(()) == 6.0

    def test_conv_reference_geometry(self):
        x = Tensor(np.zeros((1, 7, 30, 512)))
        k = Tensor(np.zeros((1, 1, 512, 512)))
        out = x.conv2d(k, stride=1, padding="valid")
        assert out.shape == (1, 7, 30, 512)

    def test_position_pool_uniform_weights_match_mean(self):
        rng = np.random.default_rng(31)
        a = rng.standard_normal((3, 7, 4))
        pooled = Tensor(a).position_pool(Tensor(np.full(7, 1.0 / 7)))
        np.testing.assert_allclose(pooled.data, a.mean(axis=1), atol=1e-12)

    def test_position_pool_shape_mismatch(self):
        with pytest.raises(ValueError, match="position_pool"):
            Tensor(np.zeros((2, 5, 3))).position_pool(Tensor(np.zeros(4)))

    def test_position_pool_matrix_matches_per_row(self):
        rng = np.random.default_rng(47)
        a = rng.standard_normal((3, 7, 4))
        w = rng.standard_normal((5, 7))
        batched = Tensor(a).position_pool(Tensor(w))
        assert batched.shape == (3, 5, 4)
        for t in range(5):
            single = Tensor(a).position_pool(Tensor(w[t]))
            np.testing.assert_allclose(batched.data[:, t], single.data, atol=1e-12)

    def test_conv2d_bias_matches_separate_add(self):
        rng = np.random.default_rng(53)
        x = rng.standard_normal((2, 6, 8, 3))
        k = rng.standard_normal((3, 3, 3, 5))
        b = rng.standard_normal(5)
        fused = Tensor(x).conv2d(Tensor(k), Tensor(b))
        split = Tensor(x).conv2d(Tensor(k)) + Tensor(b)
        np.testing.assert_array_equal(fused.data, split.data)

    def test_stack_joins_rows(self):
        rows = [Tensor(np.arange(3.0) + i) for i in range(2)]
        out = stack(rows)
        np.testing.assert_array_equal(out.data, [[0, 1, 2], [1, 2, 3]])
        with pytest.raises(ValueError, match="stack"):
            stack([])
        with pytest.raises(ValueError, match="equal shapes"):
            stack([Tensor(np.zeros(2)), Tensor(np.zeros(3))])

    def test_conv_all_ones_sum(self):
        x = Tensor(np.ones((1, 3, 3, 1)))
        k = Tensor(np.ones((3, 3, 1, 1)))
        out = x.conv2d(k, stride=1, padding="valid")
        assert out.data.reshape(()) == 9.0

    def test_conv_channel_mismatch(self):
        x = Tensor(np.zeros((1, 4, 4, 3)))
        k = Tensor(np.zeros((3, 3, 2, 8)))
        with pytest.raises(ValueError, match="channel"):
            x.conv2d(k)

    def test_relu(self):
        out = Tensor([-1.0, 0.0, 2.0]).relu()
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_relu_all_negative_gradient(self):
        x = Tensor([-3.0, -1.0, -0.5], requires_grad=True)
        x.relu().sum().backward()
        np.testing.assert_array_equal(x.grad, [0.0, 0.0, 0.0])

    def test_relu_positive_passthrough(self):
        x = Tensor([3.5], requires_grad=True)
        out = x.relu()
        np.testing.assert_array_equal(out.data, [3.5])
        out.sum().backward()
        np.testing.assert_array_equal(x.grad, [1.0])

    def test_softmax_uniform(self):
        out = Tensor([0.0] * 5).softmax()
        np.testing.assert_allclose(out.data, [0.2] * 5, atol=1e-15)

    def test_softmax_no_overflow(self):
        out = Tensor([1000.0, 0.0]).softmax()
        np.testing.assert_allclose(out.data, [1.0, 0.0], atol=1e-12)

    def test_softmax_log_ratios(self):
        out = Tensor([math.log(1.0), math.log(3.0)]).softmax()
        np.testing.assert_allclose(out.data, [0.25, 0.75], atol=1e-12)

    def test_cumsum_is_cdf(self):
        out = Tensor([0.2, 0.3, 0.5]).cumsum()
        np.testing.assert_allclose(out.data, [0.2, 0.5, 1.0], atol=1e-15)

    def test_matmul_identity(self):
        m = np.array([[1.5, -2.0], [0.25, 4.0]])
        out = Tensor(np.eye(2)) @ Tensor(m)
        np.testing.assert_array_equal(out.data, m)

    def test_matmul_shape_error(self):
        with pytest.raises(ValueError, match="inner dimensions"):
            Tensor(np.zeros((2, 3))) @ Tensor(np.zeros((4, 2)))

    def test_sum_square_with_gradient(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        loss = x.square().sum()
        assert loss.item() == 5.0
        loss.backward()
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])


class TestBackward:
    def test_sum_gradient_ones(self):
        x = Tensor([4.0, 5.0, 6.0], requires_grad=True)
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_square_sum_gradient(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        (x * x).sum().backward()
        np.testing.assert_array_equal(x.grad, [2.0, 4.0, 6.0])

    def test_accumulation_doubles_without_reset(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        x.sum().backward()
        first = x.grad.copy()
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, 2.0 * first)
        x.zero_grad()
        assert x.grad is None

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            (x * x).backward()

    def test_shared_subexpression_accumulates(self):
        x = Tensor([2.0], requires_grad=True)
        y = x * x
        (y + y).sum().backward()
        np.testing.assert_allclose(x.grad, [8.0])

    def test_no_grad_tracking_when_not_required(self):
        x = Tensor([1.0, 2.0])
        out = (x * x).sum()
        assert out._ctx is None and not out.requires_grad


class TestGradientChecks:
    """Analytic vs central finite differences on random small tensors."""

    N_INSTANCES = 100

    def _random_cases(self, shape_fn, seed):
        rng = np.random.default_rng(seed)
        for _ in range(self.N_INSTANCES):
            yield rng, rng.standard_normal(shape_fn(rng))

    def test_elementwise_ops(self):
        ops = {
            "relu": lambda t: t.relu().sum(),
            "square": lambda t: t.square().sum(),
            "neg": lambda t: (-t).sum(),
            "mean": lambda t: t.mean(),
            "cumsum": lambda t: t.cumsum(axis=-1).square().sum(),
            "softmax": lambda t: t.softmax(axis=-1).square().sum(),
            "clip_min": lambda t: t.clip_min(0.25).sum(),
        }
        for name, fn in ops.items():
            rng = np.random.default_rng(hash(name) % 2**32)
            for _ in range(self.N_INSTANCES):
                x = rng.standard_normal((rng.integers(1, 4), rng.integers(2, 6)))
                # keep values away from the kinks of relu/clip_min
                x = x + 0.01 * np.sign(x) + 0.02
                check_gradient(fn, x)

    def test_log_gradient(self):
        rng = np.random.default_rng(7)
        for _ in range(self.N_INSTANCES):
            x = rng.uniform(0.1, 3.0, size=(3, 4))
            check_gradient(lambda t: t.log().sum(), x)

    def test_binary_ops_with_broadcasting(self):
        rng = np.random.default_rng(11)
        for _ in range(self.N_INSTANCES):
            a = rng.standard_normal((2, 3))
            b = rng.standard_normal((3,))
            for combine in (
                lambda t, other: (t + other).square().sum(),
                lambda t, other: (t - other).square().sum(),
                lambda t, other: (t * other).square().sum(),
            ):
                check_gradient(lambda t: combine(t, Tensor(b)), a)
                check_gradient(lambda t: combine(Tensor(a), t), b)

    def test_matmul_gradients(self):
        rng = np.random.default_rng(13)
        for _ in range(self.N_INSTANCES):
            a = rng.standard_normal((2, 3))
            b = rng.standard_normal((3, 2))
            check_gradient(lambda t: (t @ Tensor(b)).square().sum(), a)
            check_gradient(lambda t: (Tensor(a) @ t).square().sum(), b)

    def test_conv2d_gradients(self):
        rng = np.random.default_rng(17)
        for _ in range(self.N_INSTANCES):
            x = rng.standard_normal((1, 4, 5, 2))
            k = rng.standard_normal((3, 3, 2, 2))
            for padding in ("same", "valid"):
                check_gradient(
                    lambda t: t.conv2d(Tensor(k), padding=padding).square().sum(), x
                )
                check_gradient(
                    lambda t: Tensor(x).conv2d(t, padding=padding).square().sum(), k
                )

    def test_conv2d_stride_gradients(self):
        rng = np.random.default_rng(19)
        for _ in range(20):
            x = rng.standard_normal((2, 6, 6, 2))
            k = rng.standard_normal((3, 3, 2, 3))
            check_gradient(
                lambda t: t.conv2d(Tensor(k), stride=2, padding="same").square().sum(), x
            )

    def test_max_pool_gradients(self):
        rng = np.random.default_rng(23)
        for _ in range(self.N_INSTANCES):
            x = rng.standard_normal((1, 4, 4, 2))
            check_gradient(lambda t: t.max_pool2d(2).square().sum(), x)

    def test_position_pool_gradients(self):
        rng = np.random.default_rng(29)
        for _ in range(self.N_INSTANCES):
            a = rng.standard_normal((2, 5, 3))
            w = rng.standard_normal(5)
            check_gradient(lambda t: t.position_pool(Tensor(w)).square().sum(), a)
            check_gradient(lambda t: Tensor(a).position_pool(t).square().sum(), w)

    def test_position_pool_matrix_gradients(self):
        rng = np.random.default_rng(31)
        for _ in range(self.N_INSTANCES):
            a = rng.standard_normal((2, 5, 3))
            w = rng.standard_normal((4, 5))
            check_gradient(lambda t: t.position_pool(Tensor(w)).square().sum(), a)
            check_gradient(lambda t: Tensor(a).position_pool(t).square().sum(), w)

    def test_stack_gradients(self):
        rng = np.random.default_rng(37)
        for _ in range(self.N_INSTANCES):
            parts = [rng.standard_normal(4) for _ in range(3)]
            for i in range(3):
                def f(t, i=i):
                    rows = [Tensor(p) for p in parts]
                    rows[i] = t
                    return stack(rows).square().sum()
                check_gradient(f, parts[i])

    def test_conv2d_bias_gradients(self):
        rng = np.random.default_rng(41)
        for _ in range(self.N_INSTANCES):
            x = rng.standard_normal((1, 4, 5, 2))
            k = rng.standard_normal((3, 3, 2, 3))
            b = rng.standard_normal(3)
            check_gradient(
                lambda t: t.conv2d(Tensor(k), Tensor(b)).square().sum(), x)
            check_gradient(
                lambda t: Tensor(x).conv2d(t, Tensor(b)).square().sum(), k)
            check_gradient(
                lambda t: Tensor(x).conv2d(Tensor(k), t).square().sum(), b)


class TestProperties:
    @given(
        st.lists(st.floats(min_value=-200, max_value=200), min_size=2, max_size=8),
        st.lists(st.floats(min_value=-200, max_value=200), min_size=2, max_size=8),
    )
    @settings(max_examples=200, deadline=None)
    def test_softmax_rows_sum_to_one(self, row_a, row_b):
        k = min(len(row_a), len(row_b))
        x = Tensor(np.array([row_a[:k], row_b[:k]]))
        out = x.softmax(axis=-1)
        sums = out.data.sum(axis=-1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)
        assert (out.data >= 0).all()

    def test_forward_bit_identical_across_runs(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 8, 8, 3))
        k = rng.standard_normal((3, 3, 3, 4))

        def run():
            t = Tensor(x).conv2d(Tensor(k)).relu().max_pool2d(2)
            return t.softmax(axis=-1).data.tobytes()

        assert run() == run()

    def test_max_pool_matches_plain_max(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 6, 8, 3))
        pooled = Tensor(x, requires_grad=True).max_pool2d(2)
        expected = x.reshape(2, 3, 2, 4, 2, 3).max(axis=(2, 4))
        np.testing.assert_array_equal(pooled.data, expected)


class TestSerialization:
    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(5)
        for shape in [(3,), (2, 4), (2, 3, 4, 5), ()]:
            arr = rng.standard_normal(shape)
            back = tensor_from_bytes(tensor_to_bytes(arr))
            assert back.shape == arr.shape
            assert back.tobytes() == arr.tobytes()

    def test_header_layout(self):
        blob = tensor_to_bytes(np.zeros((2, 3)))
        assert blob[:4] == b"FTEN"
        assert int.from_bytes(blob[4:8], "little") == 1
        assert int.from_bytes(blob[8:12], "little") == 2
        assert int.from_bytes(blob[12:16], "little") == 2
        assert int.from_bytes(blob[16:20], "little") == 3
        assert len(blob) == 20 + 6 * 8

    def test_file_round_trip(self, tmp_path):
        arr = np.random.default_rng(9).standard_normal((4, 7))
        path = tmp_path / "weights.ften"
        save_tensor(path, arr)
        assert load_tensor(path).tobytes() == arr.tobytes()

    def test_bad_magic_rejected(self):
        with pytest.raises(ValueError, match="magic"):
            tensor_from_bytes(b"NOPE" + b"\x00" * 16)
