"""Tests for the autodiff tape, modules, gradient checks and checkpoints."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from sign_latent_tools.autodiff import (
    LayerNorm,
    Linear,
    Module,
    Parameter,
    Tensor,
    concat,
    constant,
    grad_check,
    load_checkpoint,
    masked_mean,
    no_grad,
    read_checkpoint_meta,
    relative_error,
    save_checkpoint,
    tensor,
)
from sign_latent_tools.errors import ArchitectureMismatchError, BackwardError, CheckpointError, ConfigError, DomainError, ShapeError


class TestPrimitiveOps:
    """Forward values and adjoints of the primitive ops."""

    def test_square_sum_gradient(self):
        """Test d/dx sum(x^2) = 2x."""
        x = tensor([1.0, 2.0], requires_grad=True)
        (x * x).sum().backward()
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])

    def test_softmax_uniform(self):
        """Test equal logits give equal probabilities."""
        out = tensor([0.0, 0.0, 0.0]).softmax()
        np.testing.assert_allclose(out.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)

    def test_softmax_rows_sum_to_one(self, rng):
        """Test softmax normalizes the last axis."""
        out = tensor(rng.uniform(-5, 5, size=(4, 7))).softmax()
        np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-12)

    def test_abs_subgradient_at_zero(self):
        """Test |x| has gradient 0 at x = 0."""
        x = tensor([-1.5, 0.0, 2.0], requires_grad=True)
        x.abs().sum().backward()
        np.testing.assert_array_equal(x.grad, [-1.0, 0.0, 1.0])

    def test_layer_norm_constant_input(self):
        """Test a constant row normalizes to zeros without dividing by zero."""
        out = tensor([[3.0, 3.0, 3.0]]).layer_norm()
        np.testing.assert_array_equal(out.data, [[0.0, 0.0, 0.0]])

    def test_matmul_shapes(self, rng):
        """Test batched matmul against a shared right operand."""
        a = tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
        b = tensor(rng.standard_normal((4, 5)), requires_grad=True)
        (a @ b).sum().backward()
        assert a.grad.shape == (2, 3, 4)
        assert b.grad.shape == (4, 5)

    def test_leading_axis_broadcast(self, rng):
        """Test bias-style broadcasting sums the gradient over batch axes."""
        x = tensor(rng.standard_normal((3, 4)))
        b = tensor(np.zeros(4), requires_grad=True)
        (x + b).sum().backward()
        np.testing.assert_array_equal(b.grad, [3.0, 3.0, 3.0, 3.0])

    def test_concat_and_slice(self):
        """Test concat followed by slice routes gradients to the right input."""
        a = tensor([1.0, 2.0], requires_grad=True)
        b = tensor([3.0], requires_grad=True)
        joined = concat([a, b], axis=0)
        joined.slice(0, 1, 3).sum().backward()
        np.testing.assert_array_equal(a.grad, [0.0, 1.0])
        np.testing.assert_array_equal(b.grad, [1.0])

    def test_gradients_accumulate(self):
        """Test two backward passes add up."""
        x = tensor([1.0, -2.0], requires_grad=True)
        loss = (x * 3.0).sum()
        loss.backward()
        loss.backward()
        np.testing.assert_array_equal(x.grad, [6.0, 6.0])

    def test_no_grad_records_nothing(self):
        """Test ops under no_grad produce tensors that do not require grad."""
        x = tensor([1.0], requires_grad=True)
        with no_grad():
            y = x * 2.0
        assert not y.requires_grad
        assert y.is_leaf

    def test_no_grad_covers_worker_threads(self):
        """Test a thread pool started inside no_grad records no tape in its workers."""
        x = tensor([1.0, 2.0], requires_grad=True)
        with no_grad(), ThreadPoolExecutor(max_workers=3) as executor:
            outputs = list(executor.map(lambda k: x * float(k), range(6)))
        assert not any(y.requires_grad for y in outputs)
        assert (x * 2.0).requires_grad


class TestOpErrors:
    """Shape and domain failures."""

    def test_non_suffix_broadcast_rejected(self):
        """Test broadcasting over a trailing axis raises ShapeError with both shapes."""
        with pytest.raises(ShapeError) as info:
            tensor(np.zeros((3, 4))) + tensor(np.zeros(3))
        assert info.value.left == (3, 4)
        assert info.value.right == (3,)

    def test_matmul_mismatch(self):
        """Test inner dimensions must agree."""
        with pytest.raises(ShapeError):
            tensor(np.zeros((2, 3))) @ tensor(np.zeros((4, 2)))

    def test_log_of_non_positive(self):
        """Test log(0) is a domain error."""
        with pytest.raises(DomainError):
            tensor([1.0, 0.0]).log()

    def test_division_by_zero(self):
        """Test dividing by a zero entry is a domain error."""
        with pytest.raises(DomainError):
            tensor([1.0]) / tensor([0.0])

    def test_backward_needs_scalar(self):
        """Test backward on a vector loss raises BackwardError."""
        x = tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(BackwardError):
            (x * 2.0).backward()

    def test_slice_out_of_range(self):
        """Test slicing past the end raises ShapeError."""
        with pytest.raises(ShapeError):
            tensor(np.zeros(3)).slice(0, 1, 5)


class TestMaskedMean:
    """Masked reductions over padded batches."""

    def test_padding_values_ignored(self):
        """Test values at padded frames never reach the result."""
        mask = np.array([[True, True, False]])
        a = tensor(np.array([[[1.0], [3.0], [100.0]]]))
        b = tensor(np.array([[[1.0], [3.0], [-7.0]]]))
        assert masked_mean(a, mask).item() == masked_mean(b, mask).item() == 2.0

    def test_padding_gets_zero_gradient(self):
        """Test padded entries receive exactly zero gradient."""
        mask = np.array([True, False])
        x = tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
        masked_mean(x, mask).backward()
        np.testing.assert_array_equal(x.grad, [[0.5, 0.5], [0.0, 0.0]])

    def test_empty_mask_rejected(self):
        """Test a mask selecting nothing is a domain error."""
        with pytest.raises(DomainError):
            masked_mean(tensor(np.ones((2, 3))), np.zeros(2, dtype=bool))


class TestGradCheck:
    """Finite-difference gradient checks."""

    def test_quadratic_form(self, rng):
        """Test x^T A x passes with a very small relative error."""
        a = constant(rng.standard_normal((5, 5)))
        x = Parameter(rng.standard_normal((5, 1)), "x")
        report = grad_check(lambda: (x.reshape(1, 5) @ a @ x).sum(), [x], h=1e-5)
        assert report.max_rel_error < 1e-6
        assert report.passed
        assert report.checked == 5

    def test_constant_function(self):
        """Test a function not depending on its parameter reports zero error."""
        x = Parameter(np.ones(3), "x")
        report = grad_check(lambda: constant(2.5), [x])
        assert report.max_rel_error == 0.0
        assert report.passed

    @pytest.mark.parametrize(
        "op",
        [
            lambda t: t.exp(),
            lambda t: (t * t + 1.0).log(),
            lambda t: t.tanh(),
            lambda t: t.sigmoid(),
            lambda t: t.gelu(),
            lambda t: t.softmax(),
            lambda t: t.layer_norm(),
            lambda t: t / (t * t + 1.0),
            lambda t: t.transpose(1, 0) @ t,
            lambda t: t.mean(axis=0),
            lambda t: t.abs() + t.relu(),
        ],
    )
    def test_primitive_gradients(self, op, rng):
        """Test every primitive against central differences at random inputs in [-2, 2]."""
        x = Parameter(rng.uniform(-2, 2, size=(3, 4)), "x")
        weights = constant(rng.standard_normal(op(x).shape))
        report = grad_check(lambda: (op(x) * weights).sum(), [x], tol=1e-4)
        assert report.passed, f"max rel. error {report.max_rel_error}"

    def test_relative_error_floor(self):
        """Test the relative error definition near zero."""
        assert relative_error(0.0, 1e-13) == 0.0
        assert relative_error(1.0, 1.0) == 0.0
        assert relative_error(2.0, 1.0) == pytest.approx(0.5)

    def test_requires_float64(self):
        """Test 32-bit parameters are refused."""
        x = Parameter(np.ones(2, dtype=np.float32), "x")
        with pytest.raises(ConfigError):
            grad_check(lambda: x.sum(), [x])


class _TwoLayer(Module):
    param_prefix = "net"

    def __init__(self, rng, hidden=3):
        self.first = Linear(2, hidden, rng)
        self.norm = LayerNorm(hidden)
        self.second = Linear(hidden, 1, rng)

    def forward(self, x):
        return self.second(self.norm(self.first(x)).tanh())


class TestModule:
    """Parameter discovery and state dicts."""

    def test_named_parameters(self, rng):
        """Test dotted names include the model prefix and nested attributes."""
        names = [name for name, _ in _TwoLayer(rng).named_parameters()]
        assert names == ["net.first.weight", "net.first.bias", "net.norm.gain", "net.norm.shift", "net.second.weight", "net.second.bias"]

    def test_state_dict_round_trip(self, rng):
        """Test loading a state dict reproduces the outputs."""
        source, target = _TwoLayer(np.random.default_rng(1)), _TwoLayer(np.random.default_rng(2))
        x = tensor(rng.standard_normal((4, 2)))
        target.load_state_dict(source.state_dict())
        np.testing.assert_array_equal(source(x).data, target(x).data)

    def test_shape_mismatch(self, rng):
        """Test a different hidden width is an architecture mismatch."""
        with pytest.raises(ArchitectureMismatchError):
            _TwoLayer(rng, hidden=4).load_state_dict(_TwoLayer(rng, hidden=3).state_dict())


class TestCheckpoint:
    """Checkpoint files."""

    def test_round_trip(self, tmp_path, rng):
        """Test arrays and meta survive a save/load cycle exactly."""
        arrays = {"a": rng.standard_normal((2, 3)), "b": np.arange(4, dtype=np.float32)}
        path = save_checkpoint(tmp_path / "x.ckpt", arrays, {"kind": "test", "epoch": 3})
        loaded, meta = load_checkpoint(path)
        np.testing.assert_array_equal(loaded["a"], arrays["a"])
        assert loaded["b"].dtype == np.float32
        assert meta == {"kind": "test", "epoch": 3}
        assert read_checkpoint_meta(path)["epoch"] == 3

    def test_identical_bytes(self, tmp_path):
        """Test saving the same content twice writes identical files."""
        arrays = {"w": np.linspace(0, 1, 5)}
        first = save_checkpoint(tmp_path / "1.ckpt", arrays, {"b": 1, "a": 2}).read_bytes()
        second = save_checkpoint(tmp_path / "2.ckpt", arrays, {"a": 2, "b": 1}).read_bytes()
        assert first == second

    def test_bad_magic(self, tmp_path):
        """Test a foreign file is rejected."""
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(CheckpointError, match="bad magic"):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path):
        """Test a cut-off tensor payload is rejected."""
        path = save_checkpoint(tmp_path / "t.ckpt", {"w": np.ones(10)})
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointError, match="truncated payload"):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        """Test a missing checkpoint raises CheckpointError."""
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "missing.ckpt")


def test_tensor_repr():
    """Test the repr names shape and dtype."""
    assert "shape=(2,)" in repr(Tensor(np.zeros(2)))
