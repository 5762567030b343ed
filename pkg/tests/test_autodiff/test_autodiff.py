"""
Tests for reverse-mode differentiation, sampling and RMSProp.
"""
import numpy as np
import pytest

from app.autodiff import (
    OptimizerState,
    ShapeError,
    Tensor,
    add,
    categorical_sample,
    concat,
    constant,
    dense_forward,
    dot,
    finite_diff_check,
    gradients_agree,
    init_recurrent,
    log_softmax,
    matvec,
    mul,
    parameter,
    recurrent_cell,
    relative_error,
    rmsprop_step,
    run_recurrent,
    scale,
    sigmoid,
    stack,
    sub,
    take,
    take_many,
    tanh,
    total,
)

DRAWS = 100


def _vector_ops():
    """Scalar functions of two 3-vectors `a`, `b` and a 3x3 matrix `w`."""
    return {
        "add": lambda t: total(add(t["a"], t["b"])),
        "sub_mul": lambda t: total(mul(sub(t["a"], t["b"]), t["a"])),
        "scale": lambda t: total(scale(t["a"], -2.5)),
        "tanh": lambda t: total(tanh(t["a"])),
        "sigmoid": lambda t: dot(sigmoid(t["a"]), t["b"]),
        "matvec": lambda t: dot(matvec(t["w"], t["a"]), t["b"]),
        "dense": lambda t: total(tanh(dense_forward(t["a"], t["w"], t["b"]))),
        "log_softmax": lambda t: take(log_softmax(mul(t["a"], t["b"])), 1),
        "take_rows": lambda t: dot(take(t["w"], 2), t["a"]),
        "take_many": lambda t: total(mul(take_many(t["a"], [0, 2, 0]), t["b"])),
        "concat": lambda t: total(tanh(concat([t["a"], t["b"]]))),
        "stack": lambda t: dot(matvec(stack([t["a"], t["b"], t["a"]]), t["b"]), t["a"]),
        "shared": lambda t: total(mul(tanh(t["a"]), tanh(t["a"]))),
    }


class TestBackward:
    """Test cases for gradient propagation."""

    def test_product_rule(self):
        x = parameter(np.array([1.0, -2.0, 3.0]))
        y = parameter(np.array([4.0, 5.0, 6.0]))
        total(mul(x, y)).backward()
        np.testing.assert_allclose(x.grad, [4.0, 5.0, 6.0])
        np.testing.assert_allclose(y.grad, [1.0, -2.0, 3.0])

    def test_shared_node_adds_paths(self):
        x = parameter(np.array([3.0]))
        total(x * x).backward()
        np.testing.assert_allclose(x.grad, [6.0])

    def test_scalar_broadcast(self):
        x = parameter(np.array([1.0, 2.0]))
        c = parameter(np.array(3.0))
        total(mul(x, c)).backward()
        np.testing.assert_allclose(c.grad, 3.0)
        np.testing.assert_allclose(x.grad, [3.0, 3.0])

    def test_second_sweep_accumulates(self):
        x = parameter(np.array([2.0]))
        out = total(scale(x, 3.0))
        out.backward()
        out.backward()
        np.testing.assert_allclose(x.grad, [6.0])
        x.zero_grad()
        np.testing.assert_allclose(x.grad, [0.0])

    def test_constants_get_no_gradient(self):
        x = parameter(np.array([1.0]))
        c = constant(np.array([5.0]))
        total(mul(x, c)).backward()
        assert not c.requires_grad
        np.testing.assert_allclose(c.grad, [0.0])

    def test_operators(self):
        a = parameter(np.array([1.0, 2.0]))
        b = parameter(np.array([3.0, 5.0]))
        out = -(a - b) + a * b
        np.testing.assert_allclose(out.value, [5.0, 13.0])
        assert a[1].item() == 2.0


class TestShapes:
    """Test cases for shape validation."""

    def test_add_mismatch(self):
        with pytest.raises(ShapeError):
            add(constant(np.zeros(2)), constant(np.zeros(3)))

    def test_matvec_mismatch(self):
        with pytest.raises(ShapeError):
            matvec(constant(np.zeros((2, 3))), constant(np.zeros(2)))

    def test_take_out_of_range(self):
        with pytest.raises(ShapeError):
            take(constant(np.zeros(2)), 2)

    def test_log_softmax_needs_vector(self):
        with pytest.raises(ShapeError):
            log_softmax(constant(np.zeros(0)))

    def test_recurrent_state_mismatch(self):
        rng = np.random.default_rng(0)
        params = {k: constant(v) for k, v in init_recurrent(rng, 2, 3, "cell").items()}
        with pytest.raises(ShapeError):
            recurrent_cell(constant(np.zeros(2)), constant(np.zeros(4)), params, "cell")


class TestGradientCheck:
    """Reverse-mode gradients agree with central differences."""

    @pytest.mark.parametrize("name", sorted(_vector_ops()))
    def test_operation(self, name):
        f = _vector_ops()[name]
        rng = np.random.default_rng(sum(map(ord, name)))
        for _ in range(DRAWS):
            params = {
                "a": rng.normal(size=3),
                "b": rng.normal(size=3),
                "w": rng.normal(size=(3, 3)),
            }
            report = finite_diff_check(f, params)
            assert report.passed, report.failures
            assert report.checked == 15

    def test_recurrent_sequence(self):
        rng = np.random.default_rng(1)
        for _ in range(DRAWS):
            params = init_recurrent(rng, 2, 3, "cell")
            params["x0"] = rng.normal(size=2)
            params["x1"] = rng.normal(size=2)

            def f(t):
                states = run_recurrent([t["x0"], t["x1"]], constant(np.zeros(3)), t, "cell")
                return total(states[-1])

            assert finite_diff_check(f, params).passed

    def test_detects_wrong_gradient(self):
        def bad_square(t):
            a = t["a"]
            return total(Tensor(a.value ** 2, (a,), lambda g: (g * a.value,)))

        report = finite_diff_check(bad_square, {"a": np.array([1.0, 2.0])})
        assert not report.passed
        assert len(report.failures) == 2

    def test_detects_small_error_on_a_flat_coordinate(self):
        """A vanishing gradient reported as 5e-9 is caught by the absolute tolerance."""
        def nearly_flat(t):
            a = t["a"]
            return total(Tensor(np.zeros_like(a.value), (a,), lambda g: (g * 0.0 + 5e-9,)))

        report = finite_diff_check(nearly_flat, {"a": np.array([0.3, -1.2])})
        assert not report.passed
        assert report.atol == 1e-9

    def test_agreement_is_symmetric(self):
        assert gradients_agree(1.0, 1.0 + 5e-5, rtol=1e-4, atol=0.0)
        assert not gradients_agree(1.0, 1.0 + 5e-4, rtol=1e-4, atol=0.0)
        assert gradients_agree(0.0, 5e-10, rtol=1e-4, atol=1e-9)
        assert relative_error(0.0, 0.0) == 0.0



class TestSampling:
    """Test cases for categorical sampling and log-softmax."""

    def test_log_softmax_is_stable(self):
        out = log_softmax(constant(np.array([1000.0, 0.0])))
        assert np.all(np.isfinite(out.value))
        np.testing.assert_allclose(np.exp(out.value).sum(), 1.0)

    def test_sample_frequencies(self):
        rng = np.random.default_rng(0)
        logits = constant(np.log(np.array([1.0, 3.0])))
        draws = [categorical_sample(logits, rng)[0] for _ in range(4000)]
        assert np.mean(draws) == pytest.approx(0.75, abs=0.03)

    def test_sample_log_probability(self):
        logits = parameter(np.array([0.0, 0.0]))
        index, log_prob = categorical_sample(logits, np.random.default_rng(0))
        assert log_prob.item() == pytest.approx(np.log(0.5))
        log_prob.backward()
        expected = -0.5 * np.ones(2)
        expected[index] += 1.0
        np.testing.assert_allclose(logits.grad, expected)

    def test_non_finite_logits(self):
        with pytest.raises(ValueError):
            categorical_sample(constant(np.array([np.nan, 0.0])), np.random.default_rng(0))


class TestRmsProp:
    """Test cases for the optimizer update."""

    def test_first_step(self):
        params = {"w": np.array([1.0, 1.0])}
        grads = {"w": np.array([1.0, -2.0])}
        state = OptimizerState(learning_rate=0.1)
        new_params, new_state = rmsprop_step(params, grads, state)
        acc = 0.01 * np.array([1.0, 4.0])
        np.testing.assert_allclose(new_state.accumulators["w"], acc)
        np.testing.assert_allclose(new_params["w"], params["w"] - 0.1 * grads["w"] / np.sqrt(acc + 1e-8))
        assert new_state.steps == 1

    def test_inputs_untouched(self):
        params = {"w": np.array([1.0])}
        state = OptimizerState()
        rmsprop_step(params, {"w": np.array([3.0])}, state)
        np.testing.assert_allclose(params["w"], [1.0])
        assert state.accumulators == {}
        assert state.steps == 0

    def test_missing_gradient_is_zero(self):
        params = {"w": np.array([1.0]), "v": np.array([2.0])}
        new_params, _ = rmsprop_step(params, {"w": np.array([1.0])}, OptimizerState())
        np.testing.assert_allclose(new_params["v"], [2.0])

    def test_gradient_shape_mismatch(self):
        with pytest.raises(ShapeError):
            rmsprop_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, OptimizerState())
