"""Tests for the tape engine, MLP layers, Adam, and the checkpoint container."""

import numpy as np
import pytest

from vqplan.errors import ContractError, NonFiniteError, ShapeError
from vqplan.numerics import (
    GraphTape,
    MLPSpec,
    ParamStore,
    Tensor,
    backward,
    concat_cols,
    constant,
    exponential_lr,
    gather_rows,
    grad_check,
    init_mlp,
    load_arrays,
    make_rng,
    matmul,
    mean_all,
    mlp_forward,
    mul,
    relu,
    save_arrays,
    scale,
    slice_cols,
    softmax_cross_entropy,
    softmax_cross_entropy_rows,
    square,
    straight_through,
    sub,
    sum_all,
    tanh,
)


def _scalar_loss_fn(store, spec, x_data):
    """Sum of squares of an MLP output, as a grad_check-style closure."""

    def loss_fn(tape):
        x = constant(x_data)
        out = mlp_forward(store, "net", spec, x, tape)
        return sum_all(tape, square(tape, out))

    return loss_fn


class TestMlpForward:
    def test_zero_weights_give_zero_output(self):
        store = ParamStore()
        spec = MLPSpec((3, 4, 2))
        init_mlp(store, "net", spec, make_rng(0))
        for name in store.names():
            store[name].data[...] = 0.0
        out = mlp_forward(store, "net", spec, constant([1.0, -2.0, 3.0]), None)
        assert np.array_equal(out.data, np.zeros(2))

    def test_single_linear_layer(self):
        store = ParamStore()
        spec = MLPSpec((1, 1))
        store.create("net/w0", [[2.0]])
        store.create("net/b0", [1.0])
        out = mlp_forward(store, "net", spec, constant([3.0]), None)
        assert out.data[0] == pytest.approx(7.0)

    def test_deterministic_across_runs(self):
        spec = MLPSpec((4, 8, 3))

        def run():
            store = ParamStore()
            init_mlp(store, "net", spec, make_rng(42))
            return mlp_forward(store, "net", spec, constant(np.ones(4)), None).data

        first, second = run(), run()
        assert np.array_equal(first, second)

    def test_width_mismatch_names_layer(self):
        store = ParamStore()
        spec = MLPSpec((3, 2))
        init_mlp(store, "net", spec, make_rng(0))
        with pytest.raises(ShapeError, match="layer 0"):
            mlp_forward(store, "net", spec, constant(np.ones(5)), None)

    def test_missing_weights(self):
        store = ParamStore()
        with pytest.raises(ContractError, match="no weights"):
            mlp_forward(store, "net", MLPSpec((2, 2)), constant(np.ones(2)), None)


class TestBackward:
    def test_linear_derivative(self):
        store = ParamStore()
        w = store.create("w", [2.0])
        tape = GraphTape()
        loss = sum_all(tape, mul(tape, w, constant([3.0])))
        backward(tape, loss)
        assert w.grad[0] == pytest.approx(3.0)

    def test_non_scalar_loss_rejected(self):
        tape = GraphTape()
        t = Tensor([1.0, 2.0], requires_grad=True)
        out = square(tape, t)
        with pytest.raises(ContractError, match="scalar"):
            backward(tape, out)

    def test_constant_branch_gets_zero_gradient(self):
        store = ParamStore()
        w = store.create("w", [1.5])
        unused = store.create("unused", [4.0])
        tape = GraphTape()
        loss = sum_all(tape, square(tape, w))
        backward(tape, loss)
        assert w.grad[0] == pytest.approx(3.0)
        assert unused.grad is None

    def test_mlp_gradients_match_finite_differences(self):
        store = ParamStore()
        spec = MLPSpec((3, 5, 2))
        init_mlp(store, "net", spec, make_rng(7))
        x = make_rng(8).standard_normal(3)
        report = grad_check(store, _scalar_loss_fn(store, spec, x), step=1e-4)
        assert report.passed, f"max rel err {report.max_rel_error}"
        assert report.max_rel_error < 1e-3


class TestPrimitiveGradients:
    """Every primitive against central finite differences, randomized."""

    CASES = {
        "matmul": lambda t, a, b: matmul(t, a, b),
        "add_pair": lambda t, a, b: sub(t, a, b),
        "mul_pair": lambda t, a, b: mul(t, a, b),
        "tanh": lambda t, a, b: tanh(t, a),
        "relu": lambda t, a, b: relu(t, a),
        "square": lambda t, a, b: square(t, a),
        "scale": lambda t, a, b: scale(t, a, -1.7),
        "concat": lambda t, a, b: concat_cols(t, [a, a]),
        "slice": lambda t, a, b: slice_cols(t, a, 1, 3),
    }

    @pytest.mark.parametrize("name", sorted(CASES))
    def test_primitive(self, name):
        op = self.CASES[name]
        rng = make_rng(hash(name) % (2**32))
        for trial in range(10):
            store = ParamStore()
            if name == "matmul":
                a = store.create("a", rng.standard_normal((3, 4)))
                b = store.create("b", rng.standard_normal((4, 2)))
            else:
                a = store.create("a", rng.standard_normal((2, 4)) + 0.1)
                b = store.create("b", rng.standard_normal((2, 4)))

            def loss_fn(tape):
                return sum_all(tape, square(tape, op(tape, a, b)))

            report = grad_check(store, loss_fn, step=1e-4)
            assert report.passed, f"{name} trial {trial}: {report.max_rel_error}"

    def test_straight_through_backward_is_identity(self):
        # not finite-difference checkable: the estimator's backward is the
        # identity regardless of what the forward substitutes
        store = ParamStore()
        z = store.create("z", [0.4, -1.2, 0.9])
        tape = GraphTape()
        out = straight_through(tape, np.array([1.0, 1.0, 1.0]), z)
        weights = constant([2.0, 3.0, 5.0])
        backward(tape, sum_all(tape, mul(tape, out, weights)))
        assert np.array_equal(z.grad, [2.0, 3.0, 5.0])
        assert np.array_equal(out.data, [1.0, 1.0, 1.0])

    def test_gather_rows_scatters_gradient(self):
        store = ParamStore()
        table = store.create("table", np.arange(12.0).reshape(4, 3))
        tape = GraphTape()
        rows = gather_rows(tape, table, [1, 1, 3])
        backward(tape, sum_all(tape, rows))
        expected = np.zeros((4, 3))
        expected[1] = 2.0
        expected[3] = 1.0
        assert np.array_equal(table.grad, expected)

    def test_mean_all_gradient(self):
        store = ParamStore()
        a = store.create("a", [[2.0, 4.0], [6.0, 8.0]])
        tape = GraphTape()
        backward(tape, mean_all(tape, a))
        assert np.allclose(a.grad, 0.25)


class TestSoftmaxCrossEntropy:
    def test_uniform_two_way(self):
        tape = GraphTape()
        loss = softmax_cross_entropy(tape, constant([0.0, 0.0]), 0)
        assert float(loss.data) == pytest.approx(np.log(2.0), abs=1e-12)

    def test_saturated_logits_no_overflow(self):
        loss = softmax_cross_entropy(None, constant([1000.0, 0.0]), 0)
        assert float(loss.data) == pytest.approx(0.0, abs=1e-12)

    def test_out_of_range_target(self):
        with pytest.raises(ContractError):
            softmax_cross_entropy(None, constant([0.0, 0.0]), 2)

    def test_gradient_is_probs_minus_onehot(self):
        store = ParamStore()
        logits = store.create("logits", [0.3, -0.7, 1.1])
        tape = GraphTape()
        backward(tape, softmax_cross_entropy(tape, logits, 1))
        z = np.exp(logits.data - logits.data.max())
        probs = z / z.sum()
        probs[1] -= 1.0
        assert np.allclose(logits.grad, probs, atol=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = make_rng(99)
        for _ in range(10):
            store = ParamStore()
            logits = store.create("logits", rng.standard_normal(6))
            target = int(rng.integers(0, 6))

            def loss_fn(tape):
                return softmax_cross_entropy(tape, logits, target)

            report = grad_check(store, loss_fn, step=1e-4)
            assert report.passed

    def test_row_variant_matches_single(self):
        rng = make_rng(5)
        logits = rng.standard_normal((4, 3))
        targets = [0, 2, 1, 1]
        rows = softmax_cross_entropy_rows(None, constant(logits), targets)
        singles = [
            float(softmax_cross_entropy(None, constant(logits[i]), targets[i]).data)
            for i in range(4)
        ]
        assert np.allclose(rows.data, singles, atol=1e-14)


class TestAdam:
    def test_first_step_analytic_value(self):
        store = ParamStore()
        w = store.create("w", [0.0])
        w.grad = np.array([1.0])
        store.adam_step(1e-3, 0.9, 0.999, 1e-8)
        # bias corrections cancel on step one; delta = -lr / sqrt(1 + eps)
        assert w.data[0] == pytest.approx(-9.99999995e-4, abs=1e-13)
        assert store.step == 1
        assert w.grad is None

    def test_zero_gradient_is_noop_on_values(self):
        store = ParamStore()
        w = store.create("w", [1.25])
        w.grad = np.array([5.0])
        store.adam_step(1e-2)
        before = w.data.copy()
        m_before = store.moment1["w"].copy()
        w.grad = np.zeros(1)
        store.adam_step(0.0)  # lr 0 isolates the moment decay
        assert np.array_equal(w.data, before)
        assert abs(store.moment1["w"][0]) < abs(m_before[0])

    def test_zero_gradient_fresh_moments_no_move(self):
        store = ParamStore()
        w = store.create("w", [3.0])
        w.grad = np.zeros(1)
        store.adam_step(1e-2)
        assert w.data[0] == pytest.approx(3.0)

    def test_missing_gradient_names_parameter(self):
        store = ParamStore()
        store.create("alpha", [1.0])
        store.create("beta", [1.0])
        store["alpha"].grad = np.zeros(1)
        with pytest.raises(ContractError, match="beta"):
            store.adam_step(1e-3)

    def test_step_counter_strictly_increments(self):
        store = ParamStore()
        w = store.create("w", [0.0])
        for expected in (1, 2, 3):
            w.grad = np.ones(1)
            store.adam_step(1e-3)
            assert store.step == expected

    def test_lr_schedule_endpoints(self):
        assert exponential_lr(0, 3e-4) == pytest.approx(3e-4)
        assert exponential_lr(100_000, 3e-4) == pytest.approx(3e-4 * 0.9)

    def test_clip_gradients_global_norm(self):
        store = ParamStore()
        a = store.create("a", np.zeros(2))
        b = store.create("b", np.zeros(2))
        a.grad = np.array([3.0, 0.0])
        b.grad = np.array([0.0, 4.0])
        norm = store.clip_gradients(1.0)
        assert norm == pytest.approx(5.0)
        assert store.global_grad_norm() == pytest.approx(1.0)


class TestGradCheck:
    def test_quadratic_is_nearly_exact(self):
        store = ParamStore()
        store.create("w", [0.7, -0.3])

        def loss_fn(tape):
            return sum_all(tape, square(tape, store["w"]))

        report = grad_check(store, loss_fn, step=1e-4)
        assert report.max_rel_error < 1e-6

    def test_detects_corrupted_backward(self):
        store = ParamStore()
        w = store.create("w", [0.5])

        def loss_fn(tape):
            out = square(tape, w)
            if tape is not None:
                # corrupt the recorded rule to emulate a broken primitive
                tape.records[-1].backward = lambda g: (g * 3.0 * w.data,)
            return sum_all(tape, out)

        report = grad_check(store, loss_fn, step=1e-4)
        assert not report.passed

    def test_rejects_nondeterministic_loss(self):
        store = ParamStore()
        store.create("w", [0.5])
        state = {"count": 0}

        def loss_fn(tape):
            state["count"] += 1
            return constant(float(state["count"]))

        with pytest.raises(ContractError, match="deterministic"):
            grad_check(store, loss_fn)


class TestNoNaN:
    def test_ops_reject_nonfinite_results(self):
        with pytest.raises(NonFiniteError):
            Tensor([np.nan])
        big = constant(np.full(3, 1e308))
        with np.errstate(over="ignore"), pytest.raises(NonFiniteError):
            square(None, big)

    def test_determinism_bit_identical_gradients(self):
        def run():
            store = ParamStore()
            spec = MLPSpec((3, 6, 2))
            init_mlp(store, "net", spec, make_rng(11))
            tape = GraphTape()
            out = mlp_forward(store, "net", spec, constant(np.ones(3)), tape)
            backward(tape, sum_all(tape, square(tape, out)))
            return {n: store[n].grad.copy() for n in store.names()}

        a, b = run(), run()
        for name in a:
            assert np.array_equal(a[name], b[name])


class TestCheckpointContainer:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = make_rng(3)
        arrays = {
            "param/w": rng.standard_normal((4, 3)),
            "step": np.array([17], dtype=np.int64),
        }
        meta = {"config_hash": "abc123", "kind": "test"}
        path = tmp_path / "model.ckpt"
        save_arrays(path, arrays, meta)
        loaded, loaded_meta = load_arrays(path)
        assert loaded_meta == meta
        for name, arr in arrays.items():
            assert loaded[name].dtype == arr.dtype
            assert np.array_equal(loaded[name], arr)

    def test_identical_saves_are_byte_identical(self, tmp_path):
        arrays = {"param/w": np.linspace(0, 1, 7)}
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_arrays(p1, arrays, {"config_hash": "x"})
        save_arrays(p2, arrays, {"config_hash": "x"})
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_foreign_file(self, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"not a checkpoint at all")
        from vqplan.errors import ArtifactMismatchError

        with pytest.raises(ArtifactMismatchError):
            load_arrays(bad)


class TestParamStoreState:
    def test_state_arrays_round_trip(self, tmp_path):
        store = ParamStore()
        init_mlp(store, "net", MLPSpec((2, 3)), make_rng(1))
        w = store["net/w0"]
        w.grad = np.ones_like(w.data)
        store["net/b0"].grad = np.ones(3)
        store.adam_step(1e-3)
        path = tmp_path / "s.ckpt"
        save_arrays(path, store.state_arrays(), {"step": store.step})

        other = ParamStore()
        init_mlp(other, "net", MLPSpec((2, 3)), make_rng(99))
        arrays, meta = load_arrays(path)
        other.load_state_arrays(arrays)
        other.step = meta["step"]
        for name in store.names():
            assert np.array_equal(store[name].data, other[name].data)
        assert np.array_equal(store.moment1["net/w0"], other.moment1["net/w0"])
