"""Autodiff core: forward values, gradients vs finite differences,
GRU/MLP composites, and the checkpoint format."""

import numpy as np
import pytest

from m3net import autodiff as ad
from m3net.autodiff import (
    NumericError,
    ParamStore,
    ShapeError,
    Tensor,
    backward,
    gru_cell,
    load_checkpoint,
    mlp_forward,
    parameter,
    save_checkpoint,
)

RNG = np.random.default_rng(42)


def fd_grad(f, x0, step=1e-6):
    """Central finite differences of scalar f at flat array x0."""
    g = np.zeros_like(x0)
    for i in range(x0.size):
        up = x0.copy()
        dn = x0.copy()
        up.flat[i] += step
        dn.flat[i] -= step
        g.flat[i] = (f(up) - f(dn)) / (2 * step)
    return g


def check_grad(build, x0, step=1e-6, rtol=1e-4, atol=1e-7):
    """build(x: Tensor) -> scalar Tensor; compares analytic vs numeric."""
    x = parameter(x0)
    loss = build(x)
    backward(loss)
    analytic = x.grad.copy()
    numeric = fd_grad(lambda v: float(build(parameter(v)).data), x0, step)
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)


def quadratic_probe(y):
    """A smooth scalar with nonuniform weights, so grads aren't trivial."""
    w = np.arange(1.0, y.data.size + 1).reshape(y.shape)
    return ad.sum_all(ad.mul(ad.cmul(y, w), y))


class TestForwardValues:
    def test_softmax_uniform(self):
        y = ad.softmax(Tensor([[0.0, 0.0, 0.0]]))
        assert np.allclose(y.data, 1.0 / 3.0)

    def test_scatter_sum_example(self):
        y = ad.scatter_sum(Tensor([[1.0], [2.0], [3.0]]), [0, 0, 1], 2)
        assert np.array_equal(y.data, [[3.0], [3.0]])

    def test_sigmoid_grad_at_zero(self):
        x = parameter(np.zeros((1, 1)))
        backward(ad.sum_all(ad.sigmoid(x)))
        assert x.grad[0, 0] == pytest.approx(0.25)

    def test_gather_rows(self):
        y = ad.gather_rows(Tensor([[1.0], [2.0], [3.0]]), [2, 0, 2])
        assert np.array_equal(y.data, [[3.0], [1.0], [3.0]])

    def test_log_softmax_matches_log_of_softmax(self):
        x = RNG.normal(size=(4, 6))
        a = ad.log_softmax(Tensor(x)).data
        b = np.log(ad.softmax(Tensor(x)).data)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


# fixed constants so finite-difference re-evaluations see the same graph
C53 = np.random.default_rng(101).normal(size=(5, 3))
C34 = np.random.default_rng(102).normal(size=(3, 4))
C45 = np.random.default_rng(103).normal(size=(4, 5))
C25 = np.random.default_rng(104).normal(size=(2, 5))


class TestGradients:
    @pytest.mark.parametrize("op", [
        lambda x: ad.matmul(x, Tensor(C53)),
        lambda x: ad.matmul(Tensor(C34), x),
        lambda x: ad.add(x, Tensor(C45)),
        lambda x: ad.sub(Tensor(C45), x),
        lambda x: ad.mul(x, Tensor(C45)),
        lambda x: ad.cmul(x, C45),
        lambda x: ad.scale(x, -1.7),
        lambda x: ad.sigmoid(x),
        lambda x: ad.tanh(x),
        lambda x: ad.softplus(x),
        lambda x: ad.softmax(x),
        lambda x: ad.log_softmax(x),
        lambda x: ad.gather_rows(x, [3, 0, 0, 2]),
        lambda x: ad.scatter_sum(x, [1, 0, 1, 5], 7),
        lambda x: ad.slice_cols(x, 1, 4),
        lambda x: ad.concat([x, Tensor(C25)], axis=0),
    ])
    def test_primitive_vs_finite_differences(self, op):
        x0 = np.random.default_rng(7).normal(size=(4, 5))
        check_grad(lambda x: quadratic_probe(op(x)), x0)

    def test_rowscale_grad_both_sides(self):
        rng = np.random.default_rng(9)
        w0 = rng.normal(size=(4, 1))
        x0 = rng.normal(size=(4, 5))
        check_grad(lambda x: quadratic_probe(ad.rowscale(x, Tensor(w0))), x0)
        check_grad(lambda w: quadratic_probe(ad.rowscale(Tensor(x0), w)), w0)

    def test_add_bias_grad(self):
        rng = np.random.default_rng(10)
        b0 = rng.normal(size=5)
        x0 = rng.normal(size=(4, 5))
        check_grad(lambda x: quadratic_probe(ad.add_bias(x, Tensor(b0))), x0)
        check_grad(lambda b: quadratic_probe(ad.add_bias(Tensor(x0), b)), b0)

    def test_relu_grad_away_from_kink(self):
        x0 = np.random.default_rng(11).normal(size=(4, 5))
        x0[np.abs(x0) < 0.05] = 0.1  # keep FD away from the kink
        check_grad(lambda x: quadratic_probe(ad.relu(x)), x0)

    def test_absval_grad_away_from_kink(self):
        x0 = np.random.default_rng(12).normal(size=(4, 5))
        x0[np.abs(x0) < 0.05] = -0.2
        check_grad(lambda x: quadratic_probe(ad.absval(x)), x0)

    def test_log_grad(self):
        x0 = np.abs(np.random.default_rng(13).normal(size=(4, 5))) + 0.5
        check_grad(lambda x: quadratic_probe(ad.log(x)), x0)

    def test_mean_all_grad(self):
        x0 = np.random.default_rng(14).normal(size=(4, 5))
        check_grad(lambda x: ad.mean_all(ad.mul(x, x)), x0)

    def test_reused_node_accumulates(self):
        # y appears twice in the graph; d/dx (x*x) = 2x via accumulation
        x = parameter(np.array([[3.0]]))
        backward(ad.sum_all(ad.mul(x, x)))
        assert x.grad[0, 0] == pytest.approx(6.0)


class TestTopkSoftmax:
    def test_grad_through_kept_entries(self):
        x0 = np.array([[2.0, -1.0, 0.5, 0.1]])
        check_grad(lambda x: quadratic_probe(ad.topk_softmax(x, 2)), x0)

    def test_tie_breaks_to_lower_index(self):
        y = ad.topk_softmax(Tensor([[1.0, 1.0, 1.0]]), 1).data
        assert np.array_equal(y, [[1.0, 0.0, 0.0]])

    def test_k_equals_width_is_plain_softmax(self):
        x = RNG.normal(size=(5, 4))
        a = ad.topk_softmax(Tensor(x), 4).data
        b = ad.softmax(Tensor(x)).data
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)

    def test_bad_k_rejected(self):
        with pytest.raises(ShapeError):
            ad.topk_softmax(Tensor([[1.0, 2.0]]), 3)


class TestGru:
    def params(self, h, seed=0):
        rng = np.random.default_rng(seed)
        ps = ParamStore()
        ps.add_gru("g", rng, h)
        return ps

    def test_zero_params_halve_state(self):
        h = 4
        ps = ParamStore()
        for k in ("W_z", "U_z", "W_r", "U_r", "W_h", "U_h"):
            ps.add(f"g.{k}", np.zeros((h, h)))
        for k in ("b_z", "b_r", "b_h"):
            ps.add(f"g.{k}", np.zeros(h))
        h_prev = Tensor(RNG.normal(size=(3, h)))
        out = gru_cell(h_prev, Tensor(np.zeros((3, h))), ps.gru("g"))
        np.testing.assert_allclose(out.data, 0.5 * h_prev.data, rtol=1e-12)

    def test_batch_of_two_equals_stacked_singles(self):
        ps = self.params(4)
        x = RNG.normal(size=(2, 4))
        h = RNG.normal(size=(2, 4))
        full = gru_cell(Tensor(h), Tensor(x), ps.gru("g")).data
        rows = [gru_cell(Tensor(h[i:i + 1]), Tensor(x[i:i + 1]),
                         ps.gru("g")).data for i in range(2)]
        np.testing.assert_allclose(full, np.concatenate(rows), rtol=1e-12)

    def test_all_parameter_grads_vs_finite_differences(self):
        h = 3
        rng = np.random.default_rng(5)
        x0 = rng.normal(size=(2, h))
        h0 = rng.normal(size=(2, h))

        base = self.params(h, seed=5)
        names = list(base.keys())

        def loss_given(name, value):
            ps = ParamStore()
            for n in names:
                ps.add(n, value if n == name else base[n].data)
            out = gru_cell(Tensor(h0), Tensor(x0), ps.gru("g"))
            return quadratic_probe(out)

        for name in names:
            ps = ParamStore()
            for n in names:
                ps.add(n, base[n].data)
            out = gru_cell(Tensor(h0), Tensor(x0), ps.gru("g"))
            backward(quadratic_probe(out))
            analytic = ps[name].grad
            numeric = fd_grad(
                lambda v: float(loss_given(name, v).data),
                base[name].data.copy(), step=1e-5)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-4,
                                       atol=1e-8, err_msg=name)


class TestMlp:
    def test_identity_layers_pass_relu(self):
        h = 3
        layers = (Tensor(np.eye(h)), Tensor(np.zeros(h)),
                  Tensor(np.eye(h)), Tensor(np.zeros(h)))
        x = np.array([[-1.0, 0.5, 2.0]])
        out = mlp_forward(Tensor(x), layers)
        np.testing.assert_allclose(out.data, np.maximum(x, 0.0))

    def test_zero_weights_give_bias(self):
        layers = (Tensor(np.zeros((3, 4))), Tensor(np.zeros(4)),
                  Tensor(np.zeros((4, 2))), Tensor([5.0, -1.0]))
        out = mlp_forward(Tensor(RNG.normal(size=(6, 3))), layers)
        assert np.allclose(out.data, [5.0, -1.0])

    def test_grad_vs_finite_differences(self):
        rng = np.random.default_rng(21)
        x0 = rng.normal(size=(3, 4))
        w1, b1 = rng.normal(size=(4, 5)), rng.normal(size=5)
        w2, b2 = rng.normal(size=(5, 2)), rng.normal(size=2)

        def f(x):
            layers = (Tensor(w1), Tensor(b1), Tensor(w2), Tensor(b2))
            return quadratic_probe(mlp_forward(x, layers))
        check_grad(f, x0)

    def test_output_activations(self):
        rng = np.random.default_rng(22)
        layers = tuple(Tensor(a) for a in
                       (rng.normal(size=(3, 4)), rng.normal(size=4),
                        rng.normal(size=(4, 2)), rng.normal(size=2)))
        x = Tensor(rng.normal(size=(5, 3)))
        sig = mlp_forward(x, layers, "sigmoid").data
        assert np.all((sig > 0) & (sig < 1))
        smax = mlp_forward(x, layers, "softmax").data
        np.testing.assert_allclose(smax.sum(axis=1), 1.0, rtol=1e-12)
        with pytest.raises(ValueError):
            mlp_forward(x, layers, "gelu")


class TestErrorsAndTape:
    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))

    def test_nan_input_rejected(self):
        with pytest.raises(NumericError):
            Tensor([[np.nan]])

    def test_inf_from_forward_rejected(self):
        with pytest.raises(NumericError):
            ad.log(Tensor([[0.0]]))  # log(0) -> -inf

    def test_backward_requires_scalar(self):
        x = parameter(np.ones((2, 2)))
        with pytest.raises(ShapeError):
            backward(ad.mul(x, x))

    def test_backward_visits_diamond_once(self):
        # diamond: two paths from x to the loss; correct grad means the
        # shared node's backward ran exactly once with the summed grad
        x = parameter(np.array([[2.0]]))
        shared = ad.scale(x, 3.0)
        loss = ad.sum_all(ad.add(shared, ad.mul(shared, shared)))
        backward(loss)
        # d/dx (3x + 9x^2) = 3 + 18x = 39
        assert x.grad[0, 0] == pytest.approx(39.0)

    def test_constants_collect_no_grad(self):
        c = Tensor(np.ones((2, 2)))
        x = parameter(np.ones((2, 2)))
        backward(ad.sum_all(ad.mul(x, c)))
        assert c.grad is None


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        ps = ParamStore()
        ps.add_mlp("head", rng, 4, 8, 2)
        ps.add_gru("core", rng, 8)
        path = tmp_path / "model.ckpt"
        save_checkpoint(ps, path, header={"note": 1})
        back, header = load_checkpoint(path)
        assert header == {"note": 1}
        assert set(back) == set(ps)
        for name in ps:
            assert np.array_equal(back[name].data, ps[name].data)
            assert back[name].requires_grad

    def test_wrong_format_rejected(self, tmp_path):
        p = tmp_path / "bad.ckpt"
        p.write_text('{"format": "something-else", "version": 1}')
        with pytest.raises(ValueError):
            load_checkpoint(p)

    def test_param_count(self):
        ps = ParamStore()
        ps.add_mlp("m", np.random.default_rng(0), 4, 8, 2)
        assert ps.n_params() == 4 * 8 + 8 + 8 * 2 + 2
