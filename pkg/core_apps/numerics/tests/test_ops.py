"""
Tests for the differentiable primitives.
"""
import math

import torch
from django.test import SimpleTestCase

from core_apps.common.exceptions import DivergenceError, ShapeError
from core_apps.numerics.ops import (
    MASK_VALUE,
    Linear,
    MultiHeadAttention,
    backward,
    layer_norm,
    linear,
    scaled_dot_product_attention,
    softmax,
)


class LinearTests(SimpleTestCase):
    def test_identity_weight_returns_input(self):
        """Test identity weight and zero bias reproduce the input."""
        x = torch.randn(5, 4)
        y = linear(x, torch.eye(4), torch.zeros(4))
        self.assertTrue(torch.equal(x, y))

    def test_zero_input_returns_bias(self):
        """Test a zero input yields the bias on every row."""
        b = torch.tensor([1.0, -2.0])
        y = linear(torch.zeros(3, 4), torch.randn(4, 2), b)
        self.assertTrue(torch.equal(y, b.expand(3, 2)))

    def test_matches_naive_matmul(self):
        """Test the layer matches a triple-loop matrix product."""
        g = torch.Generator().manual_seed(0)
        x = torch.randn(3, 4, generator=g)
        w = torch.randn(4, 2, generator=g)
        b = torch.randn(2, generator=g)
        y = linear(x, w, b)
        for i in range(3):
            for j in range(2):
                expected = sum(float(x[i, k]) * float(w[k, j]) for k in range(4)) + float(b[j])
                self.assertLess(abs(float(y[i, j]) - expected), 1e-6)

    def test_shape_mismatch_raises(self):
        """Test non-conforming widths raise a structured error."""
        with self.assertRaises(ShapeError):
            linear(torch.zeros(2, 3), torch.zeros(4, 2))

    def test_linear_module_initialization(self):
        """Test weights lie in the fan-in bound and biases start at zero."""
        torch.manual_seed(0)
        layer = Linear(16, 8)
        self.assertLessEqual(float(layer.weight.abs().max()), 1 / math.sqrt(16))
        self.assertTrue(torch.equal(layer.bias, torch.zeros(8)))


class LayerNormTests(SimpleTestCase):
    def test_constant_row_returns_beta(self):
        """Test a constant row normalizes to zero so the output is beta."""
        beta = torch.tensor([0.5, -1.0, 2.0])
        out = layer_norm(torch.full((1, 3), 7.0), torch.ones(3), beta)
        self.assertTrue(torch.allclose(out, beta.unsqueeze(0), atol=1e-6))

    def test_rows_are_normalized(self):
        """Test unit gamma and zero beta give zero mean and unit variance."""
        x = torch.randn(6, 32, generator=torch.Generator().manual_seed(1)) * 3 + 2
        out = layer_norm(x, torch.ones(32), torch.zeros(32))
        self.assertLess(float(out.mean(dim=-1).abs().max()), 1e-6)
        var = out.var(dim=-1, unbiased=False)
        self.assertLess(float((var - 1).abs().max()), 1e-4)

    def test_matches_scalar_oracle(self):
        """Test against a hand computed mean/variance normalization."""
        row = [1.0, 2.0, 4.0, 9.0]
        mean = sum(row) / 4
        var = sum((v - mean) ** 2 for v in row) / 4
        expected = [(v - mean) / math.sqrt(var + 1e-5) for v in row]
        out = layer_norm(torch.tensor([row]), torch.ones(4), torch.zeros(4))
        for got, want in zip(out[0].tolist(), expected):
            self.assertAlmostEqual(got, want, places=5)


class SoftmaxTests(SimpleTestCase):
    def test_uniform(self):
        """Test equal logits give equal probabilities."""
        self.assertTrue(torch.allclose(softmax(torch.zeros(2)), torch.tensor([0.5, 0.5])))

    def test_shift_invariance(self):
        """Test adding a constant does not change the output."""
        x = torch.randn(4, 7, generator=torch.Generator().manual_seed(2))
        self.assertTrue(torch.allclose(softmax(x), softmax(x + 123.0), atol=1e-7))

    def test_closed_form(self):
        """Test [0, ln 3] maps to [0.25, 0.75]."""
        out = softmax(torch.tensor([0.0, math.log(3.0)], dtype=torch.float64))
        self.assertAlmostEqual(float(out[0]), 0.25, places=12)
        self.assertAlmostEqual(float(out[1]), 0.75, places=12)

    def test_rows_sum_to_one(self):
        """Test outputs are probabilities along the axis."""
        out = softmax(torch.randn(5, 9, generator=torch.Generator().manual_seed(3)) * 10)
        self.assertTrue(bool((out >= 0).all() and (out <= 1).all()))
        self.assertLess(float((out.sum(-1) - 1).abs().max()), 1e-6)


class AttentionTests(SimpleTestCase):
    def test_single_key_copies_value(self):
        """Test with one key every query receives that value with weight 1."""
        q = torch.randn(3, 8)
        k = torch.randn(1, 8)
        v = torch.randn(1, 8)
        out, weights = scaled_dot_product_attention(q, k, v, n_heads=2)
        self.assertTrue(torch.equal(weights, torch.ones(2, 3, 1)))
        self.assertTrue(torch.allclose(out, v.expand(3, 8)))

    def test_mask_selects_single_key(self):
        """Test masking all keys but one gives one-hot weights."""
        mask = torch.full((2, 3), MASK_VALUE)
        mask[:, 1] = 0.0
        _, weights = scaled_dot_product_attention(
            torch.randn(2, 4), torch.randn(3, 4), torch.randn(3, 4), n_heads=1, mask=mask
        )
        expected = torch.tensor([[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]])
        self.assertTrue(torch.allclose(weights[0], expected))

    def test_fully_masked_row_is_uniform(self):
        """Test a row with every key masked gets uniform weights instead of NaN."""
        mask = torch.zeros(2, 4)
        mask[1] = MASK_VALUE
        _, weights = scaled_dot_product_attention(
            torch.randn(2, 4), torch.randn(4, 4), torch.randn(4, 4), n_heads=1, mask=mask
        )
        self.assertTrue(torch.allclose(weights[0, 1], torch.full((4,), 0.25)))

    def test_hand_oracle(self):
        """Test two queries over three keys match softmax(QK^T / sqrt(d)) V."""
        q = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        k = torch.tensor([[1.0, 1.0], [0.0, 2.0], [-1.0, 0.5]], dtype=torch.float64)
        v = torch.tensor([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], dtype=torch.float64)
        out, _ = scaled_dot_product_attention(q, k, v, n_heads=1)
        for i in range(2):
            scores = [sum(q[i, c] * k[j, c] for c in range(2)) / math.sqrt(2) for j in range(3)]
            exps = [math.exp(float(s)) for s in scores]
            total = sum(exps)
            for c in range(2):
                expected = sum(exps[j] / total * float(v[j, c]) for j in range(3))
                self.assertLess(abs(float(out[i, c]) - expected), 1e-6)

    def test_heads_must_divide_width(self):
        """Test widths not divisible by the head count are rejected."""
        with self.assertRaises(ShapeError):
            MultiHeadAttention(10, 4)

    def test_module_weights_rows_sum_to_one(self):
        """Test projected attention returns per-head normalized weights."""
        torch.manual_seed(0)
        mha = MultiHeadAttention(8, 2)
        out, weights = mha(torch.randn(5, 8), torch.randn(7, 8), torch.randn(7, 8))
        self.assertEqual(tuple(out.shape), (5, 8))
        self.assertEqual(tuple(weights.shape), (2, 5, 7))
        self.assertLess(float((weights.sum(-1) - 1).abs().max()), 1e-6)


class GradientTests(SimpleTestCase):
    def test_primitives_pass_gradcheck(self):
        """Test linear, layer_norm, softmax and attention agree with finite differences."""
        g = torch.Generator().manual_seed(4)

        def rand(*shape):
            return torch.randn(*shape, generator=g, dtype=torch.float64, requires_grad=True)

        x, w, b = rand(3, 4), rand(4, 2), rand(2)
        self.assertTrue(torch.autograd.gradcheck(linear, (x, w, b), eps=1e-6, atol=1e-5))
        gamma, beta = rand(4), rand(4)
        self.assertTrue(
            torch.autograd.gradcheck(lambda a, c, d: layer_norm(a, c, d), (x, gamma, beta))
        )
        self.assertTrue(torch.autograd.gradcheck(lambda a: softmax(a, -1), (rand(3, 5),)))
        q, k, v = rand(2, 4), rand(3, 4), rand(3, 4)
        self.assertTrue(
            torch.autograd.gradcheck(
                lambda a, c, d: scaled_dot_product_attention(a, c, d, 2)[0], (q, k, v)
            )
        )

    def test_outer_product_gradient(self):
        """Test d sum(xW) / dW is the outer product of x with ones."""
        x = torch.tensor([[1.0, 2.0, 3.0]])
        layer = Linear(3, 2)
        grads = backward(layer(x).sum(), layer.named_parameters())
        self.assertTrue(torch.equal(grads["weight"], x.t().expand(3, 2)))
        self.assertTrue(torch.equal(grads["bias"], torch.ones(2)))

    def test_unreached_parameter_has_zero_gradient(self):
        """Test parameters the loss does not depend on report zero gradients."""
        used, unused = Linear(3, 1), Linear(3, 1)
        named = list(used.named_parameters(prefix="used")) + list(
            unused.named_parameters(prefix="unused")
        )
        grads = backward(used(torch.ones(1, 3)).sum(), named)
        self.assertTrue(torch.equal(grads["unused.weight"], torch.zeros(3, 1)))

    def test_non_finite_loss_raises(self):
        """Test a NaN loss aborts with a divergence error."""
        p = torch.nn.Parameter(torch.ones(1))
        with self.assertRaises(DivergenceError):
            backward((p * float("nan")).sum())
