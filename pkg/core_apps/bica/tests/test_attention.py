"""
Tests for O4C, C4O, the prefix and the KNN context path.
"""
import math

import torch
from django.test import SimpleTestCase

from core_apps.bica.attention import (
    ContextualAttention,
    GatedAttention,
    PrefixProjection,
    assemble_prefix,
    c4o,
    knn_context,
    o4c,
)
from core_apps.common.exceptions import ValidationFailure


def identity_attention(d):
    attention = GatedAttention(d).double()
    with torch.no_grad():
        for proj in (attention.q_proj, attention.k_proj, attention.v_proj):
            proj.weight.copy_(torch.eye(d, dtype=torch.float64))
            proj.bias.zero_()
    return attention


def mixture_oracle(queries, keys):
    d = len(queries[0])
    rows = []
    for q in queries:
        scores = [sum(a * b for a, b in zip(q, k)) / math.sqrt(d) for k in keys]
        exps = [math.exp(s) for s in scores]
        total = sum(exps)
        rows.append([sum(e / total * k[c] for e, k in zip(exps, keys)) for c in range(d)])
    return rows


class O4CTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)

    def test_single_context_copies_value(self):
        """Test one context feature is copied to every object when gamma is 1."""
        attention = GatedAttention(8)
        vc = torch.randn(1, 8)
        vca = o4c(torch.randn(5, 8), vc, attention)
        self.assertTrue(torch.allclose(vca, attention.v_proj(vc).expand(5, 8)))

    def test_zero_gate_is_exactly_zero(self):
        """Test gamma = 0 switches the path off."""
        attention = GatedAttention(8)
        with torch.no_grad():
            attention.gate.zero_()
        self.assertTrue(torch.equal(o4c(torch.randn(4, 8), torch.randn(3, 8), attention), torch.zeros(4, 8)))

    def test_hand_oracle(self):
        """Test 2 objects over 3 contexts against a softmax mixture."""
        vo = torch.tensor([[0.2, -0.4], [1.0, 0.5]], dtype=torch.float64)
        vc = torch.tensor([[1.0, 0.0], [0.0, 1.0], [0.5, -1.5]], dtype=torch.float64)
        vca = o4c(vo, vc, identity_attention(2))
        expected = torch.tensor(mixture_oracle(vo.tolist(), vc.tolist()), dtype=torch.float64)
        self.assertLess(float((vca - expected).abs().max()), 1e-6)

    def test_attention_rows_sum_to_one(self):
        """Test O4C attention rows are normalized."""
        attention = GatedAttention(8)
        vo, vc = torch.randn(6, 8), torch.randn(4, 8)
        vca, weights = o4c(vo, vc, attention, return_weights=True)
        self.assertEqual(tuple(weights.shape), (1, 6, 4))
        self.assertTrue(torch.equal(vca, o4c(vo, vc, attention)))
        self.assertLess(float((weights.sum(-1) - 1).abs().max()), 1e-6)

    def test_weights_are_per_call(self):
        """Test each call returns its own attention map and leaves no state on the module."""
        attention = GatedAttention(8)
        vc = torch.randn(4, 8)
        _, first = o4c(torch.randn(6, 8), vc, attention, return_weights=True)
        _, second = o4c(torch.randn(2, 8), vc, attention, return_weights=True)
        self.assertEqual(tuple(first.shape), (1, 6, 4))
        self.assertEqual(tuple(second.shape), (1, 2, 4))
        self.assertFalse(hasattr(attention, "weights"))


class C4OTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)

    def test_single_object_copies_value(self):
        """Test a single object maps to its value projection when lambda is 1."""
        attention = GatedAttention(8)
        vo = torch.randn(1, 8)
        self.assertTrue(torch.allclose(c4o(torch.randn(1, 8), vo, attention), attention.v_proj(vo)))

    def test_zero_gate(self):
        """Test lambda = 0 switches the path off."""
        attention = GatedAttention(8)
        with torch.no_grad():
            attention.gate.zero_()
        self.assertTrue(torch.equal(c4o(torch.randn(3, 8), torch.randn(3, 8), attention), torch.zeros(3, 8)))

    def test_hand_oracle(self):
        """Test 3 objects against a softmax mixture."""
        vca = torch.tensor([[0.3, 0.1], [-1.0, 2.0], [0.0, 0.0]], dtype=torch.float64)
        vo = torch.tensor([[1.0, 1.0], [2.0, -1.0], [0.0, 0.5]], dtype=torch.float64)
        voa = c4o(vca, vo, identity_attention(2))
        expected = torch.tensor(mixture_oracle(vca.tolist(), vo.tolist()), dtype=torch.float64)
        self.assertLess(float((voa - expected).abs().max()), 1e-6)


class PrefixTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)

    def test_concatenated_width(self):
        """Test Va is three model widths wide."""
        vo = torch.randn(5, 8)
        prefix = assemble_prefix(vo, vo, vo, PrefixProjection(8, 12))
        self.assertEqual(tuple(prefix.va.shape), (5, 24))
        self.assertEqual(tuple(prefix.tokens.shape), (5, 1, 12))

    def test_identity_block_reproduces_instance_slice(self):
        """Test weights [I; 0; 0] project Va back to Vo."""
        projection = PrefixProjection(4, 4)
        with torch.no_grad():
            projection.proj.weight.zero_()
            projection.proj.weight[:4].copy_(torch.eye(4))
        vo = torch.randn(3, 4)
        prefix = assemble_prefix(vo, torch.randn(3, 4), torch.randn(3, 4), projection)
        self.assertTrue(torch.equal(prefix.tokens[:, 0], vo))

    def test_three_token_variant(self):
        """Test the three-token prefix projects each part separately."""
        prefix = assemble_prefix(*[torch.randn(2, 4)] * 3, PrefixProjection(4, 6, prefix_tokens=3))
        self.assertEqual(tuple(prefix.tokens.shape), (2, 3, 6))


class KnnContextTests(SimpleTestCase):
    def test_all_contexts_is_mean(self):
        """Test K = n_c averages every context feature."""
        vc = torch.randn(5, 4)
        out = knn_context(torch.zeros(2, 4), vc, torch.rand(2, 3), torch.rand(5, 3), k=5)
        self.assertTrue(torch.allclose(out, vc.mean(0).expand(2, 4)))

    def test_hand_picked_neighbours(self):
        """Test one object picks its two nearest of five contexts, ties by index."""
        ctx_pos = torch.tensor([[0.0, 0, 0], [1.0, 0, 0], [5.0, 0, 0], [0.4, 0, 0], [9.0, 0, 0]])
        vc = torch.arange(5, dtype=torch.float32).unsqueeze(1).repeat(1, 2)
        out = knn_context(torch.zeros(1, 2), vc, torch.tensor([[0.5, 0.0, 0.0]]), ctx_pos, k=2)
        self.assertTrue(torch.allclose(out, torch.tensor([[1.5, 1.5]])))

    def test_k_too_large(self):
        """Test K above the context count is rejected."""
        with self.assertRaises(ValidationFailure):
            knn_context(torch.zeros(1, 2), torch.zeros(3, 2), torch.zeros(1, 3), torch.zeros(3, 3), k=4)


class ContextualAttentionTests(SimpleTestCase):
    def setUp(self):
        torch.manual_seed(0)
        g = torch.Generator().manual_seed(1)
        self.vo = torch.randn(6, 8, generator=g)
        self.vc = torch.randn(4, 8, generator=g)
        self.pos = torch.rand(6, 3, generator=g)
        self.ctx_pos = torch.rand(4, 3, generator=g)

    def test_gate_off_prefix_depends_only_on_instances(self):
        """Test zero gates make the prefix independent of the context."""
        module = ContextualAttention(8, 8)
        with torch.no_grad():
            module.gamma.zero_()
            module.lambda_.zero_()
        a = module(self.vo, self.vc, self.pos, self.ctx_pos)
        b = module(self.vo, torch.randn(4, 8), self.pos, self.ctx_pos)
        self.assertTrue(torch.equal(a.tokens, b.tokens))
        self.assertTrue(torch.equal(a.va[:, 8:], torch.zeros(6, 16)))

    def test_variant_lattice(self):
        """Test each variant fills exactly its parts of Va."""
        filled = {"vo": (False, False), "vo+knn": (True, False), "vo+o4c": (True, False), "full": (True, True)}
        for variant, (has_vca, has_voa) in filled.items():
            module = ContextualAttention(8, 8, variant=variant, knn_k=2)
            va = module(self.vo, self.vc, self.pos, self.ctx_pos).va
            self.assertTrue(torch.equal(va[:, :8], self.vo))
            self.assertEqual(bool(va[:, 8:16].abs().sum() > 0), has_vca, variant)
            self.assertEqual(bool(va[:, 16:].abs().sum() > 0), has_voa, variant)

    def test_unknown_variant(self):
        """Test unknown variants are rejected."""
        with self.assertRaises(ValidationFailure):
            ContextualAttention(8, 8, variant="vo+c4o")
