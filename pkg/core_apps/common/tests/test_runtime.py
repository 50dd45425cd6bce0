"""
Tests for seeding and the ordered thread-pool map.
"""
import time

import torch
from django.test import SimpleTestCase, override_settings

from core_apps.common.exceptions import (
    DivergenceError,
    FormatVersionError,
    ShapeError,
    ValidationFailure,
)
from core_apps.common.runtime import git_describe, ordered_map, resolve_threads, seed_everything


def _slow_square(x):
    time.sleep(0.01 * (5 - x))
    return x * x


class RuntimeTests(SimpleTestCase):
    def test_seed_everything_is_reproducible(self):
        """Test two seeded draws are identical."""
        seed_everything(11)
        first = torch.randn(5)
        seed_everything(11)
        self.assertTrue(torch.equal(first, torch.randn(5)))

    def test_ordered_map_keeps_input_order(self):
        """Test results come back in input order regardless of threads."""
        items = [0, 1, 2, 3, 4]
        self.assertEqual(ordered_map(_slow_square, items, threads=1), [0, 1, 4, 9, 16])
        self.assertEqual(ordered_map(_slow_square, items, threads=4), [0, 1, 4, 9, 16])

    @override_settings(BICA_THREADS=3)
    def test_resolve_threads_defaults_to_settings(self):
        """Test the thread count falls back to settings and is at least one."""
        self.assertEqual(resolve_threads(), 3)
        self.assertEqual(resolve_threads(0), 1)

    def test_git_describe_returns_string(self):
        """Test git describe never raises."""
        self.assertIsInstance(git_describe(), str)


class ExceptionTests(SimpleTestCase):
    def test_exit_codes(self):
        """Test each error family carries its exit code."""
        self.assertEqual(ValidationFailure("x").exit_code, 2)
        self.assertEqual(ShapeError("x").exit_code, 2)
        self.assertEqual(DivergenceError("x").exit_code, 3)
        self.assertEqual(FormatVersionError("x").exit_code, 4)

    def test_shape_error_is_value_error(self):
        """Test shape errors are also ValueErrors."""
        self.assertIsInstance(ShapeError("x"), ValueError)

    def test_divergence_diagnostics(self):
        """Test diagnostics default to an empty dict."""
        self.assertEqual(DivergenceError("x").diagnostics, {})
