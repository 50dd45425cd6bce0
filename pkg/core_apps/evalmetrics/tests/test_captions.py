"""
Tests for BLEU-4, CIDEr and ROUGE-L.
"""
import math

from django.test import SimpleTestCase

from core_apps.common.exceptions import ValidationFailure
from core_apps.evalmetrics.captions import CiderScorer, bleu4, lcs_length, rouge_l, tokenize


def words(text):
    return text.split()


class TokenizeTests(SimpleTestCase):
    def test_lowercase_and_punctuation(self):
        """Test punctuation is stripped and case folded."""
        self.assertEqual(tokenize("The Red, large box."), ["the", "red", "large", "box"])

    def test_token_lists_pass_through(self):
        """Test pre-tokenized input is kept as is."""
        self.assertEqual(tokenize(["a", "b"]), ["a", "b"])


class BleuTests(SimpleTestCase):
    def test_exact_match(self):
        """Test a candidate equal to its reference scores 1."""
        self.assertAlmostEqual(bleu4(words("the red box is here"), [words("the red box is here")]), 1.0)

    def test_short_candidate_fixture(self):
        """Test the brevity penalty on 'the cat sat' against 'the cat sat down'."""
        score = bleu4(words("the cat sat"), [words("the cat sat down")])
        self.assertAlmostEqual(score, math.exp(-1 / 3), places=6)
        self.assertAlmostEqual(score, 0.7165, places=4)

    def test_no_overlap(self):
        """Test disjoint candidates are epsilon-dominated."""
        self.assertLess(bleu4(words("w x y z"), [words("a b c d")]), 1e-6)

    def test_counts_are_clipped(self):
        """Test repeated words only count as often as in a reference."""
        self.assertLess(bleu4(words("the the the the"), [words("the cat is here")]), 1e-3)

    def test_empty_candidate(self):
        """Test an empty candidate scores 0."""
        self.assertEqual(bleu4([], [words("a b")]), 0.0)


class RougeTests(SimpleTestCase):
    def test_lcs(self):
        """Test the LCS of 'a b c d' and 'a c d e' is 3."""
        self.assertEqual(lcs_length(words("a b c d"), words("a c d e")), 3)

    def test_fixture(self):
        """Test equal precision and recall of 3/4 give F = 0.75."""
        self.assertAlmostEqual(rouge_l(words("a b c d"), [words("a c d e")]), 0.75)

    def test_identical_and_disjoint(self):
        """Test identical sentences score 1 and disjoint ones 0."""
        self.assertAlmostEqual(rouge_l(words("a b c"), [words("a b c")]), 1.0)
        self.assertEqual(rouge_l(words("a b c"), [words("x y z")]), 0.0)

    def test_best_reference_wins(self):
        """Test the maximum over references is returned."""
        refs = [words("x y z"), words("a b c")]
        self.assertAlmostEqual(rouge_l(words("a b c"), refs), 1.0)


class CiderTests(SimpleTestCase):
    def test_identical_caption_one_caption_corpus(self):
        """Test a candidate equal to the sole reference scores 10."""
        caption = words("the red small box is next to the wall")
        scorer = CiderScorer([[caption]])
        self.assertAlmostEqual(scorer.score(caption, [caption]), 10.0, places=6)

    def test_zero_overlap(self):
        """Test no shared n-gram scores 0."""
        scorer = CiderScorer([[words("a b c d")]])
        self.assertEqual(scorer.score(words("w x y z"), [words("a b c d")]), 0.0)

    def test_two_document_corpus(self):
        """Test a partial overlap against a hand computation of the weighted cosines."""
        scorer = CiderScorer([[words("a b c d")], [words("a b e f")]])
        w = math.log(3 / 2) + 1
        expected = 10 * (1 / (1 + w**2) + 1 / (1 + 2 * w**2)) / 4
        self.assertAlmostEqual(scorer.score(words("a b e f"), [words("a b c d")]), expected, places=9)

    def test_max_and_mean_reduction(self):
        """Test 'max' takes the best reference and 'mean' averages."""
        refs = [words("a b c d"), words("w x y z")]
        self.assertAlmostEqual(CiderScorer([refs]).score(words("a b c d"), refs), 10.0)
        self.assertAlmostEqual(CiderScorer([refs], reduce="mean").score(words("a b c d"), refs), 5.0)

    def test_empty_corpus(self):
        """Test an empty corpus is rejected."""
        with self.assertRaises(ValidationFailure):
            CiderScorer([])

    def test_range(self):
        """Test scores stay within [0, 10]."""
        corpus = [[words("the red box is big")], [words("the blue box is small")]]
        scorer = CiderScorer(corpus)
        for candidate in ("the red box", "box box box box", "the blue box is big"):
            score = scorer.score(words(candidate), corpus[0])
            self.assertGreaterEqual(score, 0.0)
            self.assertLessEqual(score, 10.0 + 1e-9)
