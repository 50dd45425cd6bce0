"""
Caption metrics: BLEU-4, CIDEr and ROUGE-L over token lists.

CIDEr here is the consensus formulation (no length penalty, no count
clipping) with a smoothed inverse document frequency
``log((1 + N) / (1 + df)) + 1`` and the usual x10 scale, so a candidate
identical to a reference of four or more tokens scores exactly 10.
"""
import math
import re
from collections import Counter

from core_apps.common.exceptions import ValidationFailure

MAX_N = 4
BLEU_EPSILON = 1e-9
CIDER_SCALE = 10.0
ROUGE_BETA = 1.2

_PUNCTUATION = re.compile(r"[^\w\s<>]")


def tokenize(text):
    """Lowercase, strip punctuation and split on whitespace."""
    if not isinstance(text, str):
        return [str(t) for t in text]
    return _PUNCTUATION.sub(" ", text.lower()).split()


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _closest_length(length, references):
    return min((abs(len(r) - length), len(r)) for r in references)[1]


def bleu4(candidate, references, epsilon=BLEU_EPSILON):
    """
    Geometric mean of clipped 1..4-gram precisions times the brevity penalty.

    A zero precision is replaced by ``epsilon``; an order the candidate is too
    short to contain counts as precision 1.

    Example:
        >>> round(bleu4("the cat sat".split(), ["the cat sat down".split()]), 4)
        0.7165
    """
    candidate = list(candidate)
    if not candidate or not references:
        return 0.0
    log_precision = 0.0
    for n in range(1, MAX_N + 1):
        counts = ngrams(candidate, n)
        total = sum(counts.values())
        if total == 0:
            continue
        max_ref = Counter()
        for ref in references:
            max_ref |= ngrams(list(ref), n)
        clipped = sum(min(c, max_ref[g]) for g, c in counts.items())
        log_precision += math.log(clipped / total if clipped else epsilon)
    ref_length = _closest_length(len(candidate), references)
    penalty = 1.0 if len(candidate) > ref_length else math.exp(1 - ref_length / len(candidate))
    return penalty * math.exp(log_precision / MAX_N)


def lcs_length(a, b):
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b):
            current.append(previous[j] + 1 if x == y else max(previous[j + 1], current[j]))
        previous = current
    return previous[-1]


def rouge_l(candidate, references, beta=ROUGE_BETA):
    """LCS F-measure, best over references."""
    candidate = list(candidate)
    best = 0.0
    for ref in references:
        ref = list(ref)
        lcs = lcs_length(candidate, ref)
        if lcs == 0:
            continue
        precision, recall = lcs / len(candidate), lcs / len(ref)
        score = (1 + beta**2) * precision * recall / (recall + beta**2 * precision)
        best = max(best, score)
    return best


class CiderScorer:
    """
    CIDEr with document frequencies taken from a fixed reference corpus.

    Each document is the reference set of one object. The same scorer backs
    the SCST reward and the evaluation report.

    **Attributes:**
        - n_documents (int): number of reference sets in the corpus.
        - document_frequency (Counter): n-gram to number of documents containing it.
        - reduce (str): ``max`` or ``mean`` over the references of one object.
    """

    def __init__(self, corpus, reduce="max"):
        corpus = [[list(ref) for ref in refs] for refs in corpus]
        if not corpus:
            raise ValidationFailure("CIDEr needs a non-empty reference corpus.")
        if reduce not in ("max", "mean"):
            raise ValidationFailure(f"Unknown CIDEr reduction {reduce!r}.")
        self.reduce = reduce
        self.n_documents = len(corpus)
        self.document_frequency = Counter()
        for refs in corpus:
            grams = set()
            for ref in refs:
                for n in range(1, MAX_N + 1):
                    grams.update(ngrams(ref, n))
            self.document_frequency.update(grams)

    def idf(self, gram):
        return math.log((1 + self.n_documents) / (1 + self.document_frequency[gram])) + 1

    def _vectors(self, tokens):
        return [
            {g: c * self.idf(g) for g, c in ngrams(tokens, n).items()}
            for n in range(1, MAX_N + 1)
        ]

    @staticmethod
    def _cosine(a, b):
        norm_a = math.sqrt(sum(v * v for v in a.values()))
        norm_b = math.sqrt(sum(v * v for v in b.values()))
        if norm_a == 0 or norm_b == 0:
            return 0.0
        return sum(v * b.get(g, 0.0) for g, v in a.items()) / (norm_a * norm_b)

    def similarity(self, candidate, reference):
        cand, ref = self._vectors(list(candidate)), self._vectors(list(reference))
        return CIDER_SCALE * sum(self._cosine(c, r) for c, r in zip(cand, ref)) / MAX_N

    def score(self, candidate, references):
        if not references:
            raise ValidationFailure("CIDEr needs at least one reference.")
        scores = [self.similarity(candidate, ref) for ref in references]
        return max(scores) if self.reduce == "max" else sum(scores) / len(scores)

    __call__ = score


def cider(candidate, references, scorer):
    """CIDEr of one candidate against its references under ``scorer``'s corpus."""
    return scorer.score(candidate, references)
