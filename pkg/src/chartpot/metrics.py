"""BLEU, ROUGE-1/L and CIDEr over a shared tokenizer, plus the adapter for
external neural scorers.

All metrics lowercase their input and share 13a-style international
tokenization (punctuation split off, periods/commas kept inside numbers).
This shifts absolute scores versus case-sensitive configurations; it is done
for cross-metric consistency.
"""

from __future__ import annotations

import math
import re
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Optional

from .client import ModelEndpoint, TransportError, HttpTransport
from .core import ChartPotError


class EmptyCorpus(ChartPotError):
    pass


class CorpusTooSmall(ChartPotError):
    pass


class ShapeMismatch(ChartPotError):
    pass


@dataclass
class ScoredPair:
    candidate: str
    references: list
    _cand_tokens: Optional[list] = field(default=None, repr=False)
    _ref_tokens: Optional[list] = field(default=None, repr=False)

    def __post_init__(self):
        if not self.references:
            raise ValueError("references must be non-empty")

    @property
    def candidate_tokens(self) -> list:
        if self._cand_tokens is None:
            self._cand_tokens = tokenize(self.candidate)
        return self._cand_tokens

    @property
    def reference_tokens(self) -> list:
        if self._ref_tokens is None:
            self._ref_tokens = [tokenize(r) for r in self.references]
        return self._ref_tokens


@dataclass
class MetricReport:
    bleu: float
    cider: float
    rouge1_f1: float
    rougeL_f1: float
    n: int


# ---------------------------------------------------------------------------
# Tokenizer (13a-style)
# ---------------------------------------------------------------------------

_SYMBOL_RE = re.compile(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])")
_PERIOD_COMMA_PRE = re.compile(r"([^0-9])([\.,])")
_PERIOD_COMMA_POST = re.compile(r"([\.,])([^0-9])")
_DASH_AFTER_DIGIT = re.compile(r"([0-9])(-)")


def tokenize(text: str) -> list:
    """Lowercased international tokenization shared by BLEU/ROUGE/CIDEr."""
    text = unicodedata.normalize("NFC", text).lower()
    text = _SYMBOL_RE.sub(r" \1 ", text)
    text = _PERIOD_COMMA_PRE.sub(r"\1 \2 ", text)
    text = _PERIOD_COMMA_POST.sub(r" \1 \2", text)
    text = _DASH_AFTER_DIGIT.sub(r"\1 \2 ", text)
    return text.split()


def _ngrams(tokens: list, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------

MAX_NGRAM_ORDER = 4


def _closest_ref_len(cand_len: int, ref_lens: list) -> int:
    return min(ref_lens, key=lambda rl: (abs(rl - cand_len), rl))


def corpus_bleu(pairs: list) -> float:
    """Corpus-level 4-gram BLEU with brevity penalty, 0-100 scale.

    Zero counts at orders >= 2 receive exponential smoothing; a corpus with no
    unigram matches at all scores exactly 0.
    """
    if not pairs:
        raise EmptyCorpus("corpus_bleu needs at least one pair")
    correct = [0] * MAX_NGRAM_ORDER
    total = [0] * MAX_NGRAM_ORDER
    sys_len = 0
    ref_len = 0
    for pair in pairs:
        cand = pair.candidate_tokens
        refs = pair.reference_tokens
        sys_len += len(cand)
        ref_len += _closest_ref_len(len(cand), [len(r) for r in refs])
        for n in range(1, MAX_NGRAM_ORDER + 1):
            cand_counts = _ngrams(cand, n)
            if not cand_counts:
                continue
            max_ref: Counter = Counter()
            for ref in refs:
                for gram, count in _ngrams(ref, n).items():
                    if count > max_ref[gram]:
                        max_ref[gram] = count
            total[n - 1] += sum(cand_counts.values())
            correct[n - 1] += sum(
                min(count, max_ref.get(gram, 0)) for gram, count in cand_counts.items()
            )

    if correct[0] == 0:
        return 0.0

    precisions = []
    smooth = 1.0
    for n in range(MAX_NGRAM_ORDER):
        if total[n] == 0:
            break
        if correct[n] == 0:
            smooth *= 2.0
            precisions.append(1.0 / (smooth * total[n]))
        else:
            precisions.append(correct[n] / total[n])
    if not precisions:
        return 0.0

    if sys_len == 0:
        return 0.0
    bp = 1.0 if sys_len >= ref_len else math.exp(1.0 - ref_len / sys_len)
    geo_mean = math.exp(sum(math.log(p) for p in precisions) / len(precisions))
    return 100.0 * bp * geo_mean


# ---------------------------------------------------------------------------
# ROUGE
# ---------------------------------------------------------------------------

def _f1(match: float, cand_total: int, ref_total: int) -> float:
    if cand_total == 0 or ref_total == 0 or match == 0:
        return 0.0
    precision = match / cand_total
    recall = match / ref_total
    return 2.0 * precision * recall / (precision + recall)


def _lcs_length(a: list, b: list) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, start=1):
            current.append(
                prev[j - 1] + 1 if x == y else max(prev[j], current[j - 1])
            )
        prev = current
    return prev[-1]


def rouge_scores(pair: ScoredPair):
    """(ROUGE-1 F1, ROUGE-L F1); multi-reference takes the max."""
    cand = pair.candidate_tokens
    best1 = 0.0
    bestL = 0.0
    for ref in pair.reference_tokens:
        overlap = sum((Counter(cand) & Counter(ref)).values())
        best1 = max(best1, _f1(overlap, len(cand), len(ref)))
        lcs = _lcs_length(cand, ref)
        bestL = max(bestL, _f1(lcs, len(cand), len(ref)))
    return best1, bestL


# ---------------------------------------------------------------------------
# CIDEr
# ---------------------------------------------------------------------------

def cider(pairs: list) -> float:
    """Consensus score: mean TF-IDF n-gram cosine over n=1..4, times 10.

    IDF comes from the reference corpus; a zero vector on either side gives
    cosine 0 for that order.
    """
    if len(pairs) < 2:
        raise CorpusTooSmall("cider needs at least two pairs for document frequency")

    doc_freq = [defaultdict(int) for _ in range(MAX_NGRAM_ORDER)]
    for pair in pairs:
        seen = [set() for _ in range(MAX_NGRAM_ORDER)]
        for ref in pair.reference_tokens:
            for n in range(1, MAX_NGRAM_ORDER + 1):
                seen[n - 1].update(_ngrams(ref, n).keys())
        for n in range(MAX_NGRAM_ORDER):
            for gram in seen[n]:
                doc_freq[n][gram] += 1

    log_corpus = math.log(len(pairs))

    def tfidf_vector(tokens: list):
        vectors = []
        norms = []
        for n in range(1, MAX_NGRAM_ORDER + 1):
            vec = {}
            for gram, count in _ngrams(tokens, n).items():
                idf = log_corpus - math.log(max(1.0, doc_freq[n - 1][gram]))
                vec[gram] = count * idf
            vectors.append(vec)
            norms.append(math.sqrt(sum(w * w for w in vec.values())))
        return vectors, norms

    total = 0.0
    for pair in pairs:
        cand_vecs, cand_norms = tfidf_vector(pair.candidate_tokens)
        pair_score = 0.0
        for ref_tokens in pair.reference_tokens:
            ref_vecs, ref_norms = tfidf_vector(ref_tokens)
            for n in range(MAX_NGRAM_ORDER):
                if cand_norms[n] == 0.0 or ref_norms[n] == 0.0:
                    continue
                dot = sum(
                    weight * ref_vecs[n].get(gram, 0.0)
                    for gram, weight in cand_vecs[n].items()
                )
                pair_score += dot / (cand_norms[n] * ref_norms[n])
        pair_score /= len(pair.references) * MAX_NGRAM_ORDER
        total += pair_score
    return 10.0 * total / len(pairs)


# ---------------------------------------------------------------------------
# External neural scorers
# ---------------------------------------------------------------------------

def external_score(
    batch: list,
    endpoint: ModelEndpoint,
    scorer_id: str,
    transport=None,
) -> list:
    """POST the batch to {base_url}/score and return per-pair floats."""
    if not batch:
        return []
    transport = transport if transport is not None else HttpTransport()
    body = {
        "scorer": scorer_id,
        "pairs": [
            {"candidate": p.candidate, "references": list(p.references)} for p in batch
        ],
    }
    url = endpoint.base_url.rstrip("/") + "/score"
    response = transport.post(url, body, {"Content-Type": "application/json"},
                              endpoint.request_timeout_ms / 1000.0)
    if response.status >= 400:
        raise TransportError(response.status, "scorer error")
    scores = response.body.get("scores")
    if not isinstance(scores, list) or len(scores) != len(batch):
        raise ShapeMismatch(
            f"expected {len(batch)} scores, got {scores!r}"
        )
    return [float(s) for s in scores]
