"""N-gram text-quality metrics, implemented from scratch.

The explanation-quality evaluation needs BLEU, METEOR, ROUGE-L and CIDEr
without pulling in external linguistic resources, so these are the
hermetic variants:

* BLEU: corpus-level, orders 1..4, clipped modified precision, add-eps
  smoothing for zero precisions, brevity penalty exp(1 - r/c) for c < r.
* METEOR: exact-match unigram alignment (no stemming or synonyms),
  maximizing matches and then minimizing chunks; reported as
  "METEOR-exact".
* ROUGE-L: LCS-based F1.
* CIDEr: TF-IDF weighted n-gram cosine for n = 1..4, one reference per
  candidate, scaled by 10.

All scores except CIDEr are on a 0..100 scale.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

Tokens = Sequence[str]

_TRAILING_PUNCT = ".,!?;:"
_BLEU_EPS = 1e-9


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip trailing punctuation.

    Tokens that are nothing but punctuation are dropped.
    """
    tokens = []
    for raw in text.lower().split():
        tok = raw.rstrip(_TRAILING_PUNCT)
        if tok:
            tokens.append(tok)
    return tokens


def _ngrams(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates: list[Tokens], references: list[Tokens]) -> float:
    """Corpus BLEU-4 on a 0..100 scale, one reference per candidate."""
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        raise ValueError("empty corpus")
    cand_len = sum(len(c) for c in candidates)
    ref_len = sum(len(r) for r in references)
    if cand_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        matched = 0
        total = 0
        for cand, ref in zip(candidates, references):
            cand_counts = _ngrams(cand, n)
            ref_counts = _ngrams(ref, n)
            total += sum(cand_counts.values())
            matched += sum(min(count, ref_counts[g]) for g, count in cand_counts.items())
        precision = matched / total if total > 0 else 0.0
        if precision == 0.0:
            precision = _BLEU_EPS
        log_sum += 0.25 * math.log(precision)
    brevity = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return 100.0 * brevity * math.exp(log_sum)


def _min_chunks(candidate: Tokens, reference: Tokens) -> tuple[int, int]:
    """Exact-match unigram alignment: (matches, minimal chunk count).

    The number of matches per word is fixed (min of the two occurrence
    counts); which occurrences align is chosen to minimize the number of
    chunks, i.e. maximal runs contiguous in both sequences. Solved by
    depth-first search over candidate positions with branch-and-bound;
    preferring the run-extending assignment first makes near-monotone
    alignments (the common case for templated text) terminate quickly.
    """
    cand_counts = Counter(candidate)
    ref_counts = Counter(reference)
    quota = {w: min(cand_counts[w], c) for w, c in ref_counts.items() if w in cand_counts}
    matches = sum(quota.values())
    if matches == 0:
        return 0, 0

    ref_positions: dict[str, list[int]] = {}
    for j, w in enumerate(reference):
        if w in quota:
            ref_positions.setdefault(w, []).append(j)
    # Candidate positions of matchable words; some may stay unmatched when
    # the candidate has more occurrences than the reference.
    cand_slots = [(i, w) for i, w in enumerate(candidate) if w in quota]

    best = [matches]  # chunk count upper bound; matches chunks is the worst case

    def search(slot: int, remaining: dict[str, int], spare: dict[str, int],
               used: set[int], prev_cand: int, prev_ref: int, chunks: int) -> None:
        if chunks >= best[0]:
            return
        if slot == len(cand_slots):
            if all(v == 0 for v in remaining.values()):
                best[0] = chunks
            return
        # Bound: even if every remaining match chains, chunk count stays.
        i, w = cand_slots[slot]
        options: list[int] = []
        if remaining[w] > 0:
            extend = prev_ref + 1
            ref_opts = [j for j in ref_positions[w] if j not in used]
            # Try the run-extending reference position first.
            if i == prev_cand + 1 and extend in ref_opts:
                options.append(extend)
                options.extend(j for j in ref_opts if j != extend)
            else:
                options.extend(ref_opts)
            for j in options:
                contiguous = i == prev_cand + 1 and j == prev_ref + 1
                remaining[w] -= 1
                used.add(j)
                search(slot + 1, remaining, spare, used, i, j,
                       chunks if contiguous else chunks + 1)
                used.discard(j)
                remaining[w] += 1
        # Leave this occurrence unmatched if the word has spare occurrences.
        if spare[w] > 0:
            spare[w] -= 1
            search(slot + 1, remaining, spare, used, prev_cand, prev_ref, chunks)
            spare[w] += 1

    spare = {w: cand_counts[w] - quota[w] for w in quota}
    search(0, dict(quota), spare, set(), -2, -2, 0)
    return matches, best[0]


def meteor(candidate: Tokens, reference: Tokens) -> float:
    """METEOR-exact on a 0..100 scale.

    F = 10PR / (R + 9P), penalty = 0.5 * (chunks / matches)^3,
    score = 100 * F * (1 - penalty). Zero matches score 0.
    """
    if not reference:
        raise ValueError("empty reference")
    m, chunks = _min_chunks(candidate, reference)
    if m == 0:
        return 0.0
    precision = m / len(candidate)
    recall = m / len(reference)
    f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (chunks / m) ** 3
    return 100.0 * f_mean * (1.0 - penalty)


def lcs_length(a: Tokens, b: Tokens) -> int:
    """Longest common subsequence length by dynamic programming."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Tokens, reference: Tokens) -> float:
    """ROUGE-L F1 on a 0..100 scale."""
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return 100.0 * 2.0 * precision * recall / (precision + recall)


def cider(candidates: list[Tokens], references: list[Tokens]) -> float:
    """CIDEr with a single reference per candidate.

    For n = 1..4, sentences become TF-IDF vectors over n-grams (TF is the
    raw in-sentence count, IDF = log(N / df) with df counted over the
    reference corpus and floored at 1); the per-n score is the cosine
    between candidate and reference vectors, zero when either vector is
    zero. The corpus score is the mean over pairs of 10 * mean over n.
    """
    if len(candidates) != len(references):
        raise ValueError(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        raise ValueError("empty corpus")
    n_docs = len(references)
    doc_freq: list[Counter] = []
    for n in range(1, 5):
        df = Counter()
        for ref in references:
            for gram in set(_ngrams(ref, n).keys()):
                df[gram] += 1
        doc_freq.append(df)

    total = 0.0
    for cand, ref in zip(candidates, references):
        per_n = 0.0
        for n in range(1, 5):
            df = doc_freq[n - 1]
            cand_vec = {g: c * math.log(n_docs / max(df[g], 1))
                        for g, c in _ngrams(cand, n).items()}
            ref_vec = {g: c * math.log(n_docs / max(df[g], 1))
                       for g, c in _ngrams(ref, n).items()}
            dot = sum(w * ref_vec[g] for g, w in cand_vec.items() if g in ref_vec)
            norm_c = math.sqrt(sum(w * w for w in cand_vec.values()))
            norm_r = math.sqrt(sum(w * w for w in ref_vec.values()))
            if norm_c > 0 and norm_r > 0:
                per_n += dot / (norm_c * norm_r)
        total += 10.0 * per_n / 4.0
    return total / len(candidates)
