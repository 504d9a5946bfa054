"""Brute-force reference implementations, independent of the library code paths.

Spans are handled here as plain token-index sets and every (target, other)
pair is examined, so nothing is shared with the bisect-based implementation.
"""

import math
import random

VOCAB = ["the", "horrible", "purple", "person", "piano", "brains", "left", "people", "s0ngwr1t3r!", "they"]


def _pm(target, others, coverage):
    # Literal case analysis for one target span.
    if any(o == target for o in others):
        return 1.0
    if coverage and any(target <= o for o in others):
        return 1.0
    parts = [len(o & target) / len(target) for o in others if o <= target]
    return math.fsum(parts) if parts else 0.0


def oracle_f1m(gold_pairs, out_pairs, coverage):
    gold = [set(range(s, e)) for s, e in gold_pairs]
    out = [set(range(s, e)) for s, e in out_pairs]
    rec_terms = [_pm(g, out, coverage) for g in gold]
    prec_terms = [_pm(o, gold, coverage) for o in out]
    rec = math.fsum(rec_terms) / len(rec_terms) if rec_terms else 1.0
    prec = math.fsum(prec_terms) / len(prec_terms) if prec_terms else 1.0
    f1 = 0.0 if rec + prec == 0 else 2 * rec * prec / (rec + prec)
    return rec, prec, f1


def oracle_dice(a_pairs, b_pairs):
    a = {i for s, e in a_pairs for i in range(s, e)}
    b = {i for s, e in b_pairs for i in range(s, e)}
    if not a and not b:
        return 1.0
    return 2 * len(a & b) / (len(a) + len(b))


def oracle_lcs(x, y):
    # Exhaustive recursion with memo; fine for the short sequences used in tests.
    memo = {}

    def go(i, j):
        if i == len(x) or j == len(y):
            return 0
        if (i, j) not in memo:
            if x[i] == y[j]:
                memo[i, j] = 1 + go(i + 1, j + 1)
            else:
                memo[i, j] = max(go(i + 1, j), go(i, j + 1))
        return memo[i, j]

    return go(0, 0)


def random_text(rng: random.Random, max_tokens=12, min_tokens=1):
    n = rng.randint(min_tokens, max_tokens)
    seps = [" ", "  ", "\t", "\n"]
    words = [rng.choice(VOCAB) for _ in range(n)]
    out = rng.choice(["", " "])
    for i, w in enumerate(words):
        out += w + (rng.choice(seps) if i < n - 1 else "")
    return out, n


def random_disjoint_pairs(rng: random.Random, n_tokens, max_spans=3):
    chosen = []
    for _ in range(rng.randint(0, max_spans)):
        s = rng.randrange(n_tokens)
        e = rng.randint(s + 1, min(n_tokens, s + rng.randint(1, 4)))
        if all(e <= cs or ce <= s for cs, ce in chosen):
            chosen.append((s, e))
    return sorted(chosen)


def union_coverage(pair_lists):
    return {i for pairs in pair_lists for s, e in pairs for i in range(s, e)}


def oracle_merge(pair_lists):
    # Repeatedly fuse any two overlapping spans until a fixed point.
    spans = [p for pairs in pair_lists for p in pairs]
    changed = True
    while changed:
        changed = False
        for i in range(len(spans)):
            for j in range(i + 1, len(spans)):
                (a, b), (c, d) = spans[i], spans[j]
                if a < d and c < b:
                    spans[i] = (min(a, c), max(b, d))
                    del spans[j]
                    changed = True
                    break
            if changed:
                break
    return sorted(set(spans))
