"""Slow brute-force references for the metrics, used by the self-test.

These deliberately avoid the code paths of :mod:`voxanon.privacy.metrics`:
EER counts every trial against every candidate threshold, and WER
enumerates every monotone alignment path.
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


def brute_force_eer(labels, scores) -> float:
    """EER in percent from direct per-threshold counting.

    Candidate thresholds are every distinct score plus one above the
    maximum; a trial is accepted at ``score >= threshold``. The crossing is
    interpolated between the last threshold with FAR > FRR and the next.
    """
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    tar, non = scores[labels], scores[~labels]
    cands = sorted(set(scores.tolist())) + [float("inf")]
    prev = None
    for th in cands:
        far = float(np.count_nonzero(non >= th)) / len(non)
        frr = float(np.count_nonzero(tar < th)) / len(tar)
        if far <= frr:
            if prev is None or far == frr:
                return 100.0 * far
            pfar, pfrr = prev
            t = (pfar - pfrr) / ((pfar - pfrr) - (far - frr))
            return 100.0 * (pfar + t * (far - pfar))
        prev = (far, frr)
    raise AssertionError("FAR never met FRR")


@lru_cache(maxsize=None)
def alignment_templates(n: int, m: int) -> tuple:
    """Every alignment path between lengths ``n`` and ``m``.

    Returns ``(diag, n_del, n_ins)``: ``diag`` is paths x (n*m) with a 1 where
    the path pairs ``ref[i]`` with ``hyp[j]`` (cell ``i*m + j``).
    """
    paths = []

    def walk(i, j, pairs, dels, ins):
        if i == n and j == m:
            paths.append((tuple(pairs), dels, ins))
            return
        if i < n and j < m:
            walk(i + 1, j + 1, pairs + [i * m + j], dels, ins)
        if i < n:
            walk(i + 1, j, pairs, dels + 1, ins)
        if j < m:
            walk(i, j + 1, pairs, dels, ins + 1)

    walk(0, 0, [], 0, 0)
    diag = np.zeros((len(paths), max(n * m, 1)), dtype=np.int32)
    for k, (pairs, _, _) in enumerate(paths):
        diag[k, list(pairs)] = 1
    return diag, np.array([p[1] for p in paths]), np.array([p[2] for p in paths])


def optimal_breakdowns(ref, hyp) -> tuple:
    """Minimum edit count and the set of (S, D, I) triples reaching it."""
    n, m = len(ref), len(hyp)
    diag, dels, ins = alignment_templates(n, m)
    neq = np.array([[r != h for h in hyp] for r in ref], dtype=np.int32).reshape(-1)
    if n * m == 0:
        neq = np.zeros(1, dtype=np.int32)
    subs = diag @ neq
    cost = subs + dels + ins
    best = int(cost.min())
    keep = np.flatnonzero(cost == best)
    return best, {(int(subs[k]), int(dels[k]), int(ins[k])) for k in keep}


def all_sequences(vocab, max_len: int):
    for k in range(max_len + 1):
        yield from itertools.product(vocab, repeat=k)


def exhaustive_wer_check(align, vocab=("a", "b", "c"), max_total: int = 8) -> tuple:
    """Compare ``align(ref, hyp)`` with the path enumeration on every pair.

    Pairs cover all sequences with ``len(ref) + len(hyp) <= max_total``.
    ``align`` must return an object with substitutions/deletions/insertions.
    Returns ``(n_pairs, mismatches)``; shapes are processed in bulk.
    """
    mismatches = []
    count = 0
    for n in range(max_total + 1):
        refs = list(itertools.product(vocab, repeat=n))
        for m in range(max_total - n + 1):
            hyps = list(itertools.product(vocab, repeat=m))
            diag, dels, ins = alignment_templates(n, m)
            R = np.array(refs, dtype=object).reshape(len(refs), n)
            H = np.array(hyps, dtype=object).reshape(len(hyps), m)
            for r_idx, ref in enumerate(refs):
                if n * m:
                    neq = (R[r_idx][:, None] != H[:, None, :]).reshape(len(hyps), n * m)
                    subs = neq.astype(np.int32) @ diag.T
                else:
                    subs = np.zeros((len(hyps), len(dels)), dtype=np.int32)
                cost = subs + dels + ins
                best = cost.min(axis=1)
                for h_idx, hyp in enumerate(hyps):
                    count += 1
                    a = align(list(ref), list(hyp))
                    got = (a.substitutions, a.deletions, a.insertions)
                    row = cost[h_idx]
                    ok = sum(got) == best[h_idx] and any(
                        row[k] == best[h_idx] and (subs[h_idx, k], dels[k], ins[k]) == got
                        for k in np.flatnonzero(row == best[h_idx]))
                    if not ok:
                        mismatches.append((ref, hyp, got, int(best[h_idx])))
    return count, mismatches
