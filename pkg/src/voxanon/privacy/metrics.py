"""Equal error rate and word error rate."""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..errors import ProtocolError
from .trials import ScoreSet, TrialSet


def roc_points(scores, labels) -> tuple:
    """FAR and FRR at every distinct score used as threshold, plus one above the maximum.

    A trial is accepted when ``score >= threshold``. Returns
    ``(thresholds, far, frr)``; the extra last threshold rejects everything.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    order = np.argsort(scores, kind="stable")
    s, y = scores[order], labels[order]
    n_tar, n_non = int(y.sum()), int((~y).sum())
    uniq, first = np.unique(s, return_index=True)
    # counts strictly below each unique value
    tar_below = np.concatenate([[0], np.cumsum(y)])[first]
    non_below = np.concatenate([[0], np.cumsum(~y)])[first]
    frr = np.append(tar_below, n_tar) / n_tar
    far = np.append(n_non - non_below, 0) / n_non
    span = uniq[-1] - uniq[0]
    top = uniq[-1] + (span / len(uniq) if span > 0 else 1.0)
    return np.append(uniq, top), far, frr


def compute_eer(labels, scores) -> tuple:
    """EER (percent) and the threshold where FAR and FRR cross.

    FAR falls and FRR rises as the threshold moves up; the crossing is
    linearly interpolated between the two ROC points around the first sign
    change of FAR - FRR. Accepts a TrialSet/ScoreSet pair or plain arrays.
    """
    if isinstance(labels, TrialSet):
        labels = labels.labels
    if isinstance(scores, ScoreSet):
        scores = scores.scores
    labels = np.asarray(labels, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise ValueError("labels and scores differ in length")
    if labels.all() or not labels.any():
        raise ProtocolError("EER needs at least one target and one non-target trial")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    thr, far, frr = roc_points(scores, labels)
    diff = far - frr
    i = int(np.argmax(diff <= 0))  # diff ends at -1, so a crossing always exists
    if diff[i] == 0 or i == 0:
        return 100.0 * float(far[i]), float(thr[i])
    t = diff[i - 1] / (diff[i - 1] - diff[i])
    eer = far[i - 1] + t * (far[i] - far[i - 1])
    return 100.0 * float(eer), float(thr[i - 1] + t * (thr[i] - thr[i - 1]))


_PUNCT = re.compile(r"[^\w\s']|_")


def normalize_text(text: str) -> list:
    """Uppercase, drop punctuation (apostrophes kept), split on whitespace."""
    return _PUNCT.sub(" ", text.upper()).split()


@dataclass(frozen=True)
class Alignment:
    substitutions: int
    deletions: int
    insertions: int
    ref_words: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def align_words(ref, hyp) -> Alignment:
    """Unit-cost Levenshtein alignment with an S/D/I breakdown.

    Among minimum-cost paths the backtrace prefers substitution, then
    deletion, then insertion.
    """
    n, m = len(ref), len(hyp)
    d = [list(range(m + 1))] + [[i] + [0] * m for i in range(1, n + 1)]
    for i in range(1, n + 1):
        row, prev, r = d[i], d[i - 1], ref[i - 1]
        for j in range(1, m + 1):
            row[j] = min(prev[j - 1] + (r != hyp[j - 1]), prev[j] + 1, row[j - 1] + 1)
    s = de = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            s += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and d[i][j] == d[i - 1][j] + 1:
            de += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return Alignment(int(s), de, ins, n)


@dataclass(frozen=True)
class WerResult:
    wer: float
    substitutions: int
    deletions: int
    insertions: int
    ref_words: int

    def __iter__(self):
        return iter((self.wer, self.substitutions, self.deletions, self.insertions, self.ref_words))


def compute_wer(refs: dict, hyps: dict, normalize: bool = True) -> WerResult:
    """Corpus WER = (S + D + I) / N * 100 over the utterances in ``hyps``.

    Values may be strings or word lists; strings are normalized unless
    ``normalize`` is False, in which case they are only split.
    """
    missing = sorted(set(hyps) - set(refs))
    if missing:
        raise KeyError(f"hypotheses without reference: {', '.join(missing)}")

    def words(v):
        if isinstance(v, str):
            return normalize_text(v) if normalize else v.split()
        return list(v)

    S = D = I = N = 0
    for utt in hyps:
        a = align_words(words(refs[utt]), words(hyps[utt]))
        S, D, I, N = S + a.substitutions, D + a.deletions, I + a.insertions, N + a.ref_words
    if N == 0:
        wer = 0.0 if S + D + I == 0 else float("inf")
    else:
        wer = 100.0 * (S + D + I) / N
    return WerResult(wer, S, D, I, N)
