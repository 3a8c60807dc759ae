"""Cosine scoring of trials with a per-utterance embedding cache."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..audio import CANONICAL_RATE, load_audio
from ..errors import CoverageError
from .embedding import embed_baseline
from .trials import ScoreSet, TrialSet


def cosine(a, b) -> float:
    a = np.asarray(getattr(a, "vector", a), dtype=np.float64)
    b = np.asarray(getattr(b, "vector", b), dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


class EmbeddingCache:
    """Embeddings keyed by resolved audio path, filled on demand."""

    def __init__(self, embedder=embed_baseline):
        self.embedder = embedder
        self._store = {}

    def __len__(self):
        return len(self._store)

    def get(self, path):
        key = str(Path(path).resolve())
        if key not in self._store:
            self._store[key] = self.embedder(load_audio(path, CANONICAL_RATE))
        return self._store[key]

    def fill(self, paths, workers: int = 1) -> None:
        todo = list(dict.fromkeys(str(Path(p).resolve()) for p in paths))
        todo = [p for p in todo if p not in self._store]
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                for p, emb in zip(todo, pool.map(lambda q: self.embedder(load_audio(q)), todo)):
                    self._store[p] = emb
        else:
            for p in todo:
                self.get(p)


def score_trials(t: TrialSet, enroll_paths, test_paths=None, embedder=embed_baseline,
                 cache: EmbeddingCache | None = None, workers: int = 1) -> ScoreSet:
    """Cosine similarity between enrollment and test embeddings for every trial.

    ``enroll_paths`` and ``test_paths`` map utterance ids to audio files
    (``test_paths`` defaults to ``enroll_paths``). Any unresolvable id aborts
    with a :class:`CoverageError` listing them all.
    """
    test_paths = enroll_paths if test_paths is None else test_paths
    need = [(u, enroll_paths) for u in dict.fromkeys(e for e, _, _ in t)]
    need += [(u, test_paths) for u in dict.fromkeys(x for _, x, _ in t)]
    missing = sorted({u for u, paths in need if u not in paths or not Path(paths[u]).is_file()})
    if missing:
        raise CoverageError(f"{len(missing)} utterance(s) have no audio: {', '.join(missing[:10])}",
                            missing)
    cache = cache if cache is not None else EmbeddingCache(embedder)
    cache.fill([paths[u] for u, paths in need], workers)
    return ScoreSet(np.array([cosine(cache.get(enroll_paths[e]), cache.get(test_paths[x]))
                              for e, x, _ in t]))
