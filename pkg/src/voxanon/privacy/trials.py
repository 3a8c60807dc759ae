"""Verification trial lists."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import Manifest
from ..errors import ProtocolError
from ..textio import read_trial_lines, write_trial_lines

PROTOCOLS = ("k_same_k_diff",)


@dataclass(frozen=True)
class TrialSet:
    """``trials`` holds ``(enroll_id, test_id, is_target)`` tuples."""

    trials: tuple
    seed: int | None = None
    protocol: str = "k_same_k_diff"

    def __post_init__(self):
        object.__setattr__(self, "trials", tuple((str(e), str(t), bool(y)) for e, t, y in self.trials))
        for e, t, _ in self.trials:
            if e == t:
                raise ProtocolError(f"trial pairs utterance {e!r} with itself")

    def __len__(self):
        return len(self.trials)

    def __iter__(self):
        return iter(self.trials)

    @property
    def labels(self) -> np.ndarray:
        return np.array([y for _, _, y in self.trials], dtype=bool)

    @property
    def n_targets(self) -> int:
        return int(self.labels.sum())

    def utterances(self) -> list:
        seen = dict.fromkeys(u for e, t, _ in self.trials for u in (e, t))
        return list(seen)

    def check_manifest(self, m: Manifest) -> None:
        missing = [u for u in self.utterances() if u not in m]
        if missing:
            raise ProtocolError(f"trial ids not in manifest: {', '.join(missing[:10])}"
                                + (" ..." if len(missing) > 10 else ""))

    def save(self, path) -> None:
        write_trial_lines(path, self.trials)

    @classmethod
    def load(cls, path) -> "TrialSet":
        return cls(tuple(read_trial_lines(path)))


def gen_trials(m: Manifest, k_same: int = 5, k_diff: int = 5, seed: int = 0) -> TrialSet:
    """Pair every utterance with ``k_same`` same-speaker and ``k_diff`` other-speaker partners.

    Partners are drawn without replacement; trials are listed per utterance
    in manifest order, targets first. Total = N * (k_same + k_diff).
    """
    if k_same < 0 or k_diff < 0:
        raise ValueError("k_same and k_diff must be non-negative")
    groups = m.by_speaker()
    if len(groups) < 2:
        raise ProtocolError("need at least two speakers to build trials")
    short = sorted(s for s, utts in groups.items() if len(utts) < k_same + 1)
    if short:
        raise ProtocolError(f"speaker(s) with fewer than {k_same + 1} utterances: "
                            + ", ".join(short))
    ids = m.ids
    speaker_of = np.array([e.speaker_id for e in m])
    positions = {s: np.flatnonzero(speaker_of == s) for s in groups}
    too_few = sorted(s for s, pos in positions.items() if len(ids) - len(pos) < k_diff)
    if too_few:
        raise ProtocolError(f"not enough other-speaker utterances for: {', '.join(too_few)}")
    rng = np.random.default_rng(seed)
    all_idx = np.arange(len(ids))
    trials = []
    for i, utt in enumerate(ids):
        own = positions[speaker_of[i]]
        same_pool = own[own != i]
        diff_pool = all_idx[speaker_of != speaker_of[i]]
        for j in rng.choice(same_pool, size=k_same, replace=False):
            trials.append((utt, ids[j], True))
        for j in rng.choice(diff_pool, size=k_diff, replace=False):
            trials.append((utt, ids[j], False))
    return TrialSet(tuple(trials), seed)


@dataclass(frozen=True, eq=False)
class ScoreSet:
    """Similarity per trial, aligned with a :class:`TrialSet`; higher means more alike."""

    scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 1 or not np.all(np.isfinite(s)):
            raise ValueError("scores must be a finite 1-D array")
        object.__setattr__(self, "scores", s)

    def __len__(self):
        return len(self.scores)

    @classmethod
    def from_mapping(cls, trials: TrialSet, mapping: dict) -> "ScoreSet":
        """Look up external ``(enroll, test)`` scores, accepting either order."""
        out, missing = [], []
        for e, t, _ in trials:
            v = mapping.get((e, t), mapping.get((t, e)))
            if v is None:
                missing.append(f"{e}/{t}")
            out.append(v)
        if missing:
            raise ProtocolError(f"{len(missing)} trial(s) have no score, e.g. {missing[0]}")
        return cls(np.array(out))
