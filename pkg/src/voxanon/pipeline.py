"""Corpus-level drivers shared by the command line and the self-test."""
from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np

from .audio import CANONICAL_RATE, load_audio
from .classifier import Dataset
from .corpus import Manifest, SplitSpec
from .errors import NoTransitions, NoVoicedFrames
from .features import (FAMILIES, FeatureVector, extract_articulation, extract_phonation,
                       extract_phonology, extract_prosody, load_posteriors, read_feature_csv,
                       toy_posteriors, write_feature_csv)
from .features import articulation, phonation
from .pitch import estimate_f0, segment_voicing


class FeatureWarning(UserWarning):
    """An utterance fell back to a zero-filled feature vector."""


def _zero_vector(family: str, flags: bool) -> FeatureVector:
    mod = articulation if family == "articulation" else phonation
    names = mod.feature_names()
    values = np.zeros(len(names))
    if flags:
        values[-2:] = 1.0
    return FeatureVector(family, tuple(names), values)


def utterance_features(w, families=FAMILIES, posteriors_path=None) -> dict:
    """Feature vectors for one waveform.

    No transitions gives a zero articulation vector with both missing flags
    set; no voiced frames gives a zero phonation vector. Both cases warn
    with :class:`FeatureWarning`.
    """
    c = estimate_f0(w)
    m = segment_voicing(c, w)
    out = {}
    for fam in families:
        if fam == "articulation":
            try:
                out[fam] = extract_articulation(w, c, m)
            except NoTransitions:
                warnings.warn("no voicing transitions, articulation zero-filled", FeatureWarning)
                out[fam] = _zero_vector(fam, True)
        elif fam == "prosody":
            out[fam] = extract_prosody(w, c, m)
        elif fam == "phonation":
            try:
                out[fam] = extract_phonation(w, c)
            except NoVoicedFrames:
                warnings.warn("no voiced frames, phonation zero-filled", FeatureWarning)
                out[fam] = _zero_vector(fam, False)
        elif fam == "phonology":
            track = load_posteriors(posteriors_path) if posteriors_path else toy_posteriors(w)
            out[fam] = extract_phonology(track)
        else:
            raise ValueError(f"unknown feature family {fam!r}")
    return out


def extract_corpus(m: Manifest, paths: dict, out_dir, families=FAMILIES,
                   posteriors: dict | None = None) -> list:
    """Write ``<family>.csv`` for every family; returns ``(utt_id, message)`` notes."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = {f: [] for f in families}
    notes = []
    for e in m:
        w = load_audio(paths[e.utt_id], CANONICAL_RATE)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", FeatureWarning)
            vecs = utterance_features(w, families, (posteriors or {}).get(e.utt_id))
        notes += [(e.utt_id, str(c.message)) for c in caught if c.category is FeatureWarning]
        for f in families:
            rows[f].append((e.utt_id, vecs[f]))
    labels = {e.utt_id: e.condition or "" for e in m}
    for f in families:
        write_feature_csv(out_dir / f"{f}.csv", rows[f], labels)
    return notes


def feature_datasets(feature_dir, split: SplitSpec, families=FAMILIES) -> tuple:
    """Train and test :class:`Dataset` per family from ``<family>.csv`` files."""
    train, test = {}, {}
    for fam in families:
        ids, labels, names, X = read_feature_csv(Path(feature_dir) / f"{fam}.csv")
        ids_arr = np.array(ids)
        for target, keep in ((train, split.train_ids), (test, split.test_ids)):
            sel = np.array([u in keep for u in ids], dtype=bool)
            target[fam] = Dataset(X[sel], [labels[i] for i in np.flatnonzero(sel)], names,
                                  tuple(ids_arr[sel]))
    return train, test
