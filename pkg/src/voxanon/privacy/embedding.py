"""Baseline speaker embedding: cepstral and pitch statistics.

A desk-scale stand-in for neural speaker embeddings. Scores from a real
verifier can be ingested instead through external score files.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..audio import FEATURE_FRAMES, Waveform, deltas, mfcc
from ..errors import InputTooShort
from ..pitch import ABS_POWER_FLOOR, GATE_DB, estimate_f0, frame_power

MIN_DURATION = 0.5
N_MFCC = 12
DIM = 4 * N_MFCC + 2


@dataclass(frozen=True, eq=False)
class SpeakerEmbedding:
    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("embedding must be a finite vector")
        object.__setattr__(self, "vector", v)

    def __len__(self):
        return len(self.vector)


def speech_frames(w: Waveform) -> np.ndarray:
    """Frames within 30 dB of the mean frame power (and above the absolute floor)."""
    hop = FEATURE_FRAMES.hop_samples(w.sample_rate)
    power = frame_power(w.samples, hop, FEATURE_FRAMES.frame_samples(w.sample_rate))
    floor = 10.0 * np.log10(max(float(power.mean()), 1e-30)) - GATE_DB
    return (power > ABS_POWER_FLOOR) & (10.0 * np.log10(np.maximum(power, 1e-30)) >= floor)


def embedding_features(w: Waveform) -> np.ndarray:
    """Un-normalized 50-value statistics vector.

    Mean and std of 12 MFCC and their deltas, then mean and std of
    natural-log f0. Cepstral statistics use voiced frames, where the vocal
    tract of the speaker dominates; utterances without voicing fall back to
    all speech frames and get zero pitch statistics.
    """
    if w.duration < MIN_DURATION:
        raise InputTooShort(f"need at least {MIN_DURATION} s of audio, got {w.duration:.3f} s")
    c = mfcc(w, FEATURE_FRAMES, N_MFCC)
    feats = np.hstack([c, deltas(c)])
    contour = estimate_f0(w)
    keep = np.zeros(len(feats), dtype=bool)
    n = min(len(feats), len(contour))
    keep[:n] = contour.voiced[:n]
    if not keep.any():
        keep = speech_frames(w)[:len(feats)]
    if keep.any():
        feats = feats[keep]
    logf0 = np.log(contour.f0_hz[contour.voiced])
    pitch = [logf0.mean(), logf0.std()] if len(logf0) else [0.0, 0.0]
    return np.concatenate([feats.mean(axis=0), feats.std(axis=0), pitch])


def embed_baseline(w: Waveform) -> SpeakerEmbedding:
    v = embedding_features(w)
    norm = np.linalg.norm(v)
    return SpeakerEmbedding(v / norm if norm > 0 else v)
