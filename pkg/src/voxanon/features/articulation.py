"""Articulation: spectral content around voicing onsets and offsets."""
from __future__ import annotations

import numpy as np
import scipy.fft

from ..audio import FEATURE_FRAMES, Waveform, deltas, mfcc
from ..errors import NoTransitions
from ..pitch import Direction, F0Contour, SegmentMap, transition_points
from . import FeatureVector
from .bark import N_BANDS, bark_band_energies, bark_bands

N_MFCC = 12
HALF_MS = 40.0
DESCRIPTORS = ([f"bark{i + 1:02d}" for i in range(N_BANDS)]
               + [f"mfcc{i + 1:02d}" for i in range(N_MFCC)]
               + [f"d_mfcc{i + 1:02d}" for i in range(N_MFCC)]
               + [f"dd_mfcc{i + 1:02d}" for i in range(N_MFCC)])
GROUPS = ("onset", "offset")


def feature_names() -> list:
    names = [f"{g}_{s}_{d}" for g in GROUPS for s in ("mean", "std") for d in DESCRIPTORS]
    return names + ["missing_onset", "missing_offset"]


def transition_segment(x: np.ndarray, point: int, half: int) -> np.ndarray:
    """``x[point - half : point + half]`` with zeros beyond the edges."""
    out = np.zeros(2 * half)
    a, b = point - half, point + half
    lo, hi = max(a, 0), min(b, len(x))
    if hi > lo:
        out[lo - a:hi - a] = x[lo:hi]
    return out


def transition_descriptor(seg: np.ndarray, sample_rate: int, bands=None) -> np.ndarray:
    """22 Bark energies of the whole segment, then frame-averaged MFCC, delta and delta-delta."""
    bands = bands or bark_bands(min(8000.0, sample_rate / 2.0))
    n_fft = scipy.fft.next_fast_len(len(seg))
    spec = np.abs(scipy.fft.rfft(seg * np.hanning(len(seg)), n_fft))
    bark = bark_band_energies(spec, bands, sample_rate, n_fft)
    c = mfcc(Waveform(seg, sample_rate), FEATURE_FRAMES, N_MFCC)
    d = deltas(c)
    dd = deltas(d)
    return np.concatenate([bark, c.mean(axis=0), d.mean(axis=0), dd.mean(axis=0)])


def extract_articulation(w: Waveform, c: F0Contour, m: SegmentMap) -> FeatureVector:
    """Mean and std of transition descriptors per direction group.

    Each transition contributes one 58-value descriptor computed on the
    80 ms around it. A group with no transitions is zero-filled and its
    ``missing_*`` flag set to 1.
    """
    points = transition_points(m)
    if not points:
        raise NoTransitions("utterance has no voiced/unvoiced transition")
    half = int(round(HALF_MS * w.sample_rate / 1000.0))
    bands = bark_bands(min(8000.0, w.sample_rate / 2.0))
    per_group = {Direction.ONSET: [], Direction.OFFSET: []}
    for point, direction in points:
        seg = transition_segment(w.samples, point, half)
        per_group[direction].append(transition_descriptor(seg, w.sample_rate, bands))
    values, flags = [], []
    for direction in (Direction.ONSET, Direction.OFFSET):
        rows = per_group[direction]
        if rows:
            arr = np.array(rows)
            values += [arr.mean(axis=0), arr.std(axis=0)]
            flags.append(0.0)
        else:
            values += [np.zeros(len(DESCRIPTORS)), np.zeros(len(DESCRIPTORS))]
            flags.append(1.0)
    return FeatureVector("articulation", tuple(feature_names()),
                         np.concatenate(values + [np.array(flags)]))
