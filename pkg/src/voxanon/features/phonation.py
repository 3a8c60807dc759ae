"""Phonation: perturbation measures over 40 ms voiced frames."""
from __future__ import annotations

import numpy as np

from ..audio import LOG_FLOOR, Waveform
from ..errors import NoVoicedFrames
from ..pitch import F0Contour, pitch_marks, voiced_regions
from . import MOMENTS, FeatureVector, moments

FRAME_MS = 40.0
STEP_MS = 20.0
TRACKS = ("jitter", "shimmer", "apq5", "ppq5", "d_f0", "dd_f0", "log_energy")


def feature_names() -> list:
    return [f"{t}_{s}" for t in TRACKS for s in MOMENTS]


def _five_point(v: np.ndarray) -> np.ndarray:
    """``|v_i - mean(v_{i-2..i+2})|`` where the window fits, NaN elsewhere."""
    out = np.full(len(v), np.nan)
    if len(v) >= 5:
        avg = np.convolve(v, np.ones(5) / 5.0, mode="valid")
        out[2:-2] = np.abs(v[2:-2] - avg)
    return out


def _first_diff(v: np.ndarray) -> np.ndarray:
    out = np.full(len(v), np.nan)
    out[1:] = np.abs(np.diff(v))
    return out


def cycle_measures(x: np.ndarray, marks: np.ndarray) -> dict:
    """Per-cycle periods, amplitudes and their perturbation terms.

    Cycle ``i`` spans ``marks[i]..marks[i+1]``; its amplitude is the peak
    magnitude inside it.
    """
    periods = np.diff(marks).astype(np.float64)
    amps = np.array([np.max(np.abs(x[a:b])) for a, b in zip(marks[:-1], marks[1:])])
    return {
        "center": (marks[:-1] + marks[1:]) / 2.0,
        "period": periods,
        "amp": amps,
        "jitter": _first_diff(periods),
        "ppq5": _five_point(periods),
        "shimmer": _first_diff(amps),
        "apq5": _five_point(amps),
    }


def _quotient(terms: np.ndarray, base: np.ndarray) -> float:
    ok = np.isfinite(terms)
    if not ok.any() or np.mean(base) <= 0:
        return np.nan
    return 100.0 * float(np.mean(terms[ok])) / float(np.mean(base))


def frame_tracks(w: Waveform, c: F0Contour, marks=None) -> np.ndarray:
    """Frames x 7 matrix in :data:`TRACKS` order; NaN marks an undefined value."""
    x = w.samples
    sr = w.sample_rate
    flen = int(round(FRAME_MS * sr / 1000.0))
    step = int(round(STEP_MS * sr / 1000.0))
    marks = pitch_marks(w, c).positions if marks is None else np.asarray(marks)
    rows = []
    for a, b, _, _ in voiced_regions(c, len(x)):
        rm = marks[(marks >= a) & (marks < b)]
        cyc = cycle_measures(x, rm) if len(rm) >= 2 else None
        starts = list(range(a, max(a, b - flen) + 1, step))
        region_rows = []
        for s in starts:
            e = min(s + flen, b)
            seg = x[s:e]
            row = np.full(7, np.nan)
            row[6] = np.log(max(float(np.mean(seg ** 2)), LOG_FLOOR))
            if cyc is not None:
                sel = (cyc["center"] >= s) & (cyc["center"] < e)
                if sel.any():
                    T, A = cyc["period"][sel], cyc["amp"][sel]
                    row[0] = _quotient(cyc["jitter"][sel], T)
                    row[1] = _quotient(cyc["shimmer"][sel], A)
                    row[2] = _quotient(cyc["apq5"][sel], A)
                    row[3] = _quotient(cyc["ppq5"][sel], T)
                    row[4] = sr / float(np.mean(T))  # frame f0, differenced below
            region_rows.append(row)
        block = np.array(region_rows)
        f0 = block[:, 4].copy()
        block[:, 4] = np.concatenate([[np.nan], np.diff(f0)]) if len(f0) else f0
        block[:, 5] = np.concatenate([[np.nan, np.nan], np.diff(f0, 2)]) if len(f0) > 1 \
            else np.full(len(f0), np.nan)
        rows.append(block)
    if not rows:
        raise NoVoicedFrames("no voiced frames to measure phonation on")
    return np.vstack(rows)


def extract_phonation(w: Waveform, c: F0Contour, marks=None) -> FeatureVector:
    """Mean, std, skewness and kurtosis of the seven per-frame tracks.

    Perturbation values are percentages. Undefined entries (e.g. PPQ5 with
    fewer than five cycles) are skipped; a track with no defined entry
    contributes zeros.
    """
    tracks = frame_tracks(w, c, marks)
    values = np.concatenate([moments(tracks[:, k]) for k in range(tracks.shape[1])])
    return FeatureVector("phonation", tuple(feature_names()), values)
