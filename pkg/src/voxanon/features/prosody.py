"""Prosody: F0 contour (30), energy contour (48), duration and rate (25)."""
from __future__ import annotations

import numpy as np

from ..audio import LOG_FLOOR, Waveform
from ..pitch import F0Contour, SegmentKind, SegmentMap, frame_power
from . import TEN_STATS, FeatureVector, line_fit, ten_stats

SEMITONE_REF_HZ = 55.0
ENERGY_WINDOW_MS = 25.0
BLOCKS = {"f0": 30, "energy": 48, "duration": 25}
_KINDS = (SegmentKind.VOICED, SegmentKind.UNVOICED, SegmentKind.SILENCE)
_DUR_STATS = ("count", "total", "mean", "std", "max", "min")
_SEG_DESCRIPTORS = ("slope", "mse", "delta")
_RATIOS = ("voiced_rate", "pause_rate", "voiced_unvoiced_ratio", "voiced_total_ratio",
           "pause_total_ratio", "mean_pause", "regularity")


def feature_names() -> list:
    names = []
    for track in ("f0_hz", "f0_st", "f0_segmean"):
        names += [f"{track}_{s}" for s in TEN_STATS]
    for track in ("energy_all", "energy_voiced", "energy_unvoiced"):
        names += [f"{track}_{s}" for s in TEN_STATS]
    for kind in ("voiced", "unvoiced"):
        names += [f"energy_seg_{kind}_{d}_{a}" for d in _SEG_DESCRIPTORS
                  for a in ("mean", "std", "max")]
    for kind in _KINDS:
        names += [f"dur_{kind.value}_{s}" for s in _DUR_STATS]
    return names + list(_RATIOS)


def frame_log_energy(w: Waveform, c: F0Contour) -> np.ndarray:
    """dB power of a 25 ms window centered on every contour frame."""
    width = int(round(ENERGY_WINDOW_MS * w.sample_rate / 1000.0))
    power = frame_power(w.samples, c.hop_samples, width)[:len(c)]
    return 10.0 * np.log10(np.maximum(power, LOG_FLOOR))


def _frames_in(seg, n_frames: int, hop: int) -> np.ndarray:
    centers = np.arange(n_frames) * hop
    return np.flatnonzero((centers >= seg.start) & (centers < seg.end))


def _f0_block(c: F0Contour, m: SegmentMap) -> np.ndarray:
    f0 = c.f0_hz[c.voiced]
    t = c.times[c.voiced]
    st = 12.0 * np.log2(f0 / SEMITONE_REF_HZ) if len(f0) else f0
    seg_means = []
    for seg in m.of_kind(SegmentKind.VOICED):
        idx = _frames_in(seg, len(c), c.hop_samples)
        idx = idx[c.voiced[idx]]
        if len(idx):
            seg_means.append(c.f0_hz[idx].mean())
    return np.concatenate([ten_stats(f0, t), ten_stats(st, t), ten_stats(np.array(seg_means))])


def _segment_contour_stats(energy: np.ndarray, segs, c: F0Contour) -> np.ndarray:
    rows = []
    for seg in segs:
        idx = _frames_in(seg, len(c), c.hop_samples)
        e = energy[idx]
        slope, mse = line_fit(c.times[idx], e)
        delta = float(np.mean(np.abs(np.diff(e)))) if len(e) > 1 else 0.0
        rows.append((slope, mse, delta))
    if not rows:
        return np.zeros(9)
    arr = np.array(rows)
    return np.concatenate([[col.mean(), col.std(), col.max()] for col in arr.T])


def _energy_block(w: Waveform, c: F0Contour, m: SegmentMap) -> np.ndarray:
    energy = frame_log_energy(w, c)
    t = c.times
    v = c.voiced
    parts = [ten_stats(energy, t), ten_stats(energy[v], t[v]), ten_stats(energy[~v], t[~v]),
             _segment_contour_stats(energy, m.of_kind(SegmentKind.VOICED), c),
             _segment_contour_stats(energy, m.of_kind(SegmentKind.UNVOICED), c)]
    return np.concatenate(parts)


def _duration_stats(durations) -> list:
    d = np.asarray(durations, dtype=np.float64)
    if len(d) == 0:
        return [0.0] * 6
    return [float(len(d)), d.sum(), d.mean(), d.std(), d.max(), d.min()]


def pauses(m: SegmentMap) -> list:
    """Silences with speech on both sides."""
    segs = m.segments
    return [s for i, s in enumerate(segs)
            if s.kind == SegmentKind.SILENCE and 0 < i < len(segs) - 1]


def _duration_block(w: Waveform, m: SegmentMap) -> np.ndarray:
    sr = w.sample_rate
    dur = {k: [s.length / sr for s in m.of_kind(k)] for k in _KINDS}
    out = []
    for k in _KINDS:
        out += _duration_stats(dur[k])
    total = len(w) / sr
    voiced, unvoiced = sum(dur[SegmentKind.VOICED]), sum(dur[SegmentKind.UNVOICED])
    p = [s.length / sr for s in pauses(m)]
    v = np.asarray(dur[SegmentKind.VOICED])
    out += [
        len(v) / total if total else 0.0,
        len(p) / total if total else 0.0,
        voiced / unvoiced if unvoiced else 0.0,
        voiced / total if total else 0.0,
        sum(p) / total if total else 0.0,
        float(np.mean(p)) if p else 0.0,
        float(v.std() / v.mean()) if len(v) else 0.0,
    ]
    return np.array(out)


def extract_prosody(w: Waveform, c: F0Contour, m: SegmentMap) -> FeatureVector:
    """103 prosodic values in f0 / energy / duration block order.

    Empty selections (no voiced frames, no unvoiced segments, no pauses)
    give zeros; ``dur_*_count`` and the raw f0 stats tell zero-filled blocks
    apart from real zeros.
    """
    values = np.concatenate([_f0_block(c, m), _energy_block(w, c, m), _duration_block(w, m)])
    return FeatureVector("prosody", tuple(feature_names()), values)


def block_slices() -> dict:
    out, start = {}, 0
    for name, size in BLOCKS.items():
        out[name] = slice(start, start + size)
        start += size
    return out
