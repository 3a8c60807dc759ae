"""F0 estimation, voicing segmentation, transition detection and pitch marks."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.fft
from scipy.ndimage import median_filter

from .audio import Waveform
from .errors import InputTooShort

YIN_THRESHOLD = 0.15
GATE_DB = 30.0
ABS_POWER_FLOOR = 1e-10


class SegmentKind(str, enum.Enum):
    VOICED = "voiced"
    UNVOICED = "unvoiced"
    SILENCE = "silence"


class Direction(str, enum.Enum):
    ONSET = "unvoiced_to_voiced"
    OFFSET = "voiced_to_unvoiced"


@dataclass(frozen=True, eq=False)
class F0Contour:
    """Per-frame F0 in Hz (0 when unvoiced); frame ``i`` is centered on ``i * hop``."""

    f0_hz: np.ndarray
    voiced: np.ndarray
    hop: float = 10.0
    sample_rate: int = 16000

    def __post_init__(self):
        f0 = np.asarray(self.f0_hz, dtype=np.float64)
        voiced = np.asarray(self.voiced, dtype=bool)
        if f0.shape != voiced.shape:
            raise ValueError("f0_hz and voiced must have the same length")
        if np.any((f0 > 0) != voiced):
            raise ValueError("f0 must be positive exactly on voiced frames")
        object.__setattr__(self, "f0_hz", f0)
        object.__setattr__(self, "voiced", voiced)

    def __len__(self):
        return len(self.f0_hz)

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop * self.sample_rate / 1000.0))

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.hop / 1000.0

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("frame_index,time_s,f0_hz,voiced\n")
            for i, (t, f, v) in enumerate(zip(self.times, self.f0_hz, self.voiced)):
                fh.write(f"{i},{t:.9g},{f:.9g},{int(v)}\n")


class Segment(NamedTuple):
    start: int
    end: int
    kind: SegmentKind

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class SegmentMap:
    segments: tuple

    def __iter__(self):
        return iter(self.segments)

    def __len__(self):
        return len(self.segments)

    def of_kind(self, kind) -> list:
        return [s for s in self.segments if s.kind == kind]


@dataclass(frozen=True, eq=False)
class PitchMarks:
    positions: np.ndarray

    def __len__(self):
        return len(self.positions)


# ------------------------------------------------------------------ helpers


def _frame_starts(n_samples: int, n_frames: int, hop: int, width: int) -> np.ndarray:
    """Start index of a ``width``-sample window centered on each frame, kept inside the signal."""
    centers = np.arange(n_frames) * hop
    return np.clip(centers - width // 2, 0, max(n_samples - width, 0))


def frame_power(x: np.ndarray, hop: int, width: int) -> np.ndarray:
    """Mean square of a ``width``-sample window around every hop position."""
    n_frames = 1 + len(x) // hop
    width = min(width, len(x))
    c = np.concatenate([[0.0], np.cumsum(x.astype(np.float64) ** 2)])
    starts = _frame_starts(len(x), n_frames, hop, width)
    return (c[starts + width] - c[starts]) / width


def _power_floor_db(power: np.ndarray) -> float:
    return 10.0 * math.log10(max(float(np.mean(power)), 1e-30)) - GATE_DB


def _cmndf(frames: np.ndarray, integ: int, tau_max: int) -> np.ndarray:
    """Cumulative-mean-normalised difference for lags 0..tau_max of every frame."""
    n = frames.shape[1]
    nfft = scipy.fft.next_fast_len(n + integ)
    head = frames[:, :integ]
    corr = scipy.fft.irfft(
        np.conj(scipy.fft.rfft(head, nfft, axis=1)) * scipy.fft.rfft(frames, nfft, axis=1),
        nfft, axis=1,
    )[:, :tau_max + 1]
    sq = np.concatenate([np.zeros((frames.shape[0], 1)), np.cumsum(frames ** 2, axis=1)], axis=1)
    taus = np.arange(tau_max + 1)
    e0 = sq[:, integ][:, None]
    etau = sq[:, taus + integ] - sq[:, taus]
    diff = np.maximum(e0 + etau - 2.0 * corr, 0.0)
    diff[:, 0] = 0.0
    cum = np.cumsum(diff[:, 1:], axis=1)
    out = np.ones_like(diff)
    with np.errstate(invalid="ignore", divide="ignore"):
        out[:, 1:] = np.where(cum > 0, diff[:, 1:] * taus[1:] / cum, 1.0)
    return out


def _pick_lag(d: np.ndarray, tau_min: int, tau_max: int, threshold: float) -> float | None:
    below = np.nonzero(d[tau_min:tau_max + 1] < threshold)[0]
    if len(below) == 0:
        return None
    tau = tau_min + int(below[0])
    while tau + 1 <= tau_max and d[tau + 1] < d[tau]:
        tau += 1
    if tau_min < tau < tau_max:
        a, b, c = d[tau - 1], d[tau], d[tau + 1]
        denom = a - 2.0 * b + c
        if denom > 0:
            return tau + 0.5 * (a - c) / denom
    return float(tau)


def _smooth_runs(f0: np.ndarray, voiced: np.ndarray) -> np.ndarray:
    out = f0.copy()
    for start, end in _runs(voiced):
        out[start:end] = median_filter(f0[start:end], size=5, mode="nearest")
        for i in range(start + 1, end):
            while out[i] > 2.0 * out[i - 1]:
                out[i] /= 2.0
            while out[i] < 0.5 * out[i - 1]:
                out[i] *= 2.0
    return out


def _runs(flags: np.ndarray) -> list:
    """``(start, end)`` index pairs of consecutive True entries."""
    padded = np.concatenate([[False], np.asarray(flags, dtype=bool), [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return list(zip(edges[::2], edges[1::2]))


# ------------------------------------------------------------------- public


def estimate_f0(w: Waveform, hop: float = 10.0, fmin: float = 60.0, fmax: float = 400.0,
                threshold: float = YIN_THRESHOLD) -> F0Contour:
    """YIN-style F0 track.

    Each frame uses a ``2 / fmin`` second window: a ``1 / fmin`` integration
    window centered on the frame plus lags up to ``1 / fmin`` beyond it. A frame is voiced when
    the normalised difference dips below ``threshold`` inside the lag range
    and its power is no more than 30 dB under the utterance mean power.
    Voiced runs are median-5 smoothed and octave jumps folded back.
    """
    sr = w.sample_rate
    if not 0 < fmin < fmax <= sr / 2:
        raise ValueError(f"need 0 < fmin < fmax <= {sr / 2}")
    x = w.samples
    width = int(math.ceil(2.0 * sr / fmin))
    tau_max = int(math.ceil(sr / fmin))
    tau_min = max(2, int(math.floor(sr / fmax)))
    integ = width - tau_max
    if len(x) < width:
        raise InputTooShort(f"need at least {width} samples for fmin={fmin} Hz, got {len(x)}")
    hop_s = int(round(hop * sr / 1000.0))
    n_frames = 1 + len(x) // hop_s
    # integration window centered on the frame, lags reach forward
    starts = np.clip(np.arange(n_frames) * hop_s - integ // 2, 0, len(x) - width)
    frames = x[starts[:, None] + np.arange(width)]
    d = _cmndf(frames, integ, tau_max)

    power = frame_power(x, hop_s, int(round(0.025 * sr)))
    gate = _power_floor_db(power)
    power_db = 10.0 * np.log10(np.maximum(power, 1e-30))

    f0 = np.zeros(n_frames)
    for i in range(n_frames):
        if power[i] < ABS_POWER_FLOOR or power_db[i] < gate:
            continue
        lag = _pick_lag(d[i], tau_min, tau_max, threshold)
        if lag is not None:
            f0[i] = sr / lag
    voiced = (f0 >= fmin) & (f0 <= fmax)
    f0 = np.where(voiced, f0, 0.0)
    f0 = _smooth_runs(f0, voiced)
    voiced = (f0 >= fmin) & (f0 <= fmax)
    return F0Contour(np.where(voiced, f0, 0.0), voiced, hop, sr)


def frame_kinds(c: F0Contour, w: Waveform) -> list:
    """Per-frame voiced/unvoiced/silence labels.

    Silence is any non-voiced frame whose own hop-long tile has power below
    the adaptive floor (mean tile power minus 30 dB) or the absolute floor.
    """
    hop = c.hop_samples
    power = frame_power(w.samples, hop, hop)[:len(c)]
    floor_db = _power_floor_db(power)
    power_db = 10.0 * np.log10(np.maximum(power, 1e-30))
    kinds = []
    for i in range(len(c)):
        if c.voiced[i]:
            kinds.append(SegmentKind.VOICED)
        elif power[i] < ABS_POWER_FLOOR or power_db[i] < floor_db:
            kinds.append(SegmentKind.SILENCE)
        else:
            kinds.append(SegmentKind.UNVOICED)
    return kinds


def _tile(kinds: list, bounds: list) -> list:
    segs = []
    for kind, (a, b) in zip(kinds, bounds):
        if b <= a:
            continue
        if segs and segs[-1][2] == kind:
            segs[-1][1] = b
        else:
            segs.append([a, b, kind])
    return segs


def segment_voicing(c: F0Contour, w: Waveform, min_seg: float = 30.0) -> SegmentMap:
    """Project frame labels onto sample ranges and absorb segments shorter than ``min_seg`` ms."""
    hop = c.hop_samples
    if min_seg * w.sample_rate / 1000.0 < hop - 1e-9:
        raise ValueError("min_seg must be at least one hop")
    n = len(w)
    kinds = frame_kinds(c, w)
    bounds = []
    for i in range(len(kinds)):
        a = 0 if i == 0 else min(n, i * hop - hop // 2)
        b = n if i == len(kinds) - 1 else min(n, (i + 1) * hop - hop // 2)
        bounds.append((a, b))
    segs = _tile(kinds, bounds)
    min_len = min_seg * w.sample_rate / 1000.0
    while len(segs) > 1:
        lengths = [b - a for a, b, _ in segs]
        short = [i for i, length in enumerate(lengths) if length < min_len]
        if not short:
            break
        i = min(short, key=lambda j: (lengths[j], j))
        if i == 0:
            target = 1
        elif i == len(segs) - 1:
            target = i - 1
        else:
            target = i - 1 if lengths[i - 1] >= lengths[i + 1] else i + 1
        segs[i][2] = segs[target][2]
        segs = _tile([s[2] for s in segs], [(s[0], s[1]) for s in segs])
    return SegmentMap(tuple(Segment(int(a), int(b), SegmentKind(k)) for a, b, k in segs))


def transition_points(m: SegmentMap) -> list:
    """``(sample_index, Direction)`` at every border entering or leaving a voiced segment."""
    out = []
    for prev, cur in zip(m.segments, m.segments[1:]):
        if prev.kind == SegmentKind.VOICED and cur.kind != SegmentKind.VOICED:
            out.append((cur.start, Direction.OFFSET))
        elif prev.kind != SegmentKind.VOICED and cur.kind == SegmentKind.VOICED:
            out.append((cur.start, Direction.ONSET))
    return out


def voiced_regions(c: F0Contour, n_samples: int) -> list:
    """Sample ranges ``(start, end, frame_start, frame_end)`` of voiced frame runs."""
    hop = c.hop_samples
    regions = []
    for i0, i1 in _runs(c.voiced):
        a = 0 if i0 == 0 else min(n_samples, i0 * hop - hop // 2)
        b = n_samples if i1 == len(c) else min(n_samples, i1 * hop - hop // 2)
        if b > a:
            regions.append((int(a), int(b), int(i0), int(i1)))
    return regions


def pitch_marks(w: Waveform, c: F0Contour, search: float = 0.15) -> PitchMarks:
    """Place one epoch per glottal cycle inside every voiced region.

    The first epoch of a region is its largest peak within one period of the
    region start; each following epoch is the largest peak within
    ``±search`` periods of the previous epoch plus the local period. Peaks
    are taken on the polarity with the larger excursion in the region.
    """
    x = w.samples
    hop = c.hop_samples
    marks = []
    for a, b, i0, i1 in voiced_regions(c, len(x)):
        seg = x[a:b]
        y = x if seg.max() >= -seg.min() else -x

        def period(n):
            idx = min(max(int(round(n / hop)), i0), i1 - 1)
            return w.sample_rate / c.f0_hz[idx]

        first_end = min(b, a + max(1, int(math.ceil(period(a)))))
        pos = a + int(np.argmax(y[a:first_end]))
        if marks and pos <= marks[-1]:
            pos = marks[-1] + 1
        if pos >= b:
            continue
        marks.append(pos)
        while True:
            T = period(pos)
            expected = pos + T
            lo = max(pos + 1, int(math.floor(expected - search * T)))
            hi = min(b, int(math.ceil(expected + search * T)) + 1)
            if lo >= hi or int(round(expected)) >= b:
                break
            pos = lo + int(np.argmax(y[lo:hi]))
            marks.append(pos)
    return PitchMarks(np.asarray(marks, dtype=np.int64))
