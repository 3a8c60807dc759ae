"""Phonology: PLLR statistics of 18 phonological class posteriors.

Real posteriors come from external recognisers via :func:`load_posteriors`.
:func:`toy_posteriors` is a deterministic acoustic heuristic so the pipeline
runs without them; it is not a phonological model.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..audio import FEATURE_FRAMES, LOG_FLOOR, Waveform, stft
from ..errors import FormatError, ShapeError
from ..pitch import estimate_f0
from . import MOMENTS, FeatureVector, moments

PHONOLOGICAL_CLASSES = (
    "vocalic", "consonantal", "back", "anterior", "open", "close", "nasal", "stop",
    "continuant", "lateral", "flap", "trill", "voice", "strident", "labial", "dental",
    "velar", "pause",
)
N_CLASSES = len(PHONOLOGICAL_CLASSES)
CLAMP = 1e-6


@dataclass(frozen=True, eq=False)
class PosteriorTrack:
    probs: np.ndarray
    hop: float = 10.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != N_CLASSES:
            raise ShapeError(f"posterior track must be frames x {N_CLASSES}, got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("posterior track contains non-finite values")
        object.__setattr__(self, "probs", np.clip(p, CLAMP, 1.0 - CLAMP))

    def __len__(self):
        return self.probs.shape[0]


def load_posteriors(path, hop: float = 10.0) -> PosteriorTrack:
    """Read a whitespace-delimited frames x 18 text file."""
    try:
        data = np.loadtxt(path, ndmin=2, comments="#")
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if data.shape[1] != N_CLASSES:
        raise ShapeError(f"{path}: expected {N_CLASSES} columns, got {data.shape[1]}")
    if np.any((data < 0) | (data > 1)):
        raise FormatError(f"{path}: posteriors must lie in [0, 1]")
    return PosteriorTrack(data, hop)


def save_posteriors(path, track: PosteriorTrack) -> None:
    np.savetxt(path, track.probs, fmt="%.6g")


def pllr(track: PosteriorTrack) -> np.ndarray:
    p = track.probs
    return np.log(p) - np.log1p(-p)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# acoustic cues, all roughly in [-1, 1]:
# voicing, low-band share, mid-band share, high-band share, centroid, zcr, level
_WEIGHTS = np.array([
    [4.0, 2.0, 0.5, -2.0, -1.0, -1.0, 1.0],    # vocalic
    [-3.0, -1.0, 0.0, 2.0, 1.0, 2.0, -0.5],    # consonantal
    [1.0, 3.0, -2.0, -1.0, -2.0, -0.5, 0.0],   # back
    [-0.5, -1.5, 0.5, 2.0, 2.0, 1.0, 0.0],     # anterior
    [1.5, 0.5, 2.5, -1.0, 0.0, -0.5, 1.0],     # open
    [1.0, 2.5, -2.0, 0.0, -1.0, -0.5, -0.5],   # close
    [1.5, 3.0, -2.5, -2.0, -2.0, -1.0, -1.5],  # nasal
    [-1.0, -0.5, 0.0, 0.5, 0.5, 0.5, -2.0],    # stop
    [0.5, 0.0, 0.5, 1.0, 0.5, 1.0, 0.5],       # continuant
    [1.5, 1.0, 1.0, -1.5, -0.5, -1.0, -0.5],   # lateral
    [1.0, 0.0, 1.0, -0.5, 0.0, 0.0, -1.0],     # flap
    [1.0, 0.5, 0.5, 0.0, 0.0, 0.5, -0.5],      # trill
    [5.0, 1.0, 0.5, -1.0, -1.0, -1.5, 0.5],    # voice
    [-2.0, -2.0, -0.5, 3.5, 3.0, 2.5, 0.0],    # strident
    [0.0, 1.5, -0.5, -1.0, -1.5, 0.0, -0.5],   # labial
    [-1.0, -1.0, 0.0, 2.0, 1.5, 1.5, -0.5],    # dental
    [0.0, 1.0, 1.0, -0.5, -0.5, 0.0, -0.5],    # velar
])
_BIAS = np.array([-1.0, -1.0, -1.0, -1.0, -1.5, -1.5, -2.0, -2.0, -0.5, -2.0, -2.5, -2.5,
                  -1.0, -1.5, -1.5, -1.5, -1.5])
ACTIVITY_DB = -50.0


def acoustic_cues(w: Waveform) -> tuple:
    """Per-frame cue matrix (frames x 7) and frame power in dBFS."""
    spec = stft(w, FEATURE_FRAMES, 512)
    power = np.abs(spec.bins) ** 2
    freqs = np.arange(power.shape[1]) * w.sample_rate / 512
    total = power.sum(axis=1) + LOG_FLOOR
    low = power[:, freqs < 1000].sum(axis=1) / total
    mid = power[:, (freqs >= 1000) & (freqs < 3000)].sum(axis=1) / total
    high = power[:, freqs >= 3000].sum(axis=1) / total
    centroid = (power @ freqs) / total / (w.sample_rate / 2)
    x = w.samples
    hop = FEATURE_FRAMES.hop_samples(w.sample_rate)
    signs = np.signbit(np.pad(x, (hop, hop), mode="edge")).astype(np.int8)
    crossings = np.abs(np.diff(signs))
    zcr = np.array([crossings[i * hop:i * hop + 2 * hop].mean() for i in range(power.shape[0])])
    c = estimate_f0(w, hop=FEATURE_FRAMES.hop_len)
    voiced = np.zeros(power.shape[0])
    n = min(len(c), len(voiced))
    voiced[:n] = c.voiced[:n]
    # Parseval on the one-sided spectrum gives mean windowed power
    win_energy = float(np.sum(FEATURE_FRAMES.window_array(w.sample_rate) ** 2))
    frame_db = 10.0 * np.log10(2.0 * total / (512 * win_energy))
    level = np.clip((frame_db + 20.0) / 30.0, -1.0, 1.0)
    cues = np.column_stack([2 * voiced - 1, 2 * low - 1, 2 * mid - 1, 2 * high - 1,
                            2 * centroid - 1, 2 * np.minimum(zcr * 4, 1) - 1, level])
    return cues, frame_db


def toy_posteriors(w: Waveform) -> PosteriorTrack:
    """Heuristic 18-class posteriors at a 10 ms hop.

    Every speech class is a logistic map of the acoustic cues gated by a
    speech-activity sigmoid on frame level; ``pause`` is the complement of
    that activity. Silent frames therefore drive every class below 0.5
    except ``pause``.
    """
    cues, frame_db = acoustic_cues(w)
    active = _sigmoid((frame_db - ACTIVITY_DB) / 3.0)
    speech = _sigmoid(cues @ _WEIGHTS.T + _BIAS)
    probs = np.empty((len(cues), N_CLASSES))
    probs[:, :-1] = 0.02 + 0.96 * active[:, None] * speech
    probs[:, -1] = 0.02 + 0.96 * (1.0 - active)
    return PosteriorTrack(probs, FEATURE_FRAMES.hop_len)


def feature_names() -> list:
    return [f"pllr_{c}_{s}" for c in PHONOLOGICAL_CLASSES for s in MOMENTS]


def extract_phonology(track: PosteriorTrack) -> FeatureVector:
    if len(track) == 0:
        raise ShapeError("posterior track is empty")
    values = pllr(track)
    return FeatureVector("phonology", tuple(feature_names()),
                         np.concatenate([moments(values[:, k]) for k in range(N_CLASSES)]))
