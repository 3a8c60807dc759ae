"""Bark critical-band energies (Traunmüller approximation)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..audio import LOG_FLOOR
from ..errors import ShapeError

N_BANDS = 22


def hz_to_bark(f):
    f = np.asarray(f, dtype=np.float64)
    return 26.81 * f / (1960.0 + f) - 0.53


def bark_to_hz(z):
    z = np.asarray(z, dtype=np.float64)
    return 1960.0 * (z + 0.53) / (26.28 - z)


@dataclass(frozen=True)
class BarkBands:
    edges_hz: tuple

    def __post_init__(self):
        e = np.asarray(self.edges_hz, dtype=np.float64)
        if e.shape != (N_BANDS + 1,):
            raise ShapeError(f"need {N_BANDS + 1} band edges, got {e.shape}")
        if e[0] != 0.0 or np.any(np.diff(e) <= 0):
            raise ValueError("band edges must start at 0 and increase strictly")
        object.__setattr__(self, "edges_hz", tuple(e.tolist()))


def bark_bands(fmax: float = 8000.0) -> BarkBands:
    """22 bands uniform in Bark between 0 Hz and ``fmax``."""
    z = np.linspace(hz_to_bark(0.0), hz_to_bark(fmax), N_BANDS + 1)
    edges = bark_to_hz(z)
    edges[0], edges[-1] = 0.0, fmax
    return BarkBands(tuple(edges))


def band_index(n_bins: int, n_fft: int, bands: BarkBands, sample_rate: int) -> np.ndarray:
    """Band number of every rfft bin, -1 outside the band range.

    Bins sit in the half-open band ``[lo, hi)``; the top edge is closed.
    """
    freqs = np.arange(n_bins) * sample_rate / n_fft
    edges = np.asarray(bands.edges_hz)
    idx = np.searchsorted(edges, freqs, side="right") - 1
    idx[freqs == edges[-1]] = N_BANDS - 1
    idx[(freqs < edges[0]) | (freqs > edges[-1])] = -1
    return idx


def bark_band_energies(frame_spectrum, bands: BarkBands, sample_rate: int,
                       n_fft: int | None = None) -> np.ndarray:
    """Natural-log summed power per band, floored at ``1e-10`` before the log."""
    mag = np.asarray(frame_spectrum)
    n_fft = n_fft or 2 * (len(mag) - 1)
    idx = band_index(len(mag), n_fft, bands, sample_rate)
    power = np.abs(mag) ** 2
    keep = idx >= 0
    sums = np.bincount(idx[keep], weights=power[keep], minlength=N_BANDS)
    return np.log(np.maximum(sums, LOG_FLOOR))
