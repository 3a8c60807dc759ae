"""Clinical feature families for pathological speech.

Each extractor returns a :class:`FeatureVector` with a fixed length per
family: articulation 234, prosody 103, phonation 28, phonology 72.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.stats

from ..errors import FormatError, ShapeError

FAMILIES = ("articulation", "prosody", "phonation", "phonology")
DIMENSIONS = {"articulation": 234, "prosody": 103, "phonation": 28, "phonology": 72}

TEN_STATS = ("mean", "std", "min", "max", "range", "skew", "kurt", "median", "slope", "mse")
MOMENTS = ("mean", "std", "skew", "kurt")


@dataclass(frozen=True)
class FeatureVector:
    family: str
    names: tuple
    values: np.ndarray

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown feature family {self.family!r}")
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or len(values) != len(self.names):
            raise ShapeError(f"{len(self.names)} names but values of shape {values.shape}")
        if len(values) != DIMENSIONS[self.family]:
            raise ShapeError(f"{self.family} vectors have {DIMENSIONS[self.family]} values, "
                             f"got {len(values)}")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{self.family} vector contains non-finite values")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values.tolist()))


def moments(x) -> np.ndarray:
    """Mean, std, skewness and excess kurtosis; zeros for empty input.

    Higher moments are 0 when the spread is zero so constant tracks stay
    finite.
    """
    x = np.asarray(x, dtype=np.float64)
    x = x[np.isfinite(x)]
    if len(x) == 0:
        return np.zeros(4)
    mu, sd = float(np.mean(x)), float(np.std(x))
    if len(x) < 2 or sd <= 1e-12 * max(1.0, abs(mu)):
        return np.array([mu, 0.0, 0.0, 0.0])
    return np.array([mu, sd, float(scipy.stats.skew(x)), float(scipy.stats.kurtosis(x))])


def ten_stats(x, t=None) -> np.ndarray:
    """The ten contour statistics in :data:`TEN_STATS` order.

    ``slope`` and ``mse`` come from a least-squares line against ``t``
    (defaults to the sample index).
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        return np.zeros(10)
    t = np.arange(len(x), dtype=np.float64) if t is None else np.asarray(t, dtype=np.float64)
    mean, std, skew, kurt = moments(x)
    slope, mse = line_fit(t, x)
    lo, hi = float(np.min(x)), float(np.max(x))
    return np.array([mean, std, lo, hi, hi - lo, skew, kurt, float(np.median(x)), slope, mse])


def line_fit(t, x) -> tuple:
    """Slope and mean squared residual of the least-squares line."""
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 2 or np.ptp(t) == 0:
        return 0.0, 0.0
    tc = t - t.mean()
    slope = float(np.dot(tc, x - x.mean()) / np.dot(tc, tc))
    resid = x - x.mean() - slope * tc
    return slope, float(np.mean(resid ** 2))


def write_feature_csv(path, rows, labels=None) -> None:
    """Write ``[(utt_id, FeatureVector), ...]`` with columns utt_id, label, features."""
    rows = list(rows)
    if not rows:
        raise ValueError("no feature rows to write")
    names = rows[0][1].names
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["utt_id", "label", *names])
        for utt, fv in rows:
            if fv.names != names:
                raise ShapeError(f"{utt}: feature names differ from the first row")
            label = "" if labels is None else labels.get(utt, "")
            out.writerow([utt, label, *(repr(float(v)) for v in fv.values)])


def read_feature_csv(path) -> tuple:
    """Return ``(utt_ids, labels, names, matrix)``."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["utt_id", "label"]:
            raise FormatError(f"{path}: header must start with utt_id,label")
        ids, labels, rows = [], [], []
        for lineno, rec in enumerate(reader, 2):
            if len(rec) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} columns")
            ids.append(rec[0])
            labels.append(rec[1])
            try:
                rows.append([float(v) for v in rec[2:]])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 2)
    return ids, labels, tuple(header[2:]), matrix


from .bark import BarkBands, bark_band_energies, bark_bands  # noqa: E402
from .articulation import extract_articulation  # noqa: E402
from .prosody import extract_prosody  # noqa: E402
from .phonation import extract_phonation  # noqa: E402
from .phonology import (PHONOLOGICAL_CLASSES, PosteriorTrack, extract_phonology,  # noqa: E402
                        load_posteriors, pllr, toy_posteriors)

__all__ = [
    "FAMILIES", "DIMENSIONS", "FeatureVector", "moments", "ten_stats", "line_fit",
    "write_feature_csv", "read_feature_csv", "BarkBands", "bark_bands", "bark_band_energies",
    "extract_articulation", "extract_prosody", "extract_phonation", "PHONOLOGICAL_CLASSES",
    "PosteriorTrack", "load_posteriors", "toy_posteriors", "pllr", "extract_phonology",
]
