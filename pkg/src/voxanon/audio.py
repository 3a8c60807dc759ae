"""Signal I/O, framing, spectral transforms, mel/MFCC analysis and Griffin-Lim.

Every function here is pure: arrays passed in are never modified and the same
inputs always give bit-identical outputs.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.io.wavfile
import scipy.signal
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, FormatError, InputTooShort, ShapeError, UnsupportedError

CANONICAL_RATE = 16000
LOG_FLOOR = 1e-10

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono sample buffer with its sampling rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeError(f"waveform must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples) -> "Waveform":
        return Waveform(samples, self.sample_rate)


@dataclass(frozen=True)
class FrameSpec:
    """Analysis framing in milliseconds."""

    frame_len: float = 25.0
    hop_len: float = 10.0
    window: str = "hann"

    def __post_init__(self):
        if not 0 < self.hop_len <= self.frame_len:
            raise ConfigError(
                f"need 0 < hop_len <= frame_len, got hop={self.hop_len} frame={self.frame_len}"
            )
        if self.window not in ("hann", "hamming", "rect"):
            raise ConfigError(f"unknown window {self.window!r}")

    def frame_samples(self, sample_rate: int) -> int:
        n = int(round(self.frame_len * sample_rate / 1000.0))
        if n < 1:
            raise ConfigError("frame length is shorter than one sample")
        return n

    def hop_samples(self, sample_rate: int) -> int:
        n = int(round(self.hop_len * sample_rate / 1000.0))
        if n < 1:
            raise ConfigError("hop length is shorter than one sample")
        return n

    def window_array(self, sample_rate: int) -> np.ndarray:
        return get_window(self.window, self.frame_samples(sample_rate))


FEATURE_FRAMES = FrameSpec(25.0, 10.0, "hann")


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """One-sided complex STFT, frames along axis 0."""

    bins: np.ndarray
    n_fft: int
    hop: int
    sample_rate: int
    length: int | None = None

    def __post_init__(self):
        if self.bins.ndim != 2 or self.bins.shape[1] != self.n_fft // 2 + 1:
            raise ShapeError(
                f"expected (frames, {self.n_fft // 2 + 1}) bins, got {self.bins.shape}"
            )

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.bins)

    @property
    def n_frames(self) -> int:
        return self.bins.shape[0]


@dataclass(frozen=True, eq=False)
class MelSpectrogram:
    energies: np.ndarray
    n_mels: int
    fmin: float
    fmax: float
    log_scaled: bool
    n_fft: int = 1024
    hop: int = 160
    sample_rate: int = CANONICAL_RATE
    power: float = 2.0
    log_floor: float = LOG_FLOOR

    def __post_init__(self):
        if self.n_mels < 1 or self.energies.ndim != 2 or self.energies.shape[1] != self.n_mels:
            raise ShapeError(f"mel energies must be (frames, {self.n_mels}), got {self.energies.shape}")
        if not self.log_scaled and np.any(self.energies < 0):
            raise ValueError("linear mel energies must be non-negative")


def get_window(kind: str, n: int) -> np.ndarray:
    if kind == "rect":
        return np.ones(n)
    if kind in ("hann", "hamming"):
        return scipy.signal.get_window(kind, n, fftbins=True)
    raise ConfigError(f"unknown window {kind!r}")


# --------------------------------------------------------------------- I/O


def _wav_format_tag(raw: bytes) -> tuple[int, int]:
    """Return (format tag, bits per sample) from a RIFF/WAVE header."""
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise FormatError("not a RIFF/WAVE file")
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (size,) = struct.unpack("<I", raw[pos + 4:pos + 8])
        body = raw[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise FormatError("truncated fmt chunk")
            tag, _, _, _, _, bits = struct.unpack("<HHIIHH", body[:16])
            if tag == _WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 26:
                    raise FormatError("truncated WAVE_FORMAT_EXTENSIBLE header")
                (tag,) = struct.unpack("<H", body[24:26])
            return tag, bits
        pos += 8 + size + (size & 1)
    raise FormatError("no fmt chunk found")


def read_wav(path) -> Waveform:
    """Read a PCM16 or float32 WAV file, averaging channels to mono.

    Integer samples are scaled by ``1 / 2**(bits-1)`` so full-scale PCM16 lands
    on ``±32767/32768``. The native rate is kept; see :func:`load_audio` for
    ingestion at the canonical rate.
    """
    path = Path(path)
    raw = path.read_bytes()
    tag, bits = _wav_format_tag(raw)
    if tag == _WAVE_FORMAT_PCM and bits not in (8, 16, 32):
        raise UnsupportedError(f"{path}: unsupported PCM bit depth {bits}")
    if tag == _WAVE_FORMAT_IEEE_FLOAT and bits not in (32, 64):
        raise UnsupportedError(f"{path}: unsupported float bit depth {bits}")
    if tag not in (_WAVE_FORMAT_PCM, _WAVE_FORMAT_IEEE_FLOAT):
        raise UnsupportedError(f"{path}: unsupported WAV codec 0x{tag:04x}")
    try:
        rate, data = scipy.io.wavfile.read(path)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc

    if data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.integer):
        samples = data.astype(np.float64) / float(2 ** (8 * data.dtype.itemsize - 1))
    else:
        samples = data.astype(np.float64)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return Waveform(samples, rate)


def write_wav(path, w: Waveform) -> None:
    """Write mono little-endian PCM16; samples outside [-1, 1] are clipped."""
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    scipy.io.wavfile.write(path, w.sample_rate, pcm)


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Band-limited polyphase resampling."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == w.sample_rate:
        return w
    g = math.gcd(int(target_rate), w.sample_rate)
    up, down = int(target_rate) // g, w.sample_rate // g
    y = scipy.signal.resample_poly(w.samples, up, down)
    return Waveform(y, target_rate)


def load_audio(path, rate: int = CANONICAL_RATE) -> Waveform:
    return resample(read_wav(path), rate)


def dump_csv(path, matrix, header) -> None:
    """Write a real matrix as CSV with a header row and 9 significant digits."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if matrix.shape[1] != len(header):
        raise ShapeError(f"{len(header)} header names for {matrix.shape[1]} columns")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in matrix:
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")


# ------------------------------------------------------------------- STFT


def _frames(x: np.ndarray, n_fft: int, hop: int, pad_mode: str) -> np.ndarray:
    pad = n_fft // 2
    xp = np.pad(x, pad, mode=pad_mode)
    n_frames = 1 + len(x) // hop
    return sliding_window_view(xp, n_fft)[::hop][:n_frames]


def _padded_window(spec: FrameSpec, sample_rate: int, n_fft: int) -> np.ndarray:
    win = spec.window_array(sample_rate)
    if n_fft < len(win):
        raise ConfigError(f"n_fft={n_fft} is shorter than the frame ({len(win)} samples)")
    left = (n_fft - len(win)) // 2
    return np.pad(win, (left, n_fft - len(win) - left))


def stft(w: Waveform, spec: FrameSpec = FEATURE_FRAMES, n_fft: int = 512,
         pad_mode: str = "reflect") -> Spectrogram:
    """Centered short-time Fourier transform.

    Frame ``f`` is centered on sample ``f * hop`` of the signal padded by
    ``n_fft // 2`` on each side (reflect padding by default).
    """
    win = _padded_window(spec, w.sample_rate, n_fft)
    hop = spec.hop_samples(w.sample_rate)
    x = w.samples
    if len(x) < spec.frame_samples(w.sample_rate) or len(x) <= n_fft // 2:
        raise InputTooShort(
            f"signal of {len(x)} samples is shorter than one {n_fft}-point frame"
        )
    bins = scipy.fft.rfft(_frames(x, n_fft, hop, pad_mode) * win, axis=1)
    return Spectrogram(bins, n_fft, hop, w.sample_rate, len(x))


def window_sumsquare_floor(spec: FrameSpec, sample_rate: int) -> float:
    """Smallest steady-state value of the overlapped squared window."""
    win = spec.window_array(sample_rate)
    hop = spec.hop_samples(sample_rate)
    sq = np.pad(win ** 2, (0, (-len(win)) % hop))
    return float(sq.reshape(-1, hop).sum(axis=0).min())


def istft(s: Spectrogram, spec: FrameSpec = FEATURE_FRAMES, length: int | None = None) -> Waveform:
    """Least-squares inverse of :func:`stft` (window-sum-square normalised).

    Raises ConfigError when the squared windows do not overlap-add to a
    strictly positive envelope, since the inversion is then undefined.
    """
    hop = spec.hop_samples(s.sample_rate)
    if hop != s.hop:
        raise ConfigError(f"frame spec hop {hop} does not match spectrogram hop {s.hop}")
    win = _padded_window(spec, s.sample_rate, s.n_fft)
    if window_sumsquare_floor(spec, s.sample_rate) <= 1e-10:
        raise ConfigError(
            f"{spec.window} window with frame {spec.frame_len} ms / hop {spec.hop_len} ms "
            "is not overlap-add invertible"
        )
    if length is None:
        length = s.length if s.length is not None else hop * (s.n_frames - 1)
    y = _overlap_add(scipy.fft.irfft(s.bins, n=s.n_fft, axis=1), win, hop, length)
    return Waveform(y, s.sample_rate)


def _overlap_add(frames: np.ndarray, win: np.ndarray, hop: int, length: int) -> np.ndarray:
    n_frames, n_fft = frames.shape
    total = n_fft + hop * (n_frames - 1)
    y = np.zeros(total)
    wss = np.zeros(total)
    wsq = win ** 2
    for f in range(n_frames):
        start = f * hop
        y[start:start + n_fft] += frames[f] * win
        wss[start:start + n_fft] += wsq
    nz = wss > 1e-10
    y[nz] /= wss[nz]
    pad = n_fft // 2
    out = y[pad:pad + length]
    if len(out) < length:
        out = np.pad(out, (0, length - len(out)))
    return out


def onesided_weights(n_fft: int) -> np.ndarray:
    """Bin multiplicities of a one-sided spectrum inside the full FFT."""
    weights = np.full(n_fft // 2 + 1, 2.0)
    weights[0] = 1.0
    if n_fft % 2 == 0:
        weights[-1] = 1.0
    return weights


def frame_energy_from_spectrum(row: np.ndarray, n_fft: int) -> float:
    """Time-domain energy of a frame recovered from its one-sided FFT (Parseval)."""
    return float(np.sum(onesided_weights(n_fft) * np.abs(row) ** 2) / n_fft)


# -------------------------------------------------------------------- mel


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_centers(n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    pts = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    return pts[1:-1]


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int, fmin: float = 0.0,
                   fmax: float | None = None) -> np.ndarray:
    """Triangular mel filterbank of shape ``(n_mels, n_fft // 2 + 1)``.

    The outer slopes of the first and last filters are flat so that every
    bin in ``[fmin, fmax]`` receives weight. A filter too narrow to contain
    any bin is given unit weight on the bin nearest its center.
    """
    if fmax is None:
        fmax = sample_rate / 2.0
    if not 0 <= fmin < fmax <= sample_rate / 2.0:
        raise ConfigError(f"need 0 <= fmin < fmax <= {sample_rate / 2}, got {fmin}, {fmax}")
    if n_mels < 1:
        raise ConfigError("n_mels must be >= 1")
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    pts = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    fb = np.zeros((n_mels, len(freqs)))
    for m in range(n_mels):
        lo, c, hi = pts[m], pts[m + 1], pts[m + 2]
        up = (freqs - lo) / (c - lo)
        down = (hi - freqs) / (hi - c)
        if m == 0:
            up = np.where(freqs >= fmin, 1.0, 0.0)
        if m == n_mels - 1:
            down = np.where(freqs <= fmax, 1.0, 0.0)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
        if fb[m].sum() <= 0:
            fb[m, np.argmin(np.abs(freqs - c))] = 1.0
    return fb


def mel_spectrogram(w: Waveform, spec: FrameSpec = FEATURE_FRAMES, n_fft: int = 1024,
                    n_mels: int = 80, fmin: float = 0.0, fmax: float | None = None,
                    log_floor: float = LOG_FLOOR, log: bool = True) -> MelSpectrogram:
    """Mel-weighted power spectrogram, optionally natural-log compressed."""
    if log_floor <= 0:
        raise ConfigError("log_floor must be positive")
    if fmax is None:
        fmax = w.sample_rate / 2.0
    s = stft(w, spec, n_fft)
    fb = mel_filterbank(n_mels, n_fft, w.sample_rate, fmin, fmax)
    energies = (np.abs(s.bins) ** 2) @ fb.T
    if log:
        energies = np.log(np.maximum(energies, log_floor))
    return MelSpectrogram(energies, n_mels, fmin, fmax, log, n_fft, s.hop, w.sample_rate,
                          2.0, log_floor)


def mfcc(w: Waveform, spec: FrameSpec = FEATURE_FRAMES, n_mfcc: int = 12, n_mels: int = 40,
         n_fft: int = 512) -> np.ndarray:
    """Cepstral coefficients 1..n_mfcc (c0 dropped), frames along axis 0."""
    if not 1 <= n_mfcc < n_mels:
        raise ConfigError(f"need 1 <= n_mfcc < n_mels, got n_mfcc={n_mfcc}, n_mels={n_mels}")
    logmel = mel_spectrogram(w, spec, n_fft, n_mels).energies
    return scipy.fft.dct(logmel, type=2, norm="ortho", axis=1)[:, 1:n_mfcc + 1]


def deltas(m: np.ndarray, width: int = 5) -> np.ndarray:
    """Regression deltas along axis 0 with edge replication."""
    if width < 3 or width % 2 == 0:
        raise ConfigError(f"delta width must be odd and >= 3, got {width}")
    m = np.asarray(m, dtype=np.float64)
    n = (width - 1) // 2
    padded = np.pad(m, [(n, n)] + [(0, 0)] * (m.ndim - 1), mode="edge")
    denom = 2.0 * sum(k * k for k in range(1, n + 1))
    out = np.zeros_like(m)
    T = m.shape[0]
    for k in range(1, n + 1):
        out += k * (padded[n + k:n + k + T] - padded[n - k:n - k + T])
    return out / denom


def delta_delta(m: np.ndarray, width: int = 5) -> np.ndarray:
    return deltas(deltas(m, width), width)


# ------------------------------------------------------------ resynthesis


def invert_mel(m: MelSpectrogram, fb: np.ndarray) -> np.ndarray:
    """Approximate linear magnitude spectrogram from mel energies.

    Uses the Moore-Penrose pseudo-inverse of the filterbank, clamps negative
    power to zero and undoes the power exponent.
    """
    if fb.shape[0] != m.n_mels or fb.shape[1] != m.n_fft // 2 + 1:
        raise ShapeError(
            f"filterbank {fb.shape} does not match {m.n_mels} mels / n_fft {m.n_fft}"
        )
    energies = np.exp(m.energies) if m.log_scaled else m.energies
    if m.log_scaled:
        # floored entries were exact zeros before the log
        energies = np.where(m.energies <= math.log(m.log_floor), 0.0, energies)
    power = np.maximum(energies @ np.linalg.pinv(fb).T, 0.0)
    return power ** (1.0 / m.power)


def _gl_distance(S: np.ndarray, mag: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sqrt(np.sum(weights * (np.abs(S) - mag) ** 2)))


def _overlap_add_reflect(frames: np.ndarray, win: np.ndarray, hop: int, length: int) -> np.ndarray:
    """Least-squares inverse of the reflect-padded frame operator.

    Each padded sample is a copy of exactly one signal sample, so the normal
    equations stay diagonal: padded contributions are folded onto their
    mirror positions before normalising.
    """
    n_frames, n_fft = frames.shape
    total = n_fft + hop * (n_frames - 1)
    y = np.zeros(total)
    wss = np.zeros(total)
    wsq = win ** 2
    for f in range(n_frames):
        start = f * hop
        y[start:start + n_fft] += frames[f] * win
        wss[start:start + n_fft] += wsq
    pad = n_fft // 2
    num = y[pad:pad + length].copy()
    den = wss[pad:pad + length].copy()
    k = np.arange(1, pad + 1)
    np.add.at(num, k, y[pad - k])
    np.add.at(den, k, wss[pad - k])
    np.add.at(num, length - 1 - k, y[pad + length - 1 + k])
    np.add.at(den, length - 1 - k, wss[pad + length - 1 + k])
    return num / np.maximum(den, 1e-10)


def griffin_lim(mag: np.ndarray, spec: FrameSpec = FEATURE_FRAMES, iters: int = 60, seed: int = 0,
                sample_rate: int = CANONICAL_RATE, momentum: float = 0.99,
                return_objective: bool = False):
    """Recover a waveform whose STFT magnitude approximates ``mag``.

    Phases start from a seeded uniform draw. Each iteration inverts the
    current spectrogram by least squares, re-analyses it and replaces the
    magnitude. The magnitude-replaced spectrogram is extrapolated by
    ``momentum`` (fast Griffin-Lim); the extrapolated step is only accepted
    when it does not increase ``|| |STFT(x)| - mag ||``, otherwise the plain
    step is taken, which never increases it. ``momentum=0`` gives the
    classic algorithm.

    Returns the waveform, or ``(waveform, objective_per_iteration)`` when
    ``return_objective`` is set.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    mag = np.asarray(mag, dtype=np.float64)
    if np.any(mag < 0):
        raise ValueError("magnitudes must be non-negative")
    n_frames, n_bins = mag.shape
    n_fft = 2 * (n_bins - 1)
    hop = spec.hop_samples(sample_rate)
    win = _padded_window(spec, sample_rate, n_fft)
    if window_sumsquare_floor(spec, sample_rate) <= 1e-10:
        raise ConfigError("frame spec is not overlap-add invertible")
    length = hop * (n_frames - 1)
    if length <= n_fft // 2:
        raise InputTooShort("too few frames to reconstruct a reflect-padded signal")
    weights = onesided_weights(n_fft)

    def analyse(x):
        return scipy.fft.rfft(_frames(x, n_fft, hop, "reflect") * win, axis=1)

    def synthesise(X):
        return _overlap_add_reflect(scipy.fft.irfft(X, n=n_fft, axis=1), win, hop, length)

    def project(S):
        return mag * np.exp(1j * np.angle(S))

    rng = np.random.default_rng(seed)
    x = synthesise(mag * np.exp(2j * np.pi * rng.random(mag.shape)))
    S = analyse(x)
    dist = _gl_distance(S, mag, weights)
    history = [dist]
    prev = project(S)
    for _ in range(iters - 1):
        target = project(S)
        cand_x = synthesise(target + momentum * (target - prev)) if momentum else synthesise(target)
        prev = target
        cand_S = analyse(cand_x)
        cand_dist = _gl_distance(cand_S, mag, weights)
        if cand_dist > dist:
            cand_x = synthesise(target)
            cand_S = analyse(cand_x)
            cand_dist = _gl_distance(cand_S, mag, weights)
        x, S, dist = cand_x, cand_S, cand_dist
        history.append(dist)
    out = Waveform(x, sample_rate)
    if return_objective:
        return out, history
    return out


def spectral_convergence(w: Waveform, mag: np.ndarray, spec: FrameSpec = FEATURE_FRAMES) -> float:
    """``|| |STFT(w)| - mag || / || mag ||`` using the default STFT padding."""
    n_fft = 2 * (mag.shape[1] - 1)
    S = np.abs(stft(w, spec, n_fft).bins)
    F = min(len(S), len(mag))
    return float(np.linalg.norm(S[:F] - mag[:F]) / max(np.linalg.norm(mag[:F]), 1e-30))
