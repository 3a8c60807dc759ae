"""Signal-level voice anonymization.

Three transforms are provided:

* McAdams: LPC pole angles ``phi`` are mapped to ``phi ** alpha`` frame by
  frame and the LPC residual is re-filtered through the warped envelope.
* VTLN: pitch-synchronous grains are frequency-warped in the FFT domain and
  overlap-added back at their epochs (PSOLA resynthesis).
* mel/Griffin-Lim: a lossy round trip through an 80-band log-mel
  spectrogram, the vocoding bottleneck of neural VC pipelines.

``anonymize_batch`` applies any of them, or copies pre-anonymized audio made
elsewhere (``external``), over a manifest.
"""
from __future__ import annotations

import csv
import shutil
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.signal

from .audio import (CANONICAL_RATE, FEATURE_FRAMES, FrameSpec, Waveform, griffin_lim, invert_mel,
                    load_audio, mel_filterbank, mel_spectrogram, write_wav)
from .corpus import Manifest
from .errors import ConfigError
from .pitch import F0Contour, PitchMarks, estimate_f0, pitch_marks, voiced_regions

MAX_POLE_RADIUS = 0.998
METHODS = ("mcadams", "vtln", "mel_gl", "external")
POLICIES = ("fixed", "random", "cross_gender", "same_direction")

# per-speaker draw ranges: (lowering side, raising side)
ALPHA_RANGES = ((0.75, 0.9), (1.1, 1.25))
WARP_RANGES = ((0.85, 0.97), (1.03, 1.15))


class AnonymizationWarning(UserWarning):
    """Raised (as a warning) when a transform had to fall back or clamp."""


@dataclass(frozen=True)
class McAdamsConfig:
    alpha: float = 0.8
    lpc_order: int = 20
    frame: FrameSpec = FrameSpec(30.0, 15.0, "hann")

    def __post_init__(self):
        if not 0.5 <= self.alpha <= 1.5:
            raise ConfigError(f"McAdams alpha must lie in [0.5, 1.5], got {self.alpha}")
        if self.lpc_order < 8:
            raise ConfigError(f"lpc_order must be >= 8, got {self.lpc_order}")


@dataclass(frozen=True)
class VtlnConfig:
    warp_factor: float = 1.1
    warp_kind: str = "piecewise_linear"
    pivot_hz: float = 6400.0

    def __post_init__(self):
        if not 0.7 <= self.warp_factor <= 1.3:
            raise ConfigError(f"warp_factor must lie in [0.7, 1.3], got {self.warp_factor}")
        if self.warp_kind not in ("piecewise_linear", "bilinear"):
            raise ConfigError(f"unknown warp_kind {self.warp_kind!r}")
        if self.pivot_hz <= 0:
            raise ConfigError("pivot_hz must be positive")


@dataclass(frozen=True)
class AnonymizerSpec:
    """Uniform description of an anonymization run.

    ``params`` holds the method's keyword settings. For ``mcadams`` and
    ``vtln`` the key ``policy`` selects how per-speaker values are chosen:
    ``fixed`` uses ``alpha``/``warp_factor`` as given, ``random`` draws a
    side and a value per speaker, ``cross_gender`` pushes male speakers
    up (alpha < 1, warp > 1) and female speakers down, ``same_direction``
    pushes everybody up. ``external`` needs ``params["source_dir"]``.
    """

    method: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        policy = self.params.get("policy", "fixed")
        if policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {policy!r}")
        if self.method == "external":
            extra = set(self.params) - {"source_dir"}
            if "source_dir" not in self.params or extra:
                raise ConfigError("external method takes exactly one param: source_dir")


# ----------------------------------------------------------------- McAdams


def lpc(frame: np.ndarray, order: int) -> np.ndarray:
    """Autocorrelation-method LPC polynomial ``[1, a1, ..., a_order]``."""
    n = len(frame)
    r = scipy.signal.correlate(frame, frame, mode="full", method="fft")[n - 1:n + order]
    if r[0] <= 0:
        return np.concatenate([[1.0], np.zeros(order)])
    r = r.copy()
    r[0] *= 1.0 + 1e-9
    coeffs = scipy.linalg.solve_toeplitz(r[:order], -r[1:order + 1])
    return np.concatenate([[1.0], coeffs])


def mcadams_poles(a: np.ndarray, alpha: float) -> tuple:
    """Warp the complex pole angles of LPC polynomial ``a``.

    Returns the new real polynomial and the number of poles whose radius had
    to be clamped below one.
    """
    poles = np.roots(a)
    upper = poles[poles.imag > 1e-12]
    real = poles[np.abs(poles.imag) <= 1e-12].real
    radius = np.abs(upper)
    angle = np.clip(np.angle(upper) ** alpha, 1e-9, np.pi - 1e-9)
    clamped = int(np.sum(radius >= 1.0)) + int(np.sum(np.abs(real) >= 1.0))
    radius = np.minimum(radius, MAX_POLE_RADIUS)
    real = np.clip(real, -MAX_POLE_RADIUS, MAX_POLE_RADIUS)
    warped = radius * np.exp(1j * angle)
    new = np.concatenate([warped, warped.conj(), real.astype(complex)])
    return np.real(np.poly(new)), clamped


def mcadams_anonymize(w: Waveform, cfg: McAdamsConfig = McAdamsConfig()) -> Waveform:
    sr = w.sample_rate
    n = cfg.frame.frame_samples(sr)
    hop = cfg.frame.hop_samples(sr)
    base = scipy.signal.get_window("hann", n, fftbins=True)
    win = np.sqrt(base / (base.sum() / hop))
    x = np.pad(w.samples, (n, n + hop))
    out = np.zeros_like(x)
    clamped = 0
    for start in range(0, len(x) - n + 1, hop):
        frame = x[start:start + n] * win
        if np.dot(frame, frame) < 1e-14:
            out[start:start + n] += frame * win
            continue
        a = lpc(frame, cfg.lpc_order)
        a_new, k = mcadams_poles(a, cfg.alpha)
        clamped += k
        residual = scipy.signal.lfilter(a, [1.0], frame)
        out[start:start + n] += scipy.signal.lfilter([1.0], a_new, residual) * win
    if clamped:
        warnings.warn(f"McAdams: clamped {clamped} unstable pole(s) to radius {MAX_POLE_RADIUS}",
                      AnonymizationWarning, stacklevel=2)
    return Waveform(out[n:n + len(w)], sr)


# -------------------------------------------------------------------- VTLN


def warp_frequency(f, cfg: VtlnConfig, nyquist: float):
    """Map input frequency to warped output frequency (Hz)."""
    f = np.asarray(f, dtype=np.float64)
    alpha = cfg.warp_factor
    if cfg.warp_kind == "bilinear":
        beta = (alpha - 1.0) / (alpha + 1.0)
        omega = np.pi * f / nyquist
        warped = omega + 2.0 * np.arctan2(beta * np.sin(omega), 1.0 - beta * np.cos(omega))
        return warped * nyquist / np.pi
    knee = min(cfg.pivot_hz, nyquist) / max(alpha, 1.0)
    upper = alpha * knee + (f - knee) * (nyquist - alpha * knee) / (nyquist - knee)
    return np.where(f <= knee, alpha * f, upper)


def unwarp_frequency(f, cfg: VtlnConfig, nyquist: float):
    """Inverse of :func:`warp_frequency`."""
    f = np.asarray(f, dtype=np.float64)
    if cfg.warp_kind == "bilinear":
        inverse = replace(cfg, warp_factor=1.0 / cfg.warp_factor)
        return warp_frequency(f, inverse, nyquist)
    alpha = cfg.warp_factor
    knee = min(cfg.pivot_hz, nyquist) / max(alpha, 1.0)
    lower = alpha * knee
    upper = knee + (f - lower) * (nyquist - knee) / (nyquist - lower)
    return np.where(f <= lower, f / alpha, upper)


def _warp_grain(grain: np.ndarray, cfg: VtlnConfig, sr: int) -> np.ndarray:
    """FFT, resample the complex spectrum along the warped axis, inverse FFT.

    The grain is rotated so its center sits at index 0, keeping the phase
    smooth across bins for interpolation.
    """
    L = len(grain)
    h = L // 2
    n_fft = 2 * scipy.fft.next_fast_len(L)
    buf = np.zeros(n_fft)
    buf[:L - h] = grain[h:]
    buf[n_fft - h:] = grain[:h]
    X = scipy.fft.rfft(buf)
    freqs = np.arange(len(X)) * sr / n_fft
    src = unwarp_frequency(freqs, cfg, sr / 2.0) * n_fft / sr
    idx = np.arange(len(X))
    Y = np.interp(src, idx, X.real) + 1j * np.interp(src, idx, X.imag)
    y = scipy.fft.irfft(Y, n_fft)
    return np.concatenate([y[n_fft - h:], y[:L - h]])


def _analysis_points(w: Waveform, contour: F0Contour, marks: np.ndarray, unvoiced_ms: float):
    """Grain centers and (left, right) half-lengths for pitch-synchronous OLA."""
    sr = w.sample_rate
    n = len(w)
    half = int(round(unvoiced_ms * sr / 2000.0))
    points = []
    regions = voiced_regions(contour, n)
    covered = np.zeros(n, dtype=bool)
    for a, b, _, _ in regions:
        rm = marks[(marks >= a) & (marks < b)]
        if len(rm) < 2:
            continue
        gaps = np.diff(rm)
        for i, m in enumerate(rm):
            left = gaps[i - 1] if i > 0 else gaps[0]
            right = gaps[i] if i < len(gaps) else gaps[-1]
            points.append((int(m), int(left), int(right)))
        covered[rm[0]:rm[-1] + 1] = True
    # fixed frames everywhere the epochs do not reach
    for c in range(0, n + half, half):
        c = min(c, n - 1)
        if not covered[max(0, c - half):min(n, c + half)].all():
            points.append((c, half, half))
    points.sort()
    return points


def _asym_hann(left: int, right: int) -> np.ndarray:
    rise = 0.5 - 0.5 * np.cos(np.pi * np.arange(left) / left)
    fall = 0.5 + 0.5 * np.cos(np.pi * np.arange(right + 1) / (right + 1))
    return np.concatenate([rise, fall])


def vtln_anonymize(w: Waveform, cfg: VtlnConfig = VtlnConfig(), contour: F0Contour | None = None,
                   unvoiced_ms: float = 20.0) -> Waveform:
    """Pitch-synchronous frequency warping.

    Steps: pitch marking, two-period grains around every epoch (fixed 20 ms
    grains where there are no epochs), FFT, frequency warping, inverse FFT
    and overlap-add at the original epochs. Grains are windowed again on
    synthesis and normalised by the summed squared windows.
    """
    sr = w.sample_rate
    if not 0 < cfg.pivot_hz < sr / 2:
        raise ConfigError(f"pivot_hz must lie in (0, {sr / 2})")
    contour = contour if contour is not None else estimate_f0(w)
    marks = pitch_marks(w, contour).positions
    if len(marks) < 2:
        warnings.warn("VTLN: no pitch marks found, using fixed-frame processing",
                      AnonymizationWarning, stacklevel=2)
    x = w.samples
    n = len(x)
    num = np.zeros(n)
    den = np.zeros(n)
    for center, left, right in _analysis_points(w, contour, marks, unvoiced_ms):
        win = _asym_hann(left, right)
        a, b = center - left, center + right + 1
        lo, hi = max(a, 0), min(b, n)
        grain = np.zeros(len(win))
        grain[lo - a:hi - a] = x[lo:hi]
        grain *= win
        # center the grain for the zero-phase FFT
        pad_l, pad_r = max(0, right - left), max(0, left - right)
        sym = np.pad(grain, (pad_l, pad_r))
        warped = _warp_grain(sym, cfg, sr)[pad_l:pad_l + len(win)] * win
        num[lo:hi] += warped[lo - a:hi - a]
        den[lo:hi] += (win ** 2)[lo - a:hi - a]
    y = np.where(den > 1e-6, num / np.maximum(den, 1e-6), 0.0)
    return Waveform(y, sr)


# ------------------------------------------------------------------- PSOLA


def _mark_groups(marks: np.ndarray, max_period: int) -> list:
    if len(marks) == 0:
        return []
    breaks = np.flatnonzero(np.diff(marks) > max_period) + 1
    return [g for g in np.split(marks, breaks) if len(g) >= 2]


def psola_shift(w: Waveform, marks: PitchMarks, pitch_ratio: float,
                max_period_s: float = 1.0 / 60.0) -> Waveform:
    """TD-PSOLA pitch modification with duration preserved.

    Synthesis epochs are spaced by the local analysis period divided by
    ``pitch_ratio``; each takes the two-period grain of the nearest analysis
    epoch. Samples outside epoch runs are passed through unchanged.
    """
    if not 0.5 <= pitch_ratio <= 2.0:
        raise ValueError("pitch_ratio must lie in [0.5, 2.0]")
    if len(marks) == 0:
        warnings.warn("PSOLA: no pitch marks, returning input unchanged",
                      AnonymizationWarning, stacklevel=2)
        return w
    x = w.samples
    n = len(x)
    num = np.zeros(n)
    den = np.zeros(n)
    for group in _mark_groups(np.asarray(marks.positions), int(max_period_s * w.sample_rate)):
        gaps = np.diff(group)
        lefts = np.concatenate([[gaps[0]], gaps])
        rights = np.concatenate([gaps, [gaps[-1]]])
        t = float(group[0])
        while t <= group[-1]:
            j = int(np.argmin(np.abs(group - t)))
            left, right = int(lefts[j]), int(rights[j])
            win = _asym_hann(left, right)
            src_a = group[j] - left
            dst_a = int(round(t)) - left
            for k in range(len(win)):
                s, d = src_a + k, dst_a + k
                if 0 <= s < n and 0 <= d < n:
                    num[d] += x[s] * win[k]
                    den[d] += win[k]
            t += right / pitch_ratio
    covered = den > 1e-3
    y = np.where(covered, num / np.where(covered, den, 1.0), x)
    return Waveform(y, w.sample_rate)


# ------------------------------------------------------------ mel + GL


def mel_gl_anonymize(w: Waveform, n_mels: int = 80, iters: int = 60, seed: int = 0,
                     spec: FrameSpec = FEATURE_FRAMES, n_fft: int = 1024) -> Waveform:
    """Log-mel analysis, pseudo-inverse to linear magnitude, Griffin-Lim resynthesis."""
    m = mel_spectrogram(w, spec, n_fft, n_mels, 0.0, w.sample_rate / 2.0)
    fb = mel_filterbank(n_mels, n_fft, w.sample_rate, 0.0, w.sample_rate / 2.0)
    y = griffin_lim(invert_mel(m, fb), spec, iters, seed, w.sample_rate).samples
    if len(y) < len(w):
        y = np.pad(y, (0, len(w) - len(y)))
    return Waveform(y[:len(w)], w.sample_rate)


# ------------------------------------------------------------------- batch


def speaker_rng(seed: int, speaker_id: str) -> np.random.Generator:
    """Generator keyed by (seed, speaker); stable across runs and platforms."""
    return np.random.default_rng([int(seed), zlib.crc32(speaker_id.encode("utf-8"))])


def draw_speaker_value(ranges, policy: str, gender: str, seed: int, speaker_id: str) -> float:
    """Pick a per-speaker parameter from ``ranges = (lowering, raising)``.

    ``raise_side`` means alpha < 1 for McAdams (first range) or warp > 1
    for VTLN (second range); callers pass ranges ordered so index 1 is the
    side applied to male speakers under ``cross_gender``.
    """
    rng = speaker_rng(seed, speaker_id)
    coin, u = rng.random(), rng.random()
    if policy == "cross_gender" and gender in ("male", "female"):
        side = 1 if gender == "male" else 0
    elif policy == "same_direction":
        side = 1
    else:
        side = int(coin < 0.5)
    lo, hi = ranges[side]
    return float(lo + (hi - lo) * u)


def resolve_params(spec: AnonymizerSpec, speaker_id: str, gender: str) -> dict:
    """Concrete keyword arguments for one speaker."""
    params = dict(spec.params)
    policy = params.pop("policy", "fixed")
    if spec.method == "mcadams":
        if policy != "fixed":
            # male speakers take alpha < 1, which raises the low formants
            params["alpha"] = draw_speaker_value(ALPHA_RANGES[::-1], policy, gender, spec.seed,
                                                 speaker_id)
        return params
    if spec.method == "vtln":
        if policy != "fixed":
            params["warp_factor"] = draw_speaker_value(WARP_RANGES, policy, gender, spec.seed,
                                                       speaker_id)
        return params
    if spec.method == "mel_gl":
        params.setdefault("seed", spec.seed)
    return params


def apply_method(w: Waveform, method: str, params: dict) -> Waveform:
    if method == "mcadams":
        frame = params.get("frame")
        cfg = McAdamsConfig(params.get("alpha", 0.8), params.get("lpc_order", 20),
                            frame if isinstance(frame, FrameSpec) else FrameSpec(30.0, 15.0))
        return mcadams_anonymize(w, cfg)
    if method == "vtln":
        cfg = VtlnConfig(params.get("warp_factor", 1.1), params.get("warp_kind", "piecewise_linear"),
                         params.get("pivot_hz", 0.8 * w.sample_rate / 2.0))
        return vtln_anonymize(w, cfg)
    if method == "mel_gl":
        return mel_gl_anonymize(w, params.get("n_mels", 80), params.get("iters", 60),
                                params.get("seed", 0))
    raise ConfigError(f"method {method!r} has no signal transform")


def _peak_safe(w: Waveform) -> Waveform:
    peak = float(np.max(np.abs(w.samples))) if len(w) else 0.0
    return w if peak <= 0.999 else w.with_samples(w.samples * (0.999 / peak))


@dataclass
class BatchReport:
    rows: list = field(default_factory=list)

    @property
    def n_ok(self) -> int:
        return sum(r[1] in ("ok", "warning") for r in self.rows)

    @property
    def n_warnings(self) -> int:
        return sum(r[1] == "warning" for r in self.rows)

    @property
    def n_failed(self) -> int:
        return sum(r[1].startswith("error") for r in self.rows)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["utt_id", "status", "params_used"])
            out.writerows(self.rows)


def _format_params(params: dict) -> str:
    return ";".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                    for k, v in sorted(params.items()))


def _process_one(entry, manifest: Manifest, spec: AnonymizerSpec, out_dir: Path):
    dest = out_dir / entry.audio_path
    try:
        if spec.method == "external":
            src_dir = Path(spec.params["source_dir"])
            for cand in (src_dir / entry.audio_path, src_dir / f"{entry.utt_id}.wav"):
                if cand.is_file():
                    dest.parent.mkdir(parents=True, exist_ok=True)
                    shutil.copyfile(cand, dest)
                    return (entry.utt_id, "ok", f"source={cand}")
            return (entry.utt_id, "error: missing external audio", "")
        params = resolve_params(spec, entry.speaker_id, entry.gender)
        w = load_audio(manifest.root / entry.audio_path, CANONICAL_RATE)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", AnonymizationWarning)
            y = apply_method(w, spec.method, params)
        write_wav(dest, _peak_safe(y))
        flagged = [c for c in caught if issubclass(c.category, AnonymizationWarning)]
        return (entry.utt_id, "warning" if flagged else "ok", _format_params(params))
    except Exception as exc:  # recorded in the report, batch carries on
        return (entry.utt_id, f"error: {type(exc).__name__}: {exc}", "")


def anonymize_batch(manifest: Manifest, spec: AnonymizerSpec, out_dir, workers: int = 1,
                    report_name: str | None = "report.csv") -> BatchReport:
    """Anonymize every manifest utterance into ``out_dir`` under the same relative path.

    Rows of the report follow manifest order regardless of ``workers``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = list(manifest)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(lambda e: _process_one(e, manifest, spec, out_dir), entries))
    else:
        rows = [_process_one(e, manifest, spec, out_dir) for e in entries]
    report = BatchReport(rows)
    if report_name and entries:
        report.write_csv(out_dir / report_name)
    return report
