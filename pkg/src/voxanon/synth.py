"""Bundled synthetic multi-speaker corpus.

Utterances are strings of fricative+vowel syllables produced by a
source-filter model: a jittered, shimmered pulse train through a spectral-tilt
lowpass and a cascade of formant resonators, plus aspiration noise. Speaker
identity lives in F0, formant scale, bandwidths, tilt and breathiness; the
pathological panel adds strong jitter/shimmer, breathiness and a slow rate.
This is desk-scale test material, not a model of real speech.
"""
from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np
import scipy.signal

from .audio import CANONICAL_RATE, Waveform, write_wav
from .corpus import Entry, Manifest, save_manifest
from .errors import FormatError

FIXTURE = "speakers.json"
_CONSONANTS = {"s": (3800.0, 7000.0), "f": (1500.0, 6000.0), "h": (600.0, 3500.0)}


def load_fixture(verify: bool = True, path=None) -> dict:
    """Load the bundled speaker table, checking its embedded checksum.

    ``path`` points at an alternative copy of the table.
    """
    if path is None:
        raw = resources.files("voxanon.data").joinpath(FIXTURE).read_text(encoding="utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    try:
        body = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FormatError(f"bundled fixture {FIXTURE} is not valid JSON: {exc}") from exc
    expected = body.pop("sha256", None)
    if verify:
        canon = json.dumps(body, sort_keys=True, separators=(",", ":"))
        if hashlib.sha256(canon.encode()).hexdigest() != expected:
            raise FormatError(f"bundled fixture {FIXTURE} failed its checksum")
    return body


def _resonator(x, freq, bw, sr):
    r = np.exp(-np.pi * bw / sr)
    theta = 2 * np.pi * freq / sr
    a = [1.0, -2 * r * np.cos(theta), r * r]
    return scipy.signal.lfilter([sum(a)], a, x)


def _fade(n, sr, ms=15.0):
    env = np.ones(n)
    k = min(n // 2, int(sr * ms / 1000))
    if k > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(k) / k)
        env[:k] = ramp
        env[n - k:] = ramp[::-1]
    return env


def glottal_source(f0_track, jitter, shimmer, rng, sr=CANONICAL_RATE):
    """Pulse train following ``f0_track`` (Hz per sample) with period/amplitude perturbation."""
    n = len(f0_track)
    src = np.zeros(n)
    t = 0.0
    while t < n:
        i = int(t)
        src[i] += max(0.1, 1.0 + shimmer * rng.standard_normal())
        period = sr / f0_track[i] * (1.0 + jitter * rng.standard_normal())
        t += max(period, 2.0)
    # smooth the impulses into glottal-like pulses
    return scipy.signal.lfilter([1.0], [1.0, -0.9], src) - np.mean(src)


def _vowel(spk, formants, dur, f0_start, f0_end, rng, sr):
    n = int(dur * sr)
    f0 = np.linspace(f0_start, f0_end, n)
    x = glottal_source(f0, spk["jitter"], spk["shimmer"], rng, sr)
    b, a = scipy.signal.butter(1, spk["tilt_hz"] / (sr / 2))
    x = scipy.signal.lfilter(b, a, x)
    x = x + spk["breathiness"] * 4.0 * rng.standard_normal(n) * np.std(x)
    bws = np.array([80.0, 100.0, 140.0, 200.0]) * spk["bandwidth"]
    for f, bw in zip(formants, bws):
        x = _resonator(x, f, bw, sr)
    x = x / (np.max(np.abs(x)) + 1e-12)
    return x * _fade(n, sr)


def _fricative(kind, dur, level, rng, sr):
    n = int(dur * sr)
    lo, hi = _CONSONANTS[kind]
    b, a = scipy.signal.butter(2, [lo / (sr / 2), min(hi, sr / 2 - 100) / (sr / 2)], btype="band")
    x = scipy.signal.lfilter(b, a, rng.standard_normal(n))
    x = x / (np.max(np.abs(x)) + 1e-12)
    return level * x * _fade(n, sr, 10.0)


def synth_utterance(spk: dict, seed, vowels: dict | None = None, sr: int = CANONICAL_RATE,
                    n_syllables: int | None = None) -> tuple:
    """Synthesize one utterance for speaker ``spk``.

    Every vowel of the table appears once per cycle, in random order, so
    long-term spectra reflect the speaker more than the text. Returns
    ``(waveform, transcript)`` where the transcript spells the syllables,
    e.g. ``"sa i fo hu e"``.
    """
    vowels = vowels or load_fixture(verify=False)["vowels"]
    rng = np.random.default_rng(seed)
    rate = spk["rate"]
    names = sorted(vowels)
    order = [str(v) for v in rng.permutation(names)]
    n_syl = n_syllables or len(order)
    scale = spk["formant_scale"] * (1.0 + 0.01 * rng.standard_normal())
    f0_base = spk["f0"] * (1.0 + 0.02 * rng.standard_normal())
    level = 0.5 * (1.0 + 0.1 * rng.standard_normal())
    pathological = spk["condition"] == "pathological"

    parts = [np.zeros(int(rng.uniform(0.05, 0.1) * sr))]
    words = []
    for k in range(n_syl):
        word = ""
        if rng.random() < 0.7:
            cons = str(rng.choice(sorted(_CONSONANTS)))
            c_level = 0.12 * (0.5 if pathological else 1.0)
            parts.append(_fricative(cons, rng.uniform(0.06, 0.11) / rate, c_level, rng, sr))
            word += cons
        v = order[k % len(order)]
        formants = np.array(vowels[v] + [3500.0]) * scale * (1.0 + 0.01 * rng.standard_normal(4))
        decl = 1.05 - 0.12 * k / max(n_syl - 1, 1)
        f0a = f0_base * decl * (1.0 + 0.03 * rng.standard_normal())
        f0b = f0a * (1.0 + 0.06 * rng.standard_normal())
        dur = rng.uniform(0.15, 0.26) / rate
        parts.append(level * _vowel(spk, formants, dur, f0a, f0b, rng, sr))
        word += v
        words.append(word)
        if k < n_syl - 1 and rng.random() < 0.4:
            parts.append(np.zeros(int(rng.uniform(0.04, 0.09) / rate * sr)))
    parts.append(np.zeros(int(rng.uniform(0.05, 0.1) * sr)))
    x = np.concatenate(parts)
    x = x + 10 ** (-70 / 20) * rng.standard_normal(len(x))
    return Waveform(np.clip(x, -0.99, 0.99), sr), " ".join(words)


def build_corpus(out_dir, panel: str = "privacy", utts_per_speaker: int = 6, seed: int = 0,
                 speakers=None) -> Manifest:
    """Write ``panel`` ("privacy" or "patho") audio plus ``manifest.tsv`` under ``out_dir``."""
    fixture = load_fixture()
    table = fixture[f"{panel}_speakers"]
    if speakers is not None:
        table = [s for s in table if s["speaker_id"] in set(speakers)]
    out_dir = Path(out_dir)
    entries = []
    for si, spk in enumerate(table):
        for ui in range(utts_per_speaker):
            utt_id = f"{spk['speaker_id']}_{ui:03d}"
            rel = f"wav/{spk['speaker_id']}/{utt_id}.wav"
            w, text = synth_utterance(spk, [seed, si, ui], fixture["vowels"])
            write_wav(out_dir / rel, w)
            entries.append(Entry(utt_id, rel, spk["speaker_id"], spk["gender"],
                                 spk["condition"], text))
    m = Manifest(entries, out_dir)
    save_manifest(m, out_dir / "manifest.tsv")
    return m
