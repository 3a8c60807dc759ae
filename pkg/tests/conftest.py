import numpy as np
import pytest

from voxanon.audio import Waveform

SR = 16000


def tone(f0, seconds=0.5, sr=SR, amp=0.5, phase=0.0):
    t = np.arange(int(round(seconds * sr))) / sr
    return Waveform(amp * np.sin(2 * np.pi * f0 * t + phase), sr)


def noise(seconds=0.5, sr=SR, amp=0.1, seed=0):
    return Waveform(amp * np.random.default_rng(seed).standard_normal(int(seconds * sr)), sr)


def pulse_train(periods, sr=SR, amps=None, tail=0.05):
    """Decaying 700 Hz resonance excited at the given period lengths (samples)."""
    marks = np.concatenate([[0], np.cumsum(periods)]).astype(int) + int(0.02 * sr)
    n = int(marks[-1] + tail * sr)
    x = np.zeros(n)
    amps = np.ones(len(marks)) if amps is None else np.asarray(amps, dtype=float)
    k = np.arange(int(0.02 * sr))
    pulse = np.exp(-k / (0.002 * sr)) * np.cos(2 * np.pi * 700 * k / sr)
    for m, a in zip(marks, amps):
        seg = pulse[: n - m]
        x[m:m + len(seg)] += a * seg
    return Waveform(0.5 * x / np.max(np.abs(x)), sr), marks


def vowel(formants=(700.0, 1220.0, 2600.0), f0=120.0, seconds=0.6, sr=SR, bw=80.0):
    """Impulse train through a cascade of two-pole resonators."""
    import scipy.signal

    n = int(seconds * sr)
    x = np.zeros(n)
    x[:: int(round(sr / f0))] = 1.0
    for f in formants:
        r = np.exp(-np.pi * bw / sr)
        a = [1.0, -2 * r * np.cos(2 * np.pi * f / sr), r * r]
        x = scipy.signal.lfilter([sum(a)], a, x)
    return Waveform(0.5 * x / np.max(np.abs(x)), sr)


@pytest.fixture(scope="session")
def fixture_table():
    from voxanon.synth import load_fixture

    return load_fixture()


@pytest.fixture(scope="session")
def speech(fixture_table):
    from voxanon.synth import synth_utterance

    w, _ = synth_utterance(fixture_table["privacy_speakers"][0], 0, fixture_table["vowels"])
    return w
