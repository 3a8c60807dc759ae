"""Built-in invariant checklist over bundled synthetic data."""
from __future__ import annotations

import tempfile
import time
import warnings
from pathlib import Path

import numpy as np

from .audio import (FEATURE_FRAMES, Waveform, frame_energy_from_spectrum, griffin_lim,
                    istft, mel_filterbank, stft)
from .errors import FormatError

SR = 16000


def _tone(f0, seconds=0.5, sr=SR):
    t = np.arange(int(seconds * sr)) / sr
    return Waveform(0.5 * np.sin(2 * np.pi * f0 * t), sr)


def check_fixture():
    from .synth import load_fixture

    try:
        fx = load_fixture(verify=True)
    except FormatError as exc:
        return False, str(exc)
    n = len(fx["privacy_speakers"]) + len(fx["patho_speakers"])
    return True, f"{n} speakers, checksum ok"


def check_stft_roundtrip():
    rng = np.random.default_rng(0)
    w = Waveform(rng.standard_normal(SR) * 0.1, SR)
    y = istft(stft(w, FEATURE_FRAMES, 512), FEATURE_FRAMES, len(w))
    err = float(np.max(np.abs(y.samples[400:-400] - w.samples[400:-400])))
    return err < 1e-6, f"max interior error {err:.1e}"


def check_parseval():
    rng = np.random.default_rng(1)
    frame = rng.standard_normal(512)
    row = np.fft.rfft(frame)
    rel = abs(frame_energy_from_spectrum(row, 512) - np.sum(frame ** 2)) / np.sum(frame ** 2)
    return rel < 1e-6, f"relative error {rel:.1e}"


def check_mel_coverage():
    fb = mel_filterbank(80, 1024, SR, 0.0, SR / 2)
    uncovered = int(np.sum(fb.sum(axis=0) <= 0))
    return uncovered == 0, f"{uncovered} uncovered bins"


def check_griffin_lim():
    from .synth import load_fixture, synth_utterance

    spk = load_fixture()["privacy_speakers"][0]
    w, _ = synth_utterance(spk, 0)
    mag = np.abs(stft(w, FEATURE_FRAMES, 1024).bins)
    _, hist = griffin_lim(mag, FEATURE_FRAMES, 60, 0, SR, return_objective=True)
    rises = int(np.sum(np.diff(hist) > 1e-9 * hist[0]))
    return rises == 0, f"objective {hist[0]:.3g} -> {hist[-1]:.3g}, {rises} increases"


def check_f0_sweep():
    from .pitch import estimate_f0

    worst = 0.0
    for f0 in (80, 120, 180, 250, 350):
        c = estimate_f0(_tone(f0))
        est = np.median(c.f0_hz[c.voiced]) if c.voiced.any() else 0.0
        worst = max(worst, abs(est - f0) / f0)
    return worst < 0.01, f"worst relative error {100 * worst:.3f}%"


def check_eer(seed):
    from .oracles import brute_force_eer
    from .privacy import compute_eer

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        y = rng.random(1000) < 0.5
        s = np.round(rng.normal(y * 1.2, 1.0), 2)
        worst = max(worst, abs(compute_eer(y, s)[0] - brute_force_eer(y, s)))
    y = np.array([1, 1, 0, 0], bool)
    sep = compute_eer(y, np.array([2.0, 3.0, 0.0, 1.0]))[0]
    same = compute_eer(y, np.array([1.0, 2.0, 1.0, 2.0]))[0]
    ok = worst < 1e-6 and sep == 0.0 and same == 50.0
    return ok, f"max deviation {worst:.1e}; separated {sep}%, identical {same}%"


def check_wer():
    from .oracles import exhaustive_wer_check
    from .privacy import align_words

    n, bad = exhaustive_wer_check(align_words, max_total=8)
    return not bad, f"{n} pairs, {len(bad)} mismatches"


def check_trials():
    from .corpus import Entry, Manifest
    from .privacy import gen_trials

    entries = [Entry(f"u{i:04d}", f"{i}.wav", f"s{i % 40:02d}") for i in range(2620)]
    t = gen_trials(Manifest(entries), 5, 5, 0)
    return len(t) == 26200, f"{len(t)} trials for 2620 utterances at 5/5"


def check_anonymizer_identity():
    from .anonymize import McAdamsConfig, VtlnConfig, mcadams_anonymize, vtln_anonymize
    from .synth import load_fixture, synth_utterance

    spk = load_fixture()["privacy_speakers"][3]
    w, _ = synth_utterance(spk, 1)
    x = w.samples
    out = []
    for y in (mcadams_anonymize(w, McAdamsConfig(alpha=1.0)), vtln_anonymize(w, VtlnConfig(1.0))):
        out.append(10 * np.log10(np.sum(x ** 2) / max(np.sum((x - y.samples) ** 2), 1e-30)))
    return min(out) > 25.0, "SNR mcadams {:.0f} dB, vtln {:.0f} dB".format(*out)


def check_features():
    from .pipeline import utterance_features
    from .synth import load_fixture, synth_utterance

    spk = load_fixture()["patho_speakers"][7]
    w, _ = synth_utterance(spk, 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dims = {k: len(v) for k, v in utterance_features(w).items()}
    want = {"articulation": 234, "prosody": 103, "phonation": 28, "phonology": 72}
    return dims == want, ", ".join(f"{k} {v}" for k, v in dims.items())


def check_forest(seed):
    from .classifier import Dataset, Forest, ForestConfig, evaluate, train_forest

    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], 60)
    X = rng.standard_normal((120, 20))
    X[:, :3] += 2.0 * y[:, None]
    d = Dataset(X, y)
    cfg = ForestConfig(25, 20, seed=seed)
    a, b = train_forest(d, cfg), train_forest(d, cfg)
    same = a.to_text() == b.to_text() == Forest.from_text(a.to_text()).to_text()
    acc = evaluate(a, d).accuracy
    return same and acc == 1.0, f"deterministic={same}, resubstitution accuracy {acc:.2f}"


def check_end_to_end(seed):
    from .anonymize import AnonymizerSpec, anonymize_batch
    from .privacy import eval_anonymizer, gen_trials
    from .synth import build_corpus

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        m = build_corpus(tmp / "orig", "privacy", 4, seed)
        t = gen_trials(m, 3, 3, seed)
        anonymize_batch(m, AnonymizerSpec("mcadams", {"policy": "cross_gender"}, seed), tmp / "anon")
        row = eval_anonymizer(m, t, tmp / "orig", tmp / "anon")
    ok = row.eer_anonymized > row.eer_original
    return ok, f"EER {row.eer_original:.1f}% -> {row.eer_anonymized:.1f}% (mcadams)"


def checks(seed: int = 0, quick: bool = False) -> list:
    out = [
        ("bundled fixture checksum", check_fixture),
        ("stft/istft roundtrip", check_stft_roundtrip),
        ("per-frame Parseval", check_parseval),
        ("mel filterbank coverage", check_mel_coverage),
        ("Griffin-Lim monotone objective", check_griffin_lim),
        ("f0 sweep accuracy", check_f0_sweep),
        ("EER vs brute-force oracle", lambda: check_eer(seed)),
        ("WER vs alignment enumeration", check_wer),
        ("trial-count arithmetic", check_trials),
        ("anonymizer identity settings", check_anonymizer_identity),
        ("feature dimensions", check_features),
        ("forest determinism", lambda: check_forest(seed)),
    ]
    if not quick:
        out.append(("end-to-end EER increase", lambda: check_end_to_end(seed)))
    return out


def run_selftest(seed: int = 0, quick: bool = False, echo=print) -> bool:
    """Run every check, print one line each, return True when all pass."""
    passed = 0
    todo = checks(seed, quick)
    start = time.perf_counter()
    for name, fn in todo:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        passed += bool(ok)
        echo(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail} ({time.perf_counter() - t0:.1f}s)")
    echo(f"{passed}/{len(todo)} checks passed in {time.perf_counter() - start:.1f}s")
    return passed == len(todo)
