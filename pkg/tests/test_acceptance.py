"""Acceptance criteria, one test each, every one printing a PASS/FAIL line."""
import itertools
import time
import warnings

import numpy as np
import pytest

from conftest import SR, pulse_train, tone
from voxanon.anonymize import (AnonymizerSpec, McAdamsConfig, VtlnConfig, anonymize_batch,
                               mcadams_anonymize, vtln_anonymize)
from voxanon.audio import (FEATURE_FRAMES, FrameSpec, Waveform, frame_energy_from_spectrum,
                           griffin_lim, istft, mel_filterbank, stft)
from voxanon.classifier import (Dataset, ForestConfig, condition_matrix, evaluate, harmonic_mean,
                                metrics_from_predictions, train_forest)
from voxanon.corpus import Entry, Manifest, speaker_split
from voxanon.features import DIMENSIONS, extract_phonation
from voxanon.features import articulation, phonation, phonology, prosody
from voxanon.features.bark import N_BANDS
from voxanon.oracles import brute_force_eer, exhaustive_wer_check, optimal_breakdowns
from voxanon.pipeline import extract_corpus, feature_datasets, utterance_features
from voxanon.pitch import estimate_f0
from voxanon.privacy import (align_words, audio_paths, compute_eer, compute_wer, eval_anonymizer,
                             gen_trials)
from voxanon.selftest import run_selftest
from voxanon.synth import build_corpus, load_fixture, synth_utterance


@pytest.fixture
def report(capsys):
    """Print ``PASS/FAIL criterion N`` with elapsed time, then assert."""
    start = time.perf_counter()

    def done(number, title, ok, detail):
        elapsed = time.perf_counter() - start
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail} "
                  f"[{elapsed:.1f}s]")
        return elapsed

    return done


def _snr(x, y):
    return 10 * np.log10(np.sum(x ** 2) / max(np.sum((x - y) ** 2), 1e-30))


def test_criterion_1_eer_oracle(report):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        y = rng.random(1000) < rng.uniform(0.2, 0.8)
        s = rng.normal(y * rng.uniform(0.0, 3.0), 1.0)
        if seed % 2:
            s = np.round(s, 1)  # heavy ties on odd seeds
        worst = max(worst, abs(compute_eer(y, s)[0] - brute_force_eer(y, s)))
    y = np.repeat([True, False], 500)
    separated = compute_eer(y, np.r_[np.linspace(1, 2, 500), np.linspace(-2, 0.5, 500)])[0]
    identical = compute_eer(y, np.r_[np.arange(500.0), np.arange(500.0)])[0]
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and separated == 0.0 and identical == 50.0 and elapsed < 10
    report(1, "EER oracle equivalence",
           ok, f"max |diff| {worst:.1e} over 100 sets; separated {separated}%, identical "
               f"{identical}%")
    assert ok


def test_criterion_2_wer_oracle(report):
    t0 = time.perf_counter()
    n_pairs, bad = exhaustive_wer_check(align_words, ("a", "b", "c"), max_total=8)
    # every length pair up to 8 x 8, sampled, against the same path enumeration
    rng = np.random.default_rng(0)
    sampled_bad = 0
    shapes = [(n, m) for n in range(9) for m in range(9)]
    for n, m in shapes:
        for _ in range(4):
            ref = list(rng.choice(["a", "b", "c"], n))
            hyp = list(rng.choice(["a", "b", "c"], m))
            a = align_words(ref, hyp)
            best, triples = optimal_breakdowns(ref, hyp)
            sampled_bad += a.errors != best or (a.substitutions, a.deletions, a.insertions) not in triples
    # corpus aggregation
    refs, hyps, totals = {}, {}, np.zeros(4)
    for i in range(200):
        ref = list(rng.choice(["a", "b", "c"], rng.integers(0, 7)))
        hyp = list(rng.choice(["a", "b", "c"], rng.integers(0, 7)))
        refs[f"u{i}"], hyps[f"u{i}"] = ref, hyp
        best, triples = optimal_breakdowns(ref, hyp)
        s, d, ins = min(triples)
        totals += [s, d, ins, len(ref)]
    r = compute_wer(refs, hyps)
    agg_ok = (r.substitutions + r.deletions + r.insertions == totals[:3].sum()
              and r.ref_words == totals[3]
              and abs(r.wer - 100 * totals[:3].sum() / totals[3]) < 1e-9)
    elapsed = time.perf_counter() - t0
    ok = not bad and not sampled_bad and agg_ok and elapsed < 30
    report(2, "WER oracle equivalence", ok,
           f"{n_pairs} exhaustive pairs (total length <= 8) with {len(bad)} mismatches; "
           f"{len(shapes) * 4} sampled pairs up to 8x8 with {sampled_bad} mismatches; "
           f"aggregation {'ok' if agg_ok else 'WRONG'}")
    assert ok


def _mock(n_utts, n_speakers):
    return Manifest([Entry(f"u{i:05d}", f"{i}.wav", f"s{i % n_speakers:03d}")
                     for i in range(n_utts)])


def test_criterion_3_trial_arithmetic(report):
    a = gen_trials(_mock(2620, 40), 5, 5, 0)
    b = gen_trials(_mock(3989, 10), 4, 4, 0)
    ok = len(a) == 26200 and len(b) == 31912 and a.n_targets == 13100 and b.n_targets == 15956
    report(3, "trial-protocol arithmetic", ok,
           f"2620 utts @5/5 -> {len(a)} trials; 3989 utts @4/4 -> {len(b)} trials")
    assert ok


def test_criterion_4_anonymization_efficacy(report, tmp_path):
    t0 = time.perf_counter()
    m = build_corpus(tmp_path / "orig", "privacy", 6, 0)
    trials = gen_trials(m, 5, 5, 0)
    eer = {}
    for method in ("mcadams", "vtln", "mel_gl"):
        for policy in ("cross_gender", "same_direction"):
            out = tmp_path / f"{method}_{policy}"
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                anonymize_batch(m, AnonymizerSpec(method, {"policy": policy}, 0), out)
            row = eval_anonymizer(m, trials, tmp_path / "orig", out)
            eer[(method, policy)] = row.eer_anonymized
            eer["original"] = row.eer_original
    base = eer["original"]
    doubled = {k: eer[(k, "cross_gender")] >= 2 * base for k in ("mcadams", "vtln", "mel_gl")}
    cross_wins = [k for k in ("mcadams", "vtln", "mel_gl")
                  if eer[(k, "cross_gender")] >= eer[(k, "same_direction")]]
    elapsed = time.perf_counter() - t0
    n_spk = len(m.by_speaker())
    ok = n_spk >= 10 and all(doubled.values()) and len(cross_wins) >= 2 and elapsed < 180
    detail = "; ".join(f"{k} cross {eer[(k, 'cross_gender')]:.2f} / same {eer[(k, 'same_direction')]:.2f}"
                       for k in ("mcadams", "vtln", "mel_gl"))
    report(4, "anonymization efficacy", ok,
           f"{n_spk} speakers, {len(trials)} trials, original EER {base:.2f}%; {detail}; "
           f"cross >= same for {', '.join(cross_wins)}")
    assert ok


def test_criterion_5_identity_and_gl(report):
    fx = load_fixture()
    speakers = fx["privacy_speakers"] + fx["patho_speakers"]
    worst_snr = np.inf
    rises = 0
    for i, spk in enumerate(speakers):
        w, _ = synth_utterance(spk, [5, i], fx["vowels"])
        if i % 4 == 0:
            for y in (mcadams_anonymize(w, McAdamsConfig(alpha=1.0)),
                      vtln_anonymize(w, VtlnConfig(warp_factor=1.0))):
                worst_snr = min(worst_snr, _snr(w.samples, y.samples))
        mag = np.abs(stft(w, FEATURE_FRAMES, 1024).bins)
        _, hist = griffin_lim(mag, FEATURE_FRAMES, 60, i, SR, return_objective=True)
        rises += int(np.sum(np.diff(hist) > 0))
    ok = worst_snr > 25 and rises == 0
    report(5, "identity fidelity and Griffin-Lim monotonicity", ok,
           f"worst identity SNR {worst_snr:.1f} dB; {rises} objective increases over "
           f"{len(speakers)} fixtures x 60 iterations")
    assert ok


def test_criterion_6_feature_structure(report):
    fx = load_fixture()
    w, _ = synth_utterance(fx["patho_speakers"][0], 0, fx["vowels"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vecs = utterance_features(w)
    dims = {k: len(v) for k, v in vecs.items()}
    blocks = {k: s.stop - s.start for k, s in prosody.block_slices().items()}
    n_classes = len(phonology.PHONOLOGICAL_CLASSES)
    art_desc = articulation.DESCRIPTORS
    art_ok = (N_BANDS == 22 and articulation.N_MFCC == 12
              and sum(d.startswith("bark") for d in art_desc) == 22
              and sum(d.startswith("mfcc") for d in art_desc) == 12
              and sum(d.startswith("d_mfcc") for d in art_desc) == 12
              and sum(d.startswith("dd_mfcc") for d in art_desc) == 12
              and dims["articulation"] == 234)
    # perfectly periodic: an exactly tiled cycle
    cycle = np.r_[np.hanning(40), np.zeros(120)] * np.sin(np.arange(160) / 3.0)
    periodic = Waveform(0.5 * np.tile(cycle, 60), SR)
    d0 = extract_phonation(periodic, estimate_f0(periodic)).as_dict()
    zero = max(abs(d0[f"{t}_{s}"]) for t in ("jitter", "shimmer", "apq5", "ppq5")
               for s in ("mean", "std"))
    # alternating 160/168-sample periods: jitter = 100 * 8 / 164 percent
    alt, marks = pulse_train([160, 168] * 30)
    jit = extract_phonation(alt, estimate_f0(alt), marks).as_dict()["jitter_mean"]
    expected = 100 * 8 / 164
    ok = (dims == DIMENSIONS and dims["prosody"] == 103
          and blocks == {"f0": 30, "energy": 48, "duration": 25}
          and n_classes == 18 and dims["phonology"] == 4 * 18 and art_ok
          and len(phonation.TRACKS) == 7 and zero == 0.0 and abs(jit - expected) < 0.1)
    report(6, "feature dimensionality and structure", ok,
           f"dims {dims}; prosody blocks {blocks}; {n_classes} phonological classes; "
           f"articulation 22 Bark + 12 MFCC x 3 orders; {len(phonation.TRACKS)} phonation "
           f"tracks; periodic max perturbation {zero}; jitter {jit:.3f} vs {expected:.3f}")
    assert ok


def _separable_corpus(n, p, seed):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    X = rng.standard_normal((n, p))
    X[:, :5] += 1.5 * (2 * y[:, None] - 1)  # five informative features
    return Dataset(X, y)


def test_criterion_7_classifier(report, tmp_path):
    t0 = time.perf_counter()
    cfg = ForestConfig(100, 20, "entropy", seed=0)
    train, test = _separable_corpus(200, 103, 1), _separable_corpus(100, 103, 2)
    a = train_forest(train, cfg)
    b = train_forest(train, cfg, workers=2)
    reproducible = a.to_text() == b.to_text()
    acc = evaluate(a, test).accuracy
    rng = np.random.default_rng(0)
    f1_err = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 50))
        m = metrics_from_predictions(rng.integers(0, 2, n), rng.integers(0, 2, n))
        f1_err = max(f1_err, abs(m.f1 - harmonic_mean(m.precision, m.recall)))
    # 4 x 4 grid on the bundled pathological panel
    g0 = time.perf_counter()
    m = build_corpus(tmp_path / "orig", "patho", 6, 0)
    split = speaker_split(m, 0.34, 0)
    roots = {"original": tmp_path / "orig"}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for method in ("mcadams", "vtln", "mel_gl"):
            anonymize_batch(m, AnonymizerSpec(method, {"policy": "random"}, 0), tmp_path / method)
            roots[method] = tmp_path / method
    trains, tests = {}, {}
    for cond, root in roots.items():
        extract_corpus(m, audio_paths(m, root), tmp_path / "feat" / cond)
        trains[cond], tests[cond] = feature_datasets(tmp_path / "feat" / cond, split)
    grid = condition_matrix(trains, tests, cfg)
    grid_time = time.perf_counter() - g0
    for r in grid.averages.values():
        f1_err = max(f1_err, abs(r.f1 - harmonic_mean(r.precision, r.recall)))
    for r in grid.cells.values():
        f1_err = max(f1_err, abs(r.f1 - harmonic_mean(r.precision, r.recall)))
    ok = (reproducible and acc >= 0.95 and f1_err <= 1e-9 and len(grid.cells) == 16
          and grid_time < 300)
    report(7, "classifier properties", ok,
           f"bit-reproducible {reproducible}; separable test accuracy {100 * acc:.1f}%; "
           f"max |F1 - H(P,R)| {f1_err:.1e}; 4x4 grid {len(grid.cells)} cells in "
           f"{grid_time:.0f}s\n" + grid.accuracy_table())
    assert ok
    assert time.perf_counter() - t0 < 400


def test_criterion_8_dsp_invariants(report):
    rng = np.random.default_rng(0)
    fx = load_fixture()
    speech, _ = synth_utterance(fx["privacy_speakers"][2], 0, fx["vowels"])
    signals = [Waveform(0.1 * rng.standard_normal(SR), SR), speech]
    rt = 0.0
    for w, spec, n_fft in itertools.product(signals, [FEATURE_FRAMES, FrameSpec(32.0, 8.0)],
                                            [512, 1024]):
        y = istft(stft(w, spec, n_fft), spec, len(w)).samples
        margin = spec.frame_samples(SR)
        rt = max(rt, float(np.max(np.abs(y[margin:-margin] - w.samples[margin:-margin]))))
    pars = 0.0
    for n_fft in (256, 512, 1024, 1023):
        frames = rng.standard_normal((50, n_fft))
        for frame in frames:
            e = np.sum(frame ** 2)
            pars = max(pars, abs(frame_energy_from_spectrum(np.fft.rfft(frame), n_fft) - e) / e)
    uncovered = 0
    for n_mels, n_fft, fmax in itertools.product((40, 80, 128), (512, 1024, 2048), (8000, 7600)):
        fb = mel_filterbank(n_mels, n_fft, SR, 0.0, fmax)
        freqs = np.arange(n_fft // 2 + 1) * SR / n_fft
        inside = (freqs > 0) & (freqs < fmax)
        uncovered += int(np.sum(fb.sum(axis=0)[inside] <= 0))
    worst_f0 = 0.0
    for f0 in range(80, 351, 10):
        c = estimate_f0(tone(f0))
        est = np.median(c.f0_hz[c.voiced]) if c.voiced.any() else 0.0
        worst_f0 = max(worst_f0, abs(est - f0) / f0)
    ok = rt < 1e-6 and pars < 1e-6 and uncovered == 0 and worst_f0 < 0.01
    report(8, "DSP invariants", ok,
           f"istft(stft) interior error {rt:.1e}; Parseval {pars:.1e}; {uncovered} uncovered "
           f"mel bins; f0 sweep worst {100 * worst_f0:.3f}%")
    assert ok


def test_criterion_9_selftest(report):
    lines = []
    t0 = time.perf_counter()
    passed = run_selftest(0, quick=False, echo=lines.append)
    elapsed = time.perf_counter() - t0
    ok = passed and elapsed < 300
    report(9, "end-to-end selftest", ok, lines[-1])
    assert ok, "\n".join(lines)
