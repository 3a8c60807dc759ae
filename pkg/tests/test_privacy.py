import shutil

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import noise, tone
from voxanon.audio import Waveform
from voxanon.corpus import Entry, Manifest
from voxanon.errors import CoverageError, FormatError, InputTooShort, ProtocolError
from voxanon.oracles import brute_force_eer, exhaustive_wer_check, optimal_breakdowns
from voxanon.privacy import (EmbeddingCache, ScoreSet, TrialSet, align_words, compute_eer,
                             compute_wer, cosine, embed_baseline, eval_anonymizer, gen_trials,
                             normalize_text, report_table, roc_points, score_trials, write_report)
from voxanon.privacy.embedding import DIM
from voxanon.synth import build_corpus
from voxanon.textio import read_scores, write_scores


def manifest(n_spk, n_utt):
    return Manifest([Entry(f"s{s}_u{u}", f"{s}/{u}.wav", f"s{s}")
                     for s in range(n_spk) for u in range(n_utt)])


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("orig")
    m = build_corpus(root, "privacy", 3, 0)
    # four speakers keep the module quick
    keep = list(m.by_speaker())[:4]
    return m.subset(u for s in keep for u in m.by_speaker()[s]), root


# trials

def test_trials_two_by_two():
    t = gen_trials(manifest(2, 2), 1, 1, 0)
    assert len(t) == 8
    assert t.n_targets == 4


def test_trials_seeded():
    m = manifest(4, 5)
    assert gen_trials(m, 2, 3, 7).trials == gen_trials(m, 2, 3, 7).trials
    assert gen_trials(m, 2, 3, 7).trials != gen_trials(m, 2, 3, 8).trials


def test_trials_partners():
    m = manifest(5, 4)
    spk = {e.utt_id: e.speaker_id for e in m}
    for e, x, y in gen_trials(m, 3, 3, 1):
        assert e != x
        assert (spk[e] == spk[x]) == y


def test_trials_short_speaker_named():
    entries = list(manifest(3, 4)) + [Entry("lone", "l.wav", "solo")]
    with pytest.raises(ProtocolError, match="solo"):
        gen_trials(Manifest(entries), 1, 1, 0)


def test_trials_too_few_others():
    with pytest.raises(ProtocolError, match="other-speaker"):
        gen_trials(manifest(2, 2), 0, 3, 0)


def test_trials_one_speaker():
    with pytest.raises(ProtocolError):
        gen_trials(manifest(1, 5), 1, 1, 0)


@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 1), st.integers(0, 4),
       st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_trials_count_property(n_spk, n_utt, k_same, k_diff, seed):
    k_same = min(k_same, n_utt - 1)
    k_diff = min(k_diff, (n_spk - 1) * n_utt)
    t = gen_trials(manifest(n_spk, n_utt), k_same, k_diff, seed)
    n = n_spk * n_utt
    assert len(t) == n * (k_same + k_diff)
    assert t.n_targets == n * k_same


def test_trials_io(tmp_path):
    t = gen_trials(manifest(3, 3), 1, 2, 0)
    t.save(tmp_path / "trials.txt")
    assert TrialSet.load(tmp_path / "trials.txt").trials == t.trials
    (tmp_path / "bad.txt").write_text("a b 2\n")
    with pytest.raises(FormatError, match="bad.txt:1"):
        TrialSet.load(tmp_path / "bad.txt")


def test_trials_check_manifest():
    t = TrialSet((("a", "b", True),))
    with pytest.raises(ProtocolError, match="a, b"):
        t.check_manifest(manifest(1, 1))
    with pytest.raises(ProtocolError):
        TrialSet((("a", "a", True),))


def test_scores_from_mapping_either_order():
    t = TrialSet((("a", "b", True), ("a", "c", False)))
    s = ScoreSet.from_mapping(t, {("a", "b"): 0.5, ("c", "a"): -0.5})
    assert list(s.scores) == [0.5, -0.5]
    with pytest.raises(ProtocolError, match="a/c"):
        ScoreSet.from_mapping(t, {("a", "b"): 0.5})


def test_score_file_roundtrip(tmp_path):
    write_scores(tmp_path / "s.txt", [("a", "b"), ("c", "d")], [0.25, -1e-3])
    assert read_scores(tmp_path / "s.txt") == {("a", "b"): 0.25, ("c", "d"): -1e-3}


# EER

def test_eer_separated_and_identical():
    y = np.array([1, 1, 0, 0], bool)
    assert compute_eer(y, np.array([2.0, 3.0, 0.0, 1.0]))[0] == 0.0
    assert compute_eer(y, np.array([1.0, 2.0, 1.0, 2.0]))[0] == 50.0
    assert compute_eer(y, np.full(4, 0.3))[0] == 50.0


def test_eer_fully_inverted():
    y = np.array([1, 1, 0, 0], bool)
    assert compute_eer(y, np.array([0.0, 1.0, 2.0, 3.0]))[0] == 100.0


def test_eer_threshold_separates():
    y = np.array([1, 1, 1, 0, 0, 0], bool)
    s = np.array([5.0, 6.0, 7.0, 1.0, 2.0, 3.0])
    eer, thr = compute_eer(y, s)
    assert eer == 0.0
    assert 3.0 < thr <= 5.0


def test_eer_interpolated_value():
    # threshold 4 accepts non-targets 4, 6 and rejects targets 1, 3: FAR = FRR = 2/3
    y = np.array([1, 0, 1, 0, 1, 0], bool)
    s = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    assert compute_eer(y, s)[0] == pytest.approx(200 / 3)
    y = np.array([0, 1, 0, 1, 1, 1], bool)
    s = np.arange(6.0)
    # threshold 2: FAR 1/2, FRR 1/4; threshold 3: FAR 0, FRR 1/4; halfway -> 1/4
    assert compute_eer(y, s)[0] == pytest.approx(25.0)


@given(st.integers(0, 2 ** 32 - 1), st.integers(4, 300), st.sampled_from([0, 1, 2]))
@settings(max_examples=60, deadline=None)
def test_eer_matches_brute_force(seed, n, decimals):
    rng = np.random.default_rng(seed)
    y = rng.random(n) < 0.5
    y[:2] = [True, False]
    s = np.round(rng.normal(y * rng.uniform(0, 3), 1.0), decimals)
    assert compute_eer(y, s)[0] == pytest.approx(brute_force_eer(y, s), abs=1e-6)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_eer_monotone_transform_invariant(seed):
    rng = np.random.default_rng(seed)
    y = rng.random(200) < 0.4
    y[:2] = [True, False]
    s = rng.normal(y * 1.0, 1.0)
    assert compute_eer(y, np.exp(s) * 3 + 1)[0] == pytest.approx(compute_eer(y, s)[0], abs=1e-9)


def test_eer_bounds_and_errors():
    with pytest.raises(ProtocolError):
        compute_eer(np.ones(3, bool), np.arange(3.0))
    with pytest.raises(ValueError):
        compute_eer(np.array([1, 0], bool), np.arange(3.0))
    with pytest.raises(ValueError):
        compute_eer(np.array([1, 0], bool), np.array([np.nan, 0.0]))


def test_roc_points_ends():
    thr, far, frr = roc_points(np.array([0.1, 0.2, 0.2, 0.9]), np.array([0, 1, 0, 1], bool))
    assert len(thr) == 4
    assert (far[0], frr[0]) == (1.0, 0.0)
    assert (far[-1], frr[-1]) == (0.0, 1.0)
    assert np.all(np.diff(far) <= 0) and np.all(np.diff(frr) >= 0)


def test_eer_accepts_trial_and_score_sets():
    t = TrialSet((("a", "b", True), ("a", "c", False)))
    assert compute_eer(t, ScoreSet(np.array([0.9, 0.1])))[0] == 0.0


# WER

def test_wer_sub_and_del():
    r = compute_wer({"u": "A B C D"}, {"u": "A X C"})
    assert (r.substitutions, r.deletions, r.insertions, r.ref_words) == (1, 1, 0, 4)
    assert r.wer == 50.0


def test_wer_one_insertion_per_ten():
    rng = np.random.default_rng(0)
    vocab = ["alpha", "beta", "gamma", "delta", "echo"]
    refs, hyps = {}, {}
    for i in range(20):
        words = list(rng.choice(vocab, 10))
        refs[f"u{i}"] = " ".join(words)
        words.insert(int(rng.integers(0, 11)), "zulu")
        hyps[f"u{i}"] = " ".join(words)
    r = compute_wer(refs, hyps)
    assert (r.insertions, r.substitutions, r.deletions) == (20, 0, 0)
    assert r.wer == pytest.approx(10.0)


def test_wer_identity_and_empty_hyp():
    assert compute_wer({"u": "a b c"}, {"u": "a b c"}).wer == 0.0
    assert compute_wer({"u": "a b c"}, {"u": ""}).wer == 100.0


def test_wer_normalization():
    assert normalize_text("Hello, world!  It's ok.") == ["HELLO", "WORLD", "IT'S", "OK"]
    assert compute_wer({"u": "hello world"}, {"u": "HELLO, World."}).wer == 0.0
    assert compute_wer({"u": "hello world"}, {"u": "HELLO, World."}, normalize=False).wer == 100.0


def test_wer_missing_reference():
    with pytest.raises(KeyError, match="ghost"):
        compute_wer({"u": "a"}, {"u": "a", "ghost": "b"})


def test_wer_corpus_aggregation():
    refs = {"a": "x y z w", "b": "p q"}
    hyps = {"a": "x y", "b": "p q r s t"}
    r = compute_wer(refs, hyps)
    # a: 2 deletions of 4 words; b: 3 insertions over 2 words
    assert (r.deletions, r.insertions, r.ref_words) == (2, 3, 6)
    assert r.wer == pytest.approx(100 * 5 / 6)
    per_utt_mean = (50.0 + 150.0) / 2
    assert r.wer != pytest.approx(per_utt_mean)


def test_wer_unpacks():
    wer, s, d, i, n = compute_wer({"u": "a b"}, {"u": "a c"})
    assert (wer, s, d, i, n) == (50.0, 1, 0, 0, 2)


def test_align_tie_break_prefers_substitution():
    a = align_words(["a"], ["b"])
    assert (a.substitutions, a.deletions, a.insertions) == (1, 0, 0)


def test_align_exhaustive_small():
    n, bad = exhaustive_wer_check(align_words, max_total=6)
    assert n > 1000
    assert bad == []


@given(st.lists(st.sampled_from("abcd"), max_size=6), st.lists(st.sampled_from("abcd"), max_size=6))
@settings(max_examples=150, deadline=None)
def test_align_optimal_property(ref, hyp):
    a = align_words(ref, hyp)
    best, triples = optimal_breakdowns(ref, hyp)
    assert a.errors == best
    assert (a.substitutions, a.deletions, a.insertions) in triples
    assert a.ref_words == len(ref)


# embedding and scoring

def test_embedding_shape_and_norm(speech):
    e = embed_baseline(speech)
    assert len(e) == DIM == 50
    assert np.linalg.norm(e.vector) == pytest.approx(1.0)


def test_embedding_deterministic(speech):
    assert np.array_equal(embed_baseline(speech).vector, embed_baseline(speech).vector)


def test_embedding_too_short():
    with pytest.raises(InputTooShort):
        embed_baseline(tone(150, seconds=0.4))


def test_embedding_unvoiced_finite():
    assert np.all(np.isfinite(embed_baseline(noise(1.0)).vector))


def test_embedding_within_beats_between(corpus):
    m, root = corpus
    cache = EmbeddingCache()
    groups = list(m.by_speaker().values())
    within, between = [], []
    for gi, g in enumerate(groups):
        for h in groups[gi:]:
            for a in g:
                for b in h:
                    if a == b:
                        continue
                    c = cosine(cache.get(m.path(a)), cache.get(m.path(b)))
                    (within if g is h else between).append(c)
    assert np.mean(within) > np.mean(between)


def test_cosine_bounds_and_symmetry():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a, b = rng.standard_normal(50), rng.standard_normal(50)
        assert -1.0 <= cosine(a, b) <= 1.0
        assert cosine(a, b) == pytest.approx(cosine(b, a))
    assert cosine(a, 2 * a) == pytest.approx(1.0)
    assert cosine(a, np.zeros(50)) == 0.0


def test_score_identical_copy(corpus, tmp_path):
    m, root = corpus
    u = m.ids[0]
    shutil.copy(m.path(u), tmp_path / "copy.wav")
    t = TrialSet(((u, "copy", True),))
    s = score_trials(t, {u: m.path(u), "copy": tmp_path / "copy.wav"})
    assert s.scores[0] == pytest.approx(1.0)


def test_score_coverage_error(corpus):
    m, _ = corpus
    t = TrialSet(((m.ids[0], "missing1", True), ("missing2", m.ids[1], False)))
    with pytest.raises(CoverageError) as err:
        score_trials(t, {u: m.path(u) for u in m.ids})
    assert err.value.missing == ["missing1", "missing2"]


def test_score_workers_match(corpus):
    m, _ = corpus
    t = gen_trials(m, 1, 1, 0)
    paths = {u: m.path(u) for u in m.ids}
    a = score_trials(t, paths)
    b = score_trials(t, paths, workers=3)
    assert np.allclose(a.scores, b.scores)


def test_cache_reuses_embeddings(tmp_path):
    calls = []

    def embedder(w: Waveform):
        calls.append(1)
        return embed_baseline(w)

    from voxanon.audio import write_wav
    write_wav(tmp_path / "a.wav", tone(150, seconds=0.6))
    cache = EmbeddingCache(embedder)
    cache.get(tmp_path / "a.wav")
    cache.get(str(tmp_path / "." / "a.wav"))
    assert len(calls) == 1 and len(cache) == 1


# evaluation

def test_eval_identity_gives_zero_delta(corpus):
    m, root = corpus
    t = gen_trials(m, 2, 2, 0)
    row = eval_anonymizer(m, t, root, root, condition="none")
    assert row.delta_eer == 0.0
    assert row.wer_original is None
    row2 = eval_anonymizer(m, t, root, root, orientation="anon_anon")
    assert row2.eer_anonymized == row.eer_original


def test_eval_with_hypotheses_and_report(corpus, tmp_path):
    m, root = corpus
    t = gen_trials(m, 2, 2, 0)
    refs = {e.utt_id: e.transcript for e in m}
    hyps = {u: refs[u] for u in m.ids}
    hyps_bad = {u: " ".join(refs[u].split()[1:]) for u in m.ids}
    row = eval_anonymizer(m, t, root, root, refs=refs, hyps_original=hyps,
                          hyps_anonymized=hyps_bad)
    assert row.wer_original == 0.0
    assert row.wer_anonymized > 0.0
    bare = eval_anonymizer(m, t, root, root, condition="x")
    text = report_table([row, bare])
    assert len(text.splitlines()) == 4
    assert text.splitlines()[-1].split()[-2:] == ["-", "-"]
    write_report(tmp_path / "r.csv", [row, bare])
    assert (tmp_path / "r.csv").read_text().count("\n") == 3


def test_eval_rejects_bad_orientation(corpus):
    m, root = corpus
    with pytest.raises(ValueError):
        eval_anonymizer(m, gen_trials(m, 1, 1, 0), root, root, orientation="sideways")
