"""Privacy/utility report for one or more anonymization conditions."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..corpus import Manifest
from ..textio import format_table, write_csv
from .embedding import embed_baseline
from .metrics import compute_eer, compute_wer
from .scoring import EmbeddingCache, score_trials
from .trials import TrialSet

ORIENTATIONS = ("attack", "anon_anon")
HEADER = ("condition", "eer_original", "eer_anonymized", "delta_eer", "wer_original",
          "wer_anonymized")


@dataclass(frozen=True)
class EvalRow:
    condition: str
    eer_original: float
    eer_anonymized: float
    wer_original: float | None = None
    wer_anonymized: float | None = None

    @property
    def delta_eer(self) -> float:
        return self.eer_anonymized - self.eer_original

    def cells(self) -> list:
        def fmt(v):
            return "-" if v is None else f"{v:.2f}"
        return [self.condition, fmt(self.eer_original), fmt(self.eer_anonymized),
                fmt(self.delta_eer), fmt(self.wer_original), fmt(self.wer_anonymized)]


def audio_paths(m: Manifest, root) -> dict:
    """Utterance id -> file under ``root``: the manifest's relative path, else ``<utt_id>.wav``."""
    root = Path(root)
    out = {}
    for e in m:
        for cand in (root / e.audio_path, root / f"{e.utt_id}.wav"):
            if cand.is_file():
                out[e.utt_id] = cand
                break
    return out


def eval_anonymizer(m: Manifest, trials: TrialSet, original_root, anon_root,
                    embedder=embed_baseline, orientation: str = "attack", condition: str = "anon",
                    refs: dict | None = None, hyps_original: dict | None = None,
                    hyps_anonymized: dict | None = None, cache: EmbeddingCache | None = None,
                    workers: int = 1) -> EvalRow:
    """EER before and after anonymization, plus WER when hypotheses are given.

    ``attack`` enrolls on original audio and tests on anonymized audio;
    ``anon_anon`` uses anonymized audio on both sides.
    """
    if orientation not in ORIENTATIONS:
        raise ValueError(f"orientation must be one of {ORIENTATIONS}")
    trials.check_manifest(m)
    cache = cache if cache is not None else EmbeddingCache(embedder)
    orig = audio_paths(m, original_root)
    anon = audio_paths(m, anon_root)
    eer_o, _ = compute_eer(trials, score_trials(trials, orig, orig, cache=cache, workers=workers))
    enroll = orig if orientation == "attack" else anon
    eer_a, _ = compute_eer(trials, score_trials(trials, enroll, anon, cache=cache, workers=workers))
    refs = refs if refs is not None else {e.utt_id: e.transcript for e in m if e.transcript}
    wer_o = compute_wer(refs, hyps_original).wer if hyps_original else None
    wer_a = compute_wer(refs, hyps_anonymized).wer if hyps_anonymized else None
    return EvalRow(condition, eer_o, eer_a, wer_o, wer_a)


def report_table(rows) -> str:
    return format_table(HEADER, [r.cells() for r in rows])


def write_report(path, rows) -> None:
    write_csv(path, HEADER, [r.cells() for r in rows])
