"""Speaker-verification and ASR-based privacy/utility evaluation."""
from .embedding import SpeakerEmbedding, embed_baseline
from .evaluate import EvalRow, audio_paths, eval_anonymizer, report_table, write_report
from .metrics import align_words, compute_eer, compute_wer, normalize_text, roc_points
from .scoring import EmbeddingCache, cosine, score_trials
from .trials import ScoreSet, TrialSet, gen_trials

__all__ = [
    "SpeakerEmbedding", "embed_baseline", "EvalRow", "audio_paths", "eval_anonymizer",
    "report_table", "write_report", "align_words", "compute_eer", "compute_wer",
    "normalize_text", "roc_points", "EmbeddingCache", "cosine", "score_trials", "ScoreSet",
    "TrialSet", "gen_trials",
]
