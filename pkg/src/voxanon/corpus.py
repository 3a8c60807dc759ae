"""Manifests, train/test splits and bindings to externally produced artifacts."""
from __future__ import annotations

import csv
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CoverageError, ManifestError
from .textio import format_table, read_scores, read_transcripts

COLUMNS = ("utt_id", "audio_path", "speaker_id", "gender", "condition", "transcript")
REQUIRED = ("utt_id", "audio_path", "speaker_id")
GENDERS = ("male", "female", "unknown")
CONDITIONS = ("healthy", "pathological")
EXTERNAL_KINDS = ("anonymized_audio", "scores", "hypotheses", "posteriors")


@dataclass(frozen=True)
class Entry:
    utt_id: str
    audio_path: str
    speaker_id: str
    gender: str = "unknown"
    condition: str | None = None
    transcript: str | None = None


@dataclass
class Manifest:
    entries: list
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        self.root = Path(self.root)
        self._index = {e.utt_id: e for e in self.entries}
        if len(self._index) != len(self.entries):
            dup = [u for u, n in Counter(e.utt_id for e in self.entries).items() if n > 1]
            raise ManifestError(f"duplicate utt_id(s): {', '.join(sorted(dup))}")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, utt_id) -> Entry:
        return self._index[utt_id]

    def __contains__(self, utt_id):
        return utt_id in self._index

    @property
    def ids(self) -> list:
        return [e.utt_id for e in self.entries]

    def path(self, utt_id) -> Path:
        return self.root / self._index[utt_id].audio_path

    def by_speaker(self) -> dict:
        out = defaultdict(list)
        for e in self.entries:
            out[e.speaker_id].append(e.utt_id)
        return dict(out)

    def speaker_gender(self) -> dict:
        return {e.speaker_id: e.gender for e in self.entries}

    def subset(self, ids) -> "Manifest":
        ids = set(ids)
        return Manifest([e for e in self.entries if e.utt_id in ids], self.root)


def load_manifest(path, root=None) -> Manifest:
    """Read a tab-separated manifest with a header row.

    ``audio_path`` values are relative to ``root``, which defaults to the
    manifest's own directory.
    """
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        try:
            rows = list(csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE))
        except csv.Error as exc:
            raise ManifestError(f"unreadable manifest: {exc}") from exc
    if not rows:
        raise ManifestError("empty manifest, header row required", line=1)
    header = rows[0]
    missing = [c for c in REQUIRED if c not in header]
    if missing:
        raise ManifestError(f"missing column(s): {', '.join(missing)}", line=1)
    unknown = [c for c in header if c not in COLUMNS]
    if unknown:
        raise ManifestError(f"unknown column(s): {', '.join(unknown)}", line=1)
    entries, seen = [], {}
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != len(header):
            raise ManifestError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        rec = dict(zip(header, row))
        utt = rec["utt_id"]
        if not utt or not rec["speaker_id"] or not rec["audio_path"]:
            raise ManifestError("utt_id, audio_path and speaker_id must be non-empty", line=lineno)
        if utt in seen:
            raise ManifestError(f"duplicate utt_id {utt!r} (first on line {seen[utt]})", line=lineno)
        seen[utt] = lineno
        gender = rec.get("gender") or "unknown"
        if gender not in GENDERS:
            raise ManifestError(f"gender must be one of {GENDERS}, got {gender!r}", line=lineno)
        condition = rec.get("condition") or None
        if condition is not None and condition not in CONDITIONS:
            raise ManifestError(f"condition must be one of {CONDITIONS}, got {condition!r}", line=lineno)
        entries.append(Entry(utt, rec["audio_path"], rec["speaker_id"], gender, condition,
                             rec.get("transcript") or None))
    return Manifest(entries, path.parent if root is None else Path(root))


def save_manifest(m: Manifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(COLUMNS) + "\n")
        for e in m.entries:
            fields = [e.utt_id, e.audio_path, e.speaker_id, e.gender, e.condition or "",
                      e.transcript or ""]
            if any(unicodedata.category(ch) == "Cc" for f in fields for ch in f):
                raise ManifestError(f"{e.utt_id}: fields may not contain tabs, newlines "
                                    "or other control characters")
            fh.write("\t".join(fields) + "\n")


@dataclass(frozen=True)
class CorpusSummary:
    speakers: dict
    utterances: dict

    @property
    def total_utterances(self) -> int:
        return sum(self.utterances.values())

    def table(self) -> str:
        return format_table(
            ["Corpus", "Females", "Males", "Unknown", "Utterances"],
            [["", self.speakers["female"], self.speakers["male"], self.speakers["unknown"],
              f"{self.total_utterances:,}"]],
        )


def summarize(m: Manifest) -> CorpusSummary:
    """Speaker and utterance counts per gender."""
    speakers = {g: set() for g in GENDERS}
    utts = dict.fromkeys(GENDERS, 0)
    for e in m.entries:
        speakers[e.gender].add(e.speaker_id)
        utts[e.gender] += 1
    return CorpusSummary({g: len(s) for g, s in speakers.items()}, utts)


@dataclass(frozen=True)
class SplitSpec:
    train_ids: frozenset
    test_ids: frozenset

    def __post_init__(self):
        overlap = self.train_ids & self.test_ids
        if overlap:
            raise ManifestError(f"train and test share ids: {', '.join(sorted(overlap)[:5])}")


def load_split(path, m: Manifest | None = None) -> SplitSpec:
    """Read ``<utt_id> <train|test>`` lines."""
    train, test = set(), set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2 or parts[1] not in ("train", "test"):
                raise ManifestError("expected '<utt_id> <train|test>'", line=lineno)
            if m is not None and parts[0] not in m:
                raise ManifestError(f"unknown utt_id {parts[0]!r}", line=lineno)
            (train if parts[1] == "train" else test).add(parts[0])
    return SplitSpec(frozenset(train), frozenset(test))


@dataclass
class Binding:
    kind: str
    items: dict
    missing: list
    coverage: float


def attach_external(m: Manifest, kind: str, root_or_file, min_coverage: float = 0.99) -> Binding:
    """Bind manifest utterances to artifacts produced outside this package.

    ``anonymized_audio`` and ``posteriors`` take a directory; audio is looked
    up under the entry's relative path, then as ``<utt_id>.wav``; posteriors
    as ``<utt_id>.txt``. ``hypotheses`` and ``scores`` take a text file. For
    scores an utterance counts as covered when it appears in any pair.
    """
    if kind not in EXTERNAL_KINDS:
        raise ValueError(f"kind must be one of {EXTERNAL_KINDS}")
    src = Path(root_or_file)
    items, covered = {}, set()
    if kind == "anonymized_audio":
        for e in m:
            for cand in (src / e.audio_path, src / f"{e.utt_id}.wav"):
                if cand.is_file():
                    items[e.utt_id] = cand
                    covered.add(e.utt_id)
                    break
    elif kind == "posteriors":
        for e in m:
            cand = src / f"{e.utt_id}.txt"
            if cand.is_file():
                items[e.utt_id] = cand
                covered.add(e.utt_id)
    elif kind == "hypotheses":
        hyps = read_transcripts(src)
        items = {u: hyps[u] for u in m.ids if u in hyps}
        covered = set(items)
    else:
        scores = read_scores(src)
        items = scores
        for enroll, test in scores:
            covered.update((enroll, test))
    missing = [u for u in m.ids if u not in covered]
    coverage = 1.0 if len(m) == 0 else 1.0 - len(missing) / len(m)
    if coverage < min_coverage:
        raise CoverageError(
            f"{kind}: {len(missing)} of {len(m)} utterances missing "
            f"(coverage {coverage:.2%} < {min_coverage:.2%})",
            missing,
        )
    return Binding(kind, items, missing, coverage)


def save_split(split: SplitSpec, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for u in sorted(split.train_ids):
            fh.write(f"{u} train\n")
        for u in sorted(split.test_ids):
            fh.write(f"{u} test\n")


def speaker_split(m: Manifest, test_fraction: float = 0.34, seed: int = 0) -> SplitSpec:
    """Speaker-disjoint split, drawn separately within each condition label.

    At least one speaker per label goes to each side when the label has two
    or more speakers.
    """
    import numpy as np

    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    by_label = defaultdict(set)
    for e in m:
        by_label[e.condition or ""].add(e.speaker_id)
    rng = np.random.default_rng(seed)
    test_speakers = set()
    for label in sorted(by_label):
        spk = sorted(by_label[label])
        k = int(round(test_fraction * len(spk)))
        if len(spk) >= 2:
            k = min(max(k, 1), len(spk) - 1)
        test_speakers.update(rng.permutation(spk)[:k].tolist())
    train = frozenset(e.utt_id for e in m if e.speaker_id not in test_speakers)
    test = frozenset(e.utt_id for e in m if e.speaker_id in test_speakers)
    return SplitSpec(train, test)
