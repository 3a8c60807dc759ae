"""Readers and writers for the whitespace-delimited text formats.

Trial lines are ``<enroll_id> <test_id> <0|1>``, score lines
``<enroll_id> <test_id> <score>`` and transcript lines ``<utt_id> <text>``.
"""
from __future__ import annotations

from pathlib import Path

from .errors import FormatError


def _lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if line and not line.startswith("#"):
                yield lineno, line


def read_transcripts(path) -> dict:
    out = {}
    for lineno, line in _lines(path):
        parts = line.split(maxsplit=1)
        out[parts[0]] = parts[1] if len(parts) > 1 else ""
    return out


def write_transcripts(path, transcripts: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for utt, text in transcripts.items():
            fh.write(f"{utt} {text}\n")


def read_scores(path) -> dict:
    """Map ``(enroll_id, test_id)`` to a float score."""
    out = {}
    for lineno, line in _lines(path):
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected '<enroll> <test> <score>'")
        try:
            out[(parts[0], parts[1])] = float(parts[2])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: bad score {parts[2]!r}") from exc
    return out


def write_scores(path, pairs, scores) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for (enroll, test), score in zip(pairs, scores):
            fh.write(f"{enroll} {test} {score:.9g}\n")


def read_trial_lines(path) -> list:
    out = []
    for lineno, line in _lines(path):
        parts = line.split()
        if len(parts) != 3 or parts[2] not in ("0", "1"):
            raise FormatError(f"{path}:{lineno}: expected '<enroll> <test> <0|1>'")
        out.append((parts[0], parts[1], parts[2] == "1"))
    return out


def write_trial_lines(path, trials) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for enroll, test, target in trials:
            fh.write(f"{enroll} {test} {int(target)}\n")


def format_table(header, rows) -> str:
    """Aligned plain-text table."""
    cells = [list(map(str, header))] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) if j else c.ljust(w) for j, (c, w) in enumerate(zip(r, widths)))
             for r in cells]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)


def write_csv(path, header, rows) -> None:
    import csv

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
