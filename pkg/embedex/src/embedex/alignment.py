"""Minimal reader for the shared word-alignment JSON-lines format.

Only the fields the extractor needs are kept: utterance id, transcript,
and per-word text with times for ordering. Acoustic validation stays with
the estimation pipeline that owns the format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import AlignmentError


@dataclass(frozen=True)
class Word:
    utterance_id: str
    index_in_utterance: int
    text: str
    start_s: float
    end_s: float


@dataclass
class Utterance:
    utterance_id: str
    transcript: str
    words: list[Word]


def load_alignment(path: str | Path) -> list[Utterance]:
    """One utterance per line; words come back sorted by start time with
    indices assigned in that order."""
    path = Path(path)
    if not path.exists():
        raise AlignmentError(f"alignment file does not exist: {path}")
    utterances = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AlignmentError(
                    f"{path}:{lineno}: invalid JSON: {exc}") from exc
            utterances.append(_utterance_from_obj(obj, f"{path}:{lineno}"))
    return utterances


def _utterance_from_obj(obj: dict, where: str) -> Utterance:
    for field_name in ("utterance_id", "words"):
        if field_name not in obj:
            raise AlignmentError(f"{where}: missing field {field_name!r}")
    raw = obj["words"]
    if not isinstance(raw, list) or not raw:
        raise AlignmentError(
            f"{where}: utterance {obj['utterance_id']!r} has no words")
    parsed = []
    for i, w in enumerate(raw):
        for field_name in ("text", "start_s", "end_s"):
            if field_name not in w:
                raise AlignmentError(
                    f"{where}: word {i} missing field {field_name!r}")
        try:
            parsed.append((str(w["text"]), float(w["start_s"]),
                           float(w["end_s"])))
        except (TypeError, ValueError) as exc:
            raise AlignmentError(
                f"{where}: word {i} has non-numeric times") from exc
    parsed.sort(key=lambda w: w[1])
    utt_id = str(obj["utterance_id"])
    words = [Word(utt_id, i, text, start, end)
             for i, (text, start, end) in enumerate(parsed)]
    transcript = str(obj.get("transcript",
                             " ".join(w.text for w in words)))
    return Utterance(utterance_id=utt_id, transcript=transcript, words=words)
