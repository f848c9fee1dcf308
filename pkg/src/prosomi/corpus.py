"""Corpus ingestion: word alignments, lexicon, splits, precomputed columns,
and embedding files.

Alignments arrive either as JSON-lines (one utterance object per line) or as
Praat TextGrid files. Token identity is (utterance_id, index_in_utterance);
loaders additionally assign a stable integer token_id in load order so that
feature tables and embedding sets can be joined cheaply.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import JoinError, ParseError, ValidationError

log = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "dev", "test")
CONTEXT_TYPES = ("current_word", "past_context", "bidirectional")

_VOWELS = re.compile(r"[aeiouy]+")


@dataclass(frozen=True)
class WordToken:
    """One aligned word occurrence."""

    token_id: int
    utterance_id: str
    index_in_utterance: int
    text: str
    start_s: float
    end_s: float
    speaker_id: str = ""

    @property
    def key(self) -> tuple[str, int]:
        return (self.utterance_id, self.index_in_utterance)


@dataclass(frozen=True)
class LexiconEntry:
    word: str
    syllable_count: int
    stress_syllable_index: int
    source: str  # "lexicon" or "heuristic"

    def __post_init__(self):
        if self.syllable_count < 1:
            raise ValidationError(f"syllable_count must be >= 1 for {self.word!r}")
        if not 0 <= self.stress_syllable_index < self.syllable_count:
            raise ValidationError(
                f"stress index {self.stress_syllable_index} out of range for "
                f"{self.word!r} with {self.syllable_count} syllables"
            )


@dataclass
class Utterance:
    utterance_id: str
    audio_path: str
    transcript: str
    tokens: list[WordToken]
    sample_rate_hz: int = 0


@dataclass
class DatasetSplit:
    split_name: str
    token_ids: set[int]


@dataclass
class EmbeddingSet:
    """N x dim matrix of per-token embeddings.

    ``rows`` keeps the float32 payload exactly as stored on disk so that
    write -> read round-trips are bit-identical. ``row_keys`` carries the
    (utterance_id, index_in_utterance) pairs from the sidecar; token ids are
    resolved against a corpus token index on demand.
    """

    context_type: str
    dim: int
    rows: np.ndarray
    row_keys: list[tuple[str, int]]
    model_name: str
    row_token_ids: list[int] | None = None

    def __post_init__(self):
        if self.context_type not in CONTEXT_TYPES:
            raise ValidationError(f"unknown context_type {self.context_type!r}")
        if self.rows.shape != (len(self.row_keys), self.dim):
            raise ValidationError(
                f"embedding shape {self.rows.shape} does not match "
                f"{len(self.row_keys)} rows x dim {self.dim}"
            )
        if len(set(self.row_keys)) != len(self.row_keys):
            dupes = [k for k in set(self.row_keys) if self.row_keys.count(k) > 1]
            raise ValidationError(f"duplicate token keys in embedding set: {dupes[:10]}")
        if not np.all(np.isfinite(self.rows)):
            raise ValidationError("embedding set contains non-finite values")

    def resolve(self, token_index: dict[tuple[str, int], int]) -> None:
        missing = [k for k in self.row_keys if k not in token_index]
        if missing:
            raise JoinError(f"embedding rows not in corpus: {missing[:10]}")
        self.row_token_ids = [token_index[k] for k in self.row_keys]


# ---------------------------------------------------------------------------
# Alignment loading


def load_alignment(path: str | Path, format: str = "json") -> list[Utterance]:
    """Load word-level alignments.

    ``format`` is "json" (JSON-lines, one utterance per line) or "textgrid".
    Tokens come back sorted by start time with sequential integer token_ids
    assigned in load order.
    """
    path = Path(path)
    if format == "json":
        utterances = _load_alignment_jsonl(path)
    elif format == "textgrid":
        utterances = [_load_textgrid(path)]
    else:
        raise ParseError(f"unknown alignment format {format!r}")
    _assign_token_ids(utterances)
    for utt in utterances:
        if len(utt.tokens) < 2:
            log.warning("utterance %s has %d word(s); will be dropped by the "
                        "minimum-length filter", utt.utterance_id, len(utt.tokens))
    return utterances


def _load_alignment_jsonl(path: Path) -> list[Utterance]:
    utterances = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            utterances.append(_utterance_from_obj(obj, f"{path}:{lineno}"))
    return utterances


def _utterance_from_obj(obj: dict, where: str) -> Utterance:
    for field_name in ("utterance_id", "words"):
        if field_name not in obj:
            raise ParseError(f"{where}: missing field {field_name!r}")
    raw_words = obj["words"]
    if not isinstance(raw_words, list) or not raw_words:
        raise ValidationError(f"{where}: utterance {obj['utterance_id']!r} has no words")
    words = []
    for i, w in enumerate(raw_words):
        for field_name in ("text", "start_s", "end_s"):
            if field_name not in w:
                raise ParseError(f"{where}: word {i} missing field {field_name!r}")
        try:
            start, end = float(w["start_s"]), float(w["end_s"])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{where}: word {i} has non-numeric times") from exc
        words.append((str(w["text"]), start, end))
    words.sort(key=lambda w: w[1])
    tokens = []
    speaker = str(obj.get("speaker_id", ""))
    for i, (text, start, end) in enumerate(words):
        if not end > start:
            raise ValidationError(
                f"{where}: word {text!r} has end_s {end} <= start_s {start}")
        if i > 0 and start < words[i - 1][2]:
            raise ValidationError(
                f"{where}: words {words[i - 1][0]!r} and {text!r} overlap "
                f"({words[i - 1][2]} > {start})")
        tokens.append(WordToken(-1, str(obj["utterance_id"]), i, text, start, end, speaker))
    return Utterance(
        utterance_id=str(obj["utterance_id"]),
        audio_path=str(obj.get("audio_path", "")),
        transcript=str(obj.get("transcript", " ".join(t.text for t in tokens))),
        tokens=tokens,
        sample_rate_hz=int(obj.get("sample_rate_hz", 0)),
    )


_TG_NUM = re.compile(r"(?:xmin|xmax|number)\s*=\s*([0-9.eE+-]+)")
_TG_TEXT = re.compile(r'(?:text|mark)\s*=\s*"((?:[^"]|"")*)"')


def _load_textgrid(path: Path) -> Utterance:
    """Minimal long-format TextGrid reader for a word interval tier.

    Picks the tier named "words" (case-insensitive) or, failing that, the
    first IntervalTier. Empty-text intervals (silence) are skipped. The
    sample rate is read from a sibling .wav when one exists.
    """
    text = Path(path).read_text(encoding="utf-8", errors="replace")
    tiers = re.split(r"item\s*\[\d+\]\s*:", text)[1:]
    if not tiers:
        raise ParseError(f"{path}: no tiers found (is this a long-format TextGrid?)")
    chosen = None
    for tier in tiers:
        if '"IntervalTier"' not in tier:
            continue
        name_m = re.search(r'name\s*=\s*"((?:[^"]|"")*)"', tier)
        name = name_m.group(1).lower() if name_m else ""
        if name == "words":
            chosen = tier
            break
        if chosen is None:
            chosen = tier
    if chosen is None:
        raise ParseError(f"{path}: no IntervalTier found")

    words = []
    for interval in re.split(r"intervals\s*\[\d+\]\s*:", chosen)[1:]:
        nums = _TG_NUM.findall(interval)
        text_m = _TG_TEXT.search(interval)
        if len(nums) < 2 or text_m is None:
            raise ParseError(f"{path}: malformed interval: {interval[:80]!r}")
        label = text_m.group(1).replace('""', '"').strip()
        if not label:
            continue
        words.append({"text": label, "start_s": float(nums[0]), "end_s": float(nums[1])})
    if not words:
        raise ValidationError(f"{path}: word tier has no labeled intervals")

    stem = Path(path).stem
    wav = Path(path).with_suffix(".wav")
    sample_rate = 0
    if wav.exists():
        with wave.open(str(wav), "rb") as wf:
            sample_rate = wf.getframerate()
    obj = {
        "utterance_id": stem,
        "audio_path": str(wav),
        "sample_rate_hz": sample_rate,
        "transcript": " ".join(w["text"] for w in words),
        "words": words,
    }
    return _utterance_from_obj(obj, str(path))


def _assign_token_ids(utterances: list[Utterance]) -> None:
    next_id = 0
    for utt in utterances:
        renumbered = []
        for tok in utt.tokens:
            renumbered.append(WordToken(next_id, tok.utterance_id, tok.index_in_utterance,
                                        tok.text, tok.start_s, tok.end_s, tok.speaker_id))
            next_id += 1
        utt.tokens = renumbered


def write_alignment_jsonl(utterances: list[Utterance], path: str | Path) -> None:
    """Serialize utterances back to the JSON-lines interchange format."""
    with open(path, "w", encoding="utf-8") as fh:
        for utt in utterances:
            obj = {
                "utterance_id": utt.utterance_id,
                "audio_path": utt.audio_path,
                "sample_rate_hz": utt.sample_rate_hz,
                "transcript": utt.transcript,
                "words": [
                    {"text": t.text, "start_s": t.start_s, "end_s": t.end_s}
                    for t in utt.tokens
                ],
            }
            if utt.tokens and utt.tokens[0].speaker_id:
                obj["speaker_id"] = utt.tokens[0].speaker_id
            fh.write(json.dumps(obj) + "\n")


def filter_short(utterances: list[Utterance], min_words: int = 2) -> list[Utterance]:
    """Drop utterances with fewer than ``min_words`` tokens, keeping order."""
    return [u for u in utterances if len(u.tokens) >= min_words]


def token_index(utterances: list[Utterance]) -> dict[tuple[str, int], int]:
    """Map (utterance_id, index_in_utterance) -> token_id."""
    index = {}
    for utt in utterances:
        for tok in utt.tokens:
            index[tok.key] = tok.token_id
    return index


def all_tokens(utterances: list[Utterance]) -> list[WordToken]:
    return [tok for utt in utterances for tok in utt.tokens]


# ---------------------------------------------------------------------------
# Lexicon


def load_lexicon(path: str | Path) -> dict[str, LexiconEntry]:
    """Read a lexicon CSV with header word,syllable_count,stress_syllable_index."""
    lexicon = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(_strip_comments(fh))
        needed = {"word", "syllable_count", "stress_syllable_index"}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise ParseError(f"{path}: lexicon header must contain {sorted(needed)}")
        for row in reader:
            word = row["word"].strip().casefold()
            try:
                entry = LexiconEntry(word, int(row["syllable_count"]),
                                     int(row["stress_syllable_index"]), "lexicon")
            except ValueError as exc:
                raise ParseError(f"{path}: bad lexicon row for {word!r}: {exc}") from exc
            lexicon[word] = entry
    return lexicon


def lookup_syllables(word: str, lexicon: dict[str, LexiconEntry]) -> LexiconEntry:
    """Look up a word's syllable structure, falling back to a heuristic.

    The fallback counts maximal vowel-letter groups (minimum 1) and puts
    stress on the first syllable; its provenance is recorded so such tokens
    can be excluded downstream.
    """
    if not word:
        raise ValidationError("empty word")
    folded = word.casefold()
    hit = lexicon.get(folded)
    if hit is not None:
        return hit
    count = max(1, len(_VOWELS.findall(folded)))
    return LexiconEntry(folded, count, 0, "heuristic")


# ---------------------------------------------------------------------------
# Splits and precomputed columns


def load_split_assignments(path: str | Path) -> dict[str, str]:
    """Read the utterance_id,split CSV. Values must be train/dev/test."""
    assignments = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(_strip_comments(fh))
        if reader.fieldnames is None or not {"utterance_id", "split"}.issubset(reader.fieldnames):
            raise ParseError(f"{path}: split file header must be utterance_id,split")
        for row in reader:
            split = row["split"].strip()
            if split not in SPLIT_NAMES:
                raise ParseError(
                    f"{path}: unknown split {split!r} for {row['utterance_id']!r}")
            assignments[row["utterance_id"].strip()] = split
    return assignments


def build_splits(utterances: list[Utterance],
                 assignments: dict[str, str]) -> dict[str, DatasetSplit]:
    """Expand utterance-level split assignments to token-id sets.

    Assignment is at utterance granularity so no context leaks across splits;
    every retained utterance must be assigned.
    """
    splits = {name: DatasetSplit(name, set()) for name in SPLIT_NAMES}
    unassigned = []
    for utt in utterances:
        split = assignments.get(utt.utterance_id)
        if split is None:
            unassigned.append(utt.utterance_id)
            continue
        for tok in utt.tokens:
            splits[split].token_ids.add(tok.token_id)
    if unassigned:
        raise ValidationError(f"utterances missing a split assignment: {unassigned[:10]}")
    return splits


def load_precomputed_column(path: str | Path, column: str) -> dict[tuple[str, int], float]:
    """Read a per-token CSV column keyed by (utterance_id, index_in_utterance)."""
    values = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(_strip_comments(fh))
        needed = {"utterance_id", "index_in_utterance", column}
        if reader.fieldnames is None or not needed.issubset(reader.fieldnames):
            raise ParseError(f"{path}: expected columns {sorted(needed)}, "
                             f"got {reader.fieldnames}")
        for row in reader:
            key = (row["utterance_id"].strip(), int(row["index_in_utterance"]))
            try:
                values[key] = float(row[column])
            except ValueError as exc:
                raise ParseError(f"{path}: non-numeric {column} for {key}") from exc
    return values


def _strip_comments(fh):
    for line in fh:
        if not line.startswith("#"):
            yield line


# ---------------------------------------------------------------------------
# Embedding files (shared binary contract)


def write_embedding_file(path: str | Path, context_type: str, rows: np.ndarray,
                         row_keys: list[tuple[str, int]], model_name: str,
                         sidecar_path: str | Path | None = None) -> None:
    """Write the shared embedding format: one JSON header line, then
    count*dim little-endian float32, row-major, plus a row sidecar CSV."""
    path = Path(path)
    rows = np.ascontiguousarray(rows, dtype="<f4")
    if rows.ndim != 2 or rows.shape[0] != len(row_keys):
        raise ValidationError(f"rows shape {rows.shape} does not match "
                              f"{len(row_keys)} keys")
    header = {"context": context_type, "dim": int(rows.shape[1]),
              "count": int(rows.shape[0]), "model": model_name, "dtype": "f32le"}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(rows.tobytes())
    sidecar = Path(sidecar_path) if sidecar_path else _default_sidecar(path)
    with open(sidecar, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "utterance_id", "index_in_utterance"])
        for i, (utt_id, idx) in enumerate(row_keys):
            writer.writerow([i, utt_id, idx])


def read_embedding_file(path: str | Path,
                        token_idx: dict[tuple[str, int], int] | None = None,
                        sidecar_path: str | Path | None = None) -> EmbeddingSet:
    """Read an embedding file and its row sidecar into an EmbeddingSet."""
    path = Path(path)
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError(f"{path}: bad embedding header: {exc}") from exc
        for field_name in ("context", "dim", "count", "model", "dtype"):
            if field_name not in header:
                raise ParseError(f"{path}: embedding header missing {field_name!r}")
        if header["dtype"] != "f32le":
            raise ParseError(f"{path}: unsupported dtype {header['dtype']!r}")
        count, dim = int(header["count"]), int(header["dim"])
        payload = fh.read()
    expected = count * dim * 4
    if len(payload) != expected:
        raise ParseError(f"{path}: payload is {len(payload)} bytes, "
                         f"expected {expected}")
    rows = np.frombuffer(payload, dtype="<f4").reshape(count, dim)

    sidecar = Path(sidecar_path) if sidecar_path else _default_sidecar(path)
    row_keys: list[tuple[str, int]] = []
    with open(sidecar, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(_strip_comments(fh))
        for row in reader:
            row_keys.append((row["utterance_id"], int(row["index_in_utterance"])))
    if len(row_keys) != count:
        raise ParseError(f"{sidecar}: {len(row_keys)} rows for {count} embeddings")

    emb = EmbeddingSet(context_type=header["context"], dim=dim, rows=rows,
                       row_keys=row_keys, model_name=header["model"])
    if token_idx is not None:
        emb.resolve(token_idx)
    return emb


def _default_sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".rows.csv")


# ---------------------------------------------------------------------------
# Joining


@dataclass
class JoinedDataset:
    """Aligned (embedding, target, token id) rows in token-id order."""

    token_ids: list[int]
    embeddings: np.ndarray  # N x d float64
    targets: np.ndarray  # N (scalar feature) or N x k (vector feature)
    context_type: str = ""
    feature: str = ""

    def __len__(self) -> int:
        return len(self.token_ids)


def join_embeddings(split: DatasetSplit, embeddings: EmbeddingSet,
                    targets: dict[int, float | np.ndarray]) -> JoinedDataset:
    """Join a split's tokens with their embeddings and feature targets.

    Every token id in the split must appear on both sides; rows come out
    sorted by token id so joins are deterministic.
    """
    if embeddings.row_token_ids is None:
        raise ValidationError("embedding set has unresolved token ids; "
                              "call resolve() with the corpus token index first")
    by_token = {tid: i for i, tid in enumerate(embeddings.row_token_ids)}
    wanted = sorted(split.token_ids)
    missing_emb = [t for t in wanted if t not in by_token]
    if missing_emb:
        raise JoinError(f"split tokens missing embeddings: {missing_emb[:10]}")
    missing_tgt = [t for t in wanted if t not in targets]
    if missing_tgt:
        raise JoinError(f"split tokens missing targets: {missing_tgt[:10]}")
    X = np.asarray(embeddings.rows[[by_token[t] for t in wanted]], dtype=np.float64)
    y = np.asarray([targets[t] for t in wanted], dtype=np.float64)
    return JoinedDataset(token_ids=wanted, embeddings=X, targets=y,
                         context_type=embeddings.context_type)
