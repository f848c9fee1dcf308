"""Embedding and surprisal extraction against one alignment file.

Outputs follow the shared contracts, so the estimation pipeline can join
rows by (utterance_id, index_in_utterance) without importing this package:
embedding files carry a one-line JSON header followed by count*dim
little-endian float32 plus a row sidecar CSV, and surprisal lands in a
per-token CSV column file.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .alignment import Utterance, load_alignment
from .encoders import KIND_FOR_CONTEXT, Encoder, resolve_encoder
from .errors import JobError

CONTEXT_TYPES = tuple(KIND_FOR_CONTEXT)
LAYERS = ("last_hidden",)
POOLINGS = ("last_token_of_word",)


@dataclass
class ExtractionJob:
    """What to extract: which alignment, seen through which context, with
    which encoder. Layer and pooling are fixed enumerations; the context
    cap reflects input texts of at most 100 words."""

    alignment: str | Path
    context_type: str
    encoder: str
    layer: str = "last_hidden"
    pooling: str = "last_token_of_word"
    max_context_words: int = 100

    def validate(self) -> None:
        if self.context_type not in CONTEXT_TYPES:
            raise JobError(f"unknown context type {self.context_type!r}; "
                           f"expected one of {CONTEXT_TYPES}")
        if self.layer not in LAYERS:
            raise JobError(f"unknown layer {self.layer!r}; only {LAYERS} "
                           f"are exported")
        if self.pooling not in POOLINGS:
            raise JobError(f"unknown pooling {self.pooling!r}; only "
                           f"{POOLINGS} is supported")
        if self.max_context_words < 1:
            raise JobError(f"max_context_words must be >= 1, got "
                           f"{self.max_context_words}")


@dataclass
class ExtractionResult:
    embedding_path: Path
    sidecar_path: Path
    skip_report_path: Path
    n_rows: int
    n_skipped: int
    n_truncated: int
    dim: int


@dataclass
class SurprisalResult:
    csv_path: Path
    skip_report_path: Path
    n_rows: int
    n_skipped: int
    n_truncated: int


def word_spans(transcript: str,
               words) -> list[tuple[int, int] | None]:
    """Character span of each aligned word inside the transcript.

    Words match left to right at whitespace boundaries only; a word that
    cannot be matched stays None and is skipped, never guessed.
    """
    spans: list[tuple[int, int] | None] = []
    pos = 0
    for word in words:
        found = None
        search = pos
        while True:
            i = transcript.find(word.text, search)
            if i < 0:
                break
            j = i + len(word.text)
            left_ok = i == 0 or transcript[i - 1].isspace()
            right_ok = j == len(transcript) or transcript[j].isspace()
            if left_ok and right_ok:
                found = (i, j)
                break
            search = i + 1
        spans.append(found)
        if found:
            pos = found[1]
    return spans


def _resolve_matching(job: ExtractionJob) -> Encoder:
    enc = resolve_encoder(job.encoder)
    needed = KIND_FOR_CONTEXT[job.context_type]
    if enc.kind != needed:
        raise JobError(f"context {job.context_type!r} requires a {needed} "
                       f"encoder; {job.encoder!r} is {enc.kind}")
    return enc


def _nearest_span(spans, start: int, step: int):
    """First non-None span scanning from start in the given direction."""
    i = start
    while 0 <= i < len(spans):
        if spans[i] is not None:
            return spans[i]
        i += step
    return None


def _visible_window(job: ExtractionJob, utt: Utterance, spans,
                    t_idx: int) -> tuple[str, int, bool]:
    """The text the encoder sees for word t_idx, its character offset in
    the transcript, and whether the cap truncated anything.

    past_context ends at the word and truncates on the left; bidirectional
    covers the whole utterance, keeping a cap-sized window around the word
    when the utterance is longer than the cap.
    """
    cap = job.max_context_words
    n = len(utt.words)
    span = spans[t_idx]
    if job.context_type == "past_context":
        first = max(0, t_idx + 1 - cap)
        lo = _nearest_span(spans, first, +1)
        start = lo[0] if lo else span[0]
        return utt.transcript[start:span[1]], start, first > 0
    if n > cap:  # bidirectional overflow
        first = min(max(0, t_idx - cap // 2), n - cap)
        lo = _nearest_span(spans, first, +1)
        hi = _nearest_span(spans, first + cap - 1, -1)
        start = lo[0] if lo else span[0]
        end = hi[1] if hi else span[1]
        return utt.transcript[start:end], start, True
    return utt.transcript, 0, False


def _own_token_indices(tokens, span: tuple[int, int],
                       offset: int) -> list[int]:
    ws, we = span[0] - offset, span[1] - offset
    return [i for i, tk in enumerate(tokens)
            if tk.start < we and tk.end > ws]


def extract_embeddings(job: ExtractionJob,
                       out_path: str | Path) -> ExtractionResult:
    """One last-token hidden-state row per mappable word token, in
    alignment order; unmappable words land in the skip report."""
    job.validate()
    enc = _resolve_matching(job)
    utterances = load_alignment(job.alignment)

    rows: list[np.ndarray] = []
    keys: list[tuple[str, int]] = []
    skips: list[tuple[str, int, str]] = []
    truncated = 0
    for utt in utterances:
        if job.context_type == "current_word":
            for word in utt.words:
                toks = enc.tokenize(word.text)
                if not toks:
                    skips.append((utt.utterance_id, word.index_in_utterance,
                                  "no_tokens"))
                    continue
                rows.append(enc.states([t.text for t in toks])[-1])
                keys.append((utt.utterance_id, word.index_in_utterance))
            continue
        spans = word_spans(utt.transcript, utt.words)
        for t_idx, word in enumerate(utt.words):
            if spans[t_idx] is None:
                skips.append((utt.utterance_id, word.index_in_utterance,
                              "not_in_transcript"))
                continue
            text, offset, cut = _visible_window(job, utt, spans, t_idx)
            truncated += bool(cut)
            toks = enc.tokenize(text)
            own = _own_token_indices(toks, spans[t_idx], offset)
            if not own:
                skips.append((utt.utterance_id, word.index_in_utterance,
                              "no_tokens"))
                continue
            rows.append(enc.states([t.text for t in toks])[own[-1]])
            keys.append((utt.utterance_id, word.index_in_utterance))

    out_path = Path(out_path)
    matrix = (np.stack(rows) if rows
              else np.zeros((0, enc.dim), dtype=np.float32))
    sidecar = write_embedding_file(out_path, job.context_type, matrix, keys,
                                   enc.name)
    skip_path = _write_skip_report(out_path, skips)
    if truncated:
        print(f"warning: context cap {job.max_context_words} truncated "
              f"{truncated} word(s)", file=sys.stderr)
    return ExtractionResult(out_path, sidecar, skip_path, len(rows),
                            len(skips), truncated, int(matrix.shape[1]))


def extract_surprisal(job: ExtractionJob,
                      out_path: str | Path) -> SurprisalResult:
    """Per-word surprisal (sum of token negative log probabilities, nats)
    and the next-token entropy of the distribution right before the word's
    first token."""
    job.validate()
    enc = resolve_encoder(job.encoder)
    if enc.kind != "autoregressive":
        raise JobError(f"surprisal needs an autoregressive encoder; "
                       f"{job.encoder!r} is {enc.kind}")
    utterances = load_alignment(job.alignment)

    out_rows: list[tuple[str, int, float, float]] = []
    skips: list[tuple[str, int, str]] = []
    truncated = 0
    for utt in utterances:
        spans = word_spans(utt.transcript, utt.words)
        for t_idx, word in enumerate(utt.words):
            if spans[t_idx] is None:
                skips.append((utt.utterance_id, word.index_in_utterance,
                              "not_in_transcript"))
                continue
            text, offset, cut = _past_window(job, utt, spans, t_idx)
            truncated += bool(cut)
            toks = enc.tokenize(text)
            own = _own_token_indices(toks, spans[t_idx], offset)
            if not own:
                skips.append((utt.utterance_id, word.index_in_utterance,
                              "no_tokens"))
                continue
            texts = [tk.text for tk in toks]
            terms = []
            reason = None
            for j in own:
                p = enc.next_distribution(texts[:j]).get(texts[j], 0.0)
                if p <= 0.0:
                    reason = "token_outside_vocabulary"
                    break
                terms.append(-math.log(p))
            if reason:
                skips.append((utt.utterance_id, word.index_in_utterance,
                              reason))
                continue
            entropy = _entropy(enc.next_distribution(texts[:own[0]]))
            out_rows.append((utt.utterance_id, word.index_in_utterance,
                             math.fsum(terms), entropy))

    out_path = Path(out_path)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["utterance_id", "index_in_utterance", "surprisal",
                         "next_token_entropy"])
        for utt_id, idx, surp, ent in out_rows:
            writer.writerow([utt_id, idx, repr(surp), repr(ent)])
    skip_path = _write_skip_report(out_path, skips)
    if truncated:
        print(f"warning: context cap {job.max_context_words} truncated "
              f"{truncated} word(s)", file=sys.stderr)
    return SurprisalResult(out_path, skip_path, len(out_rows), len(skips),
                           truncated)


def _past_window(job: ExtractionJob, utt: Utterance, spans,
                 t_idx: int) -> tuple[str, int, bool]:
    cap = job.max_context_words
    span = spans[t_idx]
    first = max(0, t_idx + 1 - cap)
    lo = _nearest_span(spans, first, +1)
    start = lo[0] if lo else span[0]
    return utt.transcript[start:span[1]], start, first > 0


def _entropy(dist: dict[str, float]) -> float:
    # sorted for a deterministic sum; zero-probability entries drop out
    return -math.fsum(p * math.log(p)
                      for _, p in sorted(dist.items()) if p > 0.0)


def write_embedding_file(path: str | Path, context_type: str,
                         rows: np.ndarray, keys: list[tuple[str, int]],
                         model_name: str) -> Path:
    """Shared binary contract: one JSON header line, then count*dim
    little-endian float32 row-major, plus the row sidecar CSV."""
    path = Path(path)
    rows = np.ascontiguousarray(rows, dtype="<f4")
    header = {"context": context_type, "dim": int(rows.shape[1]),
              "count": int(rows.shape[0]), "model": model_name,
              "dtype": "f32le"}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        fh.write(rows.tobytes())
    sidecar = path.with_name(path.name + ".rows.csv")
    with open(sidecar, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "utterance_id", "index_in_utterance"])
        for i, (utt_id, idx) in enumerate(keys):
            writer.writerow([i, utt_id, idx])
    return sidecar


def _write_skip_report(out_path: Path,
                       skips: list[tuple[str, int, str]]) -> Path:
    path = out_path.with_name(out_path.name + ".skipped.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["utterance_id", "index_in_utterance", "reason"])
        for utt_id, idx, reason in skips:
            writer.writerow([utt_id, idx, reason])
    return path
