"""Encoder abstraction: tokenization with character offsets, last-layer
hidden states, and next-token distributions for autoregressive models.

Three encoder classes map one-to-one onto extraction context types:
non-contextual tables serve current_word, autoregressive models serve
past_context, bidirectional models serve bidirectional.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import EncoderError

KIND_FOR_CONTEXT = {
    "current_word": "non_contextual",
    "past_context": "autoregressive",
    "bidirectional": "bidirectional",
}


@dataclass(frozen=True)
class Token:
    """A tokenizer token with character offsets into the encoded text."""

    text: str
    start: int
    end: int


class Encoder(abc.ABC):
    name: str = ""
    kind: str = ""
    dim: int = 0

    @abc.abstractmethod
    def tokenize(self, text: str) -> list[Token]:
        """Tokens with character offsets; a word the encoder cannot map
        produces no token at all."""

    @abc.abstractmethod
    def states(self, tokens: list[str]) -> np.ndarray:
        """Last-layer hidden state per token, shape (len(tokens), dim)."""

    def next_distribution(self, prefix: list[str]) -> dict[str, float]:
        """Token -> probability after the given prefix. Autoregressive
        encoders override this."""
        raise EncoderError(
            f"{self.name or type(self).__name__} is not autoregressive")


def whitespace_tokens(text: str) -> list[Token]:
    out = []
    i = 0
    while i < len(text):
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < len(text) and not text[j].isspace():
            j += 1
        out.append(Token(text[i:j], i, j))
        i = j
    return out


class VectorTableEncoder(Encoder):
    """Non-contextual word-vector table in the common text format: an
    optional "count dim" first line, then "word v1 v2 ..." rows.

    Out-of-vocabulary words produce no token, so they surface as skipped
    rows instead of guessed vectors.
    """

    kind = "non_contextual"

    def __init__(self, path: str | Path):
        path = Path(path)
        if not path.exists():
            raise EncoderError(f"vector table does not exist: {path}")
        self.name = path.name
        self._table: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
        if not lines:
            raise EncoderError(f"{path}: empty vector table")
        first = lines[0].split()
        if len(first) == 2 and all(p.isdigit() for p in first):
            lines = lines[1:]  # fastText-style count/dim header
        for lineno, line in enumerate(lines, start=1):
            parts = line.split()
            if len(parts) < 2:
                raise EncoderError(f"{path}:{lineno}: malformed row")
            word = parts[0]
            if word in self._table:
                raise EncoderError(f"{path}:{lineno}: duplicate word {word!r}")
            try:
                vec = np.array([float(p) for p in parts[1:]],
                               dtype=np.float32)
            except ValueError as exc:
                raise EncoderError(
                    f"{path}:{lineno}: non-numeric vector for {word!r}") from exc
            if self.dim and len(vec) != self.dim:
                raise EncoderError(
                    f"{path}:{lineno}: dimension {len(vec)} != {self.dim}")
            self.dim = len(vec)
            self._table[word] = vec

    def __contains__(self, word: str) -> bool:
        return word in self._table

    def tokenize(self, text: str) -> list[Token]:
        return [t for t in whitespace_tokens(text) if t.text in self._table]

    def states(self, tokens: list[str]) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.dim), dtype=np.float32)
        try:
            return np.stack([self._table[t] for t in tokens])
        except KeyError as exc:
            raise EncoderError(
                f"{self.name}: no vector for {exc.args[0]!r}") from exc


_REGISTRY: dict[str, Callable[[], Encoder]] = {}


def register_encoder(name: str, factory: Callable[[], Encoder]) -> None:
    """Make an encoder id resolvable; later registrations win."""
    _REGISTRY[name] = factory


def resolve_encoder(name: str) -> Encoder:
    """Registered ids first; a path ending in .vec/.txt loads as a vector
    table. Anything else is unknown: models are never downloaded here."""
    if name in _REGISTRY:
        return _REGISTRY[name]()
    path = Path(name)
    if path.suffix in (".vec", ".txt"):
        return VectorTableEncoder(path)
    raise EncoderError(
        f"unknown encoder {name!r}; register a factory or pass a vector "
        f"table path")
