"""Deterministic synthetic corpora for tests and end-to-end runs.

Three generators: a 10-utterance audio mini-corpus of sawtooth "speech"
with planted class structure (two word families differing in f0, amplitude,
and prominence), a larger audio-free table with a planted two-class
Gaussian feature whose MI is known by quadrature, and a tabular dataset
whose targets depend on the previous, current, and next word for
context-ordering checks. Fixed seeds give byte-identical output files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .corpus import Utterance, WordToken, all_tokens, write_alignment_jsonl, \
    write_embedding_file
from .dsp import feature_header, write_feature_table

SAMPLE_RATE = 16000
WORD_UNIT_S = 0.25  # per-syllable duration; binary fraction so times are exact

# two word families: (text, syllables, stress index, class)
VOCAB_A = (("taa", 1, 0), ("naa", 1, 0), ("kaataa", 2, 0))
VOCAB_B = (("too", 1, 0), ("noo", 1, 0), ("kootoo", 2, 1))
CLASS_F0 = {"a": 180.0, "b": 120.0}
CLASS_AMP = {"a": 0.5, "b": 0.22}
CLASS_PROM = {"a": 2.5, "b": 1.2}


def generate_mini_corpus(out_dir: str | Path, seed: int = 0,
                         n_utterances: int = 10) -> dict[str, Path]:
    """Write the bundled synthetic corpus: WAVs, alignment, lexicon, splits,
    and a planted prominence column. Returns the written paths."""
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    utterances = []
    prominence_rows = []
    for u in range(n_utterances):
        utt_id = f"u{u:02d}"
        n_words = int(rng.integers(4, 8))
        tokens = []
        t = WORD_UNIT_S  # leading silence
        spec_rows = []  # (token, f0, amp) for synthesis
        for w in range(n_words):
            cls = "a" if rng.random() < 0.5 else "b"
            vocab = VOCAB_A if cls == "a" else VOCAB_B
            text, syllables, _ = vocab[int(rng.integers(0, len(vocab)))]
            # tempo factors are binary fractions so token times stay exact
            tempo = float(rng.choice([0.75, 1.0, 1.25]))
            dur = WORD_UNIT_S * syllables * tempo
            tok = WordToken(token_id=-1, utterance_id=utt_id,
                            index_in_utterance=w, text=text,
                            start_s=t, end_s=t + dur)
            f0 = CLASS_F0[cls] * float(np.exp2(rng.normal(0.0, 0.02)))
            amp = CLASS_AMP[cls] * (1.0 + 0.1 * float(rng.uniform(-1.0, 1.0)))
            tokens.append(tok)
            spec_rows.append((tok, f0, amp))
            prominence_rows.append(
                (utt_id, w, CLASS_PROM[cls] + float(rng.gamma(2.0, 0.3))))
            t += dur
            if w < n_words - 1:
                t += float(rng.choice([0.0, 0.0, 0.125, 0.25]))
        total_s = t + WORD_UNIT_S
        signal = np.zeros(int(round(total_s * SAMPLE_RATE)))
        for tok, f0, amp in spec_rows:
            i0 = int(round(tok.start_s * SAMPLE_RATE))
            i1 = int(round(tok.end_s * SAMPLE_RATE))
            rel = (np.arange(i1 - i0) / SAMPLE_RATE) * f0
            signal[i0:i1] = amp * (2.0 * np.mod(rel, 1.0) - 1.0)
        wav_path = out_dir / "audio" / f"{utt_id}.wav"
        wavfile.write(str(wav_path), SAMPLE_RATE,
                      np.clip(signal * 32767.0, -32768, 32767).astype(np.int16))
        utterances.append(Utterance(
            utterance_id=utt_id, audio_path=f"audio/{utt_id}.wav",
            transcript=" ".join(tok.text for tok in tokens),
            tokens=tokens, sample_rate_hz=SAMPLE_RATE))

    paths = {"alignments": out_dir / "alignments.jsonl",
             "lexicon": out_dir / "lexicon.csv",
             "splits": out_dir / "splits.csv",
             "prominence": out_dir / "prominence.csv",
             "audio_root": out_dir}
    write_alignment_jsonl(utterances, paths["alignments"])

    with open(paths["lexicon"], "w", encoding="utf-8") as fh:
        fh.write("word,syllable_count,stress_syllable_index\n")
        for text, syllables, stress in sorted(VOCAB_A + VOCAB_B):
            fh.write(f"{text},{syllables},{stress}\n")

    with open(paths["splits"], "w", encoding="utf-8") as fh:
        fh.write("utterance_id,split\n")
        for u in range(n_utterances):
            split = ("train" if u < 0.6 * n_utterances
                     else "dev" if u < 0.8 * n_utterances else "test")
            fh.write(f"u{u:02d},{split}\n")

    with open(paths["prominence"], "w", encoding="utf-8") as fh:
        fh.write("utterance_id,index_in_utterance,prominence\n")
        for utt_id, w, value in prominence_rows:
            fh.write(f"{utt_id},{w},{value!r}\n")
    return paths


def generate_word_embeddings(utterances: list[Utterance], context_type: str,
                             path: str | Path) -> None:
    """Deterministic word-identity embeddings in the shared binary format.

    current_word rows are one-hot in the sorted vocabulary; contextual rows
    append the mean one-hot of the visible context (preceding words for
    past_context, all other words for bidirectional).
    """
    tokens = all_tokens(utterances)
    vocab = sorted({tok.text for tok in tokens})
    index = {w: i for i, w in enumerate(vocab)}
    v = len(vocab)

    rows = []
    for utt in utterances:
        onehots = np.zeros((len(utt.tokens), v))
        for i, tok in enumerate(utt.tokens):
            onehots[i, index[tok.text]] = 1.0
        for i in range(len(utt.tokens)):
            if context_type == "current_word":
                rows.append(onehots[i])
                continue
            if context_type == "past_context":
                ctx = (onehots[:i].mean(axis=0) if i > 0 else np.zeros(v))
            else:  # bidirectional
                others = np.delete(onehots, i, axis=0)
                ctx = (others.mean(axis=0) if len(others) else np.zeros(v))
            rows.append(np.concatenate([onehots[i], ctx]))

    names = {"current_word": "onehot", "past_context": "onehot+past",
             "bidirectional": "onehot+bi"}
    write_embedding_file(path, context_type,
                         np.asarray(rows, dtype=np.float32),
                         [tok.key for tok in tokens], names[context_type])


def generate_planted_table(out_dir: str | Path, n_utterances: int = 1200,
                           words_per_utt: int = 5, mu: float = 1.0,
                           seed: int = 0, dct_k: int = 8) -> dict[str, object]:
    """Audio-free corpus with a planted two-class Gaussian energy feature.

    Words "aa"/"bb" are equiprobable; energy ~ N(-mu, 1) or N(+mu, 1) by
    word identity, so the true MI(energy; word) is known by quadrature.
    Writes alignment, splits, feature table, and a one-hot current_word
    embedding file; returns the paths plus the planted parameters.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    utterances = []
    feature_rows: dict[tuple[str, int], dict[str, float | None]] = {}
    empty = {col: None for col in feature_header(dct_k)[2:]}
    for u in range(n_utterances):
        utt_id = f"s{u:04d}"
        tokens = []
        for w in range(words_per_utt):
            is_b = rng.random() < 0.5
            text = "bb" if is_b else "aa"
            energy = float(rng.normal(mu if is_b else -mu, 1.0))
            tokens.append(WordToken(
                token_id=-1, utterance_id=utt_id, index_in_utterance=w,
                text=text, start_s=WORD_UNIT_S * w,
                end_s=WORD_UNIT_S * (w + 1)))
            row = dict(empty)
            row["energy"] = energy
            feature_rows[(utt_id, w)] = row
        utterances.append(Utterance(
            utterance_id=utt_id, audio_path="audio/none.wav",
            transcript=" ".join(tok.text for tok in tokens),
            tokens=tokens, sample_rate_hz=SAMPLE_RATE))

    paths = {"alignments": out_dir / "alignments.jsonl",
             "splits": out_dir / "splits.csv",
             "features": out_dir / "features.csv",
             "embeddings": out_dir / "emb_current.bin"}
    write_alignment_jsonl(utterances, paths["alignments"])
    with open(paths["splits"], "w", encoding="utf-8") as fh:
        fh.write("utterance_id,split\n")
        for u in range(n_utterances):
            split = ("train" if u % 4 <= 1 else "dev" if u % 4 == 2 else "test")
            fh.write(f"s{u:04d},{split}\n")
    write_feature_table(paths["features"], feature_rows, dct_k)
    generate_word_embeddings(utterances, "current_word", paths["embeddings"])
    return {**paths, "class_means": (-mu, mu), "class_sds": (1.0, 1.0),
            "class_probs": (0.5, 0.5)}


def context_dependent_data(n_utterances: int = 800, words_per_utt: int = 5,
                           vocab_size: int = 6, seed: int = 0,
                           noise_sd: float = 0.6) -> dict[str, object]:
    """Tabular dataset whose target mixes previous-, current-, and
    next-word effects, for checking MI(current) <= MI(past) <= MI(bi).

    Returns targets, per-context embedding matrices (one-hot slots for
    previous/current/next word, zeros where the context is hidden or
    absent), and 0/1/2 split codes assigned per utterance.
    """
    rng = np.random.default_rng(seed)
    g = np.linspace(-1.5, 1.5, vocab_size)
    n = n_utterances * words_per_utt

    words = rng.integers(0, vocab_size, size=(n_utterances, words_per_utt))
    targets = np.empty(n)
    slots = np.zeros((n, 3, vocab_size))  # previous / current / next one-hots
    row = 0
    for u in range(n_utterances):
        for w in range(words_per_utt):
            prev_v = g[words[u, w - 1]] if w > 0 else 0.0
            next_v = g[words[u, w + 1]] if w + 1 < words_per_utt else 0.0
            targets[row] = (0.8 * prev_v + 1.0 * g[words[u, w]]
                            + 0.8 * next_v + noise_sd * rng.normal())
            if w > 0:
                slots[row, 0, words[u, w - 1]] = 1.0
            slots[row, 1, words[u, w]] = 1.0
            if w + 1 < words_per_utt:
                slots[row, 2, words[u, w + 1]] = 1.0
            row += 1

    flat = slots.reshape(n, 3 * vocab_size)
    hide = lambda keep: flat * np.repeat(keep, vocab_size)[None, :]
    embeddings = {
        "current_word": hide(np.array([0.0, 1.0, 0.0])),
        "past_context": hide(np.array([1.0, 1.0, 0.0])),
        "bidirectional": hide(np.array([1.0, 1.0, 1.0])),
    }
    utt_codes = np.array([0 if u % 4 <= 1 else (1 if u % 4 == 2 else 2)
                          for u in range(n_utterances)])
    split_codes = np.repeat(utt_codes, words_per_utt)
    return {"targets": targets, "embeddings": embeddings,
            "split_codes": split_codes}


def write_config(path: str | Path, corpus_paths: dict, out_dir: str,
                 *, n_trials: int = 4, n_folds: int = 20,
                 embeddings: dict[str, str] | None = None,
                 overrides: dict | None = None) -> Path:
    """Write a pipeline config JSON pointing at a generated corpus."""
    path = Path(path)
    cfg = {
        "corpus": {
            "alignments": str(corpus_paths["alignments"]),
            "audio_root": str(corpus_paths.get("audio_root", path.parent)),
            "lexicon": str(corpus_paths["lexicon"]) if "lexicon" in corpus_paths else None,
            "splits": str(corpus_paths["splits"]),
            "prominence": (str(corpus_paths["prominence"])
                           if "prominence" in corpus_paths else None),
        },
        "features": {"dct_k": 8},
        "density": {"bandwidth_grid": None, "n_folds": n_folds},
        "predictor": {"n_trials": n_trials, "max_epochs": 100, "patience": 5},
        "embeddings": embeddings or {},
        "output_dir": out_dir,
    }
    cfg["corpus"] = {k: v for k, v in cfg["corpus"].items() if v is not None}
    if overrides:
        for key, value in overrides.items():
            if isinstance(value, dict) and isinstance(cfg.get(key), dict):
                cfg[key].update(value)
            else:
                cfg[key] = value
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
