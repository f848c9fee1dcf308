"""Word-level prosodic feature extraction.

Features per word token: mean log-energy of the bandpassed signal, duration
per syllable, trailing pause, and a DCT parameterization of the cleaned f0
curve in a window around the stressed syllable. Prominence values are
ingested from a precomputed column; relative prominence is derived here.

All operations are pure functions of their inputs; identical inputs and
parameters produce bit-identical outputs.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps
from scipy.fft import dct as _dct, idct as _idct
from scipy.io import wavfile

from .corpus import LexiconEntry, Utterance, WordToken, lookup_syllables
from .errors import (DegenerateDataError, ParameterError, ParseError,
                     RangeError, ValidationError)

LOG_ENERGY_EPS = 1e-8
YIN_THRESHOLD = 0.15
OCTAVE_OUTLIER_LIMIT = 1.0  # octaves from the utterance median
STRESS_WINDOW_S = 0.25
RESAMPLE_POINTS = 100


@dataclass
class F0Track:
    """Frame-level f0 estimates. 0 Hz encodes an unvoiced frame before
    cleaning; after clean_f0 every frame is voiced and positive."""

    times_s: np.ndarray
    f0_hz: np.ndarray
    frame_hop_s: float
    voiced_mask: np.ndarray

    def __post_init__(self):
        if not (len(self.times_s) == len(self.f0_hz) == len(self.voiced_mask)):
            raise ValidationError("f0 track arrays have mismatched lengths")


@dataclass
class F0Segment:
    """A slice of a cleaned f0 track (times in seconds, values in Hz)."""

    times_s: np.ndarray
    f0_hz: np.ndarray

    def __len__(self) -> int:
        return len(self.times_s)


@dataclass
class ProsodyRecord:
    """Per-token feature vector; None marks a feature that could not be
    extracted (no voiced frames, missing prominence column)."""

    token_id: int
    energy: float | None = None
    duration_per_syllable: float | None = None
    pause_after_s: float | None = None
    f0_dct: np.ndarray | None = None
    prominence: float | None = None
    prominence_relative: float | None = None
    zscore_applied: dict[str, bool] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Energy


def bandpass(signal: np.ndarray, sample_rate_hz: int,
             low_hz: float = 300.0, high_hz: float = 5000.0) -> np.ndarray:
    """Zero-phase 4th-order Butterworth band-pass (forward-backward)."""
    if not 0 < low_hz < high_hz < sample_rate_hz / 2:
        raise ParameterError(
            f"band edges must satisfy 0 < {low_hz} < {high_hz} < "
            f"{sample_rate_hz / 2} (Nyquist)")
    sos = sps.butter(4, [low_hz, high_hz], btype="bandpass",
                     fs=sample_rate_hz, output="sos")
    x = np.asarray(signal, dtype=np.float64)
    return sps.sosfiltfilt(sos, x)


def mean_log_energy(filtered: np.ndarray, token: WordToken,
                    sample_rate_hz: int) -> float:
    """Mean of log(|x| + eps) over the samples in [start_s, end_s)."""
    i0 = int(math.ceil(token.start_s * sample_rate_hz - 1e-6))
    i1 = int(math.ceil(token.end_s * sample_rate_hz - 1e-6))
    if i0 < 0 or i1 > len(filtered) or i1 <= i0:
        raise RangeError(
            f"token {token.text!r} spans samples [{i0}, {i1}) but signal has "
            f"{len(filtered)} samples")
    chunk = np.abs(np.asarray(filtered[i0:i1], dtype=np.float64))
    return float(np.mean(np.log(chunk + LOG_ENERGY_EPS)))


# ---------------------------------------------------------------------------
# Duration and pause


def duration_per_syllable(token: WordToken, entry: LexiconEntry) -> float:
    return (token.end_s - token.start_s) / entry.syllable_count


def pause_after(token: WordToken, next_token: WordToken | None) -> float:
    """Silence between a word's offset and the next word's onset; the last
    word of an utterance gets 0 by convention."""
    if next_token is None:
        return 0.0
    if next_token.start_s < token.end_s:
        raise ValidationError(
            f"tokens {token.text!r} and {next_token.text!r} overlap: "
            f"{next_token.start_s} < {token.end_s}")
    return next_token.start_s - token.end_s


# ---------------------------------------------------------------------------
# f0 tracking (YIN)


def track_f0(signal: np.ndarray, sample_rate_hz: int,
             f0_min: float = 60.0, f0_max: float = 400.0,
             frame_hop_s: float = 0.010, frame_len_s: float = 0.040) -> F0Track:
    """Frame-wise f0 via the YIN difference function.

    Per frame: difference function over an integration window of
    ``frame_len_s``, cumulative-mean normalization, first dip below the
    absolute threshold, and parabolic interpolation of that dip. Frames with
    no dip below threshold are unvoiced (f0 = 0).
    """
    if not 0 < f0_min < f0_max:
        raise ParameterError(f"need 0 < f0_min < f0_max, got {f0_min}, {f0_max}")
    if frame_hop_s <= 0 or frame_len_s <= 0:
        raise ParameterError("frame_hop_s and frame_len_s must be positive")
    fs = sample_rate_hz
    x = np.asarray(signal, dtype=np.float64)
    hop = int(round(frame_hop_s * fs))
    win = int(round(frame_len_s * fs))
    if len(x) < win:
        raise ParameterError(f"signal has {len(x)} samples, need >= {win}")
    tau_min = max(2, int(math.floor(fs / f0_max)))
    tau_max = int(math.ceil(fs / f0_min))
    if tau_min >= tau_max:
        raise ParameterError("f0 range too narrow for this sample rate")

    n_frames = 1 + (len(x) - win) // hop
    padded = np.concatenate([x, np.zeros(tau_max)])
    nfft = 1 << int(math.ceil(math.log2(win + tau_max)))

    times = np.empty(n_frames)
    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    for i in range(n_frames):
        start = i * hop
        seg = padded[start:start + win + tau_max]
        times[i] = (start + win / 2) / fs
        tau = _yin_frame(seg, win, tau_min, tau_max, nfft)
        if tau > 0:
            f0[i] = fs / tau
            voiced[i] = True
    return F0Track(times_s=times, f0_hz=f0, frame_hop_s=hop / fs, voiced_mask=voiced)


def _yin_frame(seg: np.ndarray, win: int, tau_min: int, tau_max: int,
               nfft: int) -> float:
    """Return the refined period in samples, or 0 if the frame is unvoiced."""
    # d(tau) = sum_{j<W} (x_j - x_{j+tau})^2, expanded via cross-correlation
    a = np.fft.rfft(seg, nfft)
    b = np.fft.rfft(seg[:win], nfft)
    corr = np.fft.irfft(np.conj(b) * a, nfft)[:tau_max + 1]
    sq = np.concatenate([[0.0], np.cumsum(seg * seg)])
    energy0 = sq[win]
    taus = np.arange(tau_max + 1)
    d = energy0 + (sq[taus + win] - sq[taus]) - 2.0 * corr
    d = np.maximum(d, 0.0)  # guard FFT round-off

    running = np.cumsum(d[1:])
    if running[-1] <= 0.0:
        return 0.0  # silent frame
    cmnd = np.ones(tau_max + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cmnd[1:] = np.where(running > 0, d[1:] * taus[1:] / running, 1.0)

    below = np.nonzero(cmnd[tau_min:tau_max + 1] < YIN_THRESHOLD)[0]
    if below.size == 0:
        return 0.0
    tau = tau_min + below[0]
    # descend to the bottom of this dip
    while tau + 1 <= tau_max and cmnd[tau + 1] < cmnd[tau]:
        tau += 1
    return _parabolic_min(cmnd, tau, tau_min, tau_max)


def _parabolic_min(y: np.ndarray, i: int, lo: int, hi: int) -> float:
    if i <= lo or i >= hi:
        return float(i)
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    denom = y0 - 2.0 * y1 + y2
    if denom <= 0:
        return float(i)
    shift = 0.5 * (y0 - y2) / denom
    return float(i + np.clip(shift, -1.0, 1.0))


def clean_f0(track: F0Track) -> F0Track:
    """Outlier removal and gap interpolation.

    Voiced frames more than one octave from the utterance's median log2(f0)
    become unvoiced; gaps are then filled by linear interpolation in log2
    space, with nearest-value extension at the edges. The result has every
    frame voiced.
    """
    voiced = track.voiced_mask & (track.f0_hz > 0)
    if not voiced.any():
        raise DegenerateDataError("no voiced frames to clean")
    logf = np.where(voiced, np.log2(np.where(voiced, track.f0_hz, 1.0)), 0.0)
    median = np.median(logf[voiced])
    keep = voiced & (np.abs(logf - median) <= OCTAVE_OUTLIER_LIMIT)
    if not keep.any():
        raise DegenerateDataError("all voiced frames rejected as outliers")
    filled = np.interp(track.times_s, track.times_s[keep], logf[keep])
    return F0Track(times_s=track.times_s.copy(), f0_hz=np.exp2(filled),
                   frame_hop_s=track.frame_hop_s,
                   voiced_mask=np.ones_like(track.voiced_mask, dtype=bool))


def stress_window(track: F0Track, token: WordToken,
                  entry: LexiconEntry) -> F0Segment:
    """Slice the cleaned track to +-250 ms around the stressed syllable's
    midpoint, clipped to the word boundaries.

    Syllable spans are approximated by uniform division of the word span, so
    the midpoint is start + (stress_index + 0.5) * word_dur / syllables.
    """
    word_dur = token.end_s - token.start_s
    mid = token.start_s + (entry.stress_syllable_index + 0.5) * word_dur / entry.syllable_count
    t0 = max(token.start_s, mid - STRESS_WINDOW_S)
    t1 = min(token.end_s, mid + STRESS_WINDOW_S)
    sel = (track.times_s >= t0 - 1e-9) & (track.times_s <= t1 + 1e-9)
    if not sel.any():
        raise RangeError(
            f"no f0 frames inside [{t0:.3f}, {t1:.3f}] for token {token.text!r}")
    return F0Segment(times_s=track.times_s[sel], f0_hz=track.f0_hz[sel])


# ---------------------------------------------------------------------------
# DCT parameterization


def dct_parameterize(segment: F0Segment, k: int = 8,
                     domain: str = "log2") -> np.ndarray:
    """Resample the curve to 100 equally spaced points and return the first
    k coefficients of an orthonormal DCT-II.

    ``domain`` selects the value scale: "log2" (default, consistent with the
    octave-based cleaning) or "hz".
    """
    if not 1 <= k <= RESAMPLE_POINTS:
        raise ParameterError(f"k must be in [1, {RESAMPLE_POINTS}], got {k}")
    if len(segment) < 2:
        raise ParameterError(f"segment has {len(segment)} samples, need >= 2")
    if domain not in ("log2", "hz"):
        raise ParameterError(f"unknown f0 domain {domain!r}")
    values = np.asarray(segment.f0_hz, dtype=np.float64)
    if domain == "log2":
        if np.any(values <= 0):
            raise ValidationError("log2 parameterization requires positive f0")
        values = np.log2(values)
    grid = np.linspace(segment.times_s[0], segment.times_s[-1], RESAMPLE_POINTS)
    resampled = np.interp(grid, segment.times_s, values)
    return _dct(resampled, type=2, norm="ortho")[:k]


def inverse_dct_curve(coeffs: np.ndarray) -> np.ndarray:
    """Reconstruct the 100-point resampled curve from DCT coefficients
    (zero-padded to 100 when fewer are given)."""
    full = np.zeros(RESAMPLE_POINTS)
    full[:len(coeffs)] = coeffs
    return _idct(full, type=2, norm="ortho")


# ---------------------------------------------------------------------------
# Prominence and scaling


def relative_prominence(prominence: np.ndarray) -> np.ndarray:
    """Prominence of each token minus the mean over up to three preceding
    tokens of the same utterance; the first token gets 0."""
    values = np.asarray(prominence, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValidationError("prominence column contains non-finite values")
    out = np.zeros_like(values)
    for t in range(1, len(values)):
        out[t] = values[t] - values[max(0, t - 3):t].mean()
    return out


def zscore(column: np.ndarray, stats_from: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Scale a column by the mean/std of the training values.

    Returns (scaled column, mean, std); population std (ddof=0).
    """
    train = np.asarray(stats_from, dtype=np.float64)
    mean = float(train.mean())
    std = float(train.std())
    if not std > 0:
        raise DegenerateDataError("training column has zero variance")
    return (np.asarray(column, dtype=np.float64) - mean) / std, mean, std


# ---------------------------------------------------------------------------
# Corpus-level extraction

SCALAR_COLUMNS = ("energy", "duration_per_syllable", "pause_after_s",
                  "prominence", "prominence_relative")
DEFAULT_ZSCORE_COLUMNS = ("energy", "duration_per_syllable", "prominence_relative")


@dataclass
class ExtractionParams:
    bandpass_low_hz: float = 300.0
    bandpass_high_hz: float = 5000.0
    f0_min_hz: float = 60.0
    f0_max_hz: float = 400.0
    frame_hop_s: float = 0.010
    frame_len_s: float = 0.040
    dct_k: int = 8
    f0_domain: str = "log2"
    pause_epsilon_s: float = 0.001
    zscore_columns: tuple[str, ...] = DEFAULT_ZSCORE_COLUMNS

    def validate(self) -> None:
        if not 1 <= self.dct_k <= RESAMPLE_POINTS:
            raise ParameterError(f"dct_k must be in [1, {RESAMPLE_POINTS}]")
        unknown = set(self.zscore_columns) - set(SCALAR_COLUMNS)
        if unknown:
            raise ParameterError(f"cannot z-score unknown columns {sorted(unknown)}")


def read_wav(path: str | Path) -> tuple[int, np.ndarray]:
    """Read a mono PCM WAV as float64 in [-1, 1]."""
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise ValidationError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise ValidationError(f"{path}: unsupported sample format {data.dtype}")
    return int(rate), x


def extract_utterance_features(utterance: Utterance,
                               lexicon: dict[str, LexiconEntry],
                               params: ExtractionParams,
                               signal: np.ndarray, sample_rate_hz: int,
                               prominence: dict[tuple[str, int], float] | None = None,
                               ) -> list[ProsodyRecord]:
    """Extract raw (un-z-scored) features for every token of one utterance."""
    filtered = bandpass(signal, sample_rate_hz,
                        params.bandpass_low_hz, params.bandpass_high_hz)
    f0_clean = None
    try:
        raw = track_f0(signal, sample_rate_hz, params.f0_min_hz, params.f0_max_hz,
                       params.frame_hop_s, params.frame_len_s)
        f0_clean = clean_f0(raw)
    except (ParameterError, DegenerateDataError):
        pass  # f0 features stay missing for this utterance

    tokens = utterance.tokens
    prom_values = None
    if prominence is not None:
        try:
            prom_values = np.array([prominence[t.key] for t in tokens])
        except KeyError:
            prom_values = None
    prom_rel = relative_prominence(prom_values) if prom_values is not None else None

    records = []
    for i, tok in enumerate(tokens):
        entry = lookup_syllables(tok.text, lexicon)
        nxt = tokens[i + 1] if i + 1 < len(tokens) else None
        rec = ProsodyRecord(token_id=tok.token_id)
        rec.energy = mean_log_energy(filtered, tok, sample_rate_hz)
        rec.duration_per_syllable = duration_per_syllable(tok, entry)
        rec.pause_after_s = pause_after(tok, nxt)
        if f0_clean is not None:
            try:
                seg = stress_window(f0_clean, tok, entry)
                rec.f0_dct = dct_parameterize(seg, params.dct_k, params.f0_domain)
            except (RangeError, ParameterError):
                rec.f0_dct = None
        if prom_values is not None:
            rec.prominence = float(prom_values[i])
            rec.prominence_relative = float(prom_rel[i])
        records.append(rec)
    return records


# ---------------------------------------------------------------------------
# Feature table I/O


def feature_header(dct_k: int) -> list[str]:
    return (["utterance_id", "index_in_utterance"] + list(SCALAR_COLUMNS)
            + [f"f0_dct_{i}" for i in range(dct_k)])


def apply_zscore(rows: dict[tuple[str, int], dict[str, float | None]],
                 train_keys: set[tuple[str, int]],
                 columns: tuple[str, ...]) -> dict[str, dict[str, float]]:
    """Z-score the named columns in place using train-row statistics.

    Returns the {column: {"mean", "std"}} stats mapping for the sidecar.
    """
    stats = {}
    for col in columns:
        train_vals = np.array([rows[k][col] for k in sorted(train_keys)
                               if rows[k].get(col) is not None])
        if train_vals.size == 0:
            continue
        _, mean, std = zscore(train_vals, train_vals)
        for key, row in rows.items():
            if row.get(col) is not None:
                row[col] = (row[col] - mean) / std
        stats[col] = {"mean": mean, "std": std}
    return stats


def write_feature_table(path: str | Path,
                        rows: dict[tuple[str, int], dict[str, float | None]],
                        dct_k: int, comment: str | None = None) -> None:
    """Write the feature CSV; missing values become empty cells. Floats are
    written with repr so reads round-trip exactly."""
    header = feature_header(dct_k)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for (utt_id, idx) in sorted(rows):
            row = rows[(utt_id, idx)]
            out = [utt_id, idx]
            for col in header[2:]:
                val = row.get(col)
                out.append("" if val is None else repr(float(val)))
            writer.writerow(out)


def read_feature_table(path: str | Path) -> tuple[dict[tuple[str, int], dict[str, float | None]], int]:
    """Read a feature CSV back into row dicts; returns (rows, dct_k)."""
    rows: dict[tuple[str, int], dict[str, float | None]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        lines = (ln for ln in fh if not ln.startswith("#"))
        reader = csv.DictReader(lines)
        if reader.fieldnames is None or "utterance_id" not in reader.fieldnames:
            raise ParseError(f"{path}: not a feature table")
        dct_cols = [c for c in reader.fieldnames if c.startswith("f0_dct_")]
        for row in reader:
            key = (row["utterance_id"], int(row["index_in_utterance"]))
            rows[key] = {
                col: (float(row[col]) if row[col] not in ("", None) else None)
                for col in reader.fieldnames[2:]
            }
    return rows, len(dct_cols)


def write_zscore_sidecar(path: str | Path, stats: dict[str, dict[str, float]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_zscore_sidecar(path: str | Path) -> dict[str, dict[str, float]]:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def records_to_rows(records: list[ProsodyRecord],
                    tokens_by_id: dict[int, WordToken],
                    dct_k: int) -> dict[tuple[str, int], dict[str, float | None]]:
    """Flatten ProsodyRecords to feature-table row dicts keyed by token key."""
    rows = {}
    for rec in records:
        tok = tokens_by_id[rec.token_id]
        row: dict[str, float | None] = {
            "energy": rec.energy,
            "duration_per_syllable": rec.duration_per_syllable,
            "pause_after_s": rec.pause_after_s,
            "prominence": rec.prominence,
            "prominence_relative": rec.prominence_relative,
        }
        for i in range(dct_k):
            row[f"f0_dct_{i}"] = (float(rec.f0_dct[i])
                                  if rec.f0_dct is not None else None)
        rows[tok.key] = row
    return rows
