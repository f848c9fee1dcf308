"""Signal-level checks: filtering, pitch tracking, DCT contours, scaling."""

import numpy as np
import pytest
from scipy.io import wavfile

from prosomi.corpus import LexiconEntry, Utterance, WordToken
from prosomi.dsp import (
    LOG_ENERGY_EPS,
    RESAMPLE_POINTS,
    ExtractionParams,
    F0Segment,
    F0Track,
    apply_zscore,
    bandpass,
    clean_f0,
    dct_parameterize,
    duration_per_syllable,
    extract_utterance_features,
    feature_header,
    inverse_dct_curve,
    mean_log_energy,
    pause_after,
    read_feature_table,
    read_wav,
    read_zscore_sidecar,
    relative_prominence,
    records_to_rows,
    stress_window,
    track_f0,
    write_feature_table,
    write_zscore_sidecar,
    zscore,
)
from prosomi.errors import (
    DegenerateDataError,
    ParameterError,
    RangeError,
    ValidationError,
)

FS = 16000


def _tone(freq_hz, seconds=1.0, amp=0.5):
    t = np.arange(int(FS * seconds)) / FS
    return amp * np.sin(2 * np.pi * freq_hz * t)


def _sawtooth(freq_hz, seconds=1.0, amp=0.6):
    t = np.arange(int(FS * seconds)) / FS
    return amp * (2.0 * np.mod(freq_hz * t, 1.0) - 1.0)


# ---------------------------------------------------------------------------
# bandpass


def test_bandpass_attenuates_50_hz_by_20_db():
    tone = _tone(50.0, amp=1.0)
    out = bandpass(tone, FS, 300.0, 5000.0)
    core = slice(len(tone) // 4, 3 * len(tone) // 4)  # skip filter edges
    rms_in = np.sqrt(np.mean(tone[core] ** 2))
    rms_out = np.sqrt(np.mean(out[core] ** 2))
    assert 20 * np.log10(rms_in / rms_out) >= 20.0


def test_bandpass_passes_1_khz_nearly_untouched():
    tone = _tone(1000.0, amp=1.0)
    out = bandpass(tone, FS, 300.0, 5000.0)
    core = slice(len(tone) // 4, 3 * len(tone) // 4)
    rms_ratio = np.sqrt(np.mean(out[core] ** 2) / np.mean(tone[core] ** 2))
    assert abs(rms_ratio - 1.0) < 0.01


def test_bandpass_is_linear():
    rng = np.random.default_rng(0)
    x1 = rng.normal(0, 1, FS)
    x2 = rng.normal(0, 1, FS)
    lhs = bandpass(2.5 * x1 - 1.25 * x2, FS, 300.0, 5000.0)
    rhs = 2.5 * bandpass(x1, FS, 300.0, 5000.0) - 1.25 * bandpass(x2, FS, 300.0, 5000.0)
    assert np.max(np.abs(lhs - rhs)) / np.max(np.abs(lhs)) < 1e-9


def test_bandpass_rejects_bad_edges():
    x = np.zeros(FS)
    with pytest.raises(ParameterError):
        bandpass(x, FS, 5000.0, 300.0)
    with pytest.raises(ParameterError):
        bandpass(x, FS, 300.0, 9000.0)  # above Nyquist


# ---------------------------------------------------------------------------
# energy, duration, pause


def _token(start, end, text="word", idx=0):
    return WordToken(0, "u0", idx, text, start, end)


def test_mean_log_energy_on_silence_hits_epsilon_floor():
    silent = np.zeros(FS)
    value = mean_log_energy(silent, _token(0.25, 0.75), FS)
    assert value == pytest.approx(np.log(LOG_ENERGY_EPS))


def test_mean_log_energy_scales_with_amplitude():
    # 997 Hz keeps samples off exact zero crossings of the sample grid
    loud = mean_log_energy(_tone(997.0, amp=0.8), _token(0.25, 0.75), FS)
    soft = mean_log_energy(_tone(997.0, amp=0.08), _token(0.25, 0.75), FS)
    # 10x amplitude shifts mean log magnitude by ln(10)
    assert loud - soft == pytest.approx(np.log(10.0), abs=0.02)


def test_mean_log_energy_rejects_out_of_range_token():
    with pytest.raises(RangeError):
        mean_log_energy(np.zeros(FS), _token(0.5, 1.5), FS)


def test_duration_per_syllable():
    entry = LexiconEntry("banana", 3, 1, "lexicon")
    assert duration_per_syllable(_token(1.0, 1.6, "banana"), entry) == pytest.approx(0.2)


def test_pause_after_gap_last_word_and_overlap():
    a = _token(0.0, 1.0, idx=0)
    b = _token(1.25, 2.0, idx=1)
    assert pause_after(a, b) == pytest.approx(0.25)
    assert pause_after(b, None) == 0.0
    adjacent = _token(1.0, 2.0, idx=1)
    assert pause_after(a, adjacent) == 0.0
    overlapping = _token(0.5, 2.0, idx=1)
    with pytest.raises(ValidationError):
        pause_after(a, overlapping)


def test_pause_plus_duration_sums_to_utterance_span_exactly():
    # times are binary fractions, so the identity holds in exact float math
    toks = [WordToken(i, "u", i, "w", 0.25 * i, 0.25 * i + 0.125) for i in range(5)]
    total = sum((tok.end_s - tok.start_s) + pause_after(tok, toks[i + 1] if i + 1 < 5 else None)
                for i, tok in enumerate(toks))
    assert total == toks[-1].end_s - toks[0].start_s


# ---------------------------------------------------------------------------
# f0 tracking


def test_yin_recovers_120_hz_sawtooth_within_2_hz():
    track = track_f0(_sawtooth(120.0), FS)
    voiced = track.f0_hz[track.voiced_mask]
    assert voiced.size > 0.8 * track.f0_hz.size
    assert abs(np.median(voiced) - 120.0) < 2.0


def test_yin_leaves_noise_unvoiced():
    rng = np.random.default_rng(1)
    track = track_f0(0.1 * rng.normal(0, 1, FS), FS)
    assert np.mean(track.voiced_mask) < 0.2


def test_clean_f0_interpolates_octave_outliers():
    times = np.arange(20) * 0.01
    f0 = np.full(20, 150.0)
    f0[7] = 600.0  # two octaves up: must be replaced
    voiced = np.ones(20, dtype=bool)
    track = F0Track(times_s=times, f0_hz=f0, frame_hop_s=0.01, voiced_mask=voiced)
    cleaned = clean_f0(track)
    assert cleaned.f0_hz[7] == pytest.approx(150.0)
    assert cleaned.voiced_mask.all()  # cleaned tracks are fully voiced


def test_clean_f0_interpolates_unvoiced_gaps_in_log_domain():
    times = np.arange(5) * 0.01
    f0 = np.array([100.0, 0.0, 0.0, 0.0, 200.0])
    voiced = np.array([True, False, False, False, True])
    track = F0Track(times_s=times, f0_hz=f0, frame_hop_s=0.01, voiced_mask=voiced)
    cleaned = clean_f0(track)
    # linear in log2 between 100 and 200 Hz: midpoint is the geometric mean
    assert cleaned.f0_hz[2] == pytest.approx(100.0 * np.sqrt(2.0))


def test_clean_f0_errors_when_nothing_is_voiced():
    track = F0Track(times_s=np.arange(4) * 0.01, f0_hz=np.zeros(4),
                    frame_hop_s=0.01, voiced_mask=np.zeros(4, dtype=bool))
    with pytest.raises(DegenerateDataError):
        clean_f0(track)


def test_cleaned_sweep_is_monotone_after_median_filter():
    t = np.arange(FS) / FS
    f_inst = 100.0 * (2.0 ** (t / t[-1]))  # exponential sweep 100 -> 200 Hz
    phase = 2 * np.pi * np.cumsum(f_inst) / FS
    sweep = 0.5 * np.sin(phase) + 0.25 * np.sin(2 * phase) + 0.125 * np.sin(3 * phase)
    cleaned = clean_f0(track_f0(sweep, FS))
    f = cleaned.f0_hz
    med = np.array([np.median(f[max(0, i - 2):i + 3]) for i in range(len(f))])
    assert np.all(np.diff(med) >= -1e-9)


def test_stress_window_selects_around_syllable_midpoint():
    times = np.arange(100) * 0.01  # 0 .. 0.99
    f0 = 100.0 + times * 100.0
    track = F0Track(times_s=times, f0_hz=f0, frame_hop_s=0.01,
                    voiced_mask=np.ones(100, dtype=bool))
    entry = LexiconEntry("word", 2, 1, "lexicon")
    token = _token(0.2, 0.6)
    seg = stress_window(track, token, entry)
    # second syllable spans [0.4, 0.6]; midpoint 0.5; the 250 ms window
    # extends left to 0.25 and clips right at the word boundary 0.6
    assert seg.times_s[0] == pytest.approx(0.25)
    assert seg.times_s[-1] == pytest.approx(0.6)


# ---------------------------------------------------------------------------
# DCT parameterization


def test_dct_round_trip_with_all_coefficients():
    rng = np.random.default_rng(0)
    times = np.linspace(0.0, 0.5, 37)
    f0 = 2.0 ** rng.normal(7.0, 0.2, 37)
    seg = F0Segment(times_s=times, f0_hz=f0)
    coeffs = dct_parameterize(seg, k=100)
    back = inverse_dct_curve(coeffs)
    grid = np.linspace(times[0], times[-1], RESAMPLE_POINTS)
    ref = np.interp(grid, times, np.log2(f0))
    assert np.max(np.abs(back - ref)) < 1e-9


def test_dct_truncation_keeps_leading_coefficients():
    rng = np.random.default_rng(1)
    times = np.linspace(0.0, 0.4, 50)
    seg = F0Segment(times_s=times, f0_hz=2.0 ** rng.normal(7.0, 0.1, 50))
    full = dct_parameterize(seg, k=100)
    short = dct_parameterize(seg, k=8)
    np.testing.assert_array_equal(short, full[:8])


def test_dct_first_coefficient_tracks_mean_level():
    times = np.linspace(0.0, 0.4, 50)
    seg = F0Segment(times_s=times, f0_hz=np.full(50, 200.0))
    coeffs = dct_parameterize(seg, k=8)
    # orthonormal DCT-II: c0 = sqrt(N) * mean
    assert coeffs[0] == pytest.approx(np.sqrt(RESAMPLE_POINTS) * np.log2(200.0))
    assert np.max(np.abs(coeffs[1:])) < 1e-9


def test_dct_parameterize_validation():
    times = np.linspace(0.0, 0.4, 10)
    seg = F0Segment(times_s=times, f0_hz=np.full(10, 150.0))
    with pytest.raises(ParameterError):
        dct_parameterize(seg, k=0)
    with pytest.raises(ParameterError):
        dct_parameterize(seg, k=101)
    with pytest.raises(ParameterError):
        dct_parameterize(F0Segment(times_s=times[:1], f0_hz=np.full(1, 150.0)))
    with pytest.raises(ValidationError):
        dct_parameterize(F0Segment(times_s=times, f0_hz=np.zeros(10)))


# ---------------------------------------------------------------------------
# prominence and z-scoring


def test_relative_prominence_window():
    values = np.array([2.0, 4.0, 6.0, 8.0, 10.0])
    rel = relative_prominence(values)
    assert rel[0] == 0.0
    assert rel[1] == pytest.approx(4.0 - 2.0)
    assert rel[2] == pytest.approx(6.0 - 3.0)
    assert rel[3] == pytest.approx(8.0 - 4.0)
    assert rel[4] == pytest.approx(10.0 - 6.0)  # mean of last three only


def test_zscore_train_statistics():
    rng = np.random.default_rng(2)
    train = rng.normal(3.0, 2.0, 500)
    scaled, mean, std = zscore(train, train)
    assert abs(np.mean(scaled)) < 1e-9
    assert abs(np.std(scaled) - 1.0) < 1e-9
    assert mean == pytest.approx(np.mean(train))
    other = rng.normal(0, 1, 100)
    scaled_other, m2, s2 = zscore(other, train)
    assert (m2, s2) == (mean, std)
    np.testing.assert_allclose(scaled_other, (other - mean) / std)


def test_zscore_rejects_zero_variance():
    with pytest.raises(DegenerateDataError):
        zscore(np.ones(10), np.ones(10))


# ---------------------------------------------------------------------------
# feature table and sidecar round-trips


def _rows_fixture():
    return {
        ("u0", 0): {"energy": 1.5, "duration_per_syllable": 0.25,
                    "pause_after_s": 0.0, "prominence": 2.0,
                    "prominence_relative": 0.0,
                    "f0_dct_0": 7.1, "f0_dct_1": -0.2},
        ("u0", 1): {"energy": -0.5, "duration_per_syllable": 0.3,
                    "pause_after_s": 0.125, "prominence": None,
                    "prominence_relative": None,
                    "f0_dct_0": None, "f0_dct_1": None},
    }


def test_feature_table_round_trip(tmp_path):
    path = tmp_path / "features.csv"
    write_feature_table(path, _rows_fixture(), dct_k=2, comment="seed=0")
    rows, dct_k = read_feature_table(path)
    assert dct_k == 2
    assert rows[("u0", 0)]["energy"] == 1.5
    assert rows[("u0", 1)]["prominence"] is None
    assert rows[("u0", 1)]["f0_dct_0"] is None
    assert rows[("u0", 1)]["pause_after_s"] == 0.125
    first_line = path.read_text(encoding="utf-8").splitlines()[0]
    assert first_line.startswith("#") and "seed=0" in first_line


def test_feature_table_floats_survive_round_trip_exactly(tmp_path):
    rows = _rows_fixture()
    rows[("u0", 0)]["energy"] = 0.1 + 0.2  # not representable as short decimal
    path = tmp_path / "features.csv"
    write_feature_table(path, rows, dct_k=2)
    back, _ = read_feature_table(path)
    assert back[("u0", 0)]["energy"] == 0.1 + 0.2


def test_feature_header_layout():
    header = feature_header(3)
    assert header[:2] == ["utterance_id", "index_in_utterance"]
    assert "f0_dct_2" in header and "f0_dct_3" not in header


def test_apply_zscore_scales_configured_columns():
    rows = {("u", i): {"energy": float(i), "pause_after_s": float(i)}
            for i in range(9)}
    stats = apply_zscore(rows, train_keys=[("u", i) for i in range(9)],
                         columns=("energy",))
    scaled = np.array([rows[("u", i)]["energy"] for i in range(9)])
    assert abs(np.mean(scaled)) < 1e-9
    assert abs(np.std(scaled) - 1.0) < 1e-9
    assert rows[("u", 3)]["pause_after_s"] == 3.0  # untouched
    assert set(stats) == {"energy"}
    assert stats["energy"]["mean"] == pytest.approx(4.0)


def test_zscore_sidecar_round_trip(tmp_path):
    stats = {"energy": {"mean": 1.25, "std": 0.5}}
    path = tmp_path / "z.json"
    write_zscore_sidecar(path, stats)
    assert read_zscore_sidecar(path) == stats


# ---------------------------------------------------------------------------
# wav reading and end-to-end extraction


def test_read_wav_int16_round_trip(tmp_path):
    signal = (_tone(440.0, seconds=0.1) * 32767).astype(np.int16)
    path = tmp_path / "t.wav"
    wavfile.write(str(path), FS, signal)
    rate, data = read_wav(path)
    assert rate == FS
    assert data.dtype == np.float64
    assert np.max(np.abs(data)) <= 1.0
    np.testing.assert_allclose(data, signal / 32768.0, atol=1e-9)


def test_extract_utterance_features_on_synthetic_voice(tmp_path):
    # two sawtooth words with a 0.25 s pause between them
    sig = np.zeros(int(FS * 1.5))
    t0, t1 = int(0.25 * FS), int(0.75 * FS)
    t2, t3 = int(1.0 * FS), int(1.25 * FS)
    tt = np.arange(len(sig)) / FS
    # same f0 for both words so the bandpass shapes them identically and
    # the amplitude contrast survives into the filtered energy
    sig[t0:t1] = 0.5 * (2 * np.mod(150.0 * tt[t0:t1], 1.0) - 1.0)
    sig[t2:t3] = 0.1 * (2 * np.mod(150.0 * tt[t2:t3], 1.0) - 1.0)
    tokens = [
        WordToken(0, "u0", 0, "taa", 0.25, 0.75),
        WordToken(1, "u0", 1, "naa", 1.0, 1.25),
    ]
    utt = Utterance(utterance_id="u0", audio_path="u0.wav",
                    transcript="taa naa", tokens=tokens, sample_rate_hz=FS)
    lexicon = {"taa": LexiconEntry("taa", 1, 0, "lexicon"),
               "naa": LexiconEntry("naa", 1, 0, "lexicon")}
    prominence = {("u0", 0): 2.5, ("u0", 1): 1.0}
    params = ExtractionParams()
    records = extract_utterance_features(utt, lexicon, params, sig, FS, prominence)
    assert len(records) == 2
    first, second = records
    assert first.pause_after_s == 0.25
    assert second.pause_after_s == 0.0
    assert first.duration_per_syllable == pytest.approx(0.5)
    assert first.energy > second.energy
    assert first.f0_dct is not None and len(first.f0_dct) == params.dct_k
    # first DCT coefficient encodes the mean log2 f0 level of the word
    level = first.f0_dct[0] / np.sqrt(RESAMPLE_POINTS)
    assert abs(2.0 ** level - 150.0) < 10.0
    assert first.prominence_relative == 0.0
    assert second.prominence_relative == pytest.approx(1.0 - 2.5)

    rows = records_to_rows(records, {0: tokens[0], 1: tokens[1]}, params.dct_k)
    assert rows[("u0", 0)]["energy"] == first.energy
