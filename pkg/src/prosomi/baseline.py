"""Independent mutual-information estimators for validating the pipeline.

Three routes to MI between a discrete label and a continuous value:
a kernel-smoothing mixed-pair estimator built on the density module, a
quadrature oracle for Gaussian-mixture instances with known parameters, and
a histogram plug-in estimator. The validation suite compares the main
pipeline (one-hot embeddings + trained head) against all of them.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import JoinedDataset
from .density import entropy_mc, fit_kde, kde_logpdf_many
from .errors import (DegenerateDataError, InsufficientClassDataError,
                     ParameterError, QuadratureError)
from .predictor import (MlpConfig, PredictiveFamily, conditional_xent,
                        train_head)

POOLED_LABEL = "__other__"


@dataclass(frozen=True)
class MixedPairSample:
    label: str
    value: float | tuple[float, ...]

    def vector(self) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.value, dtype=np.float64))


def _stack(samples: list[MixedPairSample]) -> tuple[np.ndarray, list[str]]:
    values = np.stack([s.vector() for s in samples])
    return values, [s.label for s in samples]


def pool_small_classes(labels: list[str], size_floor: int) -> list[str]:
    """Relabel classes with fewer than size_floor occurrences as one pooled
    class, keeping the label marginal intact."""
    counts = Counter(labels)
    return [lab if counts[lab] >= size_floor else POOLED_LABEL
            for lab in labels]


def assign_subsets(labels: list[str]) -> np.ndarray:
    """Per-class positional split: occurrences 0,1 of every 4 go to fit,
    2 to selection, 3 to evaluation (codes 0/1/2). Deterministic."""
    counters: Counter = Counter()
    codes = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        c = counters[lab] % 4
        counters[lab] += 1
        codes[i] = 0 if c <= 1 else (1 if c == 2 else 2)
    return codes


def ks_mixed_mi(samples: list[MixedPairSample],
                bandwidth_grid=None, size_floor: int | None = None) -> float:
    """Kernel-smoothing MI: H_kde(values) - sum_c p(c) * H_kde(values | c),
    with held-out bandwidth selection per density estimate."""
    if not samples:
        raise ParameterError("no samples")
    values, labels = _stack(samples)
    d = values.shape[1]
    if size_floor is None:
        size_floor = 4 * (d + 2)
    labels = pool_small_classes(labels, size_floor)
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ParameterError(f"need >= 2 distinct labels, got {classes}")

    codes = assign_subsets(labels)
    label_arr = np.array(labels)
    fit_all = values[codes == 0]
    sel_all = values[codes == 1]
    eval_all = values[codes == 2]
    model = fit_kde(fit_all, sel_all, bandwidth_grid)
    h_marginal = entropy_mc(model, eval_all)

    h_cond = 0.0
    n = len(samples)
    for cls in classes:
        mask = label_arr == cls
        p_c = float(np.sum(mask)) / n
        cls_fit = values[mask & (codes == 0)]
        cls_sel = values[mask & (codes == 1)]
        cls_eval = values[mask & (codes == 2)]
        if len(cls_fit) < d + 2 or len(cls_sel) == 0 or len(cls_eval) == 0:
            raise InsufficientClassDataError(
                f"class {cls!r} has too few points for per-class KDE "
                f"(fit {len(cls_fit)}, sel {len(cls_sel)}, "
                f"eval {len(cls_eval)})")
        cls_model = fit_kde(cls_fit, cls_sel, bandwidth_grid)
        h_cond += p_c * entropy_mc(cls_model, cls_eval)
    return h_marginal - h_cond


# ---------------------------------------------------------------------------
# Oracles


def _adaptive_simpson(f, a: float, b: float, tol: float) -> float:
    """Classic adaptive Simpson with Richardson correction."""
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_recurse(f, a, b, fa, fm, fb, whole, tol, 0)


def _simpson_recurse(f, a, b, fa, fm, fb, whole, tol, depth) -> float:
    if depth > 60:
        raise QuadratureError(
            f"adaptive quadrature exceeded depth 60 on [{a}, {b}]")
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    return (_simpson_recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth + 1)
            + _simpson_recurse(f, m, b, fm, frm, fb, right, tol / 2.0,
                               depth + 1))


def quadrature_mi_oracle(class_probs, class_means, class_sds,
                         tol: float = 1e-6) -> float:
    """Exact MI of a label with a Gaussian mixture value, by quadrature:
    MI = H(mixture) - sum_c p_c * H(N(mu_c, sd_c^2))."""
    p = np.asarray(class_probs, dtype=np.float64)
    mu = np.asarray(class_means, dtype=np.float64)
    sd = np.asarray(class_sds, dtype=np.float64)
    if not (len(p) == len(mu) == len(sd)) or len(p) == 0:
        raise ParameterError("class parameter lists must be equal non-zero length")
    if abs(float(np.sum(p)) - 1.0) > 1e-12:
        raise ParameterError(f"class probabilities sum to {np.sum(p)}, not 1")
    if np.any(sd <= 0):
        raise ParameterError("class sds must be > 0")
    if len(p) == 1:
        return 0.0

    h_cond = float(np.sum(p * 0.5 * np.log(2.0 * math.pi * math.e * sd ** 2)))

    mix_mean = float(np.sum(p * mu))
    mix_var = float(np.sum(p * (sd ** 2 + mu ** 2)) - mix_mean ** 2)
    span = 10.0 * math.sqrt(mix_var)
    lo, hi = mix_mean - span, mix_mean + span

    def neg_f_log_f(x: float) -> float:
        z = (x - mu) / sd
        fx = float(np.sum(p * np.exp(-0.5 * z * z)
                          / (sd * math.sqrt(2.0 * math.pi))))
        if fx <= 1e-300:
            return 0.0
        return -fx * math.log(fx)

    # panels split at every component mean; a narrow bump far from the
    # domain midpoint would otherwise be invisible to the coarse first pass
    knots = sorted({lo, hi, *(float(m) for m in mu if lo < m < hi)})
    panel_tol = tol / (len(knots) - 1)
    h_mix = sum(_adaptive_simpson(neg_f_log_f, a, b, panel_tol)
                for a, b in zip(knots, knots[1:]))
    return h_mix - h_cond


def histogram_mi_oracle(samples: list[MixedPairSample], n_bins: int) -> float:
    """Plug-in discrete MI of (label, equal-width bin of value)."""
    if n_bins < 1:
        raise ParameterError(f"n_bins must be >= 1, got {n_bins}")
    if not samples:
        raise ParameterError("no samples")
    values, labels = _stack(samples)
    if values.shape[1] != 1:
        raise ParameterError("histogram oracle handles scalar values only")
    v = values[:, 0]
    vmin, vmax = float(np.min(v)), float(np.max(v))
    if not vmax > vmin:
        raise DegenerateDataError("values are constant; binning is degenerate")
    if n_bins == 1:
        return 0.0
    width = (vmax - vmin) / n_bins
    bins = np.minimum((v - vmin) // width, n_bins - 1).astype(np.int64)

    n = len(samples)
    joint: Counter = Counter(zip(labels, bins.tolist()))
    label_counts = Counter(labels)
    bin_counts = Counter(bins.tolist())
    mi = 0.0
    for (lab, b), c in sorted(joint.items()):
        mi += (c / n) * math.log(n * c / (label_counts[lab] * bin_counts[b]))
    return mi


# ---------------------------------------------------------------------------
# Pipeline leg of the validation suite

PIPELINE_HEAD_CONFIG = MlpConfig(n_layers=1, hidden_units=64, dropout_p=0.0,
                                 l2_lambda=1e-6, learning_rate=3e-3,
                                 batch_size=256, max_epochs=100, patience=5,
                                 seed=20226)


def one_hot_dataset(samples: list[MixedPairSample],
                    codes: np.ndarray, code: int) -> JoinedDataset:
    """One-hot label embeddings + scalar targets for one subset."""
    values, labels = _stack(samples)
    classes = sorted(set(labels))
    index = {c: i for i, c in enumerate(classes)}
    mask = codes == code
    ids = np.nonzero(mask)[0]
    X = np.zeros((len(ids), len(classes)))
    for row, i in enumerate(ids):
        X[row, index[labels[i]]] = 1.0
    return JoinedDataset(token_ids=ids.tolist(), embeddings=X,
                         targets=values[mask][:, 0])


def pipeline_mi(samples: list[MixedPairSample], bandwidth_grid=None,
                config: MlpConfig = PIPELINE_HEAD_CONFIG) -> float:
    """The main pipeline's MI on mixed-pair data: KDE marginal entropy minus
    the conditional cross-entropy of a head trained on one-hot labels.

    Uses the same subset assignment as ks_mixed_mi so the two estimates
    differ only in the conditional leg.
    """
    values, labels = _stack(samples)
    if values.shape[1] != 1:
        raise ParameterError("pipeline validation handles scalar values only")
    codes = assign_subsets(labels)
    model = fit_kde(values[codes == 0], values[codes == 1], bandwidth_grid)
    h_marginal = entropy_mc(model, values[codes == 2])

    train = one_hot_dataset(samples, codes, 0)
    val = one_hot_dataset(samples, codes, 1)
    test = one_hot_dataset(samples, codes, 2)
    head = train_head(train, val, config, PredictiveFamily("gaussian_scalar"))
    return h_marginal - conditional_xent(head, test)


def two_gaussian_samples(separation: float, n: int,
                         seed: int = 0) -> list[MixedPairSample]:
    """Equiprobable labels a/b with values N(-sep/2, 1) / N(+sep/2, 1);
    separation 0 gives label-independent values."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    values = rng.normal(0.0, 1.0, size=n) + (labels - 0.5) * separation
    return [MixedPairSample("b" if lab else "a", float(v))
            for lab, v in zip(labels, values)]


def validation_suite(n: int = 20000, seed: int = 0,
                     separations=(0.0, 1.0, 2.0, 4.0)) -> list[dict]:
    """Run oracle, kernel-smoothing, and pipeline estimates on the
    two-Gaussian instances; returns one gap row per instance."""
    if not len(separations):
        raise ParameterError("no instances requested")
    rows = []
    for i, sep in enumerate(separations):
        samples = two_gaussian_samples(sep, n, seed=seed + i)
        oracle = quadrature_mi_oracle([0.5, 0.5], [-sep / 2, sep / 2], [1.0, 1.0])
        ks = ks_mixed_mi(samples)
        pipe = pipeline_mi(samples)
        rows.append({
            "instance": f"two_gaussian_sep{sep:g}",
            "oracle_mi": oracle,
            "ks_mi": ks,
            "pipeline_mi": pipe,
            "abs_gap_ks": abs(ks - oracle),
            "abs_gap_pipeline": abs(pipe - oracle),
        })
    return rows


def write_validation_report(path: str | Path, rows: list[dict],
                            comment: str | None = None) -> None:
    cols = ["instance", "oracle_mi", "ks_mi", "pipeline_mi",
            "abs_gap_ks", "abs_gap_pipeline"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([row["instance"]]
                            + [repr(float(row[c])) for c in cols[1:]])
