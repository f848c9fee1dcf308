"""Mutual information assembly and reporting.

Combines the unconditional entropy H(P) from the density module with the
conditional cross-entropy H(P|W) from the predictor module into MI = H -
H_cond per (feature, context), derives the future-context gain and a
baselined uncertainty coefficient, and renders a CSV table plus SVG bar
charts with byte-deterministic output.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .corpus import CONTEXT_TYPES
from .density import EntropyEstimate
from .errors import DegenerateDataError, ParameterError, ValidationError

H_MIN_DEFAULT_NATS = -6.907  # measurement floor of a 3-digit feature scale


@dataclass
class ConditionalEstimate:
    """Held-out conditional cross-entropy with its bootstrap spread."""

    value_nats: float
    std_nats: float = 0.0
    feature: str = ""
    context_type: str = ""
    model_name: str = "mlp_head"
    zscore_signature: str = ""

    def __post_init__(self):
        if self.std_nats < 0:
            raise ParameterError("std_nats must be >= 0")
        if self.context_type and self.context_type not in CONTEXT_TYPES:
            raise ValidationError(f"unknown context_type {self.context_type!r}")


@dataclass
class MiResult:
    feature: str
    context_type: str
    h_nats: float
    h_cond_nats: float
    mi_nats: float
    h_std: float = 0.0
    h_cond_std: float = 0.0
    mi_std: float = 0.0
    model_name: str = ""
    uc: float | None = None
    flags: list[str] = field(default_factory=list)


def mutual_information(h: EntropyEstimate,
                       h_cond: ConditionalEstimate) -> MiResult:
    """MI = H - H_cond with spreads combined as sqrt(sh^2 + sc^2).

    Both estimates must describe the same feature under the same z-scoring;
    empty metadata fields are treated as unconstrained.
    """
    if h.feature and h_cond.feature and h.feature != h_cond.feature:
        raise ValidationError(
            f"feature mismatch: {h.feature!r} vs {h_cond.feature!r}")
    if (h.zscore_signature and h_cond.zscore_signature
            and h.zscore_signature != h_cond.zscore_signature):
        raise ValidationError("z-score signatures differ between H and H_cond")
    mi = h.value_nats - h_cond.value_nats
    flags = ["negative_mi"] if mi < 0 else []
    return MiResult(
        feature=h_cond.feature or h.feature,
        context_type=h_cond.context_type,
        h_nats=h.value_nats,
        h_cond_nats=h_cond.value_nats,
        mi_nats=mi,
        h_std=h.std_nats,
        h_cond_std=h_cond.std_nats,
        mi_std=math.sqrt(h.std_nats ** 2 + h_cond.std_nats ** 2),
        model_name=h_cond.model_name,
        flags=flags,
    )


def future_context_mi(mi_bidirectional: MiResult, mi_past: MiResult) -> float:
    """Information the future context adds beyond the past:
    MI(P; future | past) = MI_bidirectional - MI_past."""
    if mi_bidirectional.context_type != "bidirectional":
        raise ValidationError(
            f"first argument must be bidirectional, got "
            f"{mi_bidirectional.context_type!r}")
    if mi_past.context_type != "past_context":
        raise ValidationError(
            f"second argument must be past_context, got "
            f"{mi_past.context_type!r}")
    if mi_bidirectional.feature != mi_past.feature:
        raise ValidationError(
            f"feature mismatch: {mi_bidirectional.feature!r} vs "
            f"{mi_past.feature!r}")
    return mi_bidirectional.mi_nats - mi_past.mi_nats


def uncertainty_coefficient(mi: MiResult,
                            h_min_nats: float = H_MIN_DEFAULT_NATS) -> float:
    """MI as a fraction of the resolvable entropy range H - H_min, clamped
    to [0, 1]; a clamp is recorded in the result's flags."""
    if not mi.h_nats > h_min_nats:
        raise ParameterError(
            f"h_nats ({mi.h_nats}) must exceed h_min_nats ({h_min_nats})")
    uc = mi.mi_nats / (mi.h_nats - h_min_nats)
    if uc < 0.0 or uc > 1.0:
        uc = min(1.0, max(0.0, uc))
        if "uc_clamped" not in mi.flags:
            mi.flags.append("uc_clamped")
    mi.uc = uc
    return uc


def correlate(prominence: np.ndarray,
              surprisal: np.ndarray) -> tuple[float, float, int]:
    """Pearson and Spearman correlation (average ranks for ties)."""
    x = np.asarray(prominence, dtype=np.float64)
    y = np.asarray(surprisal, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ParameterError("columns must be 1-D and aligned")
    n = len(x)
    if n < 3:
        raise ParameterError(f"need >= 3 pairs, got {n}")
    if not (np.std(x) > 0 and np.std(y) > 0):
        raise DegenerateDataError("zero variance in a correlation column")
    pearson_r = float(stats.pearsonr(x, y).statistic)
    spearman_rho = float(stats.spearmanr(x, y).statistic)
    return pearson_r, spearman_rho, n


# ---------------------------------------------------------------------------
# Report rendering

REPORT_COLUMNS = ("feature", "context", "model", "h_nats", "h_std",
                  "h_cond_nats", "h_cond_std", "mi_nats", "mi_std", "uc",
                  "flags")

# fixed palette, one color per context type, for byte-stable SVGs
CONTEXT_COLORS = {
    "current_word": "#4C72B0",
    "past_context": "#DD8452",
    "bidirectional": "#55A868",
}

SVG_WIDTH = 800
SVG_HEIGHT = 400


def emit_report(results: list[MiResult], correlations=None,
                config_digest: str = "", out_dir: str | Path = ".",
                seed: int = 0) -> list[Path]:
    """Write report.csv plus one SVG bar chart per feature.

    ``correlations`` is an optional list of (name, pearson_r, spearman_rho,
    n) tuples written to correlations.csv. Returns the written paths.
    """
    if not results:
        raise ParameterError("no results to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(results, key=lambda r: (r.feature, r.context_type))

    written = []
    csv_path = out_dir / "report.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_digest={config_digest} seed={seed}\n")
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for r in ordered:
            writer.writerow([
                r.feature, r.context_type, r.model_name,
                repr(r.h_nats), repr(r.h_std),
                repr(r.h_cond_nats), repr(r.h_cond_std),
                repr(r.mi_nats), repr(r.mi_std),
                "" if r.uc is None else repr(r.uc),
                ";".join(r.flags),
            ])
    written.append(csv_path)

    for feature in sorted({r.feature for r in ordered}):
        rows = [r for r in ordered if r.feature == feature]
        svg_path = out_dir / f"report_{feature}.svg"
        with open(svg_path, "w", encoding="utf-8") as fh:
            fh.write(_render_svg(feature, rows))
        written.append(svg_path)

    if correlations:
        corr_path = out_dir / "correlations.csv"
        with open(corr_path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# config_digest={config_digest} seed={seed}\n")
            writer = csv.writer(fh)
            writer.writerow(["pair", "pearson_r", "spearman_rho", "n"])
            for name, r, rho, n in correlations:
                writer.writerow([name, repr(float(r)), repr(float(rho)), n])
        written.append(corr_path)
    return written


def _render_svg(feature: str, rows: list[MiResult]) -> str:
    """Grouped MI bar chart for one feature; bars in context-type order."""
    by_context = {r.context_type: r for r in rows}
    contexts = [c for c in CONTEXT_TYPES if c in by_context]
    margin_left, margin_right = 70, 30
    margin_top, margin_bottom = 50, 60
    plot_w = SVG_WIDTH - margin_left - margin_right
    plot_h = SVG_HEIGHT - margin_top - margin_bottom

    values = [by_context[c].mi_nats for c in contexts]
    spreads = [by_context[c].mi_std for c in contexts]
    vmax = max(0.1, max(v + s for v, s in zip(values, spreads)) * 1.15)
    vmin = min(0.0, min(v - s for v, s in zip(values, spreads)) * 1.15)

    def y_of(v: float) -> float:
        return margin_top + (vmax - v) / (vmax - vmin) * plot_h

    slot = plot_w / max(1, len(contexts))
    bar_w = slot * 0.5

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
        f'<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" '
        f'fill="#FFFFFF"/>',
        f'<text x="{SVG_WIDTH / 2:.1f}" y="28" text-anchor="middle" '
        f'font-family="sans-serif" font-size="18">{feature}</text>',
        f'<text x="20" y="{margin_top + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 20 {margin_top + plot_h / 2:.1f})">'
        f'MI (nats)</text>',
    ]
    zero_y = y_of(0.0)
    parts.append(f'<line x1="{margin_left}" y1="{zero_y:.2f}" '
                 f'x2="{SVG_WIDTH - margin_right}" y2="{zero_y:.2f}" '
                 f'stroke="#333333" stroke-width="1"/>')
    for i, ctx in enumerate(contexts):
        r = by_context[ctx]
        cx = margin_left + slot * i + slot / 2
        x0 = cx - bar_w / 2
        top = y_of(max(r.mi_nats, 0.0))
        height = abs(y_of(r.mi_nats) - zero_y)
        parts.append(f'<rect x="{x0:.2f}" y="{top:.2f}" width="{bar_w:.2f}" '
                     f'height="{height:.2f}" fill="{CONTEXT_COLORS[ctx]}"/>')
        if r.mi_std > 0:
            y_lo, y_hi = y_of(r.mi_nats - r.mi_std), y_of(r.mi_nats + r.mi_std)
            parts.append(f'<line x1="{cx:.2f}" y1="{y_lo:.2f}" '
                         f'x2="{cx:.2f}" y2="{y_hi:.2f}" '
                         f'stroke="#333333" stroke-width="1.5"/>')
        label_y = min(top, zero_y) - 6
        parts.append(f'<text x="{cx:.2f}" y="{label_y:.2f}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="12">{r.mi_nats:.4f}</text>')
        parts.append(f'<text x="{cx:.2f}" y="{SVG_HEIGHT - margin_bottom + 20}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="12">{ctx}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
