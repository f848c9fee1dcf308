"""Pipeline orchestration: extract, estimate, validate, report.

One JSON config drives every subcommand; all artifacts carry the config
digest and seed so reruns with equal settings are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baseline, corpus, density, dsp, infometrics, predictor
from .errors import ConfigError, DataError, ParameterError, PipelineError
from .synthcorpus import generate_mini_corpus

DEFAULT_FAMILIES = {
    "energy": "gaussian_scalar",
    "duration_per_syllable": "gaussian_scalar",
    "pause_after_s": "gamma_scalar",
    "prominence": "gamma_scalar",
    "prominence_relative": "gaussian_scalar",
    "f0_dct": "gaussian_diag_vector",
}

CONTEXT_ALIASES = {
    "current": "current_word",
    "current_word": "current_word",
    "past": "past_context",
    "past_context": "past_context",
    "bidirectional": "bidirectional",
}

KNOWN_SECTIONS = {"corpus", "features", "density", "predictor", "embeddings",
                  "output_dir", "validation"}


@dataclass
class PipelineConfig:
    alignments: Path
    splits: Path
    audio_root: Path
    output_dir: Path
    lexicon: Path | None = None
    prominence: Path | None = None
    surprisal: Path | None = None
    feature_table: Path | None = None
    params: dsp.ExtractionParams = field(default_factory=dsp.ExtractionParams)
    bandwidth_grid: list | None = None
    n_folds: int = 20
    families: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_FAMILIES))
    n_trials: int = 50
    max_epochs: int = 100
    patience: int = 5
    search_space: dict | None = None
    embeddings: dict[str, Path] = field(default_factory=dict)
    validation: dict = field(default_factory=dict)
    digest: str = ""


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _require_exists(path: Path, what: str) -> Path:
    if not path.exists():
        raise ConfigError(f"{what} does not exist: {path}")
    return path


def load_config(path: str | Path) -> PipelineConfig:
    """Parse and fully validate a config before any work happens."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file does not exist: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    unknown = set(raw) - KNOWN_SECTIONS
    if unknown:
        raise ConfigError(f"{path}: unknown config sections {sorted(unknown)}")
    base = path.parent
    digest = hashlib.sha256(
        json.dumps(raw, sort_keys=True).encode("utf-8")).hexdigest()[:16]

    corpus_cfg = raw.get("corpus", {})
    if "alignments" not in corpus_cfg or "splits" not in corpus_cfg:
        raise ConfigError(f"{path}: corpus.alignments and corpus.splits "
                          f"are required")
    cfg = PipelineConfig(
        alignments=_require_exists(_resolve(base, corpus_cfg["alignments"]),
                                   "corpus.alignments"),
        splits=_require_exists(_resolve(base, corpus_cfg["splits"]),
                               "corpus.splits"),
        audio_root=_resolve(base, corpus_cfg.get("audio_root", ".")),
        output_dir=_resolve(base, raw.get("output_dir", "out")),
        digest=digest,
    )
    for key in ("lexicon", "prominence", "surprisal", "feature_table"):
        if key in corpus_cfg:
            setattr(cfg, key,
                    _require_exists(_resolve(base, corpus_cfg[key]),
                                    f"corpus.{key}"))

    feat_cfg = dict(raw.get("features", {}))
    if "zscore_columns" in feat_cfg:
        feat_cfg["zscore_columns"] = tuple(feat_cfg["zscore_columns"])
    known_params = set(dsp.ExtractionParams.__dataclass_fields__)
    unknown = set(feat_cfg) - known_params
    if unknown:
        raise ConfigError(f"{path}: unknown feature params {sorted(unknown)}")
    cfg.params = dsp.ExtractionParams(**feat_cfg)
    try:
        cfg.params.validate()
    except ParameterError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    dens = raw.get("density", {})
    cfg.bandwidth_grid = dens.get("bandwidth_grid")
    cfg.n_folds = int(dens.get("n_folds", 20))
    if cfg.n_folds < 2:
        raise ConfigError(f"{path}: density.n_folds must be >= 2")

    pred = raw.get("predictor", {})
    cfg.families.update(pred.get("families", {}))
    for feat, kind in cfg.families.items():
        if kind not in predictor.FAMILY_KINDS:
            raise ConfigError(f"{path}: unknown family {kind!r} for {feat!r}")
    cfg.n_trials = int(pred.get("n_trials", 50))
    if cfg.n_trials < 1:
        raise ConfigError(f"{path}: predictor.n_trials must be >= 1")
    cfg.max_epochs = int(pred.get("max_epochs", 100))
    cfg.patience = int(pred.get("patience", 5))
    cfg.search_space = pred.get("search_space")

    for name, emb_path in raw.get("embeddings", {}).items():
        if name not in corpus.CONTEXT_TYPES:
            raise ConfigError(f"{path}: unknown embedding context {name!r}")
        cfg.embeddings[name] = _require_exists(_resolve(base, emb_path),
                                               f"embeddings.{name}")
    cfg.validation = raw.get("validation", {})
    return cfg


def _stamp(cfg: PipelineConfig, seed: int) -> str:
    return f"config_digest={cfg.digest} seed={seed}"


# ---------------------------------------------------------------------------
# extract


def cmd_extract(cfg: PipelineConfig, seed: int = 0) -> Path:
    """Extract per-token prosodic features for the whole corpus and write
    the feature table plus its z-score sidecar."""
    if cfg.lexicon is None:
        raise ConfigError("corpus.lexicon is required for extract")
    utterances = corpus.load_alignment(cfg.alignments)
    lexicon = corpus.load_lexicon(cfg.lexicon)
    assignments = corpus.load_split_assignments(cfg.splits)
    prominence = (corpus.load_precomputed_column(cfg.prominence, "prominence")
                  if cfg.prominence else None)

    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    tokens_by_id = {tok.token_id: tok
                    for tok in corpus.all_tokens(utterances)}
    records = []
    dropped = []
    for utt in utterances:
        wav_path = cfg.audio_root / utt.audio_path
        try:
            rate, signal = dsp.read_wav(wav_path)
            if utt.sample_rate_hz and rate != utt.sample_rate_hz:
                raise DataError(
                    f"{wav_path}: sample rate {rate} != alignment "
                    f"{utt.sample_rate_hz}")
            records.extend(dsp.extract_utterance_features(
                utt, lexicon, cfg.params, signal, rate, prominence))
        except (OSError, ValueError, DataError) as exc:
            print(f"warning: skipping {utt.utterance_id}: {exc}",
                  file=sys.stderr)
            dropped.append(utt.utterance_id)
    if len(utterances) and len(dropped) > 0.1 * len(utterances):
        raise DataError(f"{len(dropped)}/{len(utterances)} utterances "
                        f"unreadable: {dropped[:5]}")

    rows = dsp.records_to_rows(records, tokens_by_id, cfg.params.dct_k)
    train_keys = {key for key in rows
                  if assignments.get(key[0]) == "train"}
    stats = dsp.apply_zscore(rows, train_keys, cfg.params.zscore_columns)

    comment = (f"{_stamp(cfg, seed)} dct_k={cfg.params.dct_k} "
               f"f0_domain={cfg.params.f0_domain} "
               f"pause_epsilon_s={cfg.params.pause_epsilon_s!r}")
    table_path = cfg.output_dir / "features.csv"
    dsp.write_feature_table(table_path, rows, cfg.params.dct_k, comment)
    dsp.write_zscore_sidecar(cfg.output_dir / "features_zscore.json", stats)

    n = len(rows)
    for col in dsp.SCALAR_COLUMNS:
        have = sum(1 for r in rows.values() if r.get(col) is not None)
        print(f"{col}: {have}/{n} values")
    have_f0 = sum(1 for r in rows.values() if r.get("f0_dct_0") is not None)
    print(f"f0_dct: {have_f0}/{n} values")
    zero_pauses = sum(1 for r in rows.values() if r.get("pause_after_s") == 0.0)
    print(f"pause_after_s = 0 for {100.0 * zero_pauses / n:.1f}% of words "
          f"(read speech typically ~89%)")
    print(f"wrote {table_path}")
    return table_path


# ---------------------------------------------------------------------------
# estimate


def _feature_targets(rows: dict, feature: str, dct_k: int,
                     pause_epsilon_s: float) -> dict[tuple[str, int], object]:
    """Per-token targets for one feature; tokens with missing values are
    left out. The pause column is shifted by epsilon so it fits the
    positive-support Gamma family (translation leaves MI unchanged)."""
    targets = {}
    for key, row in rows.items():
        if feature == "f0_dct":
            vals = [row.get(f"f0_dct_{i}") for i in range(dct_k)]
            if any(v is None for v in vals):
                continue
            targets[key] = np.array(vals, dtype=np.float64)
        else:
            v = row.get(feature)
            if v is None:
                continue
            if feature == "pause_after_s":
                v = v + pause_epsilon_s
            targets[key] = float(v)
    return targets


def cmd_estimate(cfg: PipelineConfig, feature: str, context: str,
                 seed: int = 0) -> infometrics.MiResult:
    """Estimate MI(feature; context) = H - H_cond and persist every
    intermediate artifact."""
    if context not in CONTEXT_ALIASES:
        raise ConfigError(f"unknown context {context!r}; expected one of "
                          f"{sorted(set(CONTEXT_ALIASES))}")
    context = CONTEXT_ALIASES[context]
    if feature not in cfg.families:
        raise ConfigError(f"unknown feature {feature!r}; expected one of "
                          f"{sorted(cfg.families)}")
    if context not in cfg.embeddings:
        raise ConfigError(f"no embedding file configured for context "
                          f"{context!r}")
    table_path = cfg.feature_table or (cfg.output_dir / "features.csv")
    if not table_path.exists():
        raise ConfigError(f"feature table does not exist: {table_path} "
                          f"(run extract first)")

    rows, dct_k = dsp.read_feature_table(table_path)
    sidecar = table_path.with_name("features_zscore.json")
    zsig = (hashlib.sha256(sidecar.read_bytes()).hexdigest()[:12]
            if sidecar.exists() else "")

    utterances = corpus.load_alignment(cfg.alignments)
    token_idx = corpus.token_index(utterances)
    assignments = corpus.load_split_assignments(cfg.splits)
    splits = corpus.build_splits(utterances, assignments)
    emb = corpus.read_embedding_file(cfg.embeddings[context], token_idx)
    if emb.context_type != context:
        raise ConfigError(f"embedding file {cfg.embeddings[context]} has "
                          f"context {emb.context_type!r}, expected {context!r}")

    targets_by_key = _feature_targets(rows, feature, dct_k,
                                      cfg.params.pause_epsilon_s)
    targets = {token_idx[k]: v for k, v in targets_by_key.items()
               if k in token_idx}
    subsets = {}
    for name in corpus.SPLIT_NAMES:
        ids = {t for t in splits[name].token_ids if t in targets}
        lost = len(splits[name].token_ids) - len(ids)
        if lost:
            print(f"{name}: dropped {lost} tokens without {feature}")
        if not ids:
            raise DataError(f"split {name!r} has no tokens with {feature}")
        subsets[name] = corpus.DatasetSplit(name, ids)

    def target_matrix(name: str) -> np.ndarray:
        return np.array([targets[t] for t in sorted(subsets[name].token_ids)])

    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    model = density.fit_kde(target_matrix("train"), target_matrix("dev"),
                            cfg.bandwidth_grid)
    h_est = density.entropy_bootstrap_model(model, target_matrix("test"),
                                            cfg.n_folds, seed)
    h_est.feature = feature
    h_est.zscore_signature = zsig

    family_kind = cfg.families[feature]
    family = predictor.PredictiveFamily(
        family_kind, dct_k if family_kind == "gaussian_diag_vector" else 1)
    joined = {name: corpus.join_embeddings(subsets[name], emb, targets)
              for name in corpus.SPLIT_NAMES}
    for j in joined.values():
        j.feature = feature
    head, trials = predictor.random_search(
        cfg.search_space, cfg.n_trials, joined["train"], joined["dev"],
        family, seed=seed, max_epochs=cfg.max_epochs, patience=cfg.patience)
    xent_mean, xent_std = predictor.conditional_xent_bootstrap(
        head, joined["test"], cfg.n_folds, seed)

    cond = infometrics.ConditionalEstimate(
        value_nats=xent_mean, std_nats=xent_std, feature=feature,
        context_type=context, model_name=f"mlp_{family.kind}",
        zscore_signature=zsig)
    mi = infometrics.mutual_information(h_est, cond)
    try:
        infometrics.uncertainty_coefficient(mi)
    except ParameterError:
        mi.flags.append("uc_unavailable")

    stamp = _stamp(cfg, seed)
    extra = {"config_digest": cfg.digest, "seed": seed}
    density.write_kde_model(cfg.output_dir / f"kde_{feature}.bin", model,
                            extra_header=extra)
    head.zscore_ref = zsig
    predictor.write_head(
        cfg.output_dir / f"head_{feature}_{context}.bin", head,
        extra_header=extra)
    predictor.write_trial_log(
        cfg.output_dir / f"trials_{feature}_{context}.csv", trials, stamp)
    _write_mi_rows(cfg.output_dir / f"mi_{feature}_{context}.csv", [mi], stamp)
    print(f"{feature}/{context}: H={mi.h_nats:.4f} "
          f"H_cond={mi.h_cond_nats:.4f} MI={mi.mi_nats:.4f}")
    return mi


def _write_mi_rows(path: Path, results: list[infometrics.MiResult],
                   comment: str) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(infometrics.REPORT_COLUMNS)
        for r in results:
            writer.writerow([
                r.feature, r.context_type, r.model_name,
                repr(r.h_nats), repr(r.h_std), repr(r.h_cond_nats),
                repr(r.h_cond_std), repr(r.mi_nats), repr(r.mi_std),
                "" if r.uc is None else repr(r.uc), ";".join(r.flags)])


def _read_mi_rows(out_dir: Path) -> list[infometrics.MiResult]:
    import csv

    results = []
    for path in sorted(out_dir.glob("mi_*.csv")):
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(ln for ln in fh if not ln.startswith("#"))
            for row in reader:
                results.append(infometrics.MiResult(
                    feature=row["feature"], context_type=row["context"],
                    model_name=row["model"],
                    h_nats=float(row["h_nats"]), h_std=float(row["h_std"]),
                    h_cond_nats=float(row["h_cond_nats"]),
                    h_cond_std=float(row["h_cond_std"]),
                    mi_nats=float(row["mi_nats"]),
                    mi_std=float(row["mi_std"]),
                    uc=float(row["uc"]) if row["uc"] else None,
                    flags=[f for f in row["flags"].split(";") if f]))
    return results


# ---------------------------------------------------------------------------
# validate and report


def cmd_validate(cfg: PipelineConfig, seed: int = 0) -> Path:
    """Run the baseline estimator suite and write the gap report."""
    n = int(cfg.validation.get("n", 20000))
    separations = cfg.validation.get("separations", (0.0, 1.0, 2.0, 4.0))
    if not len(separations):
        raise ParameterError("validation.separations is empty")
    rows = baseline.validation_suite(n=n, seed=seed,
                                     separations=tuple(separations))
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.output_dir / "validation.csv"
    baseline.write_validation_report(out, rows, _stamp(cfg, seed))
    for row in rows:
        print(f"{row['instance']}: oracle={row['oracle_mi']:.4f} "
              f"ks={row['ks_mi']:.4f} pipeline={row['pipeline_mi']:.4f}")
    print(f"wrote {out}")
    return out


def cmd_report(cfg: PipelineConfig, seed: int = 0) -> list[Path]:
    """Aggregate persisted MI rows into the report CSV and SVG charts."""
    results = _read_mi_rows(cfg.output_dir)
    if not results:
        raise ParameterError(f"no MI result files in {cfg.output_dir}; "
                             f"run estimate first")
    correlations = None
    if cfg.prominence and cfg.surprisal:
        prom = corpus.load_precomputed_column(cfg.prominence, "prominence")
        surp = corpus.load_precomputed_column(cfg.surprisal, "surprisal")
        shared = sorted(set(prom) & set(surp))
        if len(shared) >= 3:
            r, rho, n = infometrics.correlate(
                np.array([prom[k] for k in shared]),
                np.array([surp[k] for k in shared]))
            correlations = [("prominence_surprisal", r, rho, n)]
    written = infometrics.emit_report(results, correlations, cfg.digest,
                                      cfg.output_dir, seed)
    for path in written:
        print(f"wrote {path}")
    return written


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prosomi",
        description="Word-level prosody/text mutual information pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="override the configured output dir")

    add_common(sub.add_parser("extract", help="extract prosodic features"))
    est = sub.add_parser("estimate", help="estimate MI for one feature")
    add_common(est)
    est.add_argument("--feature", required=True)
    est.add_argument("--context", required=True,
                     choices=sorted(set(CONTEXT_ALIASES)))
    add_common(sub.add_parser("validate", help="run baseline comparisons"))
    add_common(sub.add_parser("report", help="render tables and charts"))
    synth = sub.add_parser("synth-corpus",
                           help="generate the bundled synthetic corpus")
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth-corpus":
            paths = generate_mini_corpus(args.out, args.seed)
            print(f"wrote synthetic corpus under {paths['audio_root']}")
            return 0
        cfg = load_config(args.config)
        if args.out:
            cfg.output_dir = Path(args.out)
        if args.command == "extract":
            cmd_extract(cfg, args.seed)
        elif args.command == "estimate":
            cmd_estimate(cfg, args.feature, args.context, args.seed)
        elif args.command == "validate":
            cmd_validate(cfg, args.seed)
        elif args.command == "report":
            cmd_report(cfg, args.seed)
        return 0
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
