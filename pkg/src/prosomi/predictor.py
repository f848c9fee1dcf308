"""Conditional cross-entropy heads on frozen embeddings.

A small MLP maps a word embedding to the parameters of a predictive
distribution over one prosodic feature (scalar Gaussian, scalar Gamma, or
diagonal-Gaussian vector). Heads are trained by Adam on the mean negative
log-likelihood with early stopping, and the best config is found by random
search. Conditional cross-entropy H(P|W) is the held-out mean NLL.

Everything is plain numpy with hand-written backprop: the same analytic
gradients are exposed for finite-difference checking, and fixed seeds give
bit-reproducible training at a fixed thread count.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import digamma, expit, gammaln, polygamma

from .corpus import CONTEXT_TYPES, JoinedDataset
from .errors import (DegenerateDataError, ParameterError, ParseError,
                     SearchFailedError, SupportError, TrainingDivergedError,
                     ValidationError)

POSITIVITY_FLOOR = 1e-4
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

FAMILY_KINDS = ("gaussian_scalar", "gamma_scalar", "gaussian_diag_vector")


@dataclass(frozen=True)
class PredictiveFamily:
    kind: str
    k: int = 1  # target dimension; > 1 only for the vector family

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ParameterError(f"unknown family kind {self.kind!r}")
        if self.kind == "gaussian_diag_vector":
            if self.k < 1:
                raise ParameterError("vector family needs k >= 1")
        elif self.k != 1:
            raise ParameterError(f"{self.kind} is scalar; k must be 1")

    @property
    def n_outputs(self) -> int:
        return 2 * self.k


@dataclass
class MlpConfig:
    n_layers: int = 1
    hidden_units: int = 64
    dropout_p: float = 0.0
    l2_lambda: float = 0.0
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 100
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_layers < 1:
            raise ParameterError("n_layers must be >= 1")
        if self.hidden_units < 1:
            raise ParameterError("hidden_units must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ParameterError("dropout_p must be in [0, 1)")
        if self.l2_lambda < 0:
            raise ParameterError("l2_lambda must be >= 0")
        if self.learning_rate <= 0:
            raise ParameterError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ParameterError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ParameterError("patience must be >= 1")


# ---------------------------------------------------------------------------
# Family negative log-likelihood and analytic gradients


def nll(family: PredictiveFamily, params, target) -> float:
    """Exact negative log density of the family at a single target."""
    if family.kind == "gaussian_scalar":
        mu, sigma = params
        _check_positive("sigma", sigma)
        return float(HALF_LOG_2PI + math.log(sigma)
                     + (target - mu) ** 2 / (2.0 * sigma ** 2))
    if family.kind == "gamma_scalar":
        alpha, beta = params
        _check_positive("alpha", alpha)
        _check_positive("beta", beta)
        if target <= 0:
            raise SupportError(f"Gamma target must be > 0, got {target}")
        return float(gammaln(alpha) - alpha * math.log(beta)
                     - (alpha - 1.0) * math.log(target) + beta * target)
    mu, sigma = (np.asarray(p, dtype=np.float64) for p in params)
    t = np.asarray(target, dtype=np.float64)
    if not (mu.shape == sigma.shape == t.shape == (family.k,)):
        raise ParameterError(
            f"vector family expects ({family.k},) params and target")
    if np.any(sigma <= 0):
        raise ParameterError("sigma must be > 0 in every coordinate")
    return float(np.sum(HALF_LOG_2PI + np.log(sigma)
                        + (t - mu) ** 2 / (2.0 * sigma ** 2)))


def nll_grad(family: PredictiveFamily, params, target):
    """Partial derivatives of nll with respect to each parameter, in the
    same structure as ``params``. Matches central finite differences."""
    if family.kind == "gaussian_scalar":
        mu, sigma = params
        d_mu = (mu - target) / sigma ** 2
        d_sigma = 1.0 / sigma - (target - mu) ** 2 / sigma ** 3
        return (float(d_mu), float(d_sigma))
    if family.kind == "gamma_scalar":
        alpha, beta = params
        if target <= 0:
            raise SupportError(f"Gamma target must be > 0, got {target}")
        d_alpha = digamma(alpha) - math.log(beta) - math.log(target)
        d_beta = -alpha / beta + target
        return (float(d_alpha), float(d_beta))
    mu, sigma = (np.asarray(p, dtype=np.float64) for p in params)
    t = np.asarray(target, dtype=np.float64)
    d_mu = (mu - t) / sigma ** 2
    d_sigma = 1.0 / sigma - (t - mu) ** 2 / sigma ** 3
    return (d_mu, d_sigma)


def _check_positive(name: str, value: float) -> None:
    if not value > 0:
        raise ParameterError(f"{name} must be > 0, got {value}")


def _batch_nll(family: PredictiveFamily, mu_or_alpha: np.ndarray,
               sigma_or_beta: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per-row NLL for a batch; targets (n,) scalar or (n, k) vector."""
    if family.kind == "gamma_scalar":
        a, b = mu_or_alpha, sigma_or_beta
        return (gammaln(a) - a * np.log(b)
                - (a - 1.0) * np.log(targets) + b * targets)
    per = (HALF_LOG_2PI + np.log(sigma_or_beta)
           + (targets - mu_or_alpha) ** 2 / (2.0 * sigma_or_beta ** 2))
    return per if family.kind == "gaussian_scalar" else per.sum(axis=1)


def _batch_nll_grads(family: PredictiveFamily, a: np.ndarray, b: np.ndarray,
                     targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if family.kind == "gamma_scalar":
        return (digamma(a) - np.log(b) - np.log(targets), -a / b + targets)
    return ((a - targets) / b ** 2, 1.0 / b - (targets - a) ** 2 / b ** 3)


def _softplus(z: np.ndarray) -> np.ndarray:
    # log(1 + e^z) without overflow for large |z|
    return np.logaddexp(0.0, z)


# ---------------------------------------------------------------------------
# The MLP


@dataclass
class TrainedHead:
    config: MlpConfig
    family: PredictiveFamily
    weights: list[tuple[np.ndarray, np.ndarray]]  # (W, b) per layer
    val_xent_nats: float
    context_type: str = ""
    input_dim: int = 0
    zscore_ref: str = ""
    epoch_val_nll: list[float] = field(default_factory=list, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.val_xent_nats):
            raise ValidationError("val_xent_nats must be finite")
        for W, b in self.weights:
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValidationError("head weights must be finite")


def init_weights(input_dim: int, config: MlpConfig,
                 family: PredictiveFamily,
                 rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    """He-uniform weight matrices, zero biases (output layer included)."""
    sizes = ([input_dim] + [config.hidden_units] * config.n_layers
             + [family.n_outputs])
    weights = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / fan_in)
        W = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        weights.append((W, np.zeros(fan_out)))
    return weights


def _forward_raw(weights, X: np.ndarray, dropout_p: float = 0.0,
                 rng: np.random.Generator | None = None):
    """Forward pass; returns raw outputs plus per-layer caches for backprop.

    Dropout (inverted scaling) applies to hidden activations only, and only
    when an rng is supplied.
    """
    caches = []
    h = X
    for li, (W, b) in enumerate(weights):
        a = h @ W.T + b
        if li < len(weights) - 1:
            z = np.maximum(a, 0.0)
            mask = None
            if rng is not None and dropout_p > 0.0:
                mask = (rng.random(z.shape) >= dropout_p) / (1.0 - dropout_p)
                z = z * mask
            caches.append((h, a, mask))
            h = z
        else:
            caches.append((h, a, None))
    return caches[-1][1], caches


def _split_params(family: PredictiveFamily, raw: np.ndarray):
    """Map raw outputs to (location-like, scale-like) parameter arrays."""
    k = family.k
    if family.kind == "gaussian_scalar":
        return raw[:, 0], _softplus(raw[:, 1]) + POSITIVITY_FLOOR
    if family.kind == "gamma_scalar":
        return (_softplus(raw[:, 0]) + POSITIVITY_FLOOR,
                _softplus(raw[:, 1]) + POSITIVITY_FLOOR)
    return raw[:, :k], _softplus(raw[:, k:]) + POSITIVITY_FLOOR


def _raw_grad(family: PredictiveFamily, raw: np.ndarray, d_a: np.ndarray,
              d_b: np.ndarray) -> np.ndarray:
    """Chain parameter gradients back through the positivity transforms."""
    k = family.k
    grad = np.empty_like(raw)
    if family.kind == "gaussian_scalar":
        grad[:, 0] = d_a
        grad[:, 1] = d_b * expit(raw[:, 1])
    elif family.kind == "gamma_scalar":
        grad[:, 0] = d_a * expit(raw[:, 0])
        grad[:, 1] = d_b * expit(raw[:, 1])
    else:
        grad[:, :k] = d_a
        grad[:, k:] = d_b * expit(raw[:, k:])
    return grad


def _backward(weights, caches, grad_raw: np.ndarray, l2_lambda: float):
    """Gradients of mean loss w.r.t. every (W, b), given d loss / d raw."""
    grads = [None] * len(weights)
    delta = grad_raw
    for li in range(len(weights) - 1, -1, -1):
        h_in, a, mask = caches[li]
        gW = delta.T @ h_in + 2.0 * l2_lambda * weights[li][0]
        gb = delta.sum(axis=0)
        grads[li] = (gW, gb)
        if li > 0:
            delta = delta @ weights[li][0]
            _, a_prev, mask_prev = caches[li - 1]
            delta = delta * (a_prev > 0.0)
            if mask_prev is not None:
                delta = delta * mask_prev
    return grads


def forward(head: TrainedHead, embedding: np.ndarray):
    """Predictive parameters for one embedding (dropout disabled)."""
    x = np.asarray(embedding, dtype=np.float64)
    if x.shape != (head.input_dim,):
        raise ParameterError(
            f"embedding shape {x.shape} does not match head input "
            f"({head.input_dim},)")
    raw, _ = _forward_raw(head.weights, x[None, :])
    a, b = _split_params(head.family, raw)
    if head.family.kind == "gaussian_diag_vector":
        return a[0].copy(), b[0].copy()
    return float(a[0]), float(b[0])


def _validate_joined(name: str, data: JoinedDataset,
                     family: PredictiveFamily) -> np.ndarray:
    if len(data) == 0:
        raise ParameterError(f"{name} set is empty")
    targets = np.asarray(data.targets, dtype=np.float64)
    if not np.all(np.isfinite(targets)):
        raise ValidationError(f"{name} targets contain non-finite values")
    if family.kind == "gaussian_diag_vector":
        if targets.ndim != 2 or targets.shape[1] != family.k:
            raise ParameterError(
                f"{name} targets must be (n, {family.k}) for the vector family")
    else:
        if targets.ndim != 1:
            raise ParameterError(f"{name} targets must be scalar per row")
        if family.kind == "gamma_scalar" and np.any(targets <= 0):
            bad = int(np.argmax(targets <= 0))
            raise SupportError(
                f"Gamma target <= 0 at row {bad} "
                f"(token {data.token_ids[bad]}): {targets[bad]}")
    return targets


def _mean_val_nll(weights, family: PredictiveFamily, X: np.ndarray,
                  targets: np.ndarray) -> float:
    raw, _ = _forward_raw(weights, X)
    a, b = _split_params(family, raw)
    per = _batch_nll(family, a, b, targets)
    return float(np.mean(np.sort(per)))


def train_head(dataset: JoinedDataset, val: JoinedDataset, config: MlpConfig,
               family: PredictiveFamily) -> TrainedHead:
    """Adam on mean NLL + l2_lambda * sum of squared weight matrices, with
    early stopping on validation NLL and best-weights restore."""
    X = np.asarray(dataset.embeddings, dtype=np.float64)
    Xv = np.asarray(val.embeddings, dtype=np.float64)
    y = _validate_joined("train", dataset, family)
    yv = _validate_joined("val", val, family)
    if X.shape[1] != Xv.shape[1]:
        raise ParameterError("train and val embedding dims differ")

    rng = np.random.default_rng(config.seed)
    weights = init_weights(X.shape[1], config, family, rng)
    adam_m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in weights]
    adam_v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in weights]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    n = len(X)
    best_val = math.inf
    best_weights = [(W.copy(), b.copy()) for W, b in weights]
    history: list[float] = []
    since_improved = 0

    for epoch in range(config.max_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            xb, yb = X[idx], y[idx]
            raw, caches = _forward_raw(weights, xb, config.dropout_p, rng)
            a, b = _split_params(family, raw)
            d_a, d_b = _batch_nll_grads(family, a, b, yb)
            grad_raw = _raw_grad(family, raw, d_a, d_b) / len(idx)
            grads = _backward(weights, caches, grad_raw, config.l2_lambda)
            if any(not np.all(np.isfinite(g)) for gW, gb in grads
                   for g in (gW, gb)):
                raise TrainingDivergedError(
                    f"non-finite gradients at epoch {epoch}", epoch=epoch)
            step += 1
            bc1 = 1.0 - beta1 ** step
            bc2 = 1.0 - beta2 ** step
            for li in range(len(weights)):
                W, bvec = weights[li]
                new = []
                for cur, g, m, v in ((W, grads[li][0], adam_m[li][0], adam_v[li][0]),
                                     (bvec, grads[li][1], adam_m[li][1], adam_v[li][1])):
                    m *= beta1
                    m += (1.0 - beta1) * g
                    v *= beta2
                    v += (1.0 - beta2) * g * g
                    new.append(cur - config.learning_rate
                               * (m / bc1) / (np.sqrt(v / bc2) + eps))
                weights[li] = (new[0], new[1])

        val_nll = _mean_val_nll(weights, family, Xv, yv)
        history.append(val_nll)
        if not math.isfinite(val_nll):
            raise TrainingDivergedError(
                f"validation NLL became non-finite at epoch {epoch}",
                epoch=epoch)
        if val_nll < best_val:
            best_val = val_nll
            best_weights = [(W.copy(), b.copy()) for W, b in weights]
            since_improved = 0
        else:
            since_improved += 1
            if since_improved >= config.patience:
                break

    return TrainedHead(config=config, family=family, weights=best_weights,
                       val_xent_nats=best_val, context_type=dataset.context_type,
                       input_dim=X.shape[1], epoch_val_nll=history)


def conditional_xent(head: TrainedHead, test: JoinedDataset) -> float:
    """Held-out conditional cross-entropy: mean NLL of predicted parameters
    at the observed targets, in nats."""
    targets = _validate_joined("test", test, head.family)
    X = np.asarray(test.embeddings, dtype=np.float64)
    if X.shape[1] != head.input_dim:
        raise ParameterError(f"test embeddings have dim {X.shape[1]}, "
                             f"head expects {head.input_dim}")
    raw, _ = _forward_raw(head.weights, X)
    a, b = _split_params(head.family, raw)
    per = _batch_nll(head.family, a, b, targets)
    return float(np.mean(np.sort(per)))


def conditional_xent_bootstrap(head: TrainedHead, test: JoinedDataset,
                               n_folds: int = 20,
                               seed: int = 0) -> tuple[float, float]:
    """Conditional cross-entropy with a bootstrap spread: resample the
    per-row NLLs with replacement n_folds times; returns (mean, std)."""
    if n_folds < 2:
        raise ParameterError("n_folds must be >= 2 for a defined std")
    targets = _validate_joined("test", test, head.family)
    X = np.asarray(test.embeddings, dtype=np.float64)
    raw, _ = _forward_raw(head.weights, X)
    a, b = _split_params(head.family, raw)
    per = _batch_nll(head.family, a, b, targets)
    rng = np.random.default_rng(seed)
    fold_values = np.empty(n_folds)
    for f in range(n_folds):
        take = rng.integers(0, len(per), size=len(per))
        fold_values[f] = float(np.mean(np.sort(per[take])))
    return float(np.mean(fold_values)), float(np.std(fold_values, ddof=1))


def constant_fit_xent(family: PredictiveFamily, targets: np.ndarray) -> float:
    """Cross-entropy of the best constant-parameter predictor (the
    unconditional maximum-likelihood fit within the family)."""
    t = np.asarray(targets, dtype=np.float64)
    if family.kind == "gaussian_scalar":
        var = float(np.var(t))
        if not var > 0:
            raise DegenerateDataError("targets have zero variance")
        return 0.5 * math.log(2.0 * math.pi * math.e * var)
    if family.kind == "gaussian_diag_vector":
        var = np.var(t, axis=0)
        if not np.all(var > 0):
            raise DegenerateDataError("a target coordinate has zero variance")
        return float(np.sum(0.5 * np.log(2.0 * math.pi * math.e * var)))
    if np.any(t <= 0):
        raise SupportError("Gamma fit requires positive targets")
    mean = float(np.mean(t))
    s = math.log(mean) - float(np.mean(np.log(t)))
    if not s > 0:
        raise DegenerateDataError("targets have zero log-spread")
    alpha = (3.0 - s + math.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    for _ in range(25):  # Newton on the Gamma ML equation
        alpha -= ((math.log(alpha) - digamma(alpha) - s)
                  / (1.0 / alpha - polygamma(1, alpha)))
    beta = alpha / mean
    per = _batch_nll(PredictiveFamily("gamma_scalar"),
                     np.full_like(t, alpha), np.full_like(t, beta), t)
    return float(np.mean(np.sort(per)))


# ---------------------------------------------------------------------------
# Random hyperparameter search

DEFAULT_SEARCH_SPACE = {
    "learning_rate": (1e-5, 1e-2),  # log-uniform
    "l2_lambda": (1e-8, 1e-2),  # log-uniform
    "dropout_p": (0.0, 0.1, 0.2, 0.3),
    "n_layers": (1, 2, 3),
    "hidden_units": (64, 128, 256, 512),
    "batch_size": (128, 256, 512),
}


def sample_config(space: dict, rng: np.random.Generator, *,
                  max_epochs: int = 100, patience: int = 5) -> MlpConfig:
    lr_lo, lr_hi = space["learning_rate"]
    l2_lo, l2_hi = space["l2_lambda"]
    return MlpConfig(
        learning_rate=float(np.exp(rng.uniform(np.log(lr_lo), np.log(lr_hi)))),
        l2_lambda=float(np.exp(rng.uniform(np.log(l2_lo), np.log(l2_hi)))),
        dropout_p=float(rng.choice(space["dropout_p"])),
        n_layers=int(rng.choice(space["n_layers"])),
        hidden_units=int(rng.choice(space["hidden_units"])),
        batch_size=int(rng.choice(space["batch_size"])),
        max_epochs=max_epochs,
        patience=patience,
        seed=int(rng.integers(0, 2 ** 31 - 1)),
    )


def random_search(space: dict | None, n_trials: int, dataset: JoinedDataset,
                  val: JoinedDataset, family: PredictiveFamily,
                  seed: int = 0, *, max_epochs: int = 100,
                  patience: int = 5) -> tuple[TrainedHead, list[dict]]:
    """Train n_trials randomly sampled configs; return the head with the
    lowest validation cross-entropy and the full trial table."""
    if n_trials < 1:
        raise ParameterError("n_trials must be >= 1")
    space = dict(DEFAULT_SEARCH_SPACE if space is None else space)
    for key in DEFAULT_SEARCH_SPACE:
        if key not in space or not len(np.atleast_1d(space[key])):
            raise ParameterError(f"search space missing {key!r}")

    rng = np.random.default_rng(seed)
    # draw every config up front so trials are order-independent
    configs = [sample_config(space, rng, max_epochs=max_epochs,
                             patience=patience) for _ in range(n_trials)]

    best_head: TrainedHead | None = None
    log_rows: list[dict] = []
    for trial, config in enumerate(configs):
        status = "ok"
        try:
            head = train_head(dataset, val, config, family)
            val_xent = head.val_xent_nats
        except TrainingDivergedError:
            head, val_xent, status = None, math.inf, "diverged"
        log_rows.append({
            "trial": trial, "lr": config.learning_rate,
            "l2": config.l2_lambda, "dropout": config.dropout_p,
            "layers": config.n_layers, "hidden": config.hidden_units,
            "batch": config.batch_size, "val_xent_nats": val_xent,
            "status": status,
        })
        if head is not None and (best_head is None
                                 or val_xent < best_head.val_xent_nats):
            best_head = head
    if best_head is None:
        raise SearchFailedError("all trials diverged", trial_log=log_rows)
    return best_head, log_rows


def write_trial_log(path: str | Path, rows: list[dict],
                    comment: str | None = None) -> None:
    cols = ["trial", "lr", "l2", "dropout", "layers", "hidden", "batch",
            "val_xent_nats", "status"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            out = []
            for c in cols:
                v = row[c]
                out.append(repr(float(v)) if isinstance(v, float) else v)
            writer.writerow(out)


# ---------------------------------------------------------------------------
# Persistence: JSON header line + little-endian float32 weights, layer-major


def write_head(path: str | Path, head: TrainedHead,
               extra_header: dict | None = None) -> None:
    header = {
        "config": {
            "n_layers": head.config.n_layers,
            "hidden_units": head.config.hidden_units,
            "dropout_p": head.config.dropout_p,
            "l2_lambda": head.config.l2_lambda,
            "learning_rate": head.config.learning_rate,
            "batch_size": head.config.batch_size,
            "max_epochs": head.config.max_epochs,
            "patience": head.config.patience,
            "seed": head.config.seed,
        },
        "family": {"kind": head.family.kind, "k": head.family.k},
        "layer_shapes": [[int(W.shape[0]), int(W.shape[1])]
                         for W, _ in head.weights],
        "val_xent_nats": head.val_xent_nats,
        "context_type": head.context_type,
        "zscore_ref": head.zscore_ref,
        "input_dim": head.input_dim,
    }
    if extra_header:
        header.update(extra_header)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for W, b in head.weights:
            fh.write(np.ascontiguousarray(W, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f4").tobytes())


def read_head(path: str | Path) -> TrainedHead:
    with open(path, "rb") as fh:
        try:
            header = json.loads(fh.readline().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError(f"{path}: bad head header: {exc}") from exc
        payload = fh.read()
    shapes = [tuple(s) for s in header["layer_shapes"]]
    expected = sum(4 * (o * i + o) for o, i in shapes)
    if len(payload) != expected:
        raise ParseError(f"{path}: payload is {len(payload)} bytes, "
                         f"expected {expected}")
    weights = []
    offset = 0
    for out_dim, in_dim in shapes:
        W = np.frombuffer(payload, dtype="<f4", count=out_dim * in_dim,
                          offset=offset).reshape(out_dim, in_dim)
        offset += 4 * out_dim * in_dim
        b = np.frombuffer(payload, dtype="<f4", count=out_dim, offset=offset)
        offset += 4 * out_dim
        weights.append((W.astype(np.float64), b.astype(np.float64)))
    fam = PredictiveFamily(header["family"]["kind"], int(header["family"]["k"]))
    config = MlpConfig(**header["config"])
    return TrainedHead(config=config, family=fam, weights=weights,
                       val_xent_nats=float(header["val_xent_nats"]),
                       context_type=header.get("context_type", ""),
                       input_dim=int(header["input_dim"]),
                       zscore_ref=header.get("zscore_ref", ""))
