"""Linear soft-margin SVM trained with stochastic sub-gradient descent.

The primal objective minimized is

    0.5 * ||w||^2 + C * sum_i max(0, 1 - y_i (w . z_i + b))

over standardized features z. The update schedule is Pegasos: step
1 / (lambda t) with lambda = 1 / (C n) and projection of w onto the ball
of radius 1 / sqrt(lambda). The bias is not regularized. After every
epoch the epoch-averaged iterate is evaluated and the best one so far is
kept, so the recorded objective history never increases.
"""
import hashlib
import logging
import warnings
from dataclasses import dataclass

import numpy as np
import numba as nb

from tibcad import general as gen
from tibcad.exceptions import (ConfigError, DataError, MissingFileError,
                               SchemaError, SingleClassError)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SvmParams:
    c: float = 1.0
    epochs: int = 50
    seed: int = 7

    def __post_init__(self):
        if not self.c > 0:
            raise ConfigError(f"Provided C should be positive, got {self.c}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Trained linear detector including its feature standardization

    Parameters:
    -----------
    weights : np.array
        Weights on standardized features; pinned features weigh 0
    bias : float
    feature_means, feature_stds : np.array
        Standardization learned on the training data (std 1 for
        constant features)
    c : float
        Regularization constant used
    schema_hash : str
        schema_hash(feature_names)
    feature_names : tuple(str)
    objective_history : tuple(float)
        Best objective after every epoch
    threshold : float
        Decision threshold of the operating point
    energy_gate : tuple(float)
        (w_lo, w_hi) of the energy gate learned with the model, if any
    feature_mode : str
    patch_size : int
    """
    weights: np.ndarray
    bias: float
    feature_means: np.ndarray
    feature_stds: np.ndarray
    c: float
    schema_hash: str
    feature_names: tuple = ()
    objective_history: tuple = ()
    threshold: float = 0.0
    energy_gate: tuple = None
    feature_mode: str = ""
    patch_size: int = 0

    @property
    def objective(self):
        return self.objective_history[-1] if self.objective_history \
            else np.nan

    @property
    def n_features(self):
        return len(self.weights)


def schema_hash(feature_names):
    """SHA-256 of the newline-joined feature names"""
    return hashlib.sha256("\n".join(feature_names).encode()).hexdigest()


def _as_signed_labels(labels):
    labels = np.asarray(labels)
    return np.where(labels > 0, 1.0, -1.0)


@nb.njit(cache=True)
def _pegasos_epoch(Z, y, order, w, b, t, lam, radius):
    """One pass over the samples in the given order

    Returns the last iterate, the step counter and the epoch-averaged
    iterate.
    """
    n, d = Z.shape
    w_sum = np.zeros(d)
    b_sum = 0.0
    for idx in order:
        t += 1
        eta = 1.0 / (lam * t)
        score = b
        for k in range(d):
            score += Z[idx, k] * w[k]
        shrink = 1.0 - 1.0 / t
        for k in range(d):
            w[k] *= shrink
        if y[idx] * score < 1.0:
            for k in range(d):
                w[k] += eta * y[idx] * Z[idx, k]
            b += eta * y[idx]
        norm = 0.0
        for k in range(d):
            norm += w[k] * w[k]
        norm = np.sqrt(norm)
        if norm > radius:
            for k in range(d):
                w[k] *= radius / norm
        for k in range(d):
            w_sum[k] += w[k]
        b_sum += b
    return w, b, t, w_sum / n, b_sum / n


def primal_objective(Z, y, w, b, c):
    """Hinge-loss primal objective on standardized features"""
    margins = y * (Z @ w + b)
    return float(0.5 * w @ w + c * np.sum(np.maximum(0.0, 1.0 - margins)))


def standardize(features, means, stds):
    return (np.asarray(features, dtype=np.float64) - means) / stds


def train(features, labels, params=None, feature_names=None):
    """Trains a linear SVM

    Parameters:
    -----------
    features : np.array
        (n, d) raw feature matrix
    labels : np.array
        n labels; positive values are the TIB class
    params : SvmParams (optional)
    feature_names : sequence(str) (optional)
        Defaults to f0, f1, ...

    Returns:
    --------
    model : SvmModel
    """
    params = params or SvmParams()
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"feature matrix must be 2D, got shape {X.shape}")
    n, d = X.shape
    y = _as_signed_labels(labels)
    if len(y) != n:
        raise DataError(f"{n} feature rows but {len(y)} labels")
    if not np.all(np.isfinite(X)):
        raise DataError("feature matrix holds NaN or infinite values")
    if np.all(y > 0) or np.all(y < 0):
        raise SingleClassError("training data holds a single class")
    if feature_names is None:
        feature_names = tuple(f"f{k}" for k in range(d))
    feature_names = tuple(feature_names)
    if len(feature_names) != d:
        raise SchemaError(f"{len(feature_names)} feature names for {d} "
                          "feature columns")

    means = X.mean(axis=0)
    stds = X.std(axis=0)
    pinned = X.max(axis=0) == X.min(axis=0)
    if pinned.any():
        warnings.warn(f"Zero-variance features pinned to weight 0: "
                      f"{[feature_names[k] for k in np.flatnonzero(pinned)]}")
    stds[pinned] = 1.0
    Z = standardize(X, means, stds)
    Z[:, pinned] = 0.0

    lam = 1.0 / (params.c * n)
    radius = 1.0 / np.sqrt(lam)
    rng = np.random.default_rng(params.seed)
    w = np.zeros(d)
    b = 0.0
    t = 0
    best = (np.inf, np.zeros(d), 0.0)
    history = []
    for epoch in range(params.epochs):
        order = rng.permutation(n)
        w, b, t, w_avg, b_avg = _pegasos_epoch(Z, y, order, w, b, t, lam,
                                               radius)
        objective = primal_objective(Z, y, w_avg, b_avg, params.c)
        if objective < best[0]:
            best = (objective, w_avg.copy(), b_avg)
        history.append(best[0])
        logger.debug("Epoch %d: objective %.6g", epoch, best[0])

    weights = best[1]
    weights[pinned] = 0.0
    logger.info("Trained linear SVM on %d samples x %d features, "
                "objective %.6g", n, d, best[0])

    return SvmModel(weights=weights, bias=float(best[2]),
                    feature_means=means, feature_stds=stds,
                    c=float(params.c), schema_hash=schema_hash(feature_names),
                    feature_names=feature_names,
                    objective_history=tuple(history))


def _check_schema(model, n_features, feature_names):
    if n_features != model.n_features:
        raise SchemaError(f"model expects {model.n_features} features, "
                          f"got {n_features}")
    if feature_names is not None and \
            schema_hash(tuple(feature_names)) != model.schema_hash:
        raise SchemaError("feature names do not match the model schema")


def decision_many(model, features, feature_names=None):
    """Signed decision values of a (n, d) feature matrix"""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"feature matrix must be 2D, got shape {X.shape}")
    _check_schema(model, X.shape[1], feature_names)
    return standardize(X, model.feature_means, model.feature_stds) \
        @ model.weights + model.bias


def decision(model, x, feature_names=None):
    """Signed decision value of one feature vector"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("decision expects a single feature vector")
    return float(decision_many(model, x[None, :], feature_names)[0])


def predict(model, features, feature_names=None):
    """True where the decision value reaches the model threshold"""
    return decision_many(model, features, feature_names) >= model.threshold


def save_model(path, model):
    entries = {
        "schema_hash": model.schema_hash,
        "feature_names": " ".join(model.feature_names),
        "feature_mode": model.feature_mode or "-",
        "patch_size": str(model.patch_size),
        "c": repr(model.c),
        "bias": repr(model.bias),
        "threshold": repr(float(model.threshold)),
        "weights": gen.format_floats(model.weights),
        "feature_means": gen.format_floats(model.feature_means),
        "feature_stds": gen.format_floats(model.feature_stds),
        "objective_history": gen.format_floats(model.objective_history),
        "energy_gate": (gen.format_floats(model.energy_gate)
                        if model.energy_gate is not None else "-"),
    }
    with open(path, "w") as f:
        f.write("# tibcad linear SVM model\n")
        f.write(gen.format_key_value(entries))
    logger.info("Saved model to %s", path)


def load_model(path):
    try:
        with open(path, "r") as f:
            entries = gen.parse_key_value_text(f.read(), source=str(path))
    except FileNotFoundError:
        raise MissingFileError(f"model file not found: {path}")

    try:
        gate = entries["energy_gate"]
        model = SvmModel(
            weights=gen.parse_floats(entries["weights"]),
            bias=float(entries["bias"]),
            feature_means=gen.parse_floats(entries["feature_means"]),
            feature_stds=gen.parse_floats(entries["feature_stds"]),
            c=float(entries["c"]),
            schema_hash=entries["schema_hash"],
            feature_names=tuple(entries["feature_names"].split()),
            objective_history=tuple(
                gen.parse_floats(entries["objective_history"])),
            threshold=float(entries["threshold"]),
            energy_gate=(None if gate == "-"
                         else tuple(gen.parse_floats(gate))),
            feature_mode=("" if entries["feature_mode"] == "-"
                          else entries["feature_mode"]),
            patch_size=int(entries["patch_size"]))
    except KeyError as e:
        raise DataError(f"{path}: missing model key {e}")
    except ValueError as e:
        raise DataError(f"{path}: malformed model value ({e})")

    n = model.n_features
    if not (len(model.feature_means) == len(model.feature_stds) ==
            len(model.feature_names) == n):
        raise SchemaError(f"{path}: inconsistent feature dimensions")
    if schema_hash(model.feature_names) != model.schema_hash:
        raise SchemaError(f"{path}: schema hash does not match names")

    return model
