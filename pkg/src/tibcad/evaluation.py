"""ROC analysis, scan-level cross-validation and paired t-tests."""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import betainc
from scipy.stats import rankdata

from tibcad import svm
from tibcad.exceptions import (ConfigError, DataError,
                               DegenerateStatisticsError, SingleClassError)

logger = logging.getLogger(__name__)

MAX_SHUFFLES = 100


@dataclass(frozen=True)
class EvalParams:
    folds: int = 2
    runs: int = 10
    seed: int = 7
    specificity: float = 0.95

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigError(f"need at least 2 folds, got {self.folds}")
        if self.runs < 1:
            raise ConfigError(f"need at least 1 run, got {self.runs}")
        if not 0.0 <= self.specificity <= 1.0:
            raise ConfigError("specificity must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class RocCurve:
    """ROC operating points from the strictest threshold (+inf) to the
    loosest; fpr and tpr are non-decreasing from (0, 0) to (1, 1)"""
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


@dataclass(frozen=True)
class CvSplit:
    """Scan to fold assignment of one cross-validation run"""
    folds: dict
    seed: int

    def scans_in(self, fold):
        return sorted(s for s, f in self.folds.items() if f == fold)


@dataclass(frozen=True, eq=False)
class CvResult:
    """Held-out scores and labels are pooled in fold order"""
    roc: RocCurve
    fold_aucs: tuple
    split: CvSplit
    scores: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False, default=None)


def _check_scores(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel() > 0
    if len(scores) != len(labels):
        raise DataError(f"{len(scores)} scores but {len(labels)} labels")
    if not np.all(np.isfinite(scores)):
        raise DataError("scores must be finite")
    if labels.all() or not labels.any():
        raise SingleClassError("ROC needs both classes")
    return scores, labels


def roc(scores, labels):
    """Empirical ROC curve and its trapezoidal area

    Tied scores form a single operating point, so the area counts every
    tied positive/negative pair as one half.

    Parameters:
    -----------
    scores : np.array
        Decision values; higher means more likely positive
    labels : np.array
        Positive values mark the positive class

    Returns:
    --------
    curve : RocCurve
    """
    scores, labels = _check_scores(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    positive = labels[order]

    last_of_group = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tps = np.cumsum(positive)[last_of_group]
    fps = np.cumsum(~positive)[last_of_group]

    tpr = np.r_[0.0, tps / positive.sum()]
    fpr = np.r_[0.0, fps / (~positive).sum()]
    thresholds = np.r_[np.inf, s[last_of_group]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))

    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=auc)


def mann_whitney_auc(scores, labels):
    """AUC as the normalized Mann-Whitney U statistic (mid-ranks for
    ties)"""
    scores, labels = _check_scores(scores, labels)
    ranks = rankdata(scores)
    n_pos = labels.sum()
    n_neg = len(labels) - n_pos
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2

    return float(u / (n_pos * n_neg))


def roc_to_frame(curve):
    return pd.DataFrame({"threshold": curve.thresholds,
                         "fpr": curve.fpr,
                         "tpr": curve.tpr})


def threshold_for_specificity(curve, specificity=0.95):
    """Strictest threshold reaching the highest true positive rate among
    the operating points whose false positive rate stays within
    1 - specificity"""
    allowed = np.flatnonzero(curve.fpr <= 1.0 - specificity + 1e-12)
    best = allowed[np.argmax(curve.tpr[allowed])]
    return float(curve.thresholds[best])


def _assign_folds(scans, scan_classes, n_folds, rng):
    """Random balanced scan-to-fold assignment in which every fold holds
    both classes, retried up to MAX_SHUFFLES times"""
    for attempt in range(MAX_SHUFFLES):
        permutation = rng.permutation(len(scans))
        folds = {scans[p]: rank % n_folds
                 for rank, p in enumerate(permutation)}
        ok = all({scan_classes[s] for s, f in folds.items() if f == k}
                 == {True, False} for k in range(n_folds))
        if ok:
            return folds
    raise SingleClassError(f"no fold assignment with both classes in every "
                           f"fold after {MAX_SHUFFLES} shuffles")


def crossval(table, feature_names, svm_params=None, n_folds=2, seed=7,
             fold_table=None):
    """Scan-level k-fold cross-validation of the linear SVM

    Parameters:
    -----------
    table : pd.DataFrame
        One row per patch with columns scan_id, label and feature_names.
        Scan classes and the fold assignment are taken from it.
    feature_names : sequence(str)
    svm_params : SvmParams (optional)
    n_folds : int (optional)
        Defaults to 2
    seed : int (optional)
        Seeds the fold assignment; defaults to 7
    fold_table : callable (optional)
        Called with the sorted training scan ids of a fold, returns the
        rows that fold trains and tests on. Use it for preprocessing that
        is learned from labels, so held-out scans never inform it.
        Defaults to table for every fold.

    Returns:
    --------
    result : CvResult
        Pooled ROC over all held-out scores and per-fold AUCs
    """
    if n_folds < 2:
        raise ConfigError(f"need at least 2 folds, got {n_folds}")
    feature_names = list(feature_names)
    labels = table["label"].to_numpy() > 0
    scan_ids = table["scan_id"].astype(str).to_numpy()

    # A scan counts as TIB when it holds at least one TIB patch
    scan_classes = pd.Series(labels).groupby(scan_ids).any().to_dict()
    scans = sorted(scan_classes)
    n_tib = sum(scan_classes.values())
    if min(n_tib, len(scans) - n_tib) < n_folds:
        raise DataError(f"{n_tib} TIB and {len(scans) - n_tib} normal scans "
                        f"cannot fill {n_folds} folds with both classes")

    rng = np.random.default_rng(seed)
    folds = _assign_folds(scans, scan_classes, n_folds, rng)
    split = CvSplit(folds=folds, seed=seed)

    scores, held_out, fold_aucs = [], [], []
    for k in range(n_folds):
        test_scans = split.scans_in(k)
        train_scans = tuple(s for s in scans if folds[s] != k)
        logger.info("Run seed %d fold %d: test scans %s", seed, k,
                    test_scans)
        rows = table if fold_table is None else fold_table(train_scans)
        row_scans = rows["scan_id"].astype(str)
        test = row_scans.isin(test_scans).to_numpy()
        train = row_scans.isin(train_scans).to_numpy()
        X = rows[feature_names].to_numpy(dtype=np.float64)
        y = rows["label"].to_numpy() > 0

        model = svm.train(X[train], y[train], svm_params, feature_names)
        fold_scores = svm.decision_many(model, X[test])
        fold_aucs.append(roc(fold_scores, y[test]).auc)
        scores.append(fold_scores)
        held_out.append(y[test])

    scores = np.concatenate(scores)
    held_out = np.concatenate(held_out)
    pooled = roc(scores, held_out)
    logger.info("Seed %d: pooled Az %.4f, fold Az %s", seed, pooled.auc,
                [round(a, 4) for a in fold_aucs])

    return CvResult(roc=pooled, fold_aucs=tuple(fold_aucs), split=split,
                    scores=scores, labels=held_out)


def repeated_crossval(table, feature_names, svm_params=None, params=None,
                      fold_table=None):
    """params.runs cross-validations with seeds params.seed + run

    Per-fold AUCs of all runs, concatenated in run order, pair up across
    feature sets evaluated with the same params.
    """
    params = params or EvalParams()
    return [crossval(table, feature_names, svm_params, params.folds,
                     params.seed + run, fold_table)
            for run in range(params.runs)]


def fold_aucs(results):
    return np.array([auc for result in results for auc in result.fold_aucs])


def paired_ttest(a, b):
    """Two-sided paired t-test on matched samples

    Returns:
    --------
    t : float
        t statistic of the mean difference a - b
    p : float
        Two-sided p-value with n - 1 degrees of freedom
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError(f"paired samples must be equally long vectors, got "
                        f"{a.shape} and {b.shape}")
    n = len(a)
    if n < 2:
        raise DataError("a paired t-test needs at least 2 pairs")
    d = a - b
    sd = d.std(ddof=1)
    if not sd > 0:
        raise DegenerateStatisticsError("paired differences have zero "
                                        "variance")
    t = d.mean() / (sd / np.sqrt(n))
    df = n - 1
    p = betainc(df / 2, 0.5, df / (df + t * t))

    return float(t), float(p)
