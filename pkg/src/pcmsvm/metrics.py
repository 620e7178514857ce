"""Monte Carlo bias/MSE aggregation, classification accuracy, ROC/AUC, and
the imputed-cure-status ROC procedure for data without known cure labels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError
from .em import uncured_weight

FPR_GRID = np.linspace(0.0, 1.0, 101)


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


@dataclass
class McAccumulator:
    """Running per-run mean errors and mean squared errors per quantity."""

    bias_terms: dict = field(default_factory=dict)
    mse_terms: dict = field(default_factory=dict)
    runs: int = 0

    def add_run(self, estimates, truths):
        for name, est in estimates.items():
            err = np.asarray(est, dtype=float) - np.asarray(truths[name], dtype=float)
            self.bias_terms.setdefault(name, []).append(float(np.mean(err)))
            self.mse_terms.setdefault(name, []).append(float(np.mean(err ** 2)))
        self.runs += 1

    def summary(self):
        return {
            name: {
                "bias": float(np.mean(self.bias_terms[name])),
                "mse": float(np.mean(self.mse_terms[name])),
            }
            for name in self.bias_terms
        }


def bias_mse(estimates, truths):
    """Monte Carlo bias and MSE: means over runs of per-run subject means."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    tru = np.atleast_2d(np.asarray(truths, dtype=float))
    if est.shape != tru.shape:
        raise InputError(f"shape mismatch: {est.shape} vs {tru.shape}")
    err = est - tru
    return {
        "bias": float(np.mean(np.mean(err, axis=1))),
        "mse": float(np.mean(np.mean(err ** 2, axis=1))),
    }


def classification_accuracy(pi_hat, true_cure, threshold=0.5):
    """Percent of subjects whose predicted status (pi-hat > threshold means
    susceptible) matches the true cure status."""
    pi_hat = np.asarray(pi_hat, dtype=float)
    truth = np.asarray(true_cure, dtype=int)
    if len(pi_hat) == 0:
        raise InputError("empty input")
    if pi_hat.shape != truth.shape:
        raise InputError("length mismatch")
    predicted = (pi_hat > threshold).astype(int)
    return 100.0 * float(np.mean(predicted == truth))


def roc_auc(scores, labels):
    """ROC curve from a descending-score threshold sweep with tie groups
    collapsed; AUC by trapezoid (equals the Mann-Whitney statistic)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise InputError("AUC undefined: both classes must be present")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    # collapse tied scores into single thresholds
    distinct = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(y)[distinct]
    fp = np.cumsum(1 - y)[distinct]
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(fpr=fpr, tpr=tpr, auc=auc)


def _interp_tpr(curve, fpr_grid):
    return np.interp(fpr_grid, curve.fpr, curve.tpr)


def imputed_roc(fit, records, reps=500, rng=None, eval_mask=None):
    """Average ROC over repeated Bernoulli draws of the unknown cure labels.

    Censored subjects draw their status from the fitted conditional non-cure
    probability; events stay susceptible. TPR is vertically averaged on a
    fixed 101-point FPR grid; mean AUC is the average of per-draw AUCs.
    """
    if reps < 1:
        raise InputError("reps must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    from .cox import promotion_cdf_at
    from .em import records_to_arrays

    t, delta, X, Z = records_to_arrays(records)
    pi = fit.incidence.predict_pi(X)
    F = promotion_cdf_at(t, Z, fit.latency)
    w = uncured_weight(pi, F, delta)
    if eval_mask is None:
        eval_mask = np.ones(len(t), dtype=bool)
    eval_mask = np.asarray(eval_mask, dtype=bool)

    tpr_sum = np.zeros_like(FPR_GRID)
    auc_sum = 0.0
    used = 0
    dropped = 0
    for _ in range(reps):
        drawn = (rng.random(len(t)) < w).astype(int)
        drawn[delta == 1] = 1
        lab = drawn[eval_mask]
        if lab.min() == lab.max():
            dropped += 1
            continue
        curve = roc_auc(pi[eval_mask], lab)
        tpr_sum += _interp_tpr(curve, FPR_GRID)
        auc_sum += curve.auc
        used += 1
    if used == 0:
        raise InputError("all imputation draws were single-class")
    mean_tpr = tpr_sum / used
    mean_tpr[0] = 0.0
    mean_tpr[-1] = 1.0
    avg_curve = RocCurve(
        fpr=FPR_GRID.copy(),
        tpr=mean_tpr,
        auc=float(np.trapezoid(mean_tpr, FPR_GRID)),
    )
    return {
        "curve": avg_curve,
        "mean_auc": auc_sum / used,
        "reps_used": used,
        "reps_dropped": dropped,
        "weights": w,
    }
