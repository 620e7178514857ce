"""EM estimation for the promotion-time cure model with an SVM incidence
component (PCM-SVM), plus the logistic-incidence comparator (PCM-Logit).

The E-step computes latent risk-count expectations; the M-step refits the
incidence by multiply-imputed SVM + Platt calibration (or a Newton step on
the logistic incidence likelihood) and the latency by a weighted Cox fit
with a Breslow baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import svm
from .cox import (
    LatencyModel,
    breslow_baseline,
    build_risk_index,
    fit_beta,
    promotion_cdf,
    promotion_cdf_at,
)
from .exceptions import (
    BootstrapFailureError,
    DegenerateLabelsError,
    InputError,
    NonConvergenceError,
    NumericalError,
)

PI_CLIP = (1e-6, 1.0 - 1e-6)


@dataclass(frozen=True)
class SurvivalRecord:
    """One subject: observed time, event indicator, incidence covariates x,
    latency covariates z (x and z may share columns)."""

    t: float
    delta: int
    x: np.ndarray
    z: np.ndarray


@dataclass
class EmConfig:
    """Settings for one EM fit. ``kernel=None`` triggers grid-search tuning
    on the initialization labels; the tuned pair is then held fixed."""

    kernel: svm.KernelSpec | None = None
    gamma_grid: tuple | None = None
    cost_grid: tuple | None = None
    cv_folds: int = 5
    m: int = 5
    eps: float = 1e-3
    max_iter: int = 50
    seed: int = 0
    kkt_tol: float = 1e-3


@dataclass
class EmState:
    """Per-subject diagnostics at one EM iteration."""

    pi: np.ndarray
    n_expect: np.ndarray
    w: np.ndarray
    latency: LatencyModel
    iteration: int
    param_vector: np.ndarray


@dataclass
class IncidenceModel:
    """Ensemble of (SvmModel, PlattCalibration) pairs; predicted pi is the
    arithmetic mean of the member outputs."""

    members: list
    m: int

    def predict_pi(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        acc = np.zeros(len(X))
        for model, cal in self.members:
            acc += svm.platt_prob(cal, svm.decision_values(model, X))
        return np.clip(acc / len(self.members), *PI_CLIP)


@dataclass
class LogitParams:
    """Logistic incidence pi(x) = expit(gamma' [1, x])."""

    gamma: np.ndarray

    def predict_pi(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        eta = self.gamma[0] + X @ self.gamma[1:]
        pi = np.where(
            eta >= 0,
            1.0 / (1.0 + np.exp(-eta)),
            np.exp(eta) / (1.0 + np.exp(eta)),
        )
        return np.clip(pi, *PI_CLIP)


@dataclass
class PcmFit:
    """Converged incidence + latency models with diagnostics."""

    incidence: object            # IncidenceModel or LogitParams
    latency: LatencyModel
    diagnostics: EmState
    converged: bool
    trace: list
    config: EmConfig
    model: str                   # "pcm-svm" or "pcm-logit"
    se: object = None


def records_to_arrays(records):
    t = np.array([r.t for r in records], dtype=float)
    delta = np.array([r.delta for r in records], dtype=int)
    X = np.array([np.asarray(r.x, dtype=float).ravel() for r in records])
    Z = np.array([np.asarray(r.z, dtype=float).ravel() for r in records])
    return t, delta, X, Z


# ---------------------------------------------------------------------------
# E-step quantities
# ---------------------------------------------------------------------------


def e_step_counts(pi, F, delta):
    """Expected latent risk count: delta - log(1 - pi) * (1 - F)."""
    pi = np.asarray(pi, dtype=float)
    F = np.asarray(F, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if np.any(pi >= 1.0) or np.any(pi <= 0.0):
        raise NumericalError("pi must lie strictly in (0, 1) after clipping")
    theta = -np.log1p(-pi)
    return delta + theta * (1.0 - F)


def uncured_weight(pi, F, delta):
    """Conditional non-cure probability:
    delta + (1 - delta) * (1 - (1 - pi)^(1 - F))."""
    pi = np.asarray(pi, dtype=float)
    F = np.asarray(F, dtype=float)
    delta = np.asarray(delta, dtype=float)
    w = delta + (1.0 - delta) * (-np.expm1((1.0 - F) * np.log1p(-pi)))
    return np.clip(w, 0.0, 1.0)


def impute_statuses(w, m, rng):
    """Draw m label vectors in {-1, +1}^n with P[+1] = w_i independently."""
    if m < 1:
        raise InputError("imputation count m must be >= 1")
    w = np.asarray(w, dtype=float)
    draws = rng.random((m, len(w))) < w
    return np.where(draws, 1.0, -1.0)


def _fix_single_class(labels, w, delta):
    """Guarantee both classes in every label vector by flipping the censored
    subject whose weight makes the flip least distorting (lowest w to -1,
    highest w to +1)."""
    censored = np.flatnonzero(np.asarray(delta) == 0)
    for k in range(len(labels)):
        if len(np.unique(labels[k])) < 2:
            if len(censored) == 0:
                raise DegenerateLabelsError(
                    "cannot restore two classes: no censored subjects to flip"
                )
            if labels[k, 0] > 0:
                labels[k, censored[np.argmin(w[censored])]] = -1.0
            else:
                labels[k, censored[np.argmax(w[censored])]] = 1.0
    return labels


def _draw_labels(w, delta, m, rng, budget=20):
    """Imputed labels with both classes guaranteed in every vector.

    Single-class draws are redrawn up to ``budget`` times, then fixed by
    the least-distorting flip.
    """
    labels = impute_statuses(w, m, rng)
    for k in range(m):
        tries = 0
        while len(np.unique(labels[k])) < 2 and tries < budget:
            labels[k] = impute_statuses(w, 1, rng)[0]
            tries += 1
    return _fix_single_class(labels, w, delta)


def _labels_from_uniforms(w, delta, uniforms):
    """Imputed labels from a fixed uniform panel: +1 where u < w.

    Reusing the same uniforms across EM iterations keeps the label draws a
    deterministic, piecewise-constant function of w, so the parameter path
    settles once w does and the convergence check has a fixed point to find.
    """
    labels = np.where(uniforms < np.asarray(w, dtype=float), 1.0, -1.0)
    return _fix_single_class(labels, w, delta)


# ---------------------------------------------------------------------------
# Incidence M-step
# ---------------------------------------------------------------------------


CALIBRATION_FOLDS = 3


def _calibration_folds(v, n_folds):
    """Deterministic stratified fold ids: within each class, positions cycle
    through the folds in order."""
    folds = np.zeros(len(v), dtype=int)
    for cls in (-1.0, 1.0):
        idx = np.flatnonzero(v == cls)
        folds[idx] = np.arange(len(idx)) % n_folds
    return folds


def _cv_decision_values(X, v, kernel, kkt_tol, n_folds):
    """Out-of-fold decision values; None if any fold leaves one class."""
    folds = _calibration_folds(v, n_folds)
    out = np.empty(len(v))
    for f in range(n_folds):
        train = folds != f
        if len(np.unique(v[train])) < 2:
            return None
        model, _ = svm._train_arrays(X[train], v[train], kernel, kkt_tol)
        out[~train] = svm.decision_values(model, X[~train])
    return out


def fit_incidence(X, labels, kernel, kkt_tol=1e-3, calibration_folds=CALIBRATION_FOLDS):
    """Train one SVM + Platt pair per imputed label vector.

    The calibration sigmoid is fit on out-of-fold decision values: in-sample
    decisions are overconfident near the margin and produce miscalibrated
    probabilities. Falls back to in-sample decisions only when a class is
    too small to stratify."""
    labels = np.atleast_2d(np.asarray(labels, dtype=float))
    members = []
    for v in labels:
        model, decisions = svm._train_arrays(X, v, kernel, kkt_tol)
        cv_decisions = _cv_decision_values(X, v, kernel, kkt_tol, calibration_folds)
        cal = svm.platt_fit(decisions if cv_decisions is None else cv_decisions, v)
        members.append((model, cal))
    return IncidenceModel(members=members, m=len(members))


def _softplus(eta):
    return np.logaddexp(0.0, eta)


def _expit(eta):
    return np.where(
        eta >= 0, 1.0 / (1.0 + np.exp(-np.abs(eta))), np.exp(-np.abs(eta)) / (1.0 + np.exp(-np.abs(eta)))
    )


def _q1_objective(gamma, Xd, counts):
    eta = Xd @ gamma
    theta = _softplus(eta)
    if np.any(theta <= 0):
        return -np.inf
    return float(np.sum(-theta + counts * np.log(theta)))


def maximize_q1(Xd, counts, init_gamma):
    """Damped Newton ascent of the logistic-incidence expected likelihood
    Q1(gamma) = sum[-softplus(eta) + N_i log softplus(eta)], eta = Xd gamma."""
    gamma = np.asarray(init_gamma, dtype=float).copy()
    obj = _q1_objective(gamma, Xd, counts)
    for _ in range(200):
        eta = Xd @ gamma
        theta = _softplus(eta)
        sig = _expit(eta)
        u = sig * (counts / theta - 1.0)
        grad = Xd.T @ u
        if np.max(np.abs(grad)) <= 1e-6:
            return gamma
        h = sig * (1.0 - sig) * (counts / theta - 1.0) - counts * sig * sig / (theta * theta)
        H = Xd.T @ (h[:, None] * Xd)
        try:
            step = np.linalg.solve(-H, grad)
        except np.linalg.LinAlgError:
            step = grad
        if grad @ step <= 0:
            step = grad
        scale = 1.0
        improved = False
        for _ in range(60):
            cand = gamma + scale * step
            cand_obj = _q1_objective(cand, Xd, counts)
            if np.isfinite(cand_obj) and cand_obj >= obj - 1e-14:
                improved = True
                break
            scale *= 0.5
        if not improved:
            break
        gamma, obj = cand, cand_obj
    eta = Xd @ gamma
    theta = _softplus(eta)
    sig = _expit(eta)
    grad = Xd.T @ (sig * (counts / theta - 1.0))
    if np.max(np.abs(grad)) <= 1e-4:
        return gamma
    raise NonConvergenceError(
        f"Q1 Newton did not converge (grad sup-norm {np.max(np.abs(grad)):.2e})",
        best=gamma,
    )


def _logistic_regression(Xd, y01, ridge=1e-8, max_iter=100):
    """Plain ridge-stabilized logistic MLE used to initialize PCM-Logit."""
    gamma = np.zeros(Xd.shape[1])
    for _ in range(max_iter):
        p = _expit(Xd @ gamma)
        grad = Xd.T @ (y01 - p) - ridge * gamma
        if np.max(np.abs(grad)) <= 1e-8:
            break
        w = np.maximum(p * (1.0 - p), 1e-10)
        H = Xd.T @ (w[:, None] * Xd) + ridge * np.eye(Xd.shape[1])
        gamma = gamma + np.linalg.solve(H, grad)
        if np.linalg.norm(gamma) > 50:
            gamma *= 50 / np.linalg.norm(gamma)  # separation guard
            break
    return gamma


# ---------------------------------------------------------------------------
# EM drivers
# ---------------------------------------------------------------------------


def _check_records(delta):
    if not np.any(delta == 1) or not np.any(delta == 0):
        raise InputError("dataset must contain at least one event and one censored subject")


def _psi(pi, beta, baseline_values):
    return np.concatenate([pi, beta, baseline_values])


def _init_latency(t, delta, Z):
    """beta at 0.5 per component, baseline from a null (unit-weight, zero-
    coefficient) Breslow fit."""
    index = build_risk_index(t, delta, Z)
    q = Z.shape[1]
    base = breslow_baseline(np.zeros(q), index, np.ones(len(t)), Z)
    return index, LatencyModel(beta=np.full(q, 0.5), baseline=base)


def em_fit(records, config=None):
    """Fit PCM-SVM by EM with Bernoulli multiple imputation of cure labels."""
    config = config or EmConfig()
    t, delta, X, Z = records_to_arrays(records)
    _check_records(delta)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))

    v0 = 2.0 * delta - 1.0
    if config.kernel is not None:
        kernel = config.kernel
    else:
        samples = [svm.LabeledSample(X[i], int(v0[i])) for i in range(len(v0))]
        kernel = svm.tune_hyperparams(
            samples,
            gamma_grid=config.gamma_grid,
            cost_grid=config.cost_grid,
            folds=config.cv_folds,
            rng_seed=config.seed,
        )

    incidence = fit_incidence(X, v0[None, :], kernel, config.kkt_tol)
    pi = incidence.predict_pi(X)
    mi_uniforms = rng.random((config.m, len(t)))  # shared across iterations
    index, latency = _init_latency(t, delta, Z)
    beta = latency.beta.copy()
    psi_prev = _psi(pi, beta, latency.baseline.survival_values)

    trace = []
    converged = False
    state = None
    n_expect = np.zeros(len(t))
    w = np.zeros(len(t))
    iteration = 0
    for iteration in range(1, config.max_iter + 1):
        try:
            F = promotion_cdf_at(t, Z, latency)
            n_expect = e_step_counts(pi, F, delta)
            w = uncured_weight(pi, F, delta)
            labels = _labels_from_uniforms(w, delta, mi_uniforms)
            incidence = fit_incidence(X, labels, kernel, config.kkt_tol)
            pi = incidence.predict_pi(X)
            beta = fit_beta(index, n_expect, Z, init_beta=beta)
            baseline = breslow_baseline(beta, index, n_expect, Z)
            latency = LatencyModel(beta=beta, baseline=baseline)
        except (NumericalError, NonConvergenceError, DegenerateLabelsError) as exc:
            raise type(exc)(f"EM iteration {iteration}: {exc}") from exc
        psi = _psi(pi, beta, latency.baseline.survival_values)
        norm_sq = float(np.sum((psi - psi_prev) ** 2))
        trace.append(norm_sq)
        psi_prev = psi
        if norm_sq < config.eps:
            converged = True
            break

    state = EmState(
        pi=pi, n_expect=n_expect, w=w, latency=latency,
        iteration=iteration, param_vector=psi_prev,
    )
    return PcmFit(
        incidence=incidence, latency=latency, diagnostics=state,
        converged=converged, trace=trace, config=config, model="pcm-svm",
    )


def logit_em_fit(records, config=None):
    """Fit PCM-Logit: same EM skeleton, incidence updated by maximizing the
    logistic expected likelihood (no imputation)."""
    config = config or EmConfig()
    t, delta, X, Z = records_to_arrays(records)
    _check_records(delta)
    Xd = np.column_stack([np.ones(len(t)), X])

    gamma = _logistic_regression(Xd, delta.astype(float))
    incidence = LogitParams(gamma=gamma)
    pi = incidence.predict_pi(X)
    index, latency = _init_latency(t, delta, Z)
    beta = latency.beta.copy()
    psi_prev = _psi(pi, beta, latency.baseline.survival_values)

    trace = []
    converged = False
    n_expect = np.zeros(len(t))
    w = np.zeros(len(t))
    iteration = 0
    for iteration in range(1, config.max_iter + 1):
        try:
            F = promotion_cdf_at(t, Z, latency)
            n_expect = e_step_counts(pi, F, delta)
            w = uncured_weight(pi, F, delta)
            gamma = maximize_q1(Xd, n_expect, gamma)
            incidence = LogitParams(gamma=gamma)
            pi = incidence.predict_pi(X)
            beta = fit_beta(index, n_expect, Z, init_beta=beta)
            baseline = breslow_baseline(beta, index, n_expect, Z)
            latency = LatencyModel(beta=beta, baseline=baseline)
        except (NumericalError, NonConvergenceError) as exc:
            raise type(exc)(f"EM iteration {iteration}: {exc}") from exc
        psi = _psi(pi, beta, latency.baseline.survival_values)
        norm_sq = float(np.sum((psi - psi_prev) ** 2))
        trace.append(norm_sq)
        psi_prev = psi
        if norm_sq < config.eps:
            converged = True
            break

    state = EmState(
        pi=pi, n_expect=n_expect, w=w, latency=latency,
        iteration=iteration, param_vector=psi_prev,
    )
    return PcmFit(
        incidence=incidence, latency=latency, diagnostics=state,
        converged=converged, trace=trace, config=config, model="pcm-logit",
    )


# ---------------------------------------------------------------------------
# Prediction and bootstrap
# ---------------------------------------------------------------------------


def predict_quantities(fit, X, Z, t):
    """Vectorized per-subject predictions: pi, population survival S_p,
    susceptible survival S_u, promotion-time survival 1 - F."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    t = np.asarray(t, dtype=float)
    pi = fit.incidence.predict_pi(X)
    F = promotion_cdf_at(t, Z, fit.latency)
    s_pop = np.exp(F * np.log1p(-pi))          # (1 - pi)^F
    s_susceptible = (s_pop - (1.0 - pi)) / pi
    s_susceptible = np.clip(s_susceptible, 0.0, 1.0)
    return {
        "pi": pi,
        "s_pop": s_pop,
        "s_susceptible": s_susceptible,
        "s_promotion": 1.0 - F,
    }


def predict(fit, x, z, t):
    """Scalar prediction at a single covariate pair and time."""
    if t < 0:
        raise InputError("t must be non-negative")
    out = predict_quantities(
        fit,
        np.asarray(x, dtype=float).reshape(1, -1),
        np.asarray(z, dtype=float).reshape(1, -1),
        np.array([t]),
    )
    return {k: float(v[0]) for k, v in out.items()}


@dataclass
class BootstrapResult:
    beta_se: np.ndarray
    beta_samples: np.ndarray
    pi_se: np.ndarray | None
    n_success: int
    n_failed: int


def bootstrap_se(records, config, r=100, seed=0, model="pcm-svm", pi_points=None):
    """Resampling-based standard errors of the latency coefficients (and,
    optionally, of pi-hat at supplied covariate points)."""
    if r < 2:
        raise InputError("bootstrap replicate count must be >= 2")
    fit_fn = em_fit if model == "pcm-svm" else logit_em_fit
    n = len(records)
    seeds = np.random.SeedSequence(seed).spawn(r)
    betas = []
    pis = []
    n_failed = 0
    for k in range(r):
        rng = np.random.default_rng(seeds[k])
        idx = rng.integers(0, n, size=n)
        sample = [records[i] for i in idx]
        rep_seed = int(rng.integers(0, 2**31 - 1))
        try:
            fit = fit_fn(sample, replace(config, seed=rep_seed))
        except Exception:
            n_failed += 1
            continue
        betas.append(fit.latency.beta)
        if pi_points is not None:
            pis.append(fit.incidence.predict_pi(np.atleast_2d(pi_points)))
    if len(betas) < 2:
        raise BootstrapFailureError(
            f"only {len(betas)} of {r} bootstrap fits succeeded"
        )
    betas = np.array(betas)
    pi_se = np.std(np.array(pis), axis=0, ddof=1) if pis else None
    return BootstrapResult(
        beta_se=np.std(betas, axis=0, ddof=1),
        beta_samples=betas,
        pi_se=pi_se,
        n_success=len(betas),
        n_failed=n_failed,
    )
