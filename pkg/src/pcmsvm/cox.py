"""Weighted Cox machinery for the latency part: offset partial likelihood,
Newton solver for the regression coefficients, and the Breslow-type
baseline survival estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import EmptyEventsError, InputError, NonConvergenceError, NumericalError


@dataclass
class RiskSetIndex:
    """Event-time index for the partial likelihood.

    risk_sets[j] holds the indices (into the original record order) of all
    subjects still at risk at tau_j; the sets are nested decreasing.
    """

    event_times: np.ndarray      # tau_j, strictly increasing
    event_counts: np.ndarray     # d_j >= 1
    event_cov_sums: np.ndarray   # s_j, (n_k, q)
    risk_sets: list
    # sorted representation used by the vectorized likelihood code
    order: np.ndarray            # subjects sorted by t ascending
    risk_start: np.ndarray       # R_j = order[risk_start[j]:]


@dataclass
class BaselineSurvival:
    """Right-constant survival step function; equals 1 before the first step."""

    event_times: np.ndarray
    survival_values: np.ndarray  # value on (tau_j, tau_{j+1}]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        # number of event times strictly below t
        k = np.searchsorted(self.event_times, t, side="left")
        vals = np.concatenate(([1.0], self.survival_values))
        out = vals[k]
        if t.ndim == 0:
            return float(out)
        return out


@dataclass
class LatencyModel:
    """Proportional-hazards latency: coefficients and baseline survival."""

    beta: np.ndarray
    baseline: BaselineSurvival


def build_risk_index(times, deltas, z):
    """Construct the risk-set index from observed times, event indicators
    and latency covariates."""
    t = np.asarray(times, dtype=float)
    delta = np.asarray(deltas, dtype=int)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[0] != len(t):
        raise InputError("covariate matrix row count must match times")
    if np.any(t <= 0):
        raise InputError("all observed times must be positive")
    if not np.any(delta == 1):
        raise EmptyEventsError("no uncensored events in the data")
    tau = np.unique(t[delta == 1])
    n_k = len(tau)
    d = np.zeros(n_k, dtype=int)
    s = np.zeros((n_k, z.shape[1]))
    risk_sets = []
    for j, tj in enumerate(tau):
        ev = (t == tj) & (delta == 1)
        d[j] = int(np.sum(ev))
        s[j] = np.sum(z[ev], axis=0)
        risk_sets.append(np.flatnonzero(t >= tj))
    order = np.argsort(t, kind="stable")
    risk_start = np.searchsorted(t[order], tau, side="left")
    return RiskSetIndex(
        event_times=tau,
        event_counts=d,
        event_cov_sums=s,
        risk_sets=risk_sets,
        order=order,
        risk_start=risk_start,
    )


def _check_weights(index, weights):
    w = np.asarray(weights, dtype=float)
    at_risk = index.risk_sets[0]
    if np.any(w[at_risk] <= 0):
        raise InputError("non-positive weight inside a risk set")
    return w


def _loglik_parts(beta, index, weights, z, want_grad=False, want_hess=False):
    """Partial log-likelihood and optional derivatives via reverse cumsums
    over the nested risk sets.

    Covariates are centered internally: the partial likelihood and its
    derivatives are exactly shift-invariant, and centering keeps the
    exponentials well-scaled when callers pass uncentered columns."""
    beta = np.asarray(beta, dtype=float)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    w = _check_weights(index, weights)
    z_bar = z.mean(axis=0)
    z = z - z_bar
    d = index.event_counts
    cov_sums = index.event_cov_sums - d[:, None] * z_bar
    eta = z @ beta
    eta_shift = np.max(eta)  # guard exp overflow; cancels in the ratios
    r = w * np.exp(eta - eta_shift)
    order = index.order
    ro = r[order]
    zo = z[order]
    denom_cum = np.cumsum(ro[::-1])[::-1]
    denom = denom_cum[index.risk_start]
    if np.any(denom <= 0.0):
        # a risk set underflowed entirely: signal an infeasible step
        shape = (z.shape[1],)
        return -np.inf, np.full(shape, np.nan), np.full(shape * 2, np.nan)
    ll = float(np.sum(cov_sums @ beta)
               - np.sum(d * (np.log(denom) + eta_shift)))
    grad = hess = None
    if want_grad or want_hess:
        rz = ro[:, None] * zo
        rz_cum = np.cumsum(rz[::-1], axis=0)[::-1]
        num1 = rz_cum[index.risk_start]          # (n_k, q)
        mu = num1 / denom[:, None]
        if want_grad:
            grad = np.sum(cov_sums, axis=0) - d @ mu
        if want_hess:
            rzz = rz[:, :, None] * zo[:, None, :]
            rzz_cum = np.cumsum(rzz[::-1], axis=0)[::-1]
            num2 = rzz_cum[index.risk_start]     # (n_k, q, q)
            m2 = num2 / denom[:, None, None]
            hess = -np.einsum("j,jab->ab", d.astype(float),
                              m2 - mu[:, :, None] * mu[:, None, :])
    return ll, grad, hess


def partial_loglik(beta, index, weights, z):
    """Weighted Breslow-tie partial log-likelihood at beta."""
    ll, _, _ = _loglik_parts(beta, index, weights, z)
    return ll


def partial_loglik_grad(beta, index, weights, z):
    _, g, _ = _loglik_parts(beta, index, weights, z, want_grad=True)
    return g


def partial_loglik_hess(beta, index, weights, z):
    _, _, h = _loglik_parts(beta, index, weights, z, want_hess=True)
    return h


def fit_beta(index, weights, z, init_beta=None, tol=1e-6, max_iter=100):
    """Newton maximization of the weighted partial log-likelihood with
    step-halving; gradient sup-norm <= tol at the returned point."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    q = z.shape[1]
    beta = np.zeros(q) if init_beta is None else np.asarray(init_beta, dtype=float).copy()
    ll, grad, hess = _loglik_parts(beta, index, weights, z, want_grad=True, want_hess=True)
    for _ in range(max_iter):
        if np.max(np.abs(grad)) <= tol:
            return beta
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            try:
                step = np.linalg.solve(-(hess - 1e-8 * np.eye(q)), grad)
            except np.linalg.LinAlgError as exc:
                raise NumericalError("singular Hessian in Cox Newton solver") from exc
        scale = 1.0
        accepted = False
        for _ in range(60):
            cand = beta + scale * step
            ll_new, g_new, h_new = _loglik_parts(
                cand, index, weights, z, want_grad=True, want_hess=True
            )
            # slack scales with |ll| to absorb roundoff in near-flat regions
            if np.isfinite(ll_new) and ll_new >= ll - 1e-9 * (1.0 + abs(ll)):
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            break  # no usable step left; report the current iterate
        beta, ll, grad, hess = cand, ll_new, g_new, h_new
    if np.max(np.abs(grad)) <= tol:
        return beta
    raise NonConvergenceError(
        f"Cox Newton solver hit the iteration cap (grad sup-norm {np.max(np.abs(grad)):.2e})",
        best=beta,
    )


def breslow_baseline(beta, index, weights, z):
    """Breslow-type baseline survival: steps d_j over weighted risk sums,
    accumulated strictly below the evaluation time."""
    beta = np.asarray(beta, dtype=float)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    w = _check_weights(index, weights)
    eta = z @ beta
    r = w * np.exp(eta)
    ro = r[index.order]
    denom = np.cumsum(ro[::-1])[::-1][index.risk_start]
    increments = index.event_counts / denom
    survival = np.exp(-np.cumsum(increments))
    return BaselineSurvival(
        event_times=index.event_times.copy(), survival_values=survival
    )


def promotion_cdf(t, z, model):
    """F(t; z) = 1 - S0(t)^exp(z' beta); 0 at t = 0, non-decreasing in t."""
    s0 = model.baseline(t)
    with np.errstate(over="ignore"):
        # an overflowing relative risk acts as +inf: s0^rel underflows to 0
        rel = np.exp(np.asarray(z, dtype=float) @ model.beta)
        # keep F strictly below 1 even when s0^rel underflows
        out = np.minimum(1.0 - np.asarray(s0) ** rel, 1.0 - 1e-12)
    if np.ndim(out) == 0:
        return float(out)
    return out


def promotion_cdf_at(records_t, records_z, model):
    """Vectorized F(t_i; z_i) over per-subject times and covariate rows."""
    s0 = model.baseline(np.asarray(records_t, dtype=float))
    rel = np.exp(np.atleast_2d(np.asarray(records_z, dtype=float)) @ model.beta)
    return np.minimum(1.0 - np.asarray(s0) ** rel, 1.0 - 1e-12)
