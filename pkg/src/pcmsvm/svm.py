"""RBF-kernel SVM trained by sequential minimal optimization, with Platt
probability calibration and grid-search cross-validation tuning of the
kernel width and cost hyper-parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .exceptions import DegenerateLabelsError, InputError, NonConvergenceError

DEFAULT_GAMMA_GRID = tuple(2.0 ** k for k in range(-6, 3))
DEFAULT_COST_GRID = tuple(2.0 ** k for k in range(-2, 7))

# cache the full kernel matrix below this sample count, rows on demand above
KERNEL_CACHE_LIMIT = 4000


@dataclass(frozen=True)
class KernelSpec:
    """RBF kernel width gamma = 1/(2 sigma^2) and box constraint cost."""

    gamma: float
    cost: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise InputError(f"gamma must be positive, got {self.gamma}")
        if not self.cost > 0:
            raise InputError(f"cost must be positive, got {self.cost}")


@dataclass(frozen=True)
class LabeledSample:
    """One training point: covariate vector x and label v in {-1, +1}."""

    x: np.ndarray
    v: int


@dataclass
class SvmModel:
    """Trained kernel expansion: g(x) = sum_i c_i v_i K(x_i, x) - b.

    Only points with c_i > 0 are stored; dropped zero coefficients do not
    change the expansion or the equality constraint.
    """

    support_points: np.ndarray  # (n_sv, d)
    dual_coefs: np.ndarray      # c_i, 0 < c_i <= cost
    labels: np.ndarray          # v_i in {-1, +1}
    threshold: float            # b
    kernel: KernelSpec

    def __post_init__(self):
        n = len(self.dual_coefs)
        if len(self.support_points) != n or len(self.labels) != n:
            raise InputError("support_points, dual_coefs and labels must have equal length")


@dataclass(frozen=True)
class PlattCalibration:
    """Sigmoid map pi(g) = 1 / (1 + exp(slope * g + intercept))."""

    slope: float
    intercept: float


def rbf_kernel(x_i, x_j, gamma):
    """exp(-gamma * ||x_i - x_j||^2); equals 1 iff the points coincide."""
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    if x_i.shape != x_j.shape:
        raise InputError(f"dimension mismatch: {x_i.shape} vs {x_j.shape}")
    if not gamma > 0:
        raise InputError(f"gamma must be positive, got {gamma}")
    d = x_i - x_j
    return float(np.exp(-gamma * np.dot(d, d)))


def kernel_matrix(X, Y, gamma):
    """RBF kernel matrix between row sets X (n,d) and Y (m,d)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise InputError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    sq = (
        np.sum(X * X, axis=1)[:, None]
        + np.sum(Y * Y, axis=1)[None, :]
        - 2.0 * (X @ Y.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


# ---------------------------------------------------------------------------
# SMO dual solver (maximal-violating-pair working-set selection)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _take_step(K, y, alpha, f, b, Q, tol, i1, i2):
    if i1 == i2:
        return 0
    a1o = alpha[i1]
    a2o = alpha[i2]
    y1 = y[i1]
    y2 = y[i2]
    s = y1 * y2
    b0 = b[0]
    E1 = f[i1] - b0 - y1
    E2 = f[i2] - b0 - y2
    if s > 0:
        L = max(0.0, a1o + a2o - Q)
        H = min(Q, a1o + a2o)
    else:
        L = max(0.0, a2o - a1o)
        H = min(Q, Q + a2o - a1o)
    if H - L < 1e-12:
        return 0
    k11 = K[i1, i1]
    k22 = K[i2, i2]
    k12 = K[i1, i2]
    eta = k11 + k22 - 2.0 * k12
    if eta > 1e-15:
        a2 = a2o + y2 * (E1 - E2) / eta
        if a2 < L:
            a2 = L
        elif a2 > H:
            a2 = H
    else:
        # flat direction: evaluate the dual objective at both clip bounds
        f1 = y1 * (E1 + b0) - a1o * k11 - s * a2o * k12
        f2 = y2 * (E2 + b0) - s * a1o * k12 - a2o * k22
        L1 = a1o + s * (a2o - L)
        H1 = a1o + s * (a2o - H)
        objL = L1 * f1 + L * f2 + 0.5 * L1 * L1 * k11 + 0.5 * L * L * k22 + s * L * L1 * k12
        objH = H1 * f1 + H * f2 + 0.5 * H1 * H1 * k11 + 0.5 * H * H * k22 + s * H * H1 * k12
        if objL < objH - 1e-12:
            a2 = L
        elif objL > objH + 1e-12:
            a2 = H
        else:
            return 0
    # snap to the box bounds so bound tests stay exact under roundoff
    snap = 1e-10 * Q
    if a2 < snap:
        a2 = 0.0
    elif a2 > Q - snap:
        a2 = Q
    if abs(a2 - a2o) < 1e-12 * (a2 + a2o + 1e-12):
        return 0
    a1 = a1o + s * (a2o - a2)
    if a1 < snap:
        a1 = 0.0
    elif a1 > Q - snap:
        a1 = Q
    d1 = y1 * (a1 - a1o)
    d2 = y2 * (a2 - a2o)
    b1 = E1 + d1 * k11 + d2 * k12 + b0
    b2 = E2 + d1 * k12 + d2 * k22 + b0
    if 0.0 < a1 < Q:
        bn = b1
    elif 0.0 < a2 < Q:
        bn = b2
    else:
        bn = 0.5 * (b1 + b2)
    n = y.shape[0]
    for i in range(n):
        f[i] += d1 * K[i1, i] + d2 * K[i2, i]
    alpha[i1] = a1
    alpha[i2] = a2
    b[0] = bn
    return 1


@njit(cache=True)
def _select_pair(K, y, alpha, f, Q):
    """Maximal-violating-pair selection with a second-order choice of the
    second index; returns (i, j, gap)."""
    n = y.shape[0]
    eb = 1e-9 * Q
    i = -1
    m_val = -np.inf
    M_val = np.inf
    for k in range(n):
        v = y[k] - f[k]
        up = (y[k] > 0 and alpha[k] < Q - eb) or (y[k] < 0 and alpha[k] > eb)
        low = (y[k] > 0 and alpha[k] > eb) or (y[k] < 0 and alpha[k] < Q - eb)
        if up and v > m_val:
            m_val = v
            i = k
        if low and v < M_val:
            M_val = v
    if i < 0 or not np.isfinite(M_val):
        return -1, -1, 0.0
    gap = m_val - M_val
    j = -1
    best = 0.0
    for k in range(n):
        low = (y[k] > 0 and alpha[k] > eb) or (y[k] < 0 and alpha[k] < Q - eb)
        if not low:
            continue
        diff = m_val - (y[k] - f[k])
        if diff <= 0.0:
            continue
        a = K[i, i] + K[k, k] - 2.0 * K[i, k]
        if a <= 1e-12:
            a = 1e-12
        score = -(diff * diff) / a
        if score < best:
            best = score
            j = k
    return i, j, gap


@njit(cache=True)
def _final_threshold(alpha, f, y, Q):
    n = y.shape[0]
    eb = 1e-9 * Q
    acc = 0.0
    cnt = 0
    for i in range(n):
        if eb < alpha[i] < Q - eb:
            acc += f[i] - y[i]
            cnt += 1
    if cnt > 0:
        return acc / cnt
    # no unbounded support vectors: midpoint of the KKT-feasible interval
    blo = -np.inf
    bhi = np.inf
    for i in range(n):
        if alpha[i] <= eb:
            if y[i] > 0:
                bhi = min(bhi, f[i] - 1.0)
            else:
                blo = max(blo, f[i] + 1.0)
        else:
            if y[i] > 0:
                blo = max(blo, f[i] - 1.0)
            else:
                bhi = min(bhi, f[i] + 1.0)
    if np.isfinite(blo) and np.isfinite(bhi):
        return 0.5 * (blo + bhi)
    if np.isfinite(blo):
        return blo
    if np.isfinite(bhi):
        return bhi
    return 0.0


@njit(cache=True)
def _max_kkt_violation(alpha, f, y, bval, Q):
    n = y.shape[0]
    eb = 1e-9 * Q
    worst = 0.0
    for i in range(n):
        m = y[i] * (f[i] - bval)
        if alpha[i] <= eb:
            v = 1.0 - m
        elif alpha[i] >= Q - eb:
            v = m - 1.0
        else:
            v = abs(m - 1.0)
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def _smo_solve(K, y, Q, tol, max_updates):
    n = y.shape[0]
    alpha = np.zeros(n)
    f = np.zeros(n)
    b = np.zeros(1)  # take_step uses only error differences; b stays 0 here
    updates = 0
    while updates < max_updates:
        i, j, gap = _select_pair(K, y, alpha, f, Q)
        if i < 0 or gap <= tol:
            break
        if _take_step(K, y, alpha, f, b, Q, tol, i, j) == 0:
            # second-order pick made no progress; retry with the plain
            # maximal-violating partner, else stop at the current iterate
            moved = 0
            jj = -1
            M_val = np.inf
            eb = 1e-9 * Q
            for k in range(n):
                low = (y[k] > 0 and alpha[k] > eb) or (y[k] < 0 and alpha[k] < Q - eb)
                if low and (y[k] - f[k]) < M_val:
                    M_val = y[k] - f[k]
                    jj = k
            if jj >= 0 and jj != j:
                moved = _take_step(K, y, alpha, f, b, Q, tol, i, jj)
            if moved == 0:
                break
        updates += 1
    bfin = _final_threshold(alpha, f, y, Q)
    viol = _max_kkt_violation(alpha, f, y, bfin, Q)
    return alpha, f, bfin, viol, updates


def _train_arrays(X, v, kernel, kkt_tol=1e-3, kernel_cache=None):
    """Core trainer on plain arrays; returns (SvmModel, in-sample decisions)."""
    X = np.ascontiguousarray(X, dtype=float)
    v = np.asarray(v, dtype=float)
    if not (np.any(v > 0) and np.any(v < 0)):
        raise DegenerateLabelsError("SVM training requires both classes present")
    if not kkt_tol > 0:
        raise InputError("kkt_tol must be positive")
    n = len(v)
    K = kernel_cache if kernel_cache is not None else kernel_matrix(X, X, kernel.gamma)
    max_updates = 10 * n * max(n, 1000)
    alpha, f, b, viol, _ = _smo_solve(K, v, kernel.cost, kkt_tol, max_updates)
    decisions = f - b
    keep = alpha > 0.0
    model = SvmModel(
        support_points=X[keep].copy(),
        dual_coefs=alpha[keep].copy(),
        labels=v[keep].copy(),
        threshold=float(b),
        kernel=kernel,
    )
    if viol > kkt_tol:
        raise NonConvergenceError(
            f"SMO hit the update cap with max KKT violation {viol:.3e}", best=model
        )
    return model, decisions


def _samples_to_arrays(samples):
    if len(samples) == 0:
        raise InputError("empty sample list")
    X = np.array([np.asarray(s.x, dtype=float).ravel() for s in samples])
    v = np.array([float(s.v) for s in samples])
    if not np.all(np.isin(v, (-1.0, 1.0))):
        raise InputError("labels must be -1 or +1")
    return X, v


def smo_train(samples, kernel, kkt_tol=1e-3):
    """Train an SVM on labeled samples by SMO.

    Raises DegenerateLabelsError for single-class input and
    NonConvergenceError (carrying the best model) if the update cap is hit.
    """
    X, v = _samples_to_arrays(samples)
    model, _ = _train_arrays(X, v, kernel, kkt_tol)
    return model


def decision_values(model, X):
    """Vector of g(x) = sum_i c_i v_i K(x_i, x) - b over rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(model.dual_coefs) == 0:
        return np.full(len(X), -model.threshold)
    if X.shape[1] != model.support_points.shape[1]:
        raise InputError(
            f"dimension mismatch: {X.shape[1]} vs {model.support_points.shape[1]}"
        )
    Kx = kernel_matrix(model.support_points, X, model.kernel.gamma)
    return (model.dual_coefs * model.labels) @ Kx - model.threshold


def decision_value(model, x):
    """g(x) for a single covariate vector."""
    return float(decision_values(model, np.asarray(x, dtype=float).reshape(1, -1))[0])


# ---------------------------------------------------------------------------
# Platt scaling
# ---------------------------------------------------------------------------


def platt_prob(cal, g):
    """Calibrated probability 1 / (1 + exp(A g + B)), overflow-safe."""
    eta = cal.slope * np.asarray(g, dtype=float) + cal.intercept
    out = np.empty_like(eta, dtype=float)
    pos = eta >= 0
    e = np.exp(-np.abs(eta))
    out[pos] = e[pos] / (1.0 + e[pos])
    out[~pos] = 1.0 / (1.0 + e[~pos])
    out = np.clip(out, 1e-300, 1.0 - 1e-16)
    if np.ndim(g) == 0:
        return float(out)
    return out


def _platt_objective(A, B, g, targets):
    eta = A * g + B
    # sum[(1 - t) eta - log(1 + exp(eta))] with log-sum-exp guarding
    return float(np.sum((1.0 - targets) * eta - np.logaddexp(0.0, eta)))


def platt_fit(decisions, labels):
    """Fit the calibration sigmoid by damped Newton on the adjusted-target
    cross-entropy; the returned point is stationary to sup-norm 1e-6."""
    g = np.asarray(decisions, dtype=float)
    v = np.asarray(labels, dtype=float)
    if g.shape != v.shape or g.ndim != 1 or len(g) < 2:
        raise InputError("decisions and labels must be equal-length vectors (>= 2)")
    n1 = int(np.sum(v > 0))
    n0 = int(np.sum(v < 0))
    if n1 == 0 or n0 == 0:
        raise DegenerateLabelsError("Platt fit requires both classes present")
    hi = (n1 + 1.0) / (n1 + 2.0)
    lo = 1.0 / (n0 + 2.0)
    targets = np.where(v > 0, hi, lo)

    A = 0.0
    B = np.log((n0 + 1.0) / (n1 + 1.0))
    obj = _platt_objective(A, B, g, targets)
    for _ in range(200):
        eta = A * g + B
        pi = np.where(eta >= 0, np.exp(-eta) / (1.0 + np.exp(-eta)), 1.0 / (1.0 + np.exp(eta)))
        resid = pi - targets
        grad = np.array([np.sum(resid * g), np.sum(resid)])
        if np.max(np.abs(grad)) <= 1e-7:
            break
        w = pi * (1.0 - pi)
        h_aa = np.sum(w * g * g)
        h_ab = np.sum(w * g)
        h_bb = np.sum(w)
        det = h_aa * h_bb - h_ab * h_ab
        ridge = 1e-12
        while det <= ridge * max(h_aa + h_bb, 1.0):
            h_aa += 1e-8
            h_bb += 1e-8
            det = h_aa * h_bb - h_ab * h_ab
        # Newton direction on the (maximized) objective
        dA = (h_bb * grad[0] - h_ab * grad[1]) / det
        dB = (h_aa * grad[1] - h_ab * grad[0]) / det
        step = 1.0
        for _ in range(60):
            cand = _platt_objective(A + step * dA, B + step * dB, g, targets)
            if cand >= obj - 1e-14:
                break
            step *= 0.5
        A += step * dA
        B += step * dB
        obj = _platt_objective(A, B, g, targets)
    return PlattCalibration(slope=float(A), intercept=float(B))


# ---------------------------------------------------------------------------
# Grid-search cross-validation tuning
# ---------------------------------------------------------------------------


def _stratified_folds(v, folds, rng):
    """Fold ids assigning each class round-robin after a seeded shuffle."""
    fold_of = np.empty(len(v), dtype=int)
    for label in (-1.0, 1.0):
        idx = np.flatnonzero(v == label)
        idx = idx[rng.permutation(len(idx))]
        fold_of[idx] = np.arange(len(idx)) % folds
    return fold_of


def tune_hyperparams(samples, gamma_grid=None, cost_grid=None, folds=5, rng_seed=0):
    """Pick the (gamma, cost) pair maximizing mean CV classification accuracy.

    Ties prefer the smaller cost, then the smaller gamma.
    """
    gamma_grid = list(DEFAULT_GAMMA_GRID if gamma_grid is None else gamma_grid)
    cost_grid = list(DEFAULT_COST_GRID if cost_grid is None else cost_grid)
    if not gamma_grid or not cost_grid:
        raise InputError("hyper-parameter grids must be non-empty")
    if folds < 2:
        raise InputError("folds must be >= 2")
    candidates = sorted(
        (KernelSpec(gamma=g, cost=q) for g in gamma_grid for q in cost_grid),
        key=lambda k: (k.cost, k.gamma),
    )
    if len(candidates) == 1:
        return candidates[0]

    X, v = _samples_to_arrays(samples)
    if not (np.any(v > 0) and np.any(v < 0)):
        raise DegenerateLabelsError("tuning requires both classes present")
    rng = np.random.default_rng(rng_seed)
    fold_of = _stratified_folds(v, folds, rng)

    best_spec = None
    best_acc = -1.0
    for spec in candidates:
        correct = 0
        total = 0
        for f in range(folds):
            tr = fold_of != f
            te = ~tr
            if not np.any(te):
                continue
            vtr = v[tr]
            if not (np.any(vtr > 0) and np.any(vtr < 0)):
                continue  # fold lost one class entirely; skip it
            try:
                model, _ = _train_arrays(X[tr], vtr, spec)
            except NonConvergenceError as exc:
                model = exc.best
            pred = np.where(decision_values(model, X[te]) > 0, 1.0, -1.0)
            correct += int(np.sum(pred == v[te]))
            total += int(np.sum(te))
        acc = correct / total if total else 0.0
        if acc > best_acc + 1e-12:
            best_acc = acc
            best_spec = spec
    return best_spec
