"""Synthetic data generation: covariate draws, the three two-covariate
incidence boundaries, the ten-covariate correlated scenario, and
lifetime/censoring generation with Weibull promotion times."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .em import SurvivalRecord
from .exceptions import InputError

METHODS = ("m1", "m2", "m3", "m10")

# correlation of the first five covariates in the ten-covariate scenario
SIGMA_10 = np.array(
    [
        [1.0, 0.8, 0.5, 0.2, 0.0],
        [0.8, 1.0, 0.2, 0.6, 0.0],
        [0.5, 0.2, 1.0, 0.3, 0.0],
        [0.2, 0.6, 0.3, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],
    ]
)

BETA_TRUE_2 = np.array([1.0, 0.5])
BETA_TRUE_10 = np.array([0.8, 1.2, 0.5, 1.1, -0.6, -1.4, -0.5, -0.8, 0.5, 1.8])
ALPHA_TRUE_2 = 2.0
ALPHA_TRUE_10 = 3.5


@dataclass
class SimConfig:
    method: str = "m1"
    n: int = 300
    alpha: float | None = None       # Weibull shape; None picks the scenario default
    beta_true: np.ndarray | None = None
    censor_rate: float = 0.2
    train_fraction: float = 2.0 / 3.0
    stratify_split: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.n < 10:
            raise InputError("n must be >= 10")
        if not self.censor_rate > 0:
            raise InputError("censor_rate must be positive")
        if not 0 < self.train_fraction < 1:
            raise InputError("train_fraction must lie in (0, 1)")
        if self.alpha is None:
            self.alpha = ALPHA_TRUE_10 if self.method == "m10" else ALPHA_TRUE_2
        if not self.alpha > 0:
            raise InputError("alpha must be positive")
        if self.beta_true is None:
            self.beta_true = BETA_TRUE_10 if self.method == "m10" else BETA_TRUE_2
        self.beta_true = np.asarray(self.beta_true, dtype=float)


@dataclass
class SimDataset:
    records: list
    true_cure: np.ndarray       # 1 = susceptible, 0 = cured
    true_pi: np.ndarray
    split: np.ndarray           # "train" / "test"
    config: SimConfig

    def arrays(self):
        from .em import records_to_arrays

        return records_to_arrays(self.records)

    @property
    def train_mask(self):
        return self.split == "train"

    @property
    def test_mask(self):
        return self.split == "test"


def _logistic(u):
    return np.where(u >= 0, 1.0 / (1.0 + np.exp(-np.abs(u))), np.exp(-np.abs(u)) / (1.0 + np.exp(-np.abs(u))))


def true_cure_prob(method, x):
    """True cure probability 1 - pi(x), computed without cancellation so it
    stays positive even where pi rounds to 1."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    dim = 10 if method == "m10" else 2
    if x.shape[1] != dim:
        raise InputError(f"method {method} expects {dim} covariates, got {x.shape[1]}")
    if method == "m1":
        out = _logistic(-(0.3 - 5.0 * x[:, 0] - 3.0 * x[:, 1]))
    elif method == "m2":
        out = _logistic(-(0.3 + 5.0 * x[:, 0] ** 2 - 3.0 * x[:, 1] ** 2))
    elif method == "m3":
        out = -np.expm1(-np.exp(0.3 - 5.0 * np.cos(x[:, 0]) - 3.0 * np.sin(x[:, 1])))
    else:
        out = np.exp(-np.exp(_m10_linpred(x)))
    if np.asarray(x).ndim == 1:
        return float(out[0])
    return out


def true_pi(method, x):
    """True non-cured probability under the named generating method."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    dim = 10 if method == "m10" else 2
    if x.shape[1] != dim:
        raise InputError(f"method {method} expects {dim} covariates, got {x.shape[1]}")
    if method == "m1":
        out = _logistic(0.3 - 5.0 * x[:, 0] - 3.0 * x[:, 1])
    elif method == "m2":
        out = _logistic(0.3 + 5.0 * x[:, 0] ** 2 - 3.0 * x[:, 1] ** 2)
    elif method == "m3":
        out = np.exp(-np.exp(0.3 - 5.0 * np.cos(x[:, 0]) - 3.0 * np.sin(x[:, 1])))
    else:
        out = 1.0 - np.exp(-np.exp(_m10_linpred(x)))
    if np.asarray(x).ndim == 1:
        return float(out[0])
    return out


def _m10_linpred(x):
    x1, x2, x3, x4, x5 = x[:, 0], x[:, 1], x[:, 2], x[:, 3], x[:, 4]
    x6, x7, x8, x9, x10 = x[:, 5], x[:, 6], x[:, 7], x[:, 8], x[:, 9]
    p34 = x3 * x4
    p89 = x8 * x9
    inner = 0.4 * (
        0.05 * x1 ** 2
        + 0.05 * np.tanh(x2)
        - 0.05 * p34 * (4.0 - 0.0005 * p34) * (4.0 - 0.0005 * p34)
        + np.log(np.abs(x1 + x5))
    )
    inner += (
        0.05 * x6 ** 2
        + 0.05 * np.tanh(x7)
        - 0.05 * p89 * (4.0 - 0.0005 * p89) * (4.0 - 0.0005 * p89)
        + np.log(np.abs(x6 + x10))
    )
    return inner


def gen_covariates(method, n, rng):
    """Covariate matrix: i.i.d. standard normal columns, except the first
    five columns of the ten-covariate scenario which share SIGMA_10."""
    if method == "m10":
        try:
            chol = np.linalg.cholesky(SIGMA_10)
        except np.linalg.LinAlgError as exc:
            raise InputError("covariance matrix is not positive definite") from exc
        first = rng.standard_normal((n, 5)) @ chol.T
        rest = rng.standard_normal((n, 5))
        return np.column_stack([first, rest])
    return rng.standard_normal((n, 2))


def gen_dataset(config, rng=None):
    """Generate one dataset: cured subjects take the censoring time, the
    susceptible draw a lifetime from the conditional population survival
    with Weibull promotion times."""
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    n = config.n
    X = gen_covariates(config.method, n, rng)
    Z = X  # the scenarios share incidence and latency covariates
    q = np.asarray(true_cure_prob(config.method, X))  # stable 1 - pi
    pi = 1.0 - q
    U = rng.random(n)
    C = rng.exponential(1.0 / config.censor_rate, size=n)
    eta = Z @ config.beta_true

    t = np.empty(n)
    delta = np.zeros(n, dtype=int)
    cured = U <= q
    t[cured] = C[cured]

    susc = ~cured
    if np.any(susc):
        # floor the cure probability so log(lo) stays finite and sampled
        # lifetimes stay strictly positive when pi rounds to 1
        lo = np.maximum(q[susc], 1e-300)
        u1 = np.maximum(lo + rng.random(int(np.sum(susc))) * (1.0 - lo), 1e-300)
        # S_p(y) = (1 - pi)^F(y) = u1  =>  F(y) = log u1 / log(1 - pi)
        u = np.clip(np.log(u1) / np.log(lo), 0.0, 1.0 - 1e-16)
        y = (-np.log1p(-u) * np.exp(-eta[susc])) ** (1.0 / config.alpha)
        t[susc] = np.minimum(y, C[susc])
        delta[susc] = (y <= C[susc]).astype(int)

    records = [SurvivalRecord(t=float(t[i]), delta=int(delta[i]), x=X[i], z=Z[i]) for i in range(n)]
    split = _train_test_split(delta, config.train_fraction, config.stratify_split, rng)
    return SimDataset(
        records=records,
        true_cure=susc.astype(int),
        true_pi=pi,
        split=split,
        config=config,
    )


def _train_test_split(delta, train_fraction, stratify, rng):
    n = len(delta)
    n_train = int(round(train_fraction * n))
    assign = np.full(n, "test", dtype=object)
    if stratify:
        # keep event rates comparable across the split
        chosen = []
        for value in (1, 0):
            idx = np.flatnonzero(delta == value)
            idx = idx[rng.permutation(len(idx))]
            k = int(round(train_fraction * len(idx)))
            chosen.append(idx[:k])
        train_idx = np.concatenate(chosen)
        # adjust to the exact target count deterministically
        if len(train_idx) > n_train:
            train_idx = train_idx[:n_train]
        elif len(train_idx) < n_train:
            remaining = np.setdiff1d(np.arange(n), train_idx)
            extra = remaining[rng.permutation(len(remaining))][: n_train - len(train_idx)]
            train_idx = np.concatenate([train_idx, extra])
    else:
        train_idx = rng.permutation(n)[:n_train]
    assign[train_idx] = "train"
    return assign.astype(str)


def true_promotion_cdf(t, z, config):
    """True Weibull promotion-time cdf F(t; z) = 1 - exp(-t^alpha e^{beta'z})."""
    t = np.asarray(t, dtype=float)
    eta = np.atleast_2d(np.asarray(z, dtype=float)) @ config.beta_true
    return -np.expm1(-(t ** config.alpha) * np.exp(eta))


def true_quantities(dataset):
    """True per-subject (pi, S_p, S_u, S_promotion) at the observed times."""
    t, _, X, Z = dataset.arrays()
    pi = dataset.true_pi
    q = 1.0 - pi
    F = true_promotion_cdf(t, Z, dataset.config)
    s_pop = q ** F
    with np.errstate(invalid="ignore", divide="ignore"):
        s_susceptible = np.where(pi > 0, (s_pop - q) / np.maximum(pi, 1e-300), 1.0 - F)
    return {
        "pi": pi,
        "s_pop": s_pop,
        "s_susceptible": np.clip(s_susceptible, 0.0, 1.0),
        "s_promotion": 1.0 - F,
    }
