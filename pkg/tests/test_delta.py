from __future__ import annotations

import math
import random

import numpy as np
import pytest

from reviewband.delta import (
    DeltaError,
    FlipCounts,
    SeparationError,
    delta_with_ci,
    fit_flip_model,
    loo_flips,
    paper_features,
)


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------

def test_features_constant_scores():
    assert paper_features([5.0, 5.0, 5.0]) == (5.0, 0.0)


def test_features_population_variance():
    assert paper_features([2.0, 8.0]) == (5.0, 9.0)


def test_features_worked_example():
    mu, sigma2 = paper_features([3.0, 5.0, 6.0, 8.0])
    assert mu == 5.5
    assert sigma2 == 3.25


def test_features_empty_rejected():
    with pytest.raises(DeltaError):
        paper_features([])


# ---------------------------------------------------------------------------
# flip model fitting
# ---------------------------------------------------------------------------

def test_no_signal_fit_is_flat():
    # 50/50 labels at identical features: no coefficient should move
    papers = [([5.0, 5.0, 6.0, 6.0], i % 2 == 0) for i in range(40)]
    model = fit_flip_model(papers, ridge=1e-4)
    assert abs(model.beta1) < 1e-6
    assert abs(model.beta2) < 1e-6
    assert model.predict(5.5, 0.25) == pytest.approx(0.5, abs=1e-6)


def test_mean_signal_gives_positive_slope():
    rng = random.Random(3)
    papers = []
    for _ in range(120):
        mu = rng.uniform(2.0, 9.0)
        spread = rng.uniform(0.5, 1.5)
        scores = [mu - spread, mu - spread, mu + spread, mu + spread]
        papers.append((scores, mu > 5.0))
    model = fit_flip_model(papers, ridge=1e-4)
    assert model.beta1 > 0.0


# Fixture recipe shared with the independent optimizer oracle below; the
# oracle's fitted coefficients are also frozen here as literals.
_ORACLE_BETA = (-2.449803018, 0.687942049, -0.548109699)


def _oracle_fixture():
    rng = np.random.default_rng(1234)
    mus = rng.normal(5.0, 1.5, size=50)
    sig2s = rng.uniform(0.0, 4.0, size=50)
    logits = -4.0 + 0.9 * mus - 0.3 * sig2s
    labels = rng.random(50) < 1.0 / (1.0 + np.exp(-logits))
    papers = []
    for mu, s2, accept in zip(mus, sig2s, labels):
        half = math.sqrt(s2)
        papers.append(([mu - half, mu - half, mu + half, mu + half], bool(accept)))
    features = np.column_stack([np.ones(50), mus, sig2s])
    return papers, features, labels.astype(float)


def test_irls_matches_independent_optimizer_oracle():
    from scipy import optimize

    papers, x, y = _oracle_fixture()
    ridge = 1e-4

    def nll_grad(beta):
        eta = x @ beta
        p = 1.0 / (1.0 + np.exp(-np.clip(eta, -500, 500)))
        nll = -(y * -np.logaddexp(0, -eta) + (1 - y) * -np.logaddexp(0, eta)).sum()
        nll += 0.5 * ridge * beta @ beta
        return nll, -x.T @ (y - p) + ridge * beta

    oracle = optimize.minimize(
        nll_grad, np.zeros(3), jac=True, method="BFGS",
        options={"gtol": 1e-12, "maxiter": 2000},
    ).x
    assert np.max(np.abs(oracle - np.array(_ORACLE_BETA))) < 1e-6

    model = fit_flip_model(papers, ridge=ridge)
    fitted = np.array([model.beta0, model.beta1, model.beta2])
    p_oracle = 1.0 / (1.0 + np.exp(-(x @ oracle)))
    p_fitted = 1.0 / (1.0 + np.exp(-(x @ fitted)))
    assert np.max(np.abs(p_oracle - p_fitted)) < 1e-8


def test_single_class_rejected():
    papers = [([5.0, 6.0, 7.0, 8.0], True) for _ in range(10)]
    with pytest.raises(DeltaError):
        fit_flip_model(papers)


def test_perfect_separation_without_ridge_raises():
    papers = [([float(v)] * 4, v > 5) for v in (1, 2, 3, 4, 7, 8, 9, 10)]
    with pytest.raises(SeparationError) as err:
        fit_flip_model(papers, ridge=0.0)
    assert "ridge" in str(err.value)
    # the suggested remedy works
    model = fit_flip_model(papers, ridge=1e-4)
    assert model.beta1 > 0.0


# ---------------------------------------------------------------------------
# leave-one-out flips
# ---------------------------------------------------------------------------

# 20-paper fixture; counts frozen from the definitional brute-force
# enumeration (reproduced by _enumerate_flips below).
LOO_FIXTURE = [
    ("f00", [5.9, 3.7, 4.3, 4.2]),
    ("f01", [4.7, 7.6, 2.6, 4.6, 7.5, 7.3]),
    ("f02", [2.9, 4.5, 8.1, 8.8, 7.0, 3.1]),
    ("f03", [8.1, 3.1, 4.4, 4.5, 4.7]),
    ("f04", [3.3, 7.3, 2.5, 4.7, 2.0]),
    ("f05", [5.2, 2.6, 2.2, 7.7]),
    ("f06", [7.7, 3.9, 7.6, 5.1, 6.7]),
    ("f07", [8.8, 3.5, 6.4, 2.6]),
    ("f08", [3.1, 7.4, 2.7, 5.1, 2.5, 5.3]),
    ("f09", [8.2, 7.4, 5.3, 8.4, 5.4]),
    ("f10", [3.0, 7.7, 3.1, 6.5]),
    ("f11", [8.0, 3.8, 7.3, 2.8]),
    ("f12", [6.7, 5.0, 8.7, 8.6, 7.3, 7.5]),
    ("f13", [6.8, 7.3, 4.1, 8.7]),
    ("f14", [7.8, 2.2, 3.7, 4.2]),
    ("f15", [8.2, 5.9, 6.7, 5.5, 5.3, 5.2]),
    ("f16", [8.1, 7.9, 8.6, 7.6]),
    ("f17", [2.3, 4.0, 4.1, 2.8, 8.8]),
    ("f18", [5.0, 2.5, 4.7, 3.4, 4.7, 5.2]),
    ("f19", [9.0, 5.0, 2.5, 4.5, 5.3, 4.2]),
]
LOO_BAND = frozenset(f"f{i:02d}" for i in range(8))
LOO_EXPECTED = FlipCounts(flips_b=7, trials_b=39, flips_not_b=8, trials_not_b=60)


class _FixedModel:
    """Stand-in flip model with pinned coefficients for enumeration tests."""

    beta0, beta1, beta2 = -5.5, 1.0, 0.15

    def predict(self, mu, sigma2):
        return 1.0 / (1.0 + math.exp(-(self.beta0 + self.beta1 * mu + self.beta2 * sigma2)))


def _enumerate_flips(papers, model, band):
    flips = {True: 0, False: 0}
    trials = {True: 0, False: 0}
    for pid, scores in papers:
        arr = np.asarray(scores)
        base = model.predict(arr.mean(), arr.var()) >= 0.5
        stratum = pid in band
        for i in range(len(scores)):
            rest = np.delete(arr, i)
            trials[stratum] += 1
            if (model.predict(rest.mean(), rest.var()) >= 0.5) != base:
                flips[stratum] += 1
    return FlipCounts(flips[True], trials[True], flips[False], trials[False])


def test_loo_flips_equals_exhaustive_enumeration():
    model = _FixedModel()
    counts = loo_flips(LOO_FIXTURE, model, LOO_BAND)
    assert counts == _enumerate_flips(LOO_FIXTURE, model, LOO_BAND)
    assert counts == LOO_EXPECTED


def test_identical_scores_never_flip():
    counts = loo_flips([("p", [5.0, 5.0, 5.0, 5.0])], _FixedModel(), frozenset({"p"}))
    assert counts.flips_b == 0
    assert counts.trials_b == 4


def test_min_reviews_gate():
    papers = [("few", [6.0, 6.0, 6.0]), ("enough", [6.0, 6.0, 6.0, 6.0])]
    counts = loo_flips(papers, _FixedModel(), frozenset())
    assert counts.trials_not_b == 4  # only the 4-review paper is eligible
    with pytest.raises(DeltaError):
        loo_flips(papers, _FixedModel(), frozenset(), min_reviews=1)


def test_loo_flips_order_invariant():
    model = _FixedModel()
    base = loo_flips(LOO_FIXTURE, model, LOO_BAND)
    rng = random.Random(5)
    shuffled = [
        (pid, rng.sample(scores, len(scores)))
        for pid, scores in rng.sample(LOO_FIXTURE, len(LOO_FIXTURE))
    ]
    assert loo_flips(shuffled, model, LOO_BAND) == base


def test_loo_flips_universe_check():
    with pytest.raises(DeltaError):
        loo_flips(
            [("ghost", [5.0] * 4)], _FixedModel(), frozenset(),
            universe=frozenset({"known"}),
        )


def test_empty_band_stratum_reported_undefined():
    counts = loo_flips(LOO_FIXTURE, _FixedModel(), frozenset())
    assert counts.trials_b == 0
    assert counts.rate_b is None
    with pytest.raises(DeltaError):
        delta_with_ci(counts)


# ---------------------------------------------------------------------------
# difference in proportions
# ---------------------------------------------------------------------------

def test_delta_ci_worked_example():
    counts = FlipCounts(flips_b=10, trials_b=100, flips_not_b=20, trials_not_b=400)
    delta, se, lo, hi = delta_with_ci(counts)
    assert delta == pytest.approx(0.05, abs=1e-12)
    assert se == pytest.approx(0.031918, abs=1e-5)
    assert lo == pytest.approx(-0.01256, abs=1e-4)
    assert hi == pytest.approx(0.11256, abs=1e-4)


def test_delta_ci_identical_strata():
    counts = FlipCounts(flips_b=5, trials_b=50, flips_not_b=5, trials_not_b=50)
    delta, se, lo, hi = delta_with_ci(counts)
    assert delta == 0.0
    assert lo == pytest.approx(-hi, abs=1e-15)


def test_delta_ci_half_width_is_196_se():
    rng = random.Random(11)
    for _ in range(200):
        trials_b = rng.randrange(1, 500)
        trials_n = rng.randrange(1, 500)
        counts = FlipCounts(
            flips_b=rng.randrange(0, trials_b + 1),
            trials_b=trials_b,
            flips_not_b=rng.randrange(0, trials_n + 1),
            trials_not_b=trials_n,
        )
        delta, se, lo, hi = delta_with_ci(counts)
        assert (hi - lo) / 2.0 == pytest.approx(1.96 * se, abs=1e-12)
        assert -1.0 <= delta <= 1.0


def test_flip_counts_validation():
    with pytest.raises(DeltaError):
        FlipCounts(flips_b=5, trials_b=4, flips_not_b=0, trials_not_b=0)
