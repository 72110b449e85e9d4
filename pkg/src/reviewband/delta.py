"""Calibrated decision-flip model and leave-one-out flip rates.

A paper with k reviewer scores is summarized by the mean and the population
variance of those scores.  A logistic model calibrated on observed decisions
maps (mean, variance) to an accept probability; a leave-one-out "flip" occurs
when dropping a single review moves the 0.5-threshold accept indicator.

Flip rates are aggregated separately inside and outside the borderline band;
their difference is the marginal value of an extra review.  This is an
operational proxy, not a causal estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .core import ACCEPT_TIERS, Decision, ReviewbandError, sigmoid


class DeltaError(ReviewbandError):
    """Flip-model fitting or flip counting failed."""


class SeparationError(DeltaError):
    """Perfectly separated labels make the unpenalized fit diverge."""


def paper_features(scores: Sequence[float]) -> tuple[float, float]:
    """Mean and population variance of a paper's reviewer scores.

    Population variance (divide by k) keeps the pair well-defined down to a
    single remaining score inside leave-one-out trials.
    """
    if len(scores) == 0:
        raise DeltaError("paper_features requires at least one score")
    arr = np.asarray(scores, dtype=np.float64)
    return float(arr.mean()), float(arr.var())


@dataclass(frozen=True, slots=True)
class FlipFitReport:
    iterations: int
    deviance: float
    ridge: float
    converged: bool


@dataclass(frozen=True, slots=True)
class FlipModel:
    beta0: float
    beta1: float
    beta2: float
    fit_report: FlipFitReport

    def predict(self, mu: float, sigma2: float) -> float:
        return sigmoid(self.beta0 + self.beta1 * mu + self.beta2 * sigma2)


def _as_accept_label(decision) -> bool:
    if isinstance(decision, bool):
        return decision
    if isinstance(decision, Decision):
        if decision is Decision.UNKNOWN:
            raise DeltaError("cannot fit on a paper with an Unknown decision")
        return decision in ACCEPT_TIERS
    raise DeltaError(f"unsupported decision label {decision!r}")


def fit_flip_model(
    papers: Iterable[tuple[Sequence[float], object]],
    ridge: float = 1e-4,
) -> FlipModel:
    """Fit accept probability on (mean, variance) by penalized IRLS.

    Each paper contributes one observation built from all of its scores.
    With ``ridge == 0`` a perfectly separated sample has no finite optimum;
    that case raises instead of returning garbage.
    """
    if ridge < 0.0:
        raise DeltaError("ridge must be >= 0")
    rows = []
    ys = []
    for scores, decision in papers:
        mu, sigma2 = paper_features(scores)
        rows.append((1.0, mu, sigma2))
        ys.append(1.0 if _as_accept_label(decision) else 0.0)
    if not rows:
        raise DeltaError("no papers to fit")
    y = np.array(ys)
    if y.min() == y.max():
        raise DeltaError("need at least one accept and one reject to fit")
    x = np.array(rows)

    beta = np.zeros(3)
    converged = False
    iterations = 0
    for iterations in range(1, 201):
        eta = x @ beta
        e = np.exp(-np.abs(eta))
        p = np.where(eta >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
        grad = x.T @ (y - p) - ridge * beta
        w = np.maximum(p * (1.0 - p), 1e-12)
        hess = x.T @ (w[:, None] * x) + ridge * np.eye(3)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError as exc:
            if ridge == 0.0:
                raise SeparationError(
                    "singular IRLS system; labels are separable, refit with a "
                    "positive ridge (e.g. 1e-4)"
                ) from exc
            raise
        beta = beta + step
        if float(np.max(np.abs(step))) < 1e-10:
            converged = True
            break

    if ridge == 0.0 and (not converged or float(np.max(np.abs(beta))) > 50.0):
        raise SeparationError(
            "logistic fit diverged; labels look perfectly separated, refit "
            "with a positive ridge (e.g. 1e-4)"
        )

    eta = x @ beta
    e = np.exp(-np.abs(eta))
    p = np.where(eta >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    p = np.clip(p, 1e-15, 1.0 - 1e-15)
    deviance = -2.0 * float(np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    report = FlipFitReport(
        iterations=iterations, deviance=deviance, ridge=ridge, converged=converged
    )
    return FlipModel(
        beta0=float(beta[0]), beta1=float(beta[1]), beta2=float(beta[2]),
        fit_report=report,
    )


@dataclass(frozen=True, slots=True)
class FlipCounts:
    flips_b: int
    trials_b: int
    flips_not_b: int
    trials_not_b: int

    def __post_init__(self) -> None:
        if self.flips_b > self.trials_b or self.flips_not_b > self.trials_not_b:
            raise DeltaError("flip count exceeds trial count")

    @property
    def rate_b(self) -> float | None:
        return self.flips_b / self.trials_b if self.trials_b else None

    @property
    def rate_not_b(self) -> float | None:
        return self.flips_not_b / self.trials_not_b if self.trials_not_b else None


DEFAULT_MIN_REVIEWS = 4


def loo_flips(
    papers: Iterable[tuple[str, Sequence[float]]],
    model: FlipModel,
    band_members: set[str] | frozenset[str],
    min_reviews: int = DEFAULT_MIN_REVIEWS,
    universe: set[str] | frozenset[str] | None = None,
) -> FlipCounts:
    """Count 0.5-threshold indicator changes over all leave-one-out trials.

    Only papers with at least ``min_reviews`` scores are eligible; each
    eligible paper contributes one trial per review.  Trials accumulate into
    the borderline stratum when the paper is a band member, otherwise into
    the complement.  Ties at exactly 0.5 count as accept on both sides, so
    equal probabilities never flip.
    """
    if min_reviews < 2:
        raise DeltaError("min_reviews must be >= 2 (leave-one-out needs k-1 >= 1)")
    flips = {True: 0, False: 0}
    trials = {True: 0, False: 0}
    for paper_id, scores in papers:
        if universe is not None and paper_id not in universe:
            raise DeltaError(f"paper {paper_id!r} is outside the ordering universe")
        k = len(scores)
        if k < min_reviews:
            continue
        in_band = paper_id in band_members
        mu, sigma2 = paper_features(scores)
        base = model.predict(mu, sigma2) >= 0.5
        for i in range(k):
            held_out = list(scores[:i]) + list(scores[i + 1 :])
            mu_i, sigma2_i = paper_features(held_out)
            flipped = (model.predict(mu_i, sigma2_i) >= 0.5) != base
            trials[in_band] += 1
            if flipped:
                flips[in_band] += 1
    return FlipCounts(
        flips_b=flips[True],
        trials_b=trials[True],
        flips_not_b=flips[False],
        trials_not_b=trials[False],
    )


class DeltaCi(NamedTuple):
    delta: float
    se: float
    lo: float
    hi: float


def delta_with_ci(counts: FlipCounts) -> DeltaCi:
    """Flip-rate difference with its difference-in-proportions Wald interval."""
    if counts.trials_b < 1 or counts.trials_not_b < 1:
        raise DeltaError("both strata need at least one leave-one-out trial")
    d_b = counts.flips_b / counts.trials_b
    d_n = counts.flips_not_b / counts.trials_not_b
    delta = d_b - d_n
    se = math.sqrt(
        d_b * (1.0 - d_b) / counts.trials_b + d_n * (1.0 - d_n) / counts.trials_not_b
    )
    return DeltaCi(delta, se, delta - 1.96 * se, delta + 1.96 * se)
