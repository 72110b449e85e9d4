"""Synthetic venue generator and brute-force oracles.

Generates a venue with known latent quality, noisy reviewer scores, and
quantile-threshold decisions, then runs the full estimation pipeline against
it.  Because the ground truth is known, every estimator (overlap fraction,
flip-rate difference, expected improvements) can be checked against a direct
Monte Carlo computation of the quantity it is supposed to approximate.

The synthetic judge draws match outcomes from the same pairwise model the
fitter assumes, so consistency is testable under correct specification; the
Thurstone mode misspecifies the noise for robustness checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .band import human_ordering, make_band, random_baseline_rho, rho_ci
from .btrank import FitOptions, fit_bt, mann_whitney_auc
from .core import (
    ACCEPT_TIERS,
    ConfigError,
    Corpus,
    Decision,
    PaperRecord,
    derive_seed,
    round_half_up,
    substream,
)
from .delta import delta_with_ci, fit_flip_model, loo_flips
from .impact import ImpactInputs, expected_improved_decisions
from .judge import (
    InputScope,
    JudgeConfig,
    SyntheticJudge,
    SyntheticJudgeParams,
    run_match,
)
from .scheduler import make_schedule


@dataclass(frozen=True, slots=True)
class SimVenueParams:
    n_papers: int
    quality_spread: float = 1.0
    reviewer_noise: float = 1.0
    reviews_per_paper: int = 4
    acceptance_rate: float = 0.25
    judge_noise: float = 1.0
    seed: int = 0
    borderline_fraction: float = 0.3
    discretize_scores: bool = False

    def __post_init__(self) -> None:
        if self.n_papers < 10:
            raise ConfigError("n_papers must be >= 10")
        if self.quality_spread <= 0.0:
            raise ConfigError("quality_spread must be positive")
        if self.reviewer_noise < 0.0:
            raise ConfigError("reviewer_noise must be >= 0")
        if self.reviews_per_paper < 4:
            raise ConfigError("reviews_per_paper must be >= 4")
        if not 0.0 < self.acceptance_rate < 1.0:
            raise ConfigError("acceptance_rate must lie in (0, 1)")
        if self.judge_noise <= 0.0:
            raise ConfigError("judge_noise must be positive")
        if not 0.0 < self.borderline_fraction < 1.0:
            raise ConfigError("borderline_fraction must lie in (0, 1)")


@dataclass(frozen=True, slots=True)
class SimVenue:
    params: SimVenueParams
    latent_quality: dict[str, float]
    papers: Corpus
    true_borderline: frozenset[str]


def _accept_set(means: np.ndarray, ids: list[str], n_accept: int) -> set[str]:
    """Top n_accept papers by mean score, ties broken by ascending id."""
    order = sorted(range(len(ids)), key=lambda i: (-means[i], ids[i]))
    return {ids[i] for i in order[:n_accept]}


def _discretize(scores: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(5.5 + scores), 1.0, 10.0)


def generate_venue(params: SimVenueParams) -> SimVenue:
    """Draw latent qualities, noisy scores, and quantile-threshold decisions.

    Decisions accept exactly the top round(acceptance_rate * n) papers by
    mean score, mirroring a venue that fixes its acceptance rate rather than
    a score cut; the true borderline set is the band of the configured
    fraction around the acceptance percentile of the latent order.
    """
    n = params.n_papers
    width = len(str(n))
    ids = [f"p{i + 1:0{width}d}" for i in range(n)]
    rng = substream(params.seed, "venue")
    latent = rng.standard_normal(n) * params.quality_spread
    noise = rng.standard_normal((n, params.reviews_per_paper)) * params.reviewer_noise
    scores = latent[:, None] + noise
    if params.discretize_scores:
        scores = _discretize(scores)
    means = scores.mean(axis=1)

    n_accept = max(1, round_half_up(params.acceptance_rate * n))
    accepted = _accept_set(means, ids, n_accept)

    papers = tuple(
        PaperRecord(
            id=pid,
            title=f"Synthetic submission {pid}",
            abstract=f"Generated abstract for {pid}.",
            decision=Decision.ACCEPT if pid in accepted else Decision.REJECT,
            reviewer_scores=tuple(float(s) for s in scores[i]),
        )
        for i, pid in enumerate(ids)
    )
    latent_by_id = {pid: float(latent[i]) for i, pid in enumerate(ids)}
    latent_order = sorted(ids, key=lambda pid: (-latent_by_id[pid], pid))
    true_band = make_band(
        latent_order, 1.0 - params.acceptance_rate, params.borderline_fraction
    )
    return SimVenue(
        params=params,
        latent_quality=latent_by_id,
        papers=Corpus(papers=papers, seed=params.seed),
        true_borderline=true_band.member_set(),
    )


@dataclass(frozen=True, slots=True)
class TrueFlipRates:
    delta_b: float | None
    delta_not_b: float | None
    flips_b: int
    trials_b: int
    flips_not_b: int
    trials_not_b: int


def true_flip_rates(venue: SimVenue, n_trials: int) -> TrueFlipRates:
    """Monte Carlo ground-truth flip rates by redrawing single reviews.

    Each trial picks a paper uniformly, redraws the noise of one of its
    reviews, and recomputes the venue-wide quantile decision; a flip is a
    change in that paper's accept outcome.  Rates are stratified by true
    borderline membership.
    """
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    params = venue.params
    ids = list(venue.papers.ids())
    n = len(ids)
    latent = np.array([venue.latent_quality[pid] for pid in ids])
    scores = np.array([venue.papers.papers[i].reviewer_scores for i in range(n)])
    k = params.reviews_per_paper
    means = scores.mean(axis=1)
    n_accept = max(1, round_half_up(params.acceptance_rate * n))
    accepted = _accept_set(means, ids, n_accept)

    # id-ascending tie-break, vectorized: paper j stays accepted iff fewer
    # than n_accept papers beat it on (mean desc, id asc).
    id_rank = np.arange(n)  # ids are generated in ascending lexicographic order

    rng = substream(params.seed, "flip-oracle")
    flips = {True: 0, False: 0}
    trials = {True: 0, False: 0}
    for _ in range(n_trials):
        j = int(rng.integers(n))
        r = int(rng.integers(k))
        new_score = latent[j] + rng.standard_normal() * params.reviewer_noise
        if params.discretize_scores:
            new_score = float(_discretize(np.array([new_score]))[0])
        new_mean_j = means[j] + (new_score - scores[j, r]) / k
        better = int(
            np.sum((means > new_mean_j) | ((means == new_mean_j) & (id_rank < j)))
        )
        if means[j] > new_mean_j:
            better -= 1  # the vectorized count included paper j's old mean
        accept_new = better < n_accept
        flipped = accept_new != (ids[j] in accepted)
        stratum = ids[j] in venue.true_borderline
        trials[stratum] += 1
        if flipped:
            flips[stratum] += 1
    return TrueFlipRates(
        delta_b=flips[True] / trials[True] if trials[True] else None,
        delta_not_b=flips[False] / trials[False] if trials[False] else None,
        flips_b=flips[True],
        trials_b=trials[True],
        flips_not_b=flips[False],
        trials_not_b=trials[False],
    )


def end_to_end_run(
    params: SimVenueParams,
    rounds: int,
    judge_policy: str = "synthetic",
    n_flip_trials: int = 2000,
    fit_options: FitOptions = FitOptions(),
) -> dict:
    """Run schedule -> judge -> fit -> bands -> impact, next to the oracles.

    ``judge_policy`` is "synthetic" (pairwise outcomes drawn from the latent
    qualities) or "random" (every latent score zero, so the judge is a coin
    flip).  Returns a flat mapping with estimator and oracle columns side by
    side, ready to become one CSV row.
    """
    if judge_policy not in ("synthetic", "random"):
        raise ConfigError(f"unknown judge policy {judge_policy!r}")
    venue = generate_venue(params)
    corpus = venue.papers
    schedule = make_schedule(corpus, rounds, params.seed)

    if judge_policy == "random":
        true_scores = {pid: 0.0 for pid in corpus.ids()}
    else:
        true_scores = venue.latent_quality
    judge = SyntheticJudge(
        SyntheticJudgeParams(true_scores=true_scores, noise_scale=params.judge_noise)
    )
    config = JudgeConfig(backend="synthetic", input_scope=InputScope.ABSTRACT_ONLY)

    by_id = {p.id: p for p in corpus.papers}
    records = []
    for round_index, (a, b) in schedule.iter_pairs():
        match_seed = derive_seed(params.seed, f"match:{round_index}:{a}:{b}:0")
        records.append(
            run_match(
                (by_id[a], by_id[b]), config, match_seed, judge, round_index
            )
        )

    ranking = fit_bt(records, corpus.ids(), fit_options)
    human = human_ordering(corpus)
    center = 1.0 - params.acceptance_rate
    fraction = params.borderline_fraction
    band_llm = make_band(ranking.order, center, fraction)
    band_human = make_band(human.order, center, fraction)
    k_overlap = len(band_llm.member_set() & band_human.member_set())
    m = len(band_llm.members)
    rho_hat, rho_lo, rho_hi = rho_ci(k_overlap, m)

    model = fit_flip_model(
        [(p.reviewer_scores, p.decision) for p in corpus.papers]
    )
    counts = loo_flips(
        [(p.id, p.reviewer_scores) for p in corpus.papers],
        model,
        band_human.member_set(),
    )
    delta, delta_se, delta_lo, delta_hi = delta_with_ci(counts)
    expected = expected_improved_decisions(
        ImpactInputs(rho=rho_hat, delta=delta, n=params.n_papers, s=fraction)
    )

    true_overlap = len(band_llm.member_set() & venue.true_borderline) / m
    oracle = true_flip_rates(venue, n_flip_trials)
    true_delta = None
    if oracle.delta_b is not None and oracle.delta_not_b is not None:
        true_delta = oracle.delta_b - oracle.delta_not_b

    labels = {
        p.id: p.decision in ACCEPT_TIERS
        for p in corpus.papers
        if p.decision is not Decision.UNKNOWN
    }
    auc = mann_whitney_auc(ranking.theta, labels)

    return {
        "seed": params.seed,
        "n_papers": params.n_papers,
        "rounds": rounds,
        "judge_policy": judge_policy,
        "rho": rho_hat,
        "rho_ci_lo": rho_lo,
        "rho_ci_hi": rho_hi,
        "baseline": random_baseline_rho(fraction),
        "delta": delta,
        "delta_se": delta_se,
        "delta_ci_lo": delta_lo,
        "delta_ci_hi": delta_hi,
        "expected_improved": expected,
        "auc": auc,
        "true_overlap": true_overlap,
        "true_delta_b": oracle.delta_b,
        "true_delta_not_b": oracle.delta_not_b,
        "true_delta": true_delta,
        "fit_converged": ranking.fit_report.converged,
    }
