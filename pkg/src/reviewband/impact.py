"""Expected-impact accounting, band ablations, and the allocation plan.

With N submissions and a surplus of s extra reviews per paper, s*N papers can
get one review above the minimum.  Targeting a predicted borderline band that
overlaps the true borderline set with fraction rho lands rho*s*N extra
reviews on truly borderline papers versus s^2*N under uniform allocation, so
the expected number of net improved decisions is (rho*s - s^2) * N * delta.

The allocation plan upgrades the targeted band plus a uniformly random decoy
remainder, so receiving an extra review does not reveal borderline status.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .band import (
    BandError,
    make_band,
    make_band_exact,
    random_baseline_rho,
    restrict_order,
    rho,
    rho_ci,
)
from .btrank import BtRanking
from .core import ConfigError, Corpus, Decision, VenueParams, round_half_up, substream
from .delta import (
    DeltaError,
    FlipModel,
    delta_with_ci,
    fit_flip_model,
    loo_flips,
)


@dataclass(frozen=True, slots=True)
class ImpactInputs:
    rho: float
    delta: float
    n: int
    s: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError("rho must lie in [0, 1]")
        if self.n < 1:
            raise ConfigError("n must be positive")
        if not 0.0 < self.s < 1.0:
            raise ConfigError("s must lie in (0, 1)")


def expected_improved_decisions(inputs: ImpactInputs) -> float:
    """Net improved decisions from targeting the band instead of random."""
    return (inputs.rho * inputs.s - inputs.s ** 2) * inputs.n * inputs.delta


@dataclass(frozen=True, slots=True)
class AblationGrid:
    fractions: tuple[float, ...]
    centers: tuple[float, ...]

    def __post_init__(self) -> None:
        for name, values in (("fractions", self.fractions), ("centers", self.centers)):
            if not values:
                raise ConfigError(f"{name} must be nonempty")
            if any(not 0.0 < v < 1.0 for v in values):
                raise ConfigError(f"{name} values must lie in (0, 1)")
            if list(values) != sorted(values):
                raise ConfigError(f"{name} must be sorted ascending")


def _common_orders(
    llm_order: Sequence[str], human_order: Sequence[str]
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Both orderings restricted to their shared id universe.

    Papers without a public outcome stay in the fitted ranking but cannot be
    scored against the human proxy, so the overlap statistic is computed over
    the ids both orderings cover.
    """
    common = frozenset(llm_order) & frozenset(human_order)
    if not common:
        raise BandError("orderings share no papers")
    return restrict_order(llm_order, common), restrict_order(human_order, common)


def _flip_model_for(corpus: Corpus, ridge: float) -> FlipModel:
    rows = [
        (p.reviewer_scores, p.decision)
        for p in corpus.papers
        if p.decision is not Decision.UNKNOWN and p.reviewer_scores
    ]
    return fit_flip_model(rows, ridge=ridge)


def ablate_band_fraction(
    llm_order: Sequence[str],
    human_order: Sequence[str],
    corpus: Corpus,
    fractions: Sequence[float],
    center: float,
    n: int,
    delta_recompute: bool = True,
    fixed_delta: float | None = None,
    min_reviews: int = 4,
    ridge: float = 1e-4,
) -> list[dict]:
    """Overlap, marginal value and expected impact per band fraction.

    Each row rebuilds both bands at width w equal to the marginal reviewer
    fraction, recomputes the overlap, optionally refits the flip-rate
    difference against the new human band, and evaluates the impact formula
    at s = w.  ``n`` is the deployment-scale submission count, which need not
    equal the corpus size.
    """
    if not delta_recompute and fixed_delta is None:
        raise ConfigError("fixed_delta is required when delta_recompute is false")
    llm_common, human_common = _common_orders(llm_order, human_order)
    model = _flip_model_for(corpus, ridge) if delta_recompute else None
    eligible = [
        (p.id, p.reviewer_scores)
        for p in corpus.papers
        if p.decision is not Decision.UNKNOWN
    ]
    universe = frozenset(pid for pid, _ in eligible)

    rows = []
    for fraction in fractions:
        band_llm = make_band(llm_common, center, fraction)
        band_human = make_band(human_common, center, fraction)
        k_overlap = len(band_llm.member_set() & band_human.member_set())
        m = len(band_llm.members)
        rho_hat, ci_lo, ci_hi = rho_ci(k_overlap, m)
        if delta_recompute:
            try:
                counts = loo_flips(
                    eligible, model, band_human.member_set(),
                    min_reviews=min_reviews, universe=universe,
                )
                delta, delta_se, d_lo, d_hi = delta_with_ci(counts)
            except DeltaError:
                delta = delta_se = d_lo = d_hi = None
        else:
            delta, delta_se, d_lo, d_hi = fixed_delta, None, None, None
        expected = None
        if delta is not None:
            expected = expected_improved_decisions(
                ImpactInputs(rho=rho_hat, delta=delta, n=n, s=fraction)
            )
        rows.append(
            {
                "fraction": fraction,
                "center": center,
                "k_overlap": k_overlap,
                "m": m,
                "rho": rho_hat,
                "rho_ci_lo": ci_lo,
                "rho_ci_hi": ci_hi,
                "baseline": random_baseline_rho(fraction),
                "delta": delta,
                "delta_se": delta_se,
                "delta_ci_lo": d_lo,
                "delta_ci_hi": d_hi,
                "n": n,
                "expected_improved": expected,
            }
        )
    return rows


def ablate_centering(
    llm_order: Sequence[str],
    human_order: Sequence[str],
    centers: Sequence[float],
    fraction: float,
) -> list[dict]:
    """Overlap per band center with the fraction held fixed."""
    llm_common, human_common = _common_orders(llm_order, human_order)
    rows = []
    for center in centers:
        band_llm = make_band(llm_common, center, fraction)
        band_human = make_band(human_common, center, fraction)
        k_overlap = len(band_llm.member_set() & band_human.member_set())
        m = len(band_llm.members)
        rho_hat, ci_lo, ci_hi = rho_ci(k_overlap, m)
        rows.append(
            {
                "center": center,
                "fraction": fraction,
                "k_overlap": k_overlap,
                "m": m,
                "rho": rho_hat,
                "rho_ci_lo": ci_lo,
                "rho_ci_hi": ci_hi,
                "baseline": random_baseline_rho(fraction),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# allocation
# ---------------------------------------------------------------------------

REASON_BAND = "band"
REASON_DECOY = "decoy"
REASON_MINIMUM = "minimum"


@dataclass(frozen=True, slots=True)
class AllocationPlan:
    counts: dict[str, int]
    reasons: dict[str, str]
    budget: int
    band_slots: int
    decoy_slots: int

    def total_reviews(self) -> int:
        return sum(self.counts.values())


def allocate(ranking: BtRanking, params: VenueParams, seed: int) -> AllocationPlan:
    """Assign r_min or r_min+1 reviews per paper under a fixed extra budget.

    The budget is round(s*N) extra slots.  The non-decoy share goes to a band
    of exactly that many papers centered at the acceptance percentile of the
    fitted order; the remaining slots fall uniformly at random on papers not
    already upgraded.  Total reviews always equal N*r_min + budget.
    """
    order = ranking.order
    n = len(order)
    if params.n_submissions != n:
        raise ConfigError(
            f"venue n_submissions={params.n_submissions} does not match the "
            f"ranking size {n}"
        )
    budget = round_half_up(params.surplus * n)
    if budget < 1:
        raise ConfigError("surplus budget rounds to zero extra reviews")
    if budget > n:
        raise ConfigError("extra-review budget exceeds the number of papers")

    # ceil with a fuzz guard so 0.75 * 4 == 3.0000000000000004 still gives 3
    band_slots = math.ceil((1.0 - params.decoy_fraction) * budget - 1e-9)
    band_slots = min(budget, max(0, band_slots))
    decoy_slots = budget - band_slots

    upgraded: set[str] = set()
    reasons = {pid: REASON_MINIMUM for pid in order}
    if band_slots > 0:
        band = make_band_exact(order, 1.0 - params.acceptance_rate, band_slots)
        for pid in band.members:
            upgraded.add(pid)
            reasons[pid] = REASON_BAND

    if decoy_slots > 0:
        pool = [pid for pid in order if pid not in upgraded]
        rng = substream(seed, "decoys")
        chosen = rng.choice(len(pool), size=decoy_slots, replace=False)
        for idx in sorted(int(i) for i in chosen):
            upgraded.add(pool[idx])
            reasons[pool[idx]] = REASON_DECOY

    counts = {
        pid: params.r_min + (1 if pid in upgraded else 0) for pid in order
    }
    return AllocationPlan(
        counts=counts,
        reasons=reasons,
        budget=budget,
        band_slots=band_slots,
        decoy_slots=decoy_slots,
    )
