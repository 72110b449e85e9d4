"""Human proxy ordering, quantile borderline bands, and the overlap metric.

The "human ordering" ranks papers by outcome tier, then mean reviewer score
within tier.  It operationalizes the venue's process, not latent quality.

A borderline band is a contiguous rank window of fraction ``w`` centered at
percentile ``c`` of an ordering.  The overlap fraction between two equal-size
bands (one from the fitted ranking, one from the human proxy) is the headline
agreement statistic; because the sizes are forced equal, it is simultaneously
the precision and the recall of the predicted band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .core import (
    Corpus,
    Decision,
    ReviewbandError,
    TIER_RANK,
    round_half_up,
)


class BandError(ReviewbandError):
    """Band construction or comparison failed."""


@dataclass(frozen=True, slots=True)
class HumanOrdering:
    order: tuple[str, ...]


def human_ordering(corpus: Corpus) -> HumanOrdering:
    """Order papers best-first by decision tier, then mean score, then id.

    Papers with an Unknown decision are excluded; papers without scores sort
    after scored papers within their tier.
    """
    eligible = [p for p in corpus.papers if p.decision is not Decision.UNKNOWN]
    if not eligible:
        raise BandError("no papers with a known decision")

    def key(paper):
        mean = paper.mean_score
        return (
            -TIER_RANK[paper.decision],
            -(mean if mean is not None else -math.inf),
            paper.id,
        )

    return HumanOrdering(order=tuple(p.id for p in sorted(eligible, key=key)))


@dataclass(frozen=True, slots=True)
class BorderlineBand:
    """Contiguous quantile window of an ordering.

    ``lo_rank`` and ``hi_rank`` are 1-based inclusive quantile ranks (rank n
    is the best paper); ``members`` lists the papers best-first, so the first
    member carries quantile rank ``hi_rank``.
    """

    center: float
    fraction: float
    members: tuple[str, ...]
    lo_rank: int
    hi_rank: int

    def member_set(self) -> frozenset[str]:
        return frozenset(self.members)


def _band_bounds(n: int, center: float, k: int) -> tuple[int, int]:
    """1-based inclusive quantile-rank window of size k centered at ``center``.

    Quantile ranks ascend toward quality: rank n is the best paper and the
    quantile of rank r is r/n, so a center of 1 - acceptance_rate lands on
    the acceptance boundary.  Even window sizes put the extra member on the
    higher-quantile side (the low offset is floored); the window is clamped
    to stay inside [1, n].
    """
    k = max(1, min(k, n))
    center_rank = round_half_up(center * n)
    lo = center_rank - (k - 1) // 2
    lo = max(1, min(lo, n - k + 1))
    return lo, lo + k - 1


def make_band_exact(order: Sequence[str], center: float, k: int) -> BorderlineBand:
    """Band with an exact member count, used when a slot budget is fixed.

    ``order`` is best-first; quantile rank r corresponds to list position
    n - r, so a high center selects a slice near the head of the list.
    Members are returned best-first.
    """
    n = len(order)
    if n == 0:
        raise BandError("cannot build a band over an empty ordering")
    if not 0.0 < center < 1.0:
        raise BandError("center must lie in (0, 1)")
    if k < 1:
        raise BandError("band size must be >= 1")
    lo, hi = _band_bounds(n, center, k)
    return BorderlineBand(
        center=center,
        fraction=(hi - lo + 1) / n,
        members=tuple(order[n - hi : n - lo + 1]),
        lo_rank=lo,
        hi_rank=hi,
    )


def make_band(order: Sequence[str], center: float, fraction: float) -> BorderlineBand:
    """Quantile window of the ordering spanning [center - w/2, center + w/2]."""
    if not 0.0 < fraction < 1.0:
        raise BandError("fraction must lie in (0, 1)")
    n = len(order)
    if n == 0:
        raise BandError("cannot build a band over an empty ordering")
    k = max(1, round_half_up(fraction * n))
    band = make_band_exact(order, center, k)
    return BorderlineBand(
        center=center,
        fraction=fraction,
        members=band.members,
        lo_rank=band.lo_rank,
        hi_rank=band.hi_rank,
    )


def rho(band_llm: BorderlineBand, band_human: BorderlineBand) -> float:
    """Overlap of the two bands divided by the predicted band's size.

    Sizes must match (enforced), which makes the value both precision and
    recall of the predicted borderline set.
    """
    if len(band_llm.members) != len(band_human.members):
        raise BandError(
            f"band sizes differ: {len(band_llm.members)} vs {len(band_human.members)}"
        )
    overlap = band_llm.member_set() & band_human.member_set()
    return len(overlap) / len(band_llm.members)


class RhoCi(NamedTuple):
    rho: float
    lo: float
    hi: float


def rho_ci(k_overlap: int, m: int, clamp: bool = False) -> RhoCi:
    """95% Wald interval for the overlap fraction under a binomial model.

    Unclamped by default; ``clamp=True`` restricts the interval to [0, 1]
    (flagged in report output when used).
    """
    if m < 1:
        raise BandError("band size m must be >= 1")
    if not 0 <= k_overlap <= m:
        raise BandError("overlap count must lie in [0, m]")
    rho_hat = k_overlap / m
    half = 1.96 * math.sqrt(rho_hat * (1.0 - rho_hat) / m)
    lo, hi = rho_hat - half, rho_hat + half
    if clamp:
        lo, hi = max(0.0, lo), min(1.0, hi)
    return RhoCi(rho_hat, lo, hi)


def random_baseline_rho(fraction: float) -> float:
    """Expected overlap fraction when the band is picked uniformly at random.

    Choosing w*n of n papers uniformly overlaps a fixed band of the same size
    in w^2*n papers on average, so the baseline overlap fraction equals w.
    """
    if not 0.0 < fraction < 1.0:
        raise BandError("fraction must lie in (0, 1)")
    return fraction


def restrict_order(order: Sequence[str], universe: set[str] | frozenset[str]) -> tuple[str, ...]:
    """Project an ordering onto an id universe, preserving relative order."""
    return tuple(pid for pid in order if pid in universe)
