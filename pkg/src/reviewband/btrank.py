"""Bradley-Terry fitting, the induced ranking, and the ranking AUC.

The latent score of each paper is fit by maximum likelihood over the recorded
binary match outcomes.  Scores are identifiable only up to a constant shift,
so the fitted vector is normalized to sum to zero.

Two fitting paths:

* ``l2_lambda == 0``: the classic minorization-maximization update, which is
  globally convergent whenever the win digraph is strongly connected.  When
  it is not (some paper never wins or never loses along every cut), the
  unregularized MLE is infinite; the fitter detects this and reports
  divergence instead of pretending to converge.
* ``l2_lambda > 0`` (default): damped Newton on the L2-penalized likelihood,
  which is strictly concave, keeps every score finite, and lands exactly on
  the zero-sum normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import MatchRecord, ReviewbandError, Winner

TIE_DECIMALS = 9  # theta values are quantized to this many decimals for ordering
_P_FLOOR = 1e-300


class FitError(ReviewbandError):
    """Fit preconditions violated (no valid matches, unknown ids, ...)."""


@dataclass(frozen=True, slots=True)
class FitOptions:
    l2_lambda: float = 0.01
    tol: float = 1e-8
    max_iters: int = 10_000

    def __post_init__(self) -> None:
        if self.l2_lambda < 0.0:
            raise FitError("l2_lambda must be >= 0")
        if self.tol <= 0.0:
            raise FitError("tol must be positive")
        if self.max_iters < 1:
            raise FitError("max_iters must be positive")


@dataclass(frozen=True, slots=True)
class FitReport:
    iterations: int
    max_update: float
    log_likelihood: float
    l2_lambda: float
    converged: bool
    diverged: bool


@dataclass(frozen=True, slots=True)
class BtRanking:
    theta: dict[str, float]
    order: tuple[str, ...]
    fit_report: FitReport


def _aggregate(matches: list[MatchRecord], index: dict[str, int]):
    """Collapse matches into (winner_idx, loser_idx, count) arrays."""
    counts: dict[tuple[int, int], int] = {}
    for m in matches:
        if m.winner is Winner.INVALID:
            continue
        try:
            ia, ib = index[m.paper_a], index[m.paper_b]
        except KeyError as exc:
            raise FitError(f"match references unknown paper id {exc}") from exc
        key = (ia, ib) if m.winner is Winner.A else (ib, ia)
        counts[key] = counts.get(key, 0) + 1
    if not counts:
        raise FitError("no valid matches to fit")
    keys = sorted(counts)
    win_i = np.array([k[0] for k in keys], dtype=np.int64)
    lose_j = np.array([k[1] for k in keys], dtype=np.int64)
    n_wins = np.array([counts[k] for k in keys], dtype=np.float64)
    return win_i, lose_j, n_wins


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def _penalized_ll(theta: np.ndarray, win_i, lose_j, n_wins, lam: float) -> float:
    diffs = theta[win_i] - theta[lose_j]
    ll = float(np.dot(n_wins, _log_sigmoid(diffs)))
    return ll - 0.5 * lam * float(np.dot(theta, theta))


def _strongly_connected(n: int, win_i: np.ndarray, lose_j: np.ndarray) -> bool:
    """True iff every matched paper is reachable from every other along wins."""
    forward: list[list[int]] = [[] for _ in range(n)]
    backward: list[list[int]] = [[] for _ in range(n)]
    for a, b in zip(win_i, lose_j):
        forward[a].append(int(b))
        backward[b].append(int(a))

    def reach(adj: list[list[int]]) -> int:
        seen = [False] * n
        stack = [0]
        seen[0] = True
        count = 1
        while stack:
            node = stack.pop()
            for nxt in adj[node]:
                if not seen[nxt]:
                    seen[nxt] = True
                    count += 1
                    stack.append(nxt)
        return count

    return reach(forward) == n and reach(backward) == n


def _fit_mm(win_i, lose_j, n_wins, n: int, opts: FitOptions):
    """Unregularized maximum likelihood via the MM update on the skill scale."""
    diverged = not _strongly_connected(n, win_i, lose_j)
    total_wins = np.zeros(n)
    np.add.at(total_wins, win_i, n_wins)

    # n_ij totals per unordered pair, stored on both orientations.
    pair_i = np.concatenate([win_i, lose_j])
    pair_j = np.concatenate([lose_j, win_i])
    pair_n = np.concatenate([n_wins, n_wins])

    p = np.ones(n)
    iterations = 0
    max_update = math.inf
    converged = False
    for iterations in range(1, opts.max_iters + 1):
        denom = np.zeros(n)
        np.add.at(
            denom, pair_i, pair_n / np.maximum(p[pair_i] + p[pair_j], _P_FLOOR)
        )
        p_new = np.where(denom > 0.0, total_wins / np.maximum(denom, _P_FLOOR), p)
        positive = p_new > 0.0
        if positive.any():
            log_gm = float(np.mean(np.log(p_new[positive])))
            p_new = p_new / math.exp(log_gm)
        max_update = float(
            np.max(np.abs(np.log(np.maximum(p_new, _P_FLOOR)) - np.log(np.maximum(p, _P_FLOOR))))
        )
        p = p_new
        if not diverged and max_update < opts.tol:
            converged = True
            break
    theta = np.log(np.maximum(p, _P_FLOOR))
    return theta, iterations, max_update, converged, diverged


def _fit_newton(win_i, lose_j, n_wins, n: int, opts: FitOptions):
    """Damped Newton ascent on the L2-penalized log-likelihood."""
    lam = opts.l2_lambda
    theta = np.zeros(n)
    iterations = 0
    max_update = math.inf
    converged = False
    for iterations in range(1, opts.max_iters + 1):
        diffs = theta[win_i] - theta[lose_j]
        e = np.exp(-np.abs(diffs))
        p = np.where(diffs >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
        resid = n_wins * (1.0 - p)
        grad = np.zeros(n)
        np.add.at(grad, win_i, resid)
        np.add.at(grad, lose_j, -resid)
        grad -= lam * theta

        weight = n_wins * p * (1.0 - p)
        hess = np.zeros((n, n))
        np.add.at(hess, (win_i, win_i), weight)
        np.add.at(hess, (lose_j, lose_j), weight)
        np.add.at(hess, (win_i, lose_j), -weight)
        np.add.at(hess, (lose_j, win_i), -weight)
        hess[np.diag_indices(n)] += lam

        step = np.linalg.solve(hess, grad)
        f0 = _penalized_ll(theta, win_i, lose_j, n_wins, lam)
        t = 1.0
        while t > 1e-10:
            cand = theta + t * step
            if _penalized_ll(cand, win_i, lose_j, n_wins, lam) >= f0 - 1e-12:
                break
            t *= 0.5
        theta = theta + t * step
        max_update = float(np.max(np.abs(t * step)))
        if max_update < opts.tol:
            converged = True
            break
    return theta, iterations, max_update, converged, False


def fit_bt(
    matches: list[MatchRecord],
    ids: set[str] | list[str] | tuple[str, ...],
    opts: FitOptions = FitOptions(),
) -> BtRanking:
    """Fit latent scores to the valid matches and build the total order.

    Papers with no valid match (possible after Invalid drops) get theta 0 and
    fall into the ordering by the tie-break.  The ordering sorts theta
    descending after quantizing to ``TIE_DECIMALS`` decimals; residual ties
    break by ascending id.
    """
    all_ids = sorted(set(ids))
    if not all_ids:
        raise FitError("ids must be nonempty")
    id_set = set(all_ids)
    for m in matches:
        if m.paper_a not in id_set or m.paper_b not in id_set:
            raise FitError(
                f"match references paper outside the corpus: "
                f"({m.paper_a!r}, {m.paper_b!r})"
            )

    matched_ids = sorted(
        {m.paper_a for m in matches if m.winner is not Winner.INVALID}
        | {m.paper_b for m in matches if m.winner is not Winner.INVALID}
    )
    index = {pid: k for k, pid in enumerate(matched_ids)}
    win_i, lose_j, n_wins = _aggregate(matches, index)
    n = len(matched_ids)

    if opts.l2_lambda > 0.0:
        theta_vec, iterations, max_update, converged, diverged = _fit_newton(
            win_i, lose_j, n_wins, n, opts
        )
    else:
        theta_vec, iterations, max_update, converged, diverged = _fit_mm(
            win_i, lose_j, n_wins, n, opts
        )

    theta_vec = theta_vec - theta_vec.mean()
    ll = float(np.dot(n_wins, _log_sigmoid(theta_vec[win_i] - theta_vec[lose_j])))

    theta = {pid: 0.0 for pid in all_ids}
    for pid, k in index.items():
        theta[pid] = float(theta_vec[k])
    order = order_ids(theta)
    report = FitReport(
        iterations=iterations,
        max_update=max_update,
        log_likelihood=ll,
        l2_lambda=opts.l2_lambda,
        converged=converged,
        diverged=diverged,
    )
    return BtRanking(theta=theta, order=order, fit_report=report)


def order_ids(theta: dict[str, float]) -> tuple[str, ...]:
    """Total order by score descending; scores within the tie tolerance
    (quantized to TIE_DECIMALS decimals) break by ascending id."""
    return tuple(
        sorted(theta, key=lambda pid: (-round(theta[pid], TIE_DECIMALS), pid))
    )


def rank_of(ranking: BtRanking, paper_id: str) -> int:
    """1-based position of a paper in the fitted order (1 = best)."""
    try:
        return ranking.order.index(paper_id) + 1
    except ValueError as exc:
        raise FitError(f"unknown paper id {paper_id!r}") from exc


def mann_whitney_auc(scores: dict[str, float], labels: dict[str, bool]) -> float:
    """Probability an accepted paper outranks a rejected one, ties half.

    Computed through the rank-sum identity with midranks, which agrees
    exactly (not approximately) with the definitional double loop.
    """
    ids = sorted(labels)
    missing = [pid for pid in ids if pid not in scores]
    if missing:
        raise FitError(f"no score for labeled papers {missing[:3]}")
    values = np.array([scores[pid] for pid in ids], dtype=np.float64)
    positive = np.array([bool(labels[pid]) for pid in ids])
    n_pos = int(positive.sum())
    n_neg = len(ids) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise FitError("AUC needs at least one accepted and one rejected paper")

    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(len(ids), dtype=np.float64)
    start = 0
    while start < len(ids):
        stop = start
        while stop + 1 < len(ids) and sorted_vals[stop + 1] == sorted_vals[start]:
            stop += 1
        midrank = (start + stop) / 2.0 + 1.0
        ranks[order[start : stop + 1]] = midrank
        start = stop + 1

    rank_sum_pos = float(ranks[positive].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)
