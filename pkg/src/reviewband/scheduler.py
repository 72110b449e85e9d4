"""Round-based random pairing and the append-only match log.

Each round is an independent uniform random perfect matching produced by
shuffling the corpus ids and pairing adjacent entries.  For odd corpus sizes
one paper sits out per round; the bye rotates so no paper sits out twice
before every paper has sat out once.  Repeat pairs across rounds are allowed.

The match log JSONL file is the system of record for a run: it is append-only
and ``pending_matches`` reconstructs what still needs to be queried, which is
what makes interrupted runs resumable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .core import (
    Corpus,
    MatchLogError,
    MatchRecord,
    ReviewbandError,
    Winner,
    append_jsonl,
    atomic_write_text,
    read_jsonl,
    substream,
)


class ScheduleError(ReviewbandError):
    """Schedule construction failed or inputs are unusable."""


Pair = tuple[str, str]


@dataclass(frozen=True, slots=True)
class Schedule:
    """Pairings per round plus the bye paper for odd corpus sizes."""

    rounds: tuple[tuple[Pair, ...], ...]
    byes: tuple[tuple[int, str], ...] = ()

    def n_pairs(self) -> int:
        return sum(len(r) for r in self.rounds)

    def iter_pairs(self):
        """Yield (round_index, (a, b)) in schedule order."""
        for round_index, pairs in enumerate(self.rounds):
            for pair in pairs:
                yield round_index, pair

    def pair_keys(self) -> set[tuple[int, frozenset[str]]]:
        return {(r, frozenset(p)) for r, p in self.iter_pairs()}


def make_schedule(corpus: Corpus, n_rounds: int, seed: int) -> Schedule:
    """Generate ``n_rounds`` of uniform random pairings over the corpus.

    Pure function of (corpus ids, n_rounds, seed): the pairings for round r
    do not depend on how many later rounds are requested, so extending a run
    by raising n_rounds preserves the earlier rounds.
    """
    ids = list(corpus.ids())
    if len(ids) < 2:
        raise ScheduleError(f"need at least 2 papers to schedule, got {len(ids)}")
    if n_rounds < 1:
        raise ScheduleError("n_rounds must be positive")

    rng = substream(seed, "schedule")
    bye_counts = {paper_id: 0 for paper_id in ids}
    rounds: list[tuple[Pair, ...]] = []
    byes: list[tuple[int, str]] = []
    for round_index in range(n_rounds):
        perm = rng.permutation(len(ids))
        order = [ids[i] for i in perm]
        if len(order) % 2 == 1:
            fewest = min(bye_counts[p] for p in order)
            bye = next(p for p in order if bye_counts[p] == fewest)
            order.remove(bye)
            bye_counts[bye] += 1
            byes.append((round_index, bye))
        rounds.append(
            tuple((order[k], order[k + 1]) for k in range(0, len(order), 2))
        )
    return Schedule(rounds=tuple(rounds), byes=tuple(byes))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_schedule(schedule: Schedule, path: str | Path) -> None:
    """Persist as JSONL so runs are resumable and auditable."""
    lines = []
    for round_index, (a, b) in schedule.iter_pairs():
        lines.append(json.dumps({"round": round_index, "a": a, "b": b}))
    for round_index, bye in schedule.byes:
        lines.append(json.dumps({"round": round_index, "bye": bye}))
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def load_schedule(path: str | Path) -> Schedule:
    pairs_by_round: dict[int, list[Pair]] = {}
    byes: list[tuple[int, str]] = []
    for lineno, obj in read_jsonl(path):
        if "bye" in obj:
            byes.append((int(obj["round"]), str(obj["bye"])))
            continue
        try:
            pairs_by_round.setdefault(int(obj["round"]), []).append(
                (str(obj["a"]), str(obj["b"]))
            )
        except KeyError as exc:
            raise ScheduleError(f"{path}: line {lineno}: missing field {exc}") from exc
    if not pairs_by_round:
        raise ScheduleError(f"{path}: empty schedule")
    n_rounds = max(pairs_by_round) + 1
    rounds = tuple(
        tuple(pairs_by_round.get(r, ())) for r in range(n_rounds)
    )
    return Schedule(rounds=rounds, byes=tuple(sorted(byes)))


def append_match(path: str | Path, record: MatchRecord) -> None:
    append_jsonl(path, record.to_json_dict())


def read_match_log(path: str | Path) -> list[MatchRecord]:
    path = Path(path)
    if not path.exists():
        return []
    records = []
    for lineno, obj in read_jsonl(path):
        try:
            records.append(MatchRecord.from_json_dict(obj))
        except MatchLogError as exc:
            raise MatchLogError(f"{path}: line {lineno}: {exc}") from exc
    return records


# ---------------------------------------------------------------------------
# resumability
# ---------------------------------------------------------------------------

def pending_matches(
    schedule: Schedule, log: list[MatchRecord]
) -> list[tuple[int, Pair]]:
    """Scheduled pairs that still need a judge call, in schedule order.

    A pair is settled once it has a valid (non-Invalid) log entry.  An
    Invalid outcome is re-queried exactly once; after a second Invalid the
    pair is dropped from the likelihood and no longer pending.
    """
    keys = schedule.pair_keys()
    entries: dict[tuple[int, frozenset[str]], list[MatchRecord]] = {}
    for record in log:
        key = record.pair_key()
        if key not in keys:
            raise MatchLogError(
                f"log entry for round {record.round} pair "
                f"({record.paper_a!r}, {record.paper_b!r}) is not in the schedule"
            )
        entries.setdefault(key, []).append(record)

    pending: list[tuple[int, Pair]] = []
    for round_index, pair in schedule.iter_pairs():
        existing = entries.get((round_index, frozenset(pair)), [])
        if any(r.winner is not Winner.INVALID for r in existing):
            continue
        if len(existing) >= 2:
            continue
        pending.append((round_index, pair))
    return pending


def attempt_counts(
    schedule: Schedule, log: list[MatchRecord]
) -> dict[tuple[int, frozenset[str]], int]:
    """How many log entries each scheduled pair already has."""
    counts: dict[tuple[int, frozenset[str]], int] = {}
    for record in log:
        counts[record.pair_key()] = counts.get(record.pair_key(), 0) + 1
    return counts


def dropped_pairs(schedule: Schedule, log: list[MatchRecord]) -> list[tuple[int, Pair]]:
    """Pairs abandoned after two Invalid outcomes (excluded from the fit)."""
    entries: dict[tuple[int, frozenset[str]], list[MatchRecord]] = {}
    for record in log:
        entries.setdefault(record.pair_key(), []).append(record)
    dropped = []
    for round_index, pair in schedule.iter_pairs():
        existing = entries.get((round_index, frozenset(pair)), [])
        if existing and all(r.winner is Winner.INVALID for r in existing) and len(existing) >= 2:
            dropped.append((round_index, pair))
    return dropped
