from __future__ import annotations

import pytest

from reviewband.core import Corpus, MatchLogError, MatchRecord, PaperRecord, Winner
from reviewband.scheduler import (
    ScheduleError,
    dropped_pairs,
    load_schedule,
    make_schedule,
    pending_matches,
    save_schedule,
)


def _corpus(n):
    return Corpus(
        papers=tuple(PaperRecord(id=f"p{i:04d}", title="t", abstract="a") for i in range(n)),
        seed=0,
    )


def test_thousand_papers_forty_rounds_is_twenty_thousand_pairs():
    schedule = make_schedule(_corpus(1000), 40, seed=1)
    assert schedule.n_pairs() == 20_000
    assert schedule.byes == ()


def test_two_papers_always_same_pair():
    schedule = make_schedule(_corpus(2), 3, seed=5)
    pairs = [frozenset(p) for _, p in schedule.iter_pairs()]
    assert pairs == [frozenset({"p0000", "p0001"})] * 3


def test_odd_corpus_byes_rotate():
    schedule = make_schedule(_corpus(5), 5, seed=2)
    assert schedule.n_pairs() == 10
    byes = [b for _, b in schedule.byes]
    assert len(byes) == 5
    assert len(set(byes)) == 5  # nobody byes twice before everyone has once


def test_rounds_cover_every_paper_once():
    corpus = _corpus(20)
    schedule = make_schedule(corpus, 10, seed=3)
    for pairs in schedule.rounds:
        assert len(pairs) == 10
        seen = [pid for pair in pairs for pid in pair]
        assert sorted(seen) == sorted(corpus.ids())


def test_no_pair_repeats_within_round():
    schedule = make_schedule(_corpus(30), 25, seed=4)
    for pairs in schedule.rounds:
        keys = [frozenset(p) for p in pairs]
        assert len(keys) == len(set(keys))


def test_schedule_is_pure_function_of_inputs():
    a = make_schedule(_corpus(17), 6, seed=9)
    b = make_schedule(_corpus(17), 6, seed=9)
    assert a == b
    c = make_schedule(_corpus(17), 6, seed=10)
    assert a != c


def test_extending_rounds_preserves_prefix():
    short = make_schedule(_corpus(16), 4, seed=7)
    long = make_schedule(_corpus(16), 9, seed=7)
    assert long.rounds[:4] == short.rounds


def test_too_small_corpus():
    with pytest.raises(ScheduleError):
        make_schedule(_corpus(1), 3, seed=0)


def test_save_load_round_trip(tmp_path):
    schedule = make_schedule(_corpus(9), 4, seed=11)
    path = tmp_path / "schedule.jsonl"
    save_schedule(schedule, path)
    assert load_schedule(path) == schedule


# ---------------------------------------------------------------------------
# pending / resume
# ---------------------------------------------------------------------------

def _record(round_index, pair, winner=Winner.A):
    return MatchRecord(round=round_index, paper_a=pair[0], paper_b=pair[1], winner=winner)


def test_pending_empty_log_returns_all():
    schedule = make_schedule(_corpus(6), 3, seed=0)
    pending = pending_matches(schedule, [])
    assert pending == list(schedule.iter_pairs())


def test_pending_complete_log_returns_nothing():
    schedule = make_schedule(_corpus(6), 3, seed=0)
    log = [_record(r, p) for r, p in schedule.iter_pairs()]
    assert pending_matches(schedule, log) == []


def test_pending_reversed_orientation_counts_as_settled():
    schedule = make_schedule(_corpus(4), 1, seed=0)
    log = [_record(r, (p[1], p[0])) for r, p in schedule.iter_pairs()]
    assert pending_matches(schedule, log) == []


def test_invalid_entry_requeued_once_then_dropped():
    schedule = make_schedule(_corpus(4), 1, seed=0)
    (first_round, first_pair) = next(schedule.iter_pairs())
    log = [_record(first_round, first_pair, Winner.INVALID)]
    pending = pending_matches(schedule, log)
    assert (first_round, first_pair) in pending

    log.append(_record(first_round, first_pair, Winner.INVALID))
    pending = pending_matches(schedule, log)
    assert (first_round, first_pair) not in pending
    assert (first_round, first_pair) in dropped_pairs(schedule, log)


def test_unscheduled_log_entry_is_corrupt():
    schedule = make_schedule(_corpus(4), 1, seed=0)
    log = [_record(99, ("p0000", "p0001"))]
    with pytest.raises(MatchLogError):
        pending_matches(schedule, log)
