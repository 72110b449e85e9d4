"""Domain types, corpus ingestion and deterministic randomness.

Everything downstream (scheduling, judging, fitting, reporting) builds on the
types defined here.  All types are immutable after construction and safe to
share across threads.  Every stochastic step in the toolkit draws from a named
substream of a single corpus-level seed, so equal seeds and inputs yield
byte-identical outputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np


class ReviewbandError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(ReviewbandError):
    """Corpus file missing, malformed or violating an invariant."""


class MatchLogError(ReviewbandError):
    """Match log is corrupt or inconsistent with the schedule."""


class ConfigError(ReviewbandError):
    """Invalid manifest, parameters or judge configuration."""


# ---------------------------------------------------------------------------
# decisions and tier aliasing
# ---------------------------------------------------------------------------

class Decision(Enum):
    REJECT = "Reject"
    ACCEPT = "Accept"
    SPOTLIGHT = "Spotlight"
    ORAL = "Oral"
    UNKNOWN = "Unknown"


TIER_RANK = {
    Decision.REJECT: 0,
    Decision.ACCEPT: 1,
    Decision.SPOTLIGHT: 2,
    Decision.ORAL: 3,
}

ACCEPT_TIERS = frozenset({Decision.ACCEPT, Decision.SPOTLIGHT, Decision.ORAL})


def normalize_decision(raw: str | None) -> Decision:
    """Map a free-form outcome label onto a decision tier.

    Public review dumps use inconsistent labels ("Accept (poster)",
    "Withdrawn", ...).  Matching is case-insensitive substring search in
    decreasing tier precedence; anything unmatched maps to UNKNOWN.
    """
    if raw is None:
        return Decision.UNKNOWN
    if not isinstance(raw, str):
        raise CorpusError(f"decision must be a string, got {type(raw).__name__!r}")
    low = raw.lower()
    if "oral" in low:
        return Decision.ORAL
    if "spotlight" in low:
        return Decision.SPOTLIGHT
    if "accept" in low:
        return Decision.ACCEPT
    if "reject" in low or "withdraw" in low:
        return Decision.REJECT
    return Decision.UNKNOWN


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class PaperRecord:
    """One submission: identity, text payload and human outcome metadata."""

    id: str
    title: str = ""
    abstract: str = ""
    body_text: str = ""
    decision: Decision = Decision.UNKNOWN
    reviewer_scores: tuple[float, ...] = ()
    n_pages_available: int | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("paper id must be nonempty")
        if self.n_pages_available is not None and self.n_pages_available < 0:
            raise CorpusError(f"paper {self.id!r}: n_pages_available must be >= 0")

    @property
    def mean_score(self) -> float | None:
        if not self.reviewer_scores:
            return None
        return float(sum(self.reviewer_scores)) / len(self.reviewer_scores)


@dataclass(frozen=True, slots=True)
class Corpus:
    """Ordered collection of papers plus the seed for all stochastic steps."""

    papers: tuple[PaperRecord, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        seen: dict[str, int] = {}
        for idx, paper in enumerate(self.papers):
            if paper.id in seen:
                raise CorpusError(
                    f"duplicate paper id {paper.id!r} at positions "
                    f"{seen[paper.id]} and {idx}"
                )
            seen[paper.id] = idx

    def __len__(self) -> int:
        return len(self.papers)

    def __iter__(self) -> Iterator[PaperRecord]:
        return iter(self.papers)

    def ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.papers)

    def get(self, paper_id: str) -> PaperRecord:
        for p in self.papers:
            if p.id == paper_id:
                return p
        raise KeyError(paper_id)


class Winner(Enum):
    A = "A"
    B = "B"
    INVALID = "Invalid"


@dataclass(frozen=True, slots=True)
class MatchRecord:
    """One pairwise battle between two papers.

    ``winner`` always refers to the original (paper_a, paper_b) orientation,
    regardless of the order the papers were presented to the judge.
    ``winner == Winner.INVALID`` means the judge response could not be parsed
    after retries.
    """

    round: int
    paper_a: str
    paper_b: str
    winner: Winner
    presented_order_swapped: bool = False
    judge_name: str = ""
    raw_response_digest: str = ""

    def __post_init__(self) -> None:
        if self.paper_a == self.paper_b:
            raise MatchLogError(f"match pairs a paper with itself: {self.paper_a!r}")
        if self.round < 0:
            raise MatchLogError("round index must be >= 0")

    def pair_key(self) -> tuple[int, frozenset[str]]:
        return (self.round, frozenset((self.paper_a, self.paper_b)))

    def to_json_dict(self) -> dict:
        return {
            "round": self.round,
            "paper_a": self.paper_a,
            "paper_b": self.paper_b,
            "winner": self.winner.value,
            "presented_order_swapped": self.presented_order_swapped,
            "judge_name": self.judge_name,
            "raw_response_digest": self.raw_response_digest,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "MatchRecord":
        try:
            return cls(
                round=int(obj["round"]),
                paper_a=str(obj["paper_a"]),
                paper_b=str(obj["paper_b"]),
                winner=Winner(obj["winner"]),
                presented_order_swapped=bool(obj.get("presented_order_swapped", False)),
                judge_name=str(obj.get("judge_name", "")),
                raw_response_digest=str(obj.get("raw_response_digest", "")),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise MatchLogError(f"malformed match record: {exc}") from exc


@dataclass(frozen=True, slots=True)
class VenueParams:
    """Venue-level allocation parameters.

    ``surplus`` is the mean number of extra reviews per paper beyond
    ``r_min``, expressed as a fraction of the submission count.
    """

    n_submissions: int
    surplus: float
    r_min: int
    acceptance_rate: float
    decoy_fraction: float = 0.25

    def __post_init__(self) -> None:
        if self.n_submissions < 1:
            raise ConfigError("n_submissions must be positive")
        if not 0.0 < self.surplus < 1.0:
            raise ConfigError("surplus must lie in (0, 1)")
        if self.r_min < 1:
            raise ConfigError("r_min must be positive")
        if not 0.0 < self.acceptance_rate < 1.0:
            raise ConfigError("acceptance_rate must lie in (0, 1)")
        if not 0.0 <= self.decoy_fraction <= 1.0:
            raise ConfigError("decoy_fraction must lie in [0, 1]")


# ---------------------------------------------------------------------------
# numeric helpers shared across modules
# ---------------------------------------------------------------------------

def sigmoid(x: float) -> float:
    """Numerically stable logistic function."""
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def round_half_up(x: float) -> int:
    """Round to nearest integer with ties going up (not banker's rounding)."""
    return int(math.floor(x + 0.5))


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent random generator derived from a seed and a stream name.

    All randomness in the toolkit flows through named substreams of one
    corpus-level seed, so every stage is individually reproducible and
    insensitive to the order other stages consume randomness.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(
        np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, key])
    )


def derive_seed(seed: int, name: str) -> int:
    """Stable 63-bit child seed for handing to a subprocess or a match."""
    payload = f"{seed & 0xFFFFFFFFFFFFFFFF}:{name}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big") >> 1


# ---------------------------------------------------------------------------
# text truncation
# ---------------------------------------------------------------------------

DEFAULT_CHARS_PER_PAGE = 5000


def truncate_text(
    paper: PaperRecord,
    max_pages: int,
    chars_per_page: int = DEFAULT_CHARS_PER_PAGE,
) -> PaperRecord:
    """Cut body_text to a page budget, breaking at the preceding whitespace.

    A "page" is a fixed character budget because ingestion is text-based.
    Title and abstract are never truncated.
    """
    if max_pages < 1:
        raise ConfigError("max_pages must be positive")
    if chars_per_page < 1:
        raise ConfigError("chars_per_page must be positive")
    budget = max_pages * chars_per_page
    body = paper.body_text
    if len(body) <= budget:
        return paper
    head = body[:budget]
    cut = max(head.rfind(" "), head.rfind("\n"), head.rfind("\t"))
    if cut > 0:
        head = head[:cut]
    return replace(paper, body_text=head)


# ---------------------------------------------------------------------------
# corpus ingestion
# ---------------------------------------------------------------------------

CSV_COLUMNS = ("id", "title", "abstract", "body_path", "decision", "scores")


def _parse_scores(raw: str, where: str) -> tuple[float, ...]:
    parts = [part.strip() for part in raw.split(";") if part.strip()]
    scores = []
    for part in parts:
        try:
            scores.append(float(part))
        except ValueError as exc:
            raise CorpusError(f"{where}: non-numeric score {part!r}") from exc
    return tuple(scores)


def _check_unique(ids_lines: dict[str, int], paper_id: str, lineno: int, path: Path) -> None:
    if paper_id in ids_lines:
        raise CorpusError(
            f"{path}: duplicate id {paper_id!r} on lines "
            f"{ids_lines[paper_id]} and {lineno}"
        )
    ids_lines[paper_id] = lineno


def _load_csv(path: Path, seed: int) -> Corpus:
    papers: list[PaperRecord] = []
    ids_lines: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise CorpusError(f"{path}: missing CSV columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            paper_id = (row["id"] or "").strip()
            if not paper_id:
                raise CorpusError(f"{path}: line {lineno}: empty id")
            _check_unique(ids_lines, paper_id, lineno, path)
            body_text = ""
            body_path = (row["body_path"] or "").strip()
            if body_path:
                body_file = path.parent / body_path
                if not body_file.is_file():
                    raise CorpusError(
                        f"{path}: line {lineno}: body file not found: {body_file}"
                    )
                body_text = body_file.read_text(encoding="utf-8")
            papers.append(
                PaperRecord(
                    id=paper_id,
                    title=row["title"] or "",
                    abstract=row["abstract"] or "",
                    body_text=body_text,
                    decision=normalize_decision(row["decision"] or None),
                    reviewer_scores=_parse_scores(
                        row["scores"] or "", f"{path}: line {lineno}"
                    ),
                )
            )
    return Corpus(papers=tuple(papers), seed=seed)


def _load_jsonl(path: Path, seed: int) -> Corpus:
    papers: list[PaperRecord] = []
    ids_lines: dict[str, int] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or "id" not in obj:
                raise CorpusError(f"{path}: line {lineno}: record must be an object with an id")
            paper_id = str(obj["id"])
            _check_unique(ids_lines, paper_id, lineno, path)
            raw_scores = obj.get("reviewer_scores", [])
            if not isinstance(raw_scores, list):
                raise CorpusError(f"{path}: line {lineno}: reviewer_scores must be a list")
            scores = []
            for value in raw_scores:
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise CorpusError(
                        f"{path}: line {lineno}: non-numeric score {value!r}"
                    )
                scores.append(float(value))
            pages = obj.get("n_pages_available")
            try:
                decision = normalize_decision(obj.get("decision"))
            except CorpusError as exc:
                raise CorpusError(f"{path}: line {lineno}: {exc}") from exc
            papers.append(
                PaperRecord(
                    id=paper_id,
                    title=str(obj.get("title", "")),
                    abstract=str(obj.get("abstract", "")),
                    body_text=str(obj.get("body_text", "")),
                    decision=decision,
                    reviewer_scores=tuple(scores),
                    n_pages_available=int(pages) if pages is not None else None,
                )
            )
    return Corpus(papers=tuple(papers), seed=seed)


def load_corpus(path: str | Path, format: str, seed: int = 0) -> Corpus:
    """Load a corpus from the CSV or JSONL interchange format.

    Rows with malformed scores or duplicate ids are rejected with an error
    naming the offending line.
    """
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"corpus file not found: {path}")
    if format == "csv":
        return _load_csv(path, seed)
    if format == "jsonl":
        return _load_jsonl(path, seed)
    raise ConfigError(f"unknown corpus format {format!r} (expected csv or jsonl)")


def write_corpus(corpus: Corpus, path: str | Path, format: str) -> None:
    """Write a corpus back out in the interchange format.

    CSV mode stores nonempty bodies in a ``<name>_bodies/`` directory next to
    the CSV file; JSONL inlines them.
    """
    path = Path(path)
    if format == "jsonl":
        lines = []
        for p in corpus.papers:
            obj: dict = {
                "id": p.id,
                "title": p.title,
                "abstract": p.abstract,
                "body_text": p.body_text,
                "decision": p.decision.value,
                "reviewer_scores": list(p.reviewer_scores),
            }
            if p.n_pages_available is not None:
                obj["n_pages_available"] = p.n_pages_available
            lines.append(json.dumps(obj, ensure_ascii=False))
        atomic_write_text(path, "".join(line + "\n" for line in lines))
        return
    if format == "csv":
        bodies_dir = path.parent / f"{path.stem}_bodies"
        rows = []
        for p in corpus.papers:
            body_path = ""
            if p.body_text:
                bodies_dir.mkdir(parents=True, exist_ok=True)
                body_file = bodies_dir / f"{p.id}.txt"
                atomic_write_text(body_file, p.body_text)
                body_path = os.path.relpath(body_file, path.parent)
            rows.append(
                (
                    p.id,
                    p.title,
                    p.abstract,
                    body_path,
                    p.decision.value,
                    ";".join(format_float(s) for s in p.reviewer_scores),
                )
            )
        write_csv(path, CSV_COLUMNS, rows)
        return
    raise ConfigError(f"unknown corpus format {format!r} (expected csv or jsonl)")


# ---------------------------------------------------------------------------
# file plumbing: atomic writes, JSONL, digests
# ---------------------------------------------------------------------------

def format_float(x: float) -> str:
    """Deterministic shortest round-trip float formatting for CSV cells."""
    if x != x:
        return "nan"
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temp file and rename, so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)
        handle.flush()
        os.fsync(handle.fileno())
    os.replace(tmp, path)


def write_csv(path: str | Path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    out = []
    out.append(",".join(header))
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, float):
                cells.append(format_float(cell))
            elif cell is None:
                cells.append("")
            else:
                cells.append(str(cell))
        out.append(",".join(_csv_escape(c) for c in cells))
    atomic_write_text(path, "".join(line + "\n" for line in out))


def _csv_escape(cell: str) -> str:
    if any(ch in cell for ch in ',"\n'):
        return '"' + cell.replace('"', '""') + '"'
    return cell


def read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (lineno, object) for each nonempty line of a JSONL file."""
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            yield lineno, json.loads(line)


def append_jsonl(path: str | Path, obj: dict) -> None:
    """Append one record as a single flushed line (single-writer contract)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    line = json.dumps(obj, ensure_ascii=False) + "\n"
    with open(path, "a", encoding="utf-8", newline="") as handle:
        handle.write(line)
        handle.flush()
        os.fsync(handle.fileno())


def file_digest(path: str | Path) -> str:
    hasher = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            hasher.update(chunk)
    return hasher.hexdigest()


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
