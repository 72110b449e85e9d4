"""Pluggable pairwise judges and the single-match execution loop.

A judge backend turns a rendered two-paper prompt into raw response text:
``http`` POSTs a minimal chat-completion request to a configurable gateway,
``synthetic`` samples outcomes from latent scores (the simulation oracle),
and ``scripted`` replays responses from a fixture for bit-exact tests.

Presentation order is randomized per match to cancel position bias; the
recorded winner is always mapped back to the original pair orientation.
"""

from __future__ import annotations

import json
import os
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

from .core import (
    ConfigError,
    Corpus,
    MatchRecord,
    PaperRecord,
    ReviewbandError,
    Winner,
    derive_seed,
    read_jsonl,
    sigmoid,
    substream,
    text_digest,
)
from .scheduler import Schedule, append_match, attempt_counts, pending_matches, read_match_log


class JudgeError(ReviewbandError):
    """Judge misconfiguration (fails fast, never recorded as Invalid)."""


class TransportError(ReviewbandError):
    """Retryable transport-level failure when talking to an HTTP judge."""


class Choice(Enum):
    PAPER_1 = "paper_1"
    PAPER_2 = "paper_2"
    UNPARSEABLE = "unparseable"


class InputScope(Enum):
    FULL_TEXT = "full_text"
    ABSTRACT_ONLY = "abstract_only"


@dataclass(frozen=True, slots=True)
class JudgeConfig:
    backend: str = "scripted"
    endpoint: str = ""
    model_name: str = ""
    input_scope: InputScope = InputScope.FULL_TEXT
    max_retries: int = 2
    timeout: float = 60.0
    max_concurrency: int = 4
    auth_header: str = "Authorization"
    api_key_env: str = "REVIEWBAND_API_KEY"
    backoff_base: float = 1.0
    backoff_cap: float = 32.0

    def __post_init__(self) -> None:
        if self.backend not in ("http", "synthetic", "scripted"):
            raise ConfigError(f"unknown judge backend {self.backend!r}")
        if self.max_concurrency < 1:
            raise ConfigError("max_concurrency must be >= 1")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.backend == "http" and not self.endpoint:
            raise ConfigError("http backend requires an endpoint URL")


# ---------------------------------------------------------------------------
# prompt rendering
# ---------------------------------------------------------------------------

INSTRUCTIONS = (
    "You are judging two anonymized paper submissions, labeled paper_1 and "
    "paper_2. Decide which submission is the stronger piece of research "
    "overall, weighing soundness, originality, clarity and likely "
    "significance.\n\n"
    'Reply with a single JSON object of the form {"choice": "paper_1"} or '
    '{"choice": "paper_2"}. Output nothing else.'
)


@dataclass(frozen=True, slots=True)
class JudgePrompt:
    paper_1: str
    paper_2: str
    instructions: str = INSTRUCTIONS

    @property
    def text(self) -> str:
        return (
            f"{self.instructions}\n\n"
            f"=== paper_1 ===\n{self.paper_1}\n\n"
            f"=== paper_2 ===\n{self.paper_2}\n"
        )


def _render_block(paper: PaperRecord, scope: InputScope) -> str:
    # Both slots use this exact template so there is no positional asymmetry.
    block = f"Title: {paper.title}\n\nAbstract:\n{paper.abstract}\n"
    if scope is InputScope.FULL_TEXT:
        block += f"\nMain text:\n{paper.body_text}\n"
    return block


def render_prompt(
    pair: tuple[PaperRecord, PaperRecord], scope: InputScope, swap: bool
) -> JudgePrompt:
    """Render the fixed two-paper prompt, optionally swapping slot order."""
    for paper in pair:
        if not paper.title and not paper.abstract:
            raise JudgeError(f"paper {paper.id!r} has neither title nor abstract")
    first, second = (pair[1], pair[0]) if swap else pair
    return JudgePrompt(
        paper_1=_render_block(first, scope),
        paper_2=_render_block(second, scope),
    )


def parse_choice(response_text: str) -> Choice:
    """Extract the verdict from the first well-formed JSON object in the text.

    Total over arbitrary input: surrounding prose is ignored and anything
    that is not a clean {"choice": "paper_1" | "paper_2"} object maps to
    UNPARSEABLE rather than raising.
    """
    try:
        decoder = json.JSONDecoder()
        start = response_text.find("{")
        while start != -1:
            try:
                obj, _ = decoder.raw_decode(response_text, start)
            except ValueError:
                start = response_text.find("{", start + 1)
                continue
            if isinstance(obj, dict):
                choice = obj.get("choice")
                if choice == "paper_1":
                    return Choice.PAPER_1
                if choice == "paper_2":
                    return Choice.PAPER_2
            return Choice.UNPARSEABLE
        return Choice.UNPARSEABLE
    except Exception:
        return Choice.UNPARSEABLE


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

def synthetic_decide(
    theta_a: float, theta_b: float, noise_scale: float, draw: float
) -> Winner:
    """Pick a winner from latent scores under comparison noise.

    A wins iff ``draw < sigmoid((theta_a - theta_b) / noise_scale)``, so the
    generative process matches the pairwise win-probability model the fitter
    assumes, which is what makes consistency testable.
    """
    if noise_scale <= 0.0:
        raise ConfigError("noise_scale must be positive")
    p_a = sigmoid((theta_a - theta_b) / noise_scale)
    return Winner.A if draw < p_a else Winner.B


@dataclass(frozen=True, slots=True)
class SyntheticJudgeParams:
    true_scores: dict[str, float]
    noise_scale: float = 1.0
    decision_model: str = "bt"  # "bt" or "thurstone" (misspecification mode)

    def __post_init__(self) -> None:
        if self.noise_scale <= 0.0:
            raise ConfigError("noise_scale must be positive")
        if self.decision_model not in ("bt", "thurstone"):
            raise ConfigError(f"unknown decision model {self.decision_model!r}")


class SyntheticJudge:
    """Noisy judge over known latent scores; always answers parseable JSON."""

    def __init__(self, params: SyntheticJudgeParams):
        self.params = params

    def respond(
        self,
        presented: tuple[PaperRecord, PaperRecord],
        prompt: JudgePrompt,
        rng: np.random.Generator,
    ) -> str:
        try:
            t1 = self.params.true_scores[presented[0].id]
            t2 = self.params.true_scores[presented[1].id]
        except KeyError as exc:
            raise JudgeError(f"no synthetic score for paper {exc}") from exc
        if self.params.decision_model == "thurstone":
            # Gaussian pairwise noise instead of logistic: deliberately
            # misspecified relative to the fitting model.
            noise = self.params.noise_scale * np.sqrt(2.0) * rng.standard_normal()
            first_wins = (t1 - t2) + noise > 0.0
        else:
            winner = synthetic_decide(t1, t2, self.params.noise_scale, rng.random())
            first_wins = winner is Winner.A
        verdict = "paper_1" if first_wins else "paper_2"
        return json.dumps({"choice": verdict})


class ScriptedJudge:
    """Replays canned responses keyed by the presented pair of paper ids.

    The fixture is JSONL with lines ``{"paper_1": id, "paper_2": id,
    "response": text}``; a line with only ``response`` sets the default used
    for unkeyed pairs.  Enables bit-exact integration tests with no network.
    """

    def __init__(
        self,
        responses: dict[tuple[str, str], str] | None = None,
        default: str | None = None,
    ):
        self.responses = dict(responses or {})
        self.default = default

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "ScriptedJudge":
        responses: dict[tuple[str, str], str] = {}
        default = None
        for lineno, obj in read_jsonl(path):
            if "response" not in obj:
                raise ConfigError(f"{path}: line {lineno}: missing response field")
            if "paper_1" in obj and "paper_2" in obj:
                responses[(str(obj["paper_1"]), str(obj["paper_2"]))] = str(obj["response"])
            else:
                default = str(obj["response"])
        return cls(responses, default)

    def respond(
        self,
        presented: tuple[PaperRecord, PaperRecord],
        prompt: JudgePrompt,
        rng: np.random.Generator,
    ) -> str:
        key = (presented[0].id, presented[1].id)
        if key in self.responses:
            return self.responses[key]
        if self.default is not None:
            return self.default
        raise JudgeError(f"scripted fixture has no response for pair {key}")


class HttpJudge:
    """Minimal chat-completion-style client for any compatible gateway.

    The request is ``{"model": ..., "messages": [...], "temperature": 0}``.
    The API key is read from an environment variable, never from config
    files; when the variable is unset no auth header is sent.
    """

    def __init__(self, config: JudgeConfig):
        if not config.endpoint:
            raise JudgeError("http judge requires an endpoint")
        self.config = config

    def respond(
        self,
        presented: tuple[PaperRecord, PaperRecord],
        prompt: JudgePrompt,
        rng: np.random.Generator,
    ) -> str:
        payload = json.dumps(
            {
                "model": self.config.model_name,
                "messages": [{"role": "user", "content": prompt.text}],
                "temperature": 0,
            }
        ).encode("utf-8")
        request = urllib.request.Request(
            self.config.endpoint,
            data=payload,
            headers=self._headers(),
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=self.config.timeout) as resp:
                body = resp.read().decode("utf-8", errors="replace")
        except urllib.error.HTTPError as exc:
            raise TransportError(f"HTTP {exc.code} from judge endpoint") from exc
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise TransportError(f"transport failure: {exc}") from exc
        try:
            envelope = json.loads(body)
            return str(envelope["choices"][0]["message"]["content"])
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion envelope: {exc}") from exc

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            if self.config.auth_header.lower() == "authorization":
                headers[self.config.auth_header] = f"Bearer {key}"
            else:
                headers[self.config.auth_header] = key
        return headers


def build_judge(
    config: JudgeConfig,
    synthetic: SyntheticJudgeParams | None = None,
    scripted_fixture: str | Path | None = None,
):
    if config.backend == "http":
        return HttpJudge(config)
    if config.backend == "synthetic":
        if synthetic is None:
            raise ConfigError("synthetic backend requires SyntheticJudgeParams")
        return SyntheticJudge(synthetic)
    if scripted_fixture is None:
        raise ConfigError("scripted backend requires a response fixture")
    return ScriptedJudge.from_jsonl(scripted_fixture)


# ---------------------------------------------------------------------------
# match execution
# ---------------------------------------------------------------------------

def run_match(
    pair: tuple[PaperRecord, PaperRecord],
    config: JudgeConfig,
    seed: int,
    judge,
    round_index: int = 0,
    force_swap: bool | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> MatchRecord:
    """Execute one pairwise battle and map the verdict back through the swap.

    The presentation order is swapped with probability 1/2 (seeded).  After
    ``max_retries`` additional attempts all ending in transport failures or
    unparseable responses, the record is marked Invalid rather than raising.
    """
    rng = substream(seed, "match")
    swap = bool(rng.random() < 0.5) if force_swap is None else force_swap
    presented = (pair[1], pair[0]) if swap else pair
    prompt = render_prompt(pair, config.input_scope, swap)

    raw = ""
    choice = Choice.UNPARSEABLE
    for attempt in range(config.max_retries + 1):
        try:
            raw = judge.respond(presented, prompt, rng)
        except TransportError:
            if attempt < config.max_retries:
                delay = min(config.backoff_base * (2.0 ** attempt), config.backoff_cap)
                sleep(delay)
            continue
        choice = parse_choice(raw)
        if choice is not Choice.UNPARSEABLE:
            break

    if choice is Choice.UNPARSEABLE:
        winner = Winner.INVALID
    elif choice is Choice.PAPER_1:
        winner = Winner.B if swap else Winner.A
    else:
        winner = Winner.A if swap else Winner.B

    return MatchRecord(
        round=round_index,
        paper_a=pair[0].id,
        paper_b=pair[1].id,
        winner=winner,
        presented_order_swapped=swap,
        judge_name=config.model_name or config.backend,
        raw_response_digest=text_digest(raw),
    )


def run_matches(
    corpus: Corpus,
    schedule: Schedule,
    config: JudgeConfig,
    judge,
    log_path: str | Path,
    seed: int,
    sleep: Callable[[float], None] = time.sleep,
) -> int:
    """Run every pending scheduled match and append results to the log.

    Matches execute on a thread pool bounded by ``max_concurrency`` but are
    appended in schedule order, so the log is byte-identical however the
    parallel calls interleave.  Per-match seeds derive from the run seed and
    the pair identity, so a resumed run reproduces what a straight-through
    run would have produced.
    """
    by_id = {p.id: p for p in corpus.papers}
    log = read_match_log(log_path)
    attempts = attempt_counts(schedule, log)
    pending = pending_matches(schedule, log)
    if not pending:
        return 0

    tasks = []
    for round_index, (a, b) in pending:
        if a not in by_id or b not in by_id:
            raise JudgeError(f"scheduled paper missing from corpus: {a!r} or {b!r}")
        attempt = attempts.get((round_index, frozenset((a, b))), 0)
        match_seed = derive_seed(seed, f"match:{round_index}:{a}:{b}:{attempt}")
        tasks.append((round_index, (a, b), match_seed))

    with ThreadPoolExecutor(max_workers=config.max_concurrency) as pool:
        futures = [
            pool.submit(
                run_match,
                (by_id[a], by_id[b]),
                config,
                match_seed,
                judge,
                round_index,
                None,
                sleep,
            )
            for round_index, (a, b), match_seed in tasks
        ]
        for future in futures:
            append_match(log_path, future.result())
    return len(tasks)
