"""Command-line pipeline: matches -> fit -> report / ablate / allocate.

Runs are driven by a JSON manifest and an output directory.  Every stage
records a checksum of its inputs in ``state.json``; re-running a command with
an unchanged manifest reuses the cached stage outputs and reproduces
byte-identical results, while editing a parameter invalidates exactly the
stages downstream of it.  Judge calls are the expensive step, so nothing ever
re-queries silently: ``fit`` and the reporting commands refuse to run when
their upstream stage is stale and say which command to run instead.

Exit codes are stable per error class:

    0  success
    1  unexpected internal error
    2  invalid input (manifest, corpus, parameters, empty corpus)
    3  corrupt match log
    4  output directory locked by another invocation
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from . import figures
from .band import BandError, human_ordering, make_band, random_baseline_rho, rho_ci
from .btrank import BtRanking, FitError, FitOptions, FitReport, fit_bt, mann_whitney_auc
from .core import (
    ACCEPT_TIERS,
    ConfigError,
    Corpus,
    CorpusError,
    Decision,
    MatchLogError,
    ReviewbandError,
    VenueParams,
    atomic_write_text,
    file_digest,
    load_corpus,
    text_digest,
    truncate_text,
    write_corpus,
    write_csv,
)
from .delta import DeltaError, delta_with_ci, fit_flip_model, loo_flips
from .impact import (
    AblationGrid,
    ablate_band_fraction,
    ablate_centering,
    allocate,
    expected_improved_decisions,
    ImpactInputs,
)
from .judge import InputScope, JudgeConfig, JudgeError, SyntheticJudgeParams, build_judge, run_matches
from .scheduler import (
    ScheduleError,
    load_schedule,
    make_schedule,
    pending_matches,
    read_match_log,
    save_schedule,
)
from .sim import SimVenueParams, end_to_end_run

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_CORRUPT_LOG = 3
EXIT_LOCKED = 4

CORPUS_FILE = "corpus.jsonl"
SCHEDULE_FILE = "schedule.jsonl"
MATCHES_FILE = "matches.jsonl"
RANKING_FILE = "ranking.csv"
STATE_FILE = "state.json"
LOCK_FILE = ".lock"


class LockError(ReviewbandError):
    """Another invocation holds the output directory."""


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Manifest:
    corpus_path: Path
    corpus_format: str
    seed: int
    rounds: int
    out: Path
    judge: JudgeConfig
    scripted_fixture: Path | None
    synthetic_scores: Path | None
    noise_scale: float
    band_center: float
    band_fraction: float
    venue: dict
    min_reviews: int
    ridge: float
    fit_options: FitOptions
    fractions: tuple[float, ...]
    centers: tuple[float, ...]
    max_pages: int
    chars_per_page: int


def load_manifest(
    path: str | Path,
    out_override: str | None = None,
    seed_override: int | None = None,
) -> Manifest:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("manifest must be a JSON object")
    if "corpus" not in raw:
        raise ConfigError("manifest is missing the corpus path")

    base = path.parent

    def _resolve(p: str | None) -> Path | None:
        if not p:
            return None
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base / candidate

    judge_raw = dict(raw.get("judge", {}))
    scope = judge_raw.get("input_scope", "full_text")
    try:
        input_scope = InputScope(scope)
    except ValueError as exc:
        raise ConfigError(f"unknown input_scope {scope!r}") from exc
    judge = JudgeConfig(
        backend=judge_raw.get("backend", "scripted"),
        endpoint=judge_raw.get("endpoint", ""),
        model_name=judge_raw.get("model_name", ""),
        input_scope=input_scope,
        max_retries=int(judge_raw.get("max_retries", 2)),
        timeout=float(judge_raw.get("timeout", 60.0)),
        max_concurrency=int(judge_raw.get("max_concurrency", 4)),
        auth_header=judge_raw.get("auth_header", "Authorization"),
        api_key_env=judge_raw.get("api_key_env", "REVIEWBAND_API_KEY"),
    )

    band = dict(raw.get("band", {}))
    fit_raw = dict(raw.get("fit", {}))
    ablate_raw = dict(raw.get("ablate", {}))
    impact_raw = dict(raw.get("impact", {}))
    truncate_raw = dict(raw.get("truncate", {}))

    out = Path(out_override) if out_override else _resolve(raw.get("out", "out"))
    seed = seed_override if seed_override is not None else int(raw.get("seed", 0))

    return Manifest(
        corpus_path=_resolve(raw["corpus"]),
        corpus_format=raw.get("format", "csv"),
        seed=seed,
        rounds=int(raw.get("rounds", 40)),
        out=out,
        judge=judge,
        scripted_fixture=_resolve(judge_raw.get("scripted_fixture")),
        synthetic_scores=_resolve(judge_raw.get("synthetic_scores")),
        noise_scale=float(judge_raw.get("noise_scale", 1.0)),
        band_center=float(band.get("center", 0.75)),
        band_fraction=float(band.get("fraction", 0.3)),
        venue=dict(raw.get("venue", {})),
        min_reviews=int(impact_raw.get("min_reviews", 4)),
        ridge=float(impact_raw.get("ridge", 1e-4)),
        fit_options=FitOptions(
            l2_lambda=float(fit_raw.get("l2_lambda", 0.01)),
            tol=float(fit_raw.get("tol", 1e-8)),
            max_iters=int(fit_raw.get("max_iters", 10_000)),
        ),
        fractions=tuple(float(f) for f in ablate_raw.get("fractions", [0.1, 0.2, 0.3, 0.4, 0.5])),
        centers=tuple(float(c) for c in ablate_raw.get("centers", [0.55, 0.65, 0.75, 0.85])),
        max_pages=int(truncate_raw.get("max_pages", 10)),
        chars_per_page=int(truncate_raw.get("chars_per_page", 5000)),
    )


def _venue_params(manifest: Manifest, n_submissions: int | None = None) -> VenueParams:
    venue = manifest.venue
    if not venue:
        raise ConfigError("manifest is missing the venue block")
    n = n_submissions if n_submissions is not None else int(venue.get("n_submissions", 0))
    return VenueParams(
        n_submissions=n,
        surplus=float(venue.get("surplus", 0.3)),
        r_min=int(venue.get("r_min", 3)),
        acceptance_rate=float(venue.get("acceptance_rate", 0.25)),
        decoy_fraction=float(venue.get("decoy_fraction", 0.25)),
    )


# ---------------------------------------------------------------------------
# stage state and locking
# ---------------------------------------------------------------------------

def _load_state(outdir: Path) -> dict:
    state_path = outdir / STATE_FILE
    if not state_path.exists():
        return {}
    return json.loads(state_path.read_text(encoding="utf-8"))


def _save_state(outdir: Path, state: dict) -> None:
    atomic_write_text(outdir / STATE_FILE, json.dumps(state, indent=2, sort_keys=True) + "\n")


def _stage_key(payload: dict) -> str:
    return text_digest(json.dumps(payload, sort_keys=True))


def _stage_fresh(state: dict, name: str, key: str, outdir: Path, outputs: list[str]) -> bool:
    entry = state.get(name)
    if not entry or entry.get("key") != key:
        return False
    return all((outdir / f).exists() for f in outputs)


@contextmanager
def _lock(outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    lock_path = outdir / LOCK_FILE
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockError(
            f"output directory is locked by another invocation ({lock_path}); "
            "remove the lock file if that run is dead"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        try:
            os.unlink(lock_path)
        except FileNotFoundError:
            pass


@contextmanager
def _stage(name: str):
    try:
        yield
    except ReviewbandError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def _corpus_digest(corpus: Corpus) -> str:
    payload = json.dumps(
        [
            {
                "id": p.id,
                "title": p.title,
                "abstract": p.abstract,
                "body_text": p.body_text,
                "decision": p.decision.value,
                "reviewer_scores": list(p.reviewer_scores),
            }
            for p in corpus.papers
        ],
        sort_keys=True,
    )
    return text_digest(payload)


def _ensure_corpus_stage(manifest: Manifest, state: dict) -> Corpus:
    """Materialize the truncated corpus in the output directory."""
    with _stage("corpus"):
        corpus = load_corpus(manifest.corpus_path, manifest.corpus_format, manifest.seed)
        if len(corpus) == 0:
            raise CorpusError(f"corpus is empty: {manifest.corpus_path}")
        truncated = Corpus(
            papers=tuple(
                truncate_text(p, manifest.max_pages, manifest.chars_per_page)
                for p in corpus.papers
            ),
            seed=corpus.seed,
        )
        key = _stage_key(
            {
                "corpus": _corpus_digest(truncated),
                "max_pages": manifest.max_pages,
                "chars_per_page": manifest.chars_per_page,
            }
        )
        if not _stage_fresh(state, "corpus", key, manifest.out, [CORPUS_FILE]):
            write_corpus(truncated, manifest.out / CORPUS_FILE, "jsonl")
            state["corpus"] = {"key": key, "outputs": [CORPUS_FILE]}
            _save_state(manifest.out, state)
        return truncated


def _ensure_schedule_stage(manifest: Manifest, state: dict, corpus: Corpus):
    with _stage("schedule"):
        key = _stage_key(
            {
                "corpus": state["corpus"]["key"],
                "seed": manifest.seed,
                "rounds": manifest.rounds,
            }
        )
        schedule_path = manifest.out / SCHEDULE_FILE
        if _stage_fresh(state, "schedule", key, manifest.out, [SCHEDULE_FILE]):
            return load_schedule(schedule_path)
        schedule = make_schedule(corpus, manifest.rounds, manifest.seed)
        save_schedule(schedule, schedule_path)
        state["schedule"] = {"key": key, "outputs": [SCHEDULE_FILE]}
        _save_state(manifest.out, state)
        return schedule


def _matches_key(manifest: Manifest, state: dict) -> str:
    fixture_digest = ""
    if manifest.scripted_fixture is not None and manifest.scripted_fixture.exists():
        fixture_digest = file_digest(manifest.scripted_fixture)
    scores_digest = ""
    if manifest.synthetic_scores is not None and manifest.synthetic_scores.exists():
        scores_digest = file_digest(manifest.synthetic_scores)
    return _stage_key(
        {
            "schedule": state["schedule"]["key"],
            "backend": manifest.judge.backend,
            "endpoint": manifest.judge.endpoint,
            "model": manifest.judge.model_name,
            "scope": manifest.judge.input_scope.value,
            "max_retries": manifest.judge.max_retries,
            "fixture": fixture_digest,
            "scores": scores_digest,
            "noise_scale": manifest.noise_scale,
            "seed": manifest.seed,
        }
    )


def _read_synthetic_scores(path: Path) -> dict[str, float]:
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as handle:
        reader = _csv.DictReader(handle)
        if not reader.fieldnames or {"id", "score"} - set(reader.fieldnames):
            raise ConfigError(f"{path}: synthetic scores need columns id,score")
        return {row["id"]: float(row["score"]) for row in reader}


def cmd_matches(manifest: Manifest, render_figures: bool = True) -> int:
    state = _load_state(manifest.out)
    corpus = _ensure_corpus_stage(manifest, state)
    schedule = _ensure_schedule_stage(manifest, state, corpus)

    with _stage("matches"):
        key = _matches_key(manifest, state)
        log_path = manifest.out / MATCHES_FILE
        if log_path.exists():
            # The log is append-only; it stays usable when the schedule grew
            # (extra rounds extend a prefix-stable schedule) but a log entry
            # outside the current schedule means the pairing inputs changed.
            try:
                pending_matches(schedule, read_match_log(log_path))
            except MatchLogError as exc:
                raise MatchLogError(
                    f"{exc}; the match log is append-only, so start a fresh "
                    "output directory (or restore the old manifest)"
                ) from exc
        synthetic = None
        if manifest.judge.backend == "synthetic":
            if manifest.synthetic_scores is None:
                raise ConfigError(
                    "synthetic backend needs judge.synthetic_scores (CSV id,score)"
                )
            synthetic = SyntheticJudgeParams(
                true_scores=_read_synthetic_scores(manifest.synthetic_scores),
                noise_scale=manifest.noise_scale,
            )
        judge = build_judge(
            manifest.judge,
            synthetic=synthetic,
            scripted_fixture=manifest.scripted_fixture,
        )
        ran = run_matches(
            corpus, schedule, manifest.judge, judge, log_path, manifest.seed
        )
        log = read_match_log(log_path)
        still_pending = pending_matches(schedule, log)
        state["matches"] = {
            "key": key,
            "outputs": [MATCHES_FILE],
            "complete": not still_pending,
            "log_digest": file_digest(log_path),
        }
        _save_state(manifest.out, state)
        print(f"matches: ran {ran} battles, {len(still_pending)} pending, log {log_path}")
        return EXIT_OK


def _require_matches(manifest: Manifest, state: dict) -> None:
    entry = state.get("matches")
    if not entry or not (manifest.out / MATCHES_FILE).exists():
        raise ConfigError("no match log yet; run 'reviewband matches' first")
    if entry.get("key") != _matches_key(manifest, state):
        raise ConfigError(
            "match log is stale for this manifest; run 'reviewband matches' first"
        )
    if not entry.get("complete"):
        raise ConfigError(
            "match log is incomplete; run 'reviewband matches' until no pairs are pending"
        )


def cmd_fit(manifest: Manifest, render_figures: bool = True) -> int:
    state = _load_state(manifest.out)
    corpus = _ensure_corpus_stage(manifest, state)
    _ensure_schedule_stage(manifest, state, corpus)
    _require_matches(manifest, state)

    with _stage("fit"):
        key = _stage_key(
            {
                "matches": state["matches"]["log_digest"],
                "l2_lambda": manifest.fit_options.l2_lambda,
                "tol": manifest.fit_options.tol,
                "max_iters": manifest.fit_options.max_iters,
            }
        )
        if _stage_fresh(state, "fit", key, manifest.out, [RANKING_FILE]):
            print(f"fit: cached ranking at {manifest.out / RANKING_FILE}")
            return EXIT_OK
        log = read_match_log(manifest.out / MATCHES_FILE)
        ranking = fit_bt(log, corpus.ids(), manifest.fit_options)
        rows = [
            (pid, ranking.theta[pid], rank)
            for rank, pid in enumerate(ranking.order, start=1)
        ]
        write_csv(manifest.out / RANKING_FILE, ("id", "theta", "rank"), rows)
        report = ranking.fit_report
        state["fit"] = {
            "key": key,
            "outputs": [RANKING_FILE],
            "converged": report.converged,
            "diverged": report.diverged,
            "iterations": report.iterations,
        }
        _save_state(manifest.out, state)
        status = "converged" if report.converged else "did not converge"
        print(
            f"fit: {status} after {report.iterations} iterations "
            f"(max update {report.max_update:.3g}), ranking at {manifest.out / RANKING_FILE}"
        )
        return EXIT_OK


def _load_ranking(outdir: Path) -> BtRanking:
    import csv as _csv

    theta: dict[str, float] = {}
    order: list[str] = []
    with open(outdir / RANKING_FILE, newline="", encoding="utf-8") as handle:
        for row in _csv.DictReader(handle):
            theta[row["id"]] = float(row["theta"])
            order.append(row["id"])
    report = FitReport(0, 0.0, 0.0, 0.0, True, False)
    return BtRanking(theta=theta, order=tuple(order), fit_report=report)


def _require_fit(manifest: Manifest, state: dict) -> None:
    if "fit" not in state or not (manifest.out / RANKING_FILE).exists():
        raise ConfigError("no ranking yet; run 'reviewband fit' first")
    expected = _stage_key(
        {
            "matches": state.get("matches", {}).get("log_digest", ""),
            "l2_lambda": manifest.fit_options.l2_lambda,
            "tol": manifest.fit_options.tol,
            "max_iters": manifest.fit_options.max_iters,
        }
    )
    if state["fit"].get("key") != expected:
        raise ConfigError("ranking is stale for this manifest; run 'reviewband fit' first")


def _accept_labels(corpus: Corpus) -> dict[str, bool]:
    return {
        p.id: p.decision in ACCEPT_TIERS
        for p in corpus.papers
        if p.decision is not Decision.UNKNOWN
    }


def cmd_report(manifest: Manifest, render_figures: bool = True) -> int:
    state = _load_state(manifest.out)
    corpus = _ensure_corpus_stage(manifest, state)
    _ensure_schedule_stage(manifest, state, corpus)
    _require_matches(manifest, state)
    _require_fit(manifest, state)

    with _stage("report"):
        ranking = _load_ranking(manifest.out)
        human = human_ordering(corpus)
        common = frozenset(ranking.order) & frozenset(human.order)
        llm_common = tuple(pid for pid in ranking.order if pid in common)
        human_common = tuple(pid for pid in human.order if pid in common)

        band_llm = make_band(llm_common, manifest.band_center, manifest.band_fraction)
        band_human = make_band(human_common, manifest.band_center, manifest.band_fraction)
        k_overlap = len(band_llm.member_set() & band_human.member_set())
        m = len(band_llm.members)
        rho_hat, rho_lo, rho_hi = rho_ci(k_overlap, m)
        baseline = random_baseline_rho(manifest.band_fraction)
        write_csv(
            manifest.out / "report_rho.csv",
            ("center", "fraction", "k_overlap", "m", "rho", "ci_lo", "ci_hi", "baseline"),
            [
                (
                    manifest.band_center,
                    manifest.band_fraction,
                    k_overlap,
                    m,
                    rho_hat,
                    rho_lo,
                    rho_hi,
                    baseline,
                )
            ],
        )

        flip_rows = [
            (p.reviewer_scores, p.decision)
            for p in corpus.papers
            if p.decision is not Decision.UNKNOWN and p.reviewer_scores
        ]
        model = fit_flip_model(flip_rows, ridge=manifest.ridge)
        eligible = [
            (p.id, p.reviewer_scores)
            for p in corpus.papers
            if p.decision is not Decision.UNKNOWN
        ]
        counts = loo_flips(
            eligible,
            model,
            band_human.member_set(),
            min_reviews=manifest.min_reviews,
            universe=frozenset(pid for pid, _ in eligible),
        )
        delta, se, d_lo, d_hi = delta_with_ci(counts)
        write_csv(
            manifest.out / "report_delta.csv",
            (
                "band_fraction", "center", "delta_B", "n_B", "delta_notB",
                "n_notB", "delta", "se", "ci_lo", "ci_hi",
            ),
            [
                (
                    manifest.band_fraction,
                    manifest.band_center,
                    counts.rate_b,
                    counts.trials_b,
                    counts.rate_not_b,
                    counts.trials_not_b,
                    delta,
                    se,
                    d_lo,
                    d_hi,
                )
            ],
        )

        venue = _venue_params(manifest)
        inputs = ImpactInputs(rho=rho_hat, delta=delta, n=venue.n_submissions, s=venue.surplus)
        write_csv(
            manifest.out / "report_impact.csv",
            ("rho", "delta", "n", "s", "band_fraction", "expected_improved_decisions"),
            [
                (
                    rho_hat,
                    delta,
                    venue.n_submissions,
                    venue.surplus,
                    manifest.band_fraction,
                    expected_improved_decisions(inputs),
                )
            ],
        )

        labels = _accept_labels(corpus)
        auc = mann_whitney_auc(ranking.theta, labels)
        n_pos = sum(1 for v in labels.values() if v)
        write_csv(
            manifest.out / "report_auc.csv",
            ("rounds", "n_pos", "n_neg", "auc"),
            [(manifest.rounds, n_pos, len(labels) - n_pos, auc)],
        )

        band_rows = [
            (pid, band_llm.hi_rank - i, "llm") for i, pid in enumerate(band_llm.members)
        ] + [
            (pid, band_human.hi_rank - i, "human")
            for i, pid in enumerate(band_human.members)
        ]
        write_csv(manifest.out / "report_bands.csv", ("id", "rank", "source"), band_rows)

        if render_figures:
            figures.report_figure(
                {"rho": rho_hat, "ci_lo": rho_lo, "ci_hi": rho_hi, "baseline": baseline},
                {"delta": delta, "ci_lo": d_lo, "ci_hi": d_hi},
                manifest.out / "report.png",
            )
        print(
            f"report: rho={rho_hat:.4f} [{rho_lo:.4f}, {rho_hi:.4f}] vs baseline "
            f"{baseline:.2f}; delta={delta:.4f} [{d_lo:.4f}, {d_hi:.4f}]; "
            f"expected improved decisions "
            f"{expected_improved_decisions(inputs):.2f} at N={venue.n_submissions}"
        )
        return EXIT_OK


def cmd_ablate(manifest: Manifest, render_figures: bool = True) -> int:
    state = _load_state(manifest.out)
    corpus = _ensure_corpus_stage(manifest, state)
    _ensure_schedule_stage(manifest, state, corpus)
    _require_matches(manifest, state)
    _require_fit(manifest, state)

    with _stage("ablate"):
        ranking = _load_ranking(manifest.out)
        human = human_ordering(corpus)
        venue = _venue_params(manifest)
        grid = AblationGrid(fractions=manifest.fractions, centers=manifest.centers)

        fraction_rows = ablate_band_fraction(
            ranking.order,
            human.order,
            corpus,
            grid.fractions,
            manifest.band_center,
            venue.n_submissions,
            min_reviews=manifest.min_reviews,
            ridge=manifest.ridge,
        )
        header = (
            "fraction", "center", "k_overlap", "m", "rho", "rho_ci_lo", "rho_ci_hi",
            "baseline", "delta", "delta_se", "delta_ci_lo", "delta_ci_hi", "n",
            "expected_improved",
        )
        write_csv(
            manifest.out / "ablate_fraction.csv",
            header,
            [[row[k] for k in header] for row in fraction_rows],
        )
        plot_rows = []
        for row in fraction_rows:
            plot_rows.append(
                ("rho", row["fraction"], row["rho"], row["rho_ci_lo"], row["rho_ci_hi"], row["baseline"])
            )
        for row in fraction_rows:
            plot_rows.append(
                (
                    "expected_improved", row["fraction"], row["expected_improved"],
                    None, None, 0.0,
                )
            )
        write_csv(
            manifest.out / "ablate_fraction_plotdata.csv",
            ("series", "x", "y", "ci_lo", "ci_hi", "baseline"),
            plot_rows,
        )

        centering_rows = ablate_centering(
            ranking.order, human.order, grid.centers, manifest.band_fraction
        )
        header_c = (
            "center", "fraction", "k_overlap", "m", "rho", "rho_ci_lo", "rho_ci_hi",
            "baseline",
        )
        write_csv(
            manifest.out / "ablate_centering.csv",
            header_c,
            [[row[k] for k in header_c] for row in centering_rows],
        )
        write_csv(
            manifest.out / "ablate_centering_plotdata.csv",
            ("series", "x", "y", "ci_lo", "ci_hi", "baseline"),
            [
                ("rho", row["center"], row["rho"], row["rho_ci_lo"], row["rho_ci_hi"], row["baseline"])
                for row in centering_rows
            ],
        )

        if render_figures:
            figures.fraction_ablation_figure(fraction_rows, manifest.out / "ablate_fraction.png")
            figures.centering_ablation_figure(centering_rows, manifest.out / "ablate_centering.png")
        print(
            f"ablate: {len(fraction_rows)} fraction rows, {len(centering_rows)} "
            f"centering rows written to {manifest.out}"
        )
        return EXIT_OK


def cmd_allocate(manifest: Manifest, render_figures: bool = True) -> int:
    state = _load_state(manifest.out)
    corpus = _ensure_corpus_stage(manifest, state)
    _ensure_schedule_stage(manifest, state, corpus)
    _require_matches(manifest, state)
    _require_fit(manifest, state)

    with _stage("allocate"):
        ranking = _load_ranking(manifest.out)
        venue = _venue_params(manifest, n_submissions=len(ranking.order))
        plan = allocate(ranking, venue, manifest.seed)
        rows = [
            (pid, plan.counts[pid], plan.reasons[pid]) for pid in ranking.order
        ]
        write_csv(manifest.out / "allocation.csv", ("id", "review_count", "reason"), rows)
        print(
            f"allocate: budget {plan.budget} extra reviews "
            f"({plan.band_slots} banded, {plan.decoy_slots} decoys), "
            f"total reviews {plan.total_reviews()}"
        )
        return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    outdir = Path(args.out)
    with _lock(outdir):
        with _stage("simulate"):
            rows = []
            for i in range(args.seeds):
                params = SimVenueParams(
                    n_papers=args.papers,
                    quality_spread=args.quality_spread,
                    reviewer_noise=args.reviewer_noise,
                    reviews_per_paper=args.reviews_per_paper,
                    acceptance_rate=args.acceptance_rate,
                    judge_noise=args.judge_noise,
                    seed=args.seed + i,
                    borderline_fraction=args.fraction,
                    discretize_scores=args.discretize,
                )
                rows.append(
                    end_to_end_run(
                        params,
                        args.rounds,
                        judge_policy=args.judge_policy,
                        n_flip_trials=args.flip_trials,
                    )
                )
            header = tuple(rows[0].keys())
            write_csv(
                outdir / "simulate.csv",
                header,
                [[row[k] for k in header] for row in rows],
            )
            if not args.no_figures:
                figures.simulate_figure(rows, outdir / "simulate.png")
            mean_rho = sum(r["rho"] for r in rows) / len(rows)
            print(
                f"simulate: {len(rows)} seeds, mean rho {mean_rho:.4f} "
                f"(baseline {rows[0]['baseline']:.2f}), report at {outdir / 'simulate.csv'}"
            )
            return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_manifest_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", required=True, help="path to the run manifest JSON")
    parser.add_argument("--out", default=None, help="output directory (overrides manifest)")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument(
        "--no-figures", action="store_true", help="skip PNG figure rendering"
    )


def _add_judge_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["http", "synthetic", "scripted"], default=None)
    parser.add_argument("--endpoint", default=None, help="http judge endpoint URL")
    parser.add_argument("--model", default=None, help="judge model name")
    parser.add_argument(
        "--scope", choices=["full_text", "abstract_only"], default=None,
        help="judge input scope",
    )
    parser.add_argument("--concurrency", type=int, default=None)
    parser.add_argument("--retries", type=int, default=None)
    parser.add_argument("--scripted-fixture", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reviewband",
        description=(
            "Rank papers with pairwise judge battles, find the borderline "
            "band, and plan marginal review allocation."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("matches", "run scheduled pairwise battles (resumable)"),
        ("fit", "fit latent scores to the match log and export the ranking"),
        ("report", "band overlap, flip-rate difference, impact and AUC reports"),
        ("ablate", "band-fraction and centering sweeps over the cached ranking"),
        ("allocate", "emit the marginal review allocation plan"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_manifest_args(p)
        if name == "matches":
            _add_judge_overrides(p)

    sim = sub.add_parser("simulate", help="synthetic venue runs with oracle columns")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--papers", type=int, default=100)
    sim.add_argument("--rounds", type=int, default=40)
    sim.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    sim.add_argument("--seed", type=int, default=0, help="base seed")
    sim.add_argument("--quality-spread", type=float, default=1.0)
    sim.add_argument("--reviewer-noise", type=float, default=1.0)
    sim.add_argument("--reviews-per-paper", type=int, default=4)
    sim.add_argument("--acceptance-rate", type=float, default=0.25)
    sim.add_argument("--judge-noise", type=float, default=1.0)
    sim.add_argument("--fraction", type=float, default=0.3, help="borderline band fraction")
    sim.add_argument("--discretize", action="store_true", help="round scores to a 1-10 scale")
    sim.add_argument("--judge-policy", choices=["synthetic", "random"], default="synthetic")
    sim.add_argument("--flip-trials", type=int, default=2000)
    sim.add_argument("--no-figures", action="store_true")

    return parser


def _apply_judge_overrides(manifest: Manifest, args: argparse.Namespace) -> Manifest:
    from dataclasses import replace as dc_replace

    judge = manifest.judge
    updates = {}
    if getattr(args, "backend", None):
        updates["backend"] = args.backend
    if getattr(args, "endpoint", None):
        updates["endpoint"] = args.endpoint
    if getattr(args, "model", None):
        updates["model_name"] = args.model
    if getattr(args, "scope", None):
        updates["input_scope"] = InputScope(args.scope)
    if getattr(args, "concurrency", None):
        updates["max_concurrency"] = args.concurrency
    if getattr(args, "retries", None) is not None:
        updates["max_retries"] = args.retries
    if updates:
        judge = dc_replace(judge, **updates)
        manifest = dc_replace(manifest, judge=judge)
    if getattr(args, "scripted_fixture", None):
        manifest = dc_replace(manifest, scripted_fixture=Path(args.scripted_fixture))
    return manifest


_PIPELINE_COMMANDS = {
    "matches": cmd_matches,
    "fit": cmd_fit,
    "report": cmd_report,
    "ablate": cmd_ablate,
    "allocate": cmd_allocate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        manifest = load_manifest(args.manifest, args.out, args.seed)
        manifest = _apply_judge_overrides(manifest, args)
        command = _PIPELINE_COMMANDS[args.command]
        with _lock(manifest.out):
            return command(manifest, render_figures=not args.no_figures)
    except LockError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOCKED
    except MatchLogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CORRUPT_LOG
    except (
        ConfigError, CorpusError, ScheduleError, FitError, BandError,
        DeltaError, JudgeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ReviewbandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
