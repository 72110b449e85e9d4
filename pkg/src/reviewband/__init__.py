"""Pairwise paper ranking, borderline bands and marginal review allocation.

The pipeline: schedule random pairwise battles over a submission corpus,
collect binary verdicts from a pluggable judge, fit latent scores by maximum
likelihood, locate the borderline band around the acceptance percentile, and
quantify how much targeting extra reviews at that band should improve final
decisions.  A synthetic venue simulator with brute-force oracles validates
every estimator end to end.
"""

from __future__ import annotations

from .band import (
    BorderlineBand,
    HumanOrdering,
    human_ordering,
    make_band,
    make_band_exact,
    random_baseline_rho,
    restrict_order,
    rho,
    rho_ci,
)
from .btrank import (
    BtRanking,
    FitOptions,
    FitReport,
    fit_bt,
    mann_whitney_auc,
    rank_of,
)
from .core import (
    Corpus,
    Decision,
    MatchRecord,
    PaperRecord,
    VenueParams,
    Winner,
    load_corpus,
    normalize_decision,
    substream,
    truncate_text,
    write_corpus,
)
from .delta import (
    DeltaCi,
    FlipCounts,
    FlipModel,
    delta_with_ci,
    fit_flip_model,
    loo_flips,
    paper_features,
)
from .impact import (
    AblationGrid,
    AllocationPlan,
    ImpactInputs,
    ablate_band_fraction,
    ablate_centering,
    allocate,
    expected_improved_decisions,
)
from .judge import (
    Choice,
    InputScope,
    JudgeConfig,
    JudgePrompt,
    ScriptedJudge,
    SyntheticJudge,
    SyntheticJudgeParams,
    parse_choice,
    render_prompt,
    run_match,
    run_matches,
    synthetic_decide,
)
from .scheduler import (
    Schedule,
    make_schedule,
    pending_matches,
    read_match_log,
    save_schedule,
)
from .sim import (
    SimVenue,
    SimVenueParams,
    end_to_end_run,
    generate_venue,
    true_flip_rates,
)

__version__ = "0.1.0"

__all__ = [
    "AblationGrid",
    "AllocationPlan",
    "BorderlineBand",
    "BtRanking",
    "Choice",
    "Corpus",
    "Decision",
    "DeltaCi",
    "FitOptions",
    "FitReport",
    "FlipCounts",
    "FlipModel",
    "HumanOrdering",
    "ImpactInputs",
    "InputScope",
    "JudgeConfig",
    "JudgePrompt",
    "MatchRecord",
    "PaperRecord",
    "Schedule",
    "ScriptedJudge",
    "SimVenue",
    "SimVenueParams",
    "SyntheticJudge",
    "SyntheticJudgeParams",
    "VenueParams",
    "Winner",
    "ablate_band_fraction",
    "ablate_centering",
    "allocate",
    "delta_with_ci",
    "end_to_end_run",
    "expected_improved_decisions",
    "fit_bt",
    "fit_flip_model",
    "generate_venue",
    "human_ordering",
    "load_corpus",
    "loo_flips",
    "make_band",
    "make_band_exact",
    "make_schedule",
    "mann_whitney_auc",
    "normalize_decision",
    "paper_features",
    "parse_choice",
    "pending_matches",
    "random_baseline_rho",
    "rank_of",
    "read_match_log",
    "render_prompt",
    "restrict_order",
    "rho",
    "rho_ci",
    "run_match",
    "run_matches",
    "save_schedule",
    "substream",
    "synthetic_decide",
    "true_flip_rates",
    "truncate_text",
    "write_corpus",
]
