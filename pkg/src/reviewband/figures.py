"""Figure rendering for report, ablation and simulator outputs.

Figures are drawn with the object-oriented matplotlib API (no pyplot state)
and saved as PNG files next to the CSVs they visualize.  Every series that
appears in a figure is also available in the companion plot-data CSV, so
external plotting tools are never locked out.
"""

from __future__ import annotations

from pathlib import Path

from matplotlib.figure import Figure

_PNG_METADATA = {"Software": "reviewband"}


def _save(fig: Figure, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)


def report_figure(rho_row: dict, delta_row: dict, path: str | Path) -> None:
    """Headline estimates: overlap vs baseline and the flip-rate difference."""
    fig = Figure(figsize=(8.0, 3.5))
    ax_rho, ax_delta = fig.subplots(1, 2)

    ax_rho.errorbar(
        [0.0],
        [rho_row["rho"]],
        yerr=[[rho_row["rho"] - rho_row["ci_lo"]], [rho_row["ci_hi"] - rho_row["rho"]]],
        fmt="o",
        capsize=4,
        color="tab:blue",
        label="estimate",
    )
    ax_rho.axhline(rho_row["baseline"], linestyle="--", color="gray", label="random baseline")
    ax_rho.set_xlim(-1, 1)
    ax_rho.set_xticks([])
    ax_rho.set_ylabel("borderline overlap fraction")
    ax_rho.set_title("band overlap")
    ax_rho.legend(loc="best", fontsize=8)

    ax_delta.errorbar(
        [0.0],
        [delta_row["delta"]],
        yerr=[
            [delta_row["delta"] - delta_row["ci_lo"]],
            [delta_row["ci_hi"] - delta_row["delta"]],
        ],
        fmt="o",
        capsize=4,
        color="tab:orange",
        label="estimate",
    )
    ax_delta.axhline(0.0, linestyle="--", color="gray")
    ax_delta.set_xlim(-1, 1)
    ax_delta.set_xticks([])
    ax_delta.set_ylabel("flip-rate difference")
    ax_delta.set_title("marginal review value")
    ax_delta.legend(loc="best", fontsize=8)

    fig.tight_layout()
    _save(fig, path)


def fraction_ablation_figure(rows: list[dict], path: str | Path) -> None:
    """Expected improvements and overlap as the band fraction sweeps."""
    fractions = [row["fraction"] for row in rows]
    fig = Figure(figsize=(8.0, 3.5))
    ax_imp, ax_rho = fig.subplots(1, 2)

    improved = [row["expected_improved"] for row in rows]
    if any(v is not None for v in improved):
        xs = [x for x, v in zip(fractions, improved) if v is not None]
        ys = [v for v in improved if v is not None]
        ax_imp.plot(xs, ys, marker="o", color="tab:green")
    ax_imp.axhline(0.0, linestyle="--", color="gray")
    ax_imp.set_xlabel("marginal reviewer fraction")
    ax_imp.set_ylabel("expected net improved decisions")
    ax_imp.set_title("impact vs marginal fraction")

    rhos = [row["rho"] for row in rows]
    los = [row["rho_ci_lo"] for row in rows]
    his = [row["rho_ci_hi"] for row in rows]
    baselines = [row["baseline"] for row in rows]
    ax_rho.plot(fractions, rhos, marker="o", color="tab:blue", label="overlap")
    ax_rho.fill_between(fractions, los, his, alpha=0.2, color="tab:blue")
    ax_rho.plot(fractions, baselines, linestyle="--", color="gray", label="random baseline")
    ax_rho.set_xlabel("band fraction")
    ax_rho.set_ylabel("borderline overlap fraction")
    ax_rho.set_title("overlap vs band fraction")
    ax_rho.legend(loc="best", fontsize=8)

    fig.tight_layout()
    _save(fig, path)


def centering_ablation_figure(rows: list[dict], path: str | Path) -> None:
    """Overlap as the band center sweeps, with the fixed-fraction baseline."""
    centers = [row["center"] for row in rows]
    fig = Figure(figsize=(5.0, 3.5))
    ax = fig.subplots()
    ax.plot(centers, [row["rho"] for row in rows], marker="o", color="tab:blue", label="overlap")
    ax.fill_between(
        centers,
        [row["rho_ci_lo"] for row in rows],
        [row["rho_ci_hi"] for row in rows],
        alpha=0.2,
        color="tab:blue",
    )
    ax.axhline(rows[0]["baseline"], linestyle="--", color="gray", label="random baseline")
    ax.set_xlabel("band center (acceptance percentile)")
    ax.set_ylabel("borderline overlap fraction")
    ax.set_title("overlap vs band center")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def simulate_figure(rows: list[dict], path: str | Path) -> None:
    """Estimator-versus-oracle scatter across simulated seeds."""
    fig = Figure(figsize=(8.0, 3.5))
    ax_rho, ax_delta = fig.subplots(1, 2)

    ax_rho.scatter(
        [row["true_overlap"] for row in rows],
        [row["rho"] for row in rows],
        color="tab:blue",
        s=22,
    )
    lims = (0.0, 1.0)
    ax_rho.plot(lims, lims, linestyle=":", color="gray")
    ax_rho.set_xlabel("true borderline overlap")
    ax_rho.set_ylabel("estimated overlap")
    ax_rho.set_title("overlap: estimate vs oracle")

    pairs = [
        (row["true_delta"], row["delta"])
        for row in rows
        if row.get("true_delta") is not None and row.get("delta") is not None
    ]
    if pairs:
        ax_delta.scatter([p[0] for p in pairs], [p[1] for p in pairs], color="tab:orange", s=22)
    ax_delta.axhline(0.0, linestyle=":", color="gray")
    ax_delta.axvline(0.0, linestyle=":", color="gray")
    ax_delta.set_xlabel("true flip-rate difference")
    ax_delta.set_ylabel("estimated flip-rate difference")
    ax_delta.set_title("marginal value: estimate vs oracle")

    fig.tight_layout()
    _save(fig, path)
