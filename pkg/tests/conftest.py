from __future__ import annotations

import json
import random

import pytest


def make_pipeline_fixtures(root, n_papers=30, seed=5, rounds=6, out="out"):
    """Write a small corpus, a scripted judge fixture and a manifest.

    The scripted judge prefers the presented paper with the smaller id, a
    deterministic content-only policy, so the whole pipeline is reproducible
    byte for byte.
    """
    root.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    papers = []
    for i in range(n_papers):
        pid = f"p{i:03d}"
        quality = rng.gauss(0.0, 1.0)
        scores = [round(quality + rng.gauss(0.0, 0.8), 2) for _ in range(4)]
        papers.append((pid, quality, scores, sum(scores) / 4.0))
    accepted = {
        pid for pid, _, _, _ in sorted(papers, key=lambda r: -r[3])[: n_papers // 4]
    }
    corpus_path = root / "corpus.jsonl"
    with open(corpus_path, "w", encoding="utf-8") as handle:
        for i, (pid, _, scores, _) in enumerate(papers):
            decision = "Accept (poster)" if pid in accepted else "Reject"
            if i % 10 == 7:
                decision = "pending"  # Unknown tier: ranked but not evaluated
            record = {
                "id": pid,
                "title": f"Paper {pid}",
                "abstract": f"Abstract of {pid}.",
                "body_text": f"Body of {pid}. " * 40,
                "decision": decision,
                "reviewer_scores": scores,
            }
            handle.write(json.dumps(record) + "\n")

    responses_path = root / "responses.jsonl"
    lines = []
    ids = [pid for pid, _, _, _ in papers]
    for a in ids:
        for b in ids:
            if a == b:
                continue
            verdict = "paper_1" if a < b else "paper_2"
            lines.append(
                json.dumps(
                    {"paper_1": a, "paper_2": b, "response": json.dumps({"choice": verdict})}
                )
            )
    responses_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    manifest = {
        "corpus": "corpus.jsonl",
        "format": "jsonl",
        "seed": 11,
        "rounds": rounds,
        "out": out,
        "judge": {
            "backend": "scripted",
            "scripted_fixture": "responses.jsonl",
            "max_retries": 1,
        },
        "band": {"center": 0.75, "fraction": 0.3},
        "venue": {
            "n_submissions": 30_000,
            "surplus": 0.3,
            "r_min": 3,
            "acceptance_rate": 0.25,
            "decoy_fraction": 0.25,
        },
        "ablate": {"fractions": [0.2, 0.3, 0.4], "centers": [0.6, 0.75, 0.9]},
    }
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest_path


@pytest.fixture
def pipeline_fixtures(tmp_path):
    return make_pipeline_fixtures(tmp_path)
