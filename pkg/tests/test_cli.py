from __future__ import annotations

import json

from reviewband.cli import (
    EXIT_CORRUPT_LOG,
    EXIT_INPUT,
    EXIT_LOCKED,
    EXIT_OK,
    main,
)
from tests.conftest import make_pipeline_fixtures


def _run(*argv):
    return main(list(argv))


def _edit_manifest(path, **updates):
    manifest = json.loads(path.read_text())
    manifest.update(updates)
    path.write_text(json.dumps(manifest, indent=2))


def _mtimes(outdir, names):
    return {name: (outdir / name).stat().st_mtime_ns for name in names}


STAGE_FILES = ("corpus.jsonl", "schedule.jsonl", "matches.jsonl", "ranking.csv")


def test_full_pipeline_produces_all_outputs(pipeline_fixtures, tmp_path):
    manifest = str(pipeline_fixtures)
    assert _run("matches", "--manifest", manifest) == EXIT_OK
    assert _run("fit", "--manifest", manifest) == EXIT_OK
    assert _run("report", "--manifest", manifest) == EXIT_OK
    assert _run("ablate", "--manifest", manifest) == EXIT_OK
    assert _run("allocate", "--manifest", manifest) == EXIT_OK
    out = tmp_path / "out"
    expected = [
        "schedule.jsonl", "matches.jsonl", "ranking.csv",
        "report_rho.csv", "report_delta.csv", "report_impact.csv",
        "report_auc.csv", "report_bands.csv", "report.png",
        "ablate_fraction.csv", "ablate_fraction_plotdata.csv", "ablate_fraction.png",
        "ablate_centering.csv", "ablate_centering_plotdata.csv", "ablate_centering.png",
        "allocation.csv",
    ]
    for name in expected:
        assert (out / name).exists(), name
    header = (out / "allocation.csv").read_text().splitlines()[0]
    assert header == "id,review_count,reason"


def test_empty_corpus_exits_2(tmp_path):
    (tmp_path / "corpus.jsonl").write_text("")
    manifest = tmp_path / "manifest.json"
    manifest.write_text(
        json.dumps({"corpus": "corpus.jsonl", "format": "jsonl", "out": "out"})
    )
    assert _run("matches", "--manifest", str(manifest)) == EXIT_INPUT


def test_report_before_fit_exits_2(pipeline_fixtures, capsys):
    assert _run("report", "--manifest", str(pipeline_fixtures)) == EXIT_INPUT
    assert "matches" in capsys.readouterr().err


def test_fit_before_matches_exits_2(pipeline_fixtures):
    assert _run("fit", "--manifest", str(pipeline_fixtures)) == EXIT_INPUT


def test_rerun_unchanged_manifest_reuses_cached_stages(pipeline_fixtures, tmp_path):
    manifest = str(pipeline_fixtures)
    for command in ("matches", "fit"):
        assert _run(command, "--manifest", manifest) == EXIT_OK
    out = tmp_path / "out"
    before = _mtimes(out, STAGE_FILES)
    for command in ("matches", "fit"):
        assert _run(command, "--manifest", manifest) == EXIT_OK
    assert _mtimes(out, STAGE_FILES) == before


def test_editing_rounds_recomputes_only_downstream(pipeline_fixtures, tmp_path):
    manifest_path = pipeline_fixtures
    for command in ("matches", "fit"):
        assert _run(command, "--manifest", str(manifest_path)) == EXIT_OK
    out = tmp_path / "out"
    before = _mtimes(out, STAGE_FILES)
    with open(out / "matches.jsonl") as handle:
        lines_before = sum(1 for _ in handle)

    _edit_manifest(manifest_path, rounds=8)
    for command in ("matches", "fit"):
        assert _run(command, "--manifest", str(manifest_path)) == EXIT_OK
    after = _mtimes(out, STAGE_FILES)

    assert after["corpus.jsonl"] == before["corpus.jsonl"]  # upstream cached
    assert after["schedule.jsonl"] != before["schedule.jsonl"]
    assert after["matches.jsonl"] != before["matches.jsonl"]
    assert after["ranking.csv"] != before["ranking.csv"]
    with open(out / "matches.jsonl") as handle:
        lines_after = sum(1 for _ in handle)
    assert lines_after == lines_before + 2 * 15  # appended, never rewritten


def test_report_detects_stale_matches_after_manifest_edit(pipeline_fixtures, capsys):
    manifest_path = pipeline_fixtures
    for command in ("matches", "fit", "report"):
        assert _run(command, "--manifest", str(manifest_path)) == EXIT_OK
    _edit_manifest(manifest_path, rounds=9)
    assert _run("report", "--manifest", str(manifest_path)) == EXIT_INPUT
    assert "matches" in capsys.readouterr().err


def test_shrinking_rounds_is_a_corrupt_log(pipeline_fixtures):
    manifest_path = pipeline_fixtures
    assert _run("matches", "--manifest", str(manifest_path)) == EXIT_OK
    _edit_manifest(manifest_path, rounds=2)
    assert _run("matches", "--manifest", str(manifest_path)) == EXIT_CORRUPT_LOG


def test_byte_identical_outputs_across_directories(tmp_path):
    manifest_a = make_pipeline_fixtures(tmp_path / "a")
    manifest_b = make_pipeline_fixtures(tmp_path / "b")
    for manifest in (manifest_a, manifest_b):
        for command in ("matches", "fit", "report", "ablate", "allocate"):
            assert _run(command, "--manifest", str(manifest)) == EXIT_OK
    compare = [
        "schedule.jsonl", "matches.jsonl", "ranking.csv", "report_rho.csv",
        "report_delta.csv", "report_impact.csv", "report_auc.csv",
        "ablate_fraction.csv", "ablate_centering.csv", "allocation.csv",
    ]
    for name in compare:
        a = (tmp_path / "a" / "out" / name).read_bytes()
        b = (tmp_path / "b" / "out" / name).read_bytes()
        assert a == b, name


def test_lock_file_blocks_second_invocation(pipeline_fixtures, tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    (out / ".lock").write_text("999999")
    assert _run("matches", "--manifest", str(pipeline_fixtures)) == EXIT_LOCKED


def test_corrupt_match_log_line_exits_3(pipeline_fixtures, tmp_path):
    assert _run("matches", "--manifest", str(pipeline_fixtures)) == EXIT_OK
    log = tmp_path / "out" / "matches.jsonl"
    with open(log, "a") as handle:
        handle.write('{"round": 0, "paper_a": "p000", "paper_b": "p000"}\n')
    assert _run("fit", "--manifest", str(pipeline_fixtures)) == EXIT_CORRUPT_LOG


def test_missing_manifest_exits_2(tmp_path):
    assert _run("matches", "--manifest", str(tmp_path / "none.json")) == EXIT_INPUT


def test_csv_corpus_with_body_files(tmp_path):
    bodies = tmp_path / "bodies"
    bodies.mkdir()
    (bodies / "p1.txt").write_text("body one " * 100)
    (tmp_path / "corpus.csv").write_text(
        "id,title,abstract,body_path,decision,scores\n"
        "p1,One,First.,bodies/p1.txt,Accept,5;6;7;8\n"
        "p2,Two,Second.,,Reject,3;4;2;5\n"
        "p3,Three,Third.,,Reject,4;4;5;3\n"
        "p4,Four,Fourth.,,Accept,7;6;6;8\n"
    )
    (tmp_path / "responses.jsonl").write_text(
        json.dumps({"response": '{"choice": "paper_1"}'}) + "\n"
    )
    manifest = tmp_path / "manifest.json"
    manifest.write_text(
        json.dumps(
            {
                "corpus": "corpus.csv",
                "format": "csv",
                "seed": 3,
                "rounds": 4,
                "out": "out",
                "judge": {"backend": "scripted", "scripted_fixture": "responses.jsonl"},
                "venue": {"n_submissions": 1000, "surplus": 0.3, "r_min": 3,
                          "acceptance_rate": 0.5},
            }
        )
    )
    assert _run("matches", "--manifest", str(manifest)) == EXIT_OK
    assert _run("fit", "--manifest", str(manifest)) == EXIT_OK
    ranking = (tmp_path / "out" / "ranking.csv").read_text().splitlines()
    assert ranking[0] == "id,theta,rank"
    assert len(ranking) == 5


def test_synthetic_backend_via_scores_file(tmp_path):
    make_pipeline_fixtures(tmp_path)
    scores = tmp_path / "scores.csv"
    lines = ["id,score"] + [f"p{i:03d},{(30 - i) / 10.0}" for i in range(30)]
    scores.write_text("\n".join(lines) + "\n")
    manifest_path = tmp_path / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["judge"] = {
        "backend": "synthetic",
        "synthetic_scores": "scores.csv",
        "noise_scale": 0.5,
    }
    manifest_path.write_text(json.dumps(manifest))
    assert _run("matches", "--manifest", str(manifest_path)) == EXIT_OK
    assert _run("fit", "--manifest", str(manifest_path)) == EXIT_OK


def test_simulate_command(tmp_path):
    out = tmp_path / "sim"
    code = _run(
        "simulate", "--out", str(out), "--papers", "60", "--rounds", "8",
        "--seeds", "2", "--seed", "4", "--flip-trials", "200",
    )
    assert code == EXIT_OK
    lines = (out / "simulate.csv").read_text().splitlines()
    assert lines[0].startswith("seed,n_papers,rounds,judge_policy,rho")
    assert len(lines) == 3
    assert (out / "simulate.png").exists()


def test_simulate_no_figures(tmp_path):
    out = tmp_path / "sim"
    code = _run(
        "simulate", "--out", str(out), "--papers", "60", "--rounds", "4",
        "--seeds", "1", "--flip-trials", "50", "--no-figures",
    )
    assert code == EXIT_OK
    assert not (out / "simulate.png").exists()


def test_judge_flag_overrides(pipeline_fixtures, tmp_path):
    # pointing --scripted-fixture at a one-line default fixture still works
    fixture = tmp_path / "always1.jsonl"
    fixture.write_text(json.dumps({"response": '{"choice": "paper_1"}'}) + "\n")
    assert (
        _run(
            "matches", "--manifest", str(pipeline_fixtures),
            "--scripted-fixture", str(fixture), "--concurrency", "2",
        )
        == EXIT_OK
    )
