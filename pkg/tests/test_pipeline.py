"""End-to-end runs over the shipped scripted fixtures.

Each test drives the real stage handlers through the orchestrator; only the
chat provider is scripted. Variant fixtures are derived per-test by copying a
bundle and swapping individual agent scripts.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest

from autoresearch.config import RunConfig
from autoresearch.errors import ProviderFailure, ReplayMiss
from autoresearch.orchestrator import ResearchTask, RunManifest, strip_timestamps
from autoresearch.pipeline import (
    load_advisor_report,
    mock_gateway,
    replay_gateway,
    run_pipeline,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

LEVEL1_STAGES = [
    "KnowledgeAcquisition",
    "ResourceAnalysis",
    "Planning",
    "ImplementationCycle",
    "PrototypeExperiment",
    "FullExperiment",
    "Documentation",
    "Done",
]

LEVEL2_STAGES = [
    "KnowledgeAcquisition",
    "ResourceAnalysis",
    "Ideation",
    "Planning",
    "ImplementationCycle",
    "PrototypeExperiment",
    "ImplementationCycle",
    "PrototypeExperiment",
    "FullExperiment",
    "Documentation",
    "Done",
]


def _run(fixtures: Path, run_dir: Path, config: RunConfig | None = None) -> RunManifest:
    task = ResearchTask.load(fixtures / "task.json")
    config = config or RunConfig()
    gateway = mock_gateway(fixtures, run_dir, config)
    return run_pipeline(
        task, config, run_dir=run_dir, gateway=gateway, fixtures_dir=fixtures
    )


@pytest.fixture(scope="session")
def level1_run(tmp_path_factory: pytest.TempPathFactory) -> tuple[RunManifest, Path]:
    run_dir = tmp_path_factory.mktemp("l1")
    return _run(FIXTURES / "level1", run_dir), run_dir


@pytest.fixture(scope="session")
def level2_run(tmp_path_factory: pytest.TempPathFactory) -> tuple[RunManifest, Path]:
    run_dir = tmp_path_factory.mktemp("l2")
    return _run(FIXTURES / "level2", run_dir), run_dir


# --- happy paths -----------------------------------------------------------


def test_level1_resolves(level1_run):
    manifest, _ = level1_run
    assert manifest.terminated
    assert manifest.completed
    assert manifest.termination["kind"] == "Resolved"


def test_level1_stage_sequence(level1_run):
    manifest, _ = level1_run
    assert manifest.stages() == LEVEL1_STAGES


def test_level1_artifacts_exist(level1_run):
    manifest, run_dir = level1_run
    expected = {
        "repo_selection",
        "survey_notes",
        "plan",
        "project",
        "advisor-01",
        "prototype-01",
        "full-01",
        "analysis",
        "manuscript",
        "outline",
    }
    assert expected <= set(manifest.artifacts)
    for name, rel in manifest.artifacts.items():
        assert not Path(rel).is_absolute()
        assert (run_dir / rel).exists(), f"missing artifact {name}: {rel}"


def test_level1_manuscript_has_structure(level1_run):
    _, run_dir = level1_run
    tex = (run_dir / "paper" / "main.tex").read_text(encoding="utf-8")
    assert tex.count("\\section{") == 1
    assert "\\subsection{" in tex
    assert "\\end{document}" in tex


def test_level1_experiment_metrics_numeric(level1_run):
    _, run_dir = level1_run
    results = json.loads(
        (run_dir / "workspace" / "project" / "results.json").read_text(encoding="utf-8")
    )
    assert results
    assert all(isinstance(v, (int, float)) for v in results.values())


def test_level1_manifest_roundtrips(level1_run):
    manifest, run_dir = level1_run
    loaded = RunManifest.load(run_dir)
    assert loaded.to_dict() == manifest.to_dict()
    task = json.loads((run_dir / "task.json").read_text(encoding="utf-8"))
    assert task["task_id"] == manifest.task_id


def test_level1_transcripts_recorded(level1_run):
    manifest, run_dir = level1_run
    store = run_dir / "transcripts" / "transcripts.ndjson"
    assert store.is_file()
    assert len(store.read_text(encoding="utf-8").splitlines()) > 10
    assert "implement-cycle-1" in manifest.transcript_ids


def test_level2_resolves_with_ideation_and_loopback(level2_run):
    manifest, _ = level2_run
    assert manifest.completed
    assert manifest.stages() == LEVEL2_STAGES
    failures = [e for e in manifest.events if e["event"] == "PrototypeFailed"]
    assert len(failures) == 1
    assert failures[0]["to"] == "ImplementationCycle"


def test_level2_records_both_attempts(level2_run):
    manifest, run_dir = level2_run
    assert {"idea", "advisor-01", "advisor-02", "prototype-01", "prototype-02"} <= set(
        manifest.artifacts
    )
    first = json.loads(
        (run_dir / "runs" / "attempt-01" / "outcome.json").read_text(encoding="utf-8")
    )
    second = json.loads(
        (run_dir / "runs" / "attempt-02" / "outcome.json").read_text(encoding="utf-8")
    )
    assert first["status"] == "nonzero_exit"
    assert second["status"] == "ok"
    report = load_advisor_report(run_dir / "runs" / "attempt-01" / "advisor.json")
    statuses = {f["concept"]: f["status"] for f in report["findings"]}
    assert "implemented" not in statuses.values()


def test_level2_idea_file_has_all_sections(level2_run):
    _, run_dir = level2_run
    idea = json.loads((run_dir / "idea.json").read_text(encoding="utf-8"))
    assert set(idea) == {
        "motivation",
        "existing_methods",
        "proposed_method",
        "technical_details",
        "challenges",
        "expected_outcomes",
    }
    assert all(v for v in idea.values())


# --- determinism -----------------------------------------------------------


def test_same_seed_runs_match_after_timestamp_strip(tmp_path):
    first = _run(FIXTURES / "level1", tmp_path / "a")
    second = _run(FIXTURES / "level1", tmp_path / "b")
    assert strip_timestamps(first.to_dict()) == strip_timestamps(second.to_dict())


def test_replay_reproduces_run(tmp_path):
    fixtures = FIXTURES / "level2"
    recorded = _run(fixtures, tmp_path / "rec")
    task = ResearchTask.load(fixtures / "task.json")
    replayed = run_pipeline(
        task,
        RunConfig(),
        run_dir=tmp_path / "rep",
        gateway=replay_gateway(tmp_path / "rec" / "transcripts"),
        fixtures_dir=fixtures,
    )
    assert strip_timestamps(replayed.to_dict()) == strip_timestamps(recorded.to_dict())
    original = (tmp_path / "rec" / "paper" / "main.tex").read_bytes()
    assert (tmp_path / "rep" / "paper" / "main.tex").read_bytes() == original


# --- failure handling ------------------------------------------------------


def _variant(
    tmp_path: Path,
    level: str,
    scripts: dict[str, list[dict]],
    *,
    drop_candidates: bool = False,
) -> Path:
    dst = tmp_path / "fixtures"
    shutil.copytree(FIXTURES / level, dst)
    if drop_candidates:
        (dst / "candidates.json").unlink()
    for agent, responses in scripts.items():
        (dst / "script" / f"{agent}.json").write_text(
            json.dumps({"responses": responses}), encoding="utf-8"
        )
    return dst


def _text(payload) -> dict:
    content = payload if isinstance(payload, str) else json.dumps(payload, indent=1)
    return {"text": content}


def _calls(*pairs) -> dict:
    return {"tool_calls": [{"name": name, "args": args} for name, args in pairs]}


LEVEL1_CONCEPTS = (
    "gated recurrent fusion",
    "confidence calibration",
    "confidence-scaled gating",
)


def _advisor_response(status: str) -> dict:
    return _text(
        {
            "findings": [
                {
                    "concept": name,
                    "status": status,
                    "evidence": f"train.py never references the {name} update",
                    "suggestion": f"wire the {name} term into the training loop",
                }
                for name in LEVEL1_CONCEPTS
            ],
            "suggestions": ["rewrite train.py so every concept appears in the loop"],
        }
    )


def _crash_script(marker: str) -> str:
    return (
        "import sys\n"
        f'print("failing on purpose: {marker}")\n'
        "sys.exit(1)\n"
    )


def test_unplannable_run_ends_not_resolved(tmp_path):
    # without repositories no concept can be fully grounded, so planning
    # cannot start; the run must end as an outcome, not an exception
    analyst = json.loads(
        (FIXTURES / "level1" / "script" / "code-analyst.json").read_text(encoding="utf-8")
    )
    first = analyst["responses"][0]
    fixtures = _variant(
        tmp_path,
        "level1",
        {"code-analyst": [first] * 6},
        drop_candidates=True,
    )
    manifest = _run(fixtures, tmp_path / "run")
    assert manifest.terminated and not manifest.completed
    assert manifest.termination["note"].startswith("EmptyPlan:")
    assert manifest.stages()[-1] == "Planning"
    assert "repo_selection" not in manifest.artifacts


def test_exhausted_attempts_classified(tmp_path):
    scripts = {
        "code-agent": [
            _calls(("create_file", {"path": "project/train.py", "content": _crash_script("one")})),
            _calls(("case_resolved", {})),
            _calls(("write_file", {"path": "project/train.py", "content": _crash_script("two")})),
            _calls(("case_resolved", {})),
            _calls(("write_file", {"path": "project/train.py", "content": _crash_script("three")})),
            _calls(("case_resolved", {})),
        ],
        "advisor": [_advisor_response("divergent")] * 3,
    }
    fixtures = _variant(tmp_path, "level1", scripts)
    manifest = _run(fixtures, tmp_path / "run")
    assert not manifest.completed
    note = manifest.termination["note"]
    assert "attempt budget exhausted" in note
    assert "Unfeasible" in note
    assert "3 attempt(s)" in note
    assert manifest.stages().count("ImplementationCycle") == 3
    assert manifest.stages()[-1] == "Done"
    assert {"prototype-01", "prototype-02", "prototype-03"} <= set(manifest.artifacts)


EPOCH_SENSITIVE = """\
import argparse
import json
import os
import sys

parser = argparse.ArgumentParser()
parser.add_argument("--epochs", type=int, default=int(os.environ.get("RUN_EPOCHS", "1")))
args = parser.parse_args()
if args.epochs > 2:
    print("diverged at scale")
    sys.exit(1)
json.dump({"loss": 0.25, "examples": 40}, open("results.json", "w"))
print("done")
"""


def test_full_experiment_failure_exhausts_loopback(tmp_path):
    scripts = {
        "code-agent": [
            _calls(("create_file", {"path": "project/train.py", "content": EPOCH_SENSITIVE})),
            _calls(("case_resolved", {})),
            _calls(("write_file", {"path": "project/train.py", "content": EPOCH_SENSITIVE + "# retuned\n"})),
            _calls(("case_resolved", {})),
        ],
        "advisor": [_advisor_response("implemented")] * 2,
    }
    fixtures = _variant(tmp_path, "level1", scripts)
    manifest = _run(fixtures, tmp_path / "run")
    assert not manifest.completed
    assert (
        manifest.termination["note"]
        == "full-scale experiment failed with no loopback budget left"
    )
    failures = [e for e in manifest.events if e["event"] == "FullExperimentFailed"]
    assert [e["to"] for e in failures] == ["ImplementationCycle", "Done"]
    assert {"full-01", "full-02"} <= set(manifest.artifacts)
    assert "analysis" not in manifest.artifacts
    assert "Documentation" not in manifest.stages()


def test_exhausted_script_is_infrastructure_failure(tmp_path):
    fixtures = _variant(tmp_path, "level1", {"advisor": []})
    with pytest.raises(ProviderFailure):
        _run(fixtures, tmp_path / "run")


def test_replay_from_empty_store_raises(tmp_path):
    fixtures = FIXTURES / "level1"
    task = ResearchTask.load(fixtures / "task.json")
    (tmp_path / "empty").mkdir()
    with pytest.raises(ReplayMiss):
        run_pipeline(
            task,
            RunConfig(),
            run_dir=tmp_path / "run",
            gateway=replay_gateway(tmp_path / "empty"),
            fixtures_dir=fixtures,
        )
