"""End-to-end research runs: every stage of the DAG wired over one workspace.

The orchestrator owns legality of transitions; this module owns the work done
inside each stage and the artifacts it leaves behind. A run directory ends up
self-describing::

    manifest.json           stage history, events, termination, artifact map
    task.json               the task as submitted
    workspace/              sources/, cloned repos, and the agent's project/
    survey_notes.md         concept profiles backing the plan
    plan.json               the four-section implementation plan
    runs/attempt-NN/        advisor report + experiment logs per refinement
    runs/full-NN/           full-scale experiment logs
    analysis.json           typed follow-up plan from the analysis agent
    paper/                  main.tex, outline.json, figures/
    transcripts/            recorded chat transcripts (mock and live runs)

Agent misbehavior that survives the per-module re-prompt policy terminates
the run as NotResolved and is reported in the termination note; only
infrastructure failures (credentials, replay misses, broken workspace)
propagate as exceptions.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import prompts
from .acquisition import (
    AgentContext,
    PaperRef,
    RepoCandidate,
    RepoSelection,
    clone_repos,
    fetch_sources,
    load_candidates,
    select_repos,
)
from .analysis import (
    IDEA_SECTIONS,
    AtomicConcept,
    ConceptProfile,
    ImplementationPlan,
    SurveyNotes,
    build_plan,
    decompose,
    generate_idea,
    survey_concept,
)
from .config import RunConfig
from .errors import (
    AlreadyTerminated,
    ArchiveCorrupt,
    ContainerUnavailable,
    CredentialsMissing,
    EmptyPlan,
    IllegalTransition,
    PipelineError,
    ProviderFailure,
    ReplayMiss,
    WorkspaceUnavailable,
)
from .gateway import (
    Gateway,
    HttpProvider,
    Mode,
    ScriptedProvider,
    TranscriptStore,
)
from .implementation import (
    AdvisorReport,
    ExperimentBudget,
    ExperimentOutcome,
    ExperimentPlan,
    analyze_experiments,
    classify_feasibility,
    implement_cycle,
    review_alignment,
    run_experiment,
)
from .orchestrator import (
    Event,
    Level,
    PipelineState,
    ResearchTask,
    RunManifest,
    Stage,
    TerminationKind,
    TerminationSignal,
    advance,
    initial_state,
    start_run,
)
from .sandbox.runtime import provision
from .sandbox.tools import ToolContext
from .sandbox.workspace import Workspace
from .writing import (
    SubsectionDraft,
    assemble,
    elaborate_subsection,
    generate_structure,
    revise_with_checklist,
    write_manuscript,
)

logger = logging.getLogger(__name__)

# Failures of the machinery around the run, as opposed to failures of the
# research attempt itself. These propagate; everything else ends the run
# with a NotResolved termination.
INFRA_ERRORS = (
    ProviderFailure,
    ReplayMiss,
    CredentialsMissing,
    WorkspaceUnavailable,
    ContainerUnavailable,
    IllegalTransition,
    AlreadyTerminated,
    ArchiveCorrupt,
)

CANDIDATES_FILENAME = "candidates.json"


# --- gateway builders ------------------------------------------------------


def mock_gateway(
    fixtures_dir: str | Path, run_dir: str | Path, config: RunConfig | None = None
) -> Gateway:
    """Scripted responses, recorded transcripts, zero network traffic."""
    config = config or RunConfig()
    return Gateway(
        ScriptedProvider(fixtures_dir),
        TranscriptStore(Path(run_dir) / "transcripts"),
        Mode.RECORD,
        retry_limit=config.retry_limit,
        backoff_base_s=config.backoff_base_s,
        sleeper=None,
    )


def live_gateway(
    run_dir: str | Path,
    config: RunConfig,
    env: Mapping[str, str] | None = None,
) -> Gateway:
    """Provider from the environment, transcripts recorded under the run dir."""
    provider = HttpProvider.from_env(env)
    return Gateway(
        provider,
        TranscriptStore(Path(run_dir) / "transcripts"),
        Mode.RECORD,
        retry_limit=config.retry_limit,
        backoff_base_s=config.backoff_base_s,
    )


def replay_gateway(transcript_dir: str | Path) -> Gateway:
    """Answers only from stored transcripts; any unseen request is an error."""
    return Gateway(None, TranscriptStore(transcript_dir), Mode.REPLAY)


# --- the run ---------------------------------------------------------------


def run_pipeline(
    task: ResearchTask,
    config: RunConfig,
    *,
    run_dir: str | Path,
    gateway: Gateway,
    fixtures_dir: str | Path | None = None,
    candidates: Sequence[RepoCandidate] | None = None,
) -> RunManifest:
    """Drive one task through every stage; always returns a terminated manifest
    unless the failure is infrastructural (see INFRA_ERRORS)."""
    return _PipelineRun(task, config, Path(run_dir), gateway, fixtures_dir, candidates).run()


class _PipelineRun:
    """Mutable scratch state shared by the stage handlers of one run."""

    def __init__(
        self,
        task: ResearchTask,
        config: RunConfig,
        run_dir: Path,
        gateway: Gateway,
        fixtures_dir: str | Path | None,
        candidates: Sequence[RepoCandidate] | None,
    ) -> None:
        self.task = task
        self.config = config
        self.run_dir = run_dir
        self.gateway = gateway
        self.fixtures_dir = Path(fixtures_dir) if fixtures_dir is not None else None
        self.candidates = list(candidates) if candidates is not None else None

        self.manifest = start_run(task, config, run_dir)
        (run_dir / "task.json").write_text(
            json.dumps(task.to_dict(), indent=2), encoding="utf-8"
        )
        self.workspace = Workspace(run_dir / "workspace")
        handle = provision(self.workspace, config.container)
        self.ctx = ToolContext(
            workspace=self.workspace,
            handle=handle,
            gateway=gateway,
            page_len=config.page_len,
            budget=config.tool_call_budget,
            exec_timeout_s=float(config.experiment_timeout_s),
        )

        self.refs: list[PaperRef] = []
        self.repo_dirs: dict[str, Path] = {}
        self.corpus_files: dict[str, Path] = {}
        self.context = ""
        self.idea_text = ""
        self.concepts: list[AtomicConcept] = []
        self.profiles: list[ConceptProfile] = []
        self.plan: ImplementationPlan | None = None
        self.feedback = ""
        self.last_report: AdvisorReport | None = None
        self.prototype_history: list[bool] = []
        self.outcomes: list[ExperimentOutcome] = []
        self.final_outcome: ExperimentOutcome | None = None
        self.analysis: ExperimentPlan | None = None
        self.evidence: list[str] = []
        self.full_run_no = 0

    # --- driver --------------------------------------------------------

    def run(self) -> RunManifest:
        state = initial_state(self.task, self.config)
        try:
            while state.stage is not Stage.DONE:
                state = self._dispatch(state)
        except INFRA_ERRORS:
            raise
        except PipelineError as exc:
            logger.error(
                "run %s failed in flight: %s: %s", self.task.task_id, type(exc).__name__, exc
            )
            if not self.manifest.terminated:
                self.manifest.record_termination(
                    TerminationSignal(
                        TerminationKind.NOT_RESOLVED, note=f"{type(exc).__name__}: {exc}"
                    )
                )
            return self.manifest
        self._terminate(state)
        return self.manifest

    def _dispatch(self, state: PipelineState) -> PipelineState:
        stage = state.stage
        if stage is Stage.KNOWLEDGE_ACQUISITION:
            self._acquire()
            return self._advance(state, Event.STAGE_COMPLETED)
        if stage is Stage.RESOURCE_ANALYSIS:
            self._analyze_resources()
            return self._advance(state, Event.STAGE_COMPLETED)
        if stage is Stage.IDEATION:
            self._ideate()
            return self._advance(state, Event.STAGE_COMPLETED)
        if stage is Stage.PLANNING:
            self._plan()
            return self._advance(state, Event.STAGE_COMPLETED)
        if stage is Stage.IMPLEMENTATION_CYCLE:
            self._implement(state.attempt)
            return self._advance(state, Event.STAGE_COMPLETED)
        if stage is Stage.PROTOTYPE_EXPERIMENT:
            ok = self._prototype(state.attempt)
            event = Event.PROTOTYPE_SUCCEEDED if ok else Event.PROTOTYPE_FAILED
            return self._advance(state, event)
        if stage is Stage.FULL_EXPERIMENT:
            ok = self._full_experiment()
            event = Event.STAGE_COMPLETED if ok else Event.FULL_EXPERIMENT_FAILED
            return self._advance(state, event)
        if stage is Stage.DOCUMENTATION:
            self._document()
            return self._advance(state, Event.STAGE_COMPLETED)
        raise IllegalTransition(f"no handler for stage {stage.value}")

    def _advance(self, state: PipelineState, event: Event) -> PipelineState:
        new_state = advance(state, event)
        source, name, target = new_state.event_log[-1]
        self.manifest.record_event(source, name, target)
        self.manifest.record_stage(target)
        return new_state

    def _terminate(self, state: PipelineState) -> None:
        if self.manifest.terminated:
            return
        if not state.exhausted:
            self.manifest.record_termination(
                TerminationSignal(
                    TerminationKind.RESOLVED, note="manuscript assembled at paper/main.tex"
                )
            )
            return
        last_event = state.event_log[-1][1] if state.event_log else ""
        if last_event == Event.FULL_EXPERIMENT_FAILED.value:
            note = "full-scale experiment failed with no loopback budget left"
        else:
            verdict = classify_feasibility(self.prototype_history, self.config.max_attempts)
            note = (
                f"attempt budget exhausted; prototype feasibility: {verdict.kind.value} "
                f"after {verdict.attempts_consumed} attempt(s)"
            )
        self.manifest.record_termination(
            TerminationSignal(TerminationKind.NOT_RESOLVED, note=note)
        )

    # --- stage handlers ------------------------------------------------

    def _acquire(self) -> None:
        self.refs = fetch_sources(
            self.task.references,
            workspace_root=self.workspace.host_root,
            fixtures_dir=self.fixtures_dir,
        )
        candidates = self.candidates
        if candidates is None and self.fixtures_dir is not None:
            pool_path = self.fixtures_dir / CANDIDATES_FILENAME
            if pool_path.is_file():
                candidates = load_candidates(pool_path)
        if not candidates:
            logger.warning("no repository candidate pool; run proceeds from papers only")
            return
        topic = self.task.instruction or "; ".join(r.title for r in self.task.references[:5])
        selection = select_repos(
            candidates, AgentContext(gateway=self.gateway, config=self.config, topic=topic)
        )
        placed = clone_repos(
            selection,
            workspace_root=self.workspace.host_root,
            fixtures_dir=self.fixtures_dir,
        )
        self.repo_dirs = {c.name: placed[c.url] for c in selection.chosen if c.url in placed}
        self._save_selection(selection)

    def _save_selection(self, selection: RepoSelection) -> None:
        record = {
            "chosen": [c.url for c in selection.chosen],
            "rationales": dict(selection.rationales),
        }
        (self.run_dir / "repo_selection.json").write_text(
            json.dumps(record, indent=2), encoding="utf-8"
        )
        self.manifest.add_artifact("repo_selection", "repo_selection.json")

    def _analyze_resources(self) -> None:
        self.corpus_files = _collect_corpus(self.refs)
        self.context = self._context_digest()
        if self.task.level is Level.LEVEL1:
            # the instruction is the idea, verbatim; no ideation stage runs
            self.idea_text = self.task.instruction or ""
            self._survey()

    def _context_digest(self) -> str:
        lines = ["Reference papers:"]
        lines += [f"- {ref.title}" for ref in self.task.references]
        if self.task.datasets:
            lines.append("Datasets: " + ", ".join(self.task.datasets))
        if self.repo_dirs:
            lines.append("Available repositories: " + ", ".join(sorted(self.repo_dirs)))
        if self.corpus_files:
            lines.append("Paper sources: " + ", ".join(sorted(self.corpus_files)))
        return "\n".join(lines)

    def _survey(self) -> None:
        self.concepts = decompose(self.idea_text, self.gateway, context=self.context)
        self.profiles = [
            survey_concept(c, self.corpus_files, self.repo_dirs, self.gateway)
            for c in self.concepts
        ]
        notes = SurveyNotes(profiles=list(self.profiles), context=self.context)
        notes.save(self.run_dir / "survey_notes.md")
        self.manifest.add_artifact("survey_notes", "survey_notes.md")

    def _ideate(self) -> None:
        proposal = generate_idea(self.context, self.gateway)
        self.idea_text = proposal.to_text()
        (self.run_dir / "idea.json").write_text(
            json.dumps({k: getattr(proposal, k) for k in IDEA_SECTIONS}, indent=2),
            encoding="utf-8",
        )
        self.manifest.add_artifact("idea", "idea.json")

    def _plan(self) -> None:
        if not self.concepts:
            # Level-2 path: the idea only exists after ideation
            self._survey()
        try:
            plan = build_plan(self.profiles, self.gateway, idea=self.idea_text)
        except ValueError as exc:
            # a run without any completely grounded concept cannot be planned;
            # end it as an outcome, not a crash
            raise EmptyPlan(str(exc)) from exc
        plan.save(self.run_dir / "plan.json")
        self.manifest.add_artifact("plan", "plan.json")
        self.plan = plan

    def _implement(self, attempt: int) -> None:
        assert self.plan is not None
        self.ctx.calls_used = 0  # the tool budget is per cycle
        record = implement_cycle(
            self.plan, self.ctx, self.gateway, attempt=attempt, feedback=self.feedback
        )
        self.manifest.add_transcript(record.transcript_id)
        if attempt == 1:
            self.manifest.add_artifact("project", "workspace/project")
        report = review_alignment(self.ctx, self.concepts, self.gateway)
        self.last_report = report
        attempt_dir = self._attempt_dir(attempt)
        (attempt_dir / "advisor.json").write_text(
            json.dumps(_report_dict(report), indent=2), encoding="utf-8"
        )
        self.manifest.add_artifact(
            f"advisor-{attempt:02d}", f"runs/attempt-{attempt:02d}/advisor.json"
        )

    def _attempt_dir(self, attempt: int) -> Path:
        path = self.run_dir / "runs" / f"attempt-{attempt:02d}"
        path.mkdir(parents=True, exist_ok=True)
        return path

    def _prototype(self, attempt: int) -> bool:
        budget = ExperimentBudget.prototype(
            max_epochs=self.config.prototype_max_epochs,
            subset_fraction=self.config.prototype_subset_fraction,
        )
        rel = f"runs/attempt-{attempt:02d}"
        outcome = run_experiment(
            self.ctx,
            budget,
            timeout_s=float(self.config.experiment_timeout_s),
            log_dir=self._attempt_dir(attempt),
        )
        self.outcomes.append(outcome)
        self.prototype_history.append(outcome.ok)
        self.evidence.append(f"{rel}/outcome.json")
        self.manifest.add_artifact(f"prototype-{attempt:02d}", f"{rel}/outcome.json")
        if not outcome.ok:
            self.feedback = self._failure_feedback(outcome)
        return outcome.ok

    def _full_experiment(self) -> bool:
        self.full_run_no += 1
        budget = ExperimentBudget.full(epochs=self.config.full_epochs)
        rel = f"runs/full-{self.full_run_no:02d}"
        log_dir = self.run_dir / "runs" / f"full-{self.full_run_no:02d}"
        outcome = run_experiment(
            self.ctx,
            budget,
            timeout_s=float(self.config.experiment_timeout_s),
            log_dir=log_dir,
        )
        self.outcomes.append(outcome)
        self.evidence.append(f"{rel}/outcome.json")
        self.manifest.add_artifact(f"full-{self.full_run_no:02d}", f"{rel}/outcome.json")
        if not outcome.ok:
            self.feedback = self._failure_feedback(outcome)
            return False
        self.final_outcome = outcome
        self.analysis = analyze_experiments(self.outcomes, self.gateway)
        (self.run_dir / "analysis.json").write_text(
            json.dumps(
                [
                    {
                        "kind": item.kind,
                        "description": item.description,
                        "artifacts": list(item.artifacts),
                    }
                    for item in self.analysis.items
                ],
                indent=2,
            ),
            encoding="utf-8",
        )
        self.manifest.add_artifact("analysis", "analysis.json")
        return True

    def _failure_feedback(self, outcome: ExperimentOutcome) -> str:
        parts: list[str] = []
        if self.last_report is not None:
            for finding in self.last_report.findings:
                if finding.status == "implemented":
                    continue
                hint = finding.suggestion or finding.evidence
                parts.append(
                    f"Concept {finding.concept!r} is {finding.status}"
                    + (f": {hint}" if hint else "")
                )
            parts.extend(self.last_report.suggestions)
        exit_note = "" if outcome.exit_code is None else f" (exit code {outcome.exit_code})"
        parts.append(f"The last experiment ended with status {outcome.status}{exit_note}.")
        tail = outcome.buffer.lines[-10:]
        if tail:
            parts.append("Last output lines:\n" + "\n".join(tail))
        return "\n".join(parts)

    def _document(self) -> None:
        content = self._writing_content()
        iterations = max(1, self.config.structure_iterations)
        structure = generate_structure(content, self.gateway, iteration=1, budget=iterations)
        for iteration in range(2, iterations + 1):
            structure = generate_structure(
                content,
                self.gateway,
                current=structure,
                iteration=iteration,
                budget=iterations,
            )
        template = prompts.writing_template(self.config.assets_dir)
        checklist = prompts.revision_checklist(self.config.assets_dir)
        drafts: dict[str, SubsectionDraft] = {}
        for name in structure.leaves():
            draft = elaborate_subsection(name, structure, content, template, self.gateway)
            body = draft.body
            for _ in range(self.config.revision_passes):
                body = revise_with_checklist(body, checklist, self.gateway)
            drafts[name] = SubsectionDraft(name=name, body=body, generation=draft.generation)
        manuscript = assemble(
            drafts,
            structure.leaves(),
            structure=structure,
            artifact_root=self.workspace.project_dir,
            evidence=tuple(self.evidence),
        )
        figures = {
            Path(ref).name: self.workspace.project_dir / ref for ref in manuscript.artifacts
        }
        write_manuscript(manuscript, self.run_dir, structure=structure, figures=figures)
        self.manifest.add_artifact("manuscript", "paper/main.tex")
        self.manifest.add_artifact("outline", "paper/outline.json")

    def _writing_content(self) -> str:
        parts = [f"Research idea:\n{self.idea_text}"]
        if self.plan is not None:
            parts.append("Implementation plan:\n" + json.dumps(self.plan.to_dict(), indent=2))
        if self.final_outcome is not None and self.final_outcome.metrics:
            metrics = ", ".join(
                f"{name}={value:g}"
                for name, value in sorted(self.final_outcome.metrics.items())
            )
            parts.append(f"Final experiment metrics: {metrics}")
        if self.analysis is not None:
            parts.append(
                "Follow-up analysis plan:\n"
                + "\n".join(f"- {i.kind}: {i.description}" for i in self.analysis.items)
            )
        if self.last_report is not None:
            parts.append(
                "Concept implementation status:\n"
                + "\n".join(f"- {f.concept}: {f.status}" for f in self.last_report.findings)
            )
        return "\n\n".join(parts)


# --- helpers ---------------------------------------------------------------


def _collect_corpus(refs: Sequence[PaperRef]) -> dict[str, Path]:
    """Name LaTeX sources relative to their bundle so prompts stay host-agnostic."""
    corpus: dict[str, Path] = {}
    for ref in refs:
        if not ref.source_path:
            continue
        root = Path(ref.source_path)
        if root.is_file() and root.suffix == ".tex":
            corpus[f"{root.parent.name}/{root.name}"] = root
        elif root.is_dir():
            for tex in sorted(root.rglob("*.tex")):
                corpus[f"{root.name}/{tex.relative_to(root).as_posix()}"] = tex
    return corpus


def _report_dict(report: AdvisorReport) -> dict[str, Any]:
    return {
        "findings": [
            {
                "concept": f.concept,
                "status": f.status,
                "evidence": f.evidence,
                "suggestion": f.suggestion,
                "evidence_missing": f.evidence_missing,
            }
            for f in report.findings
        ],
        "suggestions": list(report.suggestions),
    }


def load_advisor_report(path: str | Path) -> dict[str, Any]:
    """The persisted advisor report for a refinement attempt, as plain data."""
    return json.loads(Path(path).read_text(encoding="utf-8"))
