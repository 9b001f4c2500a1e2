"""The code/advisor refinement cycle and budgeted experiment execution.

One cycle: the code agent edits the project through workspace tools, a
self-containment lint keeps reference code out of the import graph, the
advisor reviews the code against every atomic concept, and experiments run
under a clamped budget with metrics read back from ``results.json``.
Feasibility is a pure function of the prototype success history.
"""

from __future__ import annotations

import ast
import enum
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .analysis import AtomicConcept, ImplementationPlan
from .errors import (
    EmptyPlan,
    ExecTimeout,
    IncompleteReport,
    PathMissing,
    SelfContainmentViolation,
)
from .gateway import Gateway, Message, ToolSchema, chat_request, extract_tool_calls
from .parsing import extract_json
from .sandbox.terminal import TerminalBuffer
from .sandbox.tools import HANDOFF_TOOLS, ToolContext, invoke_tool, schemas_for
from .sandbox.workspace import PROJECT_DIRNAME

logger = logging.getLogger(__name__)

CODER_TOOLS = (
    "gen_code_tree_structure",
    "execute_command",
    "read_file",
    "create_file",
    "write_file",
    "list_files",
    "create_directory",
    "run_python",
    "case_resolved",
    "case_not_resolved",
    "terminal_page_down",
    "terminal_page_up",
    "terminal_page_to",
)

CODE_AGENT_SYSTEM = (
    "You are a machine learning engineer implementing the plan inside "
    "/workplace/project. Work only through the provided tools. Build the "
    "project self-contained: NO direct imports from reference codebases "
    "elsewhere under /workplace; copy what you need into the project "
    "instead. Training entry points must accept an --epochs flag and "
    "honor the RUN_EPOCHS environment variable, and experiments report "
    "metrics by writing results.json (a flat name-to-number map) at the "
    "project root. Call case_resolved when the implementation is ready."
)

ADVISOR_SYSTEM = (
    "You are an advisor reviewing whether the project implements each atomic "
    "concept correctly, one by one. For every concept report a status: "
    "implemented, divergent, or missing. Quote code evidence for each "
    "finding; add actionable suggestions for anything divergent or missing. "
    'Reply with JSON only: {"findings": [{"concept": "<name>", "status": '
    '"implemented|divergent|missing", "evidence": "<code quote>", '
    '"suggestion": "<fix>"}], "suggestions": ["..."]}'
)

ANALYSIS_SYSTEM = (
    "You are an experiment analysis agent. Study the outcomes and give a "
    "further plan. Reply with JSON only: "
    '{"items": [{"kind": "modify_implementation|add_experiment|visualize|'
    'comparative_analysis", "description": "...", "artifacts": ["<path>"]}]}'
)


class BudgetKind(str, enum.Enum):
    PROTOTYPE = "prototype"
    FULL = "full"


@dataclass(frozen=True)
class ExperimentBudget:
    kind: BudgetKind
    max_epochs: int
    subset_fraction: float = 1.0

    @classmethod
    def prototype(cls, max_epochs: int = 2, subset_fraction: float = 0.1) -> "ExperimentBudget":
        """Prototype budgets are clamped, never trusted: epochs <= 2, subset <= 0.1."""
        clamped_epochs = min(max_epochs, 2)
        clamped_subset = min(subset_fraction, 0.1)
        if clamped_epochs != max_epochs or clamped_subset != subset_fraction:
            logger.info(
                "prototype budget clamped: epochs %s->%s subset %s->%s",
                max_epochs,
                clamped_epochs,
                subset_fraction,
                clamped_subset,
            )
        return cls(BudgetKind.PROTOTYPE, clamped_epochs, clamped_subset)

    @classmethod
    def full(cls, epochs: int = 10) -> "ExperimentBudget":
        return cls(BudgetKind.FULL, epochs, 1.0)


@dataclass(frozen=True)
class CycleRecord:
    attempt: int
    feedback_summary: str
    files_touched: tuple[str, ...]
    transcript_id: str


@dataclass(frozen=True)
class Finding:
    concept: str
    status: str  # implemented | divergent | missing
    evidence: str = ""
    suggestion: str = ""
    evidence_missing: bool = False


@dataclass(frozen=True)
class AdvisorReport:
    findings: tuple[Finding, ...]
    suggestions: tuple[str, ...] = ()

    def status_of(self, concept: str) -> str:
        for finding in self.findings:
            if finding.concept == concept:
                return finding.status
        raise KeyError(concept)

    @property
    def all_implemented(self) -> bool:
        return all(f.status == "implemented" for f in self.findings)


class Feasibility(str, enum.Enum):
    FEASIBLE = "Feasible"
    UNFEASIBLE = "Unfeasible"


@dataclass(frozen=True)
class FeasibilityVerdict:
    kind: Feasibility
    attempts_consumed: int
    pending: bool = False  # feasible so far, but no success observed yet


@dataclass(frozen=True)
class ExperimentOutcome:
    status: str  # ok | nonzero_exit | timeout
    exit_code: int | None
    metrics: Mapping[str, float] = field(default_factory=dict)
    buffer: TerminalBuffer = field(default_factory=lambda: TerminalBuffer(""))
    metrics_error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


PLAN_ITEM_KINDS = (
    "modify_implementation",
    "add_experiment",
    "visualize",
    "comparative_analysis",
)


@dataclass(frozen=True)
class PlanItem:
    kind: str
    description: str
    artifacts: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in PLAN_ITEM_KINDS:
            raise ValueError(f"unknown plan item kind: {self.kind}")


@dataclass(frozen=True)
class ExperimentPlan:
    items: tuple[PlanItem, ...]


# --- self-containment lint ------------------------------------------------


@dataclass(frozen=True)
class LintViolation:
    file: str
    line: int
    detail: str


def lint_self_containment(project_dir: Path, workspace_root: Path) -> list[LintViolation]:
    """Flag imports or path literals that reach outside /workplace/project."""
    foreign = {
        entry.name
        for entry in workspace_root.iterdir()
        if entry.is_dir() and entry.name != PROJECT_DIRNAME
    }
    violations: list[LintViolation] = []
    for path in sorted(project_dir.rglob("*.py")):
        rel = str(path.relative_to(project_dir))
        try:
            tree = ast.parse(path.read_text(encoding="utf-8", errors="replace"))
        except SyntaxError as exc:
            violations.append(LintViolation(rel, exc.lineno or 0, f"unparsable: {exc.msg}"))
            continue
        for node in ast.walk(tree):
            if isinstance(node, ast.Import):
                for alias in node.names:
                    root_name = alias.name.split(".")[0]
                    if root_name in foreign:
                        violations.append(
                            LintViolation(rel, node.lineno, f"imports reference code: {alias.name}")
                        )
            elif isinstance(node, ast.ImportFrom):
                if node.level == 0 and node.module:
                    root_name = node.module.split(".")[0]
                    if root_name in foreign:
                        violations.append(
                            LintViolation(rel, node.lineno, f"imports reference code: {node.module}")
                        )
            elif isinstance(node, ast.Constant) and isinstance(node.value, str):
                text = node.value
                if "/workplace/" in text:
                    tail = text.split("/workplace/", 1)[1]
                    head = tail.split("/", 1)[0]
                    if head and head != PROJECT_DIRNAME and head in foreign:
                        violations.append(
                            LintViolation(
                                rel, node.lineno, f"hardcoded path into reference code: {text}"
                            )
                        )
    return violations


# --- implementation cycle -------------------------------------------------


def _conversation_step(
    gateway: Gateway,
    ctx: ToolContext,
    system: str,
    history: list[Message],
    tools: Sequence[ToolSchema],
    agent: str,
    touched: set[str],
) -> bool:
    """One agent turn: complete, run tool calls, extend history. True = done."""
    request = chat_request(
        system,
        history[-1].content if history and history[-1].role == "user" else "Continue.",
        tools=tools,
        history=tuple(history[:-1]) if history and history[-1].role == "user" else tuple(history),
        agent=agent,
    )
    response = gateway.complete(request)
    if response.is_text:
        history.append(Message("assistant", response.text or ""))
        return True
    calls = extract_tool_calls(response, tools)
    # sort_keys: the stored transcript form must hash identically on replay
    history.append(
        Message(
            "assistant",
            json.dumps(
                [{"name": c.name, "args": dict(c.args)} for c in calls], sort_keys=True
            ),
        )
    )
    done = False
    results: list[str] = []
    for call in calls:
        if call.name in HANDOFF_TOOLS:
            done = True
            results.append(f"[{call.name}]")
            continue
        if call.name in ("write_file", "create_file"):
            touched.add(str(call.args.get("path", "")))
        try:
            results.append(invoke_tool(call.name, call.args, ctx))
        except ExecTimeout as exc:
            results.append(f"error: {exc} (partial output below)\n{exc.partial_output}")
        except Exception as exc:  # tool errors go back to the agent, loop continues
            from .errors import PipelineError, ToolBudgetExceeded

            if isinstance(exc, ToolBudgetExceeded) or not isinstance(exc, PipelineError):
                raise
            results.append(f"error: {exc}")
    history.append(Message("user", "\n\n".join(results) if results else "(no tool output)"))
    return done


def implement_cycle(
    plan: ImplementationPlan,
    ctx: ToolContext,
    gateway: Gateway,
    *,
    attempt: int,
    feedback: str = "",
    system: str = CODE_AGENT_SYSTEM,
    max_rounds: int = 40,
) -> CycleRecord:
    """Run one code-agent session against the workspace, then lint the result."""
    project = ctx.workspace.ensure_project()
    tools = schemas_for(CODER_TOOLS)
    opening = "Implementation plan:\n" + json.dumps(plan.to_dict(), indent=2)
    if feedback:
        opening += f"\n\nAdvisor feedback to incorporate:\n{feedback}"
    opening += f"\n\nThis is refinement attempt {attempt}."
    history: list[Message] = [Message("user", opening)]
    touched: set[str] = set()
    for _ in range(max_rounds):
        if _conversation_step(gateway, ctx, system, history, tools, "code-agent", touched):
            break

    violations = lint_self_containment(project, ctx.workspace.host_root)
    if violations:
        summary = "\n".join(f"{v.file}:{v.line}: {v.detail}" for v in violations)
        logger.warning("self-containment violations, one fix attempt:\n%s", summary)
        history.append(
            Message(
                "user",
                "The project is not self-contained. Fix these without importing "
                "reference code:\n" + summary,
            )
        )
        for _ in range(max_rounds):
            if _conversation_step(gateway, ctx, system, history, tools, "code-agent", touched):
                break
        violations = lint_self_containment(project, ctx.workspace.host_root)
        if violations:
            summary = "\n".join(f"{v.file}:{v.line}: {v.detail}" for v in violations)
            raise SelfContainmentViolation(
                f"project still references external code after one fix attempt:\n{summary}"
            )

    return CycleRecord(
        attempt=attempt,
        feedback_summary=feedback[:500],
        files_touched=tuple(sorted(touched)),
        transcript_id=f"implement-cycle-{attempt}",
    )


# --- advisor review -------------------------------------------------------


def _project_digest(project_dir: Path, limit: int = 40_000) -> str:
    parts = []
    total = 0
    for path in sorted(project_dir.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(project_dir)
        text = path.read_text(encoding="utf-8", errors="replace")
        chunk = f"--- {rel} ---\n{text}\n"
        total += len(chunk)
        parts.append(chunk)
        if total > limit:
            parts.append("--- (truncated) ---")
            break
    return "".join(parts) or "(empty project)"


def _parse_findings(data: Any, concepts: Sequence[AtomicConcept]) -> tuple[list[Finding], list[str]]:
    wanted = {c.name for c in concepts}
    findings: list[Finding] = []
    problems: list[str] = []
    raw = data.get("findings") if isinstance(data, dict) else data
    if not isinstance(raw, list):
        return [], ["findings payload was not a list"]
    seen: set[str] = set()
    for item in raw:
        if not isinstance(item, dict):
            problems.append(f"malformed finding: {item!r}")
            continue
        concept = str(item.get("concept", ""))
        status = str(item.get("status", "")).lower()
        if concept not in wanted:
            problems.append(f"finding for unknown concept {concept!r}")
            continue
        if status not in ("implemented", "divergent", "missing"):
            problems.append(f"invalid status {status!r} for {concept}")
            continue
        if concept in seen:
            continue
        seen.add(concept)
        evidence = str(item.get("evidence", ""))
        if status in ("divergent", "missing") and not evidence.strip():
            problems.append(f"{status} finding for {concept!r} lacks evidence")
        findings.append(
            Finding(
                concept=concept,
                status=status,
                evidence=evidence,
                suggestion=str(item.get("suggestion", "")),
            )
        )
    for name in sorted(wanted - seen):
        problems.append(f"concept {name!r} left unreviewed")
    return findings, problems


def review_alignment(
    ctx: ToolContext,
    concepts: Sequence[AtomicConcept],
    gateway: Gateway,
    *,
    system: str = ADVISOR_SYSTEM,
) -> AdvisorReport:
    """Advisor pass: every concept gets a status, or the report is rejected."""
    project = ctx.workspace.project_dir
    digest = _project_digest(project)
    concept_list = "\n".join(f"- {c.name}: {c.definition}" for c in concepts)
    prompt = f"Atomic concepts:\n{concept_list}\n\nProject code:\n{digest}"
    data = extract_json(gateway.complete(chat_request(system, prompt, agent="advisor")).text or "")
    findings, problems = _parse_findings(data, concepts)
    if problems:
        retry_prompt = (
            "Your review had problems (" + "; ".join(problems) + "). "
            "Cover every concept exactly once with a valid status and evidence.\n\n" + prompt
        )
        data = extract_json(
            gateway.complete(chat_request(system, retry_prompt, agent="advisor")).text or ""
        )
        findings, problems = _parse_findings(data, concepts)
        coverage_problems = [p for p in problems if "unreviewed" in p or "not a list" in p]
        if coverage_problems:
            raise IncompleteReport("; ".join(coverage_problems))
    # non-implemented findings without evidence stay, flagged rather than dropped
    flagged = tuple(
        replace(f, evidence_missing=True)
        if f.status in ("divergent", "missing") and not f.evidence.strip()
        else f
        for f in findings
    )
    suggestions = ()
    if isinstance(data, dict) and isinstance(data.get("suggestions"), list):
        suggestions = tuple(str(s) for s in data["suggestions"])
    report = AdvisorReport(findings=flagged, suggestions=suggestions)
    assert len(report.findings) == len(concepts)
    return report


# --- experiments ----------------------------------------------------------


def run_experiment(
    ctx: ToolContext,
    budget: ExperimentBudget,
    *,
    entry: str = "train.py",
    timeout_s: float | None = None,
    log_dir: Path | None = None,
) -> ExperimentOutcome:
    """Execute the entry script under the budget; failures become outcomes.

    Timeouts and nonzero exits are normal refinement-loop inputs, so they
    are returned as outcomes, not raised.
    """
    from .sandbox.runtime import exec_command

    project = ctx.workspace.project_dir
    script = project / entry
    if not script.is_file():
        raise PathMissing(f"experiment entry script missing: {entry}")
    env = {
        "RUN_EPOCHS": str(budget.max_epochs),
        "RUN_SUBSET_FRACTION": f"{budget.subset_fraction:g}",
    }
    cmd = f"cd {PROJECT_DIRNAME} && python3 {entry} --epochs {budget.max_epochs}"
    try:
        result = exec_command(
            ctx.handle, cmd, timeout_s=timeout_s, env=env, page_len=ctx.page_len
        )
    except ExecTimeout as exc:
        buffer = TerminalBuffer(exc.partial_output, page_len=ctx.page_len)
        outcome = ExperimentOutcome(status="timeout", exit_code=None, buffer=buffer)
        _persist_outcome(outcome, log_dir)
        return outcome
    ctx.terminal = result.buffer
    metrics: dict[str, float] = {}
    metrics_error = ""
    results_path = project / "results.json"
    if results_path.is_file():
        metrics, metrics_error = _parse_results(results_path)
    status = "ok" if result.exit_code == 0 else "nonzero_exit"
    outcome = ExperimentOutcome(
        status=status,
        exit_code=result.exit_code,
        metrics=metrics,
        buffer=result.buffer,
        metrics_error=metrics_error,
    )
    _persist_outcome(outcome, log_dir)
    return outcome


def _parse_results(path: Path) -> tuple[dict[str, float], str]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        return {}, f"results.json unparsable: {exc}"
    if not isinstance(data, dict):
        return {}, "results.json must be a flat object of metric name -> number"
    metrics: dict[str, float] = {}
    bad: list[str] = []
    for key, value in data.items():
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            metrics[str(key)] = float(value)
        else:
            bad.append(str(key))
    error = f"non-numeric metric values dropped: {', '.join(bad)}" if bad else ""
    return metrics, error


def _persist_outcome(outcome: ExperimentOutcome, log_dir: Path | None) -> None:
    if log_dir is None:
        return
    log_dir.mkdir(parents=True, exist_ok=True)
    (log_dir / "stdout.txt").write_text(outcome.buffer.text, encoding="utf-8")
    summary = {
        "status": outcome.status,
        "exit_code": outcome.exit_code,
        "metrics": dict(outcome.metrics),
        "metrics_error": outcome.metrics_error,
    }
    (log_dir / "outcome.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")


# --- feasibility ----------------------------------------------------------


def classify_feasibility(history: Sequence[bool], max_attempts: int) -> FeasibilityVerdict:
    """History is per-prototype-attempt success flags, oldest first.

    Unfeasible exactly when the last ``max_attempts`` attempts all failed;
    any success inside that window keeps the idea feasible, and a shorter
    history is feasible-pending.
    """
    if not history:
        raise ValueError("feasibility needs at least one attempt")
    if max_attempts < 1:
        raise ValueError("max_attempts must be positive")
    window = list(history[-max_attempts:])
    if len(window) == max_attempts and not any(window):
        return FeasibilityVerdict(Feasibility.UNFEASIBLE, attempts_consumed=len(history))
    return FeasibilityVerdict(
        Feasibility.FEASIBLE,
        attempts_consumed=len(history),
        pending=not any(history),
    )


# --- experiment analysis --------------------------------------------------


def _outcome_digest(outcomes: Sequence[ExperimentOutcome]) -> str:
    parts = []
    for idx, outcome in enumerate(outcomes, start=1):
        metrics = json.dumps(dict(outcome.metrics), sort_keys=True)
        parts.append(
            f"outcome {idx}: status={outcome.status} exit={outcome.exit_code} metrics={metrics}"
        )
        tail = outcome.buffer.lines[-10:]
        if tail:
            parts.append("  log tail: " + " | ".join(tail))
    return "\n".join(parts)


def analyze_experiments(
    outcomes: Sequence[ExperimentOutcome],
    gateway: Gateway,
    *,
    system: str = ANALYSIS_SYSTEM,
) -> ExperimentPlan:
    """Turn outcomes into a typed follow-up plan; empty plans are an error."""
    if not outcomes:
        raise ValueError("experiment analysis needs at least one outcome")
    prompt = "Experiment outcomes:\n" + _outcome_digest(outcomes)
    for round_no in range(2):
        data = extract_json(
            gateway.complete(chat_request(system, prompt, agent="experiment-analysis")).text or ""
        )
        items = _parse_plan_items(data)
        if items:
            return ExperimentPlan(items=tuple(items))
        if round_no == 0:
            prompt = (
                "Your previous reply contained no valid plan items. Provide at "
                "least one typed item.\n\n" + prompt
            )
    raise EmptyPlan("experiment analysis produced no plan items after one re-prompt")


def _parse_plan_items(data: Any) -> list[PlanItem]:
    raw = data.get("items") if isinstance(data, dict) else data
    if not isinstance(raw, list):
        return []
    items: list[PlanItem] = []
    for entry in raw:
        if not isinstance(entry, dict):
            continue
        kind = str(entry.get("kind", ""))
        description = str(entry.get("description", "")).strip()
        if kind not in PLAN_ITEM_KINDS or not description:
            continue
        artifacts = entry.get("artifacts", ())
        if not isinstance(artifacts, (list, tuple)):
            artifacts = ()
        items.append(PlanItem(kind, description, tuple(str(a) for a in artifacts)))
    return items
