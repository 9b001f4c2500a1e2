"""Exception hierarchy shared by all pipeline modules.

Every error the public API can raise lives here so callers (and the CLI
exit-code mapping) can catch one base class.
"""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


# --- orchestrator ---------------------------------------------------------


class EmptyReferences(PipelineError):
    """A research task was submitted with no reference papers."""


class WorkspaceUnavailable(PipelineError):
    """The run workspace root could not be created or accessed."""


class IllegalTransition(PipelineError):
    """An event is not valid for the pipeline's current stage."""


class AlreadyTerminated(PipelineError):
    """A second termination signal was recorded for the same run."""


# --- llm gateway ----------------------------------------------------------


class ProviderFailure(PipelineError):
    """The chat provider kept failing after the bounded retry budget."""


class ReplayMiss(PipelineError):
    """Replay mode saw a request with no stored transcript."""


class CredentialsMissing(PipelineError):
    """Live/Record mode was requested without provider credentials."""

    def __init__(self, variable: str) -> None:
        super().__init__(f"missing credentials: set the {variable} environment variable")
        self.variable = variable


class ToolArgParse(PipelineError):
    """A tool invocation's argument map does not satisfy the tool schema."""


# --- workspace sandbox ----------------------------------------------------


class UnknownTool(PipelineError):
    """Tool name is not in the registry."""


class PathEscape(PipelineError):
    """A tool path resolved outside the workspace root."""


class ToolFailure(PipelineError):
    """A registered tool failed while executing."""


class PathMissing(PipelineError):
    """A path expected to exist inside the workspace does not."""


class ExecTimeout(PipelineError):
    """A sandboxed command exceeded its wall-time budget."""

    def __init__(self, message: str, partial_output: str = "") -> None:
        super().__init__(message)
        self.partial_output = partial_output


class ContainerUnavailable(PipelineError):
    """The configured container runtime cannot be reached."""


class PageOutOfRange(PipelineError):
    """A viewport jump targeted a page index outside 1..page_count."""


class VideoUnsupported(PipelineError):
    """visual_question_answering received a video input."""


# --- knowledge acquisition ------------------------------------------------


class BadWeights(PipelineError):
    """Scoring weights are negative or do not sum to one."""


class InsufficientCandidates(PipelineError):
    """Fewer than the minimum repository candidates survived prefiltering."""


class SourceUnavailable(PipelineError):
    """A paper source bundle could not be resolved (per-item, non-fatal)."""


class ArchiveCorrupt(PipelineError):
    """A downloaded source archive failed to unpack."""


# --- research analysis ----------------------------------------------------


class EmptyIdea(PipelineError):
    """decompose() received an empty idea."""


class DuplicateConcept(PipelineError):
    """The agent kept emitting duplicate concept names after a re-prompt."""


class MalformedProposal(PipelineError):
    """An idea proposal is missing required sections after a re-prompt."""


class MissingTestingPlan(PipelineError):
    """The plan agent omitted the mandatory testing plan."""


# --- implementation loop --------------------------------------------------


class SelfContainmentViolation(PipelineError):
    """Generated code references the reference codebases outside the project."""


class ToolBudgetExceeded(PipelineError):
    """An agent exceeded its per-cycle tool invocation budget."""


class IncompleteReport(PipelineError):
    """The advisor report left a concept unreviewed after a re-prompt."""


class EmptyPlan(PipelineError):
    """No usable plan could be produced from the available material."""


# --- documentation --------------------------------------------------------


class UnparsableSkeleton(PipelineError):
    """The generated section structure failed outline parsing twice."""


class NameNotInOutline(PipelineError):
    """A subsection name is absent from the parsed structure outline."""


class LintFail(PipelineError):
    """Revised text failed the mechanical manuscript lint after a re-prompt."""


class MissingSubsection(PipelineError):
    """Assembly found an outline leaf without a draft."""


class DanglingArtifactRef(PipelineError):
    """The manuscript references a figure or table artifact missing on disk."""


# --- benchmark builder ----------------------------------------------------


class SchemaViolation(PipelineError):
    """A reference-extraction step output failed its schema after a re-prompt."""

    def __init__(self, step: int, detail: str = "") -> None:
        msg = f"step {step} output violates its schema"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)
        self.step = step


class SelectionOutOfBounds(PipelineError):
    """A reference selection fell outside the allowed 15-25 range."""


class LeakDetected(PipelineError):
    """A generated instruction leaked model names or quantitative results."""


class ResidualName(PipelineError):
    """A masked model name survived anonymization after a retry."""


class ComponentOutOfRange(PipelineError):
    """An impact-score component is outside [0, 100]."""


# --- evaluation -----------------------------------------------------------


class UnterminatedManifest(PipelineError):
    """Completion ratio was requested over a manifest with no termination."""


class ScoreOutOfRange(PipelineError):
    """A correctness judge persisted in scoring outside 1..5."""


class RatingOutOfRange(PipelineError):
    """A pairwise judge persisted in rating outside -3..3."""


class UnparsableVerdict(PipelineError):
    """A judge response contained no parseable verdict block."""


class EmptyVerdicts(PipelineError):
    """Aggregation was requested over an empty verdict set."""


class EmptyCorpus(PipelineError):
    """TF-IDF pairing received an empty document corpus."""
