"""Deterministic pipeline state machine and durable run manifest.

Stages advance along a fixed DAG. A failed prototype loops back to the
implementation cycle until the attempt budget runs out, at which point the
run is forced toward an unsuccessful termination. Every transition is
an immutable snapshot, and replaying the recorded event log from the
initial state reproduces the stage history exactly.
"""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .acquisition import PaperRef
from .config import RunConfig
from .errors import (
    AlreadyTerminated,
    EmptyReferences,
    IllegalTransition,
    WorkspaceUnavailable,
)


class Level(str, enum.Enum):
    LEVEL1 = "level1"  # instruction given; execute it
    LEVEL2 = "level2"  # no instruction; the pipeline must ideate

    @classmethod
    def parse(cls, value: str) -> "Level":
        norm = str(value).strip().lower().replace("-", "").replace("_", "")
        if norm in ("level1", "1"):
            return cls.LEVEL1
        if norm in ("level2", "2"):
            return cls.LEVEL2
        raise ValueError(f"unknown task level: {value!r}")


class Stage(str, enum.Enum):
    KNOWLEDGE_ACQUISITION = "KnowledgeAcquisition"
    RESOURCE_ANALYSIS = "ResourceAnalysis"
    IDEATION = "Ideation"
    PLANNING = "Planning"
    IMPLEMENTATION_CYCLE = "ImplementationCycle"
    PROTOTYPE_EXPERIMENT = "PrototypeExperiment"
    FULL_EXPERIMENT = "FullExperiment"
    DOCUMENTATION = "Documentation"
    DONE = "Done"


class Event(str, enum.Enum):
    STAGE_COMPLETED = "StageCompleted"
    PROTOTYPE_SUCCEEDED = "PrototypeSucceeded"
    PROTOTYPE_FAILED = "PrototypeFailed"
    FULL_EXPERIMENT_FAILED = "FullExperimentFailed"


class TerminationKind(str, enum.Enum):
    RESOLVED = "Resolved"
    NOT_RESOLVED = "NotResolved"


@dataclass(frozen=True)
class TerminationSignal:
    kind: TerminationKind
    note: str = ""


@dataclass(frozen=True)
class ResearchTask:
    """One benchmark instance: references, optional instruction, datasets."""

    task_id: str
    level: Level
    references: tuple[PaperRef, ...]
    instruction: str | None = None
    datasets: tuple[str, ...] = ()
    ground_truth: PaperRef | None = None

    def __post_init__(self) -> None:
        if not self.references:
            raise EmptyReferences(f"task {self.task_id}: references must be non-empty")
        if self.level is Level.LEVEL1 and not self.instruction:
            raise ValueError("a level-1 task must carry an instruction")
        if self.level is Level.LEVEL2 and self.instruction:
            raise ValueError("a level-2 task must not carry an instruction")

    @property
    def ideation_required(self) -> bool:
        return self.level is Level.LEVEL2

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ResearchTask":
        refs = tuple(
            PaperRef(
                title=r["title"],
                external_id=r.get("external_id", ""),
                source_path=r.get("source_path"),
            )
            for r in data.get("references", ())
        )
        gt = data.get("ground_truth")
        return cls(
            task_id=data["task_id"],
            level=Level.parse(data["level"]),
            references=refs,
            instruction=data.get("instruction"),
            datasets=tuple(data.get("datasets", ())),
            ground_truth=PaperRef(
                title=gt["title"],
                external_id=gt.get("external_id", ""),
                source_path=gt.get("source_path"),
            )
            if gt
            else None,
        )

    @classmethod
    def load(cls, path: str | Path) -> "ResearchTask":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict[str, Any]:
        def ref_dict(ref: PaperRef) -> dict[str, Any]:
            return {
                "title": ref.title,
                "external_id": ref.external_id,
                "source_path": ref.source_path,
            }

        data: dict[str, Any] = {
            "task_id": self.task_id,
            "level": self.level.value,
            "references": [ref_dict(r) for r in self.references],
            "datasets": list(self.datasets),
        }
        if self.instruction is not None:
            data["instruction"] = self.instruction
        if self.ground_truth is not None:
            data["ground_truth"] = ref_dict(self.ground_truth)
        return data


@dataclass(frozen=True)
class PipelineState:
    stage: Stage = Stage.KNOWLEDGE_ACQUISITION
    attempt: int = 0
    ideation_required: bool = False
    max_attempts: int = 3
    full_experiment_loopbacks: int = 1
    full_loopbacks_used: int = 0
    exhausted: bool = False
    event_log: tuple[tuple[str, str, str], ...] = ()  # (from, event, to)

    def __post_init__(self) -> None:
        if self.attempt > self.max_attempts:
            raise ValueError("attempt exceeds the configured budget")

    @property
    def stage_history(self) -> tuple[str, ...]:
        return (Stage.KNOWLEDGE_ACQUISITION.value, *(entry[2] for entry in self.event_log))


def initial_state(task: ResearchTask, config: RunConfig) -> PipelineState:
    return PipelineState(
        ideation_required=task.ideation_required,
        max_attempts=config.max_attempts,
        full_experiment_loopbacks=config.full_experiment_loopbacks,
    )


def advance(state: PipelineState, event: Event) -> PipelineState:
    """Apply one event; raises IllegalTransition for any pair not in the DAG."""
    if state.stage is Stage.DONE:
        raise IllegalTransition("the run has already reached its terminal stage")

    def go(to: Stage, **changes: Any) -> PipelineState:
        log = state.event_log + ((state.stage.value, event.value, to.value),)
        return replace(state, stage=to, event_log=log, **changes)

    stage = state.stage
    if event is Event.STAGE_COMPLETED:
        if stage is Stage.KNOWLEDGE_ACQUISITION:
            return go(Stage.RESOURCE_ANALYSIS)
        if stage is Stage.RESOURCE_ANALYSIS:
            return go(Stage.IDEATION if state.ideation_required else Stage.PLANNING)
        if stage is Stage.IDEATION:
            return go(Stage.PLANNING)
        if stage is Stage.PLANNING:
            # first implementation cycle consumes attempt 1
            return go(Stage.IMPLEMENTATION_CYCLE, attempt=max(state.attempt, 1))
        if stage is Stage.IMPLEMENTATION_CYCLE:
            return go(Stage.PROTOTYPE_EXPERIMENT)
        if stage is Stage.FULL_EXPERIMENT:
            return go(Stage.DOCUMENTATION)
        if stage is Stage.DOCUMENTATION:
            return go(Stage.DONE)
    elif event is Event.PROTOTYPE_SUCCEEDED and stage is Stage.PROTOTYPE_EXPERIMENT:
        return go(Stage.FULL_EXPERIMENT)
    elif event is Event.PROTOTYPE_FAILED and stage is Stage.PROTOTYPE_EXPERIMENT:
        if state.attempt < state.max_attempts:
            return go(Stage.IMPLEMENTATION_CYCLE, attempt=state.attempt + 1)
        return go(Stage.DONE, exhausted=True)
    elif event is Event.FULL_EXPERIMENT_FAILED and stage is Stage.FULL_EXPERIMENT:
        if (
            state.full_loopbacks_used < state.full_experiment_loopbacks
            and state.attempt < state.max_attempts
        ):
            return go(
                Stage.IMPLEMENTATION_CYCLE,
                attempt=state.attempt + 1,
                full_loopbacks_used=state.full_loopbacks_used + 1,
            )
        return go(Stage.DONE, exhausted=True)
    raise IllegalTransition(f"event {event.value} is not valid in stage {stage.value}")


def replay_events(start: PipelineState, events: Iterable[Event]) -> PipelineState:
    state = start
    for event in events:
        state = advance(state, event)
    return state


class RunManifest:
    """Durable run record: stage history, events, artifacts, termination.

    Logically append-only: entries are only ever added, and the whole
    document is rewritten to ``manifest.json`` after each change. Artifact
    paths are stored relative to the run directory so two runs of the same
    task differ only in their timestamps.
    """

    SCHEMA_VERSION = 1
    FILENAME = "manifest.json"

    def __init__(
        self,
        task_id: str,
        config_hash: str,
        seed: int,
        ideation_required: bool,
        run_dir: str | Path | None = None,
    ) -> None:
        self.task_id = task_id
        self.config_hash = config_hash
        self.seed = seed
        self.ideation_required = ideation_required
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.stage_history: list[dict[str, Any]] = []
        self.events: list[dict[str, Any]] = []
        self.termination: dict[str, Any] | None = None
        self.artifacts: dict[str, str] = {}
        self.transcript_ids: list[str] = []

    # --- recording -----------------------------------------------------

    def record_stage(self, stage: Stage | str, *, now: float | None = None) -> None:
        value = stage.value if isinstance(stage, Stage) else stage
        self.stage_history.append({"stage": value, "at": self._now(now)})
        self.save()

    def record_event(
        self, source: str, event: str, target: str, *, now: float | None = None
    ) -> None:
        self.events.append(
            {"from": source, "event": event, "to": target, "at": self._now(now)}
        )
        self.save()

    def record_termination(self, signal: TerminationSignal, *, now: float | None = None) -> None:
        if self.termination is not None:
            raise AlreadyTerminated(
                f"run {self.task_id} already terminated as {self.termination['kind']}"
            )
        self.termination = {
            "kind": signal.kind.value,
            "note": signal.note,
            "at": self._now(now),
        }
        self.save()

    def add_artifact(self, name: str, relpath: str) -> None:
        if Path(relpath).is_absolute():
            raise ValueError(f"artifact paths must be relative to the run dir: {relpath}")
        self.artifacts[name] = relpath
        self.save()

    def add_transcript(self, transcript_id: str) -> None:
        self.transcript_ids.append(transcript_id)
        self.save()

    @staticmethod
    def _now(now: float | None) -> float:
        return time.time() if now is None else now

    # --- queries -------------------------------------------------------

    @property
    def completed(self) -> bool:
        return (
            self.termination is not None
            and self.termination["kind"] == TerminationKind.RESOLVED.value
        )

    @property
    def terminated(self) -> bool:
        return self.termination is not None

    def stages(self) -> list[str]:
        return [entry["stage"] for entry in self.stage_history]

    # --- persistence ---------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": self.SCHEMA_VERSION,
            "task_id": self.task_id,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "ideation_required": self.ideation_required,
            "stage_history": self.stage_history,
            "events": self.events,
            "termination": self.termination,
            "artifacts": self.artifacts,
            "transcript_ids": self.transcript_ids,
        }

    def save(self) -> None:
        if self.run_dir is None:
            return
        path = self.run_dir / self.FILENAME
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        tmp.replace(path)

    @classmethod
    def load(cls, run_dir: str | Path) -> "RunManifest":
        run_dir = Path(run_dir)
        data = json.loads((run_dir / cls.FILENAME).read_text(encoding="utf-8"))
        manifest = cls(
            task_id=data["task_id"],
            config_hash=data["config_hash"],
            seed=data["seed"],
            ideation_required=data["ideation_required"],
            run_dir=run_dir,
        )
        manifest.stage_history = list(data["stage_history"])
        manifest.events = list(data["events"])
        manifest.termination = data["termination"]
        manifest.artifacts = dict(data["artifacts"])
        manifest.transcript_ids = list(data["transcript_ids"])
        return manifest


def strip_timestamps(document: Any) -> Any:
    """Manifest comparison form: drop every 'at' field, keep all else."""
    if isinstance(document, dict):
        return {k: strip_timestamps(v) for k, v in document.items() if k != "at"}
    if isinstance(document, list):
        return [strip_timestamps(item) for item in document]
    return document


def start_run(
    task: ResearchTask, config: RunConfig, run_dir: str | Path | None = None
) -> RunManifest:
    """Open a run: create the directory layout, seed the manifest."""
    if not task.references:
        raise EmptyReferences(f"task {task.task_id}: references must be non-empty")
    if run_dir is not None:
        run_dir = Path(run_dir)
        try:
            run_dir.mkdir(parents=True, exist_ok=True)
            (run_dir / "workspace").mkdir(exist_ok=True)
        except OSError as exc:
            raise WorkspaceUnavailable(f"cannot prepare run directory {run_dir}: {exc}") from exc
    manifest = RunManifest(
        task_id=task.task_id,
        config_hash=config.content_hash(),
        seed=config.seed,
        ideation_required=task.ideation_required,
        run_dir=run_dir,
    )
    manifest.record_stage(Stage.KNOWLEDGE_ACQUISITION)
    return manifest


def record_termination(manifest: RunManifest, signal: TerminationSignal) -> RunManifest:
    manifest.record_termination(signal)
    return manifest
