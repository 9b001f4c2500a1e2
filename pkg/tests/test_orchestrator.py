"""Pipeline state machine: transition table, budgets, manifest, replay."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autoresearch.acquisition import PaperRef
from autoresearch.config import RunConfig
from autoresearch.errors import AlreadyTerminated, EmptyReferences, IllegalTransition
from autoresearch.orchestrator import (
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
    record_termination,
    replay_events,
    start_run,
    strip_timestamps,
)

REF = PaperRef("A reference paper", "2401.00001")


def make_task(level=Level.LEVEL1, **kwargs) -> ResearchTask:
    defaults = dict(
        task_id="t1",
        level=level,
        references=(REF,),
        instruction="Build the thing." if level is Level.LEVEL1 else None,
    )
    defaults.update(kwargs)
    return ResearchTask(**defaults)


HAPPY_L1 = [
    Event.STAGE_COMPLETED,  # KA -> RA
    Event.STAGE_COMPLETED,  # RA -> Planning (no ideation)
    Event.STAGE_COMPLETED,  # Planning -> ImplementationCycle
    Event.STAGE_COMPLETED,  # ImplementationCycle -> PrototypeExperiment
    Event.PROTOTYPE_SUCCEEDED,
    Event.STAGE_COMPLETED,  # FullExperiment -> Documentation
    Event.STAGE_COMPLETED,  # Documentation -> Done
]


class TestTaskInvariants:
    def test_level1_requires_instruction(self):
        with pytest.raises(ValueError):
            make_task(instruction=None)

    def test_level2_forbids_instruction(self):
        with pytest.raises(ValueError):
            make_task(level=Level.LEVEL2, instruction="surprise")

    def test_empty_references_rejected(self):
        with pytest.raises(EmptyReferences):
            make_task(references=())

    def test_level_parsing(self):
        assert Level.parse("1") is Level.LEVEL1
        assert Level.parse("Level-2") is Level.LEVEL2
        with pytest.raises(ValueError):
            Level.parse("3")

    def test_from_dict_round_trip(self):
        task = ResearchTask.from_dict(
            {
                "task_id": "x",
                "level": "2",
                "references": [{"title": "R", "external_id": "id1"}],
                "datasets": ["mnist"],
            }
        )
        assert task.ideation_required
        assert task.references[0].external_id == "id1"


class TestHappyPaths:
    def test_level1_skips_ideation(self):
        state = initial_state(make_task(), RunConfig())
        for event in HAPPY_L1:
            state = advance(state, event)
        assert state.stage is Stage.DONE
        assert Stage.IDEATION.value not in state.stage_history
        assert not state.exhausted

    def test_level2_passes_through_ideation(self):
        state = initial_state(make_task(level=Level.LEVEL2, instruction=None), RunConfig())
        events = [Event.STAGE_COMPLETED] * 2
        for event in events:
            state = advance(state, event)
        assert state.stage is Stage.IDEATION

    def test_planning_advances_to_implementation(self):
        state = PipelineState(stage=Stage.PLANNING)
        nxt = advance(state, Event.STAGE_COMPLETED)
        assert nxt.stage is Stage.IMPLEMENTATION_CYCLE
        assert nxt.attempt == 1

    def test_documentation_is_terminal_predecessor(self):
        state = PipelineState(stage=Stage.DOCUMENTATION)
        assert advance(state, Event.STAGE_COMPLETED).stage is Stage.DONE


class TestRefinementLoop:
    def test_prototype_failure_loops_back_and_increments(self):
        state = PipelineState(stage=Stage.PROTOTYPE_EXPERIMENT, attempt=1, max_attempts=3)
        nxt = advance(state, Event.PROTOTYPE_FAILED)
        assert nxt.stage is Stage.IMPLEMENTATION_CYCLE
        assert nxt.attempt == 2

    def test_budget_exhaustion_forces_done(self):
        state = PipelineState(stage=Stage.PROTOTYPE_EXPERIMENT, attempt=3, max_attempts=3)
        nxt = advance(state, Event.PROTOTYPE_FAILED)
        assert nxt.stage is Stage.DONE
        assert nxt.exhausted

    def test_attempt_never_exceeds_budget(self):
        state = PipelineState(stage=Stage.PLANNING, max_attempts=3)
        state = advance(state, Event.STAGE_COMPLETED)
        for _ in range(10):
            if state.stage is Stage.DONE:
                break
            state = advance(state, Event.STAGE_COMPLETED)  # -> prototype
            state = advance(state, Event.PROTOTYPE_FAILED)
            assert state.attempt <= 3
        assert state.stage is Stage.DONE and state.exhausted

    def test_full_experiment_single_loopback(self):
        state = PipelineState(stage=Stage.FULL_EXPERIMENT, attempt=1)
        back = advance(state, Event.FULL_EXPERIMENT_FAILED)
        assert back.stage is Stage.IMPLEMENTATION_CYCLE
        assert back.attempt == 2
        assert back.full_loopbacks_used == 1

    def test_second_full_failure_ends_the_run(self):
        state = PipelineState(stage=Stage.FULL_EXPERIMENT, attempt=2, full_loopbacks_used=1)
        nxt = advance(state, Event.FULL_EXPERIMENT_FAILED)
        assert nxt.stage is Stage.DONE and nxt.exhausted


class TestTransitionTable:
    VALID = {
        (Stage.KNOWLEDGE_ACQUISITION, Event.STAGE_COMPLETED),
        (Stage.RESOURCE_ANALYSIS, Event.STAGE_COMPLETED),
        (Stage.IDEATION, Event.STAGE_COMPLETED),
        (Stage.PLANNING, Event.STAGE_COMPLETED),
        (Stage.IMPLEMENTATION_CYCLE, Event.STAGE_COMPLETED),
        (Stage.PROTOTYPE_EXPERIMENT, Event.PROTOTYPE_SUCCEEDED),
        (Stage.PROTOTYPE_EXPERIMENT, Event.PROTOTYPE_FAILED),
        (Stage.FULL_EXPERIMENT, Event.STAGE_COMPLETED),
        (Stage.FULL_EXPERIMENT, Event.FULL_EXPERIMENT_FAILED),
        (Stage.DOCUMENTATION, Event.STAGE_COMPLETED),
    }

    def test_every_stage_event_pair_matches_the_oracle(self):
        for stage in Stage:
            for event in Event:
                state = PipelineState(stage=stage, attempt=1)
                if stage is Stage.DONE or (stage, event) not in self.VALID:
                    with pytest.raises(IllegalTransition):
                        advance(state, event)
                else:
                    advance(state, event)  # must not raise

    def test_done_accepts_nothing(self):
        for event in Event:
            with pytest.raises(IllegalTransition):
                advance(PipelineState(stage=Stage.DONE), event)


def event_sequences() -> st.SearchStrategy[list[Event]]:
    return st.lists(st.sampled_from(list(Event)), max_size=25)


class TestDeterminism:
    @given(event_sequences(), st.booleans())
    @settings(max_examples=200)
    def test_replay_reproduces_stage_history(self, events, ideation):
        start = PipelineState(ideation_required=ideation)
        state = start
        applied = []
        for event in events:
            try:
                state = advance(state, event)
            except IllegalTransition:
                continue
            applied.append(event)
        again = replay_events(start, applied)
        assert again.stage_history == state.stage_history
        assert again == state

    @given(event_sequences())
    @settings(max_examples=200)
    def test_dag_order_and_budget_hold_along_any_path(self, events):
        order = {
            Stage.KNOWLEDGE_ACQUISITION: 0,
            Stage.RESOURCE_ANALYSIS: 1,
            Stage.IDEATION: 2,
            Stage.PLANNING: 3,
            Stage.IMPLEMENTATION_CYCLE: 4,
            Stage.PROTOTYPE_EXPERIMENT: 5,
            Stage.FULL_EXPERIMENT: 6,
            Stage.DOCUMENTATION: 7,
            Stage.DONE: 8,
        }
        state = PipelineState(ideation_required=True)
        for event in events:
            prev = state
            try:
                state = advance(state, event)
            except IllegalTransition:
                continue
            assert state.attempt <= state.max_attempts
            forward = order[state.stage] > order[prev.stage]
            loop_back = (
                state.stage is Stage.IMPLEMENTATION_CYCLE
                and state.attempt == prev.attempt + 1
            )
            assert forward or loop_back


class TestManifest:
    def test_start_run_initial_state(self, tmp_path):
        manifest = start_run(make_task(), RunConfig(), tmp_path / "run")
        assert manifest.stages() == [Stage.KNOWLEDGE_ACQUISITION.value]
        assert manifest.termination is None
        assert manifest.ideation_required is False

    def test_level2_marks_ideation_required(self, tmp_path):
        task = make_task(level=Level.LEVEL2, instruction=None)
        manifest = start_run(task, RunConfig(), tmp_path / "run")
        assert manifest.ideation_required is True

    def test_manifest_persisted_and_reloadable(self, tmp_path):
        run_dir = tmp_path / "run"
        manifest = start_run(make_task(), RunConfig(), run_dir)
        manifest.record_event("KnowledgeAcquisition", "StageCompleted", "ResourceAnalysis")
        manifest.record_stage(Stage.RESOURCE_ANALYSIS)
        manifest.add_artifact("plan", "plan.json")
        loaded = RunManifest.load(run_dir)
        assert loaded.to_dict() == manifest.to_dict()

    def test_termination_recorded_once(self, tmp_path):
        manifest = start_run(make_task(), RunConfig(), tmp_path / "run")
        record_termination(manifest, TerminationSignal(TerminationKind.RESOLVED, "done"))
        assert manifest.completed
        with pytest.raises(AlreadyTerminated):
            record_termination(manifest, TerminationSignal(TerminationKind.NOT_RESOLVED))

    def test_not_resolved_counts_as_incomplete(self, tmp_path):
        manifest = start_run(make_task(), RunConfig(), tmp_path / "run")
        record_termination(manifest, TerminationSignal(TerminationKind.NOT_RESOLVED, "budget"))
        assert manifest.completed is False

    def test_artifact_paths_must_be_relative(self, tmp_path):
        manifest = start_run(make_task(), RunConfig(), tmp_path / "run")
        with pytest.raises(ValueError):
            manifest.add_artifact("bad", "/absolute/path")

    def test_workspace_dir_created(self, tmp_path):
        start_run(make_task(), RunConfig(), tmp_path / "run")
        assert (tmp_path / "run" / "workspace").is_dir()

    def test_strip_timestamps_removes_only_at_fields(self, tmp_path):
        manifest = start_run(make_task(), RunConfig(), tmp_path / "run")
        manifest.record_stage(Stage.RESOURCE_ANALYSIS)
        doc = strip_timestamps(manifest.to_dict())
        blob = json.dumps(doc)
        assert '"at"' not in blob
        assert doc["stage_history"][0]["stage"] == "KnowledgeAcquisition"

    def test_two_runs_differ_only_in_timestamps(self, tmp_path):
        a = start_run(make_task(), RunConfig(), tmp_path / "a")
        b = start_run(make_task(), RunConfig(), tmp_path / "b")
        for manifest in (a, b):
            manifest.record_event("KnowledgeAcquisition", "StageCompleted", "ResourceAnalysis")
            manifest.record_stage(Stage.RESOURCE_ANALYSIS)
        assert strip_timestamps(a.to_dict()) == strip_timestamps(b.to_dict())
