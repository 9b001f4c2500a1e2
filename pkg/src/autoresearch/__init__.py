"""Autonomous research pipeline engine with an offline-testable evaluation harness.

The package is organized around a deterministic pipeline state machine
(:mod:`autoresearch.orchestrator`), a record/replay LLM gateway
(:mod:`autoresearch.gateway`), a confined tool workspace
(:mod:`autoresearch.sandbox`), and the stage modules that implement
literature acquisition, concept analysis, ideation, planning, iterative
implementation, experiments, and hierarchical manuscript writing.
Benchmark construction lives in :mod:`autoresearch.bench` and the two-stage
evaluation harness in :mod:`autoresearch.evaluation`.
"""

__version__ = "0.1.0"
