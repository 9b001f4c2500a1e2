#!/usr/bin/env python3
"""Run both shipped fixture tasks end to end with scripted agent responses.

No network access and no credentials are needed: every agent reply comes from
the fixture bundle's script/ directory. Each run leaves a full run directory
behind (manifest, transcripts, project workspace, manuscript) so the output
can be inspected afterwards.

Usage: python3 scripts/run_mock_pipeline.py [--out DIR] [--keep]
"""

from __future__ import annotations

import argparse
import shutil
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO_ROOT / "src"))

from autoresearch.config import RunConfig  # noqa: E402
from autoresearch.orchestrator import ResearchTask  # noqa: E402
from autoresearch.pipeline import mock_gateway, run_pipeline  # noqa: E402


def drive(fixtures: Path, run_dir: Path) -> None:
    task = ResearchTask.load(fixtures / "task.json")
    print(f"== {task.task_id} ({task.level}) ==")
    run_dir.mkdir(parents=True, exist_ok=True)
    gateway = mock_gateway(fixtures, run_dir)
    manifest = run_pipeline(
        task, RunConfig(), run_dir=run_dir, gateway=gateway, fixtures_dir=fixtures
    )
    termination = manifest.termination or {}
    print("  stages:", " -> ".join(manifest.stages()))
    print(f"  termination: {termination.get('kind')} ({termination.get('note')})")
    for name in ("manuscript", "analysis", "project"):
        if name in manifest.artifacts:
            print(f"  {name}: {run_dir / manifest.artifacts[name]}")
    print()


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--out",
        type=Path,
        help="directory to place run output under (default: a temp dir)",
    )
    parser.add_argument(
        "--keep",
        action="store_true",
        help="keep the temp output directory instead of deleting it on exit",
    )
    args = parser.parse_args()

    out = args.out
    cleanup = False
    if out is None:
        out = Path(tempfile.mkdtemp(prefix="mock_pipeline_"))
        cleanup = not args.keep
    out.mkdir(parents=True, exist_ok=True)

    try:
        for level in ("level1", "level2"):
            drive(REPO_ROOT / "fixtures" / level, out / level)
        if cleanup:
            print(f"runs completed under {out} (removed; pass --out or --keep to keep)")
        else:
            print(f"runs kept under {out}")
    finally:
        if cleanup:
            shutil.rmtree(out, ignore_errors=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
