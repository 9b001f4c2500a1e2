"""Command line driver for the research pipeline.

Subcommands cover the whole lifecycle: ``bench build`` turns a paper directory
into a task bundle, ``run`` executes a task, ``eval impl`` and ``eval papers``
grade the outputs, ``validate-reviewer`` checks the judge panel against an
accepted/rejected corpus, and ``replay`` re-drives a run from recorded
transcripts.

Exit codes: 0 success (a run that terminates NotResolved still executed
successfully), 1 runtime failure, 2 usage error. Each subcommand confines its
writes to the output directory it reports.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import prompts
from .bench import (
    TargetPaper,
    build_task_bundle,
    extract_model_name,
    extract_references,
    generate_instruction,
    name_variants,
)
from .config import RunConfig, load_config
from .errors import PipelineError
from .evaluation import (
    PanelConfig,
    aggregate,
    assess_completion,
    assess_correctness,
    format_ratio,
    pair_by_tfidf,
    review_panel,
    validate_reviewer,
)
from .gateway import Gateway
from .orchestrator import ResearchTask, RunManifest
from .pipeline import (
    live_gateway,
    mock_gateway,
    replay_gateway,
    run_pipeline,
)

logger = logging.getLogger(__name__)

CORPUS_SUFFIXES = (".txt", ".md", ".tex")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="autoresearch",
        description="Autonomous research runs: build tasks, execute, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", metavar="FILE", help="TOML configuration file")
        p.add_argument("--seed", type=int, help="override the configured random seed")
        p.add_argument("--format", choices=("text", "json"), default="text")

    bench = sub.add_parser("bench", help="benchmark construction")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)
    build = bench_sub.add_parser(
        "build", help="distill a paper directory into a task bundle"
    )
    build.add_argument("paper_dir", type=Path)
    build.add_argument("--out", type=Path, default=Path("bench_out"))
    build.add_argument("--mock-llm", metavar="DIR", type=Path)
    common(build)

    run = sub.add_parser("run", help="execute one research task end to end")
    run.add_argument("--task", required=True, type=Path)
    run.add_argument(
        "--mock-llm",
        metavar="DIR",
        type=Path,
        help="fixtures directory with scripted agent responses; no network",
    )
    run.add_argument("--run-dir", type=Path, help="default: runs/<task_id>")
    common(run)

    ev = sub.add_parser("eval", help="evaluate research outputs")
    ev_sub = ev.add_subparsers(dest="eval_command", required=True)
    impl = ev_sub.add_parser("impl", help="completion and advisor-report correctness")
    impl.add_argument("run_dir", type=Path)
    impl.add_argument("--mock-llm", metavar="DIR", type=Path)
    common(impl)
    papers = ev_sub.add_parser("papers", help="debiased pairwise manuscript review")
    papers.add_argument("--candidate", required=True, type=Path)
    papers.add_argument("--reference", required=True, type=Path)
    papers.add_argument("--eval-dir", type=Path, default=Path("eval"))
    papers.add_argument("--mock-llm", metavar="DIR", type=Path)
    common(papers)

    vr = sub.add_parser(
        "validate-reviewer", help="check the panel on accepted-vs-rejected pairs"
    )
    vr.add_argument(
        "--pairs",
        required=True,
        type=Path,
        help="directory with accepted/ and rejected/ document subdirectories",
    )
    vr.add_argument("--assessments", type=int, default=1)
    vr.add_argument("--out", type=Path, default=Path("reviewer_validation"))
    vr.add_argument("--mock-llm", metavar="DIR", type=Path)
    common(vr)

    rp = sub.add_parser("replay", help="re-drive a run from recorded transcripts")
    rp.add_argument("transcripts", type=Path)
    rp.add_argument("--task", required=True, type=Path)
    rp.add_argument("--fixtures", type=Path, help="fixture bundle for sources and repos")
    rp.add_argument("--run-dir", type=Path, help="default: runs/<task_id>-replay")
    common(rp)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _dispatch(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "bench":
        return _cmd_bench_build(args)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "eval":
        if args.eval_command == "impl":
            return _cmd_eval_impl(args)
        return _cmd_eval_papers(args)
    if args.command == "validate-reviewer":
        return _cmd_validate_reviewer(args)
    return _cmd_replay(args)


# --- shared plumbing -------------------------------------------------------


def _load_config(args: argparse.Namespace) -> RunConfig:
    return load_config(args.config, overrides={"seed": args.seed})


def _gateway(args: argparse.Namespace, config: RunConfig, out_dir: Path) -> Gateway:
    if args.mock_llm is not None:
        return mock_gateway(args.mock_llm, out_dir, config)
    return live_gateway(out_dir, config)


def _panel(config: RunConfig) -> PanelConfig:
    return PanelConfig(
        judges=tuple(config.panel_judges),
        assessments_per_judge=config.assessments_per_judge,
        temperature=config.review_temperature,
        guidelines=prompts.review_guidelines(config.assets_dir),
    )


def _emit(args: argparse.Namespace, lines: Sequence[str], doc: dict[str, Any]) -> None:
    if args.format == "json":
        print(json.dumps(doc, indent=2))
    else:
        for line in lines:
            print(line)


def _read_corpus(corpus_dir: Path) -> list[str]:
    if not corpus_dir.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {corpus_dir}")
    texts = [
        path.read_text(encoding="utf-8")
        for path in sorted(corpus_dir.iterdir())
        if path.is_file() and path.suffix in CORPUS_SUFFIXES
    ]
    if not texts:
        raise FileNotFoundError(f"no {'/'.join(CORPUS_SUFFIXES)} documents in {corpus_dir}")
    return texts


# --- subcommands -----------------------------------------------------------


def _cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args)
    task = ResearchTask.load(args.task)
    run_dir = args.run_dir if args.run_dir is not None else Path("runs") / task.task_id
    run_dir.mkdir(parents=True, exist_ok=True)
    gateway = _gateway(args, config, run_dir)
    manifest = run_pipeline(
        task, config, run_dir=run_dir, gateway=gateway, fixtures_dir=args.mock_llm
    )
    return _report_run(args, manifest, run_dir)


def _cmd_replay(args: argparse.Namespace) -> int:
    config = _load_config(args)
    task = ResearchTask.load(args.task)
    run_dir = (
        args.run_dir if args.run_dir is not None else Path("runs") / f"{task.task_id}-replay"
    )
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = run_pipeline(
        task,
        config,
        run_dir=run_dir,
        gateway=replay_gateway(args.transcripts),
        fixtures_dir=args.fixtures,
    )
    return _report_run(args, manifest, run_dir)


def _report_run(args: argparse.Namespace, manifest: RunManifest, run_dir: Path) -> int:
    termination = manifest.termination or {}
    doc = {
        "task_id": manifest.task_id,
        "seed": manifest.seed,
        "termination": termination,
        "stages": manifest.stages(),
        "artifacts": manifest.artifacts,
        "run_dir": str(run_dir),
    }
    lines = [
        f"run {manifest.task_id}: {termination.get('kind', 'unknown')}",
        f"  note: {termination.get('note', '')}",
        "  stages: " + " -> ".join(manifest.stages()),
        f"  run dir: {run_dir}",
    ]
    _emit(args, lines, doc)
    return 0


def _cmd_bench_build(args: argparse.Namespace) -> int:
    config = _load_config(args)
    paper = TargetPaper.from_dir(args.paper_dir)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    gateway = _gateway(args, config, out)
    selection = extract_references(paper, gateway, out_dir=out / "analysis")
    names = name_variants(extract_model_name(gateway, paper.title, paper.text))
    instruction = generate_instruction(paper, gateway, known_names=names)
    task_dir = build_task_bundle(paper, selection, instruction, out)
    doc = {
        "task_dir": str(task_dir),
        "references": len(selection.entries),
        "masked_names": list(names),
    }
    lines = [
        f"bench task written to {task_dir}",
        f"  references selected: {len(selection.entries)}",
        "  masked names: " + (", ".join(names) if names else "none detected"),
    ]
    _emit(args, lines, doc)
    return 0


def _cmd_eval_impl(args: argparse.Namespace) -> int:
    config = _load_config(args)
    run_dir: Path = args.run_dir
    manifest = RunManifest.load(run_dir)
    completion = assess_completion([manifest])
    doc: dict[str, Any] = {
        "task_id": manifest.task_id,
        "completion_ratio": completion,
        "completion_display": format_ratio(completion),
    }
    lines = [f"run {manifest.task_id}: completion {format_ratio(completion)}"]

    reports = sorted((run_dir / "runs").glob("attempt-*/advisor.json"))
    if reports:
        eval_dir = run_dir / "eval"
        eval_dir.mkdir(exist_ok=True)
        gateway = _gateway(args, config, eval_dir)
        correctness = assess_correctness(
            [reports[-1].read_text(encoding="utf-8")], _panel(config), gateway
        )
        doc["correctness_mean"] = correctness
        lines.append(f"  advisor-report correctness: {correctness:.2f} / 5")
    else:
        lines.append("  no advisor reports found; correctness skipped")
    _emit(args, lines, doc)
    return 0


def _cmd_eval_papers(args: argparse.Namespace) -> int:
    config = _load_config(args)
    candidate = args.candidate.read_text(encoding="utf-8")
    reference = args.reference.read_text(encoding="utf-8")
    eval_dir: Path = args.eval_dir
    eval_dir.mkdir(parents=True, exist_ok=True)
    gateway = _gateway(args, config, eval_dir)
    verdicts = review_panel(
        candidate,
        reference,
        _panel(config),
        gateway,
        seed=config.seed,
        eval_dir=eval_dir,
    )
    report = aggregate(verdicts)
    doc = report.to_dict()
    doc["verdicts"] = len(verdicts)
    doc["eval_dir"] = str(eval_dir)
    (eval_dir / "report.json").write_text(json.dumps(doc, indent=2), encoding="utf-8")
    lines = [
        f"pairwise review over {len(verdicts)} verdicts: {report.summary()}",
        f"  verdicts and report saved under {eval_dir}",
    ]
    _emit(args, lines, doc)
    return 0


def _cmd_validate_reviewer(args: argparse.Namespace) -> int:
    config = _load_config(args)
    accepted = _read_corpus(args.pairs / "accepted")
    rejected = _read_corpus(args.pairs / "rejected")
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    gateway = _gateway(args, config, out)
    matched = pair_by_tfidf(accepted, rejected)
    pairs = [(accepted[p.accepted_index], rejected[p.rejected_index]) for p in matched]
    report = validate_reviewer(
        pairs, _panel(config), gateway, seed=config.seed, assessments=args.assessments
    )
    doc = report.to_dict()
    doc["pairs"] = len(pairs)
    doc["similarities"] = [round(p.similarity, 4) for p in matched]
    (out / "report.json").write_text(json.dumps(doc, indent=2), encoding="utf-8")
    acc = report.acc_better_pct if report.acc_better_pct is not None else 0.0
    lines = [
        f"reviewer validation over {len(pairs)} pair(s): {report.summary()}",
        f"  accepted paper preferred in {acc:.2f}% of assessments",
        f"  report saved to {out / 'report.json'}",
    ]
    _emit(args, lines, doc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
