"""Concept decomposition, paper/code surveying, ideation, and planning.

This is the analysis layer between acquired sources and the implementation
loop. An idea is broken into uniquely named atomic concepts; each concept
is profiled against the LaTeX corpus (math spans) and the cloned repos
(code anchors); Level-2 runs generate their own idea by scoring five
candidate directions and elaborating the winner; and everything funnels
into an implementation plan whose testing section is mandatory.

Agent outputs are parsed strictly: any malformed reply earns exactly one
re-prompt, then a hard error.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .errors import (
    DuplicateConcept,
    EmptyIdea,
    MalformedProposal,
    MissingTestingPlan,
)
from .gateway import Gateway, chat_request
from .parsing import extract_json

logger = logging.getLogger(__name__)

RETRIEVAL_TOP_K = 6


@dataclass(frozen=True)
class AtomicConcept:
    name: str
    definition: str

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise ValueError("concept name must be non-empty")


@dataclass(frozen=True)
class MathSpan:
    source_file: str
    line_start: int
    line_end: int
    latex: str


@dataclass(frozen=True)
class CodeAnchor:
    repo: str
    file_path: str
    symbol: str


@dataclass(frozen=True)
class ConceptProfile:
    concept: AtomicConcept
    math_spans: tuple[MathSpan, ...] = ()
    code_anchors: tuple[CodeAnchor, ...] = ()
    integration_notes: str = ""

    @property
    def complete(self) -> bool:
        return bool(self.math_spans) and bool(self.code_anchors)


@dataclass(frozen=True)
class Direction:
    """One candidate research direction with its three criterion scores."""

    text: str
    novelty: int
    soundness: int
    transformative: int

    def __post_init__(self) -> None:
        for name in ("novelty", "soundness", "transformative"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
                raise ValueError(f"{name} must be an integer in 1..5, got {value!r}")

    @property
    def total(self) -> int:
        return self.novelty + self.soundness + self.transformative


IDEA_SECTIONS = (
    "challenges",
    "existing_methods",
    "motivation",
    "proposed_method",
    "technical_details",
    "expected_outcomes",
)


@dataclass(frozen=True)
class IdeaProposal:
    challenges: str
    existing_methods: str
    motivation: str
    proposed_method: str
    technical_details: str
    expected_outcomes: str

    def __post_init__(self) -> None:
        for name in IDEA_SECTIONS:
            if not getattr(self, name).strip():
                raise ValueError(f"idea section {name!r} must be non-empty")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "IdeaProposal":
        missing = [k for k in IDEA_SECTIONS if not str(data.get(k, "")).strip()]
        if missing:
            raise MalformedProposal(f"idea proposal missing sections: {', '.join(missing)}")
        extras = set(data) - set(IDEA_SECTIONS)
        if extras:
            logger.info("ignoring extra idea sections: %s", sorted(extras))
        return cls(**{k: str(data[k]) for k in IDEA_SECTIONS})

    def to_text(self) -> str:
        parts = []
        for name in IDEA_SECTIONS:
            title = name.replace("_", " ").title()
            parts.append(f"{title}:\n{getattr(self, name)}")
        return "\n\n".join(parts)


@dataclass(frozen=True)
class ImplementationPlan:
    dataset_plan: str
    model_plan: str
    training_plan: str
    testing_plan: str
    risk_notes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.testing_plan.strip():
            raise MissingTestingPlan("the testing plan is mandatory and must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset_plan": self.dataset_plan,
            "model_plan": self.model_plan,
            "training_plan": self.training_plan,
            "testing_plan": self.testing_plan,
            "risk_notes": list(self.risk_notes),
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ImplementationPlan":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            dataset_plan=data["dataset_plan"],
            model_plan=data["model_plan"],
            training_plan=data["training_plan"],
            testing_plan=data["testing_plan"],
            risk_notes=tuple(data.get("risk_notes", ())),
        )


@dataclass
class SurveyNotes:
    """Per-concept profiles plus free-form context, rendered to markdown."""

    profiles: list[ConceptProfile] = field(default_factory=list)
    context: str = ""

    def add(self, profile: ConceptProfile) -> None:
        self.profiles.append(profile)

    def complete_profiles(self) -> list[ConceptProfile]:
        return [p for p in self.profiles if p.complete]

    def render(self) -> str:
        lines = ["# Survey notes", ""]
        if self.context:
            lines += [self.context, ""]
        for profile in self.profiles:
            status = "complete" if profile.complete else "partial"
            lines.append(f"## {profile.concept.name} ({status})")
            lines.append(profile.concept.definition)
            if profile.math_spans:
                lines.append("")
                lines.append("Math spans:")
                for span in profile.math_spans:
                    lines.append(
                        f"- {span.source_file}:{span.line_start}-{span.line_end}: {span.latex}"
                    )
            if profile.code_anchors:
                lines.append("")
                lines.append("Code anchors:")
                for anchor in profile.code_anchors:
                    lines.append(f"- {anchor.repo}/{anchor.file_path} :: {anchor.symbol}")
            if profile.integration_notes:
                lines.append("")
                lines.append(profile.integration_notes)
            lines.append("")
        return "\n".join(lines)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.render(), encoding="utf-8")


# --- decomposition --------------------------------------------------------


def _unique_names(concepts: Sequence[AtomicConcept]) -> bool:
    names = [c.name.strip().lower() for c in concepts]
    return len(names) == len(set(names))


def decompose(idea: str, gateway: Gateway, *, context: str = "") -> list[AtomicConcept]:
    """Break an idea into uniquely named atomic concepts (at least one)."""
    if not idea.strip():
        raise EmptyIdea("cannot decompose an empty idea")
    system = (
        "You decompose a research idea into atomic academic concepts. Reply "
        'with JSON only: [{"name": "<short name>", "definition": "<one paragraph>"}, ...]. '
        "Names must be unique."
    )
    prompt = f"Idea:\n{idea}"
    if context:
        prompt += f"\n\nContext:\n{context}"
    last_problem = ""
    for round_no in range(2):
        request = chat_request(system, prompt if not last_problem else f"{last_problem}\n\n{prompt}", agent="concept-decomposer")
        data = extract_json(gateway.complete(request).text or "")
        concepts = _parse_concepts(data)
        if concepts is None:
            last_problem = "Your previous reply was not a valid JSON list of concepts. Reply with JSON only."
            continue
        if not _unique_names(concepts):
            if round_no == 1:
                raise DuplicateConcept("concept names still duplicated after one re-prompt")
            last_problem = "Your previous reply contained duplicate concept names. Make every name unique."
            continue
        return concepts
    raise MalformedProposal("concept decomposition produced no parseable output")


def _parse_concepts(data: Any) -> list[AtomicConcept] | None:
    if not isinstance(data, list) or not data:
        return None
    out = []
    for item in data:
        if not isinstance(item, dict) or not str(item.get("name", "")).strip():
            return None
        out.append(AtomicConcept(str(item["name"]).strip(), str(item.get("definition", "")).strip()))
    return out


# --- retrieval ------------------------------------------------------------

_SECTION_RE = re.compile(r"^\\section\*?\{([^}]*)\}", re.MULTILINE)
_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class CorpusChunk:
    source_file: str
    section: str
    line_start: int  # 1-based, inclusive
    line_end: int  # inclusive
    text: str


def chunk_latex(source_file: str, text: str) -> list[CorpusChunk]:
    """Split a LaTeX document into per-section chunks (preamble included)."""
    lines = text.splitlines()
    boundaries: list[tuple[int, str]] = []  # (0-based line index, title)
    for idx, line in enumerate(lines):
        match = _SECTION_RE.match(line.strip())
        if match:
            boundaries.append((idx, match.group(1)))
    chunks: list[CorpusChunk] = []
    if not boundaries or boundaries[0][0] > 0:
        end = boundaries[0][0] if boundaries else len(lines)
        if any(ln.strip() for ln in lines[:end]):
            chunks.append(CorpusChunk(source_file, "preamble", 1, end, "\n".join(lines[:end])))
    for pos, (start, title) in enumerate(boundaries):
        end = boundaries[pos + 1][0] if pos + 1 < len(boundaries) else len(lines)
        chunks.append(
            CorpusChunk(source_file, title, start + 1, end, "\n".join(lines[start:end]))
        )
    return chunks


def _tokens(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.lower()))


def rank_chunks(
    chunks: Sequence[CorpusChunk], query: str, top_k: int = RETRIEVAL_TOP_K
) -> list[CorpusChunk]:
    """Lexical ranking: token overlap with the query, stable on ties."""
    query_tokens = _tokens(query)
    scored = []
    for idx, chunk in enumerate(chunks):
        chunk_tokens = _tokens(chunk.text) | _tokens(chunk.section)
        overlap = len(query_tokens & chunk_tokens)
        denom = len(query_tokens) or 1
        scored.append((-overlap / denom, idx, chunk))
    scored.sort(key=lambda item: (item[0], item[1]))
    return [chunk for _, _, chunk in scored[:top_k]]


# --- concept surveying ----------------------------------------------------


def _file_line_count(path: Path) -> int:
    return len(path.read_text(encoding="utf-8", errors="replace").splitlines())


def _validate_spans(
    raw: Any, corpus_files: Mapping[str, Path]
) -> tuple[list[MathSpan], list[str]]:
    spans: list[MathSpan] = []
    problems: list[str] = []
    if not isinstance(raw, list):
        return spans, ["spans payload was not a list"]
    for item in raw:
        try:
            name = str(item["file"])
            start = int(item["line_start"])
            end = int(item["line_end"])
            latex = str(item.get("latex", ""))
        except (KeyError, TypeError, ValueError):
            problems.append(f"malformed span entry: {item!r}")
            continue
        path = corpus_files.get(name)
        if path is None:
            problems.append(f"span cites unknown file {name}")
            continue
        count = _file_line_count(path)
        if not (1 <= start <= end <= count):
            problems.append(f"span {name}:{start}-{end} outside 1..{count}")
            continue
        spans.append(MathSpan(name, start, end, latex))
    return spans, problems


def _validate_anchors(
    raw: Any, repo_dirs: Mapping[str, Path]
) -> tuple[list[CodeAnchor], list[str]]:
    anchors: list[CodeAnchor] = []
    problems: list[str] = []
    if not isinstance(raw, list):
        return anchors, ["anchors payload was not a list"]
    for item in raw:
        try:
            repo = str(item["repo"])
            file_path = str(item["file"])
            symbol = str(item.get("symbol", ""))
        except (KeyError, TypeError):
            problems.append(f"malformed anchor entry: {item!r}")
            continue
        root = repo_dirs.get(repo)
        if root is None:
            problems.append(f"anchor cites unknown repo {repo}")
            continue
        if not (root / file_path).is_file():
            problems.append(f"anchor cites missing file {repo}/{file_path}")
            continue
        anchors.append(CodeAnchor(repo, file_path, symbol))
    return anchors, problems


def survey_concept(
    concept: AtomicConcept,
    corpus_files: Mapping[str, Path],
    repo_dirs: Mapping[str, Path],
    gateway: Gateway | None = None,
    *,
    top_k: int = RETRIEVAL_TOP_K,
) -> ConceptProfile:
    """Profile one concept: math spans from the corpus, anchors from repos.

    Nothing here is fatal: missing evidence on either side leaves the
    profile flagged partial. With no gateway, a deterministic lexical
    fallback stands in for the analyst agents.
    """
    query = f"{concept.name} {concept.definition}"
    chunks = [
        chunk
        for name, path in sorted(corpus_files.items())
        for chunk in chunk_latex(name, path.read_text(encoding="utf-8", errors="replace"))
    ]
    top_chunks = rank_chunks(chunks, query, top_k)

    if gateway is not None:
        spans = _agent_spans(concept, top_chunks, corpus_files, gateway)
        anchors, notes = _agent_anchors(concept, repo_dirs, gateway)
    else:
        spans = _heuristic_spans(concept, top_chunks)
        anchors = _heuristic_anchors(concept, repo_dirs)
        notes = ""
    if not notes:
        notes = (
            f"{len(spans)} math span(s) and {len(anchors)} code anchor(s) "
            f"collected for {concept.name}."
        )
    return ConceptProfile(
        concept=concept,
        math_spans=tuple(spans),
        code_anchors=tuple(anchors),
        integration_notes=notes,
    )


def _agent_spans(
    concept: AtomicConcept,
    top_chunks: Sequence[CorpusChunk],
    corpus_files: Mapping[str, Path],
    gateway: Gateway,
) -> list[MathSpan]:
    system = (
        "You are a paper analyst. Extract the mathematical formulations for one "
        "concept from the excerpts. Reply with JSON only: "
        '{"spans": [{"file": "<name>", "line_start": N, "line_end": N, "latex": "<formula>"}]}'
    )
    excerpt = "\n\n".join(
        f"[{c.source_file} lines {c.line_start}-{c.line_end}] {c.section}\n{c.text}"
        for c in top_chunks
    )
    prompt = f"Concept: {concept.name}\nDefinition: {concept.definition}\n\nExcerpts:\n{excerpt}"
    spans: list[MathSpan] = []
    for round_no in range(2):
        data = extract_json(gateway.complete(chat_request(system, prompt, agent="paper-analyst")).text or "")
        raw = data.get("spans") if isinstance(data, dict) else data
        spans, problems = _validate_spans(raw, corpus_files)
        if not problems or round_no == 1:
            if problems:
                logger.warning("dropping %d invalid span(s) for %s", len(problems), concept.name)
            break
        prompt = (
            "Some cited spans were invalid (" + "; ".join(problems) + "). "
            "Re-extract with line numbers inside the shown ranges.\n\n" + prompt
        )
    return spans


def _agent_anchors(
    concept: AtomicConcept,
    repo_dirs: Mapping[str, Path],
    gateway: Gateway,
) -> tuple[list[CodeAnchor], str]:
    from .sandbox.tools import VCS_DIRS

    listing_lines = []
    for repo, root in sorted(repo_dirs.items()):
        files = sorted(
            str(p.relative_to(root))
            for p in root.rglob("*")
            if p.is_file() and not any(part in VCS_DIRS for part in p.parts)
        )
        listing_lines.append(f"{repo}:\n" + "\n".join(f"  {f}" for f in files[:200]))
    system = (
        "You are a code analyst. Locate implementations of one concept in the "
        "listed repositories. Reply with JSON only: "
        '{"anchors": [{"repo": "<name>", "file": "<relative path>", "symbol": "<function or class>"}], '
        '"notes": "<how code and math connect>"}'
    )
    prompt = (
        f"Concept: {concept.name}\nDefinition: {concept.definition}\n\n"
        "Repositories:\n" + "\n".join(listing_lines)
    )
    anchors: list[CodeAnchor] = []
    notes = ""
    for round_no in range(2):
        data = extract_json(gateway.complete(chat_request(system, prompt, agent="code-analyst")).text or "")
        raw = data.get("anchors") if isinstance(data, dict) else data
        if isinstance(data, dict):
            notes = str(data.get("notes", ""))
        anchors, problems = _validate_anchors(raw, repo_dirs)
        if not problems or round_no == 1:
            if problems:
                logger.warning("dropping %d invalid anchor(s) for %s", len(problems), concept.name)
            break
        prompt = (
            "Some anchors were invalid (" + "; ".join(problems) + "). "
            "Cite only files that exist.\n\n" + prompt
        )
    return anchors, notes


def _heuristic_spans(
    concept: AtomicConcept, top_chunks: Sequence[CorpusChunk]
) -> list[MathSpan]:
    name_tokens = _tokens(concept.name)
    spans = []
    for chunk in top_chunks:
        for offset, line in enumerate(chunk.text.splitlines()):
            if ("$" in line or "\\begin{equation" in line) and name_tokens & _tokens(line):
                line_no = chunk.line_start + offset
                spans.append(MathSpan(chunk.source_file, line_no, line_no, line.strip()))
    return spans[:5]


def _heuristic_anchors(
    concept: AtomicConcept, repo_dirs: Mapping[str, Path]
) -> list[CodeAnchor]:
    name_tokens = _tokens(concept.name)
    symbol_re = re.compile(r"^\s*(?:def|class)\s+([A-Za-z_][A-Za-z0-9_]*)", re.MULTILINE)
    anchors = []
    for repo, root in sorted(repo_dirs.items()):
        for path in sorted(root.rglob("*.py")):
            text = path.read_text(encoding="utf-8", errors="replace")
            for match in symbol_re.finditer(text):
                symbol = match.group(1)
                if name_tokens & _tokens(symbol.replace("_", " ")):
                    anchors.append(CodeAnchor(repo, str(path.relative_to(root)), symbol))
    return anchors[:5]


# --- ideation (Level-2) ---------------------------------------------------


def propose_directions(context: str, gateway: Gateway) -> list[Direction]:
    """Divergent step: exactly five distinct directions, each scored 1-5."""
    system = (
        "You are a research idea generator. Propose exactly five conceptually "
        "distinct research directions grounded in the context, and score each "
        "for novelty, soundness, and transformative potential as integers 1-5. "
        'Reply with JSON only: [{"direction": "...", "novelty": N, '
        '"soundness": N, "transformative": N}, ...]'
    )
    prompt = f"Context:\n{context}"
    for round_no in range(2):
        data = extract_json(gateway.complete(chat_request(system, prompt, agent="idea-generator")).text or "")
        directions = _parse_directions(data)
        if directions is None:
            if round_no == 1:
                raise MalformedProposal("direction generation failed after one re-prompt")
            prompt = (
                "Your previous reply was not five valid scored directions. "
                "Reply with JSON only.\n\n" + prompt
            )
            continue
        if not _distinct_directions(directions):
            if round_no == 1:
                raise MalformedProposal("directions still not distinct after one regeneration")
            prompt = (
                "Your five directions were not conceptually distinct. Generate "
                "five clearly different directions.\n\n" + prompt
            )
            continue
        return directions
    raise MalformedProposal("direction generation failed")


def _parse_directions(data: Any) -> list[Direction] | None:
    if not isinstance(data, list) or len(data) != 5:
        return None
    out = []
    for item in data:
        if not isinstance(item, dict):
            return None
        try:
            out.append(
                Direction(
                    text=str(item["direction"]),
                    novelty=int(item["novelty"]),
                    soundness=int(item["soundness"]),
                    transformative=int(item["transformative"]),
                )
            )
        except (KeyError, TypeError, ValueError):
            return None
    return out


def _distinct_directions(directions: Sequence[Direction]) -> bool:
    normalized = {" ".join(d.text.lower().split()) for d in directions}
    return len(normalized) == len(directions)


def select_direction(directions: Sequence[Direction]) -> int:
    """Convergent step: argmax of total score, first occurrence on ties."""
    best = 0
    for idx, direction in enumerate(directions):
        if direction.total > directions[best].total:
            best = idx
    return best


def elaborate_direction(direction: Direction, context: str, gateway: Gateway) -> IdeaProposal:
    system = (
        "You elaborate a chosen research direction into a structured proposal. "
        "Reply with JSON only, containing exactly these keys: "
        + ", ".join(IDEA_SECTIONS)
    )
    prompt = f"Chosen direction:\n{direction.text}\n\nContext:\n{context}"
    for round_no in range(2):
        data = extract_json(gateway.complete(chat_request(system, prompt, agent="idea-elaborator")).text or "")
        if isinstance(data, dict):
            try:
                return IdeaProposal.from_mapping(data)
            except MalformedProposal as exc:
                if round_no == 1:
                    raise
                prompt = f"Your previous reply was incomplete ({exc}). Include every section.\n\n{prompt}"
                continue
        if round_no == 1:
            raise MalformedProposal("idea elaboration produced no parseable proposal")
        prompt = "Your previous reply was not valid JSON. Reply with JSON only.\n\n" + prompt
    raise MalformedProposal("idea elaboration failed")


def generate_idea(context: str, gateway: Gateway) -> IdeaProposal:
    """Divergent-convergent ideation: five directions, pick best, elaborate."""
    directions = propose_directions(context, gateway)
    winner = directions[select_direction(directions)]
    return elaborate_direction(winner, context, gateway)


# --- planning -------------------------------------------------------------


def build_plan(
    profiles: Sequence[ConceptProfile],
    gateway: Gateway | None = None,
    *,
    idea: str = "",
) -> ImplementationPlan:
    """Produce the four-section plan; the testing plan is non-negotiable."""
    complete = [p for p in profiles if p.complete]
    if not complete:
        raise ValueError("planning requires at least one complete concept profile")
    partial = [p for p in profiles if not p.complete]
    model_plan = _model_plan_from(complete)
    risk_notes = tuple(
        f"partial evidence for {p.concept.name}: "
        + ("no math spans" if not p.math_spans else "no code anchors")
        for p in partial
    )

    if gateway is None:
        return ImplementationPlan(
            dataset_plan="Use the datasets named by the task; start from the smallest split.",
            model_plan=model_plan,
            training_plan="Train the implemented model with the default budget; log metrics per epoch.",
            testing_plan="Evaluate on the held-out split and write metrics to results.json.",
            risk_notes=risk_notes,
        )

    plans = _agent_plans(complete, gateway, idea)
    if not plans.get("testing", "").strip():
        raise MissingTestingPlan("the plan agent produced no testing plan after one re-prompt")
    return ImplementationPlan(
        dataset_plan=plans.get("dataset", "").strip() or "Use the task datasets as provided.",
        model_plan=model_plan,
        training_plan=plans.get("training", "").strip() or "Train with the default budget.",
        testing_plan=plans["testing"].strip(),
        risk_notes=risk_notes,
    )


def _model_plan_from(complete: Sequence[ConceptProfile]) -> str:
    lines = ["Model plan grounded in the survey notes:"]
    for profile in complete:
        anchors = ", ".join(
            f"{a.repo}/{a.file_path}::{a.symbol}" for a in profile.code_anchors[:3]
        )
        lines.append(f"- {profile.concept.name}: adapt patterns from {anchors}")
    return "\n".join(lines)


def _agent_plans(
    complete: Sequence[ConceptProfile], gateway: Gateway, idea: str
) -> dict[str, str]:
    from .gateway import extract_tool_calls
    from .sandbox.tools import schemas_for

    tools = schemas_for(["plan_dataset", "plan_training", "plan_testing", "case_resolved"])
    system = (
        "You are a planning agent. Record the dataset, training, and testing "
        "plans by calling plan_dataset, plan_training, and plan_testing, then "
        "call case_resolved. The testing plan is mandatory."
    )
    summary = "\n".join(f"- {p.concept.name}: {p.concept.definition}" for p in complete)
    prompt = f"Idea:\n{idea or '(as surveyed)'}\n\nComplete concepts:\n{summary}"
    plans: dict[str, str] = {}
    reprompted = False
    for _ in range(8):
        response = gateway.complete(
            chat_request(system, prompt, tools=tools, agent="plan-agent")
        )
        calls = extract_tool_calls(response, tools)
        done = False
        for call in calls:
            if call.name == "case_resolved":
                done = True
            elif call.name.startswith("plan_"):
                plans[call.name.removeprefix("plan_")] = str(
                    call.args.get("plan", call.args.get("content", ""))
                )
        if response.is_text or done:
            if plans.get("testing", "").strip() or reprompted:
                break
            reprompted = True
            prompt = (
                "You have not recorded a testing plan. The testing plan is "
                "mandatory: call plan_testing now.\n\n" + prompt
            )
            continue
    return plans
