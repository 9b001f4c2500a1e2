"""Hierarchical manuscript generation in three phases.

Phase one iterates a LaTeX section skeleton (one top-level section, annotated
subsections). Phase two elaborates each subsection against a writing template.
Phase three revises text under a fixed checklist and gates the result with a
mechanical lint. Assembly concatenates drafts deterministically, validates
figure references, and emits ``paper/main.tex`` plus ``paper/outline.json``.
"""

from __future__ import annotations

import json
import re
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    DanglingArtifactRef,
    LintFail,
    MissingSubsection,
    NameNotInOutline,
    UnparsableSkeleton,
)
from .gateway import Gateway, chat_request
from .parsing import extract_fenced

STRUCTURE_SYSTEM = (
    "You write the technical methodology skeleton of a research paper in "
    "LaTeX. Produce exactly one top-level \\section named after the proposed "
    "method, with \\subsection (and optional \\subsubsection) entries for its "
    "components. Directly under the section command and under every "
    "subsection command, add % comment lines describing the component's "
    "purpose, inputs and outputs, and how it connects to the rest of the "
    "framework. Cover model design only; leave out experimental setup and "
    "hyperparameters. When a current skeleton is given, refine it: keep or "
    "rename its entries and add detail, never shrink it. Output only LaTeX."
)

ELABORATE_SYSTEM = (
    "You write one subsection of a methodology section in LaTeX, grounding "
    "every claim in the supplied technical content and using the skeleton "
    "only for context. When current text exists, improve it while keeping "
    "its valid equations and technical statements verbatim where possible. "
    "Use the writing template for tone and structure, not wording. No "
    "markdown syntax. Output only the LaTeX for this subsection."
)

REVISE_SYSTEM = (
    "You revise LaTeX manuscript text against a checklist. Apply every "
    "checklist area, keep the technical content intact, and reply with the "
    "revised LaTeX only, no commentary, no markdown formatting."
)

DEFAULT_CHECKLIST_ITEMS = (
    "Academic writing style: strip markdown or code-style formatting and "
    "keep formal, consistent technical language.",
    "Mathematical formulation: check notation and equation correctness, "
    "consistent variable names, and equation references; avoid long plain "
    "text inside equations.",
    "Math in writing: describe every important mechanism with well-defined "
    "equations, grouping related simple equations rather than displaying "
    "trivial ones alone.",
    "Content focus: trim explanations of well-known concepts in favor of "
    "\\cite{} references and keep the emphasis on the novel contributions.",
    "Section titles: replace generic component titles with specific 3-6 "
    "word titles that signal the novelty and the application domain.",
)


@dataclass(frozen=True)
class Checklist:
    items: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.items:
            raise ValueError("checklist needs at least one item")

    def render(self) -> str:
        return "\n".join(f"{i}. {item}" for i, item in enumerate(self.items, start=1))


DEFAULT_CHECKLIST = Checklist(DEFAULT_CHECKLIST_ITEMS)

DEFAULT_TEMPLATE = (
    "Introduce the component and its motivation, present the formulation "
    "with displayed equations, then explain how the pieces interact and "
    "what the design buys over the alternatives."
)


@dataclass(frozen=True)
class OutlineNode:
    name: str
    children: tuple["OutlineNode", ...] = ()


@dataclass(frozen=True)
class SectionStructure:
    skeleton: str
    iteration: int
    section: str
    subsections: tuple[OutlineNode, ...]

    def node_names(self) -> tuple[str, ...]:
        names: list[str] = []
        for sub in self.subsections:
            names.append(sub.name)
            names.extend(child.name for child in sub.children)
        return tuple(names)

    @property
    def node_count(self) -> int:
        return len(self.node_names())

    def leaves(self) -> tuple[str, ...]:
        out: list[str] = []
        for sub in self.subsections:
            if sub.children:
                out.extend(child.name for child in sub.children)
            else:
                out.append(sub.name)
        return tuple(out)

    def level_of(self, name: str) -> str:
        for sub in self.subsections:
            if sub.name == name:
                return "subsection"
            for child in sub.children:
                if child.name == name:
                    return "subsubsection"
        raise NameNotInOutline(name)

    def to_outline_dict(self) -> dict:
        return {
            "section": self.section,
            "iteration": self.iteration,
            "subsections": [
                {"name": sub.name, "subsubsections": [c.name for c in sub.children]}
                for sub in self.subsections
            ],
        }


@dataclass(frozen=True)
class SubsectionDraft:
    name: str
    body: str
    generation: int = 1


@dataclass(frozen=True)
class Manuscript:
    tex: str
    sections: tuple[str, ...]
    artifacts: tuple[str, ...] = ()
    evidence: tuple[str, ...] = ()


# --- skeleton parsing -----------------------------------------------------

_SECTIONING = re.compile(r"^\s*\\(section|subsection|subsubsection)\*?\{(.*)\}\s*$")


def _command_lines(text: str) -> list[tuple[int, str, str]]:
    found = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        match = _SECTIONING.match(line)
        if match:
            found.append((lineno, match.group(1), match.group(2).strip()))
    return found


def parse_structure(text: str, iteration: int = 1) -> SectionStructure:
    """Parse a skeleton; reject anything that is not one annotated section."""
    lines = text.splitlines()
    commands = _command_lines(text)
    sections = [c for c in commands if c[1] == "section"]
    if len(sections) != 1:
        raise UnparsableSkeleton(
            f"expected exactly one top-level \\section, found {len(sections)}"
        )
    if not any(kind == "subsection" for _, kind, _ in commands):
        raise UnparsableSkeleton("skeleton has no \\subsection entries")

    # annotation rule: a % comment line must follow the section command and
    # every subsection command before the next sectioning command
    needs_annotation = {
        lineno: name for lineno, kind, name in commands if kind in ("section", "subsection")
    }
    command_linenos = {lineno for lineno, _, _ in commands}
    for lineno, name in needs_annotation.items():
        annotated = False
        for follow in lines[lineno:]:
            if _SECTIONING.match(follow):
                break
            if follow.lstrip().startswith("%") and follow.lstrip("% \t"):
                annotated = True
                break
        if not annotated:
            raise UnparsableSkeleton(f"no comment annotation under {name!r}")

    section_name = sections[0][2]
    subsections: list[OutlineNode] = []
    children: list[OutlineNode] = []
    current: str | None = None
    for lineno, kind, name in commands:
        if kind == "subsection":
            if current is not None:
                subsections.append(OutlineNode(current, tuple(children)))
            current = name
            children = []
        elif kind == "subsubsection":
            if current is None:
                raise UnparsableSkeleton(f"\\subsubsection {name!r} before any \\subsection")
            children.append(OutlineNode(name))
    if current is not None:
        subsections.append(OutlineNode(current, tuple(children)))
    assert command_linenos
    return SectionStructure(
        skeleton=text,
        iteration=iteration,
        section=section_name,
        subsections=tuple(subsections),
    )


# --- phase one: structure -------------------------------------------------


def _strip_reply(reply: str) -> str:
    fenced = extract_fenced(reply, "latex") or extract_fenced(reply)
    return (fenced if fenced is not None else reply).strip()


def generate_structure(
    content: str,
    gateway: Gateway,
    *,
    current: SectionStructure | None = None,
    iteration: int = 1,
    budget: int = 2,
    system: str = STRUCTURE_SYSTEM,
) -> SectionStructure:
    """One structure iteration; refinements may grow the outline, never shrink it."""
    if iteration > budget:
        raise ValueError(f"iteration {iteration} exceeds budget {budget}")
    prompt = f"Iteration {iteration} of {budget}.\n\n"
    if current is not None:
        prompt += f"Current skeleton to refine:\n{current.skeleton}\n\n"
    prompt += f"Content to structure:\n{content}"
    last_problem = ""
    for round_no in range(2):
        reply = gateway.complete(chat_request(system, prompt, agent="writing-structure")).text or ""
        candidate = _strip_reply(reply)
        try:
            structure = parse_structure(candidate, iteration=iteration)
        except UnparsableSkeleton as exc:
            last_problem = str(exc)
        else:
            if current is not None and structure.node_count < current.node_count:
                last_problem = (
                    f"refinement shrank the outline from {current.node_count} "
                    f"to {structure.node_count} nodes"
                )
            else:
                return structure
        if round_no == 0:
            prompt = f"The previous skeleton was rejected: {last_problem}. Fix it.\n\n" + prompt
    raise UnparsableSkeleton(last_problem)


# --- phase two: elaboration -----------------------------------------------

_MD_HEADER = re.compile(r"^\s*#{1,6}\s+\S", re.MULTILINE)


def elaborate_subsection(
    name: str,
    structure: SectionStructure,
    new_content: str,
    template: str = DEFAULT_TEMPLATE,
    gateway: Gateway | None = None,
    *,
    current: SubsectionDraft | None = None,
    system: str = ELABORATE_SYSTEM,
) -> SubsectionDraft:
    """Write or revise one subsection; generation numbers count the passes."""
    if name not in structure.node_names():
        raise NameNotInOutline(name)
    if gateway is None:
        raise ValueError("elaboration requires a gateway")
    level = structure.level_of(name)
    generation = 1 if current is None else current.generation + 1
    prompt = f"Subsection to write: {name} (LaTeX \\{level}).\n\n"
    if current is not None:
        prompt += f"Current text (generation {current.generation}):\n{current.body}\n\n"
    prompt += (
        f"Skeleton for context:\n{structure.skeleton}\n\n"
        f"New technical content to incorporate:\n{new_content}\n\n"
        f"Writing template (for tone only):\n{template}"
    )
    last_problem = ""
    for round_no in range(2):
        reply = gateway.complete(chat_request(system, prompt, agent="writing-detail")).text or ""
        body = _strip_reply(reply)
        if not body:
            last_problem = "empty draft"
        elif _MD_HEADER.search(body):
            last_problem = "draft contains markdown-style headers"
        else:
            command = f"\\{level}{{{name}}}"
            if command not in body:
                body = f"{command}\n{body}"
            return SubsectionDraft(name=name, body=body, generation=generation)
        if round_no == 0:
            prompt = f"The previous draft was rejected: {last_problem}. Rewrite it.\n\n" + prompt
    raise LintFail(f"subsection draft for {name!r}: {last_problem}")


# --- phase three: checklist revision --------------------------------------


def _balanced_braces(text: str) -> bool:
    depth = 0
    i = 0
    in_comment = False
    while i < len(text):
        ch = text[i]
        if in_comment:
            if ch == "\n":
                in_comment = False
        elif ch == "\\" and i + 1 < len(text):
            i += 2  # escaped character, including \{ \} \%
            continue
        elif ch == "%":
            in_comment = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth < 0:
                return False
        i += 1
    return depth == 0


def lint_writing(text: str) -> list[str]:
    """Mechanical gate: markdown headers, code fences, brace balance."""
    problems = []
    if _MD_HEADER.search(text):
        problems.append("markdown-style header present")
    if "```" in text:
        problems.append("code fence present")
    if not _balanced_braces(text):
        problems.append("unbalanced braces")
    return problems


_ENV = re.compile(r"\\(begin|end)\{([^}]+)\}")


def check_compilable(tex: str) -> list[str]:
    """Brace and environment balance, a stand-in for a TeX engine pass."""
    problems: list[str] = []
    if not _balanced_braces(tex):
        problems.append("unbalanced braces")
    stack: list[str] = []
    for match in _ENV.finditer(tex):
        kind, env = match.group(1), match.group(2)
        if kind == "begin":
            stack.append(env)
        elif not stack:
            problems.append(f"\\end{{{env}}} without matching \\begin")
        elif stack[-1] != env:
            problems.append(f"\\end{{{env}}} closes \\begin{{{stack.pop()}}}")
        else:
            stack.pop()
    problems.extend(f"unclosed environment {env!r}" for env in stack)
    return problems


def revise_with_checklist(
    text: str,
    checklist: Checklist = DEFAULT_CHECKLIST,
    gateway: Gateway | None = None,
    *,
    system: str = REVISE_SYSTEM,
) -> str:
    """Checklist revision pass whose output must satisfy the mechanical lint."""
    if gateway is None:
        raise ValueError("revision requires a gateway")
    prompt = f"Checklist:\n{checklist.render()}\n\nText to revise:\n{text}"
    problems: list[str] = []
    for round_no in range(2):
        reply = gateway.complete(chat_request(system, prompt, agent="writing-revise")).text or ""
        revised = _strip_reply(reply)
        problems = lint_writing(revised)
        if not problems:
            return revised
        if round_no == 0:
            prompt = (
                "The previous revision failed the lint ("
                + "; ".join(problems)
                + "). Fix those issues.\n\n"
                + prompt
            )
    raise LintFail("; ".join(problems))


# --- assembly -------------------------------------------------------------

DEFAULT_PREAMBLE = (
    "\\documentclass{article}\n"
    "\\usepackage{amsmath}\n"
    "\\usepackage{graphicx}\n"
)

_INCLUDEGRAPHICS = re.compile(r"\\includegraphics(?:\[[^\]]*\])?\{([^}]+)\}")


def _as_mapping(drafts: Iterable[SubsectionDraft] | Mapping[str, SubsectionDraft]) -> dict[str, SubsectionDraft]:
    if isinstance(drafts, Mapping):
        return dict(drafts)
    out: dict[str, SubsectionDraft] = {}
    for draft in drafts:
        if draft.name in out:
            raise ValueError(f"duplicate draft for {draft.name!r}")
        out[draft.name] = draft
    return out


def assemble(
    drafts: Iterable[SubsectionDraft] | Mapping[str, SubsectionDraft],
    order: Sequence[str],
    *,
    structure: SectionStructure | None = None,
    section_header: str | None = None,
    title: str | None = None,
    artifact_root: Path | None = None,
    preamble: str = DEFAULT_PREAMBLE,
    evidence: Sequence[str] = (),
) -> Manuscript:
    """Deterministic concatenation with figure-reference validation."""
    by_name = _as_mapping(drafts)
    if structure is not None:
        for leaf in structure.leaves():
            if leaf not in by_name:
                raise MissingSubsection(leaf)
        if section_header is None:
            section_header = structure.section
    missing = [name for name in order if name not in by_name]
    if missing:
        raise MissingSubsection(missing[0])

    pieces = []
    if title:
        pieces.append(f"\\title{{{title}}}\n\\maketitle")
    if section_header:
        pieces.append(f"\\section{{{section_header}}}")
    pieces.extend(by_name[name].body for name in order)
    body = "\n\n".join(pieces)

    for ref in _INCLUDEGRAPHICS.findall(body):
        if artifact_root is None or not (artifact_root / ref).is_file():
            raise DanglingArtifactRef(ref)

    tex = (
        preamble
        + "\\begin{document}\n\n"
        + body
        + "\n\n% bibliography placeholder\n"
        + "\\bibliographystyle{plain}\n\\bibliography{references}\n"
        + "\\end{document}\n"
    )
    problems = check_compilable(tex)
    if problems:
        raise LintFail("assembled source fails validation: " + "; ".join(problems))
    return Manuscript(
        tex=tex,
        sections=tuple(order),
        artifacts=tuple(_INCLUDEGRAPHICS.findall(body)),
        evidence=tuple(evidence),
    )


def write_manuscript(
    manuscript: Manuscript,
    run_dir: Path,
    *,
    structure: SectionStructure | None = None,
    figures: Mapping[str, Path] | None = None,
) -> Path:
    """Persist under run_dir/paper: main.tex, outline.json, figures/."""
    paper_dir = run_dir / "paper"
    figures_dir = paper_dir / "figures"
    figures_dir.mkdir(parents=True, exist_ok=True)
    (paper_dir / "main.tex").write_text(manuscript.tex, encoding="utf-8")
    if structure is not None:
        (paper_dir / "outline.json").write_text(
            json.dumps(structure.to_outline_dict(), indent=2), encoding="utf-8"
        )
    for name, source in (figures or {}).items():
        shutil.copy2(source, figures_dir / name)
    return paper_dir
