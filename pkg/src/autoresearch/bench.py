"""Benchmark task construction from a target paper.

Three stages: a five-step reference-extraction dialogue whose every step is
schema-validated and persisted, Level-1 instruction generation with a
mechanical leak scan, and a two-pass anonymization protocol (name
extraction, then replacement) with sentinel handling. A task bundle is laid
out as ``task/{instruction.md, references/, datasets.md, ground_truth.ref}``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import jsonschema

from .errors import (
    ComponentOutOfRange,
    LeakDetected,
    ResidualName,
    SchemaViolation,
    SelectionOutOfBounds,
)
from .gateway import Gateway, chat_request
from .parsing import extract_json

SELECTION_MIN = 15
SELECTION_MAX = 25

IMPACT_WEIGHTS = {"frequency": 0.30, "location": 0.25, "depth": 0.25, "influence": 0.20}

REFERENCE_TYPES = ("methodological", "component", "conceptual")

STEP_FILENAMES = {
    1: "step1_citation_map.json",
    2: "step2_context_analysis.json",
    3: "step3_evidence.json",
    4: "step4_scores.json",
    5: "step5_top_papers.json",
}

_REF = {"type": "string", "minLength": 1}
_STR_LIST = {"type": "array", "items": {"type": "string"}}

STEP_SCHEMAS: dict[int, dict] = {
    1: {
        "type": "object",
        "required": ["citation_map"],
        "properties": {
            "citation_map": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["reference", "count", "sections", "quotes"],
                    "properties": {
                        "reference": _REF,
                        "count": {"type": "integer", "minimum": 0},
                        "sections": _STR_LIST,
                        "quotes": _STR_LIST,
                    },
                },
            }
        },
    },
    2: {
        "type": "object",
        "required": ["context_analysis"],
        "properties": {
            "context_analysis": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["reference", "indicators", "depth", "is_method", "quotes"],
                    "properties": {
                        "reference": _REF,
                        "indicators": _STR_LIST,
                        "depth": {"enum": ["detailed", "moderate", "brief"]},
                        "is_method": {"type": "boolean"},
                        "quotes": _STR_LIST,
                    },
                },
            }
        },
    },
    3: {
        "type": "object",
        "required": ["evidence"],
        "properties": {
            "evidence": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["reference", "borrowed", "changes", "evidence", "type"],
                    "properties": {
                        "reference": _REF,
                        "borrowed": _STR_LIST,
                        "changes": _STR_LIST,
                        "evidence": _STR_LIST,
                        "type": {"enum": ["foundation", "component", "inspiration"]},
                    },
                },
            }
        },
    },
    4: {
        "type": "object",
        "required": ["scores"],
        "properties": {
            "scores": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["reference", "total", "breakdown"],
                    "properties": {
                        "reference": _REF,
                        "total": {"type": "number"},
                        "breakdown": {
                            "type": "object",
                            "required": ["frequency", "location", "depth", "influence"],
                            "properties": {
                                key: {"type": "number", "minimum": 0, "maximum": 100}
                                for key in IMPACT_WEIGHTS
                            },
                        },
                    },
                },
            }
        },
    },
    5: {
        "type": "object",
        "required": ["top_papers"],
        "properties": {
            "top_papers": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["reference", "rank", "type", "justification", "usage"],
                    "properties": {
                        "reference": _REF,
                        "rank": {"type": "integer", "minimum": 1},
                        # the documented shape is a list, single strings tolerated
                        "type": {
                            "anyOf": [
                                {"enum": list(REFERENCE_TYPES)},
                                {
                                    "type": "array",
                                    "minItems": 1,
                                    "items": {"enum": list(REFERENCE_TYPES)},
                                },
                            ]
                        },
                        "justification": {"type": "string"},
                        "usage": {"type": "string"},
                    },
                },
            }
        },
    },
}

STEP_PROMPTS = {
    1: (
        "Step 1, citation pattern analysis. Map the citations in the paper: "
        "count how often each reference is cited, record the sections where "
        "it appears and the citation contexts, and list at least 15 of the "
        "most frequently cited papers. Reply with JSON only, shaped as "
        '{"citation_map": [{"reference": "<exact title from the reference '
        'list>", "count": <int>, "sections": ["..."], "quotes": ["..."]}]}'
    ),
    2: (
        "Step 2, context analysis. For each frequently cited paper, collect "
        "influence indicators, judge the discussion depth, and mark whether "
        "the citation is methodology-related. Reply with JSON only: "
        '{"context_analysis": [{"reference": "<exact title>", "indicators": '
        '["..."], "depth": "detailed|moderate|brief", "is_method": '
        '<bool>, "quotes": ["..."]}]}'
    ),
    3: (
        "Step 3, evidence collection. For each significant citation identify "
        "what was borrowed, how it was changed, and the supporting evidence. "
        'Reply with JSON only: {"evidence": [{"reference": "<exact title>", '
        '"borrowed": ["..."], "changes": ["..."], "evidence": ["..."], '
        '"type": "foundation|component|inspiration"}]}'
    ),
    4: (
        "Step 4, impact scoring. Score each reference 0-100 per component "
        "with weights 30% citation frequency, 25% location importance, 25% "
        "discussion depth, 20% direct influence. Reply with JSON only: "
        '{"scores": [{"reference": "<exact title>", "total": <number>, '
        '"breakdown": {"frequency": <0-100>, "location": <0-100>, '
        '"depth": <0-100>, "influence": <0-100>}}]}'
    ),
    5: (
        "Step 5, final selection. Select and rank the top 15-25 most "
        "influential papers with justification and usage. Reply with JSON "
        'only: {"top_papers": [{"reference": "<exact title>", "rank": '
        '<int>, "type": ["methodological|component|conceptual"], '
        '"justification": "...", "usage": "..."}]}'
    ),
}

EXTRACTION_SYSTEM = (
    "You identify the most influential references of a research paper along "
    "three axes: methodological foundations, critical components, and "
    "conceptual inspiration. Follow the step instructions exactly and reply "
    "with JSON matching the requested shape, nothing else."
)


@dataclass(frozen=True)
class TargetPaper:
    title: str
    text: str
    references: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.references:
            raise ValueError("target paper needs a non-empty reference list")

    @classmethod
    def from_dir(cls, paper_dir: Path) -> "TargetPaper":
        """Load title/text/references from a paper directory.

        Text comes from paper.tex or paper.md; references from
        references.json (a list of titles) or \\bibitem entries in the text.
        """
        text_path = next(
            (p for p in (paper_dir / "paper.tex", paper_dir / "paper.md") if p.is_file()), None
        )
        if text_path is None:
            raise FileNotFoundError(f"no paper.tex or paper.md under {paper_dir}")
        text = text_path.read_text(encoding="utf-8")
        title_match = re.search(r"\\title\{([^}]+)\}", text)
        if title_match:
            title = title_match.group(1).strip()
        else:
            heading = re.search(r"^#\s+(.+)$", text, re.MULTILINE)
            title = heading.group(1).strip() if heading else paper_dir.name
        refs_path = paper_dir / "references.json"
        if refs_path.is_file():
            references = tuple(str(r) for r in json.loads(refs_path.read_text(encoding="utf-8")))
        else:
            references = tuple(
                m.group(1).strip()
                for m in re.finditer(r"\\bibitem\{[^}]*\}\s*(.+)", text)
            )
        return cls(title=title, text=text, references=references)


@dataclass(frozen=True)
class ImpactBreakdown:
    frequency: float
    location: float
    depth: float
    influence: float

    def __post_init__(self) -> None:
        for name in IMPACT_WEIGHTS:
            value = getattr(self, name)
            if not 0 <= value <= 100:
                raise ComponentOutOfRange(f"{name}={value} outside [0, 100]")


def impact_total(b: ImpactBreakdown) -> float:
    return sum(IMPACT_WEIGHTS[name] * getattr(b, name) for name in IMPACT_WEIGHTS)


@dataclass(frozen=True)
class RankedReference:
    reference: str
    rank: int
    types: tuple[str, ...]
    justification: str = ""
    usage: str = ""

    def __post_init__(self) -> None:
        bad = [t for t in self.types if t not in REFERENCE_TYPES]
        if bad or not self.types:
            raise ValueError(f"invalid reference types: {bad or 'none given'}")


@dataclass(frozen=True)
class ReferenceSelection:
    entries: tuple[RankedReference, ...]

    def __post_init__(self) -> None:
        n = len(self.entries)
        if not SELECTION_MIN <= n <= SELECTION_MAX:
            raise SelectionOutOfBounds(
                f"selected {n} references, allowed range is "
                f"[{SELECTION_MIN}, {SELECTION_MAX}]"
            )
        ranks = sorted(e.rank for e in self.entries)
        if ranks != list(range(1, n + 1)):
            raise SelectionOutOfBounds(f"ranks must be 1..{n} without gaps, got {ranks}")

    def ordered(self) -> tuple[RankedReference, ...]:
        return tuple(sorted(self.entries, key=lambda e: e.rank))


@dataclass(frozen=True)
class InstructionDoc:
    text: str


@dataclass(frozen=True)
class ReplacedSpan:
    start: int
    end: int
    text: str


@dataclass(frozen=True)
class AnonymizedText:
    text: str
    replacements: tuple[ReplacedSpan, ...] = ()


# --- five-step extraction -------------------------------------------------


def _validate_step(step: int, data: Any) -> str:
    """Empty string when valid, else the first validation error."""
    if data is None:
        return "no JSON object found in the reply"
    try:
        jsonschema.validate(data, STEP_SCHEMAS[step])
    except jsonschema.ValidationError as exc:
        return exc.message
    return ""


def _step_call(
    gateway: Gateway, step: int, prompt: str, out_dir: Path | None
) -> dict:
    problem = ""
    for round_no in range(2):
        ask = prompt if round_no == 0 else (
            f"Your step {step} reply was rejected: {problem}. "
            "Reply again with JSON matching the documented shape.\n\n" + prompt
        )
        reply = gateway.complete(
            chat_request(EXTRACTION_SYSTEM, ask, agent=f"bench-step{step}")
        ).text or ""
        data = extract_json(reply)
        problem = _validate_step(step, data)
        if not problem:
            if out_dir is not None:
                out_dir.mkdir(parents=True, exist_ok=True)
                (out_dir / STEP_FILENAMES[step]).write_text(
                    json.dumps(data, indent=2, sort_keys=True), encoding="utf-8"
                )
            return data
    raise SchemaViolation(step, problem)


def _entry_types(raw: Any) -> tuple[str, ...]:
    if isinstance(raw, str):
        return (raw,)
    return tuple(str(t) for t in raw)


def extract_references(
    paper: TargetPaper, gateway: Gateway, *, out_dir: Path | None = None
) -> ReferenceSelection:
    """Run the five analysis steps, validating and persisting each output."""
    if not paper.text.strip():
        raise ValueError("target paper has no text")
    base = (
        f"Paper title: {paper.title}\n\nReference list:\n"
        + "\n".join(f"- {r}" for r in paper.references)
        + f"\n\nPaper text:\n{paper.text}"
    )
    outputs: dict[int, dict] = {}
    for step in range(1, 5):
        prior = ""
        if step > 1:
            prior = (
                f"\n\nStep {step - 1} output:\n"
                + json.dumps(outputs[step - 1], indent=2, sort_keys=True)
            )
        outputs[step] = _step_call(
            gateway, step, STEP_PROMPTS[step] + prior + "\n\n" + base, out_dir
        )

    known = set(paper.references)
    prompt5 = (
        STEP_PROMPTS[5]
        + "\n\nStep 4 output:\n"
        + json.dumps(outputs[4], indent=2, sort_keys=True)
        + "\n\n"
        + base
    )
    failure: Exception = SchemaViolation(5, "no reply")
    for round_no in range(2):
        ask = prompt5 if round_no == 0 else (
            f"Your selection was rejected: {failure}. Select between "
            f"{SELECTION_MIN} and {SELECTION_MAX} papers, rank them 1..n, and "
            "use exact titles from the reference list.\n\n" + prompt5
        )
        reply = gateway.complete(chat_request(EXTRACTION_SYSTEM, ask, agent="bench-step5")).text or ""
        data = extract_json(reply)
        problem = _validate_step(5, data)
        if problem:
            failure = SchemaViolation(5, problem)
            continue
        unknown = [
            item["reference"] for item in data["top_papers"] if item["reference"] not in known
        ]
        if unknown:
            failure = SchemaViolation(5, f"references outside the paper's bibliography: {unknown}")
            continue
        try:
            selection = ReferenceSelection(
                entries=tuple(
                    RankedReference(
                        reference=item["reference"],
                        rank=item["rank"],
                        types=_entry_types(item["type"]),
                        justification=item.get("justification", ""),
                        usage=item.get("usage", ""),
                    )
                    for item in data["top_papers"]
                )
            )
        except SelectionOutOfBounds as exc:
            failure = exc
            continue
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / STEP_FILENAMES[5]).write_text(
                json.dumps(data, indent=2, sort_keys=True), encoding="utf-8"
            )
        return selection
    raise failure


# --- instruction generation -----------------------------------------------

INSTRUCTION_SYSTEM = (
    "You write a detailed technical instruction paragraph that lets a "
    "researcher implement a paper's core methodology without reading it. "
    "Cover, as numbered points: 1 the task the model works on, 2 the core "
    "techniques and algorithms, 3 the purpose of each major component, 4 "
    "implementation details per component (parameters, input/output shapes, "
    "constraints), 5 how the components combine step by step, and 6 the "
    "implementation details that affect performance. Exclude background, "
    "literature review, and experimental results. Never mention the paper's "
    "own model name or module names specific to this paper. Write the "
    "instruction directly with no preamble."
)

ASPECT_COUNT = 6

_TABLE_ROW = re.compile(r"(\d+(?:\.\d+)?\s*[&|]\s*){2,}\d")
_PERCENTS = re.compile(r"\d+(?:\.\d+)?%")


def _missing_aspects(text: str) -> list[int]:
    found = set()
    for match in re.finditer(r"^\s*(\d)[.):]", text, re.MULTILINE):
        found.add(int(match.group(1)))
    return [n for n in range(1, ASPECT_COUNT + 1) if n not in found]


def _results_leak(text: str) -> bool:
    if _TABLE_ROW.search(text):
        return True
    return any(len(_PERCENTS.findall(line)) >= 3 for line in text.splitlines())


def _name_leaks(text: str, names: Sequence[str]) -> list[str]:
    return [name for name in names if _variant_pattern(name).search(text)]


def generate_instruction(
    paper: TargetPaper,
    gateway: Gateway,
    *,
    known_names: Sequence[str] = (),
) -> InstructionDoc:
    """Level-1 instruction with a mechanical leak scan before acceptance."""
    if not paper.text.strip():
        raise ValueError("target paper has no text")
    names = list(known_names)
    if not names:
        extracted = extract_model_name(gateway, paper.title, paper.text)
        names = list(name_variants(extracted))
    prompt = f"Paper title: {paper.title}\n\nPaper text:\n{paper.text}"
    failure: Exception = LeakDetected("no reply")
    for round_no in range(2):
        ask = prompt if round_no == 0 else (
            f"Your instruction was rejected: {failure}. Rewrite it following "
            "all six numbered points.\n\n" + prompt
        )
        reply = gateway.complete(
            chat_request(INSTRUCTION_SYSTEM, ask, agent="bench-instruction")
        ).text or ""
        text = reply.strip()
        leaks = _name_leaks(text, names)
        missing = _missing_aspects(text)
        if leaks:
            failure = LeakDetected(f"mentions the paper's model name: {leaks}")
        elif _results_leak(text):
            failure = LeakDetected("contains quantitative results")
        elif missing:
            failure = SchemaViolation(0, f"instruction missing numbered aspects {missing}")
        else:
            return InstructionDoc(text=text)
    raise failure


# --- anonymization --------------------------------------------------------

NAME_SENTINEL = "NO MODEL NAME FOUND"
PROCESS_SENTINEL = "NO NEED TO PROCESS"

EXTRACT_NAME_SYSTEM = (
    "Given a paper's title and content, extract the name of the novel model "
    "or method the paper itself introduces. Look for introduction phrases "
    "(we propose, our model, called, named). Return only the name; if both "
    'an abbreviation and a full name exist return "abbreviation, full '
    f'name"; if no clear name exists return "{NAME_SENTINEL}". Ignore '
    "baselines, referenced models, and generic categories. Output nothing "
    "else."
)

REPLACE_NAME_SYSTEM = (
    "Anonymize mentions of a given model name and direct paper "
    'self-references in a paragraph. Replace the model name and variants by '
    '"the proposed model" or "the proposed approach" and self-references by '
    '"this paper" or "this study"; keep everything else exactly as written, '
    "including other model names. If the paragraph contains no mention, "
    f'return "{PROCESS_SENTINEL}". Otherwise return only the processed '
    "paragraph."
)


def extract_model_name(gateway: Gateway, title: str, content: str) -> str:
    reply = gateway.complete(
        chat_request(
            EXTRACT_NAME_SYSTEM,
            f"Paper title: {title}\n\nPaper content:\n{content}",
            agent="anonymize-extract",
        )
    ).text or ""
    return reply.strip()


def name_variants(raw: str) -> tuple[str, ...]:
    """Split an "abbreviation, full name" reply into individual names."""
    cleaned = raw.strip().strip('"')
    if not cleaned or cleaned.upper() == NAME_SENTINEL:
        return ()
    return tuple(part.strip() for part in cleaned.split(",") if part.strip())


def _variant_pattern(name: str) -> re.Pattern[str]:
    # hyphen/space-insensitive both ways: the extracted "FooNet" must also
    # catch "Foo-Net" and "Foo Net", so separators are optional everywhere
    compact = re.sub(r"[-\s]+", "", name.strip())
    body = r"[\s\-]*".join(re.escape(ch) for ch in compact)
    return re.compile(rf"(?<![A-Za-z0-9]){body}(?![A-Za-z0-9])", re.IGNORECASE)


def find_name_spans(text: str, names: Sequence[str]) -> tuple[ReplacedSpan, ...]:
    spans = []
    for name in names:
        for match in _variant_pattern(name).finditer(text):
            spans.append(ReplacedSpan(match.start(), match.end(), match.group(0)))
    return tuple(sorted(spans, key=lambda s: (s.start, s.end)))


def mask_names(
    text: str, names: Sequence[str], placeholder: str = "the proposed model"
) -> AnonymizedText:
    """Deterministic masking: every detected mention becomes the placeholder."""
    spans = find_name_spans(text, names)
    if not spans:
        return AnonymizedText(text=text)
    # one variant can match inside another; overlaps collapse to one span
    merged: list[ReplacedSpan] = []
    for span in spans:
        if merged and span.start < merged[-1].end:
            last = merged[-1]
            if span.end > last.end:
                merged[-1] = ReplacedSpan(last.start, span.end, text[last.start : span.end])
        else:
            merged.append(span)
    out = text
    for span in reversed(merged):
        out = out[: span.start] + placeholder + out[span.end :]
    return AnonymizedText(text=out, replacements=tuple(merged))


def anonymize(
    title: str,
    abstract: str,
    paragraph: str,
    gateway: Gateway,
) -> AnonymizedText:
    """Two passes: extract the model name, then replace its mentions."""
    raw_name = extract_model_name(gateway, title, abstract)
    names = name_variants(raw_name)
    if not names:
        return AnonymizedText(text=paragraph)
    spans = find_name_spans(paragraph, names)
    prompt = (
        f"Paper title: {title}\nModel name: {raw_name}\n\nParagraph:\n{paragraph}"
    )
    for round_no in range(2):
        reply = gateway.complete(
            chat_request(REPLACE_NAME_SYSTEM, prompt, agent="anonymize-replace")
        ).text or ""
        out = reply.strip()
        if out.upper() == PROCESS_SENTINEL:
            out = paragraph
        residual = find_name_spans(out, names)
        if not residual:
            return AnonymizedText(text=out, replacements=spans)
        if round_no == 0:
            prompt = (
                "The name is still present ("
                + ", ".join(sorted({s.text for s in residual}))
                + "). Replace every occurrence.\n\n" + prompt
            )
    raise ResidualName(f"model name survives anonymization: {raw_name}")


# --- mechanical standardization passes ------------------------------------


def standardize_datasets(text: str, alias_table: Mapping[str, str]) -> str:
    """Rewrite dataset names through the user-supplied alias table."""
    out = text
    for name, alias in sorted(alias_table.items(), key=lambda kv: -len(kv[0])):
        out = re.sub(rf"(?<![A-Za-z0-9]){re.escape(name)}(?![A-Za-z0-9])", alias, out)
    return out


DEFAULT_VENUES = (
    "NeurIPS",
    "NIPS",
    "ICML",
    "ICLR",
    "CVPR",
    "ICCV",
    "ECCV",
    "ACL",
    "EMNLP",
    "NAACL",
    "KDD",
    "AAAI",
    "IJCAI",
    "SIGIR",
    "WWW",
)

_YEAR_IN_PARENS = re.compile(r"\(([^()]*?)\b(19|20)\d{2}[a-z]?\b([^()]*?)\)")


def anonymize_citations(text: str, venues: Sequence[str] = DEFAULT_VENUES) -> str:
    """Strip years inside parenthesized citations and venue names."""

    def drop_year(match: re.Match[str]) -> str:
        inner = (match.group(1) + match.group(3)).strip(" ,;")
        return f"({inner})" if inner else ""

    out = _YEAR_IN_PARENS.sub(drop_year, text)
    for venue in venues:
        out = re.sub(rf"(?<![A-Za-z]){re.escape(venue)}(?![A-Za-z])", "", out)
    return re.sub(r"[ \t]{2,}", " ", out)


# --- task bundle ----------------------------------------------------------


def _slug(title: str, limit: int = 40) -> str:
    return re.sub(r"[^a-z0-9]+", "-", title.lower()).strip("-")[:limit] or "reference"


def build_task_bundle(
    paper: TargetPaper,
    selection: ReferenceSelection,
    instruction: InstructionDoc,
    out_dir: Path,
    *,
    datasets_note: str = "",
    ground_truth_ref: str = "",
) -> Path:
    """Write the benchmark bundle: instruction, references, datasets, truth."""
    task_dir = out_dir / "task"
    refs_dir = task_dir / "references"
    refs_dir.mkdir(parents=True, exist_ok=True)
    (task_dir / "instruction.md").write_text(instruction.text + "\n", encoding="utf-8")
    for entry in selection.ordered():
        body = (
            f"# {entry.reference}\n\n"
            f"rank: {entry.rank}\n"
            f"type: {', '.join(entry.types)}\n\n"
            f"## Justification\n{entry.justification}\n\n"
            f"## Usage\n{entry.usage}\n"
        )
        (refs_dir / f"{entry.rank:02d}_{_slug(entry.reference)}.md").write_text(
            body, encoding="utf-8"
        )
    datasets = datasets_note or "No dataset standardization notes for this task.\n"
    (task_dir / "datasets.md").write_text(datasets, encoding="utf-8")
    (task_dir / "ground_truth.ref").write_text(
        (ground_truth_ref or paper.title) + "\n", encoding="utf-8"
    )
    return task_dir
