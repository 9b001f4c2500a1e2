"""Two-stage evaluation: implementation verification and debiased review.

Stage one measures completion (share of resolved runs) and correctness (a
judge panel scoring advisor evidence 1-5). Stage two compares a generated
paper against its human reference: presentation order is randomly swapped
per assessment, judges emit a fenced structured verdict with a -3..3
first-vs-second rating, and aggregation reduces canonical candidate-vs-
reference ratings into mean, sample std, and threshold shares. A TF-IDF
pairing routine builds the accepted/rejected validation set for the
reviewer itself.
"""

from __future__ import annotations

import enum
import json
import random
import re
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import (
    EmptyCorpus,
    EmptyVerdicts,
    RatingOutOfRange,
    ScoreOutOfRange,
    UnparsableVerdict,
    UnterminatedManifest,
)
from .gateway import Gateway, chat_request
from .parsing import extract_fenced, extract_json

RATING_MIN = -3
RATING_MAX = 3
COMPARABLE_THRESHOLD = -1.0  # inclusive
BETTER_THRESHOLD = 0.0  # strict

DEFAULT_JUDGES = ("judge-1", "judge-2", "judge-3", "judge-4", "judge-5")

REVIEW_SYSTEM = (
    "You are a meticulous conference reviewer comparing two papers on the "
    "same topic under the supplied review guidelines. Judge soundness, "
    "novelty, clarity, and experimental rigor. Rate how the FIRST paper "
    "compares to the SECOND on an integer scale from -3 (first is far "
    "weaker) through 0 (comparable) to +3 (first is far stronger). Reply "
    "with your reasoning, then a fenced block:\n"
    "```verdict\n"
    '{"rating": <int -3..3>, "justifications": ["...", "..."]}\n'
    "```"
)

CORRECTNESS_SYSTEM = (
    "You are grading how faithfully a project implements its research plan, "
    "based on advisor review evidence. Score the implementation on a 1-5 "
    "scale (5 = every concept implemented correctly). Reply with JSON only: "
    '{"score": <int 1-5>, "reason": "..."}'
)


@dataclass(frozen=True)
class ResearchOutput:
    """A finished run's artifacts: the code bundle and the written report."""

    code_path: Path
    report_path: Path

    def report_text(self) -> str:
        return self.report_path.read_text(encoding="utf-8")


@dataclass(frozen=True)
class OrderedPair:
    first: str
    second: str
    swapped: bool
    seed: int


@dataclass(frozen=True)
class ReviewVerdict:
    rating: int
    justifications: tuple[str, ...]
    judge: str
    assessment: int
    swapped: bool
    field: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.rating, int) or isinstance(self.rating, bool):
            raise RatingOutOfRange(f"rating must be an integer, got {self.rating!r}")
        if not RATING_MIN <= self.rating <= RATING_MAX:
            raise RatingOutOfRange(
                f"rating {self.rating} outside [{RATING_MIN}, {RATING_MAX}]"
            )
        if not self.justifications:
            raise UnparsableVerdict("verdict carries no justifications")

    def to_dict(self) -> dict[str, Any]:
        return {
            "rating": self.rating,
            "justifications": list(self.justifications),
            "judge": self.judge,
            "assessment": self.assessment,
            "swapped": self.swapped,
            "field": self.field,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ReviewVerdict":
        return cls(
            rating=data["rating"],
            justifications=tuple(data["justifications"]),
            judge=data["judge"],
            assessment=data["assessment"],
            swapped=data["swapped"],
            field=data.get("field", ""),
        )


@dataclass(frozen=True)
class PanelConfig:
    judges: tuple[str, ...] = DEFAULT_JUDGES
    assessments_per_judge: int = 16
    temperature: float = 1.0
    guidelines: str = ""

    def __post_init__(self) -> None:
        if not self.judges:
            raise ValueError("panel needs at least one judge")
        if self.assessments_per_judge < 1:
            raise ValueError("assessments_per_judge must be positive")


@dataclass(frozen=True)
class FieldMetrics:
    mean: float
    std: float
    comparable_pct: float
    n: int


class Mode(enum.Enum):
    PAIRWISE_QUALITY = "pairwise-quality"
    ACCEPTANCE_PREDICTION = "acceptance-prediction"


@dataclass(frozen=True)
class MetricsReport:
    mean: float
    std: float
    comparable_pct: float
    n: int
    acc_better_pct: float | None = None
    per_field: Mapping[str, FieldMetrics] = field(default_factory=dict)
    completion_ratio: float | None = None
    correctness_mean: float | None = None

    def summary(self) -> str:
        """The table cell layout: mean±std / comparable share."""
        return f"{self.mean:.2f}±{self.std:.2f} / {self.comparable_pct:.2f}%"

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "mean": self.mean,
            "std": self.std,
            "comparable_pct": self.comparable_pct,
            "n": self.n,
        }
        if self.acc_better_pct is not None:
            doc["acc_better_pct"] = self.acc_better_pct
        if self.per_field:
            doc["per_field"] = {
                name: {
                    "mean": m.mean,
                    "std": m.std,
                    "comparable_pct": m.comparable_pct,
                    "n": m.n,
                }
                for name, m in sorted(self.per_field.items())
            }
        if self.completion_ratio is not None:
            doc["completion_ratio"] = self.completion_ratio
        if self.correctness_mean is not None:
            doc["correctness_mean"] = self.correctness_mean
        return doc


def format_ratio(ratio: float) -> str:
    """0.9375 -> '93.8%'."""
    return f"{ratio * 100:.1f}%"


# --- stage one: implementation verification --------------------------------


def assess_completion(manifests: Sequence[Any]) -> float:
    """Share of manifests that terminated as resolved."""
    if not manifests:
        raise ValueError("no manifests to assess")
    for manifest in manifests:
        if not manifest.terminated:
            raise UnterminatedManifest(f"run {manifest.task_id} never terminated")
    return sum(1 for m in manifests if m.completed) / len(manifests)


def _render_reports(reports: Sequence[Any]) -> str:
    parts = []
    for idx, report in enumerate(reports, start=1):
        if isinstance(report, str):
            parts.append(f"Report {idx}:\n{report}")
            continue
        lines = [f"Report {idx}:"]
        for finding in report.findings:
            lines.append(
                f"- {finding.concept}: {finding.status}"
                + (f" (evidence: {finding.evidence})" if finding.evidence else "")
            )
        parts.append("\n".join(lines))
    return "\n\n".join(parts)


def _parse_score(reply: str) -> int | None:
    data = extract_json(reply)
    raw: Any = None
    if isinstance(data, dict) and "score" in data:
        raw = data["score"]
    elif data is None:
        match = re.search(r"-?\d+", reply)
        raw = int(match.group()) if match else None
    if isinstance(raw, bool) or not isinstance(raw, int):
        return None
    return raw


def assess_correctness(
    reports: Sequence[Any],
    panel: PanelConfig,
    gateway: Gateway,
) -> float:
    """Panel mean of integer 1-5 faithfulness scores."""
    if not reports:
        raise ValueError("no advisor reports to assess")
    prompt = "Advisor findings to grade:\n\n" + _render_reports(reports)
    scores: list[int] = []
    for judge in panel.judges:
        ask = prompt
        score: int | None = None
        for round_no in range(2):
            reply = gateway.complete(
                chat_request(
                    CORRECTNESS_SYSTEM,
                    ask,
                    agent=judge,
                    model_id=judge,
                    temperature=panel.temperature,
                )
            ).text or ""
            score = _parse_score(reply)
            if score is not None and 1 <= score <= 5:
                break
            problem = f"score {score}" if score is not None else "no integer score"
            ask = (
                f"Your previous reply was rejected ({problem}); give an "
                "integer score between 1 and 5.\n\n" + prompt
            )
            score = None
        if score is None:
            raise ScoreOutOfRange(f"judge {judge} failed to give a 1-5 score")
        scores.append(score)
    return statistics.fmean(scores)


# --- stage two: debiased pairwise review -----------------------------------


def random_swap(pair: tuple[str, str], seed: int) -> OrderedPair:
    """Seeded coin flip on presentation order; swapped means candidate second."""
    candidate, reference = pair
    swapped = random.Random(seed).random() < 0.5
    if swapped:
        return OrderedPair(first=reference, second=candidate, swapped=True, seed=seed)
    return OrderedPair(first=candidate, second=reference, swapped=False, seed=seed)


def _parse_verdict(reply: str) -> tuple[int, tuple[str, ...]]:
    """Raises UnparsableVerdict / RatingOutOfRange; tolerates prose around the fence."""
    block = extract_fenced(reply, "verdict")
    if block is None:
        block = extract_fenced(reply, "json")
    if block is None:
        block = extract_fenced(reply)
    data = extract_json(block) if block is not None else None
    if not isinstance(data, dict) or "rating" not in data:
        raise UnparsableVerdict("no fenced verdict block with a rating found")
    rating = data["rating"]
    if isinstance(rating, bool) or not isinstance(rating, int):
        raise UnparsableVerdict(f"rating is not an integer: {rating!r}")
    if not RATING_MIN <= rating <= RATING_MAX:
        raise RatingOutOfRange(f"rating {rating} outside [{RATING_MIN}, {RATING_MAX}]")
    justifications = tuple(
        str(j) for j in data.get("justifications", ()) if str(j).strip()
    )
    if not justifications:
        raise UnparsableVerdict("verdict carries no justifications")
    return rating, justifications


def review_pair(
    ordered: OrderedPair,
    config: PanelConfig,
    judge: str,
    k: int,
    gateway: Gateway,
    *,
    field_label: str = "",
) -> ReviewVerdict:
    """One (judge, assessment-index) comparative review of an ordered pair."""
    if k > config.assessments_per_judge:
        raise ValueError(
            f"assessment index {k} exceeds budget {config.assessments_per_judge}"
        )
    prompt = (
        f"Review guidelines:\n{config.guidelines}\n\n"
        f"FIRST paper:\n{ordered.first}\n\n"
        f"SECOND paper:\n{ordered.second}\n\n"
        "Compare the first paper against the second."
    )
    failure: Exception = UnparsableVerdict("no reply")
    ask = prompt
    for round_no in range(2):
        reply = gateway.complete(
            chat_request(
                REVIEW_SYSTEM,
                ask,
                agent=judge,
                model_id=judge,
                temperature=config.temperature,
            )
        ).text or ""
        try:
            rating, justifications = _parse_verdict(reply)
        except (UnparsableVerdict, RatingOutOfRange) as exc:
            failure = exc
            ask = (
                f"Your previous verdict was rejected ({exc}). Emit the fenced "
                "verdict block with an integer rating between -3 and 3 and at "
                "least one justification.\n\n" + prompt
            )
            continue
        return ReviewVerdict(
            rating=rating,
            justifications=justifications,
            judge=judge,
            assessment=k,
            swapped=ordered.swapped,
            field=field_label,
        )
    raise failure


def canonicalize(verdict: ReviewVerdict) -> int:
    """Candidate-vs-reference rating: sign-flip when the candidate was second."""
    return -verdict.rating if verdict.swapped else verdict.rating


def flip(verdict: ReviewVerdict) -> ReviewVerdict:
    """The same judgment seen under the opposite presentation order."""
    return ReviewVerdict(
        rating=verdict.rating,
        justifications=verdict.justifications,
        judge=verdict.judge,
        assessment=verdict.assessment,
        swapped=not verdict.swapped,
        field=verdict.field,
    )


# --- aggregation -----------------------------------------------------------


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def _share(values: Sequence[float], threshold: float, *, inclusive: bool) -> float:
    if inclusive:
        hits = sum(1 for v in values if v >= threshold)
    else:
        hits = sum(1 for v in values if v > threshold)
    return 100.0 * hits / len(values)


def aggregate_ratings(
    ratings: Sequence[float],
    mode: Mode = Mode.PAIRWISE_QUALITY,
    *,
    fields: Sequence[str] | None = None,
    completion_ratio: float | None = None,
    correctness_mean: float | None = None,
) -> MetricsReport:
    """Reduce canonical ratings; order-independent by construction."""
    if not ratings:
        raise EmptyVerdicts("no ratings to aggregate")
    if fields is not None and len(fields) != len(ratings):
        raise ValueError("fields must align one-to-one with ratings")
    mean, std = _mean_std(ratings)
    comparable = _share(ratings, COMPARABLE_THRESHOLD, inclusive=True)
    acc_better = (
        _share(ratings, BETTER_THRESHOLD, inclusive=False)
        if mode is Mode.ACCEPTANCE_PREDICTION
        else None
    )
    per_field: dict[str, FieldMetrics] = {}
    if fields is not None:
        grouped: dict[str, list[float]] = {}
        for label, rating in zip(fields, ratings):
            if label:
                grouped.setdefault(label, []).append(rating)
        for label in sorted(grouped):
            values = grouped[label]
            f_mean, f_std = _mean_std(values)
            per_field[label] = FieldMetrics(
                mean=f_mean,
                std=f_std,
                comparable_pct=_share(values, COMPARABLE_THRESHOLD, inclusive=True),
                n=len(values),
            )
    return MetricsReport(
        mean=mean,
        std=std,
        comparable_pct=comparable,
        n=len(ratings),
        acc_better_pct=acc_better,
        per_field=per_field,
        completion_ratio=completion_ratio,
        correctness_mean=correctness_mean,
    )


def aggregate(
    verdicts: Sequence[ReviewVerdict],
    mode: Mode = Mode.PAIRWISE_QUALITY,
    *,
    completion_ratio: float | None = None,
    correctness_mean: float | None = None,
) -> MetricsReport:
    """Canonicalize every verdict, then reduce. Permutation-invariant."""
    if not verdicts:
        raise EmptyVerdicts("no verdicts to aggregate")
    ratings = [float(canonicalize(v)) for v in verdicts]
    fields = [v.field for v in verdicts]
    return aggregate_ratings(
        ratings,
        mode,
        fields=fields if any(fields) else None,
        completion_ratio=completion_ratio,
        correctness_mean=correctness_mean,
    )


# --- verdict persistence ---------------------------------------------------


def save_verdict(verdict: ReviewVerdict, eval_dir: Path) -> Path:
    verdicts_dir = eval_dir / "verdicts"
    verdicts_dir.mkdir(parents=True, exist_ok=True)
    path = verdicts_dir / f"{verdict.judge}_{verdict.assessment:02d}.json"
    path.write_text(json.dumps(verdict.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
    return path


def load_verdicts(eval_dir: Path) -> tuple[ReviewVerdict, ...]:
    verdicts_dir = eval_dir / "verdicts"
    if not verdicts_dir.is_dir():
        return ()
    out = []
    for path in sorted(verdicts_dir.glob("*.json")):
        out.append(ReviewVerdict.from_dict(json.loads(path.read_text(encoding="utf-8"))))
    return tuple(out)


# --- panel orchestration ---------------------------------------------------


def review_panel(
    candidate: str,
    reference: str,
    config: PanelConfig,
    gateway: Gateway,
    *,
    seed: int = 0,
    eval_dir: Path | None = None,
    field_label: str = "",
) -> tuple[ReviewVerdict, ...]:
    """Fan a pair out to every (judge, assessment) cell with per-cell swaps."""
    verdicts = []
    for judge_idx, judge in enumerate(config.judges):
        for k in range(1, config.assessments_per_judge + 1):
            cell_seed = seed + judge_idx * config.assessments_per_judge + k
            ordered = random_swap((candidate, reference), cell_seed)
            verdict = review_pair(
                ordered, config, judge, k, gateway, field_label=field_label
            )
            if eval_dir is not None:
                save_verdict(verdict, eval_dir)
            verdicts.append(verdict)
    return tuple(verdicts)


# --- TF-IDF pairing --------------------------------------------------------


@dataclass(frozen=True)
class PaperPair:
    accepted_index: int
    rejected_index: int
    similarity: float


def pair_by_tfidf(accepted: Sequence[str], rejected: Sequence[str]) -> list[PaperPair]:
    """Greedy maximum-cosine matching without replacement."""
    if not accepted or not rejected:
        raise EmptyCorpus("both corpora must be non-empty")
    from sklearn.feature_extraction.text import TfidfVectorizer
    from sklearn.metrics.pairwise import cosine_similarity

    vectorizer = TfidfVectorizer(lowercase=True, stop_words="english")
    matrix = vectorizer.fit_transform(list(accepted) + list(rejected))
    sims = cosine_similarity(matrix[: len(accepted)], matrix[len(accepted):])

    cells = sorted(
        (
            (-sims[i, j], i, j)
            for i in range(len(accepted))
            for j in range(len(rejected))
        )
    )
    used_a: set[int] = set()
    used_r: set[int] = set()
    pairs: list[PaperPair] = []
    for neg_sim, i, j in cells:
        if i in used_a or j in used_r:
            continue
        used_a.add(i)
        used_r.add(j)
        pairs.append(PaperPair(accepted_index=i, rejected_index=j, similarity=-neg_sim))
        if len(pairs) == min(len(accepted), len(rejected)):
            break
    return pairs


def validate_reviewer(
    pairs: Sequence[tuple[str, str]],
    config: PanelConfig,
    gateway: Gateway,
    *,
    seed: int = 0,
    assessments: int = 1,
) -> MetricsReport:
    """Accepted-vs-rejected protocol: the accepted paper plays the candidate.

    acc_better_pct then reads as the share of assessments in which the
    reviewer preferred the accepted paper.
    """
    if not pairs:
        raise EmptyCorpus("no validation pairs")
    verdicts: list[ReviewVerdict] = []
    for pair_idx, (accepted_doc, rejected_doc) in enumerate(pairs):
        for judge_idx, judge in enumerate(config.judges):
            for k in range(1, assessments + 1):
                cell_seed = seed + pair_idx * 10_000 + judge_idx * 100 + k
                ordered = random_swap((accepted_doc, rejected_doc), cell_seed)
                verdicts.append(review_pair(ordered, config, judge, k, gateway))
    return aggregate(verdicts, Mode.ACCEPTANCE_PREDICTION)
