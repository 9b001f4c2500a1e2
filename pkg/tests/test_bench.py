"""Benchmark construction: extraction steps, instructions, anonymization."""

from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from autoresearch.bench import (
    STEP_FILENAMES,
    AnonymizedText,
    ImpactBreakdown,
    InstructionDoc,
    RankedReference,
    ReferenceSelection,
    TargetPaper,
    anonymize,
    anonymize_citations,
    build_task_bundle,
    extract_model_name,
    extract_references,
    find_name_spans,
    generate_instruction,
    impact_total,
    mask_names,
    name_variants,
    standardize_datasets,
)
from autoresearch.errors import (
    ComponentOutOfRange,
    LeakDetected,
    ResidualName,
    SchemaViolation,
    SelectionOutOfBounds,
)

from conftest import queue_gateway

REFS = tuple(f"Reference Paper {i}" for i in range(1, 31))

PAPER = TargetPaper(
    title="FooNet: Gated Fusion for Tabular Streams",
    text="We propose FooNet, a gated fusion model. " + " ".join(REFS),
    references=REFS,
)


def step_payload(step: int, n: int = 16):
    if step == 1:
        return {
            "citation_map": [
                {"reference": REFS[i], "count": 30 - i, "sections": ["intro"], "quotes": ["q"]}
                for i in range(n)
            ]
        }
    if step == 2:
        return {
            "context_analysis": [
                {
                    "reference": REFS[i],
                    "indicators": ["based on"],
                    "depth": "detailed",
                    "is_method": True,
                    "quotes": ["q"],
                }
                for i in range(n)
            ]
        }
    if step == 3:
        return {
            "evidence": [
                {
                    "reference": REFS[i],
                    "borrowed": ["encoder"],
                    "changes": ["simplified"],
                    "evidence": ["quote"],
                    "type": "component",
                }
                for i in range(n)
            ]
        }
    if step == 4:
        return {
            "scores": [
                {
                    "reference": REFS[i],
                    "total": 90 - i,
                    "breakdown": {
                        "frequency": 90,
                        "location": 80,
                        "depth": 70,
                        "influence": 60,
                    },
                }
                for i in range(n)
            ]
        }
    return {
        "top_papers": [
            {
                "reference": REFS[i],
                "rank": i + 1,
                "type": ["methodological"],
                "justification": "core method",
                "usage": "encoder backbone",
            }
            for i in range(n)
        ]
    }


def scripts_for_steps(**overrides):
    scripts = {}
    for step in range(1, 6):
        key = f"bench-step{step}"
        scripts[key] = overrides.get(key, [json.dumps(step_payload(step))])
    return scripts


# --- impact scoring -------------------------------------------------------


def test_impact_weights_sum_to_one():
    assert impact_total(ImpactBreakdown(100, 100, 100, 100)) == pytest.approx(100.0)


def test_impact_single_component():
    assert impact_total(ImpactBreakdown(100, 0, 0, 0)) == pytest.approx(30.0)
    assert impact_total(ImpactBreakdown(0, 100, 0, 0)) == pytest.approx(25.0)
    assert impact_total(ImpactBreakdown(0, 0, 100, 0)) == pytest.approx(25.0)
    assert impact_total(ImpactBreakdown(0, 0, 0, 100)) == pytest.approx(20.0)


def test_impact_hand_arithmetic():
    # 0.30*50 + 0.25*60 + 0.25*70 + 0.20*80 = 15 + 15 + 17.5 + 16
    assert impact_total(ImpactBreakdown(50, 60, 70, 80)) == pytest.approx(63.5, abs=1e-12)


def test_impact_component_bounds():
    with pytest.raises(ComponentOutOfRange):
        ImpactBreakdown(101, 0, 0, 0)
    with pytest.raises(ComponentOutOfRange):
        ImpactBreakdown(0, -1, 0, 0)


@given(
    st.lists(st.floats(min_value=0, max_value=100, allow_nan=False), min_size=4, max_size=4),
    st.integers(0, 3),
    st.floats(min_value=0.001, max_value=50, allow_nan=False),
)
def test_impact_monotone_and_bounded(components, idx, bump):
    base = ImpactBreakdown(*components)
    raised_components = list(components)
    raised_components[idx] = min(100.0, raised_components[idx] + bump)
    raised = ImpactBreakdown(*raised_components)
    assert 0.0 <= impact_total(base) <= 100.0
    assert impact_total(raised) >= impact_total(base) - 1e-9


# --- selection type -------------------------------------------------------


def make_selection(n=16):
    return ReferenceSelection(
        entries=tuple(
            RankedReference(REFS[i], i + 1, ("methodological",)) for i in range(n)
        )
    )


def test_selection_bounds():
    make_selection(15)
    make_selection(25)
    with pytest.raises(SelectionOutOfBounds):
        make_selection(14)
    with pytest.raises(SelectionOutOfBounds):
        make_selection(26)


def test_selection_ranks_must_be_gapless():
    entries = tuple(RankedReference(REFS[i], i + 1, ("component",)) for i in range(15))
    skewed = entries[:-1] + (RankedReference(REFS[14], 99, ("component",)),)
    with pytest.raises(SelectionOutOfBounds, match="without gaps"):
        ReferenceSelection(entries=skewed)


def test_ranked_reference_type_validation():
    with pytest.raises(ValueError):
        RankedReference("X", 1, ("inspirational",))
    with pytest.raises(ValueError):
        RankedReference("X", 1, ())


def test_target_paper_requires_references():
    with pytest.raises(ValueError):
        TargetPaper("T", "text", ())


# --- extract_references ---------------------------------------------------


def test_extract_references_five_steps(tmp_path):
    gateway = queue_gateway(scripts_for_steps())
    selection = extract_references(PAPER, gateway, out_dir=tmp_path)
    assert len(selection.entries) == 16
    assert [e.rank for e in selection.ordered()] == list(range(1, 17))
    for step, filename in STEP_FILENAMES.items():
        assert (tmp_path / filename).is_file(), f"step {step} not persisted"
    saved = json.loads((tmp_path / "step1_citation_map.json").read_text())
    assert saved["citation_map"][0]["reference"] == REFS[0]


def test_extract_references_closed_over_bibliography(tmp_path):
    gateway = queue_gateway(scripts_for_steps())
    selection = extract_references(PAPER, gateway)
    titles = {e.reference for e in selection.entries}
    assert titles <= set(PAPER.references)


def test_step1_missing_count_schema_violation():
    bad = {"citation_map": [{"reference": REFS[0], "sections": [], "quotes": []}]}
    gateway = queue_gateway(
        scripts_for_steps(**{"bench-step1": [json.dumps(bad), json.dumps(bad)]})
    )
    with pytest.raises(SchemaViolation) as err:
        extract_references(PAPER, gateway)
    assert err.value.step == 1


def test_step_reprompt_recovers():
    bad = {"citation_map": [{"reference": REFS[0], "sections": [], "quotes": []}]}
    gateway = queue_gateway(
        scripts_for_steps(
            **{"bench-step1": [json.dumps(bad), json.dumps(step_payload(1))]}
        )
    )
    selection = extract_references(PAPER, gateway)
    assert len(selection.entries) == 16
    retry = gateway.provider.requests[1].messages[-1].content
    assert "rejected" in retry


def test_step5_out_of_bounds_after_reprompt():
    small = step_payload(5, n=5)
    gateway = queue_gateway(
        scripts_for_steps(**{"bench-step5": [json.dumps(small), json.dumps(small)]})
    )
    with pytest.raises(SelectionOutOfBounds):
        extract_references(PAPER, gateway)


def test_step5_unknown_reference_rejected():
    rogue = step_payload(5)
    rogue["top_papers"][0]["reference"] = "Paper Not In Bibliography"
    gateway = queue_gateway(
        scripts_for_steps(**{"bench-step5": [json.dumps(rogue), json.dumps(rogue)]})
    )
    with pytest.raises(SchemaViolation, match="bibliography"):
        extract_references(PAPER, gateway)


def test_step5_accepts_bare_string_type():
    payload = step_payload(5)
    for item in payload["top_papers"]:
        item["type"] = "conceptual"
    gateway = queue_gateway(scripts_for_steps(**{"bench-step5": [json.dumps(payload)]}))
    selection = extract_references(PAPER, gateway)
    assert selection.entries[0].types == ("conceptual",)


def test_later_steps_see_prior_output():
    gateway = queue_gateway(scripts_for_steps())
    extract_references(PAPER, gateway)
    step2_prompt = next(
        r.messages[-1].content for r in gateway.provider.requests if r.agent == "bench-step2"
    )
    assert "citation_map" in step2_prompt


# --- instruction generation -----------------------------------------------

GOOD_INSTRUCTION = """\
1. The model predicts labels for streaming tabular rows.
2. Core techniques: a gated fusion module over per-field embeddings.
3. The encoder maps fields to vectors; the gate mixes them adaptively.
4. Implementation details: embedding dim 64, sigmoid gate, Adam optimizer.
5. Rows are embedded, gated, pooled, then classified end to end.
6. Gate temperature and embedding sharing dominate final quality.
"""


def test_generate_instruction_happy_path():
    gateway = queue_gateway(
        {
            "anonymize-extract": ["FooNet"],
            "bench-instruction": [GOOD_INSTRUCTION],
        }
    )
    doc = generate_instruction(PAPER, gateway)
    assert isinstance(doc, InstructionDoc)
    assert "gated fusion" in doc.text


def test_generate_instruction_name_leak():
    leaking = GOOD_INSTRUCTION.replace("The model", "FooNet")
    gateway = queue_gateway(
        {
            "anonymize-extract": ["FooNet"],
            "bench-instruction": [leaking, leaking],
        }
    )
    with pytest.raises(LeakDetected, match="model name"):
        generate_instruction(PAPER, gateway)


def test_generate_instruction_leak_then_recovery():
    leaking = GOOD_INSTRUCTION + "\nAs in FooNet, gate the features."
    gateway = queue_gateway(
        {
            "anonymize-extract": ["FooNet"],
            "bench-instruction": [leaking, GOOD_INSTRUCTION],
        }
    )
    doc = generate_instruction(PAPER, gateway)
    assert "FooNet" not in doc.text


def test_generate_instruction_results_table_leak():
    tabled = GOOD_INSTRUCTION + "\nAccuracy: 91.2% vs 88.1% vs 85.0% across runs.\n"
    gateway = queue_gateway(
        {
            "anonymize-extract": [json.dumps("NO MODEL NAME FOUND")],
            "bench-instruction": [tabled, tabled],
        }
    )
    with pytest.raises(LeakDetected, match="quantitative"):
        generate_instruction(PAPER, gateway)


def test_generate_instruction_missing_aspects():
    partial = "1. Task.\n2. Techniques.\n3. Components.\n"
    gateway = queue_gateway(
        {
            "anonymize-extract": ["NO MODEL NAME FOUND"],
            "bench-instruction": [partial, partial],
        }
    )
    with pytest.raises(SchemaViolation, match="aspects"):
        generate_instruction(PAPER, gateway)


def test_generate_instruction_empty_paper():
    gateway = queue_gateway({})
    empty = TargetPaper("T", "   ", ("R",))
    with pytest.raises(ValueError):
        generate_instruction(empty, gateway)


def test_generate_instruction_known_names_skip_extraction():
    gateway = queue_gateway({"bench-instruction": [GOOD_INSTRUCTION]})
    doc = generate_instruction(PAPER, gateway, known_names=("FooNet",))
    assert doc.text
    assert all(r.agent != "anonymize-extract" for r in gateway.provider.requests)


# --- anonymization --------------------------------------------------------


def test_name_variants_formats():
    assert name_variants("FooNet") == ("FooNet",)
    assert name_variants("FN, FooNet Fusion Network") == ("FN", "FooNet Fusion Network")
    assert name_variants("NO MODEL NAME FOUND") == ()
    assert name_variants("  ") == ()


def test_find_name_spans_variants():
    text = "FooNet and Foo-Net and foo net all refer to the same model."
    spans = find_name_spans(text, ("Foo Net",))
    assert [s.text for s in spans] == ["FooNet", "Foo-Net", "foo net"]
    assert spans[0].start == 0


def test_find_name_spans_respects_word_boundaries():
    assert find_name_spans("Barnet is a town", ("Net",)) == ()


def test_mask_names_replaces_every_variant():
    text = "FooNet improves fusion; Foo-Net and foo net are the same system."
    result = mask_names(text, ("FooNet",))
    assert find_name_spans(result.text, ("FooNet",)) == ()
    assert len(result.replacements) == 3
    assert result.text.count("the proposed model") == 3


def test_mask_names_overlapping_variants_collapse():
    text = "We use FooNet Fusion here."
    result = mask_names(text, ("FooNet", "FooNet Fusion"))
    assert result.text == "We use the proposed model here."
    assert len(result.replacements) == 1
    assert result.replacements[0].text == "FooNet Fusion"


def test_mask_names_no_match_keeps_text():
    result = mask_names("Nothing to hide here.", ("FooNet",))
    assert result.text == "Nothing to hide here."
    assert result.replacements == ()


def test_mask_names_custom_placeholder():
    result = mask_names("FooNet wins.", ("FooNet",), placeholder="the method")
    assert result.text == "the method wins."


def test_mask_names_is_idempotent():
    text = "FooNet beats Foo-Net on every split of the FooNet benchmark."
    once = mask_names(text, ("FooNet",))
    again = mask_names(once.text, ("FooNet",))
    assert again.text == once.text
    assert again.replacements == ()


def test_anonymize_replaces_all_variants():
    paragraph = "FooNet improves fusion. We extend Foo-Net with gates."
    gateway = queue_gateway(
        {
            "anonymize-extract": ["FooNet"],
            "anonymize-replace": [
                "the proposed model improves fusion. We extend the proposed model with gates."
            ],
        }
    )
    result = anonymize("Title", "abstract", paragraph, gateway)
    assert "FooNet" not in result.text and "Foo-Net" not in result.text
    assert len(result.replacements) == 2
    assert result.replacements[0].text == "FooNet"


def test_anonymize_sentinel_no_name():
    gateway = queue_gateway({"anonymize-extract": ["NO MODEL NAME FOUND"]})
    result = anonymize("Title", "abstract", "Plain paragraph.", gateway)
    assert result.text == "Plain paragraph."
    assert result.replacements == ()


def test_anonymize_sentinel_no_need_to_process():
    gateway = queue_gateway(
        {
            "anonymize-extract": ["FooNet"],
            "anonymize-replace": ["NO NEED TO PROCESS"],
        }
    )
    result = anonymize("Title", "abstract", "Paragraph without the name.", gateway)
    assert result.text == "Paragraph without the name."


def test_anonymize_abbreviation_and_full_name():
    paragraph = "FN is our model; the FooNet Fusion Network generalizes it."
    gateway = queue_gateway(
        {
            "anonymize-extract": ["FN, FooNet Fusion Network"],
            "anonymize-replace": [
                "the proposed model is our model; the proposed approach generalizes it."
            ],
        }
    )
    result = anonymize("Title", "abstract", paragraph, gateway)
    assert "FN" not in result.text.split() and "FooNet" not in result.text


def test_anonymize_residual_after_retry():
    paragraph = "FooNet wins."
    sloppy = "FooNet still wins."
    gateway = queue_gateway(
        {
            "anonymize-extract": ["FooNet"],
            "anonymize-replace": [sloppy, sloppy],
        }
    )
    with pytest.raises(ResidualName):
        anonymize("Title", "abstract", paragraph, gateway)


def test_anonymize_retry_prompt_names_residual():
    paragraph = "FooNet wins."
    gateway = queue_gateway(
        {
            "anonymize-extract": ["FooNet"],
            "anonymize-replace": ["FooNet still here.", "the proposed model wins."],
        }
    )
    result = anonymize("Title", "abstract", paragraph, gateway)
    assert result.text == "the proposed model wins."
    retry = gateway.provider.requests[-1].messages[-1].content
    assert "still present" in retry


def test_anonymize_idempotent_under_fixtures():
    clean = "the proposed model wins."
    gateway = queue_gateway(
        {
            "anonymize-extract": ["FooNet", "FooNet"],
            "anonymize-replace": ["the proposed model wins.", "NO NEED TO PROCESS"],
        }
    )
    first = anonymize("Title", "abstract", "FooNet wins.", gateway)
    second = anonymize("Title", "abstract", first.text, gateway)
    assert first.text == second.text == clean


# --- mechanical passes ----------------------------------------------------


def test_standardize_datasets_alias_table():
    text = "We train on ML-1M and evaluate on ML-1M and Beauty."
    out = standardize_datasets(text, {"ML-1M": "MovieLens-1M"})
    assert out == "We train on MovieLens-1M and evaluate on MovieLens-1M and Beauty."


def test_anonymize_citations_strips_years_and_venues():
    text = "Gated fusion (Smith et al., 2021) appeared at NeurIPS 2021."
    out = anonymize_citations(text)
    assert "2021" not in out.split("(")[1].split(")")[0]
    assert "NeurIPS" not in out


# --- bundle layout --------------------------------------------------------


def test_build_task_bundle_layout(tmp_path):
    selection = make_selection(15)
    doc = InstructionDoc("1. Do the thing.\n")
    task_dir = build_task_bundle(PAPER, selection, doc, tmp_path)
    assert (task_dir / "instruction.md").read_text().startswith("1. Do the thing.")
    assert (task_dir / "datasets.md").is_file()
    assert (task_dir / "ground_truth.ref").read_text().strip() == PAPER.title
    refs = sorted((task_dir / "references").iterdir())
    assert len(refs) == 15
    assert refs[0].name.startswith("01_")
    body = refs[0].read_text()
    assert "rank: 1" in body and "methodological" in body


def test_paper_from_dir_latex(tmp_path):
    (tmp_path / "paper.tex").write_text(
        "\\title{Great Model}\n\\begin{document}x\\end{document}\n"
        "\\bibitem{a} First Reference Title\n\\bibitem{b} Second Reference Title\n"
    )
    paper = TargetPaper.from_dir(tmp_path)
    assert paper.title == "Great Model"
    assert paper.references == ("First Reference Title", "Second Reference Title")


def test_paper_from_dir_markdown_with_refs_json(tmp_path):
    (tmp_path / "paper.md").write_text("# Markdown Paper\n\nBody.\n")
    (tmp_path / "references.json").write_text(json.dumps(["R1", "R2"]))
    paper = TargetPaper.from_dir(tmp_path)
    assert paper.title == "Markdown Paper"
    assert paper.references == ("R1", "R2")


def test_paper_from_dir_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        TargetPaper.from_dir(tmp_path)


def test_anonymized_text_type():
    assert AnonymizedText("x").replacements == ()
