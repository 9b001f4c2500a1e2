"""Structure synthesis, subsection elaboration, checklist revision, assembly."""

from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from autoresearch.errors import (
    DanglingArtifactRef,
    LintFail,
    MissingSubsection,
    NameNotInOutline,
    UnparsableSkeleton,
)
from autoresearch.writing import (
    DEFAULT_CHECKLIST,
    Checklist,
    SubsectionDraft,
    assemble,
    check_compilable,
    elaborate_subsection,
    generate_structure,
    lint_writing,
    parse_structure,
    revise_with_checklist,
    write_manuscript,
)

from conftest import queue_gateway

SKELETON = """\\section{Gated Fusion Network}
% overview: gating combines modality streams before the head
% components: encoder, gate; the gate feeds the classifier
\\subsection{Feature Encoder}
% purpose: map raw inputs to a shared space
% io: takes raw batches, emits embeddings for the gate
\\subsection{Adaptive Gate}
% purpose: learn per-feature mixing weights
% io: consumes embeddings, emits fused representation
\\subsubsection{Gate Regularizer}
\\subsection{Training Objective}
% purpose: tie the pieces to the loss
% io: fused representation in, scalar loss out
"""

TWO_SECTIONS = SKELETON + "\\section{Second Method}\n% stray\n\\subsection{X}\n% c\n"


# --- parsing --------------------------------------------------------------


def test_parse_structure_outline():
    structure = parse_structure(SKELETON, iteration=1)
    assert structure.section == "Gated Fusion Network"
    assert [s.name for s in structure.subsections] == [
        "Feature Encoder",
        "Adaptive Gate",
        "Training Objective",
    ]
    assert structure.subsections[1].children[0].name == "Gate Regularizer"
    assert structure.node_count == 4
    assert structure.leaves() == ("Feature Encoder", "Gate Regularizer", "Training Objective")
    assert structure.level_of("Gate Regularizer") == "subsubsection"


def test_parse_structure_rejects_two_sections():
    with pytest.raises(UnparsableSkeleton, match="found 2"):
        parse_structure(TWO_SECTIONS)


def test_parse_structure_rejects_zero_sections():
    with pytest.raises(UnparsableSkeleton):
        parse_structure("\\subsection{Orphan}\n% c\n")


def test_parse_structure_requires_annotations():
    bare = "\\section{M}\n% overview\n\\subsection{A}\n\\subsection{B}\n% fine\n"
    with pytest.raises(UnparsableSkeleton, match="'A'"):
        parse_structure(bare)


def test_parse_structure_requires_subsections():
    with pytest.raises(UnparsableSkeleton, match="no \\\\subsection"):
        parse_structure("\\section{M}\n% note\n")


def test_parse_structure_rejects_orphan_subsubsection():
    text = "\\section{M}\n% a\n\\subsubsection{Deep}\n\\subsection{A}\n% b\n"
    with pytest.raises(UnparsableSkeleton, match="before any"):
        parse_structure(text)


def test_outline_dict_round_trip():
    structure = parse_structure(SKELETON, iteration=2)
    doc = structure.to_outline_dict()
    assert doc["section"] == "Gated Fusion Network"
    assert doc["iteration"] == 2
    assert doc["subsections"][1] == {
        "name": "Adaptive Gate",
        "subsubsections": ["Gate Regularizer"],
    }


# --- generate_structure ---------------------------------------------------


def test_generate_structure_first_iteration():
    gateway = queue_gateway({"writing-structure": ["```latex\n" + SKELETON + "```"]})
    structure = generate_structure("method notes", gateway, iteration=1, budget=2)
    assert structure.iteration == 1
    assert structure.node_count >= 2


def test_generate_structure_reprompts_once_then_fails():
    gateway = queue_gateway({"writing-structure": [TWO_SECTIONS, TWO_SECTIONS]})
    with pytest.raises(UnparsableSkeleton):
        generate_structure("notes", gateway)


def test_generate_structure_recovers_on_retry():
    gateway = queue_gateway({"writing-structure": ["not latex at all", SKELETON]})
    structure = generate_structure("notes", gateway)
    assert structure.section == "Gated Fusion Network"
    retry_prompt = gateway.provider.requests[1].messages[-1].content
    assert "rejected" in retry_prompt


def test_generate_structure_iteration_exceeds_budget():
    gateway = queue_gateway({"writing-structure": []})
    with pytest.raises(ValueError):
        generate_structure("notes", gateway, iteration=3, budget=2)


def test_generate_structure_refinement_grows():
    current = parse_structure(SKELETON, iteration=1)
    bigger = SKELETON + "\\subsection{Inference Procedure}\n% purpose: decode\n% io: logits in\n"
    gateway = queue_gateway({"writing-structure": [bigger]})
    refined = generate_structure("notes", gateway, current=current, iteration=2)
    assert refined.node_count >= current.node_count
    prompt = gateway.provider.requests[0].messages[-1].content
    assert "Current skeleton" in prompt and "Iteration 2 of 2" in prompt


def test_generate_structure_rejects_shrinking_refinement():
    current = parse_structure(SKELETON, iteration=1)
    smaller = (
        "\\section{Gated Fusion Network}\n% overview\n"
        "\\subsection{Feature Encoder}\n% purpose\n"
    )
    gateway = queue_gateway({"writing-structure": [smaller, smaller]})
    with pytest.raises(UnparsableSkeleton, match="shrank"):
        generate_structure("notes", gateway, current=current, iteration=2)


def test_refinement_may_relabel_nodes():
    current = parse_structure(SKELETON, iteration=1)
    relabeled = SKELETON.replace("Adaptive Gate", "Context-Aware Gate")
    gateway = queue_gateway({"writing-structure": [relabeled]})
    refined = generate_structure("notes", gateway, current=current, iteration=2)
    assert refined.node_count == current.node_count
    assert "Context-Aware Gate" in refined.node_names()


# --- elaborate_subsection -------------------------------------------------

STRUCTURE = parse_structure(SKELETON)


def test_elaborate_unknown_name():
    gateway = queue_gateway({"writing-detail": []})
    with pytest.raises(NameNotInOutline):
        elaborate_subsection("Nonexistent", STRUCTURE, "content", gateway=gateway)


def test_elaborate_first_generation():
    body = "\\subsection{Adaptive Gate}\nThe gate computes $g = \\sigma(Wx)$."
    gateway = queue_gateway({"writing-detail": [body]})
    draft = elaborate_subsection("Adaptive Gate", STRUCTURE, "gate math", gateway=gateway)
    assert draft.generation == 1
    assert draft.body == body


def test_elaborate_prepends_missing_command():
    gateway = queue_gateway({"writing-detail": ["Plain prose without a command."]})
    draft = elaborate_subsection("Feature Encoder", STRUCTURE, "enc", gateway=gateway)
    assert draft.body.startswith("\\subsection{Feature Encoder}")


def test_elaborate_subsubsection_uses_right_command():
    gateway = queue_gateway({"writing-detail": ["Regularizer prose."]})
    draft = elaborate_subsection("Gate Regularizer", STRUCTURE, "reg", gateway=gateway)
    assert draft.body.startswith("\\subsubsection{Gate Regularizer}")


def test_elaborate_second_generation_preserves_equation():
    equation = "g = \\sigma(W x + b)"
    first = SubsectionDraft("Adaptive Gate", f"\\subsection{{Adaptive Gate}}\n${equation}$", 1)
    improved = first.body + "\nWe further normalize the gate output."
    gateway = queue_gateway({"writing-detail": [improved]})
    draft = elaborate_subsection(
        "Adaptive Gate", STRUCTURE, "more detail", gateway=gateway, current=first
    )
    assert draft.generation == 2
    assert equation in draft.body
    prompt = gateway.provider.requests[0].messages[-1].content
    assert "Current text (generation 1)" in prompt


def test_elaborate_rejects_markdown_then_fails():
    md = "## Adaptive Gate\nprose"
    gateway = queue_gateway({"writing-detail": [md, md]})
    with pytest.raises(LintFail):
        elaborate_subsection("Adaptive Gate", STRUCTURE, "c", gateway=gateway)


def test_elaborate_recovers_after_markdown_reprompt():
    gateway = queue_gateway(
        {"writing-detail": ["## bad markdown\ntext", "\\subsection{Adaptive Gate}\nClean."]}
    )
    draft = elaborate_subsection("Adaptive Gate", STRUCTURE, "c", gateway=gateway)
    assert "markdown" not in draft.body


# --- lint and revision ----------------------------------------------------


def test_lint_flags_each_problem():
    assert lint_writing("## Header\n") == ["markdown-style header present"]
    assert lint_writing("```python\nx\n```") == ["code fence present"]
    assert lint_writing("\\textbf{open") == ["unbalanced braces"]
    assert lint_writing("clean $x$ \\emph{fine}") == []


def test_lint_ignores_escaped_braces_and_comments():
    assert lint_writing("a \\{ not counted \\}") == []
    assert lint_writing("x % comment with { only\ny") == []


def test_lint_is_pure_and_stable():
    text = "\\subsection{A}\nbody $x=1$"
    assert lint_writing(text) == lint_writing(text) == []


@given(st.text(alphabet="ab{}\\%\n $", max_size=80))
def test_lint_deterministic(text):
    assert lint_writing(text) == lint_writing(text)


def test_revise_removes_markdown(tmp_path):
    gateway = queue_gateway(
        {"writing-revise": ["\\subsection{Results Analysis}\nThe results show improvement."]}
    )
    out = revise_with_checklist("## Results\nThe results show improvement.", gateway=gateway)
    assert lint_writing(out) == []
    assert "##" not in out


def test_revise_passes_checklist_text_to_model():
    gateway = queue_gateway({"writing-revise": ["clean text"]})
    revise_with_checklist("text", DEFAULT_CHECKLIST, gateway=gateway)
    prompt = gateway.provider.requests[0].messages[-1].content
    assert "1." in prompt and "Section titles" in prompt


def test_revise_clean_fixture_is_fixed_point():
    clean = "\\subsection{Gate}\nWe define $g=\\sigma(Wx)$."
    gateway = queue_gateway({"writing-revise": [clean]})
    assert revise_with_checklist(clean, gateway=gateway) == clean


def test_revise_lint_failure_twice_raises():
    gateway = queue_gateway({"writing-revise": ["open { brace", "still { open"]})
    with pytest.raises(LintFail, match="unbalanced"):
        revise_with_checklist("text", gateway=gateway)
    retry = gateway.provider.requests[1].messages[-1].content
    assert "failed the lint" in retry


def test_checklist_has_five_areas_and_order():
    assert len(DEFAULT_CHECKLIST.items) == 5
    rendered = DEFAULT_CHECKLIST.render()
    assert rendered.index("style") < rendered.index("Mathematical formulation")
    assert rendered.splitlines()[4].startswith("5.")


def test_checklist_rejects_empty():
    with pytest.raises(ValueError):
        Checklist(())


# --- compilable validator -------------------------------------------------


def test_check_compilable_accepts_balanced():
    tex = "\\begin{document}\n\\begin{equation}x\\end{equation}\n\\end{document}"
    assert check_compilable(tex) == []


def test_check_compilable_flags_env_mismatch():
    assert check_compilable("\\begin{figure}\\end{table}") != []
    assert any("unclosed" in p for p in check_compilable("\\begin{figure}"))
    assert any("without matching" in p for p in check_compilable("\\end{figure}"))


# --- assembly -------------------------------------------------------------


def make_drafts():
    return [
        SubsectionDraft("Feature Encoder", "\\subsection{Feature Encoder}\nEncodes."),
        SubsectionDraft("Gate Regularizer", "\\subsubsection{Gate Regularizer}\nRegularizes."),
        SubsectionDraft("Training Objective", "\\subsection{Training Objective}\nLoss."),
    ]


ORDER = ("Feature Encoder", "Gate Regularizer", "Training Objective")


def test_assemble_produces_compilable_manuscript():
    manuscript = assemble(make_drafts(), ORDER, structure=STRUCTURE)
    assert manuscript.sections == ORDER
    assert "\\section{Gated Fusion Network}" in manuscript.tex
    assert manuscript.tex.index("Encodes.") < manuscript.tex.index("Loss.")
    assert "\\bibliography{references}" in manuscript.tex
    assert check_compilable(manuscript.tex) == []


def test_assemble_is_deterministic():
    a = assemble(make_drafts(), ORDER, structure=STRUCTURE)
    b = assemble(make_drafts(), ORDER, structure=STRUCTURE)
    assert a.tex == b.tex


def test_assemble_missing_leaf_named():
    drafts = make_drafts()[:2]
    with pytest.raises(MissingSubsection, match="Training Objective"):
        assemble(drafts, ORDER[:2], structure=STRUCTURE)


def test_assemble_missing_order_entry():
    with pytest.raises(MissingSubsection, match="Extra"):
        assemble(make_drafts(), ORDER + ("Extra",))


def test_assemble_dangling_figure(tmp_path):
    drafts = make_drafts()
    drafts.append(
        SubsectionDraft("Plots", "\\subsection{Plots}\n\\includegraphics{figures/loss.png}")
    )
    with pytest.raises(DanglingArtifactRef, match="loss.png"):
        assemble(drafts, ORDER + ("Plots",), artifact_root=tmp_path)


def test_assemble_accepts_existing_figure(tmp_path):
    (tmp_path / "figures").mkdir()
    (tmp_path / "figures" / "loss.png").write_bytes(b"png")
    drafts = make_drafts()
    drafts.append(
        SubsectionDraft(
            "Plots", "\\subsection{Plots}\n\\includegraphics[width=\\linewidth]{figures/loss.png}"
        )
    )
    manuscript = assemble(drafts, ORDER + ("Plots",), artifact_root=tmp_path)
    assert manuscript.artifacts == ("figures/loss.png",)


def test_assemble_duplicate_draft_rejected():
    drafts = make_drafts() + [SubsectionDraft("Feature Encoder", "dup")]
    with pytest.raises(ValueError, match="duplicate"):
        assemble(drafts, ORDER)


def test_write_manuscript_layout(tmp_path):
    manuscript = assemble(make_drafts(), ORDER, structure=STRUCTURE)
    fig = tmp_path / "src.png"
    fig.write_bytes(b"png")
    paper_dir = write_manuscript(
        manuscript, tmp_path / "run", structure=STRUCTURE, figures={"loss.png": fig}
    )
    assert (paper_dir / "main.tex").read_text().startswith("\\documentclass")
    outline = json.loads((paper_dir / "outline.json").read_text())
    assert outline["section"] == "Gated Fusion Network"
    assert (paper_dir / "figures" / "loss.png").read_bytes() == b"png"


@given(st.permutations(list(ORDER)))
def test_assemble_order_controls_layout(order):
    manuscript = assemble(make_drafts(), tuple(order))
    positions = [manuscript.tex.index(f"{{{name}}}") for name in order]
    assert positions == sorted(positions)
