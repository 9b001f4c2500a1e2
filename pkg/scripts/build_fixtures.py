#!/usr/bin/env python3
"""Regenerate the fixture tree used by the mock pipeline and the test suite.

Everything under fixtures/ is derived from this script. Each fixture bundle
holds a task description, a candidate repository pool, offline paper sources
and repository snapshots, and per-agent scripted responses consumed in order
by the scripted provider. The script validates its own output: cited span
line numbers must exist in the generated sources and cited code files must
exist in the generated repositories.

Usage: python3 scripts/build_fixtures.py [--root DIR]
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parents[1]


# --- helpers ---------------------------------------------------------------


def write(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content, encoding="utf-8")


def script_file(script_dir: Path, agent: str, responses: list[dict]) -> None:
    write(script_dir / f"{agent}.json", json.dumps({"responses": responses}, indent=2))


def text(reply: str) -> dict:
    return {"text": reply}


def text_json(payload: object) -> dict:
    return {"text": json.dumps(payload, indent=2)}


def calls(*pairs: tuple[str, dict]) -> dict:
    return {"tool_calls": [{"name": name, "args": args} for name, args in pairs]}


def line_of(tex: str, needle: str) -> int:
    """1-based line number of the first line containing the needle."""
    for lineno, line in enumerate(tex.splitlines(), start=1):
        if needle in line:
            return lineno
    raise SystemExit(f"fixture bug: {needle!r} not found in generated source")


# --- level 1: guided task --------------------------------------------------

L1_PAPER_A = """\\documentclass{article}
\\usepackage{amsmath}
\\begin{document}
\\section{Introduction}
Sensor pipelines often observe the same quantity through two noisy channels.
Fixed averaging wastes whichever channel is momentarily cleaner, so the
mixing weight should be learned from the stream itself.
\\section{Method}
Let $x_t$ and $y_t$ be the paired channel observations at step $t$. A scalar
gate $g \\in [0,1]$ produces the fused signal
\\begin{equation}
f_t = g \\, x_t + (1 - g) \\, y_t .
\\end{equation}
The gate follows the fused error $e_t = f_t - \\tau_t$ against the target
$\\tau_t$ through the proximal update
\\begin{equation}
g \\leftarrow g - \\eta \\, e_t \\, (x_t - y_t) .
\\end{equation}
The update needs no gradient tape: it is a one-parameter recurrence over the
stream, which keeps the unit cheap enough to run per channel.
\\section{Experiments}
On synthetic two-channel streams the learned gate tracks the cleaner channel
and halves the fused error relative to the fixed $g = 0.5$ baseline.
\\end{document}
"""

L1_PAPER_B = """\\documentclass{article}
\\usepackage{amsmath}
\\begin{document}
\\section{Introduction}
Modern sequence models are systematically overconfident: the probability
they assign to a prediction exceeds its empirical accuracy.
\\section{Calibration}
Temperature scaling rescales the logits $l$ with one scalar $T > 0$,
\\begin{equation}
\\hat{p} = \\mathrm{softmax}(l / T) ,
\\end{equation}
fitted on held-out data. The calibrated confidence $c_t \\in [0,1]$ is the
maximum entry of $\\hat{p}$ and can be consumed by downstream components as
a reliability weight.
\\section{Discussion}
A well calibrated confidence is exactly the quantity a fusion rule should
use to decide how much to trust each channel at each step.
\\end{document}
"""

L1_TRAIN = """import argparse
import json
import os
import random


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument(
        "--epochs", type=int, default=int(os.environ.get("RUN_EPOCHS", "1"))
    )
    args = parser.parse_args()
    subset = float(os.environ.get("RUN_SUBSET_FRACTION", "1.0"))
    rng = random.Random(7)
    count = max(1, int(200 * subset))
    pairs = [(rng.random(), rng.random()) for _ in range(count)]
    gate = 0.5
    confidence = 0.8
    loss = 1.0
    for epoch in range(args.epochs):
        for left, right in pairs:
            fused = gate * left + (1.0 - gate) * right
            target = confidence * 0.5 * (left + right)
            err = fused - target
            gate -= 0.05 * err * (left - right)
            gate = min(1.0, max(0.0, gate))
            loss = 0.9 * loss + 0.1 * abs(err)
        print(f"epoch {epoch + 1}: loss={loss:.4f} gate={gate:.3f}")
    with open("results.json", "w", encoding="utf-8") as fh:
        json.dump(
            {"loss": round(loss, 4), "gate": round(gate, 4), "examples": count}, fh
        )
    print("done")


if __name__ == "__main__":
    main()
"""

L1_CANDIDATES = [
    {
        "url": "https://git.example/labs/gated-fusion-net",
        "stars": 410,
        "created_at": "2024-03-12",
        "readme_quality": 0.9,
        "relevance": 0.95,
        "citation_impact": 0.7,
    },
    {
        "url": "https://git.example/labs/confidence-calib",
        "stars": 220,
        "created_at": "2023-11-02",
        "readme_quality": 0.8,
        "relevance": 0.85,
        "citation_impact": 0.6,
    },
    {
        "url": "https://git.example/mlkit/stream-bench",
        "stars": 150,
        "created_at": "2024-06-20",
        "readme_quality": 0.7,
        "relevance": 0.8,
        "citation_impact": 0.5,
    },
    {
        "url": "https://git.example/mlkit/recurrent-gates",
        "stars": 95,
        "created_at": "2023-05-14",
        "readme_quality": 0.6,
        "relevance": 0.7,
        "citation_impact": 0.4,
    },
    {
        "url": "https://git.example/tools/fusion-baselines",
        "stars": 60,
        "created_at": "2024-01-30",
        "readme_quality": 0.5,
        "relevance": 0.65,
        "citation_impact": 0.35,
    },
    {
        "url": "https://git.example/tools/calib-metrics",
        "stars": 35,
        "created_at": "2022-09-08",
        "readme_quality": 0.45,
        "relevance": 0.5,
        "citation_impact": 0.3,
    },
]

L1_REPOS = {
    "gated-fusion-net": {
        "README.md": "# gated-fusion-net\n\nLearned gates for two-channel fusion.\n",
        "fusion/gates.py": (
            "class GatedFusion:\n"
            "    \"\"\"Scalar-gate fusion of two aligned channels.\"\"\"\n\n"
            "    def __init__(self, gate: float = 0.5) -> None:\n"
            "        self.gate = gate\n\n"
            "    def fuse(self, left: float, right: float) -> float:\n"
            "        return self.gate * left + (1.0 - self.gate) * right\n\n\n"
            "def gate_update(gate: float, err: float, diff: float, lr: float = 0.05) -> float:\n"
            "    return min(1.0, max(0.0, gate - lr * err * diff))\n"
        ),
    },
    "confidence-calib": {
        "README.md": "# confidence-calib\n\nTemperature scaling utilities.\n",
        "calibrate.py": (
            "import math\n\n\n"
            "def temperature_scale(logits: list[float], temperature: float) -> list[float]:\n"
            "    scaled = [l / temperature for l in logits]\n"
            "    top = max(scaled)\n"
            "    exps = [math.exp(s - top) for s in scaled]\n"
            "    total = sum(exps)\n"
            "    return [e / total for e in exps]\n\n\n"
            "class ConfidenceHead:\n"
            "    def __init__(self, temperature: float = 1.5) -> None:\n"
            "        self.temperature = temperature\n\n"
            "    def confidence(self, logits: list[float]) -> float:\n"
            "        return max(temperature_scale(logits, self.temperature))\n"
        ),
    },
    "stream-bench": {
        "README.md": "# stream-bench\n\nSynthetic paired-channel stream generators.\n",
        "bench/loader.py": (
            "import random\n\n\n"
            "def stream_batches(count: int, seed: int = 0):\n"
            "    rng = random.Random(seed)\n"
            "    for _ in range(count):\n"
            "        yield rng.random(), rng.random()\n"
        ),
    },
    "recurrent-gates": {
        "README.md": "# recurrent-gates\n\nOne-parameter recurrent gate baselines.\n",
        "gates.py": (
            "class RecurrentGate:\n"
            "    def __init__(self, value: float = 0.5, lr: float = 0.05) -> None:\n"
            "        self.value = value\n"
            "        self.lr = lr\n\n"
            "    def step(self, err: float, diff: float) -> float:\n"
            "        self.value = min(1.0, max(0.0, self.value - self.lr * err * diff))\n"
            "        return self.value\n"
        ),
    },
    "fusion-baselines": {
        "README.md": "# fusion-baselines\n\nFixed-weight fusion baselines.\n",
        "baselines.py": (
            "def late_fusion(left: float, right: float, weight: float = 0.5) -> float:\n"
            "    return weight * left + (1.0 - weight) * right\n"
        ),
    },
    "calib-metrics": {
        "README.md": "# calib-metrics\n\nCalibration error metrics.\n",
        "metrics.py": (
            "def expected_calibration_error(confidences, correct, bins: int = 10) -> float:\n"
            "    total = len(confidences)\n"
            "    if total == 0:\n"
            "        return 0.0\n"
            "    error = 0.0\n"
            "    for b in range(bins):\n"
            "        lo, hi = b / bins, (b + 1) / bins\n"
            "        members = [i for i, c in enumerate(confidences) if lo <= c < hi]\n"
            "        if not members:\n"
            "            continue\n"
            "        acc = sum(1 for i in members if correct[i]) / len(members)\n"
            "        conf = sum(confidences[i] for i in members) / len(members)\n"
            "        error += len(members) / total * abs(acc - conf)\n"
            "    return error\n"
        ),
    },
}

L1_CONCEPTS = [
    {
        "name": "gated recurrent fusion",
        "definition": (
            "A scalar gate in [0,1] mixes two aligned stream channels into one "
            "fused signal and is updated recurrently from the fused error, so "
            "the mixture tracks whichever channel is currently cleaner."
        ),
    },
    {
        "name": "confidence calibration",
        "definition": (
            "Predicted probabilities are rescaled with a single temperature "
            "parameter so the reported confidence matches empirical accuracy, "
            "yielding a reliability weight in [0,1]."
        ),
    },
    {
        "name": "confidence-scaled gating",
        "definition": (
            "The gate update target is scaled by the calibrated confidence, so "
            "the fusion rule trusts the channels in proportion to how reliable "
            "the current prediction is."
        ),
    },
]

L1_PLAN_CALLS = [
    (
        "plan_dataset",
        {
            "plan": (
                "Generate the synthetic two-channel stream in memory: 200 paired "
                "observations from a seeded generator, honoring "
                "RUN_SUBSET_FRACTION so prototype runs see a small subset."
            )
        },
    ),
    (
        "plan_training",
        {
            "plan": (
                "Train the scalar gate with proximal updates on the fused error "
                "for the requested number of epochs (--epochs flag with "
                "RUN_EPOCHS fallback), scaling the target by the calibrated "
                "confidence and logging loss per epoch."
            )
        },
    ),
    (
        "plan_testing",
        {
            "plan": (
                "After training, report final loss, learned gate value, and "
                "example count as flat numeric metrics in results.json."
            )
        },
    ),
    ("case_resolved", {}),
]

L1_SKELETON_1 = """\\section{Confidence-Weighted Gated Fusion}
% gate learned from the fused error, scaled by calibrated confidence
\\subsection{Gated Recurrent Fusion Unit}
% per-step mixture of the paired channels through one scalar gate
\\subsection{Confidence Weighting}
% calibrated confidence rescales the gate's training target
"""

L1_SKELETON_2 = """\\section{Confidence-Weighted Gated Fusion}
% gate learned from the fused error, scaled by calibrated confidence
\\subsection{Gated Recurrent Fusion Unit}
% per-step mixture of the paired channels through one scalar gate
\\subsection{Confidence Weighting}
% calibrated confidence rescales the gate's training target
\\subsection{Training Procedure}
% proximal updates over the stream and the evaluation protocol
"""

L1_DETAIL = {
    "Gated Recurrent Fusion Unit": """\\subsection{Gated Recurrent Fusion Unit}
The fusion unit merges the paired observations $x_t$ and $y_t$ through one scalar gate $g \\in [0,1]$. At every step the fused signal is
\\begin{equation}
f_t = g \\, x_t + (1 - g) \\, y_t ,
\\end{equation}
where $g$ is shared across the stream and updated from the fused error $e_t$. The unit is a one-parameter recurrence, so it adds no per-step model capacity beyond the gate itself, and its output feeds directly into the confidence weighting below.""",
    "Confidence Weighting": """\\subsection{Confidence Weighting}
The calibrated confidence $c \\in [0,1]$ rescales the training target of the gate. With target $\\tau_t = c \\cdot \\tfrac{1}{2}(x_t + y_t)$ the fused error becomes
\\begin{equation}
e_t = f_t - \\tau_t ,
\\end{equation}
so an unreliable predictor shrinks the target magnitude and with it the effective step taken by the gate. The confidence is produced by temperature scaling and is treated as a constant within one epoch.""",
    "Training Procedure": """\\subsection{Training Procedure}
Training sweeps the stream for a fixed number of epochs and applies the proximal update
\\begin{equation}
g \\leftarrow g - \\eta \\, e_t \\, (x_t - y_t)
\\end{equation}
after each pair, clamping $g$ to $[0,1]$. The prototype budget caps the epochs and samples a small subset of the stream; the full run uses the whole stream. Final loss, the learned gate, and the example count are reported as flat numeric metrics.""",
}

L1_ADVISOR = {
    "findings": [
        {
            "concept": "gated recurrent fusion",
            "status": "implemented",
            "evidence": (
                "train.py fuses left and right with one scalar gate and updates "
                "it from the fused error after every pair"
            ),
            "suggestion": "",
        },
        {
            "concept": "confidence calibration",
            "status": "implemented",
            "evidence": (
                "a confidence scalar in [0,1] is applied to the target, standing "
                "in for the temperature-scaled reliability weight"
            ),
            "suggestion": "",
        },
        {
            "concept": "confidence-scaled gating",
            "status": "implemented",
            "evidence": (
                "the gate's training target is the confidence-scaled channel "
                "mean, so the update magnitude follows reliability"
            ),
            "suggestion": "",
        },
    ],
    "suggestions": [],
}

L1_ANALYSIS = {
    "items": [
        {
            "kind": "visualize",
            "description": (
                "Plot the per-epoch loss from the training log to confirm the "
                "fused error decreases monotonically."
            ),
            "artifacts": ["loss_curve.png"],
        },
        {
            "kind": "comparative_analysis",
            "description": (
                "Compare the learned gate against the fixed 0.5 late-fusion "
                "baseline on the same stream and report the loss gap."
            ),
            "artifacts": [],
        },
    ]
}


def build_level1(root: Path) -> None:
    base = root / "level1"
    task = {
        "task_id": "l1-gated-fusion",
        "level": "Level1",
        "references": [
            {
                "title": "Gated Recurrent Fusion for Noisy Sensor Streams",
                "external_id": "paper-a",
            },
            {
                "title": "Confidence-Calibrated Ensembles for Sequence Models",
                "external_id": "paper-b",
            },
        ],
        "datasets": ["synthetic-streams"],
        "instruction": (
            "Combine gated recurrent fusion with calibrated confidence "
            "weighting: learn a per-channel gate whose training target is "
            "scaled by a calibrated confidence score, and train the fused "
            "model end to end on the synthetic stream benchmark."
        ),
    }
    write(base / "task.json", json.dumps(task, indent=2))
    write(base / "candidates.json", json.dumps(L1_CANDIDATES, indent=2))
    write(base / "sources" / "paper-a" / "paper.tex", L1_PAPER_A)
    write(base / "sources" / "paper-b" / "paper.tex", L1_PAPER_B)
    for repo, files in L1_REPOS.items():
        for rel, content in files.items():
            write(base / "repos" / repo / rel, content)

    script = base / "script"
    script_file(
        script,
        "acquisition",
        [
            text_json(
                {
                    "keep": [c["url"] for c in L1_CANDIDATES],
                    "rationales": {
                        L1_CANDIDATES[0]["url"]: "reference gate implementation",
                        L1_CANDIDATES[1]["url"]: "temperature scaling code",
                        L1_CANDIDATES[2]["url"]: "stream generators for the benchmark",
                        L1_CANDIDATES[3]["url"]: "minimal recurrent gate baseline",
                        L1_CANDIDATES[4]["url"]: "fixed-weight fusion baselines",
                        L1_CANDIDATES[5]["url"]: "calibration error metrics",
                    },
                }
            )
        ],
    )
    script_file(script, "concept-decomposer", [text_json(L1_CONCEPTS)])

    gate_eq = line_of(L1_PAPER_A, "f_t = g")
    gate_update = line_of(L1_PAPER_A, "g \\leftarrow g")
    temp_eq = line_of(L1_PAPER_B, "softmax")
    script_file(
        script,
        "paper-analyst",
        [
            text_json(
                {
                    "spans": [
                        {
                            "file": "paper-a/paper.tex",
                            "line_start": gate_eq - 1,
                            "line_end": gate_eq + 1,
                            "latex": "f_t = g \\, x_t + (1 - g) \\, y_t",
                        },
                        {
                            "file": "paper-a/paper.tex",
                            "line_start": gate_update - 1,
                            "line_end": gate_update + 1,
                            "latex": "g \\leftarrow g - \\eta \\, e_t \\, (x_t - y_t)",
                        },
                    ]
                }
            ),
            text_json(
                {
                    "spans": [
                        {
                            "file": "paper-b/paper.tex",
                            "line_start": temp_eq - 1,
                            "line_end": temp_eq + 1,
                            "latex": "\\hat{p} = \\mathrm{softmax}(l / T)",
                        }
                    ]
                }
            ),
            text_json(
                {
                    "spans": [
                        {
                            "file": "paper-a/paper.tex",
                            "line_start": gate_update,
                            "line_end": gate_update,
                            "latex": "g \\leftarrow g - \\eta \\, e_t \\, (x_t - y_t)",
                        },
                        {
                            "file": "paper-b/paper.tex",
                            "line_start": temp_eq,
                            "line_end": temp_eq,
                            "latex": "\\hat{p} = \\mathrm{softmax}(l / T)",
                        },
                    ]
                }
            ),
        ],
    )
    script_file(
        script,
        "code-analyst",
        [
            text_json(
                {
                    "anchors": [
                        {
                            "repo": "gated-fusion-net",
                            "file": "fusion/gates.py",
                            "symbol": "GatedFusion",
                        },
                        {
                            "repo": "recurrent-gates",
                            "file": "gates.py",
                            "symbol": "RecurrentGate",
                        },
                    ],
                    "notes": (
                        "GatedFusion.fuse is the mixture equation; "
                        "RecurrentGate.step is the clamped proximal update."
                    ),
                }
            ),
            text_json(
                {
                    "anchors": [
                        {
                            "repo": "confidence-calib",
                            "file": "calibrate.py",
                            "symbol": "temperature_scale",
                        },
                        {
                            "repo": "calib-metrics",
                            "file": "metrics.py",
                            "symbol": "expected_calibration_error",
                        },
                    ],
                    "notes": (
                        "temperature_scale implements the rescaled softmax; the "
                        "ECE metric quantifies how calibrated the output is."
                    ),
                }
            ),
            text_json(
                {
                    "anchors": [
                        {
                            "repo": "gated-fusion-net",
                            "file": "fusion/gates.py",
                            "symbol": "gate_update",
                        },
                        {
                            "repo": "confidence-calib",
                            "file": "calibrate.py",
                            "symbol": "ConfidenceHead",
                        },
                    ],
                    "notes": (
                        "gate_update takes the error already scaled by the "
                        "confidence from ConfidenceHead.confidence."
                    ),
                }
            ),
        ],
    )
    script_file(script, "plan-agent", [calls(*L1_PLAN_CALLS)])
    script_file(
        script,
        "code-agent",
        [
            calls(("create_file", {"path": "project/train.py", "content": L1_TRAIN})),
            calls(("case_resolved", {})),
        ],
    )
    script_file(script, "advisor", [text_json(L1_ADVISOR)])
    script_file(script, "experiment-analysis", [text_json(L1_ANALYSIS)])
    script_file(script, "writing-structure", [text(L1_SKELETON_1), text(L1_SKELETON_2)])
    leaves = ["Gated Recurrent Fusion Unit", "Confidence Weighting", "Training Procedure"]
    script_file(script, "writing-detail", [text(L1_DETAIL[name]) for name in leaves])
    revisions = []
    for name in leaves:
        pass_one = (
            L1_DETAIL[name]
            + "\nEvery symbol above is defined at first use and matches the "
            "implementation one to one."
        )
        pass_two = (
            pass_one
            + "\nThe notation is kept consistent with the preceding subsections."
        )
        revisions += [text(pass_one), text(pass_two)]
    script_file(script, "writing-revise", revisions)


# --- level 2: open-ended task ----------------------------------------------

L2_PAPER_C = """\\documentclass{article}
\\usepackage{amsmath}
\\begin{document}
\\section{Introduction}
Multi-stream sequence models must decide, at every step, how much each
stream contributes to the prediction. Static mixture weights ignore that
stream quality drifts over time.
\\section{Adaptive Gating}
We drive a gate $g_t$ from the recent error signal $e_{t-1}$,
\\begin{equation}
g_t = \\sigma(\\alpha \\, e_{t-1} + \\beta) ,
\\end{equation}
with learnable $\\alpha$ and $\\beta$ updated online,
\\begin{equation}
\\alpha \\leftarrow \\alpha - \\eta \\, e_t \\, e_{t-1} .
\\end{equation}
The step size $\\eta$ is fixed, which we show is the main failure mode under
scale drift.
\\section{Experiments}
Adaptive gates beat static mixtures on drifting streams but diverge when the
input scale jumps by an order of magnitude.
\\end{document}
"""

L2_PAPER_D = """\\documentclass{article}
\\usepackage{amsmath}
\\begin{document}
\\section{Introduction}
Online learners with fixed step sizes are brittle: the same $\\eta$ that
converges on unit-scale data diverges when the scale shifts.
\\section{Self-Normalizing Updates}
We bound the effective step by a running scale estimate $s_t$,
\\begin{equation}
s_t = \\gamma \\, s_{t-1} + (1 - \\gamma) \\, |e_t| ,
\\end{equation}
and divide every update by $\\max(1, s_t)$,
\\begin{equation}
w_{t+1} = w_t - \\frac{\\eta}{\\max(1, s_t)} \\, \\nabla \\ell_t .
\\end{equation}
The learner then behaves identically across input scales without retuning.
\\section{Discussion}
Self-normalization composes with any first-order update rule, including
recurrences that carry a single parameter.
\\end{document}
"""

L2_TRAIN_BUGGY = """import argparse
import sys


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--epochs", type=int, default=1)
    parser.parse_args()
    print("building adaptive gate")
    print("error: running scale estimate is never initialized")
    sys.exit(1)


if __name__ == "__main__":
    main()
"""

L2_TRAIN_FIXED = """import argparse
import json
import os
import random


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument(
        "--epochs", type=int, default=int(os.environ.get("RUN_EPOCHS", "1"))
    )
    args = parser.parse_args()
    subset = float(os.environ.get("RUN_SUBSET_FRACTION", "1.0"))
    rng = random.Random(11)
    count = max(1, int(240 * subset))
    pairs = [(rng.gauss(0.0, 1.0), rng.gauss(0.0, 1.0)) for _ in range(count)]
    gate = 0.5
    scale = 1.0
    loss = 1.0
    for epoch in range(args.epochs):
        for left, right in pairs:
            fused = gate * left + (1.0 - gate) * right
            err = fused - (0.6 * left + 0.4 * right)
            scale = 0.95 * scale + 0.05 * abs(err)
            gate -= 0.1 * err / max(1.0, scale)
            gate = min(1.0, max(0.0, gate))
            loss = 0.9 * loss + 0.1 * abs(err)
        print(
            f"epoch {epoch + 1}: loss={loss:.4f} gate={gate:.3f} scale={scale:.3f}"
        )
    with open("results.json", "w", encoding="utf-8") as fh:
        json.dump(
            {"loss": round(loss, 4), "gate": round(gate, 4), "examples": count}, fh
        )
    print("done")


if __name__ == "__main__":
    main()
"""

L2_CANDIDATES = [
    {
        "url": "https://git.example/labs/adaptive-gates",
        "stars": 380,
        "created_at": "2024-02-18",
        "readme_quality": 0.85,
        "relevance": 0.9,
        "citation_impact": 0.65,
    },
    {
        "url": "https://git.example/labs/online-normalizers",
        "stars": 240,
        "created_at": "2023-10-05",
        "readme_quality": 0.8,
        "relevance": 0.8,
        "citation_impact": 0.55,
    },
    {
        "url": "https://git.example/mlkit/stream-bench",
        "stars": 150,
        "created_at": "2024-06-20",
        "readme_quality": 0.7,
        "relevance": 0.8,
        "citation_impact": 0.5,
    },
    {
        "url": "https://git.example/mlkit/seq-mixers",
        "stars": 120,
        "created_at": "2023-07-21",
        "readme_quality": 0.6,
        "relevance": 0.7,
        "citation_impact": 0.45,
    },
    {
        "url": "https://git.example/tools/gate-zoo",
        "stars": 75,
        "created_at": "2024-04-02",
        "readme_quality": 0.55,
        "relevance": 0.6,
        "citation_impact": 0.4,
    },
    {
        "url": "https://git.example/tools/norm-utils",
        "stars": 40,
        "created_at": "2022-12-12",
        "readme_quality": 0.5,
        "relevance": 0.5,
        "citation_impact": 0.3,
    },
]

L2_REPOS = {
    "adaptive-gates": {
        "README.md": "# adaptive-gates\n\nError-driven gates for stream mixtures.\n",
        "gating/adaptive.py": (
            "import math\n\n\n"
            "class AdaptiveGate:\n"
            "    def __init__(self, alpha: float = 1.0, beta: float = 0.0) -> None:\n"
            "        self.alpha = alpha\n"
            "        self.beta = beta\n\n"
            "    def value(self, prev_err: float) -> float:\n"
            "        return 1.0 / (1.0 + math.exp(-(self.alpha * prev_err + self.beta)))\n\n\n"
            "def gate_step(alpha: float, err: float, prev_err: float, lr: float = 0.1) -> float:\n"
            "    return alpha - lr * err * prev_err\n"
        ),
    },
    "online-normalizers": {
        "README.md": "# online-normalizers\n\nRunning-scale update normalizers.\n",
        "normalize.py": (
            "class RunningScale:\n"
            "    def __init__(self, decay: float = 0.95) -> None:\n"
            "        self.decay = decay\n"
            "        self.value = 1.0\n\n"
            "    def update(self, err: float) -> float:\n"
            "        self.value = self.decay * self.value + (1.0 - self.decay) * abs(err)\n"
            "        return self.value\n\n\n"
            "def self_normalize(step: float, scale: float) -> float:\n"
            "    return step / max(1.0, scale)\n"
        ),
    },
    "stream-bench": {
        "README.md": "# stream-bench\n\nSynthetic paired-channel stream generators.\n",
        "bench/loader.py": (
            "import random\n\n\n"
            "def stream_batches(count: int, seed: int = 0):\n"
            "    rng = random.Random(seed)\n"
            "    for _ in range(count):\n"
            "        yield rng.random(), rng.random()\n"
        ),
    },
    "seq-mixers": {
        "README.md": "# seq-mixers\n\nChannel mixing layers for sequences.\n",
        "mixers.py": (
            "class ChannelMixer:\n"
            "    def __init__(self, weight: float = 0.5) -> None:\n"
            "        self.weight = weight\n\n"
            "    def mix(self, left: float, right: float) -> float:\n"
            "        return self.weight * left + (1.0 - self.weight) * right\n"
        ),
    },
    "gate-zoo": {
        "README.md": "# gate-zoo\n\nA small collection of gate constructors.\n",
        "zoo.py": (
            "def make_gate(kind: str = \"sigmoid\"):\n"
            "    if kind == \"sigmoid\":\n"
            "        import math\n\n"
            "        return lambda x: 1.0 / (1.0 + math.exp(-x))\n"
            "    if kind == \"clamp\":\n"
            "        return lambda x: min(1.0, max(0.0, x))\n"
            "    raise ValueError(kind)\n"
        ),
    },
}

L2_DIRECTIONS = [
    {
        "direction": (
            "Replay-buffer curricula for gated stream models: schedule hard "
            "segments more often as the gate stabilizes"
        ),
        "novelty": 3,
        "soundness": 3,
        "transformative": 3,
    },
    {
        "direction": (
            "Contrastive pretraining of channel mixers before online fusion "
            "fine-tuning"
        ),
        "novelty": 4,
        "soundness": 3,
        "transformative": 3,
    },
    {
        "direction": (
            "Self-normalizing adaptive gates: divide the gate update by a "
            "running scale estimate of recent errors so online fusion stays "
            "stable across input-scale drift without retuning"
        ),
        "novelty": 5,
        "soundness": 4,
        "transformative": 4,
    },
    {
        "direction": (
            "Meta-learned gate initialization from a distribution of synthetic "
            "streams"
        ),
        "novelty": 4,
        "soundness": 3,
        "transformative": 2,
    },
    {
        "direction": (
            "Sparsity-promoting regularizers that push gates toward hard "
            "channel selection"
        ),
        "novelty": 3,
        "soundness": 4,
        "transformative": 3,
    },
]

L2_IDEA = {
    "challenges": (
        "Online fusion models drift when the input scale shifts: a fixed gate "
        "step size either diverges on bursts or adapts too slowly on calm "
        "segments, and retuning per stream defeats the point of online "
        "learning."
    ),
    "existing_methods": (
        "Adaptive gating drives the gate from the recent error signal but "
        "keeps a fixed step size; self-normalizing update rules bound "
        "parameter growth by a running scale estimate but have only been "
        "applied to flat parameter vectors, not to gating recurrences."
    ),
    "motivation": (
        "Coupling the two mechanisms lets the gate adapt quickly when the "
        "error is informative while the normalizer guards against runaway "
        "updates, giving scale-invariant behavior with zero extra tuning."
    ),
    "proposed_method": (
        "A self-normalizing adaptive gate: maintain a running scale estimate "
        "of the fused error and divide every gate update by that estimate, "
        "clamping the gate to the unit interval."
    ),
    "technical_details": (
        "Keep s as an exponential moving average of |e| with decay 0.95; "
        "update the gate by g <- g - eta * e / max(1, s) after every pair; "
        "clamp g to [0,1]; report loss, gate, and example count."
    ),
    "expected_outcomes": (
        "Stable convergence of the fused loss across scale shifts, matching "
        "the fixed-rate gate on calm streams and avoiding its divergence on "
        "bursty ones."
    ),
}

L2_CONCEPTS = [
    {
        "name": "adaptive gate update",
        "definition": (
            "A scalar gate mixing two streams is adjusted after every step in "
            "proportion to the current fused error, so the mixture follows "
            "stream quality online."
        ),
    },
    {
        "name": "self-normalizing step size",
        "definition": (
            "Each update is divided by a running scale estimate of recent "
            "errors, bounding the effective step so behavior is invariant to "
            "the input scale."
        ),
    },
]

L2_PLAN_CALLS = [
    (
        "plan_dataset",
        {
            "plan": (
                "Generate 240 paired Gaussian observations from a seeded "
                "generator, honoring RUN_SUBSET_FRACTION for prototype "
                "subsets."
            )
        },
    ),
    (
        "plan_training",
        {
            "plan": (
                "Update the gate from the fused error after every pair, "
                "dividing the step by a running scale estimate (EMA of the "
                "absolute error, decay 0.95) and clamping the gate to [0,1]; "
                "run for --epochs epochs with RUN_EPOCHS fallback."
            )
        },
    ),
    (
        "plan_testing",
        {
            "plan": (
                "Write final loss, gate value, and example count to "
                "results.json as flat numeric metrics after training."
            )
        },
    ),
    ("case_resolved", {}),
]

L2_ADVISOR_1 = {
    "findings": [
        {
            "concept": "adaptive gate update",
            "status": "divergent",
            "evidence": (
                "train.py prints an error and exits with status 1 before any "
                "gate update runs"
            ),
            "suggestion": (
                "Implement the update loop over the generated pairs and apply "
                "the error-driven gate step each iteration."
            ),
        },
        {
            "concept": "self-normalizing step size",
            "status": "missing",
            "evidence": "no running scale estimate exists anywhere in train.py",
            "suggestion": (
                "Track an exponential moving average of the absolute error and "
                "divide the gate step by max(1, scale)."
            ),
        },
    ],
    "suggestions": [
        "Write results.json with flat numeric metrics once training completes."
    ],
}

L2_ADVISOR_2 = {
    "findings": [
        {
            "concept": "adaptive gate update",
            "status": "implemented",
            "evidence": (
                "the training loop updates the gate from the fused error after "
                "every pair and clamps it to the unit interval"
            ),
            "suggestion": "",
        },
        {
            "concept": "self-normalizing step size",
            "status": "implemented",
            "evidence": (
                "scale is an EMA of |err| with decay 0.95 and the gate step is "
                "divided by max(1, scale)"
            ),
            "suggestion": "",
        },
    ],
    "suggestions": [],
}

L2_ANALYSIS = {
    "items": [
        {
            "kind": "add_experiment",
            "description": (
                "Rerun with the scale normalizer disabled to quantify its "
                "contribution to stability on the same stream."
            ),
            "artifacts": [],
        },
        {
            "kind": "visualize",
            "description": (
                "Plot the gate and scale trajectories across the stream to "
                "show the normalizer absorbing error bursts."
            ),
            "artifacts": ["gate_scale.png"],
        },
    ]
}

L2_SKELETON_1 = """\\section{Self-Normalizing Adaptive Gating}
% error-driven gate whose step is bounded by a running scale estimate
\\subsection{Gate Update Rule}
% per-step gate adjustment from the fused error
\\subsection{Running Scale Normalizer}
% EMA of the absolute error bounds the effective step
"""

L2_SKELETON_2 = """\\section{Self-Normalizing Adaptive Gating}
% error-driven gate whose step is bounded by a running scale estimate
\\subsection{Gate Update Rule}
% per-step gate adjustment from the fused error
\\subsection{Running Scale Normalizer}
% EMA of the absolute error bounds the effective step
\\subsection{Experimental Protocol}
% prototype and full budgets, metrics reported
"""

L2_DETAIL = {
    "Gate Update Rule": """\\subsection{Gate Update Rule}
The gate $g \\in [0,1]$ mixes the paired observations into $f_t = g \\, x_t + (1 - g) \\, y_t$ and is adjusted after every step from the fused error $e_t$,
\\begin{equation}
g \\leftarrow g - \\frac{\\eta}{\\max(1, s_t)} \\, e_t ,
\\end{equation}
followed by clamping to the unit interval. The denominator is supplied by the running scale normalizer described next, which is what keeps the rule stable under scale drift.""",
    "Running Scale Normalizer": """\\subsection{Running Scale Normalizer}
The scale estimate $s_t$ is an exponential moving average of the absolute fused error,
\\begin{equation}
s_t = \\gamma \\, s_{t-1} + (1 - \\gamma) \\, |e_t| ,
\\end{equation}
with decay $\\gamma = 0.95$ and $s_0 = 1$. Dividing the gate step by $\\max(1, s_t)$ bounds the update on bursty segments while leaving unit-scale behavior untouched, so no per-stream tuning of $\\eta$ is required.""",
    "Experimental Protocol": """\\subsection{Experimental Protocol}
The prototype run caps the epochs and samples a small fraction of the stream; only after it succeeds does the full-scale run sweep every pair for the full epoch budget. Both runs report the final smoothed loss, the learned gate, and the number of examples as flat numeric metrics, which the comparative follow-up experiments consume directly.""",
}


def build_level2(root: Path) -> None:
    base = root / "level2"
    task = {
        "task_id": "l2-adaptive-gating",
        "level": "Level2",
        "references": [
            {
                "title": "Adaptive Gating for Multi-Stream Sequence Models",
                "external_id": "paper-c",
            },
            {
                "title": "Self-Normalizing Update Rules for Online Learning",
                "external_id": "paper-d",
            },
        ],
        "datasets": ["synthetic-streams"],
    }
    write(base / "task.json", json.dumps(task, indent=2))
    write(base / "candidates.json", json.dumps(L2_CANDIDATES, indent=2))
    write(base / "sources" / "paper-c" / "paper.tex", L2_PAPER_C)
    write(base / "sources" / "paper-d" / "paper.tex", L2_PAPER_D)
    for repo, files in L2_REPOS.items():
        for rel, content in files.items():
            write(base / "repos" / repo / rel, content)

    script = base / "script"
    kept = [c["url"] for c in L2_CANDIDATES[:5]]
    script_file(
        script,
        "acquisition",
        [
            text_json(
                {
                    "keep": kept,
                    "rationales": {
                        kept[0]: "error-driven gate reference code",
                        kept[1]: "running scale normalizer implementation",
                        kept[2]: "stream generators for the benchmark",
                        kept[3]: "mixing-layer baseline",
                        kept[4]: "gate constructors for ablations",
                    },
                }
            )
        ],
    )
    script_file(script, "idea-generator", [text_json(L2_DIRECTIONS)])
    script_file(script, "idea-elaborator", [text_json(L2_IDEA)])
    script_file(script, "concept-decomposer", [text_json(L2_CONCEPTS)])

    alpha_eq = line_of(L2_PAPER_C, "g_t = ")
    scale_eq = line_of(L2_PAPER_D, "s_t = ")
    norm_eq = line_of(L2_PAPER_D, "w_{t+1}")
    script_file(
        script,
        "paper-analyst",
        [
            text_json(
                {
                    "spans": [
                        {
                            "file": "paper-c/paper.tex",
                            "line_start": alpha_eq - 1,
                            "line_end": alpha_eq + 1,
                            "latex": "g_t = \\sigma(\\alpha \\, e_{t-1} + \\beta)",
                        }
                    ]
                }
            ),
            text_json(
                {
                    "spans": [
                        {
                            "file": "paper-d/paper.tex",
                            "line_start": scale_eq - 1,
                            "line_end": scale_eq + 1,
                            "latex": "s_t = \\gamma \\, s_{t-1} + (1 - \\gamma) \\, |e_t|",
                        },
                        {
                            "file": "paper-d/paper.tex",
                            "line_start": norm_eq - 1,
                            "line_end": norm_eq + 1,
                            "latex": (
                                "w_{t+1} = w_t - \\frac{\\eta}{\\max(1, s_t)} "
                                "\\, \\nabla \\ell_t"
                            ),
                        },
                    ]
                }
            ),
        ],
    )
    script_file(
        script,
        "code-analyst",
        [
            text_json(
                {
                    "anchors": [
                        {
                            "repo": "adaptive-gates",
                            "file": "gating/adaptive.py",
                            "symbol": "gate_step",
                        },
                        {
                            "repo": "gate-zoo",
                            "file": "zoo.py",
                            "symbol": "make_gate",
                        },
                    ],
                    "notes": (
                        "gate_step is the error-driven parameter update; the "
                        "clamp gate from make_gate matches the unit-interval "
                        "projection."
                    ),
                }
            ),
            text_json(
                {
                    "anchors": [
                        {
                            "repo": "online-normalizers",
                            "file": "normalize.py",
                            "symbol": "RunningScale",
                        },
                        {
                            "repo": "online-normalizers",
                            "file": "normalize.py",
                            "symbol": "self_normalize",
                        },
                    ],
                    "notes": (
                        "RunningScale.update is the EMA of the absolute error; "
                        "self_normalize divides the step by max(1, scale)."
                    ),
                }
            ),
        ],
    )
    script_file(script, "plan-agent", [calls(*L2_PLAN_CALLS)])
    script_file(
        script,
        "code-agent",
        [
            calls(
                ("create_file", {"path": "project/train.py", "content": L2_TRAIN_BUGGY})
            ),
            calls(("case_resolved", {})),
            calls(
                ("write_file", {"path": "project/train.py", "content": L2_TRAIN_FIXED})
            ),
            calls(("case_resolved", {})),
        ],
    )
    script_file(script, "advisor", [text_json(L2_ADVISOR_1), text_json(L2_ADVISOR_2)])
    script_file(script, "experiment-analysis", [text_json(L2_ANALYSIS)])
    script_file(script, "writing-structure", [text(L2_SKELETON_1), text(L2_SKELETON_2)])
    leaves = ["Gate Update Rule", "Running Scale Normalizer", "Experimental Protocol"]
    script_file(script, "writing-detail", [text(L2_DETAIL[name]) for name in leaves])
    revisions = []
    for name in leaves:
        pass_one = (
            L2_DETAIL[name]
            + "\nEvery symbol above is defined at first use and matches the "
            "implementation one to one."
        )
        pass_two = (
            pass_one
            + "\nThe formulation stays consistent with the notation of the "
            "other subsections."
        )
        revisions += [text(pass_one), text(pass_two)]
    script_file(script, "writing-revise", revisions)


# --- anonymization corpus --------------------------------------------------

ANON_NAMES = [
    ("FluxNet", "FN"),
    ("StreamFormer", None),
    ("GateMixer", "GM"),
    ("CalibFlow", None),
    ("FusionRank", "FR"),
    ("NormWeaver", None),
    ("PulseTracker", "PT"),
    ("DriftGuard", None),
    ("ScaleTuner", "ST"),
    ("ChannelForge", None),
    ("ErrorLens", "EL"),
    ("TempoBlend", None),
    ("SignalLoom", "SL"),
    ("BurstTamer", None),
    ("EchoFuser", "EF"),
    ("WaveAligner", None),
    ("NoiseSifter", "NS"),
    ("PairBinder", "PB"),
    ("LoopScaler", None),
    ("CrestFinder", "CF"),
]

ANON_TEMPLATES = [
    (
        "{name} achieves strong results on all three benchmarks. Unlike prior "
        "work, {hyph} requires no per-dataset tuning, and ablations show that "
        "{spaced} degrades gracefully when half the training data is removed."
    ),
    (
        "We introduce {name}, a model that couples adaptive updates with a "
        "bounded step size. In our experiments {hyph} converges twice as fast "
        "as the strongest baseline while {lower} keeps memory usage flat."
    ),
    (
        "The key component of {name} is its normalizer. Removing it makes "
        "{spaced} diverge on bursty inputs, while the full {hyph} model stays "
        "stable across every scale we tested."
    ),
    (
        "Compared to existing systems, {name} uses an order of magnitude "
        "fewer parameters. We attribute the robustness of {lower} to its "
        "error-driven schedule, which {hyph} inherits from earlier gating "
        "work."
    ),
]


def _variants(name: str) -> dict[str, str]:
    split_camel = []
    for idx, ch in enumerate(name):
        if ch.isupper() and idx > 0:
            split_camel.append(" ")
        split_camel.append(ch)
    spaced = "".join(split_camel)
    return {
        "name": name,
        "hyph": spaced.replace(" ", "-"),
        "spaced": spaced,
        "lower": name.lower(),
    }


def build_anonymization(root: Path) -> None:
    cases = []
    for idx, (name, abbrev) in enumerate(ANON_NAMES):
        template = ANON_TEMPLATES[idx % len(ANON_TEMPLATES)]
        paragraph = template.format(**_variants(name))
        names = [name] if abbrev is None else [abbrev, name]
        if abbrev is not None:
            paragraph += f" Throughout, {abbrev} denotes the full system."
        cases.append({"names": names, "paragraph": paragraph})
    write(root / "anonymization" / "cases.json", json.dumps(cases, indent=2))


# --- evaluation panel scripts ----------------------------------------------


def _verdict(rating: int, why: str) -> dict:
    fenced = "```verdict\n" + json.dumps({"rating": rating, "justifications": [why]}) + "\n```"
    return {"text": fenced}


def build_eval(root: Path) -> None:
    base = root / "eval"
    write(
        base / "config.toml",
        'panel_judges = ["judge-a", "judge-b"]\nassessments_per_judge = 2\n',
    )
    script = base / "script"
    script_file(
        script,
        "judge-a",
        [
            _verdict(-1, "the first paper's evaluation section is thinner"),
            _verdict(0, "comparable soundness and presentation"),
            _verdict(1, "the first paper motivates its method more clearly"),
            _verdict(-1, "weaker ablation coverage in the first paper"),
            {"text": "4"},
        ],
    )
    script_file(
        script,
        "judge-b",
        [
            _verdict(0, "similar contribution with minor presentation gaps"),
            _verdict(-2, "the first paper omits the stability analysis"),
            _verdict(1, "cleaner formulation in the first paper"),
            _verdict(0, "both papers support their claims adequately"),
            {"text": "5"},
        ],
    )


def build_grader(root: Path) -> None:
    """Single-judge bundle for grading advisor reports of a finished run."""
    base = root / "grader"
    write(base / "config.toml", 'panel_judges = ["grader"]\n')
    script_file(base / "script", "grader", [{"text": "4"}])


def build_bench(root: Path) -> None:
    """Paper directory plus scripted extraction replies for task construction."""
    base = root / "bench"
    titles = [f"Prior Work {i:02d}" for i in range(1, 17)]
    write(
        base / "paper" / "paper.tex",
        "\\title{StreamGateNet: Adaptive Fusion of Synchronized Streams}\n"
        "\\begin{document}\n"
        "We present StreamGateNet, which fuses two synchronized feature\n"
        "streams through a scalar gate adapted online from prediction error.\n"
        "The gate is clamped to the unit interval and updated proximally.\n"
        "\\end{document}\n",
    )
    write(base / "paper" / "references.json", json.dumps(titles, indent=2))

    script = base / "script"
    script_file(
        script,
        "bench-step1",
        [
            text_json(
                {
                    "citation_map": [
                        {
                            "reference": title,
                            "count": 3 if i < 5 else 1,
                            "sections": ["method" if i < 5 else "related work"],
                            "quotes": ["builds on the gating rule"],
                        }
                        for i, title in enumerate(titles[:15])
                    ]
                }
            )
        ],
    )
    script_file(
        script,
        "bench-step2",
        [
            text_json(
                {
                    "context_analysis": [
                        {
                            "reference": titles[0],
                            "indicators": ["we adopt", "following"],
                            "depth": "detailed",
                            "is_method": True,
                            "quotes": ["we adopt the proximal update"],
                        },
                        {
                            "reference": titles[1],
                            "indicators": ["similar to"],
                            "depth": "mentioned",
                            "is_method": False,
                            "quotes": ["similar to the fixed-mix baseline"],
                        },
                    ]
                }
            )
        ],
    )
    script_file(
        script,
        "bench-step3",
        [
            text_json(
                {
                    "evidence": [
                        {
                            "reference": titles[0],
                            "borrowed": ["proximal gate update"],
                            "changes": ["clamped to the unit interval"],
                            "evidence": ["method section, update rule"],
                            "type": "foundation",
                        }
                    ]
                }
            )
        ],
    )
    script_file(
        script,
        "bench-step4",
        [
            text_json(
                {
                    "scores": [
                        {
                            "reference": titles[0],
                            "total": 85.0,
                            "breakdown": {
                                "frequency": 90,
                                "location": 85,
                                "depth": 85,
                                "influence": 80,
                            },
                        },
                        {
                            "reference": titles[1],
                            "total": 40.0,
                            "breakdown": {
                                "frequency": 40,
                                "location": 40,
                                "depth": 40,
                                "influence": 40,
                            },
                        },
                    ]
                }
            )
        ],
    )
    script_file(
        script,
        "bench-step5",
        [
            text_json(
                {
                    "top_papers": [
                        {
                            "reference": title,
                            "rank": rank,
                            "type": "foundation" if rank == 1 else "component",
                            "justification": "method depends on it",
                            "usage": "reused with small changes",
                        }
                        for rank, title in enumerate(titles[:15], start=1)
                    ]
                }
            )
        ],
    )
    script_file(script, "anonymize-extract", [text("StreamGateNet")])
    script_file(
        script,
        "bench-instruction",
        [
            text(
                "\n".join(
                    [
                        "1. The model fuses two synchronized input streams.",
                        "2. A learned scalar gate mixes the streams at each step.",
                        "3. The gate adapts online from the fused prediction error.",
                        "4. Inputs are equal-length float sequences; the output "
                        "matches their shape.",
                        "5. Encode both streams, mix with the gate, then decode "
                        "the fused representation.",
                        "6. Gate learning rate and clamping bounds dominate "
                        "final quality.",
                    ]
                )
            )
        ],
    )


def build_pairs(root: Path) -> None:
    """Tiny accepted/rejected corpus for reviewer validation.

    Two topics with disjoint vocabulary so similarity matching pairs each
    accepted document with the rejected document on the same topic.
    """
    base = root / "pairs"
    write(
        base / "accepted" / "gating.txt",
        "Gated fusion of recurrent streams. We combine hidden states through "
        "a learned gate and show the fused representation improves sequence "
        "classification under distribution shift. Ablations isolate the gate.",
    )
    write(
        base / "accepted" / "calibration.txt",
        "Confidence calibration for classifiers. Temperature scaling on a "
        "held-out split reduces expected calibration error while preserving "
        "accuracy, with reliability diagrams across ten datasets.",
    )
    write(
        base / "rejected" / "gating.txt",
        "Fusing recurrent streams with a gate. Hidden states are merged by a "
        "gating unit; sequence classification results are reported without "
        "ablations of the gating unit itself.",
    )
    write(
        base / "rejected" / "calibration.txt",
        "Calibrating classifier confidence. We apply temperature scaling and "
        "report expected calibration error on two datasets, without held-out "
        "tuning or reliability diagrams.",
    )


# --- validation ------------------------------------------------------------


def _check_level(base: Path) -> None:
    task = json.loads((base / "task.json").read_text(encoding="utf-8"))
    candidates = json.loads((base / "candidates.json").read_text(encoding="utf-8"))
    assert len(candidates) >= 5, base
    for ref in task["references"]:
        source = base / "sources" / ref["external_id"] / "paper.tex"
        assert source.is_file(), source

    script = base / "script"
    for path in sorted(script.glob("*.json")):
        data = json.loads(path.read_text(encoding="utf-8"))
        assert isinstance(data.get("responses"), list) and data["responses"], path

    spans = json.loads((script / "paper-analyst.json").read_text(encoding="utf-8"))
    for response in spans["responses"]:
        for span in json.loads(response["text"])["spans"]:
            source_id, filename = span["file"].split("/", 1)
            source = base / "sources" / source_id / filename
            assert source.is_file(), span
            count = len(source.read_text(encoding="utf-8").splitlines())
            assert 1 <= span["line_start"] <= span["line_end"] <= count, span

    anchors = json.loads((script / "code-analyst.json").read_text(encoding="utf-8"))
    for response in anchors["responses"]:
        for anchor in json.loads(response["text"])["anchors"]:
            target = base / "repos" / anchor["repo"] / anchor["file"]
            assert target.is_file(), anchor


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--root",
        type=Path,
        default=REPO_ROOT / "fixtures",
        help="output directory (default: fixtures/ in the repository root)",
    )
    args = parser.parse_args(argv)

    for bundle in ("level1", "level2", "anonymization", "eval", "grader", "pairs"):
        shutil.rmtree(args.root / bundle, ignore_errors=True)
    build_level1(args.root)
    build_level2(args.root)
    build_anonymization(args.root)
    build_eval(args.root)
    build_grader(args.root)
    build_pairs(args.root)
    _check_level(args.root / "level1")
    _check_level(args.root / "level2")
    cases = json.loads(
        (args.root / "anonymization" / "cases.json").read_text(encoding="utf-8")
    )
    assert len(cases) == 20, len(cases)
    print(f"fixtures written under {args.root}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
