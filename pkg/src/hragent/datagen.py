"""Synthetic scenario generation: batched prompts, output parsing,
cleaning filters and dataset splits.

The generation prompt and the validation prompt keep their original
wording verbatim (typos included) so generated corpora stay comparable;
pass corrected=True for the cleaned-up spelling.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

DEFAULT_DOMAINS = (
    "requesting leaves",
    "inquiring about benefits",
    "retrieving payroll details",
    "applying for internal jobs",
    "navigating the onboarding process",
    "scheduling performance reviews",
    "requesting training",
    "reporting workplace issues",
    "accessing policies",
    "participating in surveys",
    "engaging with HR initiatives",
    "benefit enrollment",
    "goal setting",
    "safety guidelines",
    "compliance training",
)

DEFAULT_SAMPLING = {"max_tokens": 4096, "temperature": 1.0, "top_k": 1, "top_p": 0.6}


@dataclass(frozen=True)
class GenSpec:
    domains: tuple[str, ...] = DEFAULT_DOMAINS
    number1: int = 4  # questions per scenario
    number2: int = 2  # correct choices per scenario
    scenarios_per_call: int = 20
    sampling: dict = field(default_factory=lambda: dict(DEFAULT_SAMPLING))

    def __post_init__(self):
        if not 1 <= self.number2 <= self.number1 <= 26:
            raise ValueError("need 1 <= number2 <= number1 <= 26")
        if not self.domains:
            raise ValueError("empty domain list")


@dataclass(frozen=True)
class Scenario:
    utterance: str
    questions: tuple[tuple[str, str], ...]  # (label, text)
    output1: frozenset[str]
    output2: tuple[str, ...]


class RejectReason(str, Enum):
    not_extractive = "not_extractive"
    count_mismatch = "count_mismatch"
    yes_no_answer = "yes_no_answer"
    duplicate_question = "duplicate_question"
    validator_rejected = "validator_rejected"


@dataclass(frozen=True)
class FilterVerdict:
    kept: bool
    reasons: tuple[RejectReason, ...] = ()


# --- prompt construction -------------------------------------------------------

FEWSHOT_EXAMPLES = (
    {
        "utterance": "I am taking next Monday off as a vacation day.",
        "questions": (
            ("a", "When is the requested time off?"),
            ("b", "What action does the user want the recipient to take?"),
            ("c", "What process has the user completed?"),
            ("d", "What type of time off is being requested?"),
        ),
        "output1": "a, d",
        "output2": "next Monday, vacation day",
    },
    {
        "utterance": "I would like to schedule a doctor's appointment for next "
                     "Tuesday at 2pm to get a physical exam.",
        "questions": (
            ("a", "What type of appointment does the user want to schedule?"),
            ("b", "When does the user want to schedule the appointment?"),
            ("c", "What time does the user want the appointment?"),
            ("d", "What is the purpose of the appointment?"),
        ),
        "output1": "a, b, c, d",
        "output2": "schedule, next Tuesday, 2pm, physical exam",
    },
)

_PROMPT_TEMPLATE = """Human: You are asked to come up with a set of {n} diverse scenarios. The input is a user response and a list of questions that the user response could answer about the user. The instruction is to select the right set of questions that could be answered by user input and give an answer for each selected question.

Requirements:
1. Try not to repeat the verb or cases for each input to maximize diversity.
2. The language used for the user response should be diverse.
3. The type of input should be diverse. The user response should include diverse types of tasks like {domain}.
4. You should generate an appropriate List of Questions for the input. It should involve realistic data and should not contain simple placeholders.
5. The list of questions should start with a choice name such as a, b, c, ...
6. Output1 should be the choice that could be answered by the user response.
7. Output1 should be all correct choice names such as a, b, c.
8. The list of questions should contain {number1} questions.
9. Output1 contains {number2} choices.
10. Every question has an equal chance to be the correct answer. The answer should not always contain 'a'.
11. Output2 should be the correct answer for each question.
12. The answer from Output2 is extracted from the User Response.
13. The answer of Output2 cannot be 'yes' or 'no'.
14. The scenario is to help corporate extract information from their employees.
15. Try not to ask similar questions to maximize diversity.
16. Output2 does not contain choice symbols like a, b, c.
17. The answer from Output2 can only be extracted from the User Response.
18. Output2 uses a comma to separate the answers.
19. Two empty lines between each case.

Example:

User Response: {ex_utterance}

List of Questions:
{ex_questions}
Output1: {ex_output1}
Output2: {ex_output2}
"""


def build_prompt(spec: GenSpec, rng_seed: int) -> str:
    """Instantiate the 19-requirement generation template.

    Domain and the few-shot example are drawn from the seeded RNG, so
    the same seed yields a byte-identical prompt.
    """
    rng = random.Random(rng_seed)
    domain = rng.choice(spec.domains)
    example = rng.choice(FEWSHOT_EXAMPLES)
    questions = "\n".join(f"{label}. {text}" for label, text in example["questions"])
    return _PROMPT_TEMPLATE.format(
        n=spec.scenarios_per_call,
        domain=domain,
        number1=spec.number1,
        number2=spec.number2,
        ex_utterance=example["utterance"],
        ex_questions=questions,
        ex_output1=example["output1"],
        ex_output2=example["output2"],
    )


# --- output parsing ------------------------------------------------------------

_QUESTION_LINE = re.compile(r"^\s*([a-z])[.)]\s*(.+?)\s*$")
_NUMBERED_LINE = re.compile(r"^\s*\d+[.)]\s")


def parse_scenarios(model_output: str) -> tuple[list[Scenario], list[str]]:
    """Split model output into scenario blocks and parse each one.

    Blocks are separated by blank lines; malformed blocks are reported as
    diagnostics instead of failing the whole parse.
    """
    scenarios: list[Scenario] = []
    diagnostics: list[str] = []
    # block boundaries: a blank-line gap is the nominal separator, but a
    # new "User Response:" header always opens a new case regardless of
    # how many empty lines the model actually emitted
    starts = [m.start() for m in
              re.finditer(r"(?im)^\s*user\s+response\s*:", model_output)]
    blocks = [model_output[s:e] for s, e in
              zip(starts, starts[1:] + [len(model_output)])]
    if not blocks:
        diagnostics.append("zero scenarios parsed")
        return scenarios, diagnostics
    for i, block in enumerate(blocks):
        result = _parse_block(block)
        if isinstance(result, str):
            diagnostics.append(f"block {i}: {result}")
        else:
            scenarios.append(result)
    if not scenarios:
        diagnostics.append("zero scenarios parsed")
    return scenarios, diagnostics


def _parse_block(block: str) -> Scenario | str:
    utterance = None
    questions: list[tuple[str, str]] = []
    output1: Optional[frozenset[str]] = None
    output2: Optional[tuple[str, ...]] = None
    in_questions = False
    for line in block.splitlines():
        stripped = line.strip()
        low = stripped.lower()
        if low.startswith("user response:"):
            utterance = stripped.split(":", 1)[1].strip().strip('"')
            in_questions = False
        elif low.startswith("list of questions"):
            in_questions = True
        elif low.startswith("output1:") or low.startswith("output 1:"):
            in_questions = False
            labels = [s.strip().lower() for s in
                      stripped.split(":", 1)[1].split(",") if s.strip()]
            if not labels or not all(len(l) == 1 and l.isalpha() for l in labels):
                return "instruction violation: Output1 is not a list of choice letters"
            output1 = frozenset(labels)
        elif low.startswith("output2:") or low.startswith("output 2:"):
            answers = tuple(s.strip() for s in
                            stripped.split(":", 1)[1].split(",") if s.strip())
            output2 = answers
        elif in_questions and stripped:
            m = _QUESTION_LINE.match(stripped)
            if m:
                questions.append((m.group(1), m.group(2)))
            elif _NUMBERED_LINE.match(stripped):
                return "instruction violation: numbered questions instead of letters"
    if utterance is None:
        return "missing User Response"
    if not questions:
        return "missing List of Questions"
    if output1 is None:
        return "missing Output1"
    if output2 is None or not output2:
        return "missing Output2"
    labels = [q[0] for q in questions]
    if labels != [chr(ord("a") + i) for i in range(len(labels))]:
        return "instruction violation: labels are not consecutive letters from 'a'"
    return Scenario(
        utterance=utterance, questions=tuple(questions),
        output1=output1, output2=output2,
    )


# --- cleaning filters -----------------------------------------------------------

_TOKEN = re.compile(r"[a-z0-9]+")


def _jaccard(a: str, b: str) -> float:
    ta, tb = set(_TOKEN.findall(a.lower())), set(_TOKEN.findall(b.lower()))
    if not ta and not tb:
        return 1.0
    return len(ta & tb) / len(ta | tb)


def _norm_ws(text: str) -> str:
    return " ".join(text.lower().split())


def filter_scenario(s: Scenario, dedup_threshold: float = 0.8) -> FilterVerdict:
    """Keep a scenario only when every answer is extractive, counts line
    up, no answer is yes/no and no two questions are near-duplicates."""
    reasons: list[RejectReason] = []
    utterance = _norm_ws(s.utterance)
    if any(_norm_ws(a) not in utterance for a in s.output2):
        reasons.append(RejectReason.not_extractive)
    if len(s.output1) != len(s.output2):
        reasons.append(RejectReason.count_mismatch)
    if any(_norm_ws(a) in ("yes", "no") for a in s.output2):
        reasons.append(RejectReason.yes_no_answer)
    qs = [q for _, q in s.questions]
    for i in range(len(qs)):
        for j in range(i + 1, len(qs)):
            if _jaccard(qs[i], qs[j]) > dedup_threshold:
                reasons.append(RejectReason.duplicate_question)
                break
        else:
            continue
        break
    return FilterVerdict(kept=not reasons, reasons=tuple(reasons))


# --- validation prompts ----------------------------------------------------------

_VALIDATION_TEMPLATE = (
    "Question: {question}  Text: {text}   Answer: {answer} "
    "Does tha Answer answer the Question based on Text? "
    "The answer could be yes or no"
)
_VALIDATION_TEMPLATE_CORRECTED = (
    "Question: {question}  Text: {text}   Answer: {answer} "
    "Does the Answer answer the Question based on Text? "
    "The answer could be yes or no"
)


def build_validation_prompt(question: str, text: str, answer: str,
                            corrected: bool = False) -> str:
    if not question or not text or not answer:
        raise ValueError("question, text and answer must be non-empty")
    template = _VALIDATION_TEMPLATE_CORRECTED if corrected else _VALIDATION_TEMPLATE
    return template.format(question=question, text=text, answer=answer)


def build_batch_validation_prompt(
    triples: Sequence[tuple[str, str, str]], corrected: bool = False
) -> str:
    """Group up to 50 (question, text, answer) triples into one prompt and
    ask for the line numbers whose answer is 'no'."""
    if not triples:
        raise ValueError("empty batch")
    if len(triples) > 50:
        raise ValueError("batches are capped at 50 triples")
    lines = []
    for i, (q, t, a) in enumerate(triples, 1):
        if not q or not t or not a:
            raise ValueError(f"triple {i}: question, text and answer must be non-empty")
        lines.append(f"{i}. Question: {q}  Text: {t}   Answer: {a}")
    verb = "Does the" if corrected else "Does tha"
    return (
        "\n".join(lines)
        + f"\nFor each line above: {verb} Answer answer the Question based on Text? "
        "Reply with the line numbers where the answer is no."
    )


# --- dataset splits ---------------------------------------------------------------


def split_dataset(
    scenarios: Sequence[Scenario],
    verdicts: Sequence[FilterVerdict],
    ratios: tuple[float, float] = (0.9, 0.1),
    seed: int = 0,
) -> dict[str, list[Scenario]]:
    """raw = everything parsed; clean/test partition the kept scenarios
    with a seeded shuffle. Returns {"raw", "clean", "test"}."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    if len(scenarios) != len(verdicts):
        raise ValueError("scenarios and verdicts must align")
    kept = [s for s, v in zip(scenarios, verdicts) if v.kept]
    rng = random.Random(seed)
    shuffled = list(kept)
    rng.shuffle(shuffled)
    n_clean = round(ratios[0] * len(shuffled))
    return {
        "raw": list(scenarios),
        "clean": shuffled[:n_clean],
        "test": shuffled[n_clean:],
    }


# --- JSONL dataset files -----------------------------------------------------------


def scenario_to_json(s: Scenario, verdict: Optional[FilterVerdict] = None) -> str:
    d = {
        "utterance": s.utterance,
        "questions": [{"label": l, "text": t} for l, t in s.questions],
        "output1": sorted(s.output1),
        "output2": list(s.output2),
    }
    if verdict is not None:
        d["verdict"] = {
            "kept": verdict.kept,
            "reasons": [r.value for r in verdict.reasons],
        }
    return json.dumps(d)


def scenario_from_json(line: str) -> Scenario:
    d = json.loads(line)
    return Scenario(
        utterance=d["utterance"],
        questions=tuple((q["label"], q["text"]) for q in d["questions"]),
        output1=frozenset(d["output1"]),
        output2=tuple(d["output2"]),
    )
