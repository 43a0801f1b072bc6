"""Model backends: entity selection, extraction, sentiment, auto-completion.

Each capability has a deterministic local baseline (no model dependency,
so the engine runs fully offline) and a remote HTTP client speaking the
wire protocol described in the README. Baselines are pure functions.
"""

from __future__ import annotations

import re
import string
import time
from dataclasses import dataclass, field
from typing import Optional

import httpx

from .schema_model import SlotDef, ValueKind

# --- request / result types -------------------------------------------------


@dataclass(frozen=True)
class SelectionCandidate:
    choice_label: str  # single letter a..z
    slot_id: str
    question: str


@dataclass(frozen=True)
class SelectionRequest:
    utterance: str
    candidates: tuple[SelectionCandidate, ...]

    def __post_init__(self):
        if not 1 <= len(self.candidates) <= 26:
            raise ValueError("need 1..26 candidates")
        labels = [c.choice_label for c in self.candidates]
        expected = list(string.ascii_lowercase[: len(labels)])
        if labels != expected:
            raise ValueError(f"labels must be consecutive letters from 'a', got {labels}")

    @property
    def labels(self) -> set[str]:
        return {c.choice_label for c in self.candidates}


@dataclass(frozen=True)
class SelectionResult:
    selected: frozenset[str]
    latency_ms: float = 0.0


@dataclass(frozen=True)
class ExtractionRequest:
    question: str
    utterance: str


@dataclass(frozen=True)
class ExtractionSpan:
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class ExtractionResult:
    span: Optional[ExtractionSpan]
    latency_ms: float = 0.0


@dataclass(frozen=True)
class SentimentScore:
    negative_prob: float


# --- tokenization and cue tables --------------------------------------------

STOPWORDS = frozenset(
    """a an the i am is are was were be being been do does did done what when
    where who whom how why which you your yours my me mine we us our it its
    this that these those to for of at in on by as and or but not no so if
    then than would could should can will shall may might must like get got
    please want wants wanted need needs user s about with from have has had
    there here they them their he she his her being""".split()
)

WEEKDAYS = "monday|tuesday|wednesday|thursday|friday|saturday|sunday"
MONTHS = (
    "january|february|march|april|may|june|july|august|september|october|"
    "november|december"
)

DATE_PATTERN = re.compile(
    rf"(?:(?:next|this|last)\s+(?:{WEEKDAYS})(?:\s+the\s+\d{{1,2}}(?:st|nd|rd|th)?)?"
    rf"|(?:{WEEKDAYS})(?:\s+the\s+\d{{1,2}}(?:st|nd|rd|th)?)?"
    rf"|(?:{MONTHS})\s+\d{{1,2}}(?:st|nd|rd|th)?(?:,?\s*\d{{4}})?"
    rf"|\d{{4}}-\d{{2}}-\d{{2}}"
    rf"|\d{{1,2}}/\d{{1,2}}/\d{{2,4}}"
    rf"|today|tomorrow|yesterday"
    rf"|in\s+\d+\s+days?)",
    re.IGNORECASE,
)

TIME_PATTERN = re.compile(
    r"(?:\d{1,2}:\d{2}\s*(?:am|pm)?|\d{1,2}\s*(?:am|pm)|noon|midnight)",
    re.IGNORECASE,
)

MONEY_PATTERN = re.compile(
    r"(?:\$\s?\d+(?:,\d{3})*(?:\.\d{1,2})?|\d+(?:\.\d{1,2})?\s+dollars?)",
    re.IGNORECASE,
)

_KIND_PATTERNS = {
    ValueKind.date: DATE_PATTERN,
    ValueKind.time: TIME_PATTERN,
    ValueKind.money: MONEY_PATTERN,
}

_TOKEN = re.compile(r"[a-z0-9]+")

_YESNO_LEAD = re.compile(r"^(?:does|do|did|is|are|was|were|can|could|will|has|have)\b")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def content_tokens(text: str) -> set[str]:
    return {t for t in tokenize(text) if t not in STOPWORDS}


def question_kind(question: str) -> ValueKind:
    """Infer the expected value kind from the slot question's wording."""
    q = question.lower().strip()
    if q.startswith("when") or "what date" in q or "which date" in q or "what day" in q:
        return ValueKind.date
    if "what time" in q or "which time" in q:
        return ValueKind.time
    if "how much" in q or "what amount" in q or "cost" in q:
        return ValueKind.money
    if q.startswith("where"):
        return ValueKind.location
    return ValueKind.free_text


# --- baselines --------------------------------------------------------------


def select_baseline(req: SelectionRequest, threshold: int = 1) -> SelectionResult:
    """Token-overlap selector with value-kind cues.

    A candidate scores one point per content token shared with the
    utterance, plus one when its question asks for a pattern-backed kind
    (date/time/money) and the utterance actually contains such a pattern.
    Among candidates of the same pattern-backed kind only the best scorer
    survives (one date phrase answers one date question). Yes/no-style
    questions are never selected: their answers cannot be extractive.
    """
    t0 = time.perf_counter()
    utt_tokens = content_tokens(req.utterance)
    scored: list[tuple[str, ValueKind, int]] = []
    for cand in req.candidates:
        if _YESNO_LEAD.match(cand.question.lower().strip()):
            continue
        kind = question_kind(cand.question)
        score = len(content_tokens(cand.question) & utt_tokens)
        pattern = _KIND_PATTERNS.get(kind)
        if pattern is not None and pattern.search(req.utterance):
            score += 1
        if score >= threshold:
            scored.append((cand.choice_label, kind, score))
    # one winner per pattern-backed kind, first on ties
    best_by_kind: dict[ValueKind, tuple[str, int]] = {}
    selected = set()
    for label, kind, score in scored:
        if kind in _KIND_PATTERNS:
            prev = best_by_kind.get(kind)
            if prev is None or score > prev[1]:
                best_by_kind[kind] = (label, score)
        else:
            selected.add(label)
    selected.update(label for label, _ in best_by_kind.values())
    latency = (time.perf_counter() - t0) * 1000
    return SelectionResult(selected=frozenset(selected), latency_ms=latency)


def extract_baseline(req: ExtractionRequest) -> ExtractionResult:
    """Pattern/alignment extractor.

    Date, time and money questions are answered by the first matching
    regular pattern in the utterance. Free-text questions get the longest
    contiguous run of content tokens that do not occur in the question
    and are not part of a date/time pattern; absent when the question and
    utterance share no content at all.
    """
    t0 = time.perf_counter()
    span = _extract_span(req.question, req.utterance)
    latency = (time.perf_counter() - t0) * 1000
    return ExtractionResult(span=span, latency_ms=latency)


def _extract_span(question: str, utterance: str) -> Optional[ExtractionSpan]:
    kind = question_kind(question)
    pattern = _KIND_PATTERNS.get(kind)
    if pattern is not None:
        m = pattern.search(utterance)
        if m is None:
            return None
        return ExtractionSpan(m.group(0), m.start(), m.end())

    q_tokens = content_tokens(question)
    utt_lower = utterance.lower()
    if not (q_tokens & content_tokens(utterance)):
        return None

    # char ranges claimed by date/time patterns are off-limits for free text
    claimed: list[tuple[int, int]] = []
    for pat in (DATE_PATTERN, TIME_PATTERN, MONEY_PATTERN):
        claimed.extend(m.span() for m in pat.finditer(utterance))

    runs: list[list[tuple[int, int]]] = []
    current: list[tuple[int, int]] = []
    for m in _TOKEN.finditer(utt_lower):
        tok = m.group(0)
        excluded = (
            tok in STOPWORDS
            or tok in q_tokens
            or any(s <= m.start() and m.end() <= e for s, e in claimed)
        )
        if excluded:
            if current:
                runs.append(current)
                current = []
        else:
            current.append(m.span())
    if current:
        runs.append(current)
    if not runs:
        return None
    best = max(runs, key=len)
    start, end = best[0][0], best[-1][1]
    return ExtractionSpan(utterance[start:end], start, end)


NEGATIVE_LEXICON = frozenset(
    """bad terrible awful horrible useless broken annoying annoyed angry
    frustrating frustrated stupid hate hated worst wrong slow confusing
    unacceptable ridiculous waste pointless disappointed disappointing
    unhappy upset furious rude garbage nonsense fail failed failing""".split()
)

POSITIVE_LEXICON = frozenset(
    """good great thanks thank helpful excellent awesome perfect nice love
    loved appreciate appreciated wonderful fantastic happy pleased glad
    amazing best fine cool super""".split()
)


def sentiment_baseline(text: str) -> SentimentScore:
    """Signed-lexicon sentiment: neg / (neg + pos + 1), clamped to [0, 1]."""
    tokens = tokenize(text)
    neg = sum(1 for t in tokens if t in NEGATIVE_LEXICON)
    pos = sum(1 for t in tokens if t in POSITIVE_LEXICON)
    prob = neg / (neg + pos + 1)
    return SentimentScore(negative_prob=min(max(prob, 0.0), 1.0))


# --- remote wire protocol ---------------------------------------------------


class RemoteBackendError(RuntimeError):
    pass


class RemoteTimeout(RemoteBackendError):
    pass


class MalformedResponse(RemoteBackendError):
    pass


class NonExtractiveResponse(RemoteBackendError):
    pass


class EmptyCompletion(RemoteBackendError):
    pass


# Remote LLM prompt templates; the first phrasing is the default, the
# full banks are kept so callers can sweep them.
EXTRACTION_PROMPTS = (
    "Could you retrieve the answer to the Question from the Text?",
    "Can you pull out the response to the Question within the Text?",
    "Would you mind extracting the reply to the Question from the Text?",
    "I'd like you to get the answer to the Question from the Text.",
    "Could you find the solution to the Question in the Text?",
    "Please identify the answer to the Question in the Text.",
    "Can you locate the response to the Question from the Text?",
    "I'd appreciate if you could extract the answer to the Question from the Text.",
    "Would it be possible to get the reply to the Question from the Text?",
    "Please search for the answer to the Question within the Text.",
)

SELECTION_PROMPTS = (
    "Could you identify the appropriate question that Text can answer?",
    "Please find the correct question for which the Text provides an answer.",
    "Can you determine the suitable question that can be resolved using the Text?",
    "I'd like you to pinpoint the right question that the Text can address.",
    "Please locate the question that aligns with the Text's answer.",
    "Could you discern the fitting question that the Text can respond to?",
    "I'd appreciate if you could determine the exact question that can be answered using the Text.",
    "Can you select the question that the Text can satisfactorily answer?",
    "Would it be possible to identify the question that matches the Text's answer?",
    "Please deduce the right question that aligns with the Text's response.",
)

EXTRACT_ANSWER_RULE = (
    "The answer is very short and always less than 2 words. "
    "Put the answer in <answer></answer>  XML tags."
)
SELECT_ANSWER_RULE = (
    "The answer always contains 2 to 5 choices. "
    "Put the answer in <answer></answer>  XML tags."
)

DEFAULT_SAMPLING = {"max_tokens": 10, "temperature": 0.2, "stop": "</answer>"}

_ANSWER_TAG = re.compile(r"<answer>(.*?)(?:</answer>|$)", re.DOTALL)


def parse_tagged_answer(text: str) -> str:
    """Pull the answer out of the <answer>...</answer> region."""
    m = _ANSWER_TAG.search(text)
    if m is None:
        raise MalformedResponse(f"no <answer> region in: {text!r}")
    return m.group(1).strip()


def build_extraction_prompt(question: str, utterance: str, template_index: int = 0) -> str:
    return (
        f"{EXTRACTION_PROMPTS[template_index]}\n"
        f"Question: {question}\nText: {utterance}\n{EXTRACT_ANSWER_RULE}"
    )


def build_selection_prompt(req: SelectionRequest, template_index: int = 0) -> str:
    questions = "\n".join(
        f"{c.choice_label}. {c.question}" for c in req.candidates
    )
    return (
        f"{SELECTION_PROMPTS[template_index]}\n"
        f"Text: {req.utterance}\n{questions}\n{SELECT_ANSWER_RULE}"
    )


class RemoteBackend:
    """HTTP client for the remote backend wire protocol.

    Keeps a pooled connection; per-call timeout (default 5000 ms) is the
    only blocking bound. A conformance stub lives in hragent.stub_server.
    """

    def __init__(self, base_url: str, timeout_ms: float = 5000.0,
                 client: Optional[httpx.Client] = None):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_ms / 1000.0
        self._client = client or httpx.Client()

    def _post(self, path: str, payload: dict) -> dict:
        t0 = time.perf_counter()
        try:
            resp = self._client.post(
                f"{self.base_url}{path}", json=payload, timeout=self.timeout_s
            )
        except httpx.TimeoutException as e:
            raise RemoteTimeout(f"{path} exceeded {self.timeout_s * 1000:.0f} ms") from e
        if resp.status_code != 200:
            raise MalformedResponse(f"{path} returned HTTP {resp.status_code}")
        try:
            data = resp.json()
        except ValueError as e:
            raise MalformedResponse(f"{path} returned non-JSON body") from e
        data.setdefault("elapsed_ms", (time.perf_counter() - t0) * 1000)
        return data

    def select(self, req: SelectionRequest) -> SelectionResult:
        data = self._post(
            "/v1/select",
            {
                "utterance": req.utterance,
                "candidates": [
                    {"label": c.choice_label, "question": c.question}
                    for c in req.candidates
                ],
            },
        )
        raw = data.get("selected")
        if not isinstance(raw, list):
            raise MalformedResponse(f"bad 'selected' field: {raw!r}")
        # adversarial responses may name labels we never offered; drop them
        selected = frozenset(str(x).strip().lower() for x in raw) & req.labels
        return SelectionResult(selected=selected, latency_ms=float(data["elapsed_ms"]))

    def extract(self, req: ExtractionRequest) -> ExtractionResult:
        data = self._post(
            "/v1/extract", {"question": req.question, "utterance": req.utterance}
        )
        answer = data.get("answer")
        if answer is None:
            return ExtractionResult(span=None, latency_ms=float(data["elapsed_ms"]))
        answer = str(answer).strip()
        if not answer:
            return ExtractionResult(span=None, latency_ms=float(data["elapsed_ms"]))
        # re-anchor by substring search, first occurrence wins
        start = req.utterance.find(answer)
        if start < 0:
            start = req.utterance.lower().find(answer.lower())
        if start < 0:
            raise NonExtractiveResponse(
                f"remote answer {answer!r} is not a substring of the utterance"
            )
        end = start + len(answer)
        span = ExtractionSpan(req.utterance[start:end], start, end)
        return ExtractionResult(span=span, latency_ms=float(data["elapsed_ms"]))

    def complete(self, slot: SlotDef, raw: str, reference_date: str) -> str:
        data = self._post(
            "/v1/complete",
            {"slot_kind": slot.value_kind.value, "raw": raw,
             "reference_date": reference_date},
        )
        value = str(data.get("value") or "").strip()
        if not value:
            raise EmptyCompletion(f"remote completion for {raw!r} was empty")
        return value

    def generate(self, prompt: str, sampling: Optional[dict] = None) -> str:
        data = self._post(
            "/v1/generate",
            {"prompt": prompt, "sampling": sampling or DEFAULT_SAMPLING},
        )
        text = data.get("text")
        if not isinstance(text, str):
            raise MalformedResponse(f"bad 'text' field: {text!r}")
        return text


def autocomplete_remote(slot: SlotDef, raw: str, reference_date: str,
                        backend: Optional[RemoteBackend] = None) -> str:
    """Canonicalize a raw value, remotely when an endpoint is configured.

    Without a backend (the confidentiality default) the local normalizer
    is the fallback; unresolved values come back raw.
    """
    if backend is not None:
        return backend.complete(slot, raw, reference_date)
    from . import normalize

    ctx = normalize.ReferenceContext.from_iso(reference_date)
    return normalize.normalize_value(raw, slot.value_kind, ctx).canonical
