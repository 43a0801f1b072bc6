"""Local canonicalization of fuzzy extracted values.

Resolves relative dates, clock times and money amounts against a session
reference instant, entirely offline. Anything outside the small grammar
comes back unresolved with the raw text preserved byte-for-byte.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from enum import Enum

from .schema_model import ValueKind

WEEKDAY_INDEX = {
    "monday": 0, "tuesday": 1, "wednesday": 2, "thursday": 3,
    "friday": 4, "saturday": 5, "sunday": 6,
}

MONTH_INDEX = {
    "january": 1, "february": 2, "march": 3, "april": 4, "may": 5,
    "june": 6, "july": 7, "august": 8, "september": 9, "october": 10,
    "november": 11, "december": 12,
}


class NormKind(str, Enum):
    date = "date"
    date_range = "date_range"
    time = "time"
    money = "money"
    passthrough = "passthrough"


class Confidence(str, Enum):
    exact = "exact"
    inferred = "inferred"
    unresolved = "unresolved"


@dataclass(frozen=True)
class ReferenceContext:
    reference_datetime: datetime
    locale: str = "en_US"  # week starts Monday

    def __post_init__(self):
        if self.reference_datetime.tzinfo is None:
            raise ValueError("reference_datetime must be timezone-aware")

    @classmethod
    def from_iso(cls, text: str, locale: str = "en_US") -> "ReferenceContext":
        dt = datetime.fromisoformat(text)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return cls(reference_datetime=dt, locale=locale)

    @property
    def reference_date(self) -> date:
        return self.reference_datetime.date()


@dataclass(frozen=True)
class NormalizedValue:
    kind: NormKind
    canonical: str
    confidence: Confidence


def _unresolved(raw: str) -> NormalizedValue:
    return NormalizedValue(NormKind.passthrough, raw, Confidence.unresolved)


def _date_value(d: date, confidence: Confidence = Confidence.exact) -> NormalizedValue:
    return NormalizedValue(NormKind.date, d.isoformat(), confidence)


_ISO_DATE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})$")
_SLASH_DATE = re.compile(r"^(\d{1,2})/(\d{1,2})/(\d{2,4})$")
_IN_N_DAYS = re.compile(r"^in\s+(\d+)\s+days?$")
_REL_WEEKDAY = re.compile(
    r"^(next|this)\s+([a-z]+)(?:\s+the\s+(\d{1,2})(?:st|nd|rd|th)?)?$"
)
_WEEKDAY_NTH = re.compile(r"^([a-z]+)\s+the\s+(\d{1,2})(?:st|nd|rd|th)?$")
_MONTH_DAY = re.compile(
    r"^([a-z]+)\s+(\d{1,2})(?:st|nd|rd|th)?(?:,?\s*(\d{4}))?$"
)


def next_weekday(ref: date, target: int) -> date:
    """First date with the given weekday strictly after ref (1..7 days out)."""
    delta = (target - ref.weekday() - 1) % 7 + 1
    return ref + timedelta(days=delta)


def _weekday_with_dom(start: date, target_weekday: int, dom: int) -> date | None:
    # forward scan; bounded so impossible combinations stay unresolved
    for offset in range(0, 366):
        d = start + timedelta(days=offset)
        if d.weekday() == target_weekday and d.day == dom:
            return d
    return None


def normalize_date(raw: str, ctx: ReferenceContext) -> NormalizedValue:
    text = raw.strip().lower()
    ref = ctx.reference_date
    if not text:
        return _unresolved(raw)

    if m := _ISO_DATE.match(text):
        try:
            return _date_value(date(int(m[1]), int(m[2]), int(m[3])))
        except ValueError:
            return _unresolved(raw)

    if text == "today":
        return _date_value(ref)
    if text == "tomorrow":
        return _date_value(ref + timedelta(days=1))
    if text == "yesterday":
        return _date_value(ref - timedelta(days=1))

    if m := _IN_N_DAYS.match(text):
        return _date_value(ref + timedelta(days=int(m[1])))

    if m := _REL_WEEKDAY.match(text):
        qualifier, name, dom = m[1], m[2], m[3]
        if name not in WEEKDAY_INDEX:
            return _unresolved(raw)
        d = next_weekday(ref, WEEKDAY_INDEX[name])
        if dom is not None and d.day != int(dom):
            found = _weekday_with_dom(ref + timedelta(days=1),
                                      WEEKDAY_INDEX[name], int(dom))
            if found is None:
                return _unresolved(raw)
            d = found
        # "this friday" is ambiguous; resolve like "next" but flag it so
        # the confirmation step highlights the inference
        conf = Confidence.exact if qualifier == "next" else Confidence.inferred
        return _date_value(d, conf)

    if m := _WEEKDAY_NTH.match(text):
        name, dom = m[1], int(m[2])
        if name not in WEEKDAY_INDEX:
            return _unresolved(raw)
        found = _weekday_with_dom(ref, WEEKDAY_INDEX[name], dom)
        if found is None:
            return _unresolved(raw)
        return _date_value(found, Confidence.inferred)

    if m := _MONTH_DAY.match(text):
        name, dom, year = m[1], int(m[2]), m[3]
        if name not in MONTH_INDEX:
            return _unresolved(raw)
        month = MONTH_INDEX[name]
        try:
            if year is not None:
                return _date_value(date(int(year), month, dom))
            d = date(ref.year, month, dom)
            if d < ref:
                d = date(ref.year + 1, month, dom)
            return _date_value(d)
        except ValueError:
            return _unresolved(raw)

    if m := _SLASH_DATE.match(text):
        month, dom, year = int(m[1]), int(m[2]), int(m[3])
        if year < 100:
            year += 2000
        try:
            return _date_value(date(year, month, dom))
        except ValueError:
            return _unresolved(raw)

    return _unresolved(raw)


_CLOCK = re.compile(r"^(\d{1,2})(?::(\d{2}))?\s*(am|pm)?$")


def normalize_time(raw: str, ctx: ReferenceContext) -> NormalizedValue:
    text = raw.strip().lower()
    if text == "noon":
        return NormalizedValue(NormKind.time, "12:00", Confidence.exact)
    if text == "midnight":
        return NormalizedValue(NormKind.time, "00:00", Confidence.exact)
    m = _CLOCK.match(text)
    if m is None:
        return _unresolved(raw)
    hour = int(m[1])
    minute = int(m[2]) if m[2] is not None else 0
    meridiem = m[3]
    if minute > 59:
        return _unresolved(raw)
    if meridiem is None:
        if m[2] is None or hour > 23:
            # a bare number is not a time
            return _unresolved(raw)
    else:
        if not 1 <= hour <= 12:
            return _unresolved(raw)
        hour = hour % 12 + (12 if meridiem == "pm" else 0)
    return NormalizedValue(NormKind.time, f"{hour:02d}:{minute:02d}", Confidence.exact)


_MONEY = re.compile(
    r"^(?:\$\s?(\d+(?:,\d{3})*)(?:\.(\d{1,2}))?"
    r"|(\d+(?:,\d{3})*)(?:\.(\d{1,2}))?\s+dollars?"
    r"|(\d+)\.(\d{2}))$"
)
_CANONICAL_MONEY = re.compile(r"^(\d+)\s+([A-Z]{3})$")


def normalize_money(raw: str, ctx: ReferenceContext) -> NormalizedValue:
    text = raw.strip()
    if m := _CANONICAL_MONEY.match(text):
        return NormalizedValue(NormKind.money, f"{int(m[1])} {m[2]}", Confidence.exact)
    m = _MONEY.match(text.lower())
    if m is None:
        return _unresolved(raw)
    whole = (m[1] or m[3] or m[5]).replace(",", "")
    cents = (m[2] or m[4] or m[6] or "0").ljust(2, "0")
    minor = int(whole) * 100 + int(cents)
    return NormalizedValue(NormKind.money, f"{minor} USD", Confidence.exact)


def normalize_value(raw: str, kind: ValueKind, ctx: ReferenceContext) -> NormalizedValue:
    """Dispatch on the slot's value kind; other kinds pass through."""
    if kind == ValueKind.date:
        return normalize_date(raw, ctx)
    if kind == ValueKind.time:
        return normalize_time(raw, ctx)
    if kind == ValueKind.money:
        return normalize_money(raw, ctx)
    return NormalizedValue(NormKind.passthrough, raw, Confidence.exact)
