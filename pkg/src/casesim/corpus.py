"""Judgment-document parsing, case filtering, dispute extraction and blurring."""

from __future__ import annotations

import datetime as dt
import io
import json
import logging
import re
import zipfile
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Protocol

from .errors import AmbiguousSection, MalformedRecord, MissingField, OverlappingSpans

log = logging.getLogger(__name__)

FIELDS = ("JID", "JYEAR", "JCASE", "JNO", "JDATE", "JTITLE", "JFULL")


@dataclass(frozen=True)
class JudgmentDoc:
    jid: str
    jyear: int
    jcase: str
    jno: str
    jdate: dt.date
    jtitle: str
    jfull: str

    @property
    def court(self) -> str:
        return self.jid.split(",", 1)[0]


@dataclass
class DisputeSet:
    case_id: str
    items: list[str]
    source: str = "court"
    raw_items: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.raw_items:
            self.raw_items = list(self.items)
        if len(self.raw_items) != len(self.items):
            raise MalformedRecord(
                f"{self.case_id}: {len(self.items)} items vs {len(self.raw_items)} raw items"
            )

    def to_record(self) -> dict:
        return {
            "case_id": self.case_id,
            "source": self.source,
            "items": list(self.items),
            "raw_items": list(self.raw_items),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "DisputeSet":
        return cls(rec["case_id"], list(rec["items"]), rec.get("source", "court"),
                   list(rec.get("raw_items") or rec["items"]))


def write_dispute_sets(path, sets: Iterable[DisputeSet]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for ds in sets:
            fh.write(json.dumps(ds.to_record(), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_dispute_sets(path) -> dict[str, DisputeSet]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                ds = DisputeSet.from_record(json.loads(line))
                out[ds.case_id] = ds
    return out


# --------------------------------------------------------------------------
# parsing

def _parse_date(value) -> dt.date:
    s = str(value).strip()
    digits = re.sub(r"\D", "", s)
    if len(digits) != 8:
        raise MalformedRecord(f"unparseable JDATE {value!r}")
    try:
        return dt.date(int(digits[:4]), int(digits[4:6]), int(digits[6:]))
    except ValueError as exc:
        raise MalformedRecord(f"unparseable JDATE {value!r}") from exc


def parse_document(raw: bytes | str) -> JudgmentDoc:
    """Parse one judgment record (a JSON object with the seven upper-case keys)."""
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise MalformedRecord("not UTF-8") from exc
    try:
        rec = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"not a JSON object: {exc}") from exc
    if not isinstance(rec, dict):
        raise MalformedRecord("top level is not an object")
    for name in FIELDS:
        if name not in rec:
            raise MissingField(name)
    jid = str(rec["JID"]).strip()
    jfull = str(rec["JFULL"] or "")
    if not jid:
        raise MalformedRecord("empty JID")
    if not jfull.strip():
        raise MalformedRecord(f"{jid}: empty JFULL")
    try:
        jyear = int(str(rec["JYEAR"]).strip())
    except ValueError as exc:
        raise MalformedRecord(f"{jid}: bad JYEAR {rec['JYEAR']!r}") from exc
    return JudgmentDoc(
        jid=jid,
        jyear=jyear,
        jcase=str(rec["JCASE"]).strip(),
        jno=str(rec["JNO"]).strip(),
        jdate=_parse_date(rec["JDATE"]),
        jtitle=str(rec["JTITLE"]).strip(),
        jfull=jfull,
    )


def iter_raw_records(path) -> Iterator[tuple[str, bytes]]:
    """Yield (name, bytes) for every .json record under a file, directory or zip."""
    path = Path(path)
    if path.is_dir():
        for p in sorted(path.rglob("*")):
            if p.suffix.lower() == ".json" or p.suffix.lower() == ".zip":
                yield from iter_raw_records(p)
    elif path.suffix.lower() == ".zip":
        with zipfile.ZipFile(path) as zf:
            for name in sorted(zf.namelist()):
                if name.lower().endswith(".json"):
                    yield f"{path.name}:{name}", zf.read(name)
    else:
        yield path.name, path.read_bytes()


# --------------------------------------------------------------------------
# dispute extraction

DEFAULT_HEADERS = (
    r"(?<!不)(?:兩造)?(?:之)?爭執(?:之)?(?:事項|要點|之點|重點)",
    r"(?:本件|兩造)(?:之)?(?:主要)?爭點",
    r"爭點(?:整理|如下)",
)

DEFAULT_STOPS = (
    r"(?:本院|法院)(?:之)?(?:判斷|認定)",
    r"得心證之理由",
    r"茲(?:分)?(?:述|論)如下",
    r"\n[ \t　]*\n",
)

_CN_DIGITS = {"一": 1, "二": 2, "三": 3, "四": 4, "五": 5, "六": 6, "七": 7, "八": 8, "九": 9}
_BOUNDARY = r"(?:^|(?<=[\s。？?；;：:，,]))"
_MARKERS = {
    "arabic": re.compile(_BOUNDARY + r"([0-9０-９]{1,2})[ \t]*[.．、](?![0-9０-９])"),
    "chinese": re.compile(_BOUNDARY + r"([一二三四五六七八九十]{1,3})、"),
    "paren": re.compile(_BOUNDARY + r"[(（][ \t]*([一二三四五六七八九十]{1,3}|[0-9０-９]{1,2})[ \t]*[)）]"),
}
_TERMINATOR = re.compile(r"[。？?]")
_LEAD_IN = re.compile(r"^[\s：:]*(?:如下|為|在於|有|計有)?[\s：:]*")
_CJK = r"　-〿一-鿿＀-￯"


def _number(token: str) -> int:
    token = token.translate(str.maketrans("０１２３４５６７８９", "0123456789"))
    if token.isdigit():
        return int(token)
    if token == "十":
        return 10
    if "十" in token:
        tens, _, ones = token.partition("十")
        return (_CN_DIGITS.get(tens, 1) if tens else 1) * 10 + (_CN_DIGITS.get(ones, 0) if ones else 0)
    return _CN_DIGITS.get(token, 0)


def normalize_statement(text: str) -> str:
    text = text.strip()
    text = re.sub(rf"\s+(?=[{_CJK}])|(?<=[{_CJK}])\s+", "", text)
    return re.sub(r"\s+", " ", text).strip()


def _leading_marker(text: str):
    best = None
    for family, rx in _MARKERS.items():
        m = rx.match(text)
        if m and (best is None or m.end() > best[1].end()):
            best = (family, m)
    return best


def _sequence(text: str, family: str, start_match) -> list[tuple[int, int]]:
    """Spans (start, end) of consecutive-numbered items starting at ``start_match``."""
    rx = _MARKERS[family]
    bounds = [start_match]
    expect = _number(start_match.group(1)) + 1
    pos = start_match.end()
    while True:
        nxt = None
        for m in rx.finditer(text, pos):
            if _number(m.group(1)) == expect:
                nxt = m
                break
        if nxt is None:
            break
        bounds.append(nxt)
        pos = nxt.end()
        expect += 1
    spans = []
    for i, m in enumerate(bounds):
        end = bounds[i + 1].start() if i + 1 < len(bounds) else len(text)
        spans.append((m.end(), end))
    return spans


def _split_items(text: str, used: frozenset = frozenset()) -> list[str] | None:
    """Split ``text`` that begins with an enumeration marker; None if it doesn't."""
    text = text.strip()
    lead = _leading_marker(text)
    if lead is None or lead[0] in used:
        return None
    family, m = lead
    used = used | {family}
    items: list[str] = []
    for start, end in _sequence(text, family, m):
        items.extend(_split_segment(text[start:end], used))
    return items


def _split_segment(seg: str, used: frozenset) -> list[str]:
    seg = seg.strip()
    # a lone label of another family at the front ("1. (一)...") is dropped
    lead = _leading_marker(seg)
    if lead is not None and lead[0] not in used:
        nested = _split_items(seg, used)
        if nested and len(nested) > 1:
            return nested
        seg = seg[lead[1].end():].strip()
    for family, rx in _MARKERS.items():
        if family in used:
            continue
        for m in rx.finditer(seg):
            if _number(m.group(1)) != 1:
                continue
            nested = _split_items(seg[m.start():], used)
            # a single sub-item counts only after a heading such as "關於資遣費部分："
            if nested and (len(nested) > 1 or seg[:m.start()].rstrip().endswith(("：", ":"))):
                return nested
            break
    return [seg] if seg else []


def _items_after(text: str, pos: int, stops) -> list[str]:
    body = text[pos:]
    end = len(body)
    for rx in stops:
        m = rx.search(body)
        if m and m.start() < end:
            end = m.start()
    body = _LEAD_IN.sub("", body[:end])
    items = _split_items(body)
    if items is None:
        m = _TERMINATOR.search(body)
        single = body[: m.end()] if m else ""
        items = [single] if len(normalize_statement(single)) >= 4 else []
    elif items:
        m = _TERMINATOR.search(items[-1])
        if m:
            items[-1] = items[-1][: m.end()]
    return [s for s in (normalize_statement(i) for i in items) if s]


@dataclass
class ExtractConfig:
    headers: tuple[str, ...] = DEFAULT_HEADERS
    stops: tuple[str, ...] = DEFAULT_STOPS

    def compiled(self):
        return ([re.compile(h) for h in self.headers], [re.compile(s) for s in self.stops])


def extract_disputes(doc: JudgmentDoc | str, config: ExtractConfig | None = None) -> list[str]:
    """Itemized dispute statements listed under the dispute-section header.

    Header patterns are tried in order and the first one that yields items
    wins. Raises AmbiguousSection when that pattern matches more than once
    with different item lists.
    """
    text = doc.jfull if isinstance(doc, JudgmentDoc) else doc
    headers, stops = (config or ExtractConfig()).compiled()
    for rx in headers:
        found = []
        for m in rx.finditer(text):
            items = _items_after(text, m.end(), stops)
            if items and items not in found:
                found.append(items)
        if len(found) > 1:
            raise AmbiguousSection(f"{len(found)} candidate dispute lists for {rx.pattern!r}")
        if found:
            return found[0]
    return []


# --------------------------------------------------------------------------
# filtering

@dataclass
class CaseFilter:
    jcase_allow: tuple[str, ...] = ("勞訴", "重勞訴")
    jcase_exclude_chars: tuple[str, ...] = ("上", "抗", "再")
    jtitle_include: tuple[str, ...] = ()
    jtitle_exclude: tuple[str, ...] = ()
    court_pattern: str = r"^[A-Z]{2}DV$"


def eligibility_reason(doc: JudgmentDoc, flt: CaseFilter | None = None,
                       config: ExtractConfig | None = None) -> str | None:
    """Reason code for excluding ``doc``, or None when it is eligible."""
    flt = flt or CaseFilter()
    if doc.jcase not in flt.jcase_allow:
        return "jcase_not_allowed"
    if any(ch in doc.jcase for ch in flt.jcase_exclude_chars):
        return "appeal_case"
    if flt.jtitle_include and not any(k in doc.jtitle for k in flt.jtitle_include):
        return "jtitle_not_included"
    if any(k in doc.jtitle for k in flt.jtitle_exclude):
        return "jtitle_excluded"
    if flt.court_pattern and not re.match(flt.court_pattern, doc.court):
        return "not_local_court"
    try:
        items = extract_disputes(doc, config)
    except AmbiguousSection:
        return "ambiguous_dispute_section"
    if not items:
        return "no_dispute_section"
    return None


def is_eligible(doc: JudgmentDoc, flt: CaseFilter | None = None,
                config: ExtractConfig | None = None) -> bool:
    return eligibility_reason(doc, flt, config) is None


# --------------------------------------------------------------------------
# blurring

PERSON, PLACE, TIME = "person", "place", "time"

DEFAULT_BLUR_RULES = {PERSON: "某人", PLACE: "某地", TIME: "某時"}

Span = tuple[tuple[int, int], str]


class NerProvider(Protocol):
    def detect(self, statement: str) -> list[Span]: ...


_PERSON_RX = re.compile(r"[一-鿿][○〇Ｏ◯]{1,3}")
_TIME_RX = re.compile(
    r"[ \t　]*(?:民國[ \t　]*)?[0-9０-９]{1,4}[ \t　]*年[ \t　]*[0-9０-９]{1,2}[ \t　]*月"
    r"(?:[ \t　]*[0-9０-９]{1,2}[ \t　]*日)?[ \t　]*"
)
_PLACE_SUFFIXES = ("股份有限公司", "有限公司", "事務所", "醫院", "公司", "工廠", "學校", "銀行",
                   "診所", "大學", "協會", "工會", "飯店", "商行", "企業社")
_PLACE_RX = re.compile("|".join(_PLACE_SUFFIXES))
_NAME_STOP = set("於在之的與及和向對被由自為是告受任職至往、，。：；（）()「」『』 \t\n　某該本貴其此各他她")
_MAX_NAME = 6


class RuleBasedNer:
    """Offline fallback detector for anonymized names, ROC dates and institutions."""

    def detect(self, statement: str) -> list[Span]:
        spans: list[Span] = []
        taken = [False] * len(statement)

        def claim(a, b, cls):
            if a < b and not any(taken[a:b]):
                for i in range(a, b):
                    taken[i] = True
                spans.append(((a, b), cls))

        for m in _PERSON_RX.finditer(statement):
            claim(m.start(), m.end(), PERSON)
        for m in _TIME_RX.finditer(statement):
            claim(m.start(), m.end(), TIME)
        for m in _PLACE_RX.finditer(statement):
            end = m.end()
            start = m.start()
            while start > 0 and m.start() - start < _MAX_NAME:
                ch = statement[start - 1]
                if ch in _NAME_STOP or taken[start - 1] or not ("一" <= ch <= "鿿"):
                    break
                start -= 1
            if m.start() - start >= 2:
                claim(start, end, PLACE)
        spans.sort(key=lambda s: s[0])
        return spans


def detect_entities(statement: str, provider: NerProvider | None = None) -> list[Span]:
    return (provider or RuleBasedNer()).detect(statement)


def blur(statement: str, entities: list[Span], rules: dict[str, str] | None = None) -> str:
    """Replace each entity span with the generic term for its class."""
    rules = rules or DEFAULT_BLUR_RULES
    out = []
    pos = 0
    for (a, b), cls in entities:
        if a < pos or b < a or b > len(statement):
            raise OverlappingSpans(f"span {(a, b)} overlaps, is unsorted or out of bounds")
        out.append(statement[pos:a])
        out.append(rules[cls])
        pos = b
    out.append(statement[pos:])
    return "".join(out)


def blur_statement(statement: str, provider: NerProvider | None = None,
                   rules: dict[str, str] | None = None) -> str:
    return blur(statement, detect_entities(statement, provider), rules)


def build_dispute_set(doc: JudgmentDoc, provider: NerProvider | None = None,
                      config: ExtractConfig | None = None,
                      rules: dict[str, str] | None = None) -> DisputeSet:
    raw = extract_disputes(doc, config)
    return DisputeSet(doc.jid, [blur_statement(s, provider, rules) for s in raw], "court", raw)


# --------------------------------------------------------------------------
# statistics

@dataclass
class CorpusStats:
    per_year: dict[int, int]
    per_court: dict[str, int]
    total_cases: int
    total_statements: int

    def to_record(self) -> dict:
        return {
            "per_year": {str(k): v for k, v in sorted(self.per_year.items())},
            "per_court": dict(sorted(self.per_court.items(), key=lambda kv: (-kv[1], kv[0]))),
            "total_cases": self.total_cases,
            "total_statements": self.total_statements,
        }


def corpus_stats(corpus: list[JudgmentDoc],
                 disputes: dict[str, DisputeSet] | None = None) -> CorpusStats:
    years = Counter(d.jyear for d in corpus)
    courts = Counter(d.court for d in corpus)
    if disputes is None:
        statements = sum(len(extract_disputes(d)) for d in corpus)
    else:
        statements = sum(len(disputes[d.jid].items) for d in corpus if d.jid in disputes)
    return CorpusStats(dict(years), dict(courts), len(corpus), statements)


def load_corpus(path, flt: CaseFilter | None = None, config: ExtractConfig | None = None,
                provider: NerProvider | None = None):
    """Parse and filter every record under ``path``.

    Returns (docs, dispute_sets, rejects) where rejects maps a record name
    to its reason code. Ineligible records are logged, never raised.
    """
    docs, sets, rejects = [], {}, {}
    seen = set()
    for name, raw in iter_raw_records(path):
        try:
            doc = parse_document(raw)
        except (MalformedRecord, MissingField) as exc:
            rejects[name] = f"parse_error:{type(exc).__name__}"
            log.info("skip %s: %s", name, exc)
            continue
        if doc.jid in seen:
            rejects[name] = "duplicate_jid"
            continue
        reason = eligibility_reason(doc, flt, config)
        if reason:
            rejects[name] = reason
            log.info("skip %s: %s", doc.jid, reason)
            continue
        seen.add(doc.jid)
        docs.append(doc)
        sets[doc.jid] = build_dispute_set(doc, provider, config)
    return docs, sets, rejects


def dump_document(doc: JudgmentDoc) -> str:
    buf = io.StringIO()
    json.dump({
        "JID": doc.jid, "JYEAR": str(doc.jyear), "JCASE": doc.jcase, "JNO": doc.jno,
        "JDATE": doc.jdate.strftime("%Y%m%d"), "JTITLE": doc.jtitle, "JFULL": doc.jfull,
    }, buf, ensure_ascii=False)
    return buf.getvalue()
