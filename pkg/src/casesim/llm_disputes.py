"""Three-step prompt chain that asks an LLM to itemize a case's disputes."""

from __future__ import annotations

import ast
import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

from .corpus import DEFAULT_HEADERS, DisputeSet, JudgmentDoc, NerProvider, blur_statement
from .errors import ConfigError, MissingPrior, ProviderError
from .evaluation import char_tokens

log = logging.getLogger(__name__)

OK = "ok"
DROPPED_TOO_LONG = "dropped_too_long"
DROPPED_NO_OUTPUT = "dropped_no_output"


@dataclass(frozen=True)
class PartyClaims:
    case_id: str
    plaintiff_claim: str
    defendant_claim: str


@dataclass(frozen=True)
class LlmProfile:
    model_id: str
    temperature: float
    token_budget: int
    max_retries: int = 3

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError(f"temperature {self.temperature} outside [0, 2]")
        if self.token_budget <= 0:
            raise ConfigError("token_budget must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")


# llm_a / llm_b in experiment codes
DEFAULT_PROFILES = {
    "llm_a": LlmProfile("gpt-3.5-turbo", temperature=0.7, token_budget=11500, max_retries=3),
    "llm_b": LlmProfile("gpt-4-0613", temperature=0.3, token_budget=6000, max_retries=3),
}


@dataclass
class ChainOutcome:
    case_id: str
    status: str
    p_points: list[str] = field(default_factory=list)
    d_points: list[str] = field(default_factory=list)
    disputes: list[str] = field(default_factory=list)
    # most submissions spent on any single step
    attempts: int = 0
    calls: int = 0

    def to_record(self) -> dict:
        return asdict(self)

    @classmethod
    def from_record(cls, rec: dict) -> "ChainOutcome":
        return cls(**{k: rec[k] for k in cls.__dataclass_fields__ if k in rec})


class LlmProvider(Protocol):
    def complete(self, prompt: str, temperature: float) -> str: ...


class Tokenizer(Protocol):
    def count_tokens(self, text: str) -> int: ...


class CharTokenizer:
    """One token per CJK character, ASCII word run or other symbol."""

    def count_tokens(self, text: str) -> int:
        return len(char_tokens(text))


# --------------------------------------------------------------------------
# prompts

def build_prompt(step: int, claims: PartyClaims, prior: tuple[list[str], list[str]] | None = None) -> str:
    if step == 1:
        plaintiff_claim = claims.plaintiff_claim
        return f'''List the key points of the following article using {{'p_point': []}} as the template\n :{plaintiff_claim}'''
    if step == 2:
        defendant_claim = claims.defendant_claim
        return f'''List the key points of the following article using {{'d_point': []}} as the template\n :{defendant_claim}'''
    if step == 3:
        if prior is None:
            raise MissingPrior("step 3 needs the plaintiff and defendant point lists")
        p_point, d_point = prior
        return (f'''The following are the main points argued by the claimant and the counterparty. '''
                f'''Based on this, list the dispute points between the two parties, and use {{'dispute': []}} '''
                f'''as the template\n The following is the plaintiff's claim:\n {p_point} \n '''
                f'''The following is the defendant's claim:\n {d_point} ''')
    raise ValueError(f"step must be 1, 2 or 3, got {step}")


STEP_KEYS = {1: "p_point", 2: "d_point", 3: "dispute"}


# --------------------------------------------------------------------------
# reply parsing

_BULLET = re.compile(
    r"^\s*(?:[-*•・●]|\d{1,3}\s*[.、)）]|[(（]\s*(?:\d{1,3}|[一二三四五六七八九十]{1,3})\s*[)）]"
    r"|[一二三四五六七八九十]{1,3}、)\s*(.+?)\s*$",
    re.M,
)


def _literal_list(text: str):
    for loader in (json.loads, ast.literal_eval):
        try:
            value = loader(text)
        except (ValueError, SyntaxError, TypeError, MemoryError, RecursionError):
            continue
        if isinstance(value, (list, tuple)):
            return [str(v).strip() for v in value if str(v).strip()]
    return None


def parse_point_list(reply: str, key: str) -> list[str]:
    """Pull the list bound to ``key`` out of an LLM reply; [] when nothing usable."""
    if not reply or not reply.strip():
        return []
    m = re.search(r"""['"]?%s['"]?\s*[:：]\s*(\[.*?\])""" % re.escape(key), reply, re.S)
    if m:
        items = _literal_list(m.group(1))
        if items is None:
            items = [s.strip() for s in re.findall(r"""['"“「](.+?)['"”」]""", m.group(1)) if s.strip()]
        if items:
            return items
    body = reply
    k = re.search(r"%s\s*[:：]" % re.escape(key), reply)
    if k:
        body = reply[k.end():]
    items = [m.group(1).strip("'\"，,") for m in _BULLET.finditer(body)]
    return [i for i in items if i]


# --------------------------------------------------------------------------
# chain

def run_chain(claims: PartyClaims, profile: LlmProfile, provider: LlmProvider,
              tokenizer: Tokenizer | None = None) -> ChainOutcome:
    """Run steps 1-3 for one case, retrying only the failing step."""
    tokenizer = tokenizer or CharTokenizer()
    for step in (1, 2):
        if tokenizer.count_tokens(build_prompt(step, claims)) > profile.token_budget:
            return ChainOutcome(claims.case_id, DROPPED_TOO_LONG)

    out = ChainOutcome(claims.case_id, OK)
    lists: dict[int, list[str]] = {}
    for step in (1, 2, 3):
        prior = (lists[1], lists[2]) if step == 3 else None
        prompt = build_prompt(step, claims, prior)
        points: list[str] = []
        tries = 0
        while tries <= profile.max_retries:
            tries += 1
            out.calls += 1
            reply = provider.complete(prompt, profile.temperature)
            points = parse_point_list(reply or "", STEP_KEYS[step])
            if points:
                break
            log.debug("%s step %d: unusable reply (try %d)", claims.case_id, step, tries)
        out.attempts = max(out.attempts, tries)
        if not points:
            out.status = DROPPED_NO_OUTPUT
            return out
        lists[step] = points
    out.p_points, out.d_points, out.disputes = lists[1], lists[2], lists[3]
    return out


class Journal:
    """Append-only JSONL log of chain outcomes keyed by case_id."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def load(self) -> dict[str, ChainOutcome]:
        done = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                    except json.JSONDecodeError:
                        # torn last line from an interrupted run
                        continue
                    done[rec["case_id"]] = ChainOutcome.from_record(rec)
        return done

    def append(self, outcome: ChainOutcome) -> None:
        line = json.dumps(outcome.to_record(), ensure_ascii=False) + "\n"
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())


class RateLimiter:
    def __init__(self, per_second: float | None):
        self.interval = 1.0 / per_second if per_second else 0.0
        self._lock = threading.Lock()
        self._next = 0.0

    def wait(self):
        if not self.interval:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._next - now
            self._next = max(now, self._next) + self.interval
        if delay > 0:
            time.sleep(delay)


class _Limited:
    def __init__(self, provider, limiter):
        self.provider, self.limiter = provider, limiter

    def complete(self, prompt, temperature):
        self.limiter.wait()
        return self.provider.complete(prompt, temperature)


def run_corpus(claims: Iterable[PartyClaims], profile: LlmProfile, provider: LlmProvider,
               journal: Journal, tokenizer: Tokenizer | None = None, workers: int = 1,
               requests_per_second: float | None = None) -> dict[str, ChainOutcome]:
    """Run the chain for every case not already journaled.

    Transport failures are logged and left out of the journal so a later
    run retries them.
    """
    done = journal.load()
    todo = [c for c in claims if c.case_id not in done]
    limited = _Limited(provider, RateLimiter(requests_per_second))

    def one(c):
        try:
            outcome = run_chain(c, profile, limited, tokenizer)
        except ProviderError as exc:
            log.warning("%s: provider error: %s", c.case_id, exc)
            return None
        journal.append(outcome)
        return outcome

    if workers <= 1:
        results = [one(c) for c in todo]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, todo))
    for r in results:
        if r is not None:
            done[r.case_id] = r
    return done


def outcomes_to_dispute_sets(outcomes: dict[str, ChainOutcome], model_id: str,
                             ner: NerProvider | None = None) -> dict[str, DisputeSet]:
    """Blurred DisputeSets for the chains that finished ok."""
    sets = {}
    for cid, o in outcomes.items():
        if o.status == OK and o.disputes:
            items = [blur_statement(s, ner) for s in o.disputes]
            sets[cid] = DisputeSet(cid, items, f"llm:{model_id}", list(o.disputes))
    return sets


# --------------------------------------------------------------------------
# party statements

_PLAINTIFF_RX = re.compile(r"原告(?:起訴)?(?:主張|方面|之主張)")
_DEFENDANT_RX = re.compile(r"被告(?:則以|答辯|抗辯|方面|之答辯)")
_CLAIMS_END = [re.compile(p) for p in (*DEFAULT_HEADERS, r"兩造不爭執", r"本院(?:之)?判斷", r"得心證之理由")]


def extract_party_claims(doc: JudgmentDoc) -> PartyClaims | None:
    """Plaintiff and defendant statement sections of a judgment, if both exist."""
    text = doc.jfull
    p = _PLAINTIFF_RX.search(text)
    if not p:
        return None
    d = _DEFENDANT_RX.search(text, p.end())
    if not d:
        return None
    end = len(text)
    for rx in _CLAIMS_END:
        m = rx.search(text, d.end())
        if m and m.start() < end:
            end = m.start()
    plaintiff = _trim_section(text[p.end():d.start()])
    defendant = _trim_section(text[d.end():end])
    if not plaintiff or not defendant:
        return None
    return PartyClaims(doc.jid, plaintiff, defendant)


def _trim_section(s: str) -> str:
    s = re.sub(r"^[\s：:，,略以]+", "", s)
    # drop a dangling heading marker such as "二、" left before the next section
    s = re.sub(r"[\s]*(?:[一二三四五六七八九十]{1,3}、|[(（][一二三四五六七八九十]{1,3}[)）])?\s*$", "", s)
    return s.strip()


# --------------------------------------------------------------------------
# providers

def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class CannedReplyProvider:
    """Offline provider that serves pre-recorded replies keyed by prompt hash.

    A value may be a list of replies, served in order on repeated calls
    (the last one repeats). Unknown prompts get an empty reply.
    """

    def __init__(self, replies: dict[str, str | list[str]] | None = None):
        self.replies = dict(replies or {})
        self.calls: list[str] = []
        self._served: dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "CannedReplyProvider":
        replies = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    replies[rec["prompt_sha256"]] = rec["reply"]
        return cls(replies)

    def add(self, prompt: str, reply) -> None:
        self.replies[prompt_key(prompt)] = reply

    def complete(self, prompt: str, temperature: float) -> str:
        key = prompt_key(prompt)
        with self._lock:
            self.calls.append(prompt)
            value = self.replies.get(key, "")
            if isinstance(value, list):
                i = self._served.get(key, 0)
                self._served[key] = i + 1
                value = value[min(i, len(value) - 1)] if value else ""
        return value


class OpenAIChatProvider:
    """Chat-completions client for OpenAI-compatible HTTP endpoints."""

    def __init__(self, model: str, api_key: str | None = None, base_url: str = "https://api.openai.com/v1",
                 timeout: float = 120.0, api_key_env: str = "OPENAI_API_KEY", client=None):
        import httpx

        self.model = model
        self.api_key = api_key or os.environ.get(api_key_env)
        if not self.api_key and client is None:
            raise ConfigError(f"no API key: set {api_key_env}")
        self.url = base_url.rstrip("/") + "/chat/completions"
        self._client = client or httpx.Client(timeout=timeout)
        self._httpx = httpx

    def complete(self, prompt: str, temperature: float) -> str:
        body = {"model": self.model, "temperature": temperature,
                "messages": [{"role": "user", "content": prompt}]}
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self._client.post(self.url, json=body, headers=headers)
            resp.raise_for_status()
            data = resp.json()
        except (self._httpx.HTTPError, ValueError) as exc:
            raise ProviderError(str(exc)) from exc
        choices = data.get("choices") or []
        if not choices:
            return ""
        return (choices[0].get("message") or {}).get("content") or ""
