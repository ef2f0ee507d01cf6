"""Reasoning traces split into a thinking section and an answer section."""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional, Sequence

from .errors import MalformedTrace, ParseError, UnknownToken

THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"


class Mode(str, enum.Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ParseError(f"unknown mode {value!r}; expected low, medium or high") from None

    @property
    def index(self) -> int:
        return MODES.index(self)


# Canonical order used for parameter layouts and reports.
MODES = (Mode.LOW, Mode.MEDIUM, Mode.HIGH)

_WHITESPACE = re.compile(r"\S+")
_UNICODE_WORD = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class Tokenizer:
    """Deterministic token counter.

    ``scheme`` is ``"whitespace"`` (runs of whitespace separate tokens),
    ``"unicode-word"`` (word characters form tokens, every other
    non-space character is its own token) or ``"external"``, which
    delegates to ``split_fn``. ``vocabulary`` is optional and only used by
    :meth:`encode`.
    """

    scheme: str = "whitespace"
    split_fn: Optional[Callable[[str], Sequence[str]]] = field(default=None, compare=False)
    vocabulary: Optional[tuple] = None

    def __post_init__(self):
        if self.scheme not in ("whitespace", "unicode-word", "external"):
            raise ValueError(f"unknown tokenizer scheme {self.scheme!r}")
        if self.scheme == "external" and self.split_fn is None:
            raise ValueError("external tokenizer needs split_fn")

    def tokens(self, text: str) -> list[str]:
        if self.scheme == "external":
            return list(self.split_fn(text))
        return [m.group(0) for m in self._pattern.finditer(text)]

    def spans(self, text: str) -> list[tuple[int, int]]:
        """Character spans of each token; unavailable for external schemes."""
        if self.scheme == "external":
            raise NotImplementedError("external tokenizers do not expose spans")
        return [m.span() for m in self._pattern.finditer(text)]

    def encode(self, text: str) -> list[int]:
        if self.vocabulary is None:
            raise ValueError("tokenizer has no vocabulary")
        index = {tok: i for i, tok in enumerate(self.vocabulary)}
        ids = []
        for tok in self.tokens(text):
            if tok not in index:
                raise UnknownToken(f"token {tok!r} is not in the vocabulary")
            ids.append(index[tok])
        return ids

    @property
    def _pattern(self):
        return _WHITESPACE if self.scheme == "whitespace" else _UNICODE_WORD


DEFAULT_TOKENIZER = Tokenizer()


def count_tokens(text: str, tok: Tokenizer = DEFAULT_TOKENIZER) -> int:
    if not text:
        return 0
    return len(tok.tokens(text))


@dataclass(frozen=True)
class ReasoningTrace:
    """A parsed model output.

    ``delimited`` records whether the raw text carried think markers; a
    trace without them is all answer. ``raw_text`` is always the exact
    serialization of the other fields.
    """

    raw_text: str
    thinking: str
    answer: str
    mode: Mode
    thinking_tokens: int
    answer_tokens: int
    delimited: bool = True
    open_marker: str = THINK_OPEN
    close_marker: str = THINK_CLOSE

    @property
    def total_tokens(self) -> int:
        return self.thinking_tokens + self.answer_tokens

    @classmethod
    def build(
        cls,
        thinking: str,
        answer: str,
        mode: Mode,
        tok: Tokenizer = DEFAULT_TOKENIZER,
        *,
        delimited: bool = True,
        open_marker: str = THINK_OPEN,
        close_marker: str = THINK_CLOSE,
    ) -> "ReasoningTrace":
        mode = Mode.parse(mode)
        if not delimited and thinking:
            raise MalformedTrace("an undelimited trace cannot carry thinking text")
        for marker in (open_marker, close_marker):
            if marker in thinking or marker in answer:
                raise MalformedTrace(f"section text contains marker {marker!r}")
        raw = f"{open_marker}{thinking}{close_marker}{answer}" if delimited else answer
        return cls(
            raw_text=raw,
            thinking=thinking,
            answer=answer,
            mode=mode,
            thinking_tokens=count_tokens(thinking, tok),
            answer_tokens=count_tokens(answer, tok),
            delimited=delimited,
            open_marker=open_marker,
            close_marker=close_marker,
        )

    def replace(self, *, thinking=None, answer=None, mode=None, tok=DEFAULT_TOKENIZER):
        return ReasoningTrace.build(
            self.thinking if thinking is None else thinking,
            self.answer if answer is None else answer,
            self.mode if mode is None else mode,
            tok,
            delimited=self.delimited or bool(thinking),
            open_marker=self.open_marker,
            close_marker=self.close_marker,
        )

    def serialize(self) -> str:
        if not self.delimited:
            return self.answer
        return f"{self.open_marker}{self.thinking}{self.close_marker}{self.answer}"


def parse_trace(
    raw: str,
    mode: Mode,
    tok: Tokenizer = DEFAULT_TOKENIZER,
    *,
    open_marker: str = THINK_OPEN,
    close_marker: str = THINK_CLOSE,
) -> ReasoningTrace:
    """Split ``raw`` at the think markers.

    A well-formed trace either has no markers at all (it is then all
    answer) or starts with exactly one open marker followed later by
    exactly one close marker.
    """
    n_open = raw.count(open_marker)
    n_close = raw.count(close_marker)
    if n_open == 0 and n_close == 0:
        return ReasoningTrace.build("", raw, mode, tok, delimited=False,
                                    open_marker=open_marker, close_marker=close_marker)
    if n_open != 1 or n_close != 1:
        raise MalformedTrace(
            f"expected one {open_marker!r} and one {close_marker!r}, found {n_open} and {n_close}"
        )
    if not raw.startswith(open_marker):
        raise MalformedTrace(f"text before {open_marker!r} would be lost")
    close_at = raw.find(close_marker)
    if close_at < len(open_marker):
        raise MalformedTrace(f"{close_marker!r} precedes {open_marker!r}")
    thinking = raw[len(open_marker):close_at]
    answer = raw[close_at + len(close_marker):]
    return ReasoningTrace.build(thinking, answer, mode, tok,
                                open_marker=open_marker, close_marker=close_marker)


@dataclass(frozen=True)
class TraceRecord:
    """One line of a trace JSONL file."""

    id: str
    trace: ReasoningTrace
    query: str = ""
    query_id: Optional[str] = None

    def to_json(self) -> dict:
        out = {"id": self.id, "mode": self.trace.mode.value, "raw_text": self.trace.raw_text}
        if self.query:
            out["query"] = self.query
        if self.query_id is not None:
            out["query_id"] = self.query_id
        return out


def dumps_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=False) + "\n" for r in records)


def iter_jsonl(path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if not isinstance(obj, dict):
                raise ParseError(f"{path}:{lineno}: expected a JSON object")
            yield obj


def record_from_json(obj: dict, tok: Tokenizer = DEFAULT_TOKENIZER) -> TraceRecord:
    try:
        rid, mode, raw = obj["id"], obj["mode"], obj["raw_text"]
    except KeyError as exc:
        raise ParseError(f"trace record missing field {exc.args[0]!r}") from None
    qid = obj.get("query_id")
    return TraceRecord(
        id=str(rid),
        trace=parse_trace(raw, Mode.parse(mode), tok),
        query=obj.get("query", ""),
        query_id=None if qid is None else str(qid),
    )


def read_traces(path, tok: Tokenizer = DEFAULT_TOKENIZER) -> list[TraceRecord]:
    return [record_from_json(obj, tok) for obj in iter_jsonl(path)]


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_jsonl(records))
