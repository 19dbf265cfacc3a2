"""Text-side preprocessing: queries from annotations, subtokens, vocabularies.

Raw records are ``{"id", "code", "docstring"}`` JSON-lines. The query is the
first sentence of the docstring with bracketed spans and punctuation removed;
identifiers and query words are split into lowercase subtokens so that code
terminals and query tokens share one vocabulary.
"""

import json
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<PAD>"
UNK_TOKEN = "<UNK>"

# ids 0 and 1 are reserved in every vocabulary
NUM_RESERVED = 2

_OPENERS = {"(": ")", "[": "]", "{": "}"}
_CLOSERS = {")", "]", "}"}

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


class EmptyQueryError(ValueError):
    """Raised when a query has no usable tokens after preprocessing."""


@dataclass
class RawPair:
    """One annotated function as read from the input dataset."""

    id: str
    code: str
    annotation: str


@dataclass
class QueryTokens:
    """A query as a fixed-length id sequence plus a validity mask."""

    ids: np.ndarray    # (q,) int32, PAD-filled tail
    mask: np.ndarray   # (q,) bool, True on real tokens


def _strip_bracketed(text: str) -> str:
    """Remove (), [], {} spans (and {@...} doc tags), outermost first."""
    out = []
    stack = []
    for ch in text:
        if ch in _OPENERS:
            stack.append(_OPENERS[ch])
        elif stack:
            if ch == stack[-1]:
                stack.pop()
        elif ch in _CLOSERS:
            # stray closer with no opener: leave for punctuation stripping
            out.append(ch)
        else:
            out.append(ch)
    return "".join(out)


def _first_sentence(text: str) -> str:
    """Cut at the first '.', '!' or '?' that is followed by whitespace or end."""
    for i, ch in enumerate(text):
        if ch in ".!?" and (i + 1 == len(text) or text[i + 1].isspace()):
            return text[:i]
    return text


def extract_query(annotation: str) -> str:
    """Derive the search query from a code annotation.

    Bracketed spans go first (so periods inside doc tags cannot end the
    sentence), then the first sentence is kept, punctuation is replaced by
    spaces, and the result is lowercased. May return "" for unusable input.
    """
    text = _strip_bracketed(annotation)
    text = _first_sentence(text)
    text = text.translate(_PUNCT_TABLE)
    return " ".join(text.lower().split())


def filter_pair(pair: RawPair) -> bool:
    """Keep only pairs whose extracted query is longer than two words."""
    return len(extract_query(pair.annotation).split()) > 2


def _camel_boundaries(part: str):
    """Yield split indices at lower/digit->Upper and acronym-end boundaries."""
    for i in range(1, len(part)):
        prev, cur = part[i - 1], part[i]
        if cur.isupper() and (prev.islower() or prev.isdigit()):
            yield i
        elif (
            cur.isupper()
            and prev.isupper()
            and i + 1 < len(part)
            and part[i + 1].islower()
        ):
            yield i


def split_subtokens(token: str) -> list[str]:
    """Split an identifier or word into lowercase subtokens.

    Boundaries are camel-case transitions plus any non-alphanumeric
    separator (hyphens, underscores, ...). Digits stay attached to their
    run: "v2" stays "v2", "parseHTTPResponse-v2" gives
    ["parse", "http", "response", "v2"].
    """
    out = []
    for piece in _split_non_alnum(token):
        prev = 0
        for b in _camel_boundaries(piece):
            if piece[prev:b]:
                out.append(piece[prev:b].lower())
            prev = b
        if piece[prev:]:
            out.append(piece[prev:].lower())
    return out


def _split_non_alnum(token: str) -> list[str]:
    pieces = []
    cur = []
    for ch in token:
        if ch.isalnum():
            cur.append(ch)
        elif cur:
            pieces.append("".join(cur))
            cur = []
    if cur:
        pieces.append("".join(cur))
    return pieces


@dataclass
class Vocabulary:
    """Dense token<->id map with PAD=0 and UNK=1 reserved."""

    kind: str                       # "word" or "node"
    tokens: list[str] = field(default_factory=list)  # tokens for ids 2..
    _ids: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in ("word", "node"):
            raise ValueError(f"unknown vocabulary kind: {self.kind!r}")
        if not self._ids:
            self._ids = {t: i + NUM_RESERVED for i, t in enumerate(self.tokens)}

    @property
    def size(self) -> int:
        return len(self.tokens) + NUM_RESERVED

    def lookup(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        if idx == PAD_ID:
            return PAD_TOKEN
        if idx == UNK_ID:
            return UNK_TOKEN
        return self.tokens[idx - NUM_RESERVED]

    def encode(self, tokens) -> list[int]:
        return [self.lookup(t) for t in tokens]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"kind:{self.kind}\n")
            fh.write(f"count:{len(self.tokens)}\n")
            for tok in self.tokens:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        return cls.loads(text)

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        lines = text.splitlines()
        if len(lines) < 2 or not lines[0].startswith("kind:") or not lines[1].startswith("count:"):
            raise ValueError("vocabulary file missing kind:/count: header")
        kind = lines[0][len("kind:"):]
        count = int(lines[1][len("count:"):])
        tokens = lines[2:]
        if len(tokens) != count:
            raise ValueError(f"vocabulary header says {count} tokens, file has {len(tokens)}")
        return cls(kind=kind, tokens=tokens)

    def dumps(self) -> str:
        head = [f"kind:{self.kind}", f"count:{len(self.tokens)}"]
        return "\n".join(head + self.tokens) + "\n"


def build_vocabulary(token_stream, min_count: int = 2, max_size: int = 30000,
                     kind: str = "word") -> Vocabulary:
    """Build a vocabulary from a token stream, most frequent first.

    Tokens seen fewer than ``min_count`` times or ranked beyond ``max_size``
    are left out and later map to UNK. Ties break lexicographically so the
    same corpus always yields byte-identical vocabulary files.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(token_stream)
    eligible = [(t, c) for t, c in counts.items() if c >= min_count]
    eligible.sort(key=lambda tc: (-tc[1], tc[0]))
    tokens = [t for t, _ in eligible[:max_size]]
    return Vocabulary(kind=kind, tokens=tokens)


def encode_query(sentence: str, vocab: Vocabulary, q: int) -> QueryTokens:
    """Encode a query sentence into exactly ``q`` word ids plus a mask.

    Tokens are whitespace-split, subtoken-split, id-mapped with UNK
    fallback, then truncated or PAD-filled to length ``q``.
    """
    if vocab.kind != "word":
        raise ValueError("encode_query needs a word vocabulary")
    subtokens = []
    for token in sentence.split():
        subtokens.extend(split_subtokens(token))
    if not subtokens:
        raise EmptyQueryError(f"no usable tokens in query: {sentence!r}")
    ids = vocab.encode(subtokens[:q])
    n = len(ids)
    ids = ids + [PAD_ID] * (q - n)
    mask = [True] * n + [False] * (q - n)
    return QueryTokens(ids=np.asarray(ids, dtype=np.int32),
                       mask=np.asarray(mask, dtype=bool))


def read_pairs(path) -> list[RawPair]:
    """Read a JSON-lines dataset of {"id", "code", "docstring"} records."""
    pairs = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: bad JSON: {exc}") from exc
            pid = str(obj["id"])
            if pid in seen:
                raise ValueError(f"{path}:{lineno}: duplicate id {pid!r}")
            seen.add(pid)
            code = obj["code"]
            if not code:
                raise ValueError(f"{path}:{lineno}: empty code for id {pid!r}")
            pairs.append(RawPair(id=pid, code=code, annotation=obj.get("docstring", "")))
    return pairs


def write_pairs(pairs, path):
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({"id": p.id, "code": p.code, "docstring": p.annotation}) + "\n")
