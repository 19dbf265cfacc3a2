"""Synthetic annotated-function corpus in the supported Java subset.

Generates (id, code, docstring) records whose docstrings read like real
annotations: first sentence describes the function using words that overlap
the identifier subtokens, with optional parentheticals and trailing
sentences as noise. A tunable share of records come in structural twins:
two functions with identical terminal tokens whose behavior (and docstring)
differ only in control structure, so models that ignore structure cannot
tell them apart.
"""

import json

import numpy as np

from .corpus import RawPair

VERBS = [
    "get", "set", "compute", "find", "check", "load", "save", "parse",
    "merge", "filter", "count", "sum", "clamp", "reset", "update", "build",
    "create", "remove", "append", "fetch", "print", "log", "scan", "copy",
    "apply", "resolve", "validate", "encode", "decode", "format", "swap",
    "read", "write", "open", "close", "flush",
]

NOUNS = [
    "user", "item", "total", "index", "value", "buffer", "record", "token",
    "node", "cache", "entry", "limit", "score", "weight", "offset", "length",
    "message", "result", "key", "flag", "batch", "queue", "stack", "list",
    "name", "path", "file", "row", "column", "field", "header", "request",
    "response", "session", "config", "counter", "cursor", "segment", "chunk",
    "page", "slot", "bucket", "frame", "label", "handle", "widget", "stream",
]

ADJS = ["max", "min", "last", "first", "next", "active", "current", "total",
        "valid", "stale", "primary", "remote", "local", "cached"]

FILLERS = ["", "given ", "specified ", "current ", "supplied "]

TAIL_SENTENCES = [
    "",
    " Returns null when missing.",
    " See the module notes {@link Docs} for details.",
    " Callers must hold the lock.",
    " This overload ignores casing.",
    " Complexity is linear in the input size.",
]

PARENTHETICALS = ["", " (thread safe)", " (best effort)", " (non blocking)"]


def _cap(word: str) -> str:
    return word[0].upper() + word[1:]


def _doc(first: str, rng) -> str:
    tail = TAIL_SENTENCES[rng.integers(len(TAIL_SENTENCES))]
    paren = PARENTHETICALS[rng.integers(len(PARENTHETICALS))]
    return f"{first}{paren}.{tail}"


def _pick(rng, items):
    return items[rng.integers(len(items))]


def _getter(rng):
    adj, noun = _pick(rng, ADJS), _pick(rng, NOUNS)
    name = f"get{_cap(adj)}{_cap(noun)}"
    code = (f"int {name}() {{ return {adj}{_cap(noun)}; }}")
    first = f"returns the {adj} {noun} of this container"
    return code, first


def _setter(rng):
    noun, noun2 = _pick(rng, NOUNS), _pick(rng, NOUNS)
    name = f"set{_cap(noun)}"
    code = (f"void {name}(int {noun}) {{ this.{noun} = {noun}; "
            f"refresh{_cap(noun2)}(); }}")
    filler = _pick(rng, FILLERS)
    first = f"sets the {noun} to the {filler}value and refreshes the {noun2}"
    return code, first


def _loop_sum(rng):
    noun, verb = _pick(rng, NOUNS), _pick(rng, ["read", "fetch", "load"])
    name = f"sum{_cap(noun)}s"
    code = (f"int {name}(int count) {{ int total = 0; "
            f"for (int i = 0; i < count; i = i + 1) "
            f"{{ total = total + {verb}{_cap(noun)}(i); }} return total; }}")
    first = f"computes the total over every {noun} in a loop"
    return code, first


def _loop_find(rng):
    noun = _pick(rng, NOUNS)
    name = f"find{_cap(noun)}"
    code = (f"int {name}(int limit) {{ int index = 0; "
            f"while (index < limit) {{ "
            f"if (matches{_cap(noun)}(index)) {{ return index; }} "
            f"index = index + 1; }} return 0 - 1; }}")
    first = f"finds the index of the first matching {noun} below the limit"
    return code, first


def _clamp(rng):
    noun = _pick(rng, NOUNS)
    name = f"clamp{_cap(noun)}"
    code = (f"int {name}(int value, int limit) {{ "
            f"if (value > limit) {{ return limit; }} else {{ return value; }} }}")
    first = f"clamps the {noun} value below the limit when it grows too large"
    return code, first


def _guarded_call(rng):
    noun, verb = _pick(rng, NOUNS), _pick(rng, ["flush", "close", "reset"])
    name = f"{verb}{_cap(noun)}"
    code = (f"void {name}(boolean force) {{ "
            f"if (force) {{ writer.{verb}{_cap(noun)}Buffer(); }} }}")
    first = f"{verb}es the {noun} buffer only when forced" if verb == "flush" \
        else f"{verb}s the {noun} buffer only when forced"
    return code, first


def _logger(rng):
    noun = _pick(rng, NOUNS)
    name = f"log{_cap(noun)}"
    code = (f"void {name}(String message) {{ logger.info(message); "
            f"tracer.mark{_cap(noun)}(); }}")
    filler = _pick(rng, FILLERS)
    first = f"writes the {filler}{noun} message to the log"
    return code, first


def _predicate(rng):
    adj, noun = _pick(rng, ADJS), _pick(rng, NOUNS)
    name = f"is{_cap(adj)}{_cap(noun)}"
    code = (f"boolean {name}(int value) {{ "
            f"return value >= {noun}Threshold; }}")
    first = f"checks whether the {noun} value reaches the {adj} threshold"
    return code, first


def _accumulate(rng):
    noun, noun2 = _pick(rng, NOUNS), _pick(rng, NOUNS)
    name = f"blend{_cap(noun)}"
    code = (f"double {name}(double {noun}, double {noun2}) {{ "
            f"double mixed = {noun} * 0.75 + {noun2} * 0.25; return mixed; }}")
    first = f"blends the {noun} with the {noun2} using fixed weights"
    return code, first


_PLAIN_TEMPLATES = [_getter, _setter, _loop_sum, _loop_find, _clamp,
                    _guarded_call, _logger, _predicate, _accumulate]


def _twin_bodies(verb, noun):
    """Same terminals, different control structure."""
    call = f"{verb}{_cap(noun)}"
    name = f"{call}All"
    loop = (f"void {name}(int count) {{ "
            f"while (ready(count)) {{ {call}(count); }} }}")
    cond = (f"void {name}(int count) {{ "
            f"if (ready(count)) {{ {call}(count); }} }}")
    return name, loop, cond


def _twin_pair(rng):
    verb, noun = _pick(rng, VERBS), _pick(rng, NOUNS)
    _, loop_code, cond_code = _twin_bodies(verb, noun)
    loop_doc = f"{verb}s the {noun} repeatedly while the guard keeps allowing it"
    cond_doc = f"{verb}s the {noun} once if the guard currently allows it"
    return (loop_code, loop_doc), (cond_code, cond_doc)


BAD_ANNOTATIONS = ["", "sets x", "the helper", "TODO", "{@inheritDoc}", "ok"]


def generate_corpus(n: int, seed: int = 0, twin_fraction: float = 0.3,
                    invalid_fraction: float = 0.0, id_prefix: str = "fn") -> list:
    """Generate ``n`` RawPairs; ``twin_fraction`` of them arrive as
    structure-only-distinguishable twins and ``invalid_fraction`` carry
    annotations that preprocessing must filter out."""
    rng = np.random.default_rng(seed)
    pairs = []
    serial = 0

    def next_id():
        nonlocal serial
        serial += 1
        return f"{id_prefix}{serial:06d}"

    while len(pairs) < n:
        roll = rng.random()
        if roll < invalid_fraction:
            code, _ = _pick(rng, _PLAIN_TEMPLATES)(rng)
            pairs.append(RawPair(id=next_id(), code=code,
                                 annotation=_pick(rng, BAD_ANNOTATIONS)))
        elif roll < invalid_fraction + twin_fraction and len(pairs) + 2 <= n:
            (lc, ld), (cc, cd) = _twin_pair(rng)
            pairs.append(RawPair(id=next_id(), code=lc, annotation=_doc(ld, rng)))
            pairs.append(RawPair(id=next_id(), code=cc, annotation=_doc(cd, rng)))
        else:
            code, first = _pick(rng, _PLAIN_TEMPLATES)(rng)
            pairs.append(RawPair(id=next_id(), code=code,
                                 annotation=_doc(first, rng)))
    return pairs


def main(argv=None):
    import argparse

    ap = argparse.ArgumentParser(
        description="Generate a synthetic annotated-function corpus (JSON lines).")
    ap.add_argument("--out", required=True, help="output .jsonl file")
    ap.add_argument("-n", type=int, default=1000, help="number of pairs")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--twin-fraction", type=float, default=0.3)
    ap.add_argument("--invalid-fraction", type=float, default=0.0)
    ap.add_argument("--id-prefix", default="fn")
    args = ap.parse_args(argv)
    pairs = generate_corpus(args.n, seed=args.seed,
                            twin_fraction=args.twin_fraction,
                            invalid_fraction=args.invalid_fraction,
                            id_prefix=args.id_prefix)
    with open(args.out, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({"id": p.id, "code": p.code,
                                 "docstring": p.annotation}) + "\n")
    print(f"wrote {len(pairs)} pairs to {args.out}")


if __name__ == "__main__":
    main()
