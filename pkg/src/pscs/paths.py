"""Leaf-to-leaf tree paths: extraction under size limits, sampling, encoding.

A path walks from one terminal up to the pair's lowest common ancestor and
back down to another terminal. Each interior node is tagged with the
direction of the step leaving it toward the next element, so the tag
sequence is a run of "up" followed by a run of "down" and the apex is the
first "down". Path size limits:

  height -- max over both arms of the edge count from terminal to apex
  width  -- index distance of the two terminals in left-to-right leaf order
"""

import json
from dataclasses import dataclass

import numpy as np

from .ast import Ast
from .corpus import PAD_ID, Vocabulary, split_subtokens

UP = "up"
DOWN = "down"
UP_MARK = "↑"
DOWN_MARK = "↓"

DEFAULT_MAX_HEIGHT = 8
DEFAULT_MAX_WIDTH = 3
DEFAULT_PATH_CAP = 500


@dataclass(frozen=True)
class AstPath:
    start_terminal: str
    directed_nodes: tuple   # ((label, "up"|"down"), ...)
    end_terminal: str

    def node_tokens(self) -> list[str]:
        """Direction-fused vocabulary tokens, e.g. "Block↓"."""
        return [lab + (UP_MARK if d == UP else DOWN_MARK)
                for lab, d in self.directed_nodes]


@dataclass
class PathContext:
    """One path encoded to fixed-length id arrays for the model."""

    start_ids: np.ndarray   # (m,) int32
    start_mask: np.ndarray  # (m,) bool
    node_ids: np.ndarray    # (l,) int32
    node_mask: np.ndarray   # (l,) bool
    end_ids: np.ndarray     # (m,) int32
    end_mask: np.ndarray    # (m,) bool


@dataclass
class PathBag:
    """Up to g sampled encoded paths of one snippet plus the slot mask."""

    code_id: str
    contexts: list          # real PathContexts, length == path_mask.sum()
    path_mask: np.ndarray   # (g,) bool


def extract_paths(ast: Ast, max_height: int = DEFAULT_MAX_HEIGHT,
                  max_width: int = DEFAULT_MAX_WIDTH,
                  cap: int = DEFAULT_PATH_CAP, rng_seed: int = 0) -> list[AstPath]:
    """Enumerate all leaf pairs whose connecting path fits the limits.

    Pairs are oriented left-to-right in leaf order and emitted in
    (start index, end index) order. If more than ``cap`` survive, a seeded
    uniform subsample of size ``cap`` is kept (original order preserved).
    A single-leaf tree yields an empty list.
    """
    if max_height < 1 or max_width < 1:
        raise ValueError("max_height and max_width must be >= 1")
    leaves = ast.leaf_order
    if len(leaves) < 2:
        return []
    parent = ast.parents()
    depth = ast.depths()
    labels = [nd.label for nd in ast.nodes]

    out = []
    k = len(leaves)
    for i in range(k):
        for j in range(i + 1, min(i + max_width, k - 1) + 1):
            path = _connect(leaves[i], leaves[j], parent, depth, labels, max_height)
            if path is not None:
                out.append(path)
    if len(out) > cap:
        rng = np.random.default_rng(rng_seed)
        keep = sorted(rng.choice(len(out), size=cap, replace=False))
        out = [out[t] for t in keep]
    return out


def _connect(a, b, parent, depth, labels, max_height):
    """Directed node sequence between leaves a and b, or None over the limit."""
    up_chain = []    # interior nodes from a's parent toward the apex
    down_chain = []  # interior nodes from b's parent toward the apex
    x, y = a, b
    while depth[x] > depth[y]:
        x = parent[x]
        up_chain.append(x)
    while depth[y] > depth[x]:
        y = parent[y]
        down_chain.append(y)
    while x != y:
        x = parent[x]
        up_chain.append(x)
        y = parent[y]
        down_chain.append(y)
    # both chains now end at the apex; arm heights are the chain lengths
    if max(len(up_chain), len(down_chain)) > max_height:
        return None
    if not up_chain:
        # a is the apex: impossible, a is a leaf with a parent on the walk
        raise AssertionError("leaf pair with no connecting nodes")
    directed = [(labels[n], UP) for n in up_chain[:-1]]
    directed.append((labels[up_chain[-1]], DOWN))          # the apex departs downward
    directed.extend((labels[n], DOWN) for n in reversed(down_chain[:-1]))
    return AstPath(start_terminal=labels[a],
                   directed_nodes=tuple(directed),
                   end_terminal=labels[b])


def sample_slots(n_paths: int, g: int, rng: np.random.Generator):
    """Pick which of ``n_paths`` fill the g bag slots.

    Returns (indices, mask): with n >= g a uniform sample without
    replacement (sorted, all slots real); otherwise all paths in order and
    a masked-off tail.
    """
    if n_paths < 1:
        raise ValueError("cannot sample from an empty path list")
    if n_paths >= g:
        idx = np.sort(rng.choice(n_paths, size=g, replace=False))
        mask = np.ones(g, dtype=bool)
    else:
        idx = np.arange(n_paths)
        mask = np.zeros(g, dtype=bool)
        mask[:n_paths] = True
    return idx.astype(np.int64), mask


def sample_paths(paths: list, g: int, rng: np.random.Generator):
    """Sample up to g paths for one epoch; returns (selected, slot mask)."""
    idx, mask = sample_slots(len(paths), g, rng)
    return [paths[t] for t in idx], mask


def inference_rng(code_id: str) -> np.random.Generator:
    """Deterministic per-snippet stream so offline encoding is reproducible."""
    import hashlib

    digest = hashlib.md5(code_id.encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def encode_path(path: AstPath, word_vocab: Vocabulary, node_vocab: Vocabulary,
                m: int, l: int) -> PathContext:
    """Encode a path's terminals (subtoken ids, length m) and directed nodes
    (fused label+direction ids, length l), truncating or PAD-filling."""
    if word_vocab.kind != "word" or node_vocab.kind != "node":
        raise ValueError("encode_path needs (word, node) vocabularies")
    s_ids, s_mask = _fit(word_vocab.encode(split_subtokens(path.start_terminal)), m)
    e_ids, e_mask = _fit(word_vocab.encode(split_subtokens(path.end_terminal)), m)
    n_ids, n_mask = _fit(node_vocab.encode(path.node_tokens()), l)
    return PathContext(start_ids=s_ids, start_mask=s_mask,
                       node_ids=n_ids, node_mask=n_mask,
                       end_ids=e_ids, end_mask=e_mask)


def _fit(ids: list, length: int):
    ids = ids[:length]
    n = len(ids)
    arr = np.full(length, PAD_ID, dtype=np.int32)
    arr[:n] = ids
    mask = np.zeros(length, dtype=bool)
    mask[:n] = True
    return arr, mask


def encode_bag(code_id: str, paths: list, word_vocab: Vocabulary,
               node_vocab: Vocabulary, m: int, l: int, g: int,
               rng: np.random.Generator) -> PathBag:
    """Sample and encode one snippet's paths into a PathBag."""
    selected, mask = sample_paths(paths, g, rng)
    contexts = [encode_path(p, word_vocab, node_vocab, m, l) for p in selected]
    return PathBag(code_id=code_id, contexts=contexts, path_mask=mask)


# -- interchange file ---------------------------------------------------------
# {"id": str, "query": str, "paths": [[start, [directed tokens...], end], ...]}

def path_to_wire(path: AstPath) -> list:
    return [path.start_terminal, path.node_tokens(), path.end_terminal]


def path_from_wire(triple) -> AstPath:
    start, node_tokens, end = triple
    directed = []
    for tok in node_tokens:
        if tok.endswith(UP_MARK):
            directed.append((tok[:-1], UP))
        elif tok.endswith(DOWN_MARK):
            directed.append((tok[:-1], DOWN))
        else:
            raise ValueError(f"node token missing direction mark: {tok!r}")
    return AstPath(start_terminal=start, directed_nodes=tuple(directed),
                   end_terminal=end)


def write_path_file(records, path):
    """records: iterable of (id, query, list[AstPath])."""
    with open(path, "w", encoding="utf-8") as fh:
        for rid, query, plist in records:
            obj = {"id": rid, "query": query,
                   "paths": [path_to_wire(p) for p in plist]}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_path_file(path):
    """Yield (id, query, list[AstPath]) from an interchange file."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                yield str(obj["id"]), obj["query"], [path_from_wire(t) for t in obj["paths"]]
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad path record: {exc}") from exc
