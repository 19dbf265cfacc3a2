"""Training, offline encoding, the cosine index, and top-k search.

The on-disk layout of a preprocessed data directory:

    word_vocab.txt / node_vocab.txt   -- shared vocabularies (train split only)
    train.paths.jsonl                 -- path interchange records
    test.paths.jsonl                  -- optional held-out split

Training draws one in-batch negative query per positive pair, resamples
each snippet's paths every epoch, and optimizes the pairwise cosine hinge
with Adam. Offline encoding is deterministic (per-snippet sampling seeded
from the snippet id, dropout off), so an index rebuilt from the same
checkpoint is byte-identical.
"""

import hashlib
import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as md
from . import numerics as nm
from .ast import load_serialized_ast
from .corpus import (EmptyQueryError, PAD_ID, Vocabulary, build_vocabulary,
                     extract_query, filter_pair, read_pairs, split_subtokens)
from .model import AblationConfig, CodeBatch, HyperParams, ModelParams
from .numerics import Tensor, backward
from .parser import ParseError, parse_function
from .paths import (DEFAULT_MAX_HEIGHT, DEFAULT_MAX_WIDTH, DEFAULT_PATH_CAP,
                    encode_path, extract_paths, inference_rng, read_path_file,
                    sample_slots, write_path_file)

CHECKPOINT_MAGIC = b"PSCS"
INDEX_MAGIC = b"PSCI"
FORMAT_VERSION = 1

WORD_VOCAB_FILE = "word_vocab.txt"
NODE_VOCAB_FILE = "node_vocab.txt"
TRAIN_PATHS_FILE = "train.paths.jsonl"
TEST_PATHS_FILE = "test.paths.jsonl"

# hyperparameter block layout of the checkpoint file, in order
_HP_FIELDS = (
    ("embed_dim", "i"), ("hidden", "i"), ("query_len", "i"), ("term_len", "i"),
    ("path_len", "i"), ("paths_per_snippet", "i"), ("dropout", "f"),
    ("margin", "f"), ("delta", "f"), ("lr", "f"), ("batch", "i"),
)


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint/index file."""


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the offending batch for diagnosis."""

    def __init__(self, message, batch_ids, loss_history):
        super().__init__(message)
        self.batch_ids = batch_ids
        self.loss_history = loss_history


# -- preprocessing -------------------------------------------------------------

@dataclass
class PreprocessStats:
    total: int = 0
    kept: int = 0
    filtered_annotation: int = 0
    parse_failures: int = 0
    empty_paths: int = 0
    empty_query: int = 0


def preprocess_pairs(pairs, asts=None, max_height=DEFAULT_MAX_HEIGHT,
                     max_width=DEFAULT_MAX_WIDTH, cap=DEFAULT_PATH_CAP,
                     seed=0, log=None):
    """Turn raw pairs into (id, query, paths) records, dropping unusable ones.

    ``asts`` optionally maps record ids to pre-parsed trees (the ingestion
    route for corpora parsed by external tools); everything else goes
    through the built-in parser.
    """
    records = []
    stats = PreprocessStats()
    log = log or (lambda msg: None)
    for pair in pairs:
        stats.total += 1
        if not filter_pair(pair):
            stats.filtered_annotation += 1
            continue
        query = extract_query(pair.annotation)
        if not any(split_subtokens(tok) for tok in query.split()):
            stats.empty_query += 1
            continue
        if asts is not None and pair.id in asts:
            tree = asts[pair.id]
        else:
            try:
                tree = parse_function(pair.code)
            except ParseError as exc:
                stats.parse_failures += 1
                log(f"parse failure for {pair.id}: {exc}")
                continue
        plist = extract_paths(tree, max_height=max_height, max_width=max_width,
                              cap=cap, rng_seed=_stable_seed(pair.id, seed))
        if not plist:
            stats.empty_paths += 1
            log(f"dropping {pair.id}: no paths under the size limits")
            continue
        records.append((pair.id, query, plist))
        stats.kept += 1
    return records, stats


def _stable_seed(text: str, salt: int) -> int:
    digest = hashlib.md5(f"{salt}:{text}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def preprocess_dataset(input_path, out_dir, test_path=None, asts_path=None,
                       test_asts_path=None, min_count=2, word_max_size=30000,
                       node_max_size=500, max_height=DEFAULT_MAX_HEIGHT,
                       max_width=DEFAULT_MAX_WIDTH, cap=DEFAULT_PATH_CAP,
                       seed=0, log=print):
    """Full preprocessing: parse, extract, build vocabularies, write files.

    Vocabularies come from the training split only. Returns the stats pair
    (train, test or None).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run_split(pairs_file, asts_file):
        pairs = read_pairs(pairs_file)
        asts = read_serialized_asts(asts_file) if asts_file else None
        return preprocess_pairs(pairs, asts=asts, max_height=max_height,
                                max_width=max_width, cap=cap, seed=seed, log=log)

    train_records, train_stats = run_split(input_path, asts_path)
    if not train_records:
        raise ValueError("no usable training pairs after preprocessing")
    write_path_file(train_records, out_dir / TRAIN_PATHS_FILE)

    word_vocab = build_vocabulary(_word_token_stream(train_records),
                                  min_count=min_count, max_size=word_max_size,
                                  kind="word")
    node_vocab = build_vocabulary(_node_token_stream(train_records),
                                  min_count=1, max_size=node_max_size,
                                  kind="node")
    word_vocab.save(out_dir / WORD_VOCAB_FILE)
    node_vocab.save(out_dir / NODE_VOCAB_FILE)

    test_stats = None
    if test_path is not None:
        test_records, test_stats = run_split(test_path, test_asts_path)
        write_path_file(test_records, out_dir / TEST_PATHS_FILE)
    log(f"preprocess: train kept {train_stats.kept}/{train_stats.total}, "
        f"word vocab {word_vocab.size}, node vocab {node_vocab.size}"
        + (f", test kept {test_stats.kept}/{test_stats.total}" if test_stats else ""))
    return train_stats, test_stats


def read_serialized_asts(path) -> dict:
    """Load an external serialized-AST JSONL file keyed by record id."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rid, tree = load_serialized_ast(line)
            out[rid] = tree
    return out


def _word_token_stream(records):
    for _, query, plist in records:
        for tok in query.split():
            yield from split_subtokens(tok)
        for p in plist:
            yield from split_subtokens(p.start_terminal)
            yield from split_subtokens(p.end_terminal)


def _node_token_stream(records):
    for _, _, plist in records:
        for p in plist:
            yield from p.node_tokens()


# -- encoded dataset ------------------------------------------------------------

@dataclass
class EncodedSnippet:
    """One snippet with its query and all stored paths encoded to id arrays."""

    id: str
    query: str
    query_ids: np.ndarray    # (q,) int32
    start_ids: np.ndarray    # (P, m) int32
    node_ids: np.ndarray     # (P, l) int32
    end_ids: np.ndarray      # (P, m) int32
    meta: str = ""

    @property
    def n_paths(self) -> int:
        return self.start_ids.shape[0]

    @property
    def query_words(self) -> int:
        return len(self.query.split())


@dataclass
class Dataset:
    word_vocab: Vocabulary
    node_vocab: Vocabulary
    train: list
    test: list


def _encode_records(path_file, word_vocab, node_vocab, hp: HyperParams):
    snippets = []
    fname = Path(path_file).name
    for lineno, (rid, query, plist) in enumerate(read_path_file(path_file), 1):
        try:
            from .corpus import encode_query as encode_query_text

            q_ids = encode_query_text(query, word_vocab, hp.query_len).ids
        except EmptyQueryError:
            continue
        ctxs = [encode_path(p, word_vocab, node_vocab, hp.term_len, hp.path_len)
                for p in plist]
        if not ctxs:
            continue
        snippets.append(EncodedSnippet(
            id=rid, query=query, query_ids=q_ids,
            start_ids=np.stack([c.start_ids for c in ctxs]),
            node_ids=np.stack([c.node_ids for c in ctxs]),
            end_ids=np.stack([c.end_ids for c in ctxs]),
            meta=f"{fname}:{lineno}"))
    return snippets


def load_dataset(data_dir, hp: HyperParams) -> Dataset:
    data_dir = Path(data_dir)
    word_vocab = Vocabulary.load(data_dir / WORD_VOCAB_FILE)
    node_vocab = Vocabulary.load(data_dir / NODE_VOCAB_FILE)
    train = _encode_records(data_dir / TRAIN_PATHS_FILE, word_vocab, node_vocab, hp)
    test_file = data_dir / TEST_PATHS_FILE
    test = _encode_records(test_file, word_vocab, node_vocab, hp) if test_file.exists() else []
    return Dataset(word_vocab=word_vocab, node_vocab=node_vocab, train=train, test=test)


# -- batch assembly -------------------------------------------------------------

def assemble_code_batch(snippets, g: int, rng=None) -> CodeBatch:
    """Pack snippets' paths into the flat batch layout.

    With an rng, paths are freshly sampled (training); without one, each
    snippet uses its deterministic id-seeded stream (offline encoding).
    """
    chosen = []
    for s in snippets:
        r = rng if rng is not None else inference_rng(s.id)
        idx, mask = sample_slots(s.n_paths, g, r)
        chosen.append((s, idx, mask))
    total = sum(len(idx) for _, idx, _ in chosen)
    b = len(snippets)
    m = snippets[0].start_ids.shape[1]
    l = snippets[0].node_ids.shape[1]
    start = np.empty((total, m), dtype=np.int32)
    node = np.empty((total, l), dtype=np.int32)
    end = np.empty((total, m), dtype=np.int32)
    slot_map = np.full((b, g), total, dtype=np.int64)
    path_mask = np.zeros((b, g), dtype=bool)
    r0 = 0
    for bi, (s, idx, mask) in enumerate(chosen):
        n = len(idx)
        start[r0:r0 + n] = s.start_ids[idx]
        node[r0:r0 + n] = s.node_ids[idx]
        end[r0:r0 + n] = s.end_ids[idx]
        slot_map[bi, :n] = np.arange(r0, r0 + n)
        path_mask[bi] = mask
        r0 += n
    return CodeBatch(start_ids=start, node_ids=node, end_ids=end,
                     slot_map=slot_map, path_mask=path_mask)


def sample_negative(batch_size: int, i: int, rng: np.random.Generator) -> int:
    """Uniform index j != i within the batch."""
    if batch_size < 2:
        raise ValueError("cannot sample a negative from a batch of size 1")
    j = int(rng.integers(batch_size - 1))
    return j + 1 if j >= i else j


# -- training --------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 50
    seed: int = 0
    checkpoint_every: int = 0      # 0 disables periodic checkpoints
    patience: int = 5              # early-stop patience on validation MRR
    valid_fraction: float = 0.05
    hp: HyperParams = field(default_factory=HyperParams)
    ablation: AblationConfig = field(default_factory=AblationConfig)


@dataclass
class EpochLog:
    epoch: int
    loss: float
    val_mrr: float | None
    seconds: float


def _valid_split(snippets, fraction: float):
    """Deterministic id-hash holdout; returns (train, valid)."""
    threshold = int(round(fraction * 100))
    if threshold <= 0:
        return list(snippets), []
    train, valid = [], []
    for s in snippets:
        bucket = int.from_bytes(hashlib.md5(s.id.encode("utf-8")).digest()[:4], "little") % 100
        (valid if bucket < threshold else train).append(s)
    return train, valid


def train(config: TrainConfig, dataset: Dataset, out_dir=None, log=print,
          initial_params: ModelParams | None = None):
    """Run the training loop; returns (params, history).

    Writes ``model.pscs`` (the best validation checkpoint, or the final one
    without a validation split) plus ``metrics.jsonl`` under ``out_dir``,
    and ``epoch_NNNN.pscs`` files when ``checkpoint_every`` is set.
    ``initial_params`` warm-starts from an earlier run instead of a fresh
    seeded initialization.
    """
    hp = config.hp
    train_snips, valid_snips = _valid_split(dataset.train, config.valid_fraction)
    if not train_snips:
        raise ValueError("empty training split")
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    params = initial_params if initial_params is not None else ModelParams.initialize(
        hp, config.ablation, dataset.word_vocab.size, dataset.node_vocab.size,
        np.random.default_rng([config.seed, 0]))
    adam = nm.AdamState(lr=hp.lr)

    history = []
    best_mrr = -1.0
    best_params = None
    best_epoch = -1
    stale = 0
    loss_history = []

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        rng = np.random.default_rng([config.seed, 1, epoch])
        order = rng.permutation(len(train_snips))
        losses = []
        for lo in range(0, len(order), hp.batch):
            batch_idx = order[lo:lo + hp.batch]
            if len(batch_idx) < 2:
                continue
            batch = [train_snips[i] for i in batch_idx]
            loss_val = _train_step(batch, params, hp, config.ablation, adam, rng)
            losses.append(loss_val)
            loss_history.append(loss_val)
            if not np.isfinite(loss_val):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}",
                    batch_ids=[s.id for s in batch],
                    loss_history=loss_history[-20:])
        epoch_loss = float(np.mean(losses)) if losses else float("nan")

        val_mrr = None
        if valid_snips:
            val_mrr = _validation_mrr(valid_snips, params, hp, config.ablation)
        seconds = time.perf_counter() - t0
        entry = EpochLog(epoch=epoch, loss=epoch_loss, val_mrr=val_mrr, seconds=seconds)
        history.append(entry)
        log(f"epoch {epoch}: loss {epoch_loss:.4f}"
            + (f", val MRR {val_mrr:.4f}" if val_mrr is not None else "")
            + f" ({seconds:.1f}s)")
        if out_dir is not None and config.checkpoint_every > 0 \
                and (epoch + 1) % config.checkpoint_every == 0:
            checkpoint_save(out_dir / f"epoch_{epoch:04d}.pscs", params, hp, config.ablation)

        if val_mrr is not None:
            if val_mrr > best_mrr:
                best_mrr = val_mrr
                best_epoch = epoch
                best_params = {k: t.data.copy() for k, t in params.tensors.items()}
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    log(f"early stop at epoch {epoch} (best validation MRR "
                        f"{best_mrr:.4f} at epoch {best_epoch})")
                    break

    if best_params is not None:
        for k, t in params.tensors.items():
            t.data = best_params[k]
    if out_dir is not None:
        checkpoint_save(out_dir / "model.pscs", params, hp, config.ablation)
        with open(out_dir / "metrics.jsonl", "w", encoding="utf-8") as fh:
            for e in history:
                fh.write(json.dumps({"epoch": e.epoch, "loss": e.loss,
                                     "val_mrr": e.val_mrr, "seconds": e.seconds}) + "\n")
    return params, history


def _train_step(batch, params, hp, ablation, adam, rng):
    b = len(batch)
    code_batch = assemble_code_batch(batch, hp.paths_per_snippet, rng)
    query_ids = np.stack([s.query_ids for s in batch])
    neg = np.array([sample_negative(b, i, rng) for i in range(b)], dtype=np.int64)

    v_code = md.encode_code_batch(code_batch, params, hp, True, rng, ablation)
    v_query = md.encode_query_batch(query_ids, params, hp, ablation)
    v_neg = nm.gather_rows(v_query, neg)
    loss = md.ranking_loss_batch(v_query, v_neg, v_code, hp.margin, hp.delta)
    loss_val = float(loss.data)
    backward(loss)
    nm.adam_step(params.tensors, adam)
    params.zero_grads()
    return loss_val


def encode_corpus(snippets, params, hp, ablation, chunk: int = 128):
    """Deterministically encode snippets to unit-normalized vectors.

    Returns (ids, vectors); snippets whose encoding fails are skipped (none
    should, post-preprocessing).
    """
    ids = []
    rows = []
    with nm.no_grad():
        for lo in range(0, len(snippets), chunk):
            part = snippets[lo:lo + chunk]
            batch = assemble_code_batch(part, hp.paths_per_snippet, rng=None)
            vecs = md.encode_code_batch(batch, params, hp, False, None, ablation).data
            rows.append(vecs)
            ids.extend(s.id for s in part)
    vectors = np.concatenate(rows, axis=0).astype(np.float32)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    vectors /= np.maximum(norms, hp.delta)
    return ids, vectors


def encode_queries(snippets, params, hp, ablation, chunk: int = 1024):
    rows = []
    with nm.no_grad():
        for lo in range(0, len(snippets), chunk):
            part = snippets[lo:lo + chunk]
            q = np.stack([s.query_ids for s in part])
            rows.append(md.encode_query_batch(q, params, hp, ablation).data)
    return np.concatenate(rows, axis=0).astype(np.float32)


def _validation_mrr(valid, params, hp, ablation, k: int = 10):
    ids, vectors = encode_corpus(valid, params, hp, ablation)
    queries = encode_queries(valid, params, hp, ablation)
    qnorm = np.linalg.norm(queries, axis=1, keepdims=True)
    queries = queries / np.maximum(qnorm, hp.delta)
    id_arr = np.array(ids)
    total = 0.0
    for qi, snip in enumerate(valid):
        scores = vectors @ queries[qi]
        rank = _rank_of(scores, id_arr, snip.id)
        if rank is not None and rank <= k:
            total += 1.0 / rank
    return total / len(valid)


def _rank_of(scores, id_arr, target_id):
    """1-based rank of target under descending score, ties by ascending id."""
    hits = np.flatnonzero(id_arr == target_id)
    if hits.size == 0:
        return None
    t = hits[0]
    s = scores[t]
    better = int((scores > s).sum())
    tied_before = int(((scores == s) & (id_arr < target_id)).sum())
    return better + tied_before + 1


# -- checkpoints -----------------------------------------------------------------

def checkpoint_save(path, params: ModelParams, hp: HyperParams,
                    ablation: AblationConfig):
    """Write the bit-exact checkpoint: magic, version, hyperparameters,
    ablation bits, then the named tensor table in sorted order."""
    buf = [CHECKPOINT_MAGIC, struct.pack("<i", FORMAT_VERSION)]
    for name, kind in _HP_FIELDS:
        value = getattr(hp, name)
        buf.append(struct.pack("<" + kind, value))
    buf.append(struct.pack("<i", ablation.to_bits()))
    for name in sorted(params.tensors):
        data = np.ascontiguousarray(params.tensors[name].data, dtype="<f4")
        name_b = name.encode("utf-8")
        buf.append(struct.pack("<H", len(name_b)))
        buf.append(name_b)
        buf.append(struct.pack("<B", data.ndim))
        buf.append(struct.pack(f"<{data.ndim}i", *data.shape))
        buf.append(data.tobytes())
    Path(path).write_bytes(b"".join(buf))


def checkpoint_load(path):
    """Read a checkpoint; returns (ModelParams, HyperParams, AblationConfig)."""
    blob = Path(path).read_bytes()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(blob):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = blob[off:off + n]
        off += n
        return out

    if take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    version = struct.unpack("<i", take(4))[0]
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version}, expected {FORMAT_VERSION}")
    hp_values = {}
    for name, kind in _HP_FIELDS:
        raw = struct.unpack("<" + kind, take(4))[0]
        hp_values[name] = raw if kind == "f" else int(raw)
    hp = HyperParams(**hp_values)
    ablation = AblationConfig.from_bits(struct.unpack("<i", take(4))[0])

    tensors = {}
    while off < len(blob):
        name_len = struct.unpack("<H", take(2))[0]
        name = take(name_len).decode("utf-8")
        ndim = struct.unpack("<B", take(1))[0]
        shape = struct.unpack(f"<{ndim}i", take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape)
        tensors[name] = Tensor(data.copy(), requires_grad=True)
    return ModelParams(tensors), hp, ablation


# -- index and search ------------------------------------------------------------

@dataclass
class SearchIndex:
    ids: list
    vectors: np.ndarray          # (n, d) float32, unit rows
    meta: dict                   # id -> provenance/preview string
    word_vocab: Vocabulary | None = None

    def __post_init__(self):
        self._id_arr = np.array(self.ids)

    @property
    def id_array(self):
        return self._id_arr


@dataclass
class SearchResult:
    query: str
    hits: list                   # [(id, score)] descending score


def build_index(snippets, params, hp, ablation,
                word_vocab: Vocabulary | None = None, log=print) -> SearchIndex:
    """Offline-encode a snippet corpus into the search index."""
    if not snippets:
        raise ValueError("cannot index an empty corpus")
    ids, vectors = encode_corpus(snippets, params, hp, ablation)
    meta = {s.id: f"{s.meta} {s.query}".strip() for s in snippets}
    log(f"indexed {len(ids)} snippets (d={vectors.shape[1]})")
    return SearchIndex(ids=ids, vectors=vectors, meta=meta, word_vocab=word_vocab)


def search(query_text: str, index: SearchIndex, params: ModelParams,
           hp: HyperParams, ablation: AblationConfig,
           word_vocab: Vocabulary | None = None, k: int = 10) -> SearchResult:
    """Top-k retrieval by cosine against the unit-normalized index rows."""
    vocab = word_vocab or index.word_vocab
    if vocab is None:
        raise ValueError("no word vocabulary available for query encoding")
    from .corpus import encode_query as encode_query_text

    normalized = extract_query(query_text)
    tokens = encode_query_text(normalized, vocab, hp.query_len)
    with nm.no_grad():
        v = md.encode_query(tokens, params, hp, ablation).data.astype(np.float32)
    v = v / max(float(np.linalg.norm(v)), hp.delta)
    scores = index.vectors @ v
    order = np.lexsort((index.id_array, -scores))
    top = order[:k]
    return SearchResult(query=normalized,
                        hits=[(str(index.id_array[t]), float(scores[t])) for t in top])


def index_save(path, index: SearchIndex):
    """Write the index: magic, version, n, d, id table, then the vector
    payload; preview and vocabulary sections follow as trailing extensions
    so a search process needs only this file plus a checkpoint."""
    n, d = index.vectors.shape
    buf = [INDEX_MAGIC, struct.pack("<i", FORMAT_VERSION), struct.pack("<ii", n, d)]
    for sid in index.ids:
        b = str(sid).encode("utf-8")
        buf.append(struct.pack("<H", len(b)))
        buf.append(b)
    buf.append(np.ascontiguousarray(index.vectors, dtype="<f4").tobytes())
    for sid in index.ids:
        b = index.meta.get(sid, "").encode("utf-8")
        buf.append(struct.pack("<I", len(b)))
        buf.append(b)
    vocab_blob = (index.word_vocab.dumps() if index.word_vocab else "").encode("utf-8")
    buf.append(struct.pack("<I", len(vocab_blob)))
    buf.append(vocab_blob)
    Path(path).write_bytes(b"".join(buf))


def index_load(path) -> SearchIndex:
    blob = Path(path).read_bytes()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(blob):
            raise CheckpointError(f"{path}: truncated index")
        out = blob[off:off + n]
        off += n
        return out

    if take(4) != INDEX_MAGIC:
        raise CheckpointError(f"{path}: bad magic, not an index file")
    version = struct.unpack("<i", take(4))[0]
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    n, d = struct.unpack("<ii", take(8))
    ids = []
    for _ in range(n):
        length = struct.unpack("<H", take(2))[0]
        ids.append(take(length).decode("utf-8"))
    vectors = np.frombuffer(take(4 * n * d), dtype="<f4").reshape(n, d).copy()
    meta = {}
    word_vocab = None
    if off < len(blob):
        for sid in ids:
            length = struct.unpack("<I", take(4))[0]
            meta[sid] = take(length).decode("utf-8")
        length = struct.unpack("<I", take(4))[0]
        if length:
            word_vocab = Vocabulary.loads(take(length).decode("utf-8"))
    return SearchIndex(ids=ids, vectors=vectors, meta=meta, word_vocab=word_vocab)
