"""The dual-encoder retrieval model.

Code side: each sampled path is the sum of its start-terminal subtoken
embeddings, a bi-directional recurrence over its directed node sequence
(final states concatenated), and the end-terminal sum, concatenated and
dropout-regularized. Paths are fused by attention against their mean and
projected to the joint space. Query side: attention-weighted average of
word embeddings, sharing the code side's word embedding matrix. Training
minimizes a pairwise cosine hinge between the true query and a random one.

Ablation switches remove individual features/components to measure their
contribution; every variant still embeds into the same joint dimension.
"""

from dataclasses import dataclass, field, fields

import numpy as np

from . import numerics as nm
from .corpus import QueryTokens
from .numerics import LstmWeights, Tensor
from .paths import PathBag


@dataclass(frozen=True)
class HyperParams:
    """Model and optimizer constants (defaults are the standard setup)."""

    embed_dim: int = 128          # word and node embedding size d
    hidden: int = 128             # recurrence hidden size per direction
    query_len: int = 20           # padded query length q
    term_len: int = 5             # subtokens kept per terminal m
    path_len: int = 12            # directed nodes kept per path l
    paths_per_snippet: int = 100  # sampled paths per snippet g
    dropout: float = 0.25
    margin: float = 1.0           # ranking loss margin
    delta: float = 1e-8           # cosine division clamp
    lr: float = 1e-4
    batch: int = 64

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0 and f.name != "dropout":
                raise ValueError(f"{f.name} must be positive")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError("dropout must be in [0, 1)")

    def replace(self, **kwargs) -> "HyperParams":
        import dataclasses

        return dataclasses.replace(self, **kwargs)


_ABLATION_FLAGS = (
    "tokens_only",
    "nodes_only",
    "no_code_attention",
    "no_query_attention",
    "no_shared_embedding",
    "no_bilstm",
)


@dataclass(frozen=True)
class AblationConfig:
    tokens_only: bool = False
    nodes_only: bool = False
    no_code_attention: bool = False
    no_query_attention: bool = False
    no_shared_embedding: bool = False
    no_bilstm: bool = False

    def __post_init__(self):
        if self.tokens_only and self.nodes_only:
            raise ValueError("tokens_only and nodes_only cannot be combined")

    @property
    def is_full(self) -> bool:
        return not any(getattr(self, f) for f in _ABLATION_FLAGS)

    def active_flags(self) -> list:
        return [f for f in _ABLATION_FLAGS if getattr(self, f)]

    def __str__(self):
        return ",".join(self.active_flags()) or "full"

    @classmethod
    def from_flags(cls, spec: str) -> "AblationConfig":
        """Parse a comma-separated flag list; "" or "full" means no ablation."""
        spec = (spec or "").strip()
        if spec in ("", "full"):
            return cls()
        values = {}
        for name in spec.split(","):
            name = name.strip()
            if name not in _ABLATION_FLAGS:
                raise ValueError(
                    f"unknown ablation flag {name!r}; known: {', '.join(_ABLATION_FLAGS)}")
            values[name] = True
        return cls(**values)

    def to_bits(self) -> int:
        return sum(1 << i for i, f in enumerate(_ABLATION_FLAGS) if getattr(self, f))

    @classmethod
    def from_bits(cls, bits: int) -> "AblationConfig":
        return cls(**{f: bool(bits >> i & 1) for i, f in enumerate(_ABLATION_FLAGS)})


def path_width(hp: HyperParams, ablation: AblationConfig) -> int:
    """Width of one fused path vector under the given ablation."""
    if ablation.tokens_only:
        return 2 * hp.embed_dim
    if ablation.nodes_only:
        return 2 * hp.hidden
    return 2 * hp.embed_dim + 2 * hp.hidden


class ModelParams:
    """All trainable tensors, keyed by the checkpoint tensor names."""

    def __init__(self, tensors: dict):
        self.tensors = tensors

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    @property
    def word_vocab_size(self) -> int:
        return self.tensors["e1"].data.shape[0]

    def lstm(self, direction: str) -> LstmWeights:
        return LstmWeights(wx=self.tensors[f"lstm_{direction}.wx"],
                           wh=self.tensors[f"lstm_{direction}.wh"],
                           b=self.tensors[f"lstm_{direction}.b"])

    def zero_grads(self):
        for t in self.tensors.values():
            t.zero_grad()

    @classmethod
    def initialize(cls, hp: HyperParams, ablation: AblationConfig,
                   word_vocab_size: int, node_vocab_size: int,
                   rng: np.random.Generator) -> "ModelParams":
        """Fresh parameters: embeddings U(-0.1, 0.1), matrices U(+-1/sqrt(fan_in)),
        forget-gate bias 1. Creation order is fixed so a seed pins the values."""
        d, h = hp.embed_dim, hp.hidden
        width = path_width(hp, ablation)
        t = {}
        t["e1"] = Tensor(nm.uniform_init(rng, (word_vocab_size, d), 0.1), requires_grad=True)
        if ablation.no_shared_embedding:
            t["e1_query"] = Tensor(nm.uniform_init(rng, (word_vocab_size, d), 0.1),
                                   requires_grad=True)
        uses_nodes = not ablation.tokens_only
        if uses_nodes:
            t["e2"] = Tensor(nm.uniform_init(rng, (node_vocab_size, d), 0.1),
                             requires_grad=True)
            if ablation.no_bilstm:
                t["w_node_proj"] = Tensor(nm.fan_in_init(rng, (2 * h, d)), requires_grad=True)
            else:
                for direction in ("fwd", "bwd"):
                    t[f"lstm_{direction}.wx"] = Tensor(nm.fan_in_init(rng, (4 * h, d)),
                                                       requires_grad=True)
                    t[f"lstm_{direction}.wh"] = Tensor(nm.fan_in_init(rng, (4 * h, h)),
                                                       requires_grad=True)
                    bias = np.zeros(4 * h, dtype=nm.DTYPE)
                    bias[h:2 * h] = 1.0
                    t[f"lstm_{direction}.b"] = Tensor(bias, requires_grad=True)
        if not ablation.no_code_attention:
            t["w_a"] = Tensor(nm.fan_in_init(rng, (width, width)), requires_grad=True)
        if not ablation.no_query_attention:
            t["w_b"] = Tensor(nm.fan_in_init(rng, (d, d)), requires_grad=True)
        t["w_fuse"] = Tensor(nm.fan_in_init(rng, (d, width)), requires_grad=True)
        return cls(t)


# -- batched encoders (the training/indexing hot path) -------------------------

@dataclass
class CodeBatch:
    """A batch of snippets with their sampled paths packed flat.

    Only real paths occupy rows 0..R-1; ``slot_map`` points each of the
    B x g bag slots at its row, with padded slots pointing at the zero row R.
    """

    start_ids: np.ndarray   # (R, m) int32
    node_ids: np.ndarray    # (R, l) int32
    end_ids: np.ndarray     # (R, m) int32
    slot_map: np.ndarray    # (B, g) int64
    path_mask: np.ndarray   # (B, g) bool

    @property
    def n_snippets(self) -> int:
        return self.path_mask.shape[0]


def encode_code_batch(batch: CodeBatch, params: ModelParams, hp: HyperParams,
                      train: bool, rng, ablation: AblationConfig) -> Tensor:
    """Encode a CodeBatch into (B, d) joint-space vectors."""
    if not batch.path_mask.any(axis=1).all():
        bad = int(np.flatnonzero(~batch.path_mask.any(axis=1))[0])
        raise ValueError(f"snippet {bad} in batch has no real paths")
    flat = _encode_paths_flat(batch, params, hp, ablation)
    flat = nm.dropout(flat, hp.dropout, train, rng)

    b, g = batch.path_mask.shape
    width = flat.data.shape[1]
    zero_row = Tensor(np.zeros((1, width), dtype=flat.data.dtype))
    slots = nm.gather_rows(nm.concat([flat, zero_row], axis=0), batch.slot_map)

    counts = batch.path_mask.sum(axis=1).astype(flat.data.dtype)
    inv_counts = (1.0 / counts)[:, None]
    # padded slots hold zero rows, so the masked sum is a plain sum
    context = nm.mul(nm.reduce_sum(slots, axis=1), inv_counts)

    if ablation.no_code_attention:
        alpha_const = (batch.path_mask.astype(flat.data.dtype) * inv_counts)
        fused = nm.reduce_sum(nm.mul(slots, alpha_const[:, :, None]), axis=1)
    else:
        # (W_a e) . c == e . (W_a^T c): project the context once per snippet
        ctx_proj = nm.matmul(context, params["w_a"])
        scores = nm.reduce_sum(nm.mul(slots, nm.reshape(ctx_proj, (b, 1, width))), axis=-1)
        alpha = nm.softmax(scores, batch.path_mask)
        fused = nm.reduce_sum(nm.mul(slots, nm.reshape(alpha, (b, g, 1))), axis=1)
    return nm.linear(fused, params["w_fuse"])


def _encode_paths_flat(batch: CodeBatch, params: ModelParams, hp: HyperParams,
                       ablation: AblationConfig) -> Tensor:
    parts = []
    if not ablation.nodes_only:
        parts.append(_sum_subtokens(batch.start_ids, params["e1"]))
    if not ablation.tokens_only:
        node_mask = batch.node_ids != 0
        xs = nm.embedding_lookup(params["e2"], batch.node_ids, node_mask)
        if ablation.no_bilstm:
            counts = np.maximum(node_mask.sum(axis=1), 1).astype(xs.data.dtype)
            mean_node = nm.mul(nm.reduce_sum(xs, axis=1), (1.0 / counts)[:, None])
            e_node = nm.linear(mean_node, params["w_node_proj"])
        else:
            _, h_fwd, h_bwd = nm.bilstm(xs, node_mask, params.lstm("fwd"),
                                        params.lstm("bwd"), return_sequence=False)
            e_node = nm.concat([h_fwd, h_bwd], axis=-1)
        if ablation.nodes_only:
            return e_node
        parts.insert(1, e_node)
    if not ablation.nodes_only:
        parts.append(_sum_subtokens(batch.end_ids, params["e1"]))
    return nm.concat(parts, axis=-1)


def _sum_subtokens(ids: np.ndarray, table: Tensor) -> Tensor:
    emb = nm.embedding_lookup(table, ids, ids != 0)
    return nm.reduce_sum(emb, axis=1)


def encode_query_batch(query_ids: np.ndarray, params: ModelParams,
                       hp: HyperParams, ablation: AblationConfig) -> Tensor:
    """Encode (B, q) padded query ids into (B, d) joint-space vectors."""
    mask = query_ids != 0
    if not mask.any(axis=1).all():
        bad = int(np.flatnonzero(~mask.any(axis=1))[0])
        raise ValueError(f"query {bad} in batch has no real tokens")
    table = params["e1_query"] if ablation.no_shared_embedding else params["e1"]
    emb = nm.embedding_lookup(table, query_ids, mask)
    b, q = query_ids.shape
    d = emb.data.shape[-1]
    counts = mask.sum(axis=1).astype(emb.data.dtype)
    inv_counts = (1.0 / counts)[:, None]
    context = nm.mul(nm.reduce_sum(emb, axis=1), inv_counts)
    if ablation.no_query_attention:
        beta_const = mask.astype(emb.data.dtype) * inv_counts
        return nm.reduce_sum(nm.mul(emb, beta_const[:, :, None]), axis=1)
    ctx_proj = nm.matmul(context, params["w_b"])
    scores = nm.reduce_sum(nm.mul(emb, nm.reshape(ctx_proj, (b, 1, d))), axis=-1)
    beta = nm.softmax(scores, mask)
    return nm.reduce_sum(nm.mul(emb, nm.reshape(beta, (b, q, 1))), axis=1)


def ranking_loss_batch(v_query_pos: Tensor, v_query_neg: Tensor, v_code: Tensor,
                       margin: float, delta: float) -> Tensor:
    """Mean pairwise hinge over a batch of triples."""
    sim_pos = nm.cosine(v_query_pos, v_code, delta)
    sim_neg = nm.cosine(v_query_neg, v_code, delta)
    margin_t = Tensor(np.full(sim_pos.data.shape, margin, dtype=sim_pos.data.dtype))
    return nm.mean(nm.relu(nm.add(nm.sub(margin_t, sim_pos), sim_neg)))


# -- single-example surface -----------------------------------------------------

def encode_terminal(subtoken_ids, mask, e1: Tensor) -> Tensor:
    """Sum the embeddings of one terminal's real subtokens; (d,) vector."""
    emb = nm.embedding_lookup(e1, np.asarray(subtoken_ids), mask)
    return nm.reduce_sum(emb, axis=0)


def encode_nodes(node_ids, mask, e2: Tensor, fwd: LstmWeights, bwd: LstmWeights) -> Tensor:
    """Embed one directed node sequence and return [h_fwd_last | h_bwd_first]."""
    ids = np.asarray(node_ids)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty node sequence")
    xs = nm.embedding_lookup(e2, ids[None, :], mask[None, :])
    _, h_fwd, h_bwd = nm.bilstm(xs, mask[None, :], fwd, bwd, return_sequence=False)
    return nm.reshape(nm.concat([h_fwd, h_bwd], axis=-1), (2 * fwd.hidden,))


def encode_path_vector(ctx, params: ModelParams, hp: HyperParams,
                       train: bool, rng) -> Tensor:
    """One path's fused vector [e_start | e_node | e_end] with dropout."""
    e_start = encode_terminal(ctx.start_ids, ctx.start_mask, params["e1"])
    e_node = encode_nodes(ctx.node_ids, ctx.node_mask, params["e2"],
                          params.lstm("fwd"), params.lstm("bwd"))
    e_end = encode_terminal(ctx.end_ids, ctx.end_mask, params["e1"])
    vec = nm.concat([e_start, e_node, e_end], axis=-1)
    return nm.dropout(vec, hp.dropout, train, rng)


def attend_paths(path_vectors: Tensor, path_mask, w_a: Tensor) -> Tensor:
    """Attention weights over one snippet's (g, D) path vectors."""
    mask = np.asarray(path_mask, dtype=bool)
    g, width = path_vectors.data.shape
    count = float(mask.sum())
    masked = nm.mul(path_vectors, mask[:, None].astype(path_vectors.data.dtype))
    context = nm.mul(nm.reduce_sum(masked, axis=0, keepdims=True), 1.0 / count)
    ctx_proj = nm.matmul(context, w_a)                       # (1, D)
    scores = nm.reduce_sum(nm.mul(path_vectors, ctx_proj), axis=-1)
    return nm.softmax(scores, mask)


def encode_code(bag: PathBag, params: ModelParams, hp: HyperParams,
                train: bool, rng, ablation: AblationConfig = AblationConfig()) -> Tensor:
    """Encode one snippet's PathBag to its (d,) joint-space vector."""
    if not bag.contexts:
        raise ValueError(f"snippet {bag.code_id!r}: bag has no real paths")
    batch = code_batch_from_bags([bag], hp)
    return nm.reshape(encode_code_batch(batch, params, hp, train, rng, ablation),
                      (hp.embed_dim,))


def encode_query(tokens: QueryTokens, params: ModelParams, hp: HyperParams,
                 ablation: AblationConfig = AblationConfig()) -> Tensor:
    """Encode one padded query to its (d,) joint-space vector."""
    return nm.reshape(
        encode_query_batch(tokens.ids[None, :], params, hp, ablation),
        (hp.embed_dim,))


def ranking_loss(v_q_pos: Tensor, v_q_neg: Tensor, v_code: Tensor,
                 margin: float, delta: float) -> Tensor:
    """max(0, margin - cos(q+, c) + cos(q-, c)) for one triple."""
    sim_pos = nm.cosine(v_q_pos, v_code, delta)
    sim_neg = nm.cosine(v_q_neg, v_code, delta)
    margin_t = Tensor(np.asarray(margin, dtype=sim_pos.data.dtype))
    return nm.relu(nm.add(nm.sub(margin_t, sim_pos), sim_neg))


def code_batch_from_bags(bags: list, hp: HyperParams) -> CodeBatch:
    """Pack PathBags into the flat batch layout."""
    g = len(bags[0].path_mask)
    rows_start, rows_node, rows_end = [], [], []
    slot_map = np.empty((len(bags), g), dtype=np.int64)
    mask = np.zeros((len(bags), g), dtype=bool)
    r = 0
    total = sum(len(b.contexts) for b in bags)
    for bi, bag in enumerate(bags):
        n = len(bag.contexts)
        for ctx in bag.contexts:
            rows_start.append(ctx.start_ids)
            rows_node.append(ctx.node_ids)
            rows_end.append(ctx.end_ids)
        slot_map[bi, :n] = np.arange(r, r + n)
        slot_map[bi, n:] = total          # the zero row appended after real rows
        mask[bi, :n] = True
        r += n
    return CodeBatch(start_ids=np.stack(rows_start),
                     node_ids=np.stack(rows_node),
                     end_ids=np.stack(rows_end),
                     slot_map=slot_map,
                     path_mask=mask)
