"""Path-based semantic code search.

Queries and code snippets embed into one vector space: the code side
encodes leaf-to-leaf syntax-tree paths (terminal subtokens plus a
directed-node recurrence with attentive fusion), the query side an
attention-weighted average of shared word embeddings. Retrieval is cosine
against a pre-encoded corpus.
"""

__version__ = "0.1.0"
