"""Method-level syntax trees: arena representation, validation, JSON-lines IO.

Trees come either from the built-in parser (see ``pscs.parser``) or from the
serialized format below, which lets externally parsed corpora flow in:

    {"id": str, "nodes": [{"label": str, "children": [int, ...]}, ...], "root": int}

Terminals are the nodes with no children; their label is the identifier or
literal text. Node ids equal positions in the ``nodes`` array, pre-order.
"""

import json
from dataclasses import dataclass

# Versioned label inventory of the built-in parser (v1). The node vocabulary
# depends on these strings staying stable.
NODE_LABELS = (
    "MethodDeclaration",
    "Modifier",
    "PrimitiveType",
    "SimpleType",
    "ArrayType",
    "FormalParameter",
    "SimpleName",
    "Block",
    "EmptyStatement",
    "IfStatement",
    "ForStatement",
    "WhileStatement",
    "ReturnStatement",
    "VariableDeclarationStatement",
    "VariableDeclarationFragment",
    "ExpressionStatement",
    "MethodInvocation",
    "FieldAccess",
    "ThisExpression",
    "Assignment",
    "InfixExpression",
    "PrefixExpression",
    "PostfixExpression",
    "ParenthesizedExpression",
    "NumberLiteral",
    "StringLiteral",
    "BooleanLiteral",
    "NullLiteral",
)

STRING_PLACEHOLDER = "STR"


class AstError(ValueError):
    """Raised for malformed serialized trees."""


@dataclass
class AstNode:
    id: int
    label: str
    children: tuple
    is_terminal: bool


@dataclass
class Ast:
    nodes: list        # AstNode arena, ids == positions, pre-order
    root: int
    leaf_order: tuple  # terminal ids, left-to-right source order

    @classmethod
    def from_arena(cls, labels_children, root: int) -> "Ast":
        """Build from [(label, child_ids), ...]; derives terminal flags and leaf order."""
        nodes = [
            AstNode(id=i, label=lab, children=tuple(ch), is_terminal=not ch)
            for i, (lab, ch) in enumerate(labels_children)
        ]
        tree = cls(nodes=nodes, root=root, leaf_order=())
        tree.leaf_order = tree._compute_leaf_order()
        return tree

    def _compute_leaf_order(self) -> tuple:
        order = []
        stack = [self.root]
        pops = 0
        # the margin lets shared-node arenas build, so validate_ast can name
        # the precise violation; only runaway cycles are cut here
        limit = 10 * len(self.nodes) + 10
        while stack:
            nid = stack.pop()
            pops += 1
            if pops > limit:
                raise ValueError("cyclic node references in tree")
            node = self.nodes[nid]
            if node.is_terminal:
                order.append(nid)
            else:
                stack.extend(reversed(node.children))
        return tuple(order)

    def parents(self) -> list:
        """Parent id per node (-1 for root). Assumes a valid tree."""
        par = [-1] * len(self.nodes)
        for node in self.nodes:
            for c in node.children:
                par[c] = node.id
        return par

    def depths(self) -> list:
        """Edge count from root, per node."""
        depth = [0] * len(self.nodes)
        stack = [self.root]
        while stack:
            nid = stack.pop()
            for c in self.nodes[nid].children:
                depth[c] = depth[nid] + 1
                stack.append(c)
        return depth


def validate_ast(ast: Ast):
    """Check every structural invariant; return None if ok, else the first
    violation as a message string."""
    n = len(ast.nodes)
    if n == 0:
        return "empty node arena"
    if not (0 <= ast.root < n):
        return f"root id {ast.root} out of range [0, {n})"
    for i, node in enumerate(ast.nodes):
        if node.id != i:
            return f"node at position {i} carries id {node.id}"
        if node.is_terminal != (len(node.children) == 0):
            if node.children:
                return f"node {i} marked terminal but has children"
            return f"node {i} marked non-terminal but has no children"
        if node.is_terminal and not node.label:
            return f"terminal node {i} has empty label"
        for c in node.children:
            if not (0 <= c < n):
                return f"node {i} references child {c} out of range"

    indegree = [0] * n
    for node in ast.nodes:
        for c in node.children:
            indegree[c] += 1
    if indegree[ast.root] != 0:
        return f"root {ast.root} has a parent"
    for i, d in enumerate(indegree):
        if i != ast.root and d == 0:
            return f"node {i} unreachable (no parent, not root)"
        if d > 1:
            return f"node {i} has {d} parents"

    # single-parent + root-reachability above rule out cycles iff every node
    # is visited exactly once from the root
    seen = set()
    stack = [ast.root]
    while stack:
        nid = stack.pop()
        if nid in seen:
            return f"cycle through node {nid}"
        seen.add(nid)
        stack.extend(ast.nodes[nid].children)
    if len(seen) != n:
        return f"{n - len(seen)} nodes unreachable from root"

    expected = ast._compute_leaf_order()
    if tuple(ast.leaf_order) != expected:
        return "leaf_order does not match in-order leaf sequence"
    if not ast.leaf_order:
        return "tree has no terminals"
    return None


def serialize_ast(record_id: str, ast: Ast) -> str:
    """One JSON line of the serialized-AST interchange format."""
    nodes = [{"label": nd.label, "children": list(nd.children)} for nd in ast.nodes]
    return json.dumps({"id": record_id, "nodes": nodes, "root": ast.root})


def load_serialized_ast(record: str):
    """Parse one serialized-AST line; returns (record_id, Ast).

    Rejects malformed records, cyclic references, and inconsistent terminal
    flags, naming the record id where one could be read.
    """
    try:
        obj = json.loads(record)
    except json.JSONDecodeError as exc:
        raise AstError(f"unparseable AST record: {exc}") from exc
    rid = str(obj.get("id", "<missing id>"))
    try:
        raw_nodes = obj["nodes"]
        root = obj["root"]
    except (KeyError, TypeError) as exc:
        raise AstError(f"record {rid}: missing nodes/root") from exc
    if not isinstance(raw_nodes, list) or not isinstance(root, int):
        raise AstError(f"record {rid}: nodes must be a list and root an int")

    arena = []
    for i, nd in enumerate(raw_nodes):
        try:
            label = nd["label"]
            children = nd["children"]
        except (KeyError, TypeError) as exc:
            raise AstError(f"record {rid}: node {i} missing label/children") from exc
        if not isinstance(label, str) or not isinstance(children, list):
            raise AstError(f"record {rid}: node {i} has bad field types")
        # optional explicit terminal flag must agree with children emptiness
        if "terminal" in nd and bool(nd["terminal"]) != (len(children) == 0):
            raise AstError(f"record {rid}: node {i} terminal flag contradicts children")
        for c in children:
            if not isinstance(c, int) or not (0 <= c < len(raw_nodes)):
                raise AstError(f"record {rid}: node {i} child {c!r} out of range")
        arena.append((label, children))
    if not (0 <= root < len(raw_nodes)):
        raise AstError(f"record {rid}: root {root} out of range")

    try:
        ast = Ast.from_arena(arena, root)
    except (IndexError, ValueError) as exc:
        raise AstError(f"record {rid}: broken tree structure: {exc}") from exc
    problem = validate_ast(ast)
    if problem is not None:
        raise AstError(f"record {rid}: {problem}")
    return rid, ast
