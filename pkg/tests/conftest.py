import numpy as np
import pytest

from pscs.ast import Ast
from pscs.numerics import backward


def numeric_gradients(f, tensors, eps=1e-3):
    """Central finite differences of the scalar f() w.r.t. each tensor."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f().data)
            flat[i] = orig - eps
            fm = float(f().data)
            flat[i] = orig
            gflat[i] = (fp - fm) / (2 * eps)
        grads.append(g)
    return grads


def assert_gradients_match(build, params, eps=1e-3, tol=1e-4):
    """build() -> scalar loss; params must be float64 leaf tensors."""
    for p in params:
        assert p.data.dtype == np.float64, "gradient checks run in float64"
        p.zero_grad()
    loss = build()
    backward(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                for p in params]
    for p in params:
        p.zero_grad()
    numeric = numeric_gradients(build, params, eps=eps)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(1.0, float(np.abs(a).max()), float(np.abs(n).max()))
        rel = float(np.abs(a - n).max()) / scale
        worst = max(worst, rel)
    assert worst < tol, f"max relative gradient error {worst:.3e} >= {tol}"
    return worst


def random_tree(rng: np.random.Generator, max_leaves: int = 12) -> Ast:
    """Random labeled tree with between 2 and max_leaves terminals."""
    labels = ["Alpha", "Beta", "Gamma", "Delta", "Epsilon"]
    words = ["foo", "bar", "baz", "qux", "itemCount", "x", "setTimer", "v2"]
    arena = []

    def grow(depth, budget):
        # budget = leaves this subtree may still produce (>= 1)
        my_id = len(arena)
        arena.append(None)
        if budget == 1 or (depth >= 2 and rng.random() < 0.35) or depth >= 6:
            arena[my_id] = (words[rng.integers(len(words))], [])
            return 1
        n_children = int(rng.integers(1, min(4, budget) + 1))
        children = []
        used = 0
        for ci in range(n_children):
            remaining = n_children - ci - 1
            child_budget = int(rng.integers(1, budget - used - remaining + 1))
            children.append(len(arena))
            used += grow(depth + 1, child_budget)
        arena[my_id] = (labels[rng.integers(len(labels))], children)
        return used

    total = int(rng.integers(2, max_leaves + 1))
    root = 0
    grow(0, total)
    # a root that came out terminal has no pairs; reroll via a forced split
    if not arena[0][1]:
        arena.clear()
        arena.append(("Root", [1, 2]))
        arena.append((words[0], []))
        arena.append((words[1], []))
    return Ast.from_arena(arena, root)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
