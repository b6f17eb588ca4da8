"""Embedding-space genetic signal: cosine distances, neighbor joining,
Newick I/O, and generalized quartet distance."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


class NewickError(ValueError):
    """Malformed Newick text; message carries the character offset."""


@dataclass
class TreeNode:
    label: str | None = None
    length: float | None = None
    children: list["TreeNode"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class PhyloTree:
    """A tree with labeled leaves; the root is an arbitrary anchor, and all
    topology queries treat the tree as unrooted."""

    root: TreeNode

    def nodes(self):
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            stack.extend(node.children)
        return out

    def edges(self):
        out = []
        for node in self.nodes():
            for child in node.children:
                out.append((node, child))
        return out

    def leaves(self):
        return [n for n in self.nodes() if n.is_leaf]

    def leaf_labels(self) -> set[str]:
        return {n.label for n in self.leaves()}

    def splits(self) -> set[frozenset[str]]:
        """Nontrivial leaf bipartitions, one per internal edge, each written
        as its smaller-by-name side for canonical comparison."""
        all_leaves = frozenset(self.leaf_labels())
        out: set[frozenset[str]] = set()
        for _, child in self.edges():
            below = frozenset(_leaves_below(child))
            if 1 < len(below) < len(all_leaves) - 1:
                other = all_leaves - below
                out.add(min(below, other, key=lambda s: (len(s), sorted(s))))
        return out


def _leaves_below(node: TreeNode):
    out, stack = [], [node]
    while stack:
        n = stack.pop()
        if n.is_leaf:
            out.append(n.label)
        stack.extend(n.children)
    return out


def same_topology(a: PhyloTree, b: PhyloTree) -> bool:
    """Unrooted isomorphism over shared leaf labels."""
    return a.leaf_labels() == b.leaf_labels() and a.splits() == b.splits()


# ---------------------------------------------------------------------------
# distances


@dataclass(frozen=True)
class DistanceMatrix:
    taxa: tuple[str, ...]
    values: np.ndarray  # symmetric, zero diagonal

    def __post_init__(self):
        v = self.values
        if v.shape != (len(self.taxa), len(self.taxa)):
            raise ValueError("distance matrix shape does not match taxa")
        if not np.allclose(v, v.T) or not np.allclose(np.diag(v), 0.0):
            raise ValueError("distance matrix must be symmetric with zero diagonal")
        if (v < 0).any():
            raise ValueError("distances must be non-negative")

    def to_tsv(self) -> str:
        lines = ["\t".join(("taxon",) + self.taxa)]
        for i, t in enumerate(self.taxa):
            lines.append("\t".join([t] + [f"{x:.10g}" for x in self.values[i]]))
        return "\n".join(lines) + "\n"


def cosine_distance_matrix(embeddings: dict[str, np.ndarray]) -> DistanceMatrix:
    """d(i, j) = 1 - cos(v_i, v_j); zero vectors are rejected by taxon name."""
    taxa = tuple(embeddings)
    mat = np.array([np.asarray(embeddings[t], dtype=np.float64) for t in taxa])
    norms = np.linalg.norm(mat, axis=1)
    for t, n in zip(taxa, norms):
        if n == 0.0:
            raise ValueError(f"zero embedding vector for taxon {t!r}")
    sims = (mat @ mat.T) / np.outer(norms, norms)
    d = 1.0 - np.clip(sims, -1.0, 1.0)
    np.fill_diagonal(d, 0.0)
    d = np.maximum(0.0, (d + d.T) / 2.0)
    return DistanceMatrix(taxa, d)


# ---------------------------------------------------------------------------
# neighbor joining


def neighbor_join(dist: DistanceMatrix) -> PhyloTree:
    """Saitou-Nei agglomeration; ties in the Q criterion resolve toward the
    lexicographically smallest taxa pair. Negative branch lengths clamp to
    zero with the overhang moved to the sibling branch (topology, which is
    what downstream comparisons use, is unaffected).
    """
    n = len(dist.taxa)
    if n < 3:
        raise ValueError("neighbor joining needs at least 3 taxa")
    d = dist.values.astype(np.float64).copy()
    nodes = [TreeNode(label=t) for t in dist.taxa]
    names = list(dist.taxa)  # join order names, for deterministic ties

    while len(nodes) > 3:
        m = len(nodes)
        row_sums = d.sum(axis=1)
        best: tuple | None = None
        for i in range(m):
            for j in range(i + 1, m):
                q = (m - 2) * d[i, j] - row_sums[i] - row_sums[j]
                key = (q, *sorted((names[i], names[j])))
                if best is None or key < best[0]:
                    best = (key, i, j)
        _, i, j = best
        li = 0.5 * d[i, j] + (row_sums[i] - row_sums[j]) / (2.0 * (m - 2))
        lj = d[i, j] - li
        li, lj = _clamp_pair(li, lj)
        child_i, child_j = nodes[i], nodes[j]
        child_i.length, child_j.length = li, lj
        joined = TreeNode(children=[child_i, child_j])
        new_d = 0.5 * (d[i] + d[j] - d[i, j])
        keep = [k for k in range(m) if k not in (i, j)]
        d2 = np.empty((m - 1, m - 1))
        d2[: m - 2, : m - 2] = d[np.ix_(keep, keep)]
        d2[m - 2, : m - 2] = d2[: m - 2, m - 2] = new_d[keep]
        d2[m - 2, m - 2] = 0.0
        d = d2
        nodes = [nodes[k] for k in keep] + [joined]
        names = [names[k] for k in keep] + ["(" + "+".join(sorted((names[i], names[j]))) + ")"]

    # final three-way join: the unrooted three-point formulas
    (a, b, c) = nodes
    da = 0.5 * (d[0, 1] + d[0, 2] - d[1, 2])
    db = 0.5 * (d[0, 1] + d[1, 2] - d[0, 2])
    dc = 0.5 * (d[0, 2] + d[1, 2] - d[0, 1])
    a.length, b.length, c.length = (max(0.0, v) for v in (da, db, dc))
    return PhyloTree(TreeNode(children=[a, b, c]))


def _clamp_pair(li: float, lj: float) -> tuple[float, float]:
    if li < 0.0:
        lj += li
        li = 0.0
    if lj < 0.0:
        li = max(0.0, li + lj)
        lj = 0.0
    return li, lj


def path_length_matrix(tree: PhyloTree, unit: bool = False) -> DistanceMatrix:
    """Leaf-to-leaf distances along the tree (branch lengths, or edge counts
    with unit=True). The additive matrix of the tree itself."""
    leaves = sorted(tree.leaf_labels())
    index = {t: i for i, t in enumerate(leaves)}
    adj: dict[int, list[tuple[int, float]]] = {}
    for parent, child in tree.edges():
        w = 1.0 if unit else float(child.length if child.length is not None else 1.0)
        adj.setdefault(id(parent), []).append((id(child), w))
        adj.setdefault(id(child), []).append((id(parent), w))
    label_of = {id(n): n.label for n in tree.nodes() if n.is_leaf}
    out = np.zeros((len(leaves), len(leaves)))
    for start, si in [(nid, index[lbl]) for nid, lbl in label_of.items()]:
        seen = {start: 0.0}
        frontier = [start]
        while frontier:
            nxt = []
            for u in frontier:
                for v, w in adj.get(u, []):
                    if v not in seen:
                        seen[v] = seen[u] + w
                        nxt.append(v)
            frontier = nxt
        for nid, lbl in label_of.items():
            out[si, index[lbl]] = seen[nid]
    return DistanceMatrix(tuple(leaves), out)


# ---------------------------------------------------------------------------
# quartets


def quartet_resolutions(tree: PhyloTree) -> dict[frozenset, frozenset | None]:
    """Butterfly (or None for a star) induced on every 4-leaf subset.

    A quartet {a,b,c,d} resolves as ab|cd iff some split has a,b on one side
    and c,d on the other; multifurcation can leave quartets unresolved.
    """
    leaves = sorted(tree.leaf_labels())
    splits = tree.splits()
    all_set = frozenset(leaves)
    out: dict[frozenset, frozenset | None] = {
        frozenset(q): None for q in itertools.combinations(leaves, 4)
    }
    for split in splits:
        other = all_set - split
        for pair_in in itertools.combinations(sorted(split), 2):
            for pair_out in itertools.combinations(sorted(other), 2):
                key = frozenset(pair_in + pair_out)
                resolution = frozenset((frozenset(pair_in), frozenset(pair_out)))
                out[key] = resolution
    return out


def gqd_counts(candidate: PhyloTree, reference: PhyloTree) -> tuple[int, int]:
    """(# quartets resolved in both but differently, # resolved in reference)."""
    if candidate.leaf_labels() != reference.leaf_labels():
        diff = sorted(candidate.leaf_labels() ^ reference.leaf_labels())
        raise ValueError(f"leaf sets differ: {diff}")
    cand = quartet_resolutions(candidate)
    ref = quartet_resolutions(reference)
    resolved_ref = 0
    different = 0
    for q, r in ref.items():
        if r is None:
            continue
        resolved_ref += 1
        c = cand[q]
        if c is not None and c != r:
            different += 1
    return different, resolved_ref


def generalized_quartet_distance(candidate: PhyloTree, reference: PhyloTree) -> float:
    """Among reference-resolved quartets, the fraction the candidate resolves
    differently."""
    different, resolved_ref = gqd_counts(candidate, reference)
    if resolved_ref == 0:
        raise ValueError("reference tree resolves no quartets")
    return different / resolved_ref


# ---------------------------------------------------------------------------
# Newick


def parse_newick(text: str) -> PhyloTree:
    """Parse one Newick tree; multifurcations and branch lengths allowed."""
    pos = 0
    n = len(text)

    def error(msg, at):
        raise NewickError(f"offset {at}: {msg}")

    def skip_ws():
        nonlocal pos
        while pos < n and text[pos].isspace():
            pos += 1

    def parse_node() -> TreeNode:
        nonlocal pos
        skip_ws()
        node = TreeNode()
        if pos < n and text[pos] == "(":
            pos += 1
            while True:
                node.children.append(parse_node())
                skip_ws()
                if pos >= n:
                    error("unbalanced parentheses", pos)
                if text[pos] == ",":
                    pos += 1
                    continue
                if text[pos] == ")":
                    pos += 1
                    break
                error(f"unexpected {text[pos]!r}", pos)
        start = pos
        while pos < n and text[pos] not in "(),:;":
            pos += 1
        label = text[start:pos].strip()
        if label:
            node.label = label
        elif node.is_leaf:
            error("leaf without a label", start)
        skip_ws()
        if pos < n and text[pos] == ":":
            pos += 1
            lstart = pos
            while pos < n and (text[pos] in "+-.eE" or text[pos].isdigit()):
                pos += 1
            try:
                node.length = float(text[lstart:pos])
            except ValueError:
                error("bad branch length", lstart)
        return node

    root = parse_node()
    skip_ws()
    if pos >= n or text[pos] != ";":
        error("expected ';'", pos)
    pos += 1
    skip_ws()
    if pos != n:
        error("trailing text after ';'", pos)
    tree = PhyloTree(root)
    labels = [leaf.label for leaf in tree.leaves()]
    dupes = {l for l in labels if labels.count(l) > 1}
    if dupes:
        raise NewickError(f"duplicate leaf labels: {sorted(dupes)}")
    return tree


def emit_newick(tree: PhyloTree, lengths: bool = True) -> str:
    def emit(node: TreeNode) -> str:
        if node.is_leaf:
            body = node.label
        else:
            body = "(" + ",".join(emit(c) for c in node.children) + ")"
            if node.label:
                body += node.label
        if lengths and node.length is not None:
            body += f":{node.length:.10g}"
        return body

    return emit(tree.root) + ";"


def random_binary_tree(labels, rng, min_branch: float = 0.1,
                       max_branch: float = 2.0) -> PhyloTree:
    """Uniform-ish random unrooted binary tree with random branch lengths."""
    labels = list(labels)
    if len(labels) < 3:
        raise ValueError("need at least 3 labels")

    def length():
        return float(rng.uniform(min_branch, max_branch))

    nodes = [TreeNode(label=l, length=length()) for l in labels]
    while len(nodes) > 3:
        i, j = sorted(rng.choice(len(nodes), size=2, replace=False))
        a, b = nodes[i], nodes[j]
        joined = TreeNode(children=[a, b], length=length())
        nodes = [nodes[k] for k in range(len(nodes)) if k not in (i, j)] + [joined]
    return PhyloTree(TreeNode(children=nodes))
