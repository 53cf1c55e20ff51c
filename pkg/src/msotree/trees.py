"""Regular labelled infinite binary trees as finite graphs, subtree
equivalence, and the translation between layered games on the tree and
labelled trees over the structured game alphabet."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Optional

from .automata import Alphabet
from .games import ParityGame, Player


@dataclass(frozen=True)
class RegularTree:
    """Finite graph whose unfolding is a labelled infinite binary tree."""

    alphabet: object
    nodes: tuple[str, ...]
    root: str
    label: Mapping[str, str]
    left: Mapping[str, str]
    right: Mapping[str, str]

    def __post_init__(self):
        if not self.nodes or len(set(self.nodes)) != len(self.nodes):
            raise ValueError("nodes must be a non-empty list without duplicates")
        nset = set(self.nodes)
        if self.root not in nset:
            raise ValueError("root not declared")
        for m in (self.label, self.left, self.right):
            if set(m) != nset:
                raise ValueError("label/left/right must be total on nodes")
        for n in self.nodes:
            if self.left[n] not in nset or self.right[n] not in nset:
                raise ValueError(f"dangling child pointer at {n!r}")
            if self.label[n] not in self.alphabet:
                raise ValueError(f"label {self.label[n]!r} not in alphabet")
        reach = {self.root}
        todo = [self.root]
        while todo:
            n = todo.pop()
            for c in (self.left[n], self.right[n]):
                if c not in reach:
                    reach.add(c)
                    todo.append(c)
        if reach != nset:
            raise ValueError("every node must be reachable from the root")

    def node_at(self, path: str) -> str:
        n = self.root
        for b in path:
            n = self.left[n] if b == "0" else self.right[n]
        return n

    def label_at(self, path: str) -> str:
        return self.label[self.node_at(path)]


def unfold(T: RegularTree, depth: int) -> dict[str, str]:
    """Labels of the first levels of the unfolding, for all binary strings
    of length at most `depth` (depth 0 gives just the root)."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    out = {"": T.label[T.root]}
    frontier = {"": T.root}
    for _ in range(depth):
        nxt = {}
        for path, n in frontier.items():
            for b, child in (("0", T.left[n]), ("1", T.right[n])):
                nxt[path + b] = child
                out[path + b] = T.label[child]
        frontier = nxt
    return out


def bisimulation_classes(T: RegularTree) -> dict[str, int]:
    """Partition refinement on (label, left class, right class)."""
    labels = sorted({T.label[n] for n in T.nodes})
    part = {n: labels.index(T.label[n]) for n in T.nodes}
    while True:
        keys = {}
        newpart = {}
        for n in sorted(T.nodes):
            key = (part[n], part[T.left[n]], part[T.right[n]])
            if key not in keys:
                keys[key] = len(keys)
            newpart[n] = keys[key]
        if newpart == part:
            return part
        part = newpart


def subtree_equiv(T: RegularTree, u: str, v: str) -> bool:
    """True iff the unfoldings from u and v agree at every depth."""
    if u not in T.nodes or v not in T.nodes:
        raise ValueError("nodes must belong to the tree")
    part = bisimulation_classes(T)
    return part[u] == part[v]


_SYMBOL_RE = re.compile(r"^rank:\(([^)]*)\);edges:\((.*)\)$|^rank:\(([^)]*)\);edges:$")


@dataclass(frozen=True)
class GameTreeAlphabet:
    """Structured alphabet whose symbols pair a rank table for the layers
    with an edge table between layers of the two sons.

    Symbols are never enumerated (the count explodes); they are encoded and
    decoded structurally.
    """

    x: int
    k: int

    def __post_init__(self):
        if self.x < 0 or self.k < 0:
            raise ValueError("x and k must be non-negative")

    def symbol_count(self) -> int:
        return (self.x + 1) ** (self.k + 1) * 2 ** (2 * (self.k + 1) ** 2)

    def encode_symbol(self, ranks, edges) -> str:
        ranks = tuple(int(r) for r in ranks)
        if len(ranks) != self.k + 1:
            raise ValueError(f"need {self.k + 1} layer ranks")
        for r in ranks:
            if not 0 <= r <= self.x:
                raise ValueError(f"rank {r} out of range 0..{self.x}")
        edges = sorted({(int(i), int(b), int(j)) for (i, b, j) in edges})
        for (i, b, j) in edges:
            if not (0 <= i <= self.k and 0 <= j <= self.k and b in (0, 1)):
                raise ValueError(f"edge {(i, b, j)} out of range")
        rk = ",".join(str(r) for r in ranks)
        ed = ",".join(f"({i},{b},{j})" for (i, b, j) in edges)
        return f"rank:({rk});edges:{ed}"

    def decode_symbol(self, symbol: str):
        try:
            head, tail = symbol.split(";edges:", 1)
            assert head.startswith("rank:(") and head.endswith(")")
            ranks = tuple(int(r) for r in head[len("rank:("):-1].split(","))
            edges = set()
            if tail:
                for m in re.finditer(r"\((\d+),(\d+),(\d+)\)", tail):
                    edges.add((int(m.group(1)), int(m.group(2)), int(m.group(3))))
        except Exception as exc:
            raise ValueError(f"malformed game symbol {symbol!r}") from exc
        self.encode_symbol(ranks, edges)  # revalidate ranges
        return ranks, frozenset(edges)

    def __contains__(self, symbol: str) -> bool:
        try:
            self.decode_symbol(symbol)
            return True
        except ValueError:
            return False


@dataclass(frozen=True)
class GameStructure:
    """Finite generator of a layered game on the binary tree: a finite
    automaton assigning every tree node a rank table and an edge table."""

    nodes: tuple[str, ...]
    root: str
    left: Mapping[str, str]
    right: Mapping[str, str]
    ranks: Mapping[str, tuple[int, ...]]
    edges: Mapping[str, frozenset[tuple[int, int, int]]]


def encode_game(gs: GameStructure, x: int, k: int) -> RegularTree:
    """Package a finite game presentation as a regular tree over the
    structured alphabet; raises on rank or layer overflow."""
    alpha = GameTreeAlphabet(x, k)
    label = {}
    for n in gs.nodes:
        ranks = gs.ranks[n]
        if len(ranks) != k + 1 or any(r > x or r < 0 for r in ranks):
            raise ValueError(f"rank table at {n!r} does not fit index (0,{x})")
        for (i, b, j) in gs.edges[n]:
            if i > k or j > k:
                raise ValueError(f"edge {(i, b, j)} at {n!r} exceeds layer count {k}")
        label[n] = alpha.encode_symbol(ranks, gs.edges[n])
    return RegularTree(
        alpha, gs.nodes, gs.root, label, dict(gs.left), dict(gs.right)
    )


def decode_game(
    T: RegularTree, initial_layer: int = 0
) -> tuple[ParityGame, dict[tuple[str, int, int], str]]:
    """Quotient the layered game generated by T to a finite parity game.

    Positions are (subtree class, depth parity, layer); even depths belong
    to the even player.  Also returns the map from (tree node, parity,
    layer) to game vertices, which pulls strategies back to the tree.
    """
    alpha = T.alphabet
    if not isinstance(alpha, GameTreeAlphabet):
        raise ValueError("tree is not over a game-tree alphabet")
    k = alpha.k
    part = bisimulation_classes(T)
    decoded = {n: alpha.decode_symbol(T.label[n]) for n in T.nodes}

    # reachable (class, parity) pairs; pick the least node as representative
    reps: dict[tuple[int, int], str] = {}
    start = (part[T.root], 0)
    todo = [(T.root, 0)]
    seen = set()
    while todo:
        n, p = todo.pop(0)
        key = (part[n], p)
        if key in seen:
            continue
        seen.add(key)
        reps.setdefault(key, n)
        todo.append((T.left[n], 1 - p))
        todo.append((T.right[n], 1 - p))

    def vname(cls, p, i):
        return f"c{cls}p{p}l{i}"

    vertices = []
    owner = {}
    rank = {}
    edges = set()
    for (cls, p) in sorted(reps):
        n = reps[(cls, p)]
        ranks, _ = decoded[n]
        for i in range(k + 1):
            v = vname(cls, p, i)
            vertices.append(v)
            owner[v] = Player.EXISTS if p == 0 else Player.FORALL
            rank[v] = ranks[i]
    for (cls, p) in sorted(reps):
        n = reps[(cls, p)]
        _, etable = decoded[n]
        for (i, b, j) in sorted(etable):
            child = T.left[n] if b == 0 else T.right[n]
            edges.add((vname(cls, p, i), vname(part[child], 1 - p, j)))
    for v in vertices:
        if not any(e[0] == v for e in edges):
            raise ValueError(f"position {v} has no move; the arena condition fails")
    if not 0 <= initial_layer <= k:
        raise ValueError("initial layer out of range")
    game = ParityGame(
        tuple(vertices),
        owner,
        rank,
        frozenset(edges),
        initial=vname(part[T.root], 0, initial_layer),
        index=alpha.x,
    )
    pullback = {
        (n, p, i): vname(part[n], p, i)
        for n in T.nodes
        for p in (0, 1)
        for i in range(k + 1)
        if (part[n], p) in reps
    }
    return game, pullback
