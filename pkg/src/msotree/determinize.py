"""Determinization of word automata.

The pipeline is: bring a nondeterministic parity word automaton to the
(0,1) index by guessing the even liminf value, then run the compact-tree
variant of the Safra construction, which yields a deterministic parity
word automaton directly.  Complementation of deterministic automata is a
rank shift.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional

from .automata import (
    Alphabet,
    BudgetExceeded,
    DetParityWordAutomaton,
    NondetParityWordAutomaton,
    compress_rank_values,
)

DEFAULT_BUDGET = 200_000


# A Safra tree node: (name, label, children).  Nodes are immutable; names
# are positive integers; a child's label is strictly inside its parent's
# label and sibling labels are disjoint, in creation (= name) order.
SafraNode = tuple[int, frozenset, tuple]


@dataclass(frozen=True)
class SafraTree:
    """Macro-state of the determinization: the tree plus the parity value
    emitted by the step that produced it."""

    root: Optional[SafraNode]
    priority: int

    def serialize(self) -> str:
        return f"p{self.priority};{_ser(self.root)}"


def _ser(node: Optional[SafraNode]) -> str:
    if node is None:
        return "dead"
    name, label, children = node
    lab = ",".join(sorted(label))
    if not children:
        return f"{name}{{{lab}}}"
    return f"{name}{{{lab}}}[" + ";".join(_ser(c) for c in children) + "]"


def validate_safra_tree(node: SafraNode, name_pool: int) -> None:
    """Structural invariants, asserted for every reachable macro-state."""
    name, label, children = node
    if not label:
        raise AssertionError("empty node label")
    if not 1 <= name <= name_pool:
        raise AssertionError(f"node name {name} outside pool 1..{name_pool}")
    union = set()
    for c in children:
        cname, clabel, _ = c
        if not clabel <= label:
            raise AssertionError("child label not inside parent label")
        if union & clabel:
            raise AssertionError("sibling labels overlap")
        if cname <= name:
            raise AssertionError("child name not above parent name")
        union |= clabel
        validate_safra_tree(c, name_pool)
    if union == set(label) and children:
        raise AssertionError("undischarged breakpoint (children cover parent)")


def _subtract(node: SafraNode, claimed: frozenset) -> SafraNode:
    name, label, children = node
    return (name, label - claimed, tuple(_subtract(c, claimed) for c in children))


def _hmerge(node: SafraNode) -> SafraNode:
    name, label, children = node
    claimed: frozenset = frozenset()
    out = []
    for c in children:
        c = _subtract(c, claimed)
        claimed = claimed | c[1]
        out.append(_hmerge(c))
    return (name, label, tuple(out))


def _drop_empty(node: SafraNode, removed: list) -> Optional[SafraNode]:
    name, label, children = node
    if not label:
        _collect_names(node, removed)
        return None
    out = []
    for c in children:
        kept = _drop_empty(c, removed)
        if kept is not None:
            out.append(kept)
    return (name, label, tuple(out))


def _collect_names(node: SafraNode, out: list) -> None:
    out.append(node[0])
    for c in node[2]:
        _collect_names(c, out)


def _flashes(node: SafraNode, flashed: list, removed: list) -> SafraNode:
    name, label, children = node
    if children:
        union = set()
        for c in children:
            union |= c[1]
        if union == set(label):
            flashed.append(name)
            for c in children:
                _collect_names(c, removed)
            return (name, label, ())
    return (name, label, tuple(_flashes(c, flashed, removed) for c in children))


def _rename(node: SafraNode, mapping: Mapping[int, int]) -> SafraNode:
    name, label, children = node
    return (mapping[name], label, tuple(_rename(c, mapping) for c in children))


def _names(node: SafraNode) -> list[int]:
    out: list[int] = []
    _collect_names(node, out)
    return out


def safra_step(
    tree: Optional[SafraNode],
    image: Callable[[frozenset], frozenset],
    accepting: frozenset,
    name_pool: int,
) -> tuple[Optional[SafraNode], int]:
    """One macro-transition: subset move, spawn, horizontal merge, removal
    of empty nodes, breakpoints, and order-preserving renaming.  Returns the
    new tree (None once the run set dies) and the emitted parity value."""
    neutral = 2 * name_pool + 1
    if tree is None:
        return None, 1

    def upd(node: SafraNode) -> SafraNode:
        name, label, children = node
        return (name, image(label), tuple(upd(c) for c in children))

    t = upd(tree)

    # spawn: youngest child holding the accepting part, smallest free names
    used = set(_names(t))
    free = [n for n in range(1, name_pool + 1) if n not in used]
    free.reverse()  # pop() returns the smallest

    def spawn(node: SafraNode) -> SafraNode:
        name, label, children = node
        children = tuple(spawn(c) for c in children)
        fresh = label & accepting
        if fresh:
            if not free:
                raise AssertionError("name pool exhausted")
            children = children + ((free.pop(), fresh, ()),)
        return (name, label, children)

    t = spawn(t)
    t = _hmerge(t)

    removed: list[int] = []
    t = _drop_empty(t, removed)
    flashed: list[int] = []
    if t is not None:
        t = _flashes(t, flashed, removed)

    events = []
    if removed:
        events.append(2 * min(removed) - 1)
    if flashed:
        events.append(2 * min(flashed))
    priority = min(events) if events else neutral

    if t is None:
        return None, 1
    mapping = {old: i + 1 for i, old in enumerate(sorted(_names(t)))}
    t = _rename(t, mapping)
    validate_safra_tree(t, name_pool)
    return t, priority


def safra_explore(
    initial_set: frozenset,
    accepting: frozenset,
    letters: Iterable,
    image_for: Callable,
    name_pool: int,
    budget: int,
    stage: str = "determinization",
):
    """Reachable macro-state exploration over abstract letters.

    `image_for(letter)` returns the successor-set function for that letter.
    Returns (states, initial, step table, ranks) keyed by serialized names.
    """
    neutral = 2 * name_pool + 1
    init = SafraTree((1, initial_set, ()), neutral) if initial_set else SafraTree(None, 1)
    init_name = init.serialize()
    trees = {init_name: init}
    order = [init_name]
    table: dict[tuple[str, object], str] = {}
    queue = [init_name]
    letters = list(letters)
    images = {letter: image_for(letter) for letter in letters}
    step_cache: dict[tuple[str, object], tuple] = {}
    while queue:
        name = queue.pop(0)
        cur = trees[name]
        tree_key = _ser(cur.root)
        for letter in letters:
            ck = (tree_key, letter)
            if ck in step_cache:
                new_root, prio = step_cache[ck]
            else:
                new_root, prio = safra_step(cur.root, images[letter], accepting, name_pool)
                step_cache[ck] = (new_root, prio)
            nxt = SafraTree(new_root, prio)
            nxt_name = nxt.serialize()
            if nxt_name not in trees:
                trees[nxt_name] = nxt
                order.append(nxt_name)
                queue.append(nxt_name)
                if len(trees) > budget:
                    raise BudgetExceeded(stage, len(trees), budget)
            table[(name, letter)] = nxt_name
    ranks = {n: trees[n].priority for n in order}
    return order, init_name, table, ranks


def safra_determinize(
    B: NondetParityWordAutomaton, budget: int = DEFAULT_BUDGET
) -> DetParityWordAutomaton:
    """Determinize an index-(0,1) automaton into a deterministic parity word
    automaton over the same alphabet."""
    if any(r not in (0, 1) for r in B.rank.values()):
        raise ValueError("determinization expects ranks within {0,1}")
    accepting = frozenset(q for q in B.states if B.rank[q] == 0)
    succ: dict[tuple[str, str], frozenset] = {}
    for (q, a, p) in B.transitions:
        succ.setdefault((q, a), set())
    for (q, a, p) in B.transitions:
        succ[(q, a)].add(p)
    succ = {k: frozenset(v) for k, v in succ.items()}

    # group letters acting identically on the state set
    rel_of: dict[str, tuple] = {}
    for a in B.alphabet:
        rel_of[a] = tuple(sorted((q, tuple(sorted(succ.get((q, a), frozenset())))) for q in B.states))
    classes: dict[tuple, str] = {}
    for a in B.alphabet:
        classes.setdefault(rel_of[a], a)

    def image_for(rep_letter):
        def image(states: frozenset) -> frozenset:
            out = set()
            for q in states:
                out |= succ.get((q, rep_letter), frozenset())
            return frozenset(out)

        return image

    name_pool = 2 * len(B.states)
    order, init_name, table, ranks = safra_explore(
        frozenset([B.initial]),
        accepting,
        [classes[r] for r in sorted(classes)],
        image_for,
        name_pool,
        budget,
    )
    transitions = set()
    for a in B.alphabet:
        rep = classes[rel_of[a]]
        for name in order:
            transitions.add((name, a, table[(name, rep)]))
    return DetParityWordAutomaton(
        B.alphabet, tuple(order), init_name, frozenset(transitions), ranks
    )


def parity_to_buchi(A: NondetParityWordAutomaton) -> NondetParityWordAutomaton:
    """Language-preserving conversion to index (0,1).

    The automaton copies A while guessing, at some transition, the even
    value y that the run's liminf will take; from then on it rejects any
    rank below y, marks rank-y states as accepting, and tolerates ranks
    above y (they do not affect a liminf of y).
    """
    even_values = [y for y in range(A.max_rank + 1) if y % 2 == 0]
    states = []
    rank = {}
    trans = set()

    def w(q):
        return f"w({q})"

    def f(y, q):
        return f"f{y}({q})"

    for q in A.states:
        states.append(w(q))
        rank[w(q)] = 1
    for y in even_values:
        for q in A.states:
            if A.rank[q] >= y:
                states.append(f(y, q))
                rank[f(y, q)] = 0 if A.rank[q] == y else 1
    for (q, a, p) in A.transitions:
        trans.add((w(q), a, w(p)))
        for y in even_values:
            if A.rank[p] >= y:
                trans.add((w(q), a, f(y, p)))
            if A.rank[q] >= y and A.rank[p] >= y:
                trans.add((f(y, q), a, f(y, p)))
    return trim_word_automaton(
        NondetParityWordAutomaton(
            A.alphabet, tuple(states), w(A.initial), frozenset(trans), rank
        )
    )


def complement_dpw(D: DetParityWordAutomaton) -> DetParityWordAutomaton:
    """Complement of a deterministic automaton: shift every rank up by one,
    flipping the parity of every liminf."""
    return DetParityWordAutomaton(
        D.alphabet,
        D.states,
        D.initial,
        D.transitions,
        {q: r + 1 for q, r in D.rank.items()},
    )


def normalize_ranks(D: DetParityWordAutomaton) -> DetParityWordAutomaton:
    """Compress ranks onto the smallest window that preserves the parity
    and relative order of every liminf outcome."""
    m = compress_rank_values(D.rank.values())
    if all(m[v] == v for v in m):
        return D
    return DetParityWordAutomaton(
        D.alphabet, D.states, D.initial, D.transitions,
        {q: m[r] for q, r in D.rank.items()},
    )


def trim_word_automaton(A: NondetParityWordAutomaton) -> NondetParityWordAutomaton:
    """Keep only states that are reachable and can head an accepting run."""
    by_src: dict[str, set[str]] = {q: set() for q in A.states}
    for (q, _a, p) in A.transitions:
        by_src[q].add(p)

    # states on a cycle whose minimal rank is even, within rank >= r
    anchors = set()
    for r in sorted({A.rank[q] for q in A.states}):
        if r % 2 != 0:
            continue
        sub = {q for q in A.states if A.rank[q] >= r}
        comp = _scc(sub, lambda q: sorted(by_src[q] & sub))
        for q in sub:
            if A.rank[q] != r:
                continue
            members = [u for u in sub if comp[u] == comp[q]]
            if len(members) > 1 or q in by_src[q]:
                anchors.add(q)
    live = set(anchors)
    changed = True
    while changed:
        changed = False
        for q in A.states:
            if q not in live and by_src[q] & live:
                live.add(q)
                changed = True
    reach = {A.initial}
    todo = [A.initial]
    while todo:
        q = todo.pop()
        for p in by_src[q]:
            if p not in reach:
                reach.add(p)
                todo.append(p)
    keep = live & reach
    if A.initial not in keep:
        return NondetParityWordAutomaton(
            A.alphabet, (A.initial,), A.initial, frozenset(), {A.initial: 1}
        )
    states = tuple(q for q in A.states if q in keep)
    trans = frozenset(t for t in A.transitions if t[0] in keep and t[2] in keep)
    return NondetParityWordAutomaton(
        A.alphabet, states, A.initial, trans, {q: A.rank[q] for q in states}
    )


def bisim_reduce_word_automaton(
    A: NondetParityWordAutomaton,
) -> NondetParityWordAutomaton:
    part = {q: A.rank[q] for q in A.states}
    while True:
        keys = {}
        newpart = {}
        for q in sorted(A.states):
            moves = frozenset((a, part[p]) for (s, a, p) in A.transitions if s == q)
            key = (part[q], moves)
            if key not in keys:
                keys[key] = len(keys)
            newpart[q] = keys[key]
        if newpart == part:
            break
        part = newpart
    reps = {}
    for q in sorted(A.states):
        reps.setdefault(part[q], q)
    if len(reps) == len(A.states):
        return A
    states = tuple(sorted(reps.values()))
    trans = frozenset((reps[part[q]], a, reps[part[p]]) for (q, a, p) in A.transitions)
    return NondetParityWordAutomaton(
        A.alphabet,
        states,
        reps[part[A.initial]],
        trans,
        {reps[c]: A.rank[rep] for c, rep in reps.items()},
    )


def reduce_word_automaton(A: NondetParityWordAutomaton) -> NondetParityWordAutomaton:
    while True:
        B = bisim_reduce_word_automaton(trim_word_automaton(A))
        if len(B.states) == len(A.states):
            return B
        A = B


def moore_minimize_dpw(D: DetParityWordAutomaton) -> DetParityWordAutomaton:
    """Merge states with equal rank and congruent successors; preserves the
    rank sequence of every run."""
    letters = list(D.alphabet)
    part = {q: D.rank[q] for q in D.states}
    while True:
        keys = {}
        newpart = {}
        for q in sorted(D.states):
            key = (part[q], tuple(part[D.step(q, a)] for a in letters))
            if key not in keys:
                keys[key] = len(keys)
            newpart[q] = keys[key]
        if newpart == part:
            break
        part = newpart
    reps = {}
    for q in sorted(D.states):
        reps.setdefault(part[q], q)
    if len(reps) == len(D.states):
        return D
    states = tuple(sorted(reps.values()))
    trans = frozenset(
        (rep, a, reps[part[D.step(rep, a)]]) for rep in states for a in letters
    )
    return DetParityWordAutomaton(
        D.alphabet,
        states,
        reps[part[D.initial]],
        trans,
        {rep: D.rank[rep] for rep in states},
    )


def _scc(nodes, succ) -> dict:
    from .games import _scc_map

    return _scc_map(nodes, succ)
