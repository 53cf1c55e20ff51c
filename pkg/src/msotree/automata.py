"""Core automaton types and decision procedures on finitely presented inputs.

All acceptance is min-parity: a run (or play) is winning for the even side
iff the liminf of the ranks seen along it is even.  Every value here is
immutable after construction and every operation is a pure function.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional


class AlphabetMismatch(ValueError):
    """Raised when two objects over different alphabets are combined."""


class BudgetExceeded(RuntimeError):
    """A construction ran past its macro-state (or alphabet) budget.

    Signals desk-scale overflow, not a wrong input.  `stage` names the
    construction step that exploded.
    """

    def __init__(self, stage: str, count: int, budget: int):
        super().__init__(f"budget exceeded in {stage}: {count} > {budget}")
        self.stage = stage
        self.count = count
        self.budget = budget


def canon_name(*parts: str) -> str:
    """Canonical name for a structured (product) state."""
    return "(" + ",".join(parts) + ")"


@dataclass(frozen=True)
class Alphabet:
    """Ordered list of distinct symbol names; the order is canonical."""

    symbols: tuple[str, ...]

    def __post_init__(self):
        if not self.symbols:
            raise ValueError("alphabet must be non-empty")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("duplicate symbols in alphabet")
        for s in self.symbols:
            if not s or any(c.isspace() for c in s) or "#" in s:
                raise ValueError(f"bad symbol name: {s!r}")

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.symbols

    def __iter__(self) -> Iterator[str]:
        return iter(self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)


@dataclass(frozen=True)
class UltimatelyPeriodicWord:
    """The word prefix . period^omega, the decidable stand-in for arbitrary
    infinite words."""

    prefix: tuple[str, ...]
    period: tuple[str, ...]

    def __post_init__(self):
        if not self.period:
            raise ValueError("period must be non-empty")

    def at(self, i: int) -> str:
        if i < len(self.prefix):
            return self.prefix[i]
        return self.period[(i - len(self.prefix)) % len(self.period)]

    @property
    def positions(self) -> int:
        """Number of distinct lasso positions (prefix + one period copy)."""
        return len(self.prefix) + len(self.period)

    def check_alphabet(self, alphabet: Alphabet) -> None:
        for s in self.prefix + self.period:
            if s not in alphabet:
                raise AlphabetMismatch(f"symbol {s!r} not in alphabet")


def _check_common(alphabet, states, initial, rank):
    if not states:
        raise ValueError("automaton needs at least one state")
    if len(set(states)) != len(states):
        raise ValueError("duplicate states")
    if initial not in states:
        raise ValueError(f"initial state {initial!r} not declared")
    if set(rank) != set(states):
        raise ValueError("rank must be total on states")
    for q, r in rank.items():
        if not isinstance(r, int) or r < 0:
            raise ValueError(f"rank of {q!r} must be a non-negative integer")


@dataclass(frozen=True)
class NondetParityWordAutomaton:
    alphabet: Alphabet
    states: tuple[str, ...]
    initial: str
    transitions: frozenset[tuple[str, str, str]]
    rank: Mapping[str, int]

    def __post_init__(self):
        _check_common(self.alphabet, self.states, self.initial, self.rank)
        for (q, a, p) in self.transitions:
            if q not in self.states or p not in self.states:
                raise ValueError(f"transition {(q, a, p)} references unknown state")
            if a not in self.alphabet:
                raise ValueError(f"transition {(q, a, p)} references unknown symbol")

    @property
    def max_rank(self) -> int:
        return max(self.rank.values())

    def successors(self, q: str, a: str) -> list[str]:
        return sorted(p for (s, b, p) in self.transitions if s == q and b == a)


@dataclass(frozen=True)
class DetParityWordAutomaton:
    alphabet: Alphabet
    states: tuple[str, ...]
    initial: str
    transitions: frozenset[tuple[str, str, str]]
    rank: Mapping[str, int]

    def __post_init__(self):
        _check_common(self.alphabet, self.states, self.initial, self.rank)
        seen = {}
        for (q, a, p) in self.transitions:
            if q not in self.states or p not in self.states:
                raise ValueError(f"transition {(q, a, p)} references unknown state")
            if a not in self.alphabet:
                raise ValueError(f"transition {(q, a, p)} references unknown symbol")
            if (q, a) in seen:
                raise ValueError(f"two transitions for {(q, a)}")
            seen[(q, a)] = p
        for q in self.states:
            for a in self.alphabet:
                if (q, a) not in seen:
                    raise ValueError(f"missing transition for {(q, a)}")
        object.__setattr__(self, "_step", seen)

    @property
    def max_rank(self) -> int:
        return max(self.rank.values())

    def step(self, q: str, a: str) -> str:
        return self._step[(q, a)]

    def run_states(self, w: UltimatelyPeriodicWord, n: int) -> list[str]:
        """First n+1 states of the unique run on w."""
        q = self.initial
        out = [q]
        for i in range(n):
            q = self.step(q, w.at(i))
            out.append(q)
        return out

    def as_nondeterministic(self) -> NondetParityWordAutomaton:
        return NondetParityWordAutomaton(
            self.alphabet, self.states, self.initial, self.transitions, dict(self.rank)
        )


@dataclass(frozen=True)
class NondetParityTreeAutomaton:
    alphabet: "AlphabetLike"
    states: tuple[str, ...]
    initial: str
    transitions: frozenset[tuple[str, str, str, str]]
    rank: Mapping[str, int]

    def __post_init__(self):
        _check_common(self.alphabet, self.states, self.initial, self.rank)
        for (q, a, l, r) in self.transitions:
            if q not in self.states or l not in self.states or r not in self.states:
                raise ValueError(f"transition {(q, a, l, r)} references unknown state")
            if a not in self.alphabet:
                raise ValueError(f"transition {(q, a, l, r)} references unknown symbol")

    @property
    def max_rank(self) -> int:
        return max(self.rank.values())

    def transitions_from(self, q: str, a: str) -> list[tuple[str, str, str, str]]:
        return sorted(t for t in self.transitions if t[0] == q and t[1] == a)

    def is_complete(self) -> bool:
        pairs = {(q, a) for (q, a, _, _) in self.transitions}
        return all((q, a) in pairs for q in self.states for a in self.alphabet)


# Anything with canonical symbol iteration and membership works as an
# alphabet for tree automata (Alphabet, or the structured game-tree one).
AlphabetLike = Alphabet


@dataclass(frozen=True)
class LassoRunWitness:
    """Accepting run certificate for an ultimately periodic word: a run
    segment into the period region followed by a cycle whose minimal rank
    is even."""

    run_prefix: tuple[tuple[str, str, str], ...]
    run_cycle: tuple[tuple[str, str, str], ...]


@dataclass(frozen=True)
class StrategyWitness:
    """Winning positional strategy in the finite membership game."""

    game: object  # ParityGame
    strategy: object  # PositionalStrategy
    region: frozenset[str]


def fresh_state_name(base: str, taken) -> str:
    name = base
    i = 0
    while name in taken:
        name = f"{base}{i}"
        i += 1
    return name


def complete_tree_automaton(A: NondetParityTreeAutomaton) -> NondetParityTreeAutomaton:
    """Add a rejecting absorbing sink for every missing (state, symbol) pair.

    Accepts exactly the same trees; returns A itself when already complete.
    """
    if A.is_complete():
        return A
    sink = fresh_state_name("qsink", set(A.states))
    trans = set(A.transitions)
    pairs = {(q, a) for (q, a, _, _) in trans}
    for q in list(A.states) + [sink]:
        for a in A.alphabet:
            if q == sink or (q, a) not in pairs:
                trans.add((q, a, sink, sink))
    rank = dict(A.rank)
    rank[sink] = 1
    return NondetParityTreeAutomaton(
        A.alphabet, A.states + (sink,), A.initial, frozenset(trans), rank
    )


def _lasso_next(i: int, prefix_len: int, total: int) -> int:
    return i + 1 if i + 1 < total else prefix_len


def npw_member(
    A: NondetParityWordAutomaton, w: UltimatelyPeriodicWord
) -> tuple[bool, Optional[LassoRunWitness]]:
    """Decide acceptance of prefix.period^omega by lasso search.

    Works on the finite product of automaton states with lasso positions;
    the word is accepted iff some reachable product cycle has even minimal
    rank.
    """
    w.check_alphabet(A.alphabet)
    P, L = len(w.prefix), w.positions

    by_src: dict[tuple[str, str], list[tuple[str, str, str]]] = {}
    for t in sorted(A.transitions):
        by_src.setdefault((t[0], t[1]), []).append(t)

    def node_succ(node):
        q, i = node
        for t in by_src.get((q, w.at(i)), []):
            yield t, (t[2], _lasso_next(i, P, L))

    # reachability with parent transitions, breadth first in canonical order
    start = (A.initial, 0)
    parent: dict[tuple[str, int], tuple] = {start: None}
    queue = [start]
    while queue:
        node = queue.pop(0)
        for t, nxt in node_succ(node):
            if nxt not in parent:
                parent[nxt] = (node, t)
                queue.append(nxt)

    reachable = set(parent)

    def sccs(nodes, succ):
        # Tarjan, iterative, deterministic in sorted node order
        index: dict = {}
        low: dict = {}
        on: set = set()
        stack: list = []
        out = []
        counter = [0]

        def strongconnect(v):
            work = [(v, iter(succ(v)))]
            index[v] = low[v] = counter[0]
            counter[0] += 1
            stack.append(v)
            on.add(v)
            while work:
                node, it = work[-1]
                advanced = False
                for u in it:
                    if u not in index:
                        index[u] = low[u] = counter[0]
                        counter[0] += 1
                        stack.append(u)
                        on.add(u)
                        work.append((u, iter(succ(u))))
                        advanced = True
                        break
                    elif u in on:
                        low[node] = min(low[node], index[u])
                if not advanced:
                    work.pop()
                    if work:
                        low[work[-1][0]] = min(low[work[-1][0]], low[node])
                    if low[node] == index[node]:
                        comp = []
                        while True:
                            u = stack.pop()
                            on.discard(u)
                            comp.append(u)
                            if u == node:
                                break
                        out.append(comp)

        for v in sorted(nodes):
            if v not in index:
                strongconnect(v)
        return out

    ranks_present = sorted({A.rank[q] for q in A.states})
    for r in ranks_present:
        if r % 2 != 0:
            continue
        sub = {n for n in reachable if A.rank[n[0]] >= r}

        def ssucc(node):
            return sorted(nxt for _, nxt in node_succ(node) if nxt in sub)

        for comp in sccs(sub, ssucc):
            compset = set(comp)
            anchors = sorted(n for n in comp if A.rank[n[0]] == r)
            if not anchors:
                continue
            u = anchors[0]
            nontrivial = len(comp) > 1 or u in ssucc(u)
            if not nontrivial:
                continue
            # cycle through u inside the component
            cpar = {u: None}
            cq = [u]
            cycle_closed = None
            while cq and cycle_closed is None:
                node = cq.pop(0)
                for t, nxt in node_succ(node):
                    if nxt == u:
                        cycle_closed = (node, t)
                        break
                    if nxt in compset and nxt not in cpar:
                        cpar[nxt] = (node, t)
                        cq.append(nxt)
            assert cycle_closed is not None
            cycle = []
            node, t = cycle_closed
            cycle.append(t)
            while node != u:
                pnode, pt = cpar[node]
                cycle.append(pt)
                node = pnode
            cycle.reverse()
            path = []
            node = u
            while parent[node] is not None:
                pnode, pt = parent[node]
                path.append(pt)
                node = pnode
            path.reverse()
            return True, LassoRunWitness(tuple(path), tuple(cycle))
    return False, None


def verify_lasso_witness(
    A: NondetParityWordAutomaton, w: UltimatelyPeriodicWord, wit: LassoRunWitness
) -> bool:
    """Replay a lasso-run certificate independently of the search."""
    P, C = len(w.prefix), len(w.period)
    if not wit.run_cycle or len(wit.run_cycle) % C != 0:
        return False
    q, pos = A.initial, 0
    for (s, a, p) in wit.run_prefix:
        if s != q or a != w.at(pos) or (s, a, p) not in A.transitions:
            return False
        q, pos = p, pos + 1
    if pos < P:
        return False
    anchor = q
    min_rank = A.rank[q]
    for (s, a, p) in wit.run_cycle:
        if s != q or a != w.at(pos) or (s, a, p) not in A.transitions:
            return False
        min_rank = min(min_rank, A.rank[s])
        q = p
        pos = P + ((pos + 1 - P) % C)
    return q == anchor and min_rank % 2 == 0


def npt_member(
    A: NondetParityTreeAutomaton, T
) -> tuple[bool, Optional[StrategyWitness]]:
    """Decide whether A accepts the infinite unfolding of the regular tree T.

    Reduces to solving the finite membership game between the transition
    picker and the branch picker.
    """
    from .complement import pathfinder_game
    from .games import solve

    if list(A.alphabet) != list(T.alphabet):
        raise AlphabetMismatch("automaton and tree alphabets differ")
    Ac = complete_tree_automaton(A)
    game = pathfinder_game(Ac, T)
    res = solve(game)
    if game.initial in res.win_exists:
        return True, StrategyWitness(game, res.strategy_exists, res.win_exists)
    return False, None


def npt_emptiness(A: NondetParityTreeAutomaton):
    """Return a regular tree accepted by A, or None when L(A) is empty.

    The witness is read off a positional strategy in the finite emptiness
    game, so it has at most |states| distinct subtrees.
    """
    from .games import ParityGame, Player, solve
    from .trees import RegularTree

    Ac = complete_tree_automaton(A)
    delta = sorted(Ac.transitions)
    x = Ac.max_rank
    vertices = [f"q:{q}" for q in Ac.states] + [f"d:{i}" for i in range(len(delta))]
    owner = {}
    rank = {}
    edges = set()
    for q in Ac.states:
        owner[f"q:{q}"] = Player.EXISTS
        rank[f"q:{q}"] = Ac.rank[q]
    for i, (q, a, l, r) in enumerate(delta):
        owner[f"d:{i}"] = Player.FORALL
        rank[f"d:{i}"] = x
        edges.add((f"q:{q}", f"d:{i}"))
        edges.add((f"d:{i}", f"q:{l}"))
        edges.add((f"d:{i}", f"q:{r}"))
    game = ParityGame(
        tuple(vertices), owner, rank, frozenset(edges), initial=f"q:{Ac.initial}"
    )
    res = solve(game)
    if game.initial not in res.win_exists:
        return None
    # read the regular tree off the strategy: node = automaton state
    choice = {}
    for q in Ac.states:
        v = f"q:{q}"
        if v in res.strategy_exists.moves:
            idx = int(res.strategy_exists.moves[v].split(":", 1)[1])
            choice[q] = delta[idx]
    nodes = []
    label = {}
    left = {}
    right = {}
    todo = [Ac.initial]
    seen = set()
    while todo:
        q = todo.pop(0)
        if q in seen:
            continue
        seen.add(q)
        nodes.append(q)
        (src, a, l, r) = choice[q]
        label[q] = a
        left[q] = l
        right[q] = r
        todo.extend([l, r])
    return RegularTree(Ac.alphabet, tuple(nodes), Ac.initial, label, left, right)


def trim_tree_automaton(A: NondetParityTreeAutomaton) -> NondetParityTreeAutomaton:
    """Drop states that are unreachable or whose subtree language is empty
    (decided through the emptiness game), keeping the language intact."""
    from .games import ParityGame, Player, solve

    def minimal_empty():
        return NondetParityTreeAutomaton(
            A.alphabet, (A.initial,), A.initial, frozenset(), {A.initial: 1}
        )

    # states with no infinite run tree at all go first (the game below
    # cannot host their dead ends)
    alive = set(A.states)
    changed = True
    while changed:
        changed = False
        for q in sorted(alive):
            ok = any(
                t[0] == q and t[2] in alive and t[3] in alive for t in A.transitions
            )
            if not ok:
                alive.discard(q)
                changed = True
    if A.initial not in alive:
        return minimal_empty()

    delta = sorted(
        t for t in A.transitions if t[0] in alive and t[2] in alive and t[3] in alive
    )
    x = A.max_rank
    vertices = [f"q:{q}" for q in sorted(alive)]
    owner = {v: Player.EXISTS for v in vertices}
    rank = {f"q:{q}": A.rank[q] for q in alive}
    edges = set()
    for i, (q, a, l, r) in enumerate(delta):
        v = f"d:{i}"
        vertices.append(v)
        owner[v] = Player.FORALL
        rank[v] = x
        edges.add((f"q:{q}", v))
        edges.add((v, f"q:{l}"))
        edges.add((v, f"q:{r}"))
    res = solve(ParityGame(tuple(vertices), owner, rank, frozenset(edges)))
    productive = {q for q in alive if f"q:{q}" in res.win_exists}
    if A.initial not in productive:
        return minimal_empty()
    trans = {
        t
        for t in delta
        if t[0] in productive and t[2] in productive and t[3] in productive
    }
    reach = {A.initial}
    todo = [A.initial]
    while todo:
        q = todo.pop()
        for t in trans:
            if t[0] == q:
                for nxt in (t[2], t[3]):
                    if nxt not in reach:
                        reach.add(nxt)
                        todo.append(nxt)
    states = tuple(q for q in A.states if q in reach)
    trans = frozenset(t for t in trans if t[0] in reach)
    return NondetParityTreeAutomaton(
        A.alphabet, states, A.initial, trans, {q: A.rank[q] for q in states}
    )


def bisim_reduce_tree_automaton(
    A: NondetParityTreeAutomaton,
) -> NondetParityTreeAutomaton:
    """Quotient by forward bisimulation (same rank, matching transitions up
    to the current partition).  Language preserving."""
    part = {}
    for q in A.states:
        part[q] = A.rank[q]
    while True:
        sig = {}
        for q in A.states:
            moves = frozenset(
                (a, part[l], part[r]) for (s, a, l, r) in A.transitions if s == q
            )
            sig[q] = (part[q], moves)
        classes = {}
        newpart = {}
        for q in sorted(A.states):
            key = sig[q]
            if key not in classes:
                classes[key] = len(classes)
            newpart[q] = classes[key]
        if newpart == part:
            break
        part = newpart
    reps = {}
    for q in sorted(A.states):
        reps.setdefault(part[q], q)
    if len(reps) == len(A.states):
        return A
    names = {c: rep for c, rep in reps.items()}
    states = tuple(sorted(names.values()))
    initial = names[part[A.initial]]
    trans = frozenset(
        (names[part[q]], a, names[part[l]], names[part[r]])
        for (q, a, l, r) in A.transitions
    )
    rank = {names[c]: A.rank[rep] for c, rep in reps.items()}
    return NondetParityTreeAutomaton(A.alphabet, states, initial, trans, rank)


def reduce_tree_automaton(A: NondetParityTreeAutomaton) -> NondetParityTreeAutomaton:
    """Trim then quotient, iterated to a fixpoint."""
    while True:
        B = bisim_reduce_tree_automaton(trim_tree_automaton(A))
        if len(B.states) == len(A.states) and len(B.transitions) == len(A.transitions):
            return B
        A = B


def compress_rank_values(values) -> dict[int, int]:
    """Monotone, parity-preserving compression of a set of rank values onto
    the smallest window.  Preserves the parity of any liminf."""
    out = {}
    prev_old = None
    prev_new = None
    for v in sorted(set(values)):
        if prev_old is None:
            nv = 0 if v % 2 == 0 else 1
        elif v % 2 == prev_new % 2:
            nv = prev_new
        else:
            nv = prev_new + 1
        out[v] = nv
        prev_old, prev_new = v, nv
    return out


def normalize_tree_ranks(A: NondetParityTreeAutomaton) -> NondetParityTreeAutomaton:
    m = compress_rank_values(A.rank.values())
    if all(m[v] == v for v in m):
        return A
    return NondetParityTreeAutomaton(
        A.alphabet, A.states, A.initial, A.transitions,
        {q: m[r] for q, r in A.rank.items()},
    )
