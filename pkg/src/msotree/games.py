"""Finite-arena parity games: solving, strategy checking, and the
translations between rank labellings and bounded difference conditions.

Min-parity throughout: the even player wins a play iff the liminf of the
vertex ranks is even.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass
from enum import Enum
from itertools import product as iproduct
from typing import Callable, Mapping, Optional, Sequence

from .automata import UltimatelyPeriodicWord


class Player(Enum):
    EXISTS = "E"
    FORALL = "A"

    @property
    def opponent(self) -> "Player":
        return Player.FORALL if self is Player.EXISTS else Player.EXISTS

    def favours(self, rank: int) -> bool:
        return (rank % 2 == 0) == (self is Player.EXISTS)


@dataclass(frozen=True)
class PositionalStrategy:
    player: Player
    moves: Mapping[str, str]


@dataclass(frozen=True)
class SolveResult:
    win_exists: frozenset[str]
    win_forall: frozenset[str]
    strategy_exists: PositionalStrategy
    strategy_forall: PositionalStrategy


class ParityGame:
    """Arena with no dead ends; vertex order is canonical and all
    tie-breaking follows it."""

    def __init__(
        self,
        vertices: tuple[str, ...],
        owner: Mapping[str, Player],
        rank: Mapping[str, int],
        edges: frozenset[tuple[str, str]],
        initial: Optional[str] = None,
        index: Optional[int] = None,
    ):
        if not vertices:
            raise ValueError("game needs at least one vertex")
        if len(set(vertices)) != len(vertices):
            raise ValueError("duplicate vertices")
        vset = set(vertices)
        if set(owner) != vset or set(rank) != vset:
            raise ValueError("owner and rank must be total on vertices")
        for (u, v) in edges:
            if u not in vset or v not in vset:
                raise ValueError(f"edge {(u, v)} references unknown vertex")
        for v, r in rank.items():
            if r < 0:
                raise ValueError("ranks must be non-negative")
            if index is not None and r > index:
                raise ValueError(f"rank of {v} exceeds declared index {index}")
        if initial is not None and initial not in vset:
            raise ValueError("initial vertex not declared")
        self.vertices = vertices
        self.owner = dict(owner)
        self.rank = dict(rank)
        self.edges = frozenset(edges)
        self.initial = initial
        self.index = index if index is not None else max(rank.values())
        self._pos = {v: i for i, v in enumerate(vertices)}
        succ: dict[str, list[str]] = {v: [] for v in vertices}
        pred: dict[str, list[str]] = {v: [] for v in vertices}
        for (u, v) in sorted(edges, key=lambda e: (self._pos[e[0]], self._pos[e[1]])):
            succ[u].append(v)
            pred[v].append(u)
        for v in vertices:
            if not succ[v]:
                raise ValueError(f"dead end at vertex {v!r}")
        self.succ = succ
        self.pred = pred

    def __repr__(self):
        return f"ParityGame({len(self.vertices)} vertices, index (0,{self.index}))"


def _attractor(game: ParityGame, active: set, player: Player, target: set):
    """Attractor of `target` for `player` inside `active`, with the pulled
    move for the player's attracted vertices.  Deterministic."""
    attr = set(target)
    strategy: dict[str, str] = {}
    out_count = {v: sum(1 for w in game.succ[v] if w in active) for v in active}
    queue = sorted(target, key=game._pos.get)
    while queue:
        nxt = []
        for t in queue:
            for u in game.pred[t]:
                if u not in active or u in attr:
                    continue
                if game.owner[u] is player:
                    attr.add(u)
                    strategy[u] = min(
                        (w for w in game.succ[u] if w in attr), key=game._pos.get
                    )
                    nxt.append(u)
                else:
                    out_count[u] -= 1
                    if out_count[u] == 0:
                        attr.add(u)
                        nxt.append(u)
        queue = sorted(set(nxt), key=game._pos.get)
    return attr, strategy


def _zielonka(game: ParityGame, active: set):
    if not active:
        return set(), set(), {}, {}
    m = min(game.rank[v] for v in active)
    player = Player.EXISTS if m % 2 == 0 else Player.FORALL
    target = {v for v in active if game.rank[v] == m}
    attr, attr_strategy = _attractor(game, active, player, target)
    sub = active - attr
    we, wf, se, sf = _zielonka(game, sub)
    if player is Player.EXISTS:
        wp, wo, sp, so = we, wf, se, sf
    else:
        wp, wo, sp, so = wf, we, sf, se
    if not wo:
        sp = dict(sp)
        sp.update(attr_strategy)
        for v in sorted(target, key=game._pos.get):
            if game.owner[v] is player and v not in sp:
                sp[v] = min((w for w in game.succ[v] if w in active), key=game._pos.get)
        if player is Player.EXISTS:
            return set(active), set(), sp, {}
        return set(), set(active), {}, sp
    opp = player.opponent
    battr, battr_strategy = _attractor(game, active, opp, set(wo))
    we2, wf2, se2, sf2 = _zielonka(game, active - battr)
    if player is Player.EXISTS:
        wp2, wo2, sp2, so2 = we2, wf2, se2, sf2
    else:
        wp2, wo2, sp2, so2 = wf2, we2, sf2, se2
    so_full = dict(so)
    so_full.update(battr_strategy)
    so_full.update(so2)
    wo_full = wo2 | battr
    if player is Player.EXISTS:
        return wp2, wo_full, sp2, so_full
    return wo_full, wp2, so_full, sp2


def solve(game: ParityGame) -> SolveResult:
    """Zielonka recursion on the minimal rank, with positional strategies
    for both players.  Output is deterministic for a fixed input."""
    limit = sys.getrecursionlimit()
    need = 4 * len(game.vertices) + 1000
    if need > limit:
        sys.setrecursionlimit(need)
    try:
        we, wf, se, sf = _zielonka(game, set(game.vertices))
    finally:
        if need > limit:
            sys.setrecursionlimit(limit)
    return SolveResult(
        frozenset(we),
        frozenset(wf),
        PositionalStrategy(Player.EXISTS, se),
        PositionalStrategy(Player.FORALL, sf),
    )


def verify_positional_strategy(
    game: ParityGame, strategy: PositionalStrategy, region
) -> bool:
    """Check that `strategy` wins every play from `region`: the play cannot
    leave the region and every reachable cycle in the strategy-restricted
    subgraph has minimal rank of the owner's parity (checked rank by rank
    through strongly connected components)."""
    region = set(region)
    player = strategy.player
    for v, w in strategy.moves.items():
        if (v, w) not in game.edges:
            raise ValueError(f"strategy move {(v, w)} is not an edge")
    restricted: dict[str, list[str]] = {}
    for v in region:
        if game.owner[v] is player:
            if v not in strategy.moves:
                return False
            w = strategy.moves[v]
            if w not in region:
                return False
            restricted[v] = [w]
        else:
            if any(w not in region for w in game.succ[v]):
                return False
            restricted[v] = list(game.succ[v])

    bad = (lambda r: r % 2 == 1) if player is Player.EXISTS else (lambda r: r % 2 == 0)
    for r in sorted({game.rank[v] for v in region}):
        if not bad(r):
            continue
        sub = {v for v in region if game.rank[v] >= r}
        comp_of = _scc_map(sub, lambda v: [w for w in restricted[v] if w in sub])
        for v in sub:
            if game.rank[v] != r:
                continue
            comp = comp_of[v]
            members = [u for u in sub if comp_of[u] == comp]
            if len(members) > 1 or v in restricted[v]:
                return False
    return True


def _scc_map(nodes, succ) -> dict:
    index: dict = {}
    low: dict = {}
    on: set = set()
    stack: list = []
    comp_of: dict = {}
    counter = [0]
    ncomp = [0]

    for root in sorted(nodes):
        if root in index:
            continue
        work = [(root, iter(succ(root)))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on.add(root)
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
                    while True:
                        u = stack.pop()
                        on.discard(u)
                        comp_of[u] = ncomp[0]
                        if u == node:
                            break
                    ncomp[0] += 1
    return comp_of


def _play_winner_from(start, move, rank) -> Player:
    """Winner of the unique play from start under total successor map."""
    seen = {}
    seq = []
    v = start
    while v not in seen:
        seen[v] = len(seq)
        seq.append(v)
        v = move[v]
    cyc = seq[seen[v]:]
    m = min(rank[u] for u in cyc)
    return Player.EXISTS if m % 2 == 0 else Player.FORALL


def brute_force_solve(game: ParityGame, limit: int = 8) -> SolveResult:
    """Enumerate all positional strategies of both players and score every
    pair by inspecting the induced cycle.  Exact on small games; the
    reference oracle for `solve`."""
    n = len(game.vertices)
    if n > limit:
        raise ValueError(f"game too large for brute force ({n} > {limit})")
    ve = [v for v in game.vertices if game.owner[v] is Player.EXISTS]
    vf = [v for v in game.vertices if game.owner[v] is Player.FORALL]

    def all_strategies(vs):
        if not vs:
            return [{}]
        choices = [game.succ[v] for v in vs]
        return [dict(zip(vs, pick)) for pick in iproduct(*choices)]

    se_all = all_strategies(ve)
    sf_all = all_strategies(vf)

    # wins[i][j] = set of vertices from which EXISTS wins with se_all[i] vs sf_all[j]
    win_e: Optional[set] = None
    best_se = None
    results = []
    for se in se_all:
        guaranteed = None
        for sf in sf_all:
            move = dict(se)
            move.update(sf)
            won = {
                v
                for v in game.vertices
                if _play_winner_from(v, move, game.rank) is Player.EXISTS
            }
            guaranteed = won if guaranteed is None else (guaranteed & won)
            if not guaranteed:
                break
        results.append((se, guaranteed or set()))
    win_e = set()
    for _, g in results:
        win_e |= g
    for se, g in results:
        if g == win_e:
            best_se = se
            break
    assert best_se is not None, "no uniform winning strategy for the even player"

    win_f = set(game.vertices) - win_e
    best_sf = None
    for sf in sf_all:
        ok = True
        for se in se_all:
            move = dict(se)
            move.update(sf)
            for v in win_f:
                if _play_winner_from(v, move, game.rank) is Player.EXISTS:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            best_sf = sf
            break
    assert best_sf is not None, "no uniform winning strategy for the odd player"

    return SolveResult(
        frozenset(win_e),
        frozenset(win_f),
        PositionalStrategy(Player.EXISTS, best_se),
        PositionalStrategy(Player.FORALL, best_sf),
    )


# ---------------------------------------------------------------------------
# Bounded difference conditions and their rank labellings.


@dataclass(frozen=True, eq=False)
class DifferenceCondition:
    """A condition of level x given by its inner predicate.

    `delta(y, z, u, prefix)` must be total and deterministic; `prefix` is the
    first u moves of the play.  The associated monotone family is
    psi(y, f) = "for all z there is u with delta(y, z, u, f|u)".
    """

    x: int
    delta: Callable[[int, int, int, tuple[int, ...]], bool]

    def psi_on_lasso(self, y: int, play: Sequence[int], period: int, horizon: int) -> bool:
        """Evaluate psi(y, f) on an ultimately periodic play, sampling u up
        to `horizon` positions (exact for the deltas used in tests, which
        stabilise within one product period)."""

        def at(i):
            if i < len(play):
                return play[i]
            return play[len(play) - period + ((i - (len(play) - period)) % period)]

        full = tuple(at(i) for i in range(horizon))
        for z in range(horizon):
            if not any(self.delta(y, z, u, full[:u]) for u in range(horizon + 1)):
                return False
        return True


def difference_ranks_along(c: DifferenceCondition, node: Sequence[int]) -> list[int]:
    """Ranks of every prefix of `node` (lengths 0..len), computed in one
    left-to-right pass so earlier answers feed the occurrence counts."""
    bits = tuple(int(b) for b in node)
    counts = [0] * c.x
    out = []
    for i in range(len(bits) + 1):
        rank = c.x
        for y in range(c.x):
            j = counts[y] + 1
            ok = all(
                any(c.delta(y, z, u, bits[:u]) for u in range(i + 1))
                for z in range(j + 1)
            )
            if ok:
                rank = y
                break
        if rank < c.x:
            counts[rank] += 1
        out.append(rank)
    return out


def difference_to_rank_labelling(c: DifferenceCondition, node: Sequence[int]) -> int:
    """Rank of a single tree node (a finite binary string) in the induced
    tree-shaped parity game of index (0, x)."""
    return difference_ranks_along(c, node)[-1]


def parity_play_winner(ranked_play: UltimatelyPeriodicWord, x: int) -> Player:
    """Winner of an ultimately periodic rank sequence: the liminf is the
    minimum rank occurring in the period."""
    values = [int(s) for s in ranked_play.prefix + ranked_play.period]
    if any(v < 0 or v > x for v in values):
        raise ValueError(f"rank out of range 0..{x}")
    liminf = min(int(s) for s in ranked_play.period)
    return Player.EXISTS if liminf % 2 == 0 else Player.FORALL
