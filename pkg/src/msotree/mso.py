"""MSO over the full binary tree with the two successor relations.

Formulas are compiled to nondeterministic parity tree automata over
bit-vector alphabets (one track per free variable, canonical order), with
negation handled by tree-automaton complementation, second-order
existentials by projection, and first-order variables through the
singleton-set encoding.  Sentences are decided by compiling and testing
emptiness.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

from .automata import (
    Alphabet,
    NondetParityTreeAutomaton,
    NondetParityWordAutomaton,
    normalize_tree_ranks,
    reduce_tree_automaton,
)
from .determinize import (
    DEFAULT_BUDGET,
    complement_dpw,
    moore_minimize_dpw,
    normalize_ranks,
    safra_determinize,
)
from .trees import RegularTree

# ---------------------------------------------------------------------------
# Abstract syntax.  First-order variables start with a lowercase letter,
# second-order variables with an uppercase one.


@dataclass(frozen=True)
class Eq:
    x: str
    y: str


@dataclass(frozen=True)
class Succ:
    direction: int  # 0 = left son, 1 = right son
    x: str
    y: str


@dataclass(frozen=True)
class In:
    x: str
    X: str


@dataclass(frozen=True)
class RootAtom:
    x: str


@dataclass(frozen=True)
class PrefixLeq:
    x: str
    y: str


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Exists:
    var: str
    body: "Formula"


@dataclass(frozen=True)
class Forall:
    var: str
    body: "Formula"


Formula = Union[Eq, Succ, In, RootAtom, PrefixLeq, Not, And, Or, Implies, Exists, Forall]
MsoFormula = Formula

ATOMS = (Eq, Succ, In, RootAtom, PrefixLeq)


def is_second_order(var: str) -> bool:
    return var[0].isupper()


class MsoSyntaxError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


# ---------------------------------------------------------------------------
# Parsing.

_PUNCT = ["->", "<=", "(", ")", ",", ".", "=", "!", "&", "|"]


def _tokenize(text: str):
    toks = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
            continue
        matched = False
        for p in _PUNCT:
            if text.startswith(p, i):
                toks.append((p, i))
                i += len(p)
                matched = True
                break
        if matched:
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] in "_'"):
                j += 1
            toks.append((text[i:j], i))
            i = j
            continue
        raise MsoSyntaxError(f"unexpected character {c!r}", i)
    toks.append((None, len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i][0]

    def pos(self):
        return self.toks[self.i][1]

    def take(self, expected=None):
        tok, pos = self.toks[self.i]
        if expected is not None and tok != expected:
            raise MsoSyntaxError(f"expected {expected!r}, found {tok!r}", pos)
        self.i += 1
        return tok

    def name(self, kind=None):
        tok, pos = self.toks[self.i]
        if tok is None or not (tok[0].isalpha() or tok[0] == "_") or tok in (
            "EX", "ALL", "in", "root", "S0", "S1"
        ):
            raise MsoSyntaxError(f"expected a variable, found {tok!r}", pos)
        if kind == "fo" and is_second_order(tok):
            raise MsoSyntaxError(f"{tok!r} must be first-order (lowercase)", pos)
        if kind == "so" and not is_second_order(tok):
            raise MsoSyntaxError(f"{tok!r} must be second-order (uppercase)", pos)
        self.i += 1
        return tok

    def formula(self) -> Formula:
        if self.peek() in ("EX", "ALL"):
            kind = self.take()
            var = self.name()
            self.take(".")
            body = self.formula()
            return Exists(var, body) if kind == "EX" else Forall(var, body)
        return self.implies()

    def implies(self) -> Formula:
        left = self.disj()
        if self.peek() == "->":
            self.take()
            return Implies(left, self.formula_noquant())
        return left

    def formula_noquant(self) -> Formula:
        if self.peek() in ("EX", "ALL"):
            return self.formula()
        return self.implies()

    def disj(self) -> Formula:
        out = self.conj()
        while self.peek() == "|":
            self.take()
            out = Or(out, self.conj())
        return out

    def conj(self) -> Formula:
        out = self.unary()
        while self.peek() == "&":
            self.take()
            out = And(out, self.unary())
        return out

    def unary(self) -> Formula:
        if self.peek() == "!":
            self.take()
            return Not(self.unary())
        if self.peek() == "(":
            self.take()
            body = self.formula()
            self.take(")")
            return body
        return self.atom()

    def atom(self) -> Formula:
        tok = self.peek()
        pos = self.pos()
        if tok in ("S0", "S1"):
            self.take()
            self.take("(")
            x = self.name("fo")
            self.take(",")
            y = self.name("fo")
            self.take(")")
            return Succ(0 if tok == "S0" else 1, x, y)
        if tok == "root":
            self.take()
            self.take("(")
            x = self.name("fo")
            self.take(")")
            return RootAtom(x)
        x = self.name()
        op = self.peek()
        if op == "=":
            self.take()
            if is_second_order(x):
                raise MsoSyntaxError("equality is first-order only", pos)
            return Eq(x, self.name("fo"))
        if op == "<=":
            self.take()
            if is_second_order(x):
                raise MsoSyntaxError("prefix order is first-order only", pos)
            return PrefixLeq(x, self.name("fo"))
        if op == "in":
            self.take()
            if is_second_order(x):
                raise MsoSyntaxError("membership needs a first-order element", pos)
            return In(x, self.name("so"))
        raise MsoSyntaxError(f"incomplete atom after {x!r}", pos)


def free_vars(phi: Formula, bound=frozenset()) -> set[str]:
    if isinstance(phi, Eq):
        return {phi.x, phi.y} - bound
    if isinstance(phi, Succ):
        return {phi.x, phi.y} - bound
    if isinstance(phi, In):
        return {phi.x, phi.X} - bound
    if isinstance(phi, RootAtom):
        return {phi.x} - bound
    if isinstance(phi, PrefixLeq):
        return {phi.x, phi.y} - bound
    if isinstance(phi, Not):
        return free_vars(phi.body, bound)
    if isinstance(phi, (And, Or, Implies)):
        return free_vars(phi.left, bound) | free_vars(phi.right, bound)
    if isinstance(phi, (Exists, Forall)):
        return free_vars(phi.body, bound | {phi.var})
    raise TypeError(f"not a formula: {phi!r}")


def parse(text: str, allow_free: bool = False) -> Formula:
    p = _Parser(text)
    phi = p.formula()
    if p.peek() is not None:
        raise MsoSyntaxError(f"trailing input {p.peek()!r}", p.pos())
    if not allow_free:
        fv = free_vars(phi)
        if fv:
            raise MsoSyntaxError(f"unbound variable {sorted(fv)[0]!r}", 0)
    return phi


def pretty(phi: Formula) -> str:
    def wrap(child, strength):
        s, inner = go(child)
        return f"({inner})" if s < strength else inner

    def go(phi):
        # returns (binding strength, text); higher binds tighter
        if isinstance(phi, Eq):
            return 5, f"{phi.x} = {phi.y}"
        if isinstance(phi, Succ):
            return 5, f"S{phi.direction}({phi.x},{phi.y})"
        if isinstance(phi, In):
            return 5, f"{phi.x} in {phi.X}"
        if isinstance(phi, RootAtom):
            return 5, f"root({phi.x})"
        if isinstance(phi, PrefixLeq):
            return 5, f"{phi.x} <= {phi.y}"
        if isinstance(phi, Not):
            return 4, f"!{wrap(phi.body, 5)}"
        if isinstance(phi, And):
            return 3, f"{wrap(phi.left, 3)} & {wrap(phi.right, 4)}"
        if isinstance(phi, Or):
            return 2, f"{wrap(phi.left, 2)} | {wrap(phi.right, 3)}"
        if isinstance(phi, Implies):
            return 1, f"{wrap(phi.left, 2)} -> {wrap(phi.right, 1)}"
        if isinstance(phi, Exists):
            return 0, f"EX {phi.var}. {go(phi.body)[1]}"
        if isinstance(phi, Forall):
            return 0, f"ALL {phi.var}. {go(phi.body)[1]}"
        raise TypeError(f"not a formula: {phi!r}")

    return go(phi)[1]


# ---------------------------------------------------------------------------
# Prenex form, quantifier blocks, fragment classification.


def _rename_apart(phi: Formula, env=None, counter=None) -> Formula:
    env = env or {}
    counter = counter if counter is not None else [0]

    def fresh(v):
        counter[0] += 1
        base = v.rstrip("0123456789")
        return f"{base}{counter[0]}"

    def go(phi, env):
        if isinstance(phi, Eq):
            return Eq(env.get(phi.x, phi.x), env.get(phi.y, phi.y))
        if isinstance(phi, Succ):
            return Succ(phi.direction, env.get(phi.x, phi.x), env.get(phi.y, phi.y))
        if isinstance(phi, In):
            return In(env.get(phi.x, phi.x), env.get(phi.X, phi.X))
        if isinstance(phi, RootAtom):
            return RootAtom(env.get(phi.x, phi.x))
        if isinstance(phi, PrefixLeq):
            return PrefixLeq(env.get(phi.x, phi.x), env.get(phi.y, phi.y))
        if isinstance(phi, Not):
            return Not(go(phi.body, env))
        if isinstance(phi, (And, Or, Implies)):
            return type(phi)(go(phi.left, env), go(phi.right, env))
        if isinstance(phi, (Exists, Forall)):
            nv = fresh(phi.var)
            env2 = dict(env)
            env2[phi.var] = nv
            return type(phi)(nv, go(phi.body, env2))
        raise TypeError(f"not a formula: {phi!r}")

    return go(phi, env)


def _prenex(phi: Formula):
    """Prefix (list of ('E'|'A', var)) and quantifier-free matrix.  Prefixes
    of subformulas are merged greedily by polarity to minimize blocks."""

    def merge(p1, p2):
        out = []
        i = j = 0
        while i < len(p1) or j < len(p2):
            want = None
            if out:
                want = out[-1][0]
            took = False
            for (src, idx) in (("a", i), ("b", j)):
                lst = p1 if src == "a" else p2
                if idx < len(lst) and (want is None or lst[idx][0] == want):
                    k = idx
                    while k < len(lst) and lst[k][0] == lst[idx][0]:
                        out.append(lst[k])
                        k += 1
                    if src == "a":
                        i = k
                    else:
                        j = k
                    took = True
                    break
            if not took:
                # polarity switch: take the next group from the longer rest
                lst, idx = (p1, i) if (len(p1) - i) >= (len(p2) - j) else (p2, j)
                k = idx
                while k < len(lst) and lst[k][0] == lst[idx][0]:
                    out.append(lst[k])
                    k += 1
                if lst is p1:
                    i = k
                else:
                    j = k
        return out

    def go(phi, neg):
        if isinstance(phi, ATOMS):
            return [], (Not(phi) if neg else phi)
        if isinstance(phi, Not):
            return go(phi.body, not neg)
        if isinstance(phi, Implies):
            return go(Or(Not(phi.left), phi.right), neg)
        if isinstance(phi, (And, Or)):
            p1, m1 = go(phi.left, neg)
            p2, m2 = go(phi.right, neg)
            swap = (neg and isinstance(phi, Or)) or (not neg and isinstance(phi, And))
            op = And if swap else Or
            return merge(p1, p2), op(m1, m2)
        if isinstance(phi, (Exists, Forall)):
            kind = "E" if isinstance(phi, Exists) else "A"
            if neg:
                kind = "A" if kind == "E" else "E"
            p, m = go(phi.body, neg)
            return [(kind, phi.var)] + p, m
        raise TypeError(f"not a formula: {phi!r}")

    return go(_rename_apart(phi), False)


def quantifier_blocks(phi: Formula) -> int:
    """Number of alternating quantifier blocks in prenex form (both sorts
    count; adjacent like quantifiers form one block)."""
    prefix, _ = _prenex(phi)
    blocks = 0
    last = None
    for kind, _v in prefix:
        if kind != last:
            blocks += 1
            last = kind
    return blocks


def is_pi13(phi: Formula) -> bool:
    """Whether the prenex set-quantifier structure fits a universal,
    existential, universal block pattern."""
    prefix, _ = _prenex(phi)
    so = [kind for kind, v in prefix if is_second_order(v)]
    blocks = []
    for kind in so:
        if not blocks or blocks[-1] != kind:
            blocks.append(kind)
    if not blocks:
        return True
    if blocks[0] == "A":
        return len(blocks) <= 3
    return len(blocks) <= 2


# ---------------------------------------------------------------------------
# Compilation to tree automata over bit-vector alphabets.  The track order
# is the context tuple; bound variables extend the context at the end, so
# quantifier elimination always projects the last bit.


def _letters(m: int) -> list[str]:
    if m == 0:
        return ["e"]
    return [format(v, f"0{m}b") for v in range(2 ** m)]


def _alph(m: int) -> Alphabet:
    return Alphabet(tuple(_letters(m)))


def canonical_context(phi: Formula) -> tuple[str, ...]:
    return tuple(sorted(free_vars(phi)))


def _aut(states, initial, trans, rank, m) -> NondetParityTreeAutomaton:
    return NondetParityTreeAutomaton(
        _alph(m), tuple(states), initial, frozenset(trans), rank
    )


def _all_accepting(m) -> NondetParityTreeAutomaton:
    trans = {("qa", l, "qa", "qa") for l in _letters(m)}
    return _aut(["qa"], "qa", trans, {"qa": 0}, m)


def _empty_automaton(m) -> NondetParityTreeAutomaton:
    return _aut(["qe"], "qe", set(), {"qe": 1}, m)


class CompileLog:
    """Per-subformula cost ledger filled during compilation."""

    def __init__(self):
        self.entries: list[dict] = []

    def add(self, subformula: str, op: str, states: int, seconds: float):
        self.entries.append(
            {"subformula": subformula, "op": op, "states": states, "seconds": seconds}
        )

    def lines(self) -> list[str]:
        return [
            f"{e['op']:<12} states={e['states']:<6} {e['seconds']:.3f}s  {e['subformula']}"
            for e in self.entries
        ]


class _Env:
    def __init__(self, budget: int, log: Optional[CompileLog]):
        self.budget = budget
        self.log = log
        self.cache: dict = {}


def _nnf(phi: Formula, neg: bool = False) -> Formula:
    if isinstance(phi, ATOMS):
        return Not(phi) if neg else phi
    if isinstance(phi, Not):
        return _nnf(phi.body, not neg)
    if isinstance(phi, Implies):
        return _nnf(Or(Not(phi.left), phi.right), neg)
    if isinstance(phi, And):
        op = Or if neg else And
        return op(_nnf(phi.left, neg), _nnf(phi.right, neg))
    if isinstance(phi, Or):
        op = And if neg else Or
        return op(_nnf(phi.left, neg), _nnf(phi.right, neg))
    if isinstance(phi, Exists):
        op = Forall if neg else Exists
        return op(phi.var, _nnf(phi.body, neg))
    if isinstance(phi, Forall):
        op = Exists if neg else Forall
        return op(phi.var, _nnf(phi.body, neg))
    raise TypeError(f"not a formula: {phi!r}")


# -- atom automata (liberal outside the singleton encoding; every
# first-order quantifier conjoins the singleton automaton, which makes the
# composition exact on properly encoded valuations)


def _bit(letter: str, i: int) -> bool:
    return letter[i] == "1"


def _eq_atom(ctx, x, y, negated):
    m = len(ctx)
    ix, iy = ctx.index(x), ctx.index(y)
    if not negated:
        trans = {("q", l, "q", "q") for l in _letters(m) if _bit(l, ix) == _bit(l, iy)}
        return _aut(["q"], "q", trans, {"q": 0}, m)
    trans = set()
    for l in _letters(m):
        if _bit(l, ix) != _bit(l, iy):
            trans.add(("qs", l, "qa", "qa"))
        else:
            trans.add(("qs", l, "qs", "qa"))
            trans.add(("qs", l, "qa", "qs"))
        trans.add(("qa", l, "qa", "qa"))
    return _aut(["qs", "qa"], "qs", trans, {"qs": 1, "qa": 0}, m)


def _in_atom(ctx, x, X, negated):
    m = len(ctx)
    ix, iX = ctx.index(x), ctx.index(X)
    if not negated:
        trans = {
            ("q", l, "q", "q")
            for l in _letters(m)
            if (not _bit(l, ix)) or _bit(l, iX)
        }
        return _aut(["q"], "q", trans, {"q": 0}, m)
    trans = set()
    for l in _letters(m):
        if _bit(l, ix) and not _bit(l, iX):
            trans.add(("qs", l, "qa", "qa"))
        trans.add(("qs", l, "qs", "qa"))
        trans.add(("qs", l, "qa", "qs"))
        trans.add(("qa", l, "qa", "qa"))
    return _aut(["qs", "qa"], "qs", trans, {"qs": 1, "qa": 0}, m)


def _succ_atom(ctx, b, x, y, negated):
    m = len(ctx)
    ix, iy = ctx.index(x), ctx.index(y)
    trans = set()
    if not negated:
        # every x-marked node has its b-son y-marked
        for l in _letters(m):
            kids = lambda here: (("qm", "qn") if b == 0 else ("qn", "qm")) if _bit(l, ix) else ("qn", "qn")
            trans.add(("qn", l) + kids(l))
            if _bit(l, iy):
                trans.add(("qm", l) + kids(l))
        return _aut(["qn", "qm"], "qn", trans, {"qn": 0, "qm": 0}, m)
    # some x-marked node whose b-son is not y-marked
    for l in _letters(m):
        if _bit(l, ix):
            trans.add(("qs", l) + (("qc", "qa") if b == 0 else ("qa", "qc")))
        trans.add(("qs", l, "qs", "qa"))
        trans.add(("qs", l, "qa", "qs"))
        if not _bit(l, iy):
            trans.add(("qc", l, "qa", "qa"))
        trans.add(("qa", l, "qa", "qa"))
    return _aut(["qs", "qc", "qa"], "qs", trans, {"qs": 1, "qc": 1, "qa": 0}, m)


def _root_atom(ctx, x, negated):
    m = len(ctx)
    ix = ctx.index(x)
    trans = set()
    for l in _letters(m):
        if _bit(l, ix) != negated:
            trans.add(("qr", l, "qa", "qa"))
        trans.add(("qa", l, "qa", "qa"))
    return _aut(["qr", "qa"], "qr", trans, {"qr": 0, "qa": 0}, m)


def _prefixleq_atom(ctx, x, y, negated):
    m = len(ctx)
    ix, iy = ctx.index(x), ctx.index(y)
    trans = set()
    if not negated:
        # walk to the x mark, then on to the y mark below it
        for l in _letters(m):
            bx, by = _bit(l, ix), _bit(l, iy)
            if bx and by:
                trans.add(("qx", l, "qa", "qa"))
            elif bx:
                trans.add(("qx", l, "qy", "qa"))
                trans.add(("qx", l, "qa", "qy"))
            elif not by:
                trans.add(("qx", l, "qx", "qa"))
                trans.add(("qx", l, "qa", "qx"))
            if by:
                trans.add(("qy", l, "qa", "qa"))
            else:
                trans.add(("qy", l, "qy", "qa"))
                trans.add(("qy", l, "qa", "qy"))
            trans.add(("qa", l, "qa", "qa"))
        return _aut(["qx", "qy", "qa"], "qx", trans, {"qx": 1, "qy": 1, "qa": 0}, m)
    # walk to the y mark; accept iff x was not passed on the way (so x is
    # not a prefix of y)
    for l in _letters(m):
        bx, by = _bit(l, ix), _bit(l, iy)
        if by and not bx:
            trans.add(("q0", l, "qa", "qa"))
        if not by:
            nxt = "q1" if bx else "q0"
            trans.add(("q0", l, nxt, "qa"))
            trans.add(("q0", l, "qa", nxt))
            trans.add(("q1", l, "q1", "qa"))
            trans.add(("q1", l, "qa", "q1"))
        trans.add(("qa", l, "qa", "qa"))
    return _aut(["q0", "q1", "qa"], "q0", trans, {"q0": 1, "q1": 1, "qa": 0}, m)


def _sing(ctx, v):
    m = len(ctx)
    iv = ctx.index(v)
    trans = set()
    for l in _letters(m):
        if _bit(l, iv):
            trans.add(("q1", l, "q0", "q0"))
        else:
            trans.add(("q1", l, "q1", "q0"))
            trans.add(("q1", l, "q0", "q1"))
            trans.add(("q0", l, "q0", "q0"))
    return _aut(["q1", "q0"], "q1", trans, {"q1": 1, "q0": 0}, m)


# -- combinators


def _reduce(A):
    return normalize_tree_ranks(reduce_tree_automaton(A))


def _union(A, B):
    m_amb = A.alphabet
    states = [f"L.{q}" for q in A.states] + [f"R.{q}" for q in B.states] + ["u0"]
    rank = {f"L.{q}": r for q, r in A.rank.items()}
    rank.update({f"R.{q}": r for q, r in B.rank.items()})
    rank["u0"] = 0
    trans = set()
    for (q, a, l, r) in A.transitions:
        trans.add((f"L.{q}", a, f"L.{l}", f"L.{r}"))
        if q == A.initial:
            trans.add(("u0", a, f"L.{l}", f"L.{r}"))
    for (q, a, l, r) in B.transitions:
        trans.add((f"R.{q}", a, f"R.{l}", f"R.{r}"))
        if q == B.initial:
            trans.add(("u0", a, f"R.{l}", f"R.{r}"))
    return NondetParityTreeAutomaton(m_amb, tuple(states), "u0", frozenset(trans), rank)


def _plain_product(A, B, rank_side):
    """Product tracking both runs; only sound when the other side accepts
    every run it has (all ranks even)."""
    byA: dict = {}
    for t in A.transitions:
        byA.setdefault((t[0], t[1]), []).append(t)
    byB: dict = {}
    for t in B.transitions:
        byB.setdefault((t[0], t[1]), []).append(t)

    def name(p, q):
        return f"({p}*{q})"

    start = (A.initial, B.initial)
    states = []
    rank = {}
    trans = set()
    seen = {start}
    todo = [start]
    while todo:
        p, q = todo.pop(0)
        states.append(name(p, q))
        rank[name(p, q)] = A.rank[p] if rank_side == "A" else B.rank[q]
        for a in A.alphabet:
            for (_, _, l1, r1) in byA.get((p, a), []):
                for (_, _, l2, r2) in byB.get((q, a), []):
                    for nxt in ((l1, l2), (r1, r2)):
                        if nxt not in seen:
                            seen.add(nxt)
                            todo.append(nxt)
                    trans.add((name(p, q), a, name(l1, l2), name(r1, r2)))
    return NondetParityTreeAutomaton(
        A.alphabet, tuple(states), name(*start), frozenset(trans), rank
    )


def _buchi_product(A, B):
    """Intersection of two automata with ranks within {0,1}: a round-robin
    counter watches for rank-0 visits on both sides."""
    byA: dict = {}
    for t in A.transitions:
        byA.setdefault((t[0], t[1]), []).append(t)
    byB: dict = {}
    for t in B.transitions:
        byB.setdefault((t[0], t[1]), []).append(t)

    def name(p, q, i):
        return f"({p}*{q}*{i})"

    def advance(p, q, i):
        if i == 1 and A.rank[p] == 0:
            return 2
        if i == 2 and B.rank[q] == 0:
            return 1
        return i

    start = (A.initial, B.initial, 1)
    states = []
    rank = {}
    trans = set()
    seen = {start}
    todo = [start]
    while todo:
        p, q, i = todo.pop(0)
        states.append(name(p, q, i))
        rank[name(p, q, i)] = 0 if (i == 2 and B.rank[q] == 0) else 1
        ii = advance(p, q, i)
        for a in A.alphabet:
            for (_, _, l1, r1) in byA.get((p, a), []):
                for (_, _, l2, r2) in byB.get((q, a), []):
                    for nxt in ((l1, l2, ii), (r1, r2, ii)):
                        if nxt not in seen:
                            seen.add(nxt)
                            todo.append(nxt)
                    trans.add(
                        (name(p, q, i), a, name(l1, l2, ii), name(r1, r2, ii))
                    )
    return NondetParityTreeAutomaton(
        A.alphabet, tuple(states), name(*start), frozenset(trans), rank
    )


_GADGET_CACHE: dict[tuple[int, int], object] = {}


def _pair_gadget(xA: int, xB: int, budget: int):
    """Deterministic parity automaton over rank pairs accepting exactly the
    sequences whose componentwise liminfs are both even.  Built once per
    index pair through the word pipeline and cached."""
    key = (xA, xB)
    if key in _GADGET_CACHE:
        return _GADGET_CACHE[key]
    letters = [f"{i},{j}" for i in range(xA + 1) for j in range(xB + 1)]
    alph = Alphabet(tuple(letters))

    def comp_rank(letter, c):
        i, j = letter.split(",")
        return int(i) if c == 0 else int(j)

    states = ["init"]
    rank = {"init": 1}
    trans = set()
    for l in letters:
        trans.add(("init", l, "init"))
    for c, xc in ((0, xA), (1, xB)):
        for y in range(1, xc + 1, 2):
            for h in (0, 1):
                s = f"c{c}y{y}h{h}"
                states.append(s)
                rank[s] = 0 if h == 1 else 1
            for l in letters:
                rc = comp_rank(l, c)
                if rc >= y:
                    h = 1 if rc == y else 0
                    trans.add(("init", l, f"c{c}y{y}h{h}"))
                    for h0 in (0, 1):
                        trans.add((f"c{c}y{y}h{h0}", l, f"c{c}y{y}h{h}"))
    bad = NondetParityWordAutomaton(
        alph, tuple(states), "init", frozenset(trans), rank
    )
    det = safra_determinize(bad, budget)
    gadget = complement_dpw(normalize_ranks(moore_minimize_dpw(det)))
    _GADGET_CACHE[key] = gadget
    return gadget


def _gadget_product(A, B, budget):
    gadget = _pair_gadget(A.max_rank, B.max_rank, budget)
    byA: dict = {}
    for t in A.transitions:
        byA.setdefault((t[0], t[1]), []).append(t)
    byB: dict = {}
    for t in B.transitions:
        byB.setdefault((t[0], t[1]), []).append(t)

    def pair_letter(p, q):
        return f"{A.rank[p]},{B.rank[q]}"

    def name(p, q, g):
        return f"({p}*{q}*{g})"

    g0 = gadget.step(gadget.initial, pair_letter(A.initial, B.initial))
    start = (A.initial, B.initial, g0)
    states = []
    rank = {}
    trans = set()
    seen = {start}
    todo = [start]
    while todo:
        p, q, g = todo.pop(0)
        states.append(name(p, q, g))
        rank[name(p, q, g)] = gadget.rank[g]
        for a in A.alphabet:
            for (_, _, l1, r1) in byA.get((p, a), []):
                for (_, _, l2, r2) in byB.get((q, a), []):
                    gl = gadget.step(g, pair_letter(l1, l2))
                    gr = gadget.step(g, pair_letter(r1, r2))
                    for nxt in ((l1, l2, gl), (r1, r2, gr)):
                        if nxt not in seen:
                            seen.add(nxt)
                            todo.append(nxt)
                    trans.add(
                        (name(p, q, g), a, name(l1, l2, gl), name(r1, r2, gr))
                    )
    return NondetParityTreeAutomaton(
        A.alphabet, tuple(states), name(*start), frozenset(trans), rank
    )


def _intersect(A, B, env):
    A = normalize_tree_ranks(A)
    B = normalize_tree_ranks(B)
    if all(r % 2 == 0 for r in A.rank.values()):
        return _reduce(_plain_product(A, B, "B"))
    if all(r % 2 == 0 for r in B.rank.values()):
        return _reduce(_plain_product(A, B, "A"))
    if set(A.rank.values()) <= {0, 1} and set(B.rank.values()) <= {0, 1}:
        return _reduce(_buchi_product(A, B))
    return _reduce(_gadget_product(A, B, env.budget))


def _project_last(A, m):
    """Drop the last track: the bound variable's labelling is guessed."""
    new_m = m - 1
    alph = _alph(new_m)

    def short(letter):
        return letter[:-1] if new_m > 0 else "e"

    trans = {(q, short(a), l, r) for (q, a, l, r) in A.transitions}
    return NondetParityTreeAutomaton(
        alph, A.states, A.initial, frozenset(trans), dict(A.rank)
    )


# ---------------------------------------------------------------------------
# Direct constructions for local first-order patterns.  Complementation is
# the exponential step of the pipeline, so first-order quantifiers whose
# body only constrains a node, a parent/child pair, the two sons, or asks
# for a son, compile straight to small safety automata.  Anything else
# falls back to the singleton-encoding route.


class _NoMatch(Exception):
    pass


def _split_foralls(phi):
    """Distribute a first-order universal prefix over conjunctions into
    (vars, clause) pairs."""
    vars_: list[str] = []
    while isinstance(phi, Forall) and not is_second_order(phi.var):
        vars_.append(phi.var)
        phi = phi.body
    clauses: list = []

    def flat(f):
        if isinstance(f, And):
            flat(f.left)
            flat(f.right)
        else:
            clauses.append(f)

    flat(phi)
    out = []
    for c in clauses:
        if isinstance(c, Forall) and not is_second_order(c.var):
            for (vs2, c2) in _split_foralls(c):
                out.append((tuple(vars_) + vs2, c2))
        else:
            out.append((tuple(vars_), c))
    return out


def _eval_clause(phi, atom_val):
    """Evaluate a quantifier-free formula given a valuation of its atoms;
    raises _NoMatch on unsupported atoms."""
    if isinstance(phi, Not):
        return not _eval_clause(phi.body, atom_val)
    if isinstance(phi, And):
        return _eval_clause(phi.left, atom_val) and _eval_clause(phi.right, atom_val)
    if isinstance(phi, Or):
        return _eval_clause(phi.left, atom_val) or _eval_clause(phi.right, atom_val)
    if isinstance(phi, Implies):
        return (not _eval_clause(phi.left, atom_val)) or _eval_clause(phi.right, atom_val)
    if isinstance(phi, ATOMS):
        return atom_val(phi)
    raise _NoMatch


def _clause_vars_ok(phi, allowed, ctx):
    """Check every atom is a supported local atom over `allowed` node
    variables (with set arguments from the context)."""
    if isinstance(phi, Not):
        return _clause_vars_ok(phi.body, allowed, ctx)
    if isinstance(phi, (And, Or, Implies)):
        return _clause_vars_ok(phi.left, allowed, ctx) and _clause_vars_ok(
            phi.right, allowed, ctx
        )
    if isinstance(phi, In):
        return phi.x in allowed and phi.X in ctx
    if isinstance(phi, Eq):
        return phi.x == phi.y
    if isinstance(phi, RootAtom):
        return phi.x in allowed
    if isinstance(phi, Succ):
        return phi.x in allowed and phi.y in allowed
    return False


def _mk_atom_val(ctx, bits_of, roots_of, succs):
    """Atom valuation: bits_of maps var -> letter; roots_of var -> bool;
    succs is the set of true Succ(direction, x, y) triples."""

    def val(atom):
        if isinstance(atom, In):
            return _bit(bits_of[atom.x], ctx.index(atom.X))
        if isinstance(atom, Eq):
            if atom.x == atom.y:
                return True
            raise _NoMatch
        if isinstance(atom, RootAtom):
            if atom.x not in roots_of:
                raise _NoMatch
            return roots_of[atom.x]
        if isinstance(atom, Succ):
            key = (atom.direction, atom.x, atom.y)
            if atom.x in bits_of and atom.y in bits_of:
                return key in succs
            raise _NoMatch
        raise _NoMatch

    return val


def _build_every_node(ctx, clause, v):
    """All nodes satisfy a condition on their own tracks."""
    m = len(ctx)
    letters = _letters(m)

    def cond(l, at_root):
        return _eval_clause(
            clause, _mk_atom_val(ctx, {v: l}, {v: at_root}, set())
        )

    trans = set()
    for l in letters:
        if cond(l, True):
            trans.add(("qr", l, "qn", "qn"))
        if cond(l, False):
            trans.add(("qn", l, "qn", "qn"))
    return _aut(["qr", "qn"], "qr", trans, {"qr": 0, "qn": 0}, m)


def _build_parent_child(ctx, clause, v, w):
    """All parent/child pairs satisfy a condition; unrelated pairs must be
    unconstrained."""
    m = len(ctx)
    letters = _letters(m)

    def f(s0, s1, lv, lw):
        succs = set()
        if s0:
            succs.add((0, v, w))
        if s1:
            succs.add((1, v, w))
        return _eval_clause(
            clause, _mk_atom_val(ctx, {v: lv, w: lw}, {}, succs)
        )

    for lv in letters:
        for lw in letters:
            if not f(False, False, lv, lw):
                raise _NoMatch
    # project parent letters onto the tracks the condition reads
    used = [i for i in range(m) if _parent_bit_used(f, letters, i)]

    def proj(l):
        return tuple(l[i] for i in used)

    rep: dict[tuple, str] = {}
    for l in letters:
        rep.setdefault(proj(l), l)

    def name(p, side):
        return f"q{side}[{''.join(p)}]"

    states = ["qr"]
    rank = {"qr": 0}
    trans = set()
    for p, lv in rep.items():
        for side in (0, 1):
            states.append(name(p, side))
            rank[name(p, side)] = 0
    for l in letters:
        trans.add(("qr", l, name(proj(l), 0), name(proj(l), 1)))
        for p, lv in rep.items():
            for side in (0, 1):
                ok = f(side == 0, side == 1, lv, l)
                if ok:
                    trans.add((name(p, side), l, name(proj(l), 0), name(proj(l), 1)))
    return _aut(states, "qr", trans, rank, m)


def _parent_bit_used(f, letters, i):
    for a in letters:
        for b in letters:
            if a[i] != b[i] and a[:i] == b[:i] and a[i + 1:] == b[i + 1:]:
                for lw in letters:
                    for s0, s1 in ((True, False), (False, True)):
                        if f(s0, s1, a, lw) != f(s0, s1, b, lw):
                            return True
    return False


def _build_two_sons(ctx, clause, v, w, u):
    """All (node, left son, right son) triples satisfy a condition that
    splits as a disjunction of per-son conditions."""
    m = len(ctx)
    letters = _letters(m)

    def f(rel, lv, lw, lu):
        succs = {(0, v, w), (1, v, u)} if rel else set()
        return _eval_clause(clause, _mk_atom_val(ctx, {v: lv, w: lw, u: lu}, {}, succs))

    for lv in letters:
        for lw in letters:
            for lu in letters:
                if not f(False, lv, lw, lu):
                    raise _NoMatch
    w_ok: dict[str, frozenset] = {}
    u_ok: dict[str, frozenset] = {}
    for lv in letters:
        w_ok[lv] = frozenset(
            lw for lw in letters if all(f(True, lv, lw, lu) for lu in letters)
        )
        u_ok[lv] = frozenset(
            lu for lu in letters if all(f(True, lv, lw, lu) for lw in letters)
        )
        for lw in letters:
            for lu in letters:
                if f(True, lv, lw, lu) != (lw in w_ok[lv] or lu in u_ok[lv]):
                    raise _NoMatch

    sets: dict[frozenset, str] = {frozenset(letters): "qT"}

    def sname(s):
        if s not in sets:
            sets[s] = f"q{len(sets)}"
        return sets[s]

    trans = set()
    todo = [frozenset(letters)]
    seen = {frozenset(letters)}
    while todo:
        s = todo.pop(0)
        for l in s:
            for child0, child1 in ((w_ok[l], frozenset(letters)), (frozenset(letters), u_ok[l])):
                for c in (child0, child1):
                    if c not in seen:
                        seen.add(c)
                        todo.append(c)
                trans.add((sname(s), l, sname(child0), sname(child1)))
    states = list(sets.values())
    return _aut(states, "qT", trans, {q: 0 for q in states}, m)


def _build_has_son(ctx, guard_clause, v, w, directions, body_clause):
    """Every node satisfying the guard has a son (in the allowed
    directions) satisfying the body."""
    m = len(ctx)
    letters = _letters(m)

    def A(l):
        return _eval_clause(guard_clause, _mk_atom_val(ctx, {v: l}, {}, set()))

    def B(l):
        return _eval_clause(body_clause, _mk_atom_val(ctx, {w: l}, {}, set()))

    trans = set()
    for l in letters:
        for q in ("qa", "qb"):
            if q == "qb" and not B(l):
                continue
            if A(l):
                if 0 in directions:
                    trans.add((q, l, "qb", "qa"))
                if 1 in directions:
                    trans.add((q, l, "qa", "qb"))
            else:
                trans.add((q, l, "qa", "qa"))
    return _aut(["qa", "qb"], "qa", trans, {"qa": 0, "qb": 0}, m)


def _build_witness_node(ctx, clause, v):
    """Some node satisfies a condition on its own tracks."""
    m = len(ctx)
    letters = _letters(m)

    def cond(l, at_root):
        return _eval_clause(clause, _mk_atom_val(ctx, {v: l}, {v: at_root}, set()))

    trans = set()
    for l in letters:
        if cond(l, True):
            trans.add(("qsr", l, "qa", "qa"))
        trans.add(("qsr", l, "qs", "qa"))
        trans.add(("qsr", l, "qa", "qs"))
        if cond(l, False):
            trans.add(("qs", l, "qa", "qa"))
        trans.add(("qs", l, "qs", "qa"))
        trans.add(("qs", l, "qa", "qs"))
        trans.add(("qa", l, "qa", "qa"))
    return _aut(["qsr", "qs", "qa"], "qsr", trans, {"qsr": 1, "qs": 1, "qa": 0}, m)


def _build_witness_edge(ctx, v_clause, v, w, direction, w_clause):
    """Some node satisfies v_clause and its son in `direction` satisfies
    w_clause.  v may be a free singleton-encoded variable, in which case
    v_clause includes its mark bit."""
    m = len(ctx)
    letters = _letters(m)

    def A(l):
        return _eval_clause(v_clause, _mk_atom_val(ctx, {v: l}, {}, set()))

    def B(l):
        return _eval_clause(w_clause, _mk_atom_val(ctx, {w: l}, {}, set()))

    trans = set()
    for l in letters:
        if A(l):
            trans.add(("qs", l) + (("qc", "qa") if direction == 0 else ("qa", "qc")))
        trans.add(("qs", l, "qs", "qa"))
        trans.add(("qs", l, "qa", "qs"))
        if B(l):
            trans.add(("qc", l, "qa", "qa"))
        trans.add(("qa", l, "qa", "qa"))
    return _aut(["qs", "qc", "qa"], "qs", trans, {"qs": 1, "qc": 1, "qa": 0}, m)


def _succ_atoms_in(phi) -> list:
    if isinstance(phi, Succ):
        return [phi]
    if isinstance(phi, Not):
        return _succ_atoms_in(phi.body)
    if isinstance(phi, (And, Or, Implies)):
        return _succ_atoms_in(phi.left) + _succ_atoms_in(phi.right)
    return []


def _match_forall_clause(ctx, vars_, clause):
    """Dispatch a universally quantified clause to a direct builder."""
    vs = [v for v in vars_ if v in free_vars(clause)]
    if any(is_second_order(v) for v in vs):
        raise _NoMatch
    if len(vs) == 0:
        raise _NoMatch
    if len(vs) == 1:
        v = vs[0]
        # plain per-node condition
        if _clause_vars_ok(clause, {v}, ctx):
            return _build_every_node(ctx, clause, v)
        # guarded son requirement: disjunction with an existential part
        disj = []

        def flat_or(f):
            if isinstance(f, Or):
                flat_or(f.left)
                flat_or(f.right)
            else:
                disj.append(f)

        flat_or(clause)
        ex = [d for d in disj if isinstance(d, Exists)]
        rest = [d for d in disj if not isinstance(d, Exists)]
        if len(ex) != 1:
            raise _NoMatch
        w = ex[0].var
        if is_second_order(w):
            raise _NoMatch
        inner = ex[0].body
        conj = []

        def flat_and(f):
            if isinstance(f, And):
                flat_and(f.left)
                flat_and(f.right)
            else:
                conj.append(f)

        flat_and(inner)
        directions = None
        body = []
        for c in conj:
            succs = _succ_atoms_in(c)
            if succs:
                if isinstance(c, Succ) and c.x == v and c.y == w:
                    directions = {c.direction}
                elif (
                    isinstance(c, Or)
                    and isinstance(c.left, Succ)
                    and isinstance(c.right, Succ)
                    and {c.left.x, c.right.x} == {v}
                    and {c.left.y, c.right.y} == {w}
                    and {c.left.direction, c.right.direction} == {0, 1}
                ):
                    directions = {0, 1}
                else:
                    raise _NoMatch
            else:
                body.append(c)
        if directions is None:
            raise _NoMatch
        guard = Not(_fold_or(rest)) if rest else TAUT_LOCAL
        body_clause = _fold_and(body) if body else TAUT_LOCAL
        if not _clause_vars_ok(guard, {v}, ctx) or not _clause_vars_ok(
            body_clause, {w}, ctx
        ):
            raise _NoMatch
        return _build_has_son(ctx, guard, v, w, directions, body_clause)
    if len(vs) == 2:
        v, w = vs
        if _clause_vars_ok(clause, {v, w}, ctx):
            sa = _succ_atoms_in(clause)
            if all(s.x == v and s.y == w for s in sa):
                return _build_parent_child(ctx, clause, v, w)
            if all(s.x == w and s.y == v for s in sa):
                return _build_parent_child(ctx, clause, w, v)
        raise _NoMatch
    if len(vs) == 3:
        v, w, u = vs
        sa = _succ_atoms_in(clause)
        kinds = {(s.direction, s.x, s.y) for s in sa}
        if kinds == {(0, v, w), (1, v, u)} and _clause_vars_ok(clause, {v, w, u}, ctx):
            return _build_two_sons(ctx, clause, v, w, u)
        if kinds == {(0, v, u), (1, v, w)} and _clause_vars_ok(clause, {v, w, u}, ctx):
            return _build_two_sons(ctx, clause, v, u, w)
        raise _NoMatch
    raise _NoMatch


TAUT_LOCAL = Eq("ztaut", "ztaut")  # local tautology for builder guards


def _fold_and(fs):
    out = fs[0]
    for f in fs[1:]:
        out = And(out, f)
    return out


def _fold_or(fs):
    out = fs[0]
    for f in fs[1:]:
        out = Or(out, f)
    return out


def _match_exists(ctx, phi):
    """Direct builders for small existential patterns (a witness node, or
    a witness edge possibly anchored at a free singleton variable)."""
    vs = []
    body = phi
    while isinstance(body, Exists) and not is_second_order(body.var):
        vs.append(body.var)
        body = body.body
    if not vs:
        raise _NoMatch
    conj = []

    def flat_and(f):
        if isinstance(f, And):
            flat_and(f.left)
            flat_and(f.right)
        else:
            conj.append(f)

    flat_and(body)
    succs = [c for c in conj if isinstance(c, Succ)]
    rest = [c for c in conj if not isinstance(c, Succ)]
    if any(_succ_atoms_in(c) for c in rest):
        raise _NoMatch
    if len(vs) == 1 and not succs:
        v = vs[0]
        clause = _fold_and(rest) if rest else TAUT_LOCAL
        if _clause_vars_ok(clause, {v}, ctx):
            return _build_witness_node(ctx, clause, v)
        raise _NoMatch
    if len(succs) == 1:
        s = succs[0]
        anchor, child = s.x, s.y
        if anchor == child:
            raise _NoMatch
        if child not in vs:
            raise _NoMatch
        if anchor not in vs and anchor not in ctx:
            raise _NoMatch
        v_parts = []
        w_parts = []
        for c in rest:
            fv = free_vars(c)
            if fv <= {anchor} | set(ctx) - {child}:
                if _clause_vars_ok(c, {anchor}, ctx):
                    v_parts.append(c)
                else:
                    raise _NoMatch
            elif fv <= {child} | set(ctx) - {anchor}:
                if _clause_vars_ok(c, {child}, ctx):
                    w_parts.append(c)
                else:
                    raise _NoMatch
            else:
                raise _NoMatch
        v_clause = _fold_and(v_parts) if v_parts else TAUT_LOCAL
        w_clause = _fold_and(w_parts) if w_parts else TAUT_LOCAL
        if anchor in ctx:
            # anchored at a free singleton track: the guard is its mark bit
            # (internally In(anchor, anchor) reads the anchor's own track)
            v_clause = And(In(anchor, anchor), v_clause)
        return _build_witness_edge(ctx, v_clause, anchor, s.y, s.direction, w_clause)
    raise _NoMatch


# ---------------------------------------------------------------------------
# Main compilation.

_FORMULA_CACHE: dict = {}


def clear_caches():
    _FORMULA_CACHE.clear()
    _GADGET_CACHE.clear()


def _log(env, phi, op, A, t0):
    if env.log is not None:
        env.log.add(pretty(phi), op, len(A.states), time.perf_counter() - t0)
    return A


def _complement_npt(A, env, phi):
    from .complement import complement as tree_complement

    t0 = time.perf_counter()
    B, _report = tree_complement(A, env.budget)
    return _log(env, phi, "complement", B, t0)


def _strip_forall_chain(phi):
    chain = []
    while isinstance(phi, Forall):
        chain.append(phi.var)
        phi = phi.body
    return chain, phi


def _compile(phi: Formula, ctx: tuple[str, ...], env: _Env):
    key = (pretty(phi), ctx)
    if key in _FORMULA_CACHE:
        return _FORMULA_CACHE[key]
    if key in env.cache:
        return env.cache[key]
    t0 = time.perf_counter()
    A = _compile_inner(phi, ctx, env)
    env.cache[key] = A
    _FORMULA_CACHE[key] = A
    return A


def _compile_inner(phi: Formula, ctx: tuple[str, ...], env: _Env):
    m = len(ctx)
    if isinstance(phi, Eq):
        return _eq_atom(ctx, phi.x, phi.y, False)
    if isinstance(phi, Succ):
        return _succ_atom(ctx, phi.direction, phi.x, phi.y, False)
    if isinstance(phi, In):
        return _in_atom(ctx, phi.x, phi.X, False)
    if isinstance(phi, RootAtom):
        return _root_atom(ctx, phi.x, False)
    if isinstance(phi, PrefixLeq):
        return _prefixleq_atom(ctx, phi.x, phi.y, False)
    if isinstance(phi, Not):
        body = phi.body
        if isinstance(body, Eq):
            return _eq_atom(ctx, body.x, body.y, True)
        if isinstance(body, Succ):
            return _succ_atom(ctx, body.direction, body.x, body.y, True)
        if isinstance(body, In):
            return _in_atom(ctx, body.x, body.X, True)
        if isinstance(body, RootAtom):
            return _root_atom(ctx, body.x, True)
        if isinstance(body, PrefixLeq):
            return _prefixleq_atom(ctx, body.x, body.y, True)
        # non-atomic negation survived normal form only via general fallback
        return _complement_npt(_compile(_nnf(body, True), ctx, env), env, phi)
    if isinstance(phi, Implies):
        return _compile(_nnf(phi), ctx, env)
    if isinstance(phi, And):
        t0 = time.perf_counter()
        A = _intersect(_compile(phi.left, ctx, env), _compile(phi.right, ctx, env), env)
        return _log(env, phi, "intersect", A, t0)
    if isinstance(phi, Or):
        t0 = time.perf_counter()
        A = _reduce(_union(_compile(phi.left, ctx, env), _compile(phi.right, ctx, env)))
        return _log(env, phi, "union", A, t0)
    if isinstance(phi, Exists):
        if phi.var not in free_vars(phi.body):
            return _compile(phi.body, ctx, env)
        try:
            A = _match_exists(ctx, phi)
            return _log(env, phi, "direct-exists", A, time.perf_counter())
        except _NoMatch:
            pass
        t0 = time.perf_counter()
        sub = ctx + (phi.var,)
        A = _compile(phi.body, sub, env)
        if not is_second_order(phi.var):
            A = _intersect(A, _sing(sub, phi.var), env)
        A = _reduce(_project_last(A, len(sub)))
        return _log(env, phi, "project", A, t0)
    if isinstance(phi, Forall):
        if phi.var not in free_vars(phi.body):
            return _compile(phi.body, ctx, env)
        if not is_second_order(phi.var):
            # try the local builders clause by clause
            pieces = []
            leftovers = []
            for (vars_, clause) in _split_foralls(phi):
                used = [v for v in vars_ if v in free_vars(clause)]
                try:
                    pieces.append(_match_forall_clause(ctx, tuple(used), clause))
                except _NoMatch:
                    rebuilt = clause
                    for v in reversed(used):
                        rebuilt = Forall(v, rebuilt)
                    leftovers.append(rebuilt)
            if not leftovers:
                A = _all_accepting(m)
                for p in pieces:
                    A = _intersect(A, p, env)
                return _log(env, phi, "direct-forall", A, time.perf_counter())
            if pieces:
                A = pieces[0]
                for p in pieces[1:]:
                    A = _intersect(A, p, env)
                for lf in leftovers:
                    A = _intersect(A, _forall_general(lf, ctx, env), env)
                return A
        return _forall_general(phi, ctx, env)
    raise TypeError(f"not a formula: {phi!r}")


def _forall_general(phi: Forall, ctx, env):
    """A block of universal quantifiers costs one complementation: the
    whole chain is dualized at once."""
    t0 = time.perf_counter()
    chain, body = _strip_forall_chain(phi)
    sub = ctx + tuple(chain)
    A = _compile(_nnf(body, True), sub, env)
    for v in chain:
        if not is_second_order(v):
            A = _intersect(A, _sing(sub, v), env)
    for _ in chain:
        A = _project_last(A, len(sub))
        sub = sub[:-1]
    A = _reduce(A)
    A = _complement_npt(A, env, phi)
    return _log(env, phi, "forall", A, t0)


def compile_formula(
    phi: Formula,
    budget: int = DEFAULT_BUDGET,
    log: Optional[CompileLog] = None,
    context: Optional[Sequence[str]] = None,
) -> NondetParityTreeAutomaton:
    """Automaton over {0,1}^m accepting exactly the encoded valuations of
    the formula's free variables (sorted order) that satisfy it."""
    ctx = tuple(context) if context is not None else canonical_context(phi)
    missing = free_vars(phi) - set(ctx)
    if missing:
        raise ValueError(f"context is missing free variables {sorted(missing)}")
    env = _Env(budget, log)
    return _compile(_nnf(phi), ctx, env)


# ---------------------------------------------------------------------------
# Deciding sentences.


@dataclass(frozen=True)
class DecideResult:
    value: bool
    witness: Optional[RegularTree] = None


def decide(
    phi: Union[str, Formula],
    budget: int = DEFAULT_BUDGET,
    want_witness: bool = False,
    log: Optional[CompileLog] = None,
) -> DecideResult:
    """Truth of a sentence over the infinite binary tree.

    Outermost negations and universal blocks are folded into the verdict
    (saving their complementations); a leading second-order existential
    block can report a satisfying regular labelling as a witness.
    """
    from .automata import npt_emptiness

    if isinstance(phi, str):
        phi = parse(phi)
    if free_vars(phi):
        raise ValueError("decide needs a sentence (no free variables)")
    polarity = True
    while True:
        if isinstance(phi, Not):
            polarity = not polarity
            phi = phi.body
        elif isinstance(phi, Forall):
            polarity = not polarity
            phi = Exists(phi.var, Not(phi.body))
        else:
            break
    env = _Env(budget, log)
    witness = None
    if (
        want_witness
        and polarity
        and isinstance(phi, Exists)
        and is_second_order(phi.var)
    ):
        ctx = (phi.var,)
        A = _compile(_nnf(phi.body), ctx, env)
        witness = npt_emptiness(A)
        value = witness is not None
    else:
        A = _compile(_nnf(phi), (), env)
        value = npt_emptiness(A) is not None
    return DecideResult(value if polarity else not value, witness)


# ---------------------------------------------------------------------------
# Valuations: assignments encoded as trees over {0,1}^m.


@dataclass(frozen=True)
class Valuation:
    """Assignment of free variables: first-order variables to nodes (binary
    strings), second-order variables to regular {0,1}-labelled trees."""

    first_order: Mapping[str, str]
    second_order: Mapping[str, RegularTree]


def _node_component(s: str):
    # marks exactly the node s
    nodes = [f"p{i}" for i in range(len(s) + 1)] + ["out"]

    def ch(i, b):
        if i < len(s) and s[i] == b:
            return f"p{i + 1}"
        return "out"

    label = {f"p{i}": "1" if i == len(s) else "0" for i in range(len(s) + 1)}
    label["out"] = "0"
    left = {f"p{i}": ch(i, "0") for i in range(len(s) + 1)}
    right = {f"p{i}": ch(i, "1") for i in range(len(s) + 1)}
    left["out"] = "out"
    right["out"] = "out"
    return RegularTree(_alph(1), tuple(nodes), "p0", label, left, right)


def valuation_tree(ctx: Sequence[str], val: Valuation) -> RegularTree:
    """Product tree with one {0,1} track per context variable."""
    comps = []
    for v in ctx:
        if is_second_order(v):
            T = val.second_order[v]
            if sorted(T.alphabet) != ["0", "1"]:
                raise ValueError(f"labelling for {v} must be over 0/1")
            comps.append(T)
        else:
            node = val.first_order[v]
            if any(c not in "01" for c in node):
                raise ValueError(f"node for {v} must be a binary string")
            comps.append(_node_component(node))
    if not comps:
        raise ValueError("empty context")
    start = tuple(c.root for c in comps)
    names: dict[tuple, str] = {start: "n0"}
    order = [start]
    todo = [start]
    while todo:
        cur = todo.pop(0)
        for side in ("left", "right"):
            nxt = tuple(
                (c.left if side == "left" else c.right)[cur[i]]
                for i, c in enumerate(comps)
            )
            if nxt not in names:
                names[nxt] = f"n{len(names)}"
                order.append(nxt)
                todo.append(nxt)
    label = {}
    left = {}
    right = {}
    for cur in order:
        n = names[cur]
        label[n] = "".join(c.label[cur[i]] for i, c in enumerate(comps))
        left[n] = names[tuple(c.left[cur[i]] for i, c in enumerate(comps))]
        right[n] = names[tuple(c.right[cur[i]] for i, c in enumerate(comps))]
    return RegularTree(
        _alph(len(ctx)), tuple(names[c] for c in order), "n0", label, left, right
    )


def satisfies(phi: Formula, val: Valuation, budget: int = DEFAULT_BUDGET) -> bool:
    """Model checking against an explicit valuation (for tests and the
    semantics of open formulas)."""
    from .automata import npt_member

    ctx = canonical_context(phi)
    A = compile_formula(phi, budget=budget)
    T = valuation_tree(ctx, val)
    ok, _w = npt_member(A, T)
    return ok


# ---------------------------------------------------------------------------
# Sentences asserting positional determinacy of layered games on the tree.
#
# A game of index (0,x) with k+1 layers is described by free set variables,
# one per bit of the structured game alphabet: binary rank tracks per layer
# and one track per (layer, direction, layer) edge.  Each player's winning
# predicate quantifies a depth-parity marker and a positional strategy,
# then universally a play (layer visit sets) together with per-value tail
# certificates.  The liminf clauses speak about tails of the play, so the
# tail quantifiers here are set quantifiers; the block counts (4 for a
# single player's predicate, 5 for the closed sentence) are preserved.


TAUT = Forall("ztaut", Eq("ztaut", "ztaut"))
FALSUM = Exists("zfalse", Not(Eq("zfalse", "zfalse")))


def _And(*fs) -> Formula:
    out = [f for f in fs if f != TAUT]
    if any(f == FALSUM for f in out):
        return FALSUM
    if not out:
        return TAUT
    return _fold_and(out)


def _Or(*fs) -> Formula:
    out = [f for f in fs if f != FALSUM]
    if any(f == TAUT for f in out):
        return TAUT
    if not out:
        return FALSUM
    return _fold_or(out)


def _imp(a: Formula, b: Formula) -> Formula:
    if a == TAUT:
        return b
    if a == FALSUM or b == TAUT:
        return TAUT
    if b == FALSUM:
        return Not(a)
    return Implies(a, b)


def _iff(a: Formula, b: Formula) -> Formula:
    return _Or(_And(a, b), _And(Not(a), Not(b)))


def _exists_chain(vs, body):
    for v in reversed(vs):
        body = Exists(v, body)
    return body


def _forall_chain(vs, body):
    for v in reversed(vs):
        body = Forall(v, body)
    return body


def _exactly_one(lits) -> Formula:
    return _Or(
        *[
            _And(l, *[Not(o) for j, o in enumerate(lits) if j != i])
            for i, l in enumerate(lits)
        ]
    )


def _at_most_one(lits) -> Formula:
    out = []
    for i in range(len(lits)):
        for j in range(i + 1, len(lits)):
            out.append(Not(_And(lits[i], lits[j])))
    return _And(*out)


def positional_determinacy_sentence(x: int, k: int = 0, part: str = "psi") -> Formula:
    """Determinacy sentence family for layered games of index (0,x) on the
    binary tree.

    part="psi" gives the closed sentence (either player wins every
    well-formed labelled game); "exists"/"forall" give the open winning
    predicates over the labelling variables.
    """
    if x < 0 or k < 0:
        raise ValueError("x and k must be non-negative")
    nb = max(0, int(x).bit_length())
    layers = range(k + 1)
    moves = [(b, j) for b in (0, 1) for j in layers]

    def RK(i, bit):
        return f"RK{i}B{bit}"

    def E(i, b, j):
        return f"E{i}D{b}T{j}"

    def S(pl, i, b, j):
        return f"S{pl}{i}D{b}T{j}"

    def P(i):
        return f"P{i}"

    D = "DEven"
    label_vars = [RK(i, t) for i in layers for t in range(nb)] + [
        E(i, b, j) for i in layers for (b, j) in moves
    ]

    def rank_value(v, i, r):
        return _And(
            *[
                In(v, RK(i, t)) if (r >> t) & 1 else Not(In(v, RK(i, t)))
                for t in range(nb)
            ]
        )

    def rank_ge(v, i, y):
        if y <= 0:
            return TAUT
        return _Or(*[rank_value(v, i, r) for r in range(y, x + 1)])

    def rank_le_max(v, i):
        if nb == 0 or (1 << nb) == x + 1:
            return TAUT
        return _Or(*[rank_value(v, i, r) for r in range(x + 1)])

    def on_play(v):
        return _Or(*[In(v, P(i)) for i in layers])

    def owned(v, pl):
        return In(v, D) if pl == "E" else Not(In(v, D))

    wf = _And(
        *[
            Forall("zv", _Or(*[In("zv", E(i, b, j)) for (b, j) in moves]))
            for i in layers
        ],
        *[Forall("zv", rank_le_max("zv", i)) for i in layers],
    )

    valid_d = _And(
        Forall("zr", _imp(RootAtom("zr"), In("zr", D))),
        *[
            Forall(
                "zv",
                Forall(
                    "zw",
                    _imp(Succ(b, "zv", "zw"), _iff(In("zw", D), Not(In("zv", D)))),
                ),
            )
            for b in (0, 1)
        ],
    )

    def gamma(pl):
        return _And(
            *[
                Forall(
                    "zv",
                    _imp(
                        owned("zv", pl),
                        _exactly_one([In("zv", S(pl, i, b, j)) for (b, j) in moves]),
                    ),
                )
                for i in layers
            ],
            *[
                Forall(
                    "zv",
                    _imp(
                        _And(owned("zv", pl), In("zv", S(pl, i, b, j))),
                        In("zv", E(i, b, j)),
                    ),
                )
                for i in layers
                for (b, j) in moves
            ],
        )

    vp = _And(
        Forall("zv", _imp(RootAtom("zv"), In("zv", P(0)))),
        Forall("zv", _at_most_one([In("zv", P(i)) for i in layers])),
        Forall(
            "zv",
            _imp(
                on_play("zv"),
                Exists(
                    "zw",
                    _And(
                        _Or(Succ(0, "zv", "zw"), Succ(1, "zv", "zw")), on_play("zw")
                    ),
                ),
            ),
        ),
        Forall(
            "zv",
            Forall(
                "zw",
                Forall(
                    "zu",
                    _imp(
                        _And(Succ(0, "zv", "zw"), Succ(1, "zv", "zu")),
                        Not(_And(on_play("zw"), on_play("zu"))),
                    ),
                ),
            ),
        ),
        *[
            Forall(
                "zv",
                Forall(
                    "zw",
                    _imp(_And(Succ(b, "zv", "zw"), on_play("zw")), on_play("zv")),
                ),
            )
            for b in (0, 1)
        ],
        *[
            Forall(
                "zv",
                Forall(
                    "zw",
                    _imp(
                        _And(Succ(b, "zv", "zw"), In("zv", P(i)), In("zw", P(j))),
                        In("zv", E(i, b, j)),
                    ),
                ),
            )
            for i in layers
            for (b, j) in moves
        ],
    )

    def cons(pl):
        return _And(
            *[
                Forall(
                    "zv",
                    Forall(
                        "zw",
                        _imp(
                            _And(
                                Succ(b, "zv", "zw"),
                                owned("zv", pl),
                                In("zv", P(i)),
                                In("zw", P(j)),
                            ),
                            In("zv", S(pl, i, b, j)),
                        ),
                    ),
                )
                for i in layers
                for (b, j) in moves
            ]
        )

    def tail(F):
        return _And(
            Exists("zt", In("zt", F)),
            Forall("zt", _imp(In("zt", F), on_play("zt"))),
            *[
                Forall(
                    "zt",
                    Forall(
                        "zu",
                        _imp(
                            _And(In("zt", F), Succ(b, "zt", "zu"), on_play("zu")),
                            In("zu", F),
                        ),
                    ),
                )
                for b in (0, 1)
            ],
        )

    def rank_ge_at(v, y):
        return _And(*[_imp(In(v, P(i)), rank_ge(v, i, y)) for i in layers])

    def rank_eq_at(v, y):
        return _Or(*[_And(In(v, P(i)), rank_value(v, i, y)) for i in layers])

    def beta(y):
        F = f"F{y}"
        G = f"G{y}"
        return _And(
            Exists(
                F,
                _And(tail(F), Forall("zt", _imp(In("zt", F), rank_ge_at("zt", y)))),
            ),
            _imp(tail(G), Exists("zh", _And(In("zh", G), rank_eq_at("zh", y)))),
        )

    def win_values(pl):
        return [y for y in range(x + 1) if (y % 2 == 0) == (pl == "E")]

    def W(pl):
        values = win_values(pl)
        win = _Or(*[beta(y) for y in values])
        gvars = [f"G{y}" for y in values]
        inner = _forall_chain(
            [P(i) for i in layers] + gvars, _imp(_And(vp, cons(pl)), win)
        )
        svars = [S(pl, i, b, j) for i in layers for (b, j) in moves]
        return _exists_chain([D] + svars, _And(valid_d, gamma(pl), inner))

    if part == "exists":
        return W("E")
    if part == "forall":
        return W("A")
    if part != "psi":
        raise ValueError("part must be psi, exists, or forall")
    return _forall_chain(label_vars, _imp(wf, _Or(W("E"), W("A"))))
