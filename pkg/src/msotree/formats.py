"""Line-based textual formats for automata, parity games, and regular
trees.  `#` starts a comment; blank lines and extra whitespace are
ignored."""
from __future__ import annotations

from typing import Union

from .automata import (
    Alphabet,
    DetParityWordAutomaton,
    NondetParityTreeAutomaton,
    NondetParityWordAutomaton,
)
from .games import ParityGame, Player
from .trees import GameTreeAlphabet, RegularTree


class FormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


AnyAutomaton = Union[
    NondetParityWordAutomaton, DetParityWordAutomaton, NondetParityTreeAutomaton
]


def _lines(text: str):
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield i, line.split()


def parse_automaton(text: str) -> AnyAutomaton:
    kind = None
    name = None
    alphabet = None
    states = None
    initial = None
    rank = {}
    transitions = []
    for lineno, toks in _lines(text):
        head = toks[0]
        if kind is None:
            if head not in ("npw", "npt", "dpw"):
                raise FormatError(lineno, f"expected header npw|npt|dpw, got {head!r}")
            kind = head
            name = toks[1] if len(toks) > 1 else ""
        elif head == "alphabet":
            if alphabet is not None:
                raise FormatError(lineno, "duplicate alphabet line")
            alphabet = Alphabet(tuple(toks[1:]))
        elif head == "states":
            if states is not None:
                raise FormatError(lineno, "duplicate states line")
            if len(set(toks[1:])) != len(toks[1:]):
                raise FormatError(lineno, "duplicate state ids")
            states = tuple(toks[1:])
        elif head == "initial":
            if initial is not None:
                raise FormatError(lineno, "duplicate initial line")
            initial = toks[1]
        elif head == "rank":
            if len(toks) != 3:
                raise FormatError(lineno, "rank line needs: rank <state> <value>")
            if toks[1] in rank:
                raise FormatError(lineno, f"duplicate rank for {toks[1]!r}")
            try:
                rank[toks[1]] = int(toks[2])
            except ValueError:
                raise FormatError(lineno, f"bad rank value {toks[2]!r}")
        else:
            if "->" not in toks:
                raise FormatError(lineno, f"unrecognized line starting {head!r}")
            arrow = toks.index("->")
            lhs, rhs = toks[:arrow], toks[arrow + 1:]
            if len(lhs) != 2:
                raise FormatError(lineno, "transition needs: <state> <symbol> -> ...")
            if kind in ("npw", "dpw"):
                if len(rhs) != 1:
                    raise FormatError(lineno, "word transition needs one target")
                transitions.append((lhs[0], lhs[1], rhs[0]))
            else:
                if len(rhs) != 2:
                    raise FormatError(lineno, "tree transition needs two targets")
                transitions.append((lhs[0], lhs[1], rhs[0], rhs[1]))
    if kind is None:
        raise FormatError(0, "empty automaton description")
    if alphabet is None or states is None or initial is None:
        raise FormatError(0, "missing alphabet, states, or initial line")
    cls = {
        "npw": NondetParityWordAutomaton,
        "dpw": DetParityWordAutomaton,
        "npt": NondetParityTreeAutomaton,
    }[kind]
    try:
        return cls(alphabet, states, initial, frozenset(transitions), rank)
    except ValueError as exc:
        raise FormatError(0, str(exc))


def serialize_automaton(A: AnyAutomaton, name: str = "") -> str:
    if isinstance(A, DetParityWordAutomaton):
        kind, word = "dpw", True
    elif isinstance(A, NondetParityWordAutomaton):
        kind, word = "npw", True
    else:
        kind, word = "npt", False
    out = [f"{kind} {name}".rstrip()]
    out.append("alphabet " + " ".join(A.alphabet))
    out.append("states " + " ".join(A.states))
    out.append(f"initial {A.initial}")
    for q in A.states:
        out.append(f"rank {q} {A.rank[q]}")
    for t in sorted(A.transitions):
        if word:
            out.append(f"{t[0]} {t[1]} -> {t[2]}")
        else:
            out.append(f"{t[0]} {t[1]} -> {t[2]} {t[3]}")
    return "\n".join(out) + "\n"


def parse_game(text: str) -> ParityGame:
    index = None
    initial = None
    vertices = []
    owner = {}
    rank = {}
    edges = set()
    for lineno, toks in _lines(text):
        if toks[0] == "parity-game":
            if len(toks) != 4 or toks[1] != "index" or toks[2] != "0":
                raise FormatError(lineno, "header must be: parity-game index 0 <x>")
            index = int(toks[3])
        elif toks[0] == "initial":
            initial = toks[1]
        else:
            if index is None:
                raise FormatError(lineno, "missing parity-game header")
            if len(toks) != 4 or toks[2] != "->":
                raise FormatError(lineno, "vertex line needs: <id> <owner>(<rank>) -> <succs>")
            vid, ow = toks[0], toks[1]
            if not (ow.endswith(")") and "(" in ow):
                raise FormatError(lineno, f"bad owner/rank field {ow!r}")
            pname, rpart = ow[:-1].split("(", 1)
            if pname not in ("E", "A"):
                raise FormatError(lineno, f"owner must be E or A, got {pname!r}")
            if vid in owner:
                raise FormatError(lineno, f"duplicate vertex {vid!r}")
            vertices.append(vid)
            owner[vid] = Player.EXISTS if pname == "E" else Player.FORALL
            try:
                rank[vid] = int(rpart)
            except ValueError:
                raise FormatError(lineno, f"bad rank {rpart!r}")
            for succ in toks[3].split(","):
                if succ:
                    edges.add((vid, succ))
    if index is None:
        raise FormatError(0, "missing parity-game header")
    try:
        return ParityGame(tuple(vertices), owner, rank, frozenset(edges), initial, index)
    except ValueError as exc:
        raise FormatError(0, str(exc))


def serialize_game(G: ParityGame) -> str:
    out = [f"parity-game index 0 {G.index}"]
    if G.initial is not None:
        out.append(f"initial {G.initial}")
    for v in G.vertices:
        ow = "E" if G.owner[v] is Player.EXISTS else "A"
        out.append(f"{v} {ow}({G.rank[v]}) -> " + ",".join(G.succ[v]))
    return "\n".join(out) + "\n"


def parse_regular_tree(text: str) -> RegularTree:
    alphabet = None
    root = None
    nodes = []
    label = {}
    left = {}
    right = {}
    started = False
    for lineno, toks in _lines(text):
        if not started:
            if toks[0] != "regtree":
                raise FormatError(lineno, "expected regtree header")
            started = True
        elif toks[0] == "alphabet":
            if toks[1] == "gametree":
                if len(toks) != 4:
                    raise FormatError(lineno, "gametree alphabet needs: alphabet gametree <x> <k>")
                alphabet = GameTreeAlphabet(int(toks[2]), int(toks[3]))
            else:
                alphabet = Alphabet(tuple(toks[1:]))
        elif toks[0] == "root":
            root = toks[1]
        else:
            nid = toks[0]
            fields = {}
            for tok in toks[1:]:
                if "=" not in tok:
                    raise FormatError(lineno, f"expected key=value, got {tok!r}")
                k, v = tok.split("=", 1)
                fields[k] = v
            for k in ("label", "left", "right"):
                if k not in fields:
                    raise FormatError(lineno, f"node line missing {k}=")
            if nid in label:
                raise FormatError(lineno, f"duplicate node {nid!r}")
            nodes.append(nid)
            label[nid] = fields["label"]
            left[nid] = fields["left"]
            right[nid] = fields["right"]
    if alphabet is None or root is None:
        raise FormatError(0, "missing alphabet or root line")
    try:
        return RegularTree(alphabet, tuple(nodes), root, label, left, right)
    except ValueError as exc:
        raise FormatError(0, str(exc))


def serialize_regular_tree(T: RegularTree) -> str:
    out = ["regtree"]
    if isinstance(T.alphabet, GameTreeAlphabet):
        out.append(f"alphabet gametree {T.alphabet.x} {T.alphabet.k}")
    else:
        out.append("alphabet " + " ".join(T.alphabet))
    out.append(f"root {T.root}")
    for n in T.nodes:
        out.append(f"{n} label={T.label[n]} left={T.left[n]} right={T.right[n]}")
    return "\n".join(out) + "\n"
