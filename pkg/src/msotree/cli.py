"""Command line front-end.

Every subcommand reads the shared textual formats and can emit a JSON
envelope with --json.  `decide` exits 0 on true and 1 on false sentences;
errors exit 2.
"""
from __future__ import annotations

import argparse
import json
import sys

from .automata import BudgetExceeded, npt_emptiness, npt_member
from .complement import complement
from .determinize import (
    DEFAULT_BUDGET,
    complement_dpw,
    normalize_ranks,
    parity_to_buchi,
    safra_determinize,
)
from .formats import (
    parse_automaton,
    parse_game,
    parse_regular_tree,
    serialize_automaton,
    serialize_game,
    serialize_regular_tree,
)
from .automata import DetParityWordAutomaton, NondetParityTreeAutomaton
from .games import Player, solve
from .mso import (
    CompileLog,
    compile_formula,
    decide,
    parse as parse_mso,
    positional_determinacy_sentence,
    pretty,
    quantifier_blocks,
    is_pi13,
)


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path) as fh:
        return fh.read()


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps({"command": args.command, "ok": True, "result": payload}))
    else:
        if text:
            print(text, end="" if text.endswith("\n") else "\n")


def _sentence_from(args) -> str:
    if args.expr is not None:
        return args.expr
    return _read(args.file)


def cmd_decide(args) -> int:
    log = CompileLog() if args.cost_ledger else None
    res = decide(
        parse_mso(_sentence_from(args)),
        budget=args.budget,
        want_witness=args.witness,
        log=log,
    )
    payload = {"value": res.value}
    text = "true" if res.value else "false"
    if res.witness is not None:
        wtxt = serialize_regular_tree(res.witness)
        payload["witness"] = wtxt
        text += "\n" + wtxt
    if log is not None:
        text += "\n" + "\n".join(log.lines())
        payload["cost"] = log.entries
    _emit(args, payload, text)
    return 0 if res.value else 1


def cmd_compile(args) -> int:
    phi = parse_mso(_sentence_from(args), allow_free=True)
    A = compile_formula(phi, budget=args.budget)
    out = serialize_automaton(A, "compiled")
    _emit(args, {"automaton": out, "states": len(A.states)}, out)
    return 0


def cmd_complement(args) -> int:
    A = parse_automaton(_read(args.file))
    if not isinstance(A, NondetParityTreeAutomaton):
        raise ValueError("complement expects a tree automaton (npt)")
    B, report = complement(A, budget=args.budget)
    out = serialize_automaton(B, "complement")
    text = out
    payload = {"automaton": out}
    if args.report:
        text += "\n".join(report.lines()) + "\n"
        payload["report"] = report.lines()
    _emit(args, payload, text)
    return 0


def cmd_complement_word(args) -> int:
    A = parse_automaton(_read(args.file))
    if isinstance(A, NondetParityTreeAutomaton):
        raise ValueError("complement-word expects a word automaton")
    if not isinstance(A, DetParityWordAutomaton):
        A = safra_determinize(parity_to_buchi(A), args.budget)
    out = serialize_automaton(normalize_ranks(complement_dpw(A)), "complement")
    _emit(args, {"automaton": out}, out)
    return 0


def cmd_determinize(args) -> int:
    A = parse_automaton(_read(args.file))
    if isinstance(A, NondetParityTreeAutomaton):
        raise ValueError("determinize expects a word automaton (npw)")
    D = safra_determinize(parity_to_buchi(A), args.budget)
    D = normalize_ranks(D)
    out = serialize_automaton(D, "determinized")
    _emit(args, {"automaton": out, "states": len(D.states)}, out)
    return 0


def cmd_membership(args) -> int:
    A = parse_automaton(_read(args.automaton))
    T = parse_regular_tree(_read(args.tree))
    ok, _wit = npt_member(A, T)
    _emit(args, {"member": ok}, "accepted" if ok else "rejected")
    return 0 if ok else 1


def cmd_emptiness(args) -> int:
    A = parse_automaton(_read(args.automaton))
    witness = npt_emptiness(A)
    if witness is None:
        _emit(args, {"empty": True}, "empty")
        return 1
    out = serialize_regular_tree(witness)
    _emit(args, {"empty": False, "witness": out}, "nonempty\n" + out)
    return 0


def cmd_solve_game(args) -> int:
    G = parse_game(_read(args.game))
    res = solve(G)
    lines = []
    lines.append("even-wins " + " ".join(sorted(res.win_exists, key=G._pos.get)))
    lines.append("odd-wins " + " ".join(sorted(res.win_forall, key=G._pos.get)))
    for name, st in (("even", res.strategy_exists), ("odd", res.strategy_forall)):
        for v in sorted(st.moves, key=G._pos.get):
            lines.append(f"strategy-{name} {v} -> {st.moves[v]}")
    text = "\n".join(lines)
    _emit(
        args,
        {
            "even_wins": sorted(res.win_exists, key=G._pos.get),
            "odd_wins": sorted(res.win_forall, key=G._pos.get),
            "strategy_even": dict(res.strategy_exists.moves),
            "strategy_odd": dict(res.strategy_forall.moves),
        },
        text,
    )
    return 0


def cmd_psi(args) -> int:
    phi = positional_determinacy_sentence(args.index, args.layers, part=args.part)
    text = pretty(phi)
    _emit(
        args,
        {
            "formula": text,
            "quantifier_blocks": quantifier_blocks(phi),
            "pi13": is_pi13(phi),
        },
        text,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="msotree",
        description="automata, games, and the MSO decision procedure on the "
        "infinite binary tree",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p, budget=True):
        p.add_argument("--json", action="store_true", help="JSON output envelope")
        if budget:
            p.add_argument(
                "--budget",
                type=int,
                default=DEFAULT_BUDGET,
                help="macro-state cap for determinization (default %(default)s)",
            )

    p = sub.add_parser("decide", help="decide an MSO sentence")
    p.add_argument("file", nargs="?", default="-")
    p.add_argument("-e", "--expr", default=None, help="sentence given inline")
    p.add_argument("--witness", action="store_true")
    p.add_argument("--cost-ledger", action="store_true")
    add_common(p)
    p.set_defaults(fn=cmd_decide)

    p = sub.add_parser("compile", help="compile a formula to a tree automaton")
    p.add_argument("file", nargs="?", default="-")
    p.add_argument("-e", "--expr", default=None)
    add_common(p)
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("complement", help="complement a tree automaton")
    p.add_argument("file")
    p.add_argument("--report", action="store_true")
    add_common(p)
    p.set_defaults(fn=cmd_complement)

    p = sub.add_parser("complement-word", help="complement a word automaton")
    p.add_argument("file")
    add_common(p)
    p.set_defaults(fn=cmd_complement_word)

    p = sub.add_parser("determinize", help="determinize a parity word automaton")
    p.add_argument("file")
    add_common(p)
    p.set_defaults(fn=cmd_determinize)

    p = sub.add_parser("membership", help="does the automaton accept the tree?")
    p.add_argument("automaton")
    p.add_argument("tree")
    add_common(p, budget=False)
    p.set_defaults(fn=cmd_membership)

    p = sub.add_parser("emptiness", help="emptiness with regular witness")
    p.add_argument("automaton")
    add_common(p, budget=False)
    p.set_defaults(fn=cmd_emptiness)

    p = sub.add_parser("solve-game", help="solve a parity game")
    p.add_argument("game")
    add_common(p, budget=False)
    p.set_defaults(fn=cmd_solve_game)

    p = sub.add_parser("psi", help="emit a positional-determinacy sentence")
    p.add_argument("--index", type=int, required=True, help="rank bound x")
    p.add_argument("--layers", type=int, default=0, help="extra layers k")
    p.add_argument(
        "--part", choices=["psi", "exists", "forall"], default="psi"
    )
    add_common(p, budget=False)
    p.set_defaults(fn=cmd_psi)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except BudgetExceeded as exc:
        if args.json:
            print(json.dumps({"command": args.command, "ok": False, "error": str(exc)}))
        else:
            print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        if getattr(args, "json", False):
            print(json.dumps({"command": args.command, "ok": False, "error": str(exc)}))
        else:
            print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
