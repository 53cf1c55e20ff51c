"""Parity automata on infinite words and trees, parity games, tree-automaton
complementation, and an MSO decision procedure over the infinite binary
tree."""

from .automata import (
    Alphabet,
    AlphabetMismatch,
    BudgetExceeded,
    DetParityWordAutomaton,
    LassoRunWitness,
    NondetParityTreeAutomaton,
    NondetParityWordAutomaton,
    StrategyWitness,
    UltimatelyPeriodicWord,
    complete_tree_automaton,
    normalize_tree_ranks,
    npt_emptiness,
    npt_member,
    npw_member,
    reduce_tree_automaton,
    verify_lasso_witness,
)
from .complement import (
    ComplementationReport,
    StrategyAlphabet,
    build_step1,
    build_step2,
    build_step3,
    complement,
    complement_via_steps,
    pathfinder_game,
    project_guess_delta,
)
from .determinize import (
    DEFAULT_BUDGET,
    SafraTree,
    complement_dpw,
    normalize_ranks,
    parity_to_buchi,
    safra_determinize,
)
from .formats import (
    FormatError,
    parse_automaton,
    parse_game,
    parse_regular_tree,
    serialize_automaton,
    serialize_game,
    serialize_regular_tree,
)
from .games import (
    DifferenceCondition,
    ParityGame,
    Player,
    PositionalStrategy,
    SolveResult,
    brute_force_solve,
    difference_to_rank_labelling,
    parity_play_winner,
    solve,
    verify_positional_strategy,
)
from .mso import (
    CompileLog,
    DecideResult,
    MsoSyntaxError,
    Valuation,
    compile_formula,
    decide,
    is_pi13,
    parse,
    positional_determinacy_sentence,
    pretty,
    quantifier_blocks,
    satisfies,
    valuation_tree,
)
from .trees import (
    GameStructure,
    GameTreeAlphabet,
    RegularTree,
    decode_game,
    encode_game,
    subtree_equiv,
    unfold,
)

__version__ = "0.1.0"
