"""
Propositional kernel: terms, goals, theorems, the concrete text grammar and a
brute-force semantic oracle.

Everything else in the prover is checked against this module, so it is kept
small and free of heuristics.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pyparsing as pp

pp.ParserElement.enable_packrat()

# Exhaustive enumeration is 2**n assignments wide
MAX_ORACLE_VARS = 24

VAR_PATTERN = re.compile(r"[a-z][a-z0-9_]*")

NOT_TOKEN = "~"
AND_TOKEN = "/\\"
OR_TOKEN = "\\/"
IMP_TOKEN = "==>"
IFF_TOKEN = "<=>"
TRUE_TOKEN = "T"
FALSE_TOKEN = "F"

OPERATOR_TOKENS = (NOT_TOKEN, AND_TOKEN, OR_TOKEN, IMP_TOKEN, IFF_TOKEN)
CONSTANT_TOKENS = (TRUE_TOKEN, FALSE_TOKEN)


class TermSyntaxError(ValueError):
    """Raised when text does not belong to the term grammar."""

    def __init__(self, text: str, offset: int, expected: Sequence[str]):
        self.text = text
        self.offset = offset
        self.expected = tuple(expected)
        super().__init__(
            f"syntax error at byte {offset}: expected one of "
            f"{', '.join(self.expected)}"
        )


class VariableBudgetError(ValueError):
    """Raised when the oracle is asked to enumerate too many variables."""


# ========== TERMS ==========

class Term:
    """Base class of the propositional AST."""

    __slots__ = ()

    def __str__(self) -> str:
        return print_term(self)


@dataclass(frozen=True, slots=True)
class Var(Term):
    name: str

    def __post_init__(self):
        if not VAR_PATTERN.fullmatch(self.name):
            raise ValueError(f"invalid variable name: {self.name!r}")


@dataclass(frozen=True, slots=True)
class ConstTrue(Term):
    pass


@dataclass(frozen=True, slots=True)
class ConstFalse(Term):
    pass


@dataclass(frozen=True, slots=True)
class Not(Term):
    arg: Term


@dataclass(frozen=True, slots=True)
class And(Term):
    left: Term
    right: Term


@dataclass(frozen=True, slots=True)
class Or(Term):
    left: Term
    right: Term


@dataclass(frozen=True, slots=True)
class Imp(Term):
    left: Term
    right: Term


@dataclass(frozen=True, slots=True)
class Iff(Term):
    left: Term
    right: Term


TRUE = ConstTrue()
FALSE = ConstFalse()

BINARY_TYPES = (And, Or, Imp, Iff)

_BINARY_TOKENS = {And: AND_TOKEN, Or: OR_TOKEN, Imp: IMP_TOKEN, Iff: IFF_TOKEN}
_TOKEN_BINARY = {token: cls for cls, token in _BINARY_TOKENS.items()}

# Binding strength used by the printer; higher binds tighter
_PRECEDENCE = {Iff: 1, Imp: 2, Or: 3, And: 4, Not: 5}
_RIGHT_ASSOC = (Imp, Iff)


def _precedence(t: Term) -> int:
    return _PRECEDENCE.get(type(t), 6)


def is_binary(t: Term) -> bool:
    return isinstance(t, BINARY_TYPES)


def children(t: Term) -> Tuple[Term, ...]:
    """Immediate subterms, left to right."""
    if isinstance(t, Not):
        return (t.arg,)
    if is_binary(t):
        return (t.left, t.right)
    return ()


def rebuild(t: Term, kids: Sequence[Term]) -> Term:
    """Same node as `t` with its children replaced."""
    if isinstance(t, Not):
        return Not(kids[0])
    if is_binary(t):
        return type(t)(kids[0], kids[1])
    return t


def term_size(t: Term) -> int:
    return 1 + sum(term_size(c) for c in children(t))


def term_depth(t: Term) -> int:
    kids = children(t)
    return 1 + (max(term_depth(c) for c in kids) if kids else 0)


# ========== PRINTING ==========

def print_term(t: Term) -> str:
    """Render a term in the concrete grammar with minimal parentheses."""
    if isinstance(t, Var):
        return t.name
    if isinstance(t, ConstTrue):
        return TRUE_TOKEN
    if isinstance(t, ConstFalse):
        return FALSE_TOKEN
    if isinstance(t, Not):
        inner = print_term(t.arg)
        if _precedence(t.arg) < _PRECEDENCE[Not]:
            inner = f"({inner})"
        return f"{NOT_TOKEN}{inner}"

    prec = _precedence(t)
    right_assoc = isinstance(t, _RIGHT_ASSOC)
    left = print_term(t.left)
    right = print_term(t.right)
    left_prec = _precedence(t.left)
    right_prec = _precedence(t.right)
    if left_prec < prec or (left_prec == prec and right_assoc):
        left = f"({left})"
    if right_prec < prec or (right_prec == prec and not right_assoc):
        right = f"({right})"
    return f"{left} {_BINARY_TOKENS[type(t)]} {right}"


# ========== PARSING ==========

def _fold_not(tokens):
    items = list(tokens[0])
    result = items[-1]
    for _ in items[:-1]:
        result = Not(result)
    return result


def _fold_left(tokens):
    items = list(tokens[0])
    result = items[0]
    for i in range(1, len(items), 2):
        result = _TOKEN_BINARY[items[i]](result, items[i + 1])
    return result


def _fold_right(tokens):
    items = list(tokens[0])
    result = items[-1]
    for i in range(len(items) - 2, 0, -2):
        result = _TOKEN_BINARY[items[i]](items[i - 1], result)
    return result


def _build_term_grammar() -> pp.ParserElement:
    identifier = pp.Regex(VAR_PATTERN.pattern).set_name("identifier")
    identifier.set_parse_action(lambda toks: Var(toks[0]))
    true_const = pp.Keyword(TRUE_TOKEN).set_parse_action(lambda: TRUE)
    false_const = pp.Keyword(FALSE_TOKEN).set_parse_action(lambda: FALSE)
    atom = identifier | true_const | false_const

    return pp.infix_notation(
        atom,
        [
            (pp.Literal(NOT_TOKEN), 1, pp.OpAssoc.RIGHT, _fold_not),
            (pp.Literal(AND_TOKEN), 2, pp.OpAssoc.LEFT, _fold_left),
            (pp.Literal(OR_TOKEN), 2, pp.OpAssoc.LEFT, _fold_left),
            (pp.Literal(IMP_TOKEN), 2, pp.OpAssoc.RIGHT, _fold_right),
            (pp.Literal(IFF_TOKEN), 2, pp.OpAssoc.RIGHT, _fold_right),
        ],
    ).set_name("term")


TERM_GRAMMAR = _build_term_grammar()

_OPERAND_START = ("identifier", TRUE_TOKEN, FALSE_TOKEN, "(", NOT_TOKEN)
_AFTER_OPERAND = (AND_TOKEN, OR_TOKEN, IMP_TOKEN, IFF_TOKEN, ")", "end of input")


def expected_tokens_at(text: str, offset: int) -> Tuple[str, ...]:
    """
    Tokens the grammar could accept at `offset`, judged from what precedes it.

    An operand (identifier, constant or closing parenthesis) can only be
    followed by a binary operator, a closing parenthesis or the end; anything
    else must be followed by the start of an operand.
    """
    before = text[:offset].rstrip()
    if before and (before[-1].isalnum() or before[-1] in "_)"):
        return _AFTER_OPERAND
    return _OPERAND_START


def syntax_error_from(text: str, exc: pp.ParseBaseException) -> TermSyntaxError:
    offset = min(exc.loc, len(text))
    byte_offset = len(text[:offset].encode("utf-8"))
    return TermSyntaxError(text, byte_offset, expected_tokens_at(text, offset))


def parse_term(text: str) -> Term:
    """
    Parse `text` in the concrete grammar.

    Args:
        text: infix formula using ~ /\\ \\/ ==> <=>, parentheses, identifiers, T and F

    Returns:
        The unique term for the text

    Raises:
        TermSyntaxError: with the byte offset and the set of expected tokens
    """
    try:
        return TERM_GRAMMAR.parse_string(text, parse_all=True)[0]
    except pp.ParseBaseException as exc:
        raise syntax_error_from(text, exc) from None


# ========== POLISH TOKENS ==========

def tokenize_polish(t: Term) -> List[str]:
    """Preorder traversal, one token per node."""
    tokens: List[str] = []
    stack = [t]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            tokens.append(node.name)
        elif isinstance(node, ConstTrue):
            tokens.append(TRUE_TOKEN)
        elif isinstance(node, ConstFalse):
            tokens.append(FALSE_TOKEN)
        elif isinstance(node, Not):
            tokens.append(NOT_TOKEN)
            stack.append(node.arg)
        else:
            tokens.append(_BINARY_TOKENS[type(node)])
            stack.append(node.right)
            stack.append(node.left)
    return tokens


# ========== VARIABLES AND SUBSTITUTION ==========

def free_vars(t: Term) -> List[str]:
    """Variable names in left-to-right first-occurrence order."""
    seen: Dict[str, None] = {}
    for token in tokenize_polish(t):
        if VAR_PATTERN.fullmatch(token):
            seen.setdefault(token, None)
    return list(seen)


def subst_var(t: Term, v: str, value: Term) -> Term:
    """Replace every occurrence of Var(v) by `value`."""
    if isinstance(t, Var):
        return value if t.name == v else t
    kids = children(t)
    if not kids:
        return t
    return rebuild(t, [subst_var(k, v, value) for k in kids])


def theory_prefix(var_name: str) -> str:
    """Leading letters of a variable name; names the theory that owns it."""
    match = re.match(r"[a-z]+", var_name)
    return match.group(0) if match else var_name


# ========== GOALS AND THEOREMS ==========

@dataclass(frozen=True, eq=False)
class Goal:
    """
    A sequent `assumptions |- conclusion`.

    Equality and hashing treat the assumptions as a set, so goals that differ
    only in assumption order or duplicates are the same goal.
    """

    assumptions: Tuple[Term, ...]
    conclusion: Term
    _key: Tuple[frozenset, Term] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "assumptions", tuple(self.assumptions))
        object.__setattr__(self, "_key", (frozenset(self.assumptions), self.conclusion))

    @property
    def key(self) -> Tuple[frozenset, Term]:
        return self._key

    def __eq__(self, other) -> bool:
        if not isinstance(other, Goal):
            return NotImplemented
        return self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __str__(self) -> str:
        return print_goal(self)

    def canonical_assumptions(self) -> List[Term]:
        """Distinct assumptions sorted by printed form."""
        return sorted(set(self.assumptions), key=print_term)

    def as_implication(self) -> Term:
        """Fold the assumptions as antecedents of the conclusion."""
        result = self.conclusion
        for assumption in reversed(self.canonical_assumptions()):
            result = Imp(assumption, result)
        return result

    def variables(self) -> List[str]:
        seen: Dict[str, None] = {}
        for a in self.assumptions:
            for name in free_vars(a):
                seen.setdefault(name, None)
        for name in free_vars(self.conclusion):
            seen.setdefault(name, None)
        return list(seen)


def goal_of(conclusion: Term, assumptions: Iterable[Term] = ()) -> Goal:
    return Goal(tuple(assumptions), conclusion)


GOAL_GRAMMAR = (
    pp.Opt(pp.Group(pp.DelimitedList(TERM_GRAMMAR))("assumptions"))
    + pp.Suppress("|-")
    + TERM_GRAMMAR("conclusion")
) | TERM_GRAMMAR("conclusion")


def parse_goal(text: str) -> Goal:
    """Parse `a1, a2 |- c`, or a bare term as a goal without assumptions."""
    try:
        result = GOAL_GRAMMAR.parse_string(text, parse_all=True)
    except pp.ParseBaseException as exc:
        raise syntax_error_from(text, exc) from None
    assumptions = list(result["assumptions"]) if "assumptions" in result else []
    return Goal(tuple(assumptions), result["conclusion"])


def print_goal(g: Goal) -> str:
    if not g.assumptions:
        return print_term(g.conclusion)
    lhs = ", ".join(print_term(a) for a in g.assumptions)
    return f"{lhs} |- {print_term(g.conclusion)}"


@dataclass(frozen=True)
class Theorem:
    name: str
    statement: Term
    theory: str
    library_index: int

    def __str__(self) -> str:
        return self.name


# ========== ORACLE ==========

def _evaluate_columns(t: Term, columns: Dict[str, np.ndarray], width: int) -> np.ndarray:
    if isinstance(t, Var):
        return columns[t.name]
    if isinstance(t, ConstTrue):
        return np.ones(width, dtype=bool)
    if isinstance(t, ConstFalse):
        return np.zeros(width, dtype=bool)
    if isinstance(t, Not):
        return ~_evaluate_columns(t.arg, columns, width)
    left = _evaluate_columns(t.left, columns, width)
    right = _evaluate_columns(t.right, columns, width)
    if isinstance(t, And):
        return left & right
    if isinstance(t, Or):
        return left | right
    if isinstance(t, Imp):
        return ~left | right
    return left == right


def truth_table(t: Term, variables: Optional[Sequence[str]] = None) -> np.ndarray:
    """
    Value of `t` under every assignment of `variables` (default: its free vars).

    Row k assigns bit i of k to variable i.
    """
    names = list(variables) if variables is not None else free_vars(t)
    if len(names) > MAX_ORACLE_VARS:
        raise VariableBudgetError(
            f"{len(names)} variables exceed the oracle budget of {MAX_ORACLE_VARS}"
        )
    width = 1 << len(names)
    rows = np.arange(width, dtype=np.int64)
    columns = {name: ((rows >> i) & 1).astype(bool) for i, name in enumerate(names)}
    return _evaluate_columns(t, columns, width)


def is_valid_term(t: Term) -> bool:
    return bool(truth_table(t).all())


def is_tautology(g: Goal) -> bool:
    """True iff the conjunction of the assumptions implies the conclusion."""
    formula = g.conclusion
    for assumption in reversed(g.assumptions):
        formula = Imp(assumption, formula)
    return is_valid_term(formula)
