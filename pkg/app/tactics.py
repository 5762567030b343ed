"""
Tactic engine: maps a goal plus arguments to an outcome under a step budget.

Every tactic is sound with respect to the kernel oracle: if all returned
subgoals are valid then so is the input goal.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .kernel import (
    FALSE,
    TRUE,
    And,
    ConstFalse,
    ConstTrue,
    Goal,
    Iff,
    Imp,
    Not,
    Or,
    Term,
    Theorem,
    Var,
    children,
    print_term,
    rebuild,
    subst_var,
    theory_prefix,
)

DEFAULT_FUEL = 1000


class ArgKind(Enum):
    NONE = "none"
    SINGLE_TERM = "term"
    SINGLE_THEOREM = "theorem"
    THEOREM_LIST = "theorem_list"


class TacticId(Enum):
    """The tactic table; its order fixes the tactic head's output dimension."""

    STRIP_TAC = "strip_tac"
    EQ_TAC = "eq_tac"
    CASE_ON = "cases_on"
    SIMP = "simp"
    FS = "fs"
    RW = "rw"
    METIS = "metis_tac"
    DRULE = "drule"
    IRULE = "irule"

    @property
    def arg_kind(self) -> ArgKind:
        return _ARG_KINDS[self]

    @property
    def index(self) -> int:
        return TACTICS.index(self)

    @property
    def takes_theorems(self) -> bool:
        return self.arg_kind in (ArgKind.SINGLE_THEOREM, ArgKind.THEOREM_LIST)

    @classmethod
    def from_name(cls, name: str) -> "TacticId":
        for tactic in cls:
            if tactic.value == name:
                return tactic
        raise ValueError(f"unknown tactic: {name}")


_ARG_KINDS = {
    TacticId.STRIP_TAC: ArgKind.NONE,
    TacticId.EQ_TAC: ArgKind.NONE,
    TacticId.CASE_ON: ArgKind.SINGLE_TERM,
    TacticId.DRULE: ArgKind.SINGLE_THEOREM,
    TacticId.IRULE: ArgKind.SINGLE_THEOREM,
    TacticId.SIMP: ArgKind.THEOREM_LIST,
    TacticId.FS: ArgKind.THEOREM_LIST,
    TacticId.RW: ArgKind.THEOREM_LIST,
    TacticId.METIS: ArgKind.THEOREM_LIST,
}

TACTICS: Tuple[TacticId, ...] = tuple(TacticId)

Argument = Union[Term, Theorem]


# ========== OUTCOMES ==========

@dataclass(frozen=True)
class Subgoals:
    """Proving every goal here proves the input goal; empty means proved."""

    goals: Tuple[Goal, ...]

    @property
    def proved(self) -> bool:
        return not self.goals


@dataclass(frozen=True)
class NoChange:
    pass


@dataclass(frozen=True)
class Failed:
    reason: str


@dataclass(frozen=True)
class FuelExhausted:
    pass


TacticOutcome = Union[Subgoals, NoChange, Failed, FuelExhausted]


class _OutOfFuel(Exception):
    pass


class Fuel:
    """Deterministic step budget; `None` means unlimited."""

    def __init__(self, amount: Optional[int]):
        self.remaining = amount

    def spend(self, steps: int = 1) -> None:
        if self.remaining is None:
            return
        self.remaining -= steps
        if self.remaining < 0:
            raise _OutOfFuel()


def _dedupe_goals(goals: Iterable[Goal]) -> Tuple[Goal, ...]:
    seen: Dict[Goal, None] = {}
    for g in goals:
        seen.setdefault(g, None)
    return tuple(seen)


def _dedupe_terms(terms: Iterable[Term]) -> Tuple[Term, ...]:
    seen: Dict[Term, None] = {}
    for t in terms:
        seen.setdefault(t, None)
    return tuple(seen)


# ========== MATCHING ==========

def match(pattern: Term, term: Term, binding: Optional[Dict[str, Term]] = None) -> Optional[Dict[str, Term]]:
    """
    Bind the pattern's variables to subterms so it equals `term`.

    Returns the extended binding, or None when the shapes disagree.
    """
    binding = dict(binding or {})
    stack = [(pattern, term)]
    while stack:
        p, t = stack.pop()
        if isinstance(p, Var):
            bound = binding.get(p.name)
            if bound is None:
                binding[p.name] = t
            elif bound != t:
                return None
            continue
        if type(p) is not type(t):
            return None
        stack.extend(reversed(list(zip(children(p), children(t)))))
    return binding


def instantiate(t: Term, binding: Mapping[str, Term]) -> Term:
    """Simultaneous substitution; unbound variables stay as they are."""
    if isinstance(t, Var):
        return binding.get(t.name, t)
    kids = children(t)
    if not kids:
        return t
    return rebuild(t, [instantiate(k, binding) for k in kids])


# ========== REWRITING ==========

def _complementary(a: Term, b: Term) -> bool:
    return (isinstance(a, Not) and a.arg == b) or (isinstance(b, Not) and b.arg == a)


def basic_rewrite(t: Term) -> Optional[Term]:
    """
    One step of built-in boolean simplification at the root, or None.

    Every rule strictly shrinks the term, so rewriting with these alone
    terminates and decides every closed formula.
    """
    if isinstance(t, Not):
        arg = t.arg
        if isinstance(arg, ConstTrue):
            return FALSE
        if isinstance(arg, ConstFalse):
            return TRUE
        if isinstance(arg, Not):
            return arg.arg
        return None
    if isinstance(t, And):
        l, r = t.left, t.right
        if isinstance(l, ConstTrue):
            return r
        if isinstance(r, ConstTrue):
            return l
        if isinstance(l, ConstFalse) or isinstance(r, ConstFalse):
            return FALSE
        if l == r:
            return l
        if _complementary(l, r):
            return FALSE
        return None
    if isinstance(t, Or):
        l, r = t.left, t.right
        if isinstance(l, ConstTrue) or isinstance(r, ConstTrue):
            return TRUE
        if isinstance(l, ConstFalse):
            return r
        if isinstance(r, ConstFalse):
            return l
        if l == r:
            return l
        if _complementary(l, r):
            return TRUE
        return None
    if isinstance(t, Imp):
        l, r = t.left, t.right
        if isinstance(l, ConstTrue):
            return r
        if isinstance(l, ConstFalse) or isinstance(r, ConstTrue):
            return TRUE
        if isinstance(r, ConstFalse):
            return Not(l)
        if l == r:
            return TRUE
        return None
    if isinstance(t, Iff):
        l, r = t.left, t.right
        if l == r:
            return TRUE
        if isinstance(l, ConstTrue):
            return r
        if isinstance(r, ConstTrue):
            return l
        if isinstance(l, ConstFalse):
            return Not(r)
        if isinstance(r, ConstFalse):
            return Not(l)
        return None
    return None


def facts_of(assumption: Term) -> Dict[Term, Term]:
    """Rewrites an assumption licenses: itself to T, a negated atom to F."""
    facts: Dict[Term, Term] = {}
    stack = [assumption]
    while stack:
        a = stack.pop()
        if isinstance(a, (ConstTrue, ConstFalse)):
            continue
        if isinstance(a, And):
            stack.extend((a.right, a.left))
            continue
        facts[a] = TRUE
        if isinstance(a, Not):
            facts[a.arg] = FALSE
    return facts


RewriteRule = Tuple[Term, Term]


def rewrite_rules(theorems: Sequence[Theorem]) -> List[RewriteRule]:
    """Left-to-right rules from Iff theorems; other theorems give none."""
    rules = []
    for thm in theorems:
        statement = thm.statement
        if not isinstance(statement, Iff):
            continue
        lhs, rhs = statement.left, statement.right
        if isinstance(lhs, Var) or lhs == rhs:
            continue
        rules.append((lhs, rhs))
    return rules


class Rewriter:
    """Bottom-up rewriting to a fixpoint with contextual assumptions."""

    def __init__(self, rules: Sequence[RewriteRule], fuel: Fuel):
        self.rules = list(rules)
        self.fuel = fuel

    def _step(self, t: Term, context: Mapping[Term, Term]) -> Optional[Term]:
        replacement = context.get(t)
        if replacement is not None and replacement != t:
            return replacement
        result = basic_rewrite(t)
        if result is not None:
            return result
        for lhs, rhs in self.rules:
            binding = match(lhs, t)
            if binding is not None:
                return instantiate(rhs, binding)
        return None

    def _rewrite_children(self, t: Term, context: Mapping[Term, Term]) -> Term:
        if isinstance(t, Imp):
            left = self.rewrite(t.left, context)
            inner = dict(context)
            inner.update(facts_of(left))
            return Imp(left, self.rewrite(t.right, inner))
        kids = children(t)
        return rebuild(t, [self.rewrite(k, context) for k in kids]) if kids else t

    def rewrite(self, t: Term, context: Mapping[Term, Term]) -> Term:
        node = t
        while True:
            replacement = context.get(node)
            if replacement is not None and replacement != node:
                self.fuel.spend()
                return replacement
            node = self._rewrite_children(node, context)
            step = self._step(node, context)
            if step is None:
                return node
            self.fuel.spend()
            node = step


def simplify(t: Term, context: Optional[Mapping[Term, Term]] = None) -> Term:
    """Built-in simplification only; always terminates."""
    return Rewriter([], Fuel(None)).rewrite(t, context or {})


def _context_of(assumptions: Iterable[Term]) -> Dict[Term, Term]:
    context: Dict[Term, Term] = {}
    for a in assumptions:
        context.update(facts_of(a))
    return context


# ========== TACTICS ==========

def _conjuncts(t: Term) -> List[Term]:
    if isinstance(t, And):
        return _conjuncts(t.left) + _conjuncts(t.right)
    if isinstance(t, ConstTrue):
        return []
    return [t]


def _closed_outright(g: Goal) -> bool:
    assumptions = set(g.assumptions)
    return isinstance(g.conclusion, ConstTrue) or g.conclusion in assumptions or FALSE in assumptions


def _strip_tac(g: Goal, fuel: Fuel) -> TacticOutcome:
    if _closed_outright(g):
        return Subgoals(())
    worklist = [g]
    result: List[Goal] = []
    while worklist:
        current = worklist.pop(0)
        c = current.conclusion
        if isinstance(c, Imp):
            fuel.spend()
            assumptions = _dedupe_terms(current.assumptions + tuple(_conjuncts(c.left)))
            worklist.insert(0, Goal(assumptions, c.right))
        elif isinstance(c, Not) and not isinstance(c.arg, (ConstTrue, ConstFalse)):
            fuel.spend()
            assumptions = _dedupe_terms(current.assumptions + tuple(_conjuncts(c.arg)))
            worklist.insert(0, Goal(assumptions, FALSE))
        elif isinstance(c, And):
            fuel.spend()
            worklist[0:0] = [Goal(current.assumptions, c.left), Goal(current.assumptions, c.right)]
        else:
            result.append(current)
    goals = _dedupe_goals(result)
    if goals == (g,):
        return NoChange()
    return Subgoals(goals)


def _eq_tac(g: Goal) -> TacticOutcome:
    c = g.conclusion
    if not isinstance(c, Iff):
        return Failed("eq_tac: conclusion is not an equivalence")
    return Subgoals(_dedupe_goals([
        Goal(g.assumptions, Imp(c.left, c.right)),
        Goal(g.assumptions, Imp(c.right, c.left)),
    ]))


def _case_on(g: Goal, term: Term) -> TacticOutcome:
    if not isinstance(term, Var) or term.name not in g.variables():
        return Failed(f"cases_on: {term} is not a variable of the goal")
    branches = []
    for value in (TRUE, FALSE):
        branches.append(Goal(
            tuple(subst_var(a, term.name, value) for a in g.assumptions),
            subst_var(g.conclusion, term.name, value),
        ))
    return Subgoals(_dedupe_goals(branches))


def _simp(g: Goal, theorems: Sequence[Theorem], fuel: Fuel, use_assumptions: bool) -> TacticOutcome:
    if FALSE in g.assumptions:
        return Subgoals(())
    rewriter = Rewriter(rewrite_rules(theorems), fuel)
    context = _context_of(g.assumptions) if use_assumptions else {}
    conclusion = rewriter.rewrite(g.conclusion, context)
    if isinstance(conclusion, ConstTrue):
        return Subgoals(())
    return Subgoals((Goal(g.assumptions, conclusion),))


def _fs(g: Goal, theorems: Sequence[Theorem], fuel: Fuel) -> TacticOutcome:
    rewriter = Rewriter(rewrite_rules(theorems), fuel)
    kept: List[Term] = []
    context: Dict[Term, Term] = {}
    for assumption in g.assumptions:
        simplified = rewriter.rewrite(assumption, context)
        if isinstance(simplified, ConstFalse):
            return Subgoals(())
        if isinstance(simplified, ConstTrue):
            continue
        kept.append(simplified)
        context.update(facts_of(simplified))
    conclusion = rewriter.rewrite(g.conclusion, context)
    if isinstance(conclusion, ConstTrue):
        return Subgoals(())
    return Subgoals((Goal(_dedupe_terms(kept), conclusion),))


def _unit_literal(t: Term) -> Optional[Tuple[str, Term]]:
    """A literal among the antecedent conjuncts of an implication, if any."""
    if not isinstance(t, Imp):
        return None
    for conjunct in _conjuncts(t.left):
        if isinstance(conjunct, Var):
            return conjunct.name, TRUE
        if isinstance(conjunct, Not) and isinstance(conjunct.arg, Var):
            return conjunct.arg.name, FALSE
    return None


def _first_var(t: Term) -> Optional[str]:
    stack = [t]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            return node.name
        stack.extend(reversed(children(node)))
    return None


def decide_valid(formula: Term, fuel: Fuel) -> bool:
    """
    Case-splitting validity check with unit propagation on antecedents.

    Each search node costs one unit of fuel; the answer is exact.
    """
    fuel.spend()
    reduced = simplify(formula)
    if isinstance(reduced, ConstTrue):
        return True
    if isinstance(reduced, ConstFalse):
        return False
    unit = _unit_literal(reduced)
    if unit is not None:
        # The opposite branch falsifies the antecedent
        name, value = unit
        return decide_valid(subst_var(reduced, name, value), fuel)
    name = _first_var(reduced)
    return (decide_valid(subst_var(reduced, name, TRUE), fuel)
            and decide_valid(subst_var(reduced, name, FALSE), fuel))


def _metis(g: Goal, theorems: Sequence[Theorem], fuel: Fuel) -> TacticOutcome:
    formula = g.conclusion
    premises = list(g.assumptions) + [thm.statement for thm in theorems]
    for premise in reversed(premises):
        formula = Imp(premise, formula)
    if decide_valid(formula, fuel):
        return Subgoals(())
    return Failed("metis_tac: goal is not a tautology")


def _split_implication(statement: Term) -> Tuple[List[Term], Term]:
    antecedents = []
    while isinstance(statement, Imp):
        antecedents.append(statement.left)
        statement = statement.right
    return antecedents, statement


def _drule(g: Goal, theorem: Theorem) -> TacticOutcome:
    statement = theorem.statement
    if not isinstance(statement, Imp):
        return Failed(f"drule: {theorem.name} is not an implication")
    for assumption in g.assumptions:
        binding = match(statement.left, assumption)
        if binding is None:
            continue
        derived = instantiate(statement.right, binding)
        if derived in g.assumptions:
            return NoChange()
        return Subgoals((Goal(g.assumptions + (derived,), g.conclusion),))
    return Failed(f"drule: no assumption matches {theorem.name}")


def _irule(g: Goal, theorem: Theorem) -> TacticOutcome:
    antecedents, consequent = _split_implication(theorem.statement)
    if not antecedents:
        return Failed(f"irule: {theorem.name} is not an implication")
    binding = match(consequent, g.conclusion)
    if binding is None:
        return Failed(f"irule: {theorem.name} does not conclude the goal")
    premise = antecedents[-1]
    for antecedent in reversed(antecedents[:-1]):
        premise = And(antecedent, premise)
    return Subgoals((Goal(g.assumptions, instantiate(premise, binding)),))


def check_arguments(tactic: TacticId, args: Sequence[Argument]) -> Optional[str]:
    """Why `args` do not fit the tactic's argument kind, or None."""
    kind = tactic.arg_kind
    if kind is ArgKind.NONE and args:
        return f"{tactic.value} takes no arguments"
    if kind is ArgKind.SINGLE_TERM and (len(args) != 1 or not isinstance(args[0], Term)):
        return f"{tactic.value} takes exactly one term"
    if kind is ArgKind.SINGLE_THEOREM and (len(args) != 1 or not isinstance(args[0], Theorem)):
        return f"{tactic.value} takes exactly one theorem"
    if kind is ArgKind.THEOREM_LIST and not all(isinstance(a, Theorem) for a in args):
        return f"{tactic.value} takes a list of theorems"
    return None


def apply_tactic(g: Goal, tactic: TacticId, args: Sequence[Argument] = (), fuel: int = DEFAULT_FUEL) -> TacticOutcome:
    """
    Apply one tactic to a goal.

    Args:
        g: goal to work on
        tactic: entry of the tactic table
        args: arguments matching `tactic.arg_kind`
        fuel: rewrite / search step budget

    Returns:
        Subgoals, NoChange, Failed or FuelExhausted
    """
    problem = check_arguments(tactic, args)
    if problem is not None:
        return Failed(problem)
    budget = Fuel(fuel)
    try:
        if tactic is TacticId.STRIP_TAC:
            return _strip_tac(g, budget)
        if tactic is TacticId.EQ_TAC:
            return _eq_tac(g)
        if tactic is TacticId.CASE_ON:
            return _case_on(g, args[0])
        if tactic is TacticId.SIMP:
            return _simp(g, args, budget, use_assumptions=True)
        if tactic is TacticId.RW:
            return _simp(g, args, budget, use_assumptions=False)
        if tactic is TacticId.FS:
            return _fs(g, args, budget)
        if tactic is TacticId.METIS:
            return _metis(g, args, budget)
        if tactic is TacticId.DRULE:
            return _drule(g, args[0])
        return _irule(g, args[0])
    except (_OutOfFuel, RecursionError):
        return FuelExhausted()


# ========== CANDIDATES ==========

def mentioned_theories(g: Goal) -> List[str]:
    seen: Dict[str, None] = {}
    for name in g.variables():
        seen.setdefault(theory_prefix(name), None)
    return list(seen)


def candidate_arguments(g: Goal, tactic: TacticId, library: Sequence[Theorem], target_index: int) -> List[Argument]:
    """
    Arguments the policy may choose for `tactic` on `g`.

    Theorems must precede the theorem under proof in the library and belong
    to a theory mentioned in the goal; terms are the goal's variables.
    """
    kind = tactic.arg_kind
    if kind is ArgKind.NONE:
        return []
    if kind is ArgKind.SINGLE_TERM:
        return [Var(name) for name in g.variables()]
    theories = set(mentioned_theories(g))
    earlier = [thm for thm in library if thm.library_index < target_index and thm.theory in theories]
    return sorted(earlier, key=lambda thm: thm.library_index)


# ========== SERIALIZATION ==========

def format_argument(arg: Argument) -> str:
    if isinstance(arg, Theorem):
        return arg.name
    return f"`{print_term(arg)}`"


def format_tactic(tactic: TacticId, args: Sequence[Argument]) -> str:
    """`name`, `name `term``, `name thm` or `name [thm, ...]`."""
    kind = tactic.arg_kind
    if kind is ArgKind.NONE:
        return tactic.value
    if kind is ArgKind.THEOREM_LIST:
        return f"{tactic.value} [{', '.join(format_argument(a) for a in args)}]"
    return f"{tactic.value} {format_argument(args[0])}"
