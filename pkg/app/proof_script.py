"""
Proof scripts: the tree of tactic applications recovered from a finished
search, its text layout, parsing, replay through the tactic engine and
removal of redundant theorem arguments.

Text layout::

    Theorem p_thm_0001: p /\\ q ==> p /\\ q
    Proof
      strip_tac
      >- (simp [])
      >- (simp [])
    QED

`>>` continues with the single subgoal of the previous tactic; one `>- (...)`
branch per subgoal otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Mapping, Optional, Tuple

import pyparsing as pp

from .kernel import GOAL_GRAMMAR, TERM_GRAMMAR, Goal, Theorem, print_goal
from .tactics import (
    DEFAULT_FUEL,
    Argument,
    ArgKind,
    Subgoals,
    TacticId,
    apply_tactic,
    format_tactic,
)


class ScriptError(ValueError):
    """A script that does not parse or does not replay; `step` is 1-based pre-order."""

    def __init__(self, step: Optional[int], reason: str):
        self.step = step
        self.reason = reason
        where = f"step {step}: " if step is not None else ""
        super().__init__(f"{where}{reason}")


@dataclass(frozen=True)
class ProofNode:
    tactic: TacticId
    args: Tuple[Argument, ...]
    children: Tuple["ProofNode", ...] = ()
    goal: Optional[Goal] = None

    @property
    def call(self) -> str:
        return format_tactic(self.tactic, self.args)


@dataclass(frozen=True)
class ProofScript:
    main_goal: Goal
    root: ProofNode
    name: str = "goal"

    def nodes(self) -> List[ProofNode]:
        """Tactic applications in tree (pre-)order."""
        order: List[ProofNode] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            order.append(node)
            stack.extend(reversed(node.children))
        return order

    def steps(self) -> List[Tuple[Optional[Goal], TacticId, Tuple[Argument, ...]]]:
        return [(n.goal, n.tactic, n.args) for n in self.nodes()]

    @property
    def length(self) -> int:
        """Distinct tactic applications; shared subproofs count once."""
        distinct = {(n.goal, n.tactic, n.args) if n.goal is not None else id(n) for n in self.nodes()}
        return len(distinct)

    @property
    def depth(self) -> int:
        def walk(node: ProofNode) -> int:
            return 1 + max((walk(c) for c in node.children), default=0)
        return walk(self.root)

    def render_tactics(self) -> str:
        return "\n".join(_render_lines(self.root))

    def render(self) -> str:
        body = "\n".join("  " + line for line in _render_lines(self.root))
        return f"Theorem {self.name}: {print_goal(self.main_goal)}\nProof\n{body}\nQED\n"


def _render_lines(node: ProofNode) -> List[str]:
    lines = [node.call]
    if len(node.children) == 1:
        sub = _render_lines(node.children[0])
        lines.append(">> " + sub[0])
        lines.extend("   " + line for line in sub[1:])
        return lines
    for child in node.children:
        sub = _render_lines(child)
        lines.append(">- (" + sub[0])
        lines.extend("    " + line for line in sub[1:])
        lines[-1] += ")"
    return lines


# ========== PARSING ==========

def _build_script_grammar() -> Tuple[pp.ParserElement, pp.ParserElement]:
    tactic_name = pp.one_of([t.value for t in TacticId], as_keyword=True)("tactic")
    reserved = pp.Keyword("QED") | pp.Keyword("Proof") | tactic_name
    theorem_name = ~reserved + pp.Regex(r"[A-Za-z_][A-Za-z0-9_]*")
    term_arg = pp.Suppress("`") + TERM_GRAMMAR("term") + pp.Suppress("`")
    theorem_list = pp.Group(
        pp.Suppress("[") + pp.Opt(pp.DelimitedList(theorem_name)) + pp.Suppress("]")
    )("theorem_list")
    call = tactic_name + pp.Opt(term_arg | theorem_list | theorem_name("theorem"))

    script = pp.Forward()
    branch = pp.Suppress(">-") + pp.Suppress("(") + script + pp.Suppress(")")
    continuation = pp.Suppress(">>") + script
    script <<= pp.Group(
        pp.Group(call)("call")
        + pp.Opt(pp.Group(continuation)("then") | pp.Group(pp.OneOrMore(branch))("branches"))
    )

    document = (
        pp.Keyword("Theorem")
        + theorem_name("name")
        + pp.Suppress(":")
        + pp.Group(GOAL_GRAMMAR)("goal")
        + pp.Keyword("Proof")
        + script("script")
        + pp.Keyword("QED")
    )
    return script, document


SCRIPT_GRAMMAR, DOCUMENT_GRAMMAR = _build_script_grammar()


def _node_from_tree(tree, library: Mapping[str, Theorem]) -> ProofNode:
    call = tree["call"]
    tactic = TacticId.from_name(call["tactic"])
    args: List[Argument] = []
    if "term" in call:
        args.append(call["term"])
    elif "theorem_list" in call:
        args.extend(_resolve(name, library) for name in call["theorem_list"])
    elif "theorem" in call:
        args.append(_resolve(call["theorem"][0], library))
    if "then" in tree:
        children = (_node_from_tree(tree["then"][0], library),)
    elif "branches" in tree:
        children = tuple(_node_from_tree(b, library) for b in tree["branches"])
    else:
        children = ()
    return ProofNode(tactic, tuple(args), children)


def _resolve(name: str, library: Mapping[str, Theorem]) -> Theorem:
    theorem = library.get(name)
    if theorem is None:
        raise ScriptError(None, f"unknown theorem {name}")
    return theorem


def _goal_from_group(group) -> Goal:
    assumptions = list(group["assumptions"]) if "assumptions" in group else []
    return Goal(tuple(assumptions), group["conclusion"])


def parse_script(text: str, library: Mapping[str, Theorem] = None) -> ProofScript:
    """
    Parse a `Theorem ... Proof ... QED` document.

    Raises:
        ScriptError: on syntax errors or unknown theorem names
    """
    library = library or {}
    try:
        result = DOCUMENT_GRAMMAR.parse_string(text, parse_all=True)
    except pp.ParseBaseException as exc:
        raise ScriptError(None, f"syntax error at line {exc.lineno}, column {exc.col}") from None
    goal = _goal_from_group(result["goal"])
    root = _node_from_tree(result["script"][0], library)
    return ProofScript(goal, root, name=result["name"][0])


# ========== REPLAY ==========

def replay_node(node: ProofNode, goal: Goal, fuel: int = DEFAULT_FUEL) -> ProofNode:
    """
    Re-run `node` on `goal`; returns the tree annotated with the goals met.

    Raises:
        ScriptError: naming the first pre-order step that fails
    """
    counter = [0]

    def run(current: ProofNode, target: Goal) -> ProofNode:
        counter[0] += 1
        number = counter[0]
        outcome = apply_tactic(target, current.tactic, current.args, fuel)
        if not isinstance(outcome, Subgoals):
            raise ScriptError(number, f"{current.call} gave {type(outcome).__name__} on {print_goal(target)}")
        if len(outcome.goals) != len(current.children):
            raise ScriptError(
                number,
                f"{current.call} produced {len(outcome.goals)} subgoals, script has "
                f"{len(current.children)} branches",
            )
        kids = tuple(run(child, sub) for child, sub in zip(current.children, outcome.goals))
        return replace(current, children=kids, goal=target)

    return run(node, goal)


def replay_script(script: ProofScript, fuel: int = DEFAULT_FUEL) -> ProofScript:
    """Check a script against the tactic engine; returns it with goals filled in."""
    return replace(script, root=replay_node(script.root, script.main_goal, fuel))


def replays(script: ProofScript, fuel: int = DEFAULT_FUEL) -> bool:
    try:
        replay_script(script, fuel)
    except ScriptError:
        return False
    return True


# ========== MINIMIZATION ==========

def _paths(node: ProofNode, prefix: Tuple[int, ...] = ()) -> List[Tuple[int, ...]]:
    found = [prefix]
    for i, child in enumerate(node.children):
        found.extend(_paths(child, prefix + (i,)))
    return found


def _at(node: ProofNode, path: Tuple[int, ...]) -> ProofNode:
    for i in path:
        node = node.children[i]
    return node


def _with_args(node: ProofNode, path: Tuple[int, ...], args: Tuple[Argument, ...]) -> ProofNode:
    if not path:
        return replace(node, args=args)
    head, rest = path[0], path[1:]
    kids = list(node.children)
    kids[head] = _with_args(kids[head], rest, args)
    return replace(node, children=tuple(kids))


def minimize(script: ProofScript, fuel: int = DEFAULT_FUEL) -> ProofScript:
    """
    Drop theorem arguments of list tactics one at a time while the script
    still replays.
    """
    current = replay_script(script, fuel)
    for path in _paths(current.root):
        node = _at(current.root, path)
        if node.tactic.arg_kind is not ArgKind.THEOREM_LIST:
            continue
        i = 0
        while i < len(_at(current.root, path).args):
            args = _at(current.root, path).args
            candidate = replace(current, root=_with_args(current.root, path, args[:i] + args[i + 1:]))
            try:
                current = replay_script(candidate, fuel)
            except ScriptError:
                i += 1
    return current
