"""
The fringe search environment.

A state is the sequence of every fringe reached so far, fringe 0 holding the
main goal. An action picks a fringe, a goal in it and a tactic with its
arguments; a successful tactic appends one new fringe. The episode ends when
some fringe is empty (the theorem is proved) or the step budget runs out.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .kernel import Goal, Theorem, print_goal
from .proof_script import ProofNode, ProofScript
from .tactics import (
    DEFAULT_FUEL,
    Argument,
    Subgoals,
    TacticId,
    TacticOutcome,
    apply_tactic,
    candidate_arguments,
    check_arguments,
    format_tactic,
)
from .utils.formatting import get_logger

logger = get_logger(__name__)


class InvalidActionError(ValueError):
    pass


class NotTerminalError(ValueError):
    pass


class OutcomeKind(Enum):
    PROVED = "proved"
    SUBGOAL_SOLVED = "subgoal_solved"
    PROGRESS = "progress"
    NO_OP = "no_op"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class Provenance:
    """How a fringe was derived from an earlier one."""

    fringe_idx: int
    goal_idx: int
    goal: Goal
    tactic: TacticId
    args: Tuple[Argument, ...]
    subgoals: Tuple[Goal, ...]


@dataclass(frozen=True)
class Fringe:
    goals: Tuple[Goal, ...]
    parent: Optional[Provenance] = None
    depth: int = 0

    @property
    def key(self) -> frozenset:
        return frozenset(self.goals)

    @property
    def is_empty(self) -> bool:
        return not self.goals


@dataclass(frozen=True)
class MdpState:
    fringes: Tuple[Fringe, ...]
    timestep: int = 0

    @property
    def main_goal(self) -> Goal:
        return self.fringes[0].goals[0]

    @property
    def proof_fringe(self) -> Optional[int]:
        for i, fringe in enumerate(self.fringes):
            if fringe.is_empty:
                return i
        return None

    @property
    def is_terminal(self) -> bool:
        return self.proof_fringe is not None


@dataclass(frozen=True)
class Action:
    fringe_idx: int
    goal_idx: int
    tactic: TacticId
    args: Tuple[Argument, ...] = ()

    def __str__(self) -> str:
        return f"[{self.fringe_idx}:{self.goal_idx}] {format_tactic(self.tactic, self.args)}"


@dataclass(frozen=True)
class RewardConfig:
    proved_easy: float = 5.0
    proved_hard: float = 15.0
    budget_exhausted: float = -5.0
    progress: float = 0.1
    subgoal_solved: float = 0.2
    no_op: float = -0.1


@dataclass(frozen=True)
class EpisodeConfig:
    budget: int = 50
    fuel: int = DEFAULT_FUEL
    max_args: int = 5
    rewards: RewardConfig = field(default_factory=RewardConfig)


@dataclass(frozen=True)
class StepResult:
    state: MdpState
    reward: float
    done: bool
    kind: OutcomeKind
    outcome: TacticOutcome
    new_fringe: bool = False


class DifficultyTracker:
    """
    Exponential moving average of each theorem's proof rate.

    A theorem is easy when its rate is above the mean rate over all
    registered theorems.
    """

    def __init__(self, decay: float = 0.9):
        self.decay = decay
        self.rates: Dict[str, float] = {}

    def register(self, names: Iterable[str]) -> None:
        for name in names:
            self.rates.setdefault(name, 0.0)

    def update(self, name: str, proved: bool) -> None:
        previous = self.rates.get(name, 0.0)
        self.rates[name] = self.decay * previous + (1.0 - self.decay) * (1.0 if proved else 0.0)

    def rate(self, name: str) -> float:
        return self.rates.get(name, 0.0)

    def mean_rate(self) -> float:
        if not self.rates:
            return 0.0
        return sum(self.rates.values()) / len(self.rates)

    def is_easy(self, name: str) -> bool:
        return self.rate(name) > self.mean_rate()

    def snapshot(self) -> "DifficultyTracker":
        copy = DifficultyTracker(self.decay)
        copy.rates = dict(self.rates)
        return copy

    def to_dict(self) -> Dict[str, object]:
        return {"decay": self.decay, "rates": dict(self.rates)}

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "DifficultyTracker":
        tracker = cls(float(data.get("decay", 0.9)))
        tracker.rates = {str(k): float(v) for k, v in dict(data.get("rates", {})).items()}
        return tracker


# ========== TRANSITIONS ==========

def reset(goal: Goal) -> MdpState:
    return MdpState((Fringe((goal,)),), 0)


def compute_reward(
    kind: OutcomeKind,
    tracker: Optional[DifficultyTracker] = None,
    theorem_name: Optional[str] = None,
    rewards: RewardConfig = RewardConfig(),
) -> float:
    if kind is OutcomeKind.PROVED:
        easy = tracker is not None and theorem_name is not None and tracker.is_easy(theorem_name)
        return rewards.proved_easy if easy else rewards.proved_hard
    if kind is OutcomeKind.BUDGET_EXHAUSTED:
        return rewards.budget_exhausted
    if kind is OutcomeKind.SUBGOAL_SOLVED:
        return rewards.subgoal_solved
    if kind is OutcomeKind.PROGRESS:
        return rewards.progress
    return rewards.no_op


def _validate(state: MdpState, action: Action, config: EpisodeConfig) -> None:
    if state.is_terminal:
        raise InvalidActionError("episode already ended: theorem proved")
    if state.timestep >= config.budget:
        raise InvalidActionError("episode already ended: budget exhausted")
    if not 0 <= action.fringe_idx < len(state.fringes):
        raise InvalidActionError(f"fringe index {action.fringe_idx} out of range")
    goals = state.fringes[action.fringe_idx].goals
    if not 0 <= action.goal_idx < len(goals):
        raise InvalidActionError(f"goal index {action.goal_idx} out of range")
    if len(action.args) > config.max_args:
        raise InvalidActionError(f"{len(action.args)} arguments exceed the limit of {config.max_args}")
    problem = check_arguments(action.tactic, action.args)
    if problem is not None:
        raise InvalidActionError(problem)


def _successor_goals(fringe: Fringe, goal_idx: int, subgoals: Sequence[Goal]) -> Tuple[Goal, ...]:
    """Replace the goal by its subgoals in place, skipping goals already present."""
    remaining = fringe.goals[:goal_idx] + fringe.goals[goal_idx + 1:]
    present = set(remaining)
    fresh: List[Goal] = []
    for g in subgoals:
        if g not in present:
            present.add(g)
            fresh.append(g)
    return remaining[:goal_idx] + tuple(fresh) + remaining[goal_idx:]


def step(
    state: MdpState,
    action: Action,
    config: EpisodeConfig = EpisodeConfig(),
    tracker: Optional[DifficultyTracker] = None,
    theorem_name: Optional[str] = None,
) -> StepResult:
    """
    Apply `action` to `state`.

    Raises:
        InvalidActionError: for out-of-range indices, ill-typed arguments or a finished episode
    """
    _validate(state, action, config)
    fringe = state.fringes[action.fringe_idx]
    goal = fringe.goals[action.goal_idx]
    outcome = apply_tactic(goal, action.tactic, action.args, config.fuel)

    fringes = state.fringes
    kind = OutcomeKind.NO_OP
    if isinstance(outcome, Subgoals):
        goals = _successor_goals(fringe, action.goal_idx, outcome.goals)
        if frozenset(goals) not in {f.key for f in fringes}:
            provenance = Provenance(
                action.fringe_idx, action.goal_idx, goal, action.tactic, tuple(action.args), outcome.goals
            )
            fringes = fringes + (Fringe(goals, provenance, fringe.depth + 1),)
            if not goals:
                kind = OutcomeKind.PROVED
            elif len(goals) < len(fringe.goals):
                kind = OutcomeKind.SUBGOAL_SOLVED
            else:
                kind = OutcomeKind.PROGRESS

    timestep = state.timestep + 1
    if kind is not OutcomeKind.PROVED and timestep >= config.budget:
        kind = OutcomeKind.BUDGET_EXHAUSTED
    next_state = MdpState(fringes, timestep)
    reward = compute_reward(kind, tracker, theorem_name, config.rewards)
    done = kind in (OutcomeKind.PROVED, OutcomeKind.BUDGET_EXHAUSTED)
    logger.debug("t=%d %s -> %s (%s)", timestep, action, kind.value, type(outcome).__name__)
    return StepResult(next_state, reward, done, kind, outcome, len(fringes) > len(state.fringes))


# ========== PROOFS ==========

def proof_path(state: MdpState) -> List[int]:
    """Fringe indices from the root to the first empty fringe."""
    index = state.proof_fringe
    if index is None:
        raise NotTerminalError("no fringe is empty: the theorem is not proved")
    path = [index]
    while state.fringes[path[-1]].parent is not None:
        path.append(state.fringes[path[-1]].parent.fringe_idx)
    path.reverse()
    return path


def reconstruct_proof(state: MdpState, name: str = "goal") -> ProofScript:
    """
    Turn the provenance chain of the empty fringe into a proof tree.

    Each goal is proved by the last tactic applied to it along the chain;
    the subgoals of that tactic were still open afterwards, so their own
    last tactics come later and the recursion ends.

    Raises:
        NotTerminalError: if no fringe is empty
    """
    path = proof_path(state)
    last_action: Dict[Goal, Provenance] = {}
    for index in path[1:]:
        provenance = state.fringes[index].parent
        last_action[provenance.goal] = provenance

    built: Dict[Goal, ProofNode] = {}

    def build(goal: Goal) -> ProofNode:
        if goal in built:
            return built[goal]
        provenance = last_action[goal]
        node = ProofNode(
            provenance.tactic,
            provenance.args,
            tuple(build(sub) for sub in provenance.subgoals),
            goal,
        )
        built[goal] = node
        return node

    return ProofScript(state.main_goal, build(state.main_goal), name=name)


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def export_search_graph(state: MdpState, name: str = "search") -> str:
    """DOT text with one node per fringe; the proof path is blue, the rest red."""
    on_path = set(proof_path(state)) if state.is_terminal else set()
    lines = [f"digraph {name} {{", '  node [shape=box, style=filled, fontname="Helvetica"];']
    for i, fringe in enumerate(state.fringes):
        goals = "\\n".join(_dot_escape(print_goal(g)) for g in fringe.goals) or "QED"
        color = "lightblue" if i in on_path else "lightcoral"
        lines.append(f'  f{i} [label="{i}: {goals}", fillcolor="{color}"];')
    for i, fringe in enumerate(state.fringes):
        if fringe.parent is not None:
            label = _dot_escape(format_tactic(fringe.parent.tactic, fringe.parent.args))
            lines.append(f'  f{fringe.parent.fringe_idx} -> f{i} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ========== EPISODES ==========

class ProofEnv:
    """One proof attempt at a theorem, with its argument candidates cached per goal."""

    def __init__(
        self,
        goal: Goal,
        library: Sequence[Theorem] = (),
        target_index: int = 0,
        theorem_name: Optional[str] = None,
        config: EpisodeConfig = EpisodeConfig(),
        tracker: Optional[DifficultyTracker] = None,
    ):
        self.goal = goal
        self.library = tuple(library)
        self.target_index = target_index
        self.theorem_name = theorem_name
        self.config = config
        self.tracker = tracker
        self.state = reset(goal)
        self.total_reward = 0.0
        self._candidates: Dict[Tuple[Goal, TacticId], List[Argument]] = {}

    @classmethod
    def for_theorem(
        cls,
        theorem: Theorem,
        library: Sequence[Theorem],
        config: EpisodeConfig = EpisodeConfig(),
        tracker: Optional[DifficultyTracker] = None,
    ) -> "ProofEnv":
        return cls(Goal((), theorem.statement), library, theorem.library_index, theorem.name, config, tracker)

    def reset(self) -> MdpState:
        self.state = reset(self.goal)
        self.total_reward = 0.0
        return self.state

    @property
    def done(self) -> bool:
        return self.state.is_terminal or self.state.timestep >= self.config.budget

    @property
    def proved(self) -> bool:
        return self.state.is_terminal

    def candidates(self, goal: Goal, tactic: TacticId) -> List[Argument]:
        key = (goal, tactic)
        if key not in self._candidates:
            self._candidates[key] = candidate_arguments(goal, tactic, self.library, self.target_index)
        return self._candidates[key]

    def step(self, action: Action) -> StepResult:
        result = step(self.state, action, self.config, self.tracker, self.theorem_name)
        self.state = result.state
        self.total_reward += result.reward
        return result

    def proof(self) -> ProofScript:
        return reconstruct_proof(self.state, self.theorem_name or "goal")
