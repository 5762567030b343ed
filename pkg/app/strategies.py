"""
Proof-search strategies compared against the learned fringe policy.

All of them drive the same environment, so a timestep is one tactic
application whatever the strategy, and all but the metis baseline use the
policy's tactic and argument networks.
"""
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .env import Action, EpisodeConfig, OutcomeKind, ProofEnv
from .kernel import Goal, Theorem
from .policy import (
    PolicyForward,
    PolicyParams,
    choose_tactic,
    ranked_tactics,
    sample_action,
    sample_arguments,
)
from .proof_script import ProofScript
from .tactics import TacticId
from .utils.formatting import get_logger

logger = get_logger(__name__)


class StrategyKind(Enum):
    LEARNED = "learned"
    BFS = "bfs"
    DFS = "dfs"
    LATEST_FRINGE = "latest"
    UNTRAINED = "untrained"
    METIS = "metis"


class SearchMode(Enum):
    STOCHASTIC = "stochastic"
    TOPK = "topk"


@dataclass(frozen=True)
class StrategySpec:
    kind: StrategyKind
    mode: SearchMode = SearchMode.STOCHASTIC
    branching: int = 2
    init_seed: int = 0

    def __post_init__(self):
        if self.branching < 1:
            raise ValueError("branching factor must be at least 1")

    @property
    def label(self) -> str:
        if self.kind in (StrategyKind.BFS, StrategyKind.DFS):
            return f"{self.kind.value} {self.mode.value} b={self.branching}"
        if self.kind is StrategyKind.LATEST_FRINGE:
            return f"{self.kind.value} {self.mode.value}"
        return self.kind.value

    @classmethod
    def parse(cls, text: str) -> "StrategySpec":
        """`kind[:mode[:b]]`, e.g. `learned`, `bfs:topk:2`, `latest:stochastic`."""
        parts = text.strip().lower().split(":")
        try:
            kind = StrategyKind(parts[0])
            mode = SearchMode(parts[1]) if len(parts) > 1 else SearchMode.STOCHASTIC
            branching = int(parts[2]) if len(parts) > 2 else 2
        except ValueError:
            raise ValueError(f"invalid strategy {text!r}; expected kind[:mode[:b]]") from None
        if len(parts) > 3:
            raise ValueError(f"invalid strategy {text!r}; expected kind[:mode[:b]]")
        return cls(kind, mode, branching)


DEFAULT_ABLATION = (
    StrategySpec(StrategyKind.LEARNED),
    StrategySpec(StrategyKind.BFS, SearchMode.STOCHASTIC, 2),
    StrategySpec(StrategyKind.BFS, SearchMode.TOPK, 2),
    StrategySpec(StrategyKind.DFS, SearchMode.STOCHASTIC, 2),
    StrategySpec(StrategyKind.DFS, SearchMode.TOPK, 2),
    StrategySpec(StrategyKind.LATEST_FRINGE),
    StrategySpec(StrategyKind.UNTRAINED),
    StrategySpec(StrategyKind.METIS),
)


@dataclass
class StrategyResult:
    proved: bool
    timesteps: int
    proof_length: int = 0
    proof: Optional[ProofScript] = None
    trace: List[Tuple[Action, OutcomeKind]] = field(default_factory=list)
    env: Optional[ProofEnv] = None


def bfs_depth_limit(budget: int, branching: int) -> int:
    """Deepest fringe depth that still gets created: the full levels plus the partial one."""
    if branching == 1:
        return budget
    full_levels = math.floor(math.log((branching - 1) * budget / branching + 1, branching))
    return full_levels + 1


def _step(env: ProofEnv, action: Action, trace: List[Tuple[Action, OutcomeKind]]):
    result = env.step(action)
    trace.append((action, result.kind))
    return result


def _pick_tactic(
    env: ProofEnv, goal: Goal, fwd: PolicyForward, mode: SearchMode, rank: int, rng: np.random.Generator
) -> Optional[TacticId]:
    if mode is SearchMode.TOPK:
        ranked = ranked_tactics(goal, fwd, env.candidates)
        return ranked[rank] if rank < len(ranked) else None
    tactic, _ = choose_tactic(goal, fwd, env.candidates, rng)
    return tactic


def _apply(
    env: ProofEnv,
    fringe_idx: int,
    tactic: TacticId,
    fwd: PolicyForward,
    rng: np.random.Generator,
    trace: List[Tuple[Action, OutcomeKind]],
):
    goal = env.state.fringes[fringe_idx].goals[0]
    args, _, _ = sample_arguments(goal, tactic, fwd, env.candidates, rng)
    return _step(env, Action(fringe_idx, 0, tactic, tuple(args)), trace)


def _run_learned(env: ProofEnv, fwd: PolicyForward, rng: np.random.Generator, trace) -> None:
    while not env.done:
        sampled = sample_action(env.state, fwd, rng, env.candidates)
        _step(env, sampled.action, trace)


def _run_latest(env: ProofEnv, fwd: PolicyForward, spec: StrategySpec, rng: np.random.Generator, trace) -> None:
    attempts: Dict[int, int] = defaultdict(int)
    while not env.done:
        current = len(env.state.fringes) - 1
        goal = env.state.fringes[current].goals[0]
        tactic = _pick_tactic(env, goal, fwd, spec.mode, attempts[current], rng)
        if tactic is None:
            attempts[current] = 0
            continue
        attempts[current] += 1
        _apply(env, current, tactic, fwd, rng, trace)


def _run_bfs(env: ProofEnv, fwd: PolicyForward, spec: StrategySpec, rng: np.random.Generator, trace) -> None:
    limit = bfs_depth_limit(env.config.budget, spec.branching)
    queue = deque([0])
    while queue and not env.done:
        current = queue.popleft()
        fringe = env.state.fringes[current]
        if fringe.depth >= limit:
            continue
        goal = fringe.goals[0]
        for rank in range(spec.branching):
            if env.done:
                break
            tactic = _pick_tactic(env, goal, fwd, spec.mode, rank, rng)
            if tactic is None:
                break
            result = _apply(env, current, tactic, fwd, rng, trace)
            if result.new_fringe:
                queue.append(len(env.state.fringes) - 1)


def _run_dfs(env: ProofEnv, fwd: PolicyForward, spec: StrategySpec, rng: np.random.Generator, trace) -> None:
    """
    Descend into each new fringe. A tactic that makes no new fringe sends the
    search back one level to the parent. A fringe that has tried b tactics is
    spent and also hands control to its parent; only the root ever starts its
    attempts afresh.
    """
    attempts: Dict[int, int] = defaultdict(int)
    current = 0
    while not env.done:
        fringe = env.state.fringes[current]
        tactic = None
        if attempts[current] < spec.branching:
            tactic = _pick_tactic(env, fringe.goals[0], fwd, spec.mode, attempts[current], rng)
        if tactic is None:
            if fringe.parent is None:
                attempts[current] = 0
            else:
                current = fringe.parent.fringe_idx
            continue
        attempts[current] += 1
        result = _apply(env, current, tactic, fwd, rng, trace)
        if result.new_fringe:
            current = len(env.state.fringes) - 1
        elif fringe.parent is not None:
            current = fringe.parent.fringe_idx



def _run_metis(env: ProofEnv, trace) -> None:
    _step(env, Action(0, 0, TacticId.METIS, ()), trace)


def run_strategy(
    goal: Goal,
    params: PolicyParams,
    spec: StrategySpec,
    budget: int,
    rng: np.random.Generator,
    library: Sequence[Theorem] = (),
    target_index: int = 0,
    config: Optional[EpisodeConfig] = None,
    name: Optional[str] = None,
) -> StrategyResult:
    """Search for a proof of `goal` within `budget` tactic applications."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    base = config or EpisodeConfig()
    episode = EpisodeConfig(budget, base.fuel, base.max_args, base.rewards)
    env = ProofEnv(goal, library, target_index, name, episode)
    if spec.kind is StrategyKind.UNTRAINED:
        params = PolicyParams.initialize(params.vocab, params.config, np.random.default_rng(spec.init_seed))
    fwd = PolicyForward(params)
    trace: List[Tuple[Action, OutcomeKind]] = []

    if spec.kind in (StrategyKind.LEARNED, StrategyKind.UNTRAINED):
        _run_learned(env, fwd, rng, trace)
    elif spec.kind is StrategyKind.LATEST_FRINGE:
        _run_latest(env, fwd, spec, rng, trace)
    elif spec.kind is StrategyKind.BFS:
        _run_bfs(env, fwd, spec, rng, trace)
    elif spec.kind is StrategyKind.DFS:
        _run_dfs(env, fwd, spec, rng, trace)
    else:
        _run_metis(env, trace)

    result = StrategyResult(env.proved, env.state.timestep, trace=trace, env=env)
    if env.proved:
        result.proof = env.proof()
        result.proof_length = result.proof.length
    logger.debug("%s on %s: proved=%s in %d steps", spec.label, name or goal, result.proved, result.timesteps)
    return result


# ========== ABLATION ==========

def _mean(values: Sequence[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def ablate(
    theorems: Sequence[Theorem],
    library: Sequence[Theorem],
    params: PolicyParams,
    specs: Sequence[StrategySpec] = DEFAULT_ABLATION,
    budget: int = 50,
    seed: int = 0,
    config: Optional[EpisodeConfig] = None,
) -> List[Dict[str, object]]:
    """
    One row per strategy: theorems proved, and mean timesteps and proof
    length over the proved ones. Theorem `i` gets the same rng seed in
    every row.
    """
    rows = []
    for spec in specs:
        timesteps: List[int] = []
        lengths: List[int] = []
        proved_names: List[str] = []
        for i, theorem in enumerate(theorems):
            rng = np.random.default_rng([seed, i])
            result = run_strategy(
                Goal((), theorem.statement), params, spec, budget, rng,
                library, theorem.library_index, config, theorem.name,
            )
            if result.proved:
                timesteps.append(result.timesteps)
                lengths.append(result.proof_length)
                proved_names.append(theorem.name)
        rows.append({
            "strategy": spec.label,
            "proved": len(proved_names),
            "total": len(theorems),
            "mean_timesteps": _mean(timesteps),
            "mean_proof_length": _mean(lengths),
            "proved_ids": proved_names,
        })
        logger.info("%s: proved %d/%d", spec.label, len(proved_names), len(theorems))
    return rows
