"""
The factorized proof-search policy.

An action's probability is the product of three parts: the fringe (softmax
over per-fringe sums of goal scores), the tactic for the fringe's first goal
(softmax over the tactic head, restricted to tactics that have candidate
arguments) and the argument list (a recurrent network started from the goal
encoding that picks candidates one at a time without replacement).
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .autodiff import (
    Array,
    Tensor,
    add,
    categorical_sample,
    constant,
    dense_forward,
    init_dense,
    init_recurrent,
    log_softmax,
    matvec,
    parameter,
    recurrent_cell,
    stack,
    take,
    take_many,
    tanh,
)
from .encoder import (
    EncoderConfig,
    Vocabulary,
    encode,
    goal_tokens,
    init_encoder,
    theorem_tokens,
)
from .env import Action, InvalidActionError, MdpState
from .kernel import Goal, Theorem, print_term
from .tactics import TACTICS, Argument, ArgKind, TacticId

_ALWAYS_FILLABLE = (ArgKind.NONE, ArgKind.THEOREM_LIST)

CandidateFn = Callable[[Goal, TacticId], Sequence[Argument]]

GOAL_HEAD = "goal"
TACTIC_HEAD = "tactic"
TACTIC_EMBEDDING = "tactic_embed"
ARGUMENT_CELL = "arg"
ARGUMENT_QUERY = "arg_query"


@dataclass(frozen=True)
class PolicyConfig:
    dim: int = 64
    embedding_dim: int = 32
    hidden: int = 64
    max_args: int = 5

    @property
    def encoder(self) -> EncoderConfig:
        return EncoderConfig(self.dim, self.embedding_dim)


class PolicyParams:
    """Named parameter arrays plus the vocabulary they were built for."""

    def __init__(self, vocab: Vocabulary, config: PolicyConfig, arrays: Mapping[str, Array]):
        self.vocab = vocab
        self.config = config
        self.arrays: Dict[str, Array] = dict(arrays)

    @classmethod
    def initialize(cls, vocab: Vocabulary, config: PolicyConfig, rng: np.random.Generator) -> "PolicyParams":
        d, h = config.dim, config.hidden
        arrays = init_encoder(vocab, config.encoder, rng)
        arrays.update(init_dense(rng, d, h, f"{GOAL_HEAD}.hidden"))
        arrays.update(init_dense(rng, h, 1, f"{GOAL_HEAD}.out"))
        arrays.update(init_dense(rng, d, h, f"{TACTIC_HEAD}.hidden"))
        arrays.update(init_dense(rng, h, len(TACTICS), f"{TACTIC_HEAD}.out"))
        arrays[TACTIC_EMBEDDING] = rng.normal(0.0, 0.1, size=(len(TACTICS), d))
        arrays.update(init_recurrent(rng, d, d, ARGUMENT_CELL))
        arrays.update(init_dense(rng, d, d, ARGUMENT_QUERY))
        return cls(vocab, config, arrays)

    @classmethod
    def zeros(cls, vocab: Vocabulary, config: PolicyConfig) -> "PolicyParams":
        template = cls.initialize(vocab, config, np.random.default_rng(0))
        return cls(vocab, config, {k: np.zeros_like(v) for k, v in template.arrays.items()})

    def replace_arrays(self, arrays: Mapping[str, Array]) -> "PolicyParams":
        return PolicyParams(self.vocab, self.config, arrays)

    def leaves(self) -> Dict[str, Tensor]:
        return {name: parameter(value, name) for name, value in self.arrays.items()}

    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.arrays.values()))


@dataclass
class SampledAction:
    action: Action
    log_prob: Tensor
    fringe_log_prob: float = 0.0
    tactic_log_prob: float = 0.0
    argument_log_probs: List[float] = field(default_factory=list)

    @property
    def components(self) -> List[float]:
        return [self.fringe_log_prob, self.tactic_log_prob, *self.argument_log_probs]


def _two_layer(x: Tensor, leaves: Mapping[str, Tensor], prefix: str) -> Tensor:
    hidden = tanh(dense_forward(x, leaves[f"{prefix}.hidden.w"], leaves[f"{prefix}.hidden.b"]))
    return dense_forward(hidden, leaves[f"{prefix}.out.w"], leaves[f"{prefix}.out.b"])


class PolicyForward:
    """
    One differentiable view of the parameters.

    Encodings are cached per goal and per candidate, so a whole episode
    shares one graph over one set of leaves.
    """

    def __init__(self, params: PolicyParams, leaves: Optional[Mapping[str, Tensor]] = None):
        self.params = params
        self.leaves = dict(leaves) if leaves is not None else params.leaves()
        self._goals: Dict[Goal, Tensor] = {}
        self._scores: Dict[Goal, Tensor] = {}
        self._candidates: Dict[object, Tensor] = {}

    @property
    def vocab(self) -> Vocabulary:
        return self.params.vocab

    def gradients(self) -> Dict[str, Array]:
        return {name: leaf.grad for name, leaf in self.leaves.items()}

    def goal_vector(self, g: Goal) -> Tensor:
        if g not in self._goals:
            self._goals[g] = encode(self.vocab.ids(goal_tokens(g)), self.leaves)
        return self._goals[g]

    def goal_score(self, g: Goal) -> Tensor:
        if g not in self._scores:
            self._scores[g] = take(_two_layer(self.goal_vector(g), self.leaves, GOAL_HEAD), 0)
        return self._scores[g]

    def fringe_logits(self, state: MdpState) -> Tensor:
        sums = []
        for fringe in state.fringes:
            if not fringe.goals:
                raise InvalidActionError("fringe scores are undefined on a proved state")
            score = self.goal_score(fringe.goals[0])
            for g in fringe.goals[1:]:
                score = add(score, self.goal_score(g))
            sums.append(score)
        return stack(sums)

    def tactic_logits(self, g: Goal) -> Tensor:
        return _two_layer(self.goal_vector(g), self.leaves, TACTIC_HEAD)

    def candidate_vector(self, arg: Argument) -> Tensor:
        if arg not in self._candidates:
            if isinstance(arg, Theorem):
                tokens = theorem_tokens(arg.statement)
            else:
                tokens = [print_term(arg)]
            self._candidates[arg] = encode(self.vocab.ids(tokens), self.leaves)
        return self._candidates[arg]


def _forward(params) -> PolicyForward:
    return params if isinstance(params, PolicyForward) else PolicyForward(params)


# ========== DISTRIBUTIONS ==========

def score_goal(g: Goal, params) -> float:
    return _forward(params).goal_score(g).item()


def fringe_distribution(state: MdpState, params) -> Array:
    return np.exp(log_softmax(_forward(params).fringe_logits(state)).value)


def tactic_distribution(g: Goal, params) -> Array:
    """
    Unmasked softmax over the whole tactic table.

    Sampling renormalizes over `allowed_tactics`, which drops a tactic only
    when one of its single argument slots has no candidate. List tactics
    (simp, rw, fs, metis_tac) stay allowed with zero candidates and then run
    with the empty list `[]`.
    """
    return np.exp(log_softmax(_forward(params).tactic_logits(g)).value)


def allowed_tactics(g: Goal, candidates: CandidateFn) -> List[TacticId]:
    """Tactics whose argument slots can be filled; list tactics may run with `[]`."""
    return [t for t in TACTICS if t.arg_kind in _ALWAYS_FILLABLE or len(candidates(g, t)) > 0]


def masked_tactic_log_probs(g: Goal, fwd: PolicyForward, allowed: Sequence[TacticId]) -> Tensor:
    return log_softmax(take_many(fwd.tactic_logits(g), [t.index for t in allowed]))


def ranked_tactics(g: Goal, params, candidates: CandidateFn) -> List[TacticId]:
    """Allowed tactics by decreasing probability, ties to the lower table index."""
    fwd = _forward(params)
    allowed = allowed_tactics(g, candidates)
    log_probs = masked_tactic_log_probs(g, fwd, allowed).value
    order = sorted(range(len(allowed)), key=lambda k: (-log_probs[k], allowed[k].index))
    return [allowed[k] for k in order]


# ========== SAMPLING ==========

def choose_fringe(state: MdpState, params, rng: np.random.Generator) -> Tuple[int, Tensor]:
    return categorical_sample(_forward(params).fringe_logits(state), rng)


def choose_tactic(
    g: Goal, params, candidates: CandidateFn, rng: np.random.Generator
) -> Tuple[TacticId, Tensor]:
    fwd = _forward(params)
    allowed = allowed_tactics(g, candidates)
    log_probs = masked_tactic_log_probs(g, fwd, allowed)
    probs = np.exp(log_probs.value)
    k = int(rng.choice(len(allowed), p=probs / probs.sum()))
    return allowed[k], take(log_probs, k)


def _argument_steps(tactic: TacticId, n_candidates: int, max_args: int) -> int:
    kind = tactic.arg_kind
    if kind is ArgKind.NONE:
        return 0
    if kind is ArgKind.THEOREM_LIST:
        return min(max_args, n_candidates)
    return 1


def _run_arguments(
    g_vec: Tensor,
    tactic: TacticId,
    candidates: Sequence[Argument],
    fwd: PolicyForward,
    max_args: int,
    pick: Callable[[Tensor, List[int]], Tuple[int, Tensor]],
) -> Tuple[List[Argument], Tensor, List[float]]:
    steps = _argument_steps(tactic, len(candidates), max_args)
    if steps == 0:
        return [], constant(0.0), []
    if not candidates:
        raise InvalidActionError(f"{tactic.value} needs arguments but has no candidates")
    leaves = fwd.leaves
    vectors = [fwd.candidate_vector(c) for c in candidates]
    remaining = list(range(len(candidates)))
    h = g_vec
    x = take(leaves[TACTIC_EMBEDDING], tactic.index)
    chosen: List[Argument] = []
    log_prob: Optional[Tensor] = None
    parts: List[float] = []
    for _ in range(steps):
        h = recurrent_cell(x, h, leaves, ARGUMENT_CELL)
        query = dense_forward(h, leaves[f"{ARGUMENT_QUERY}.w"], leaves[f"{ARGUMENT_QUERY}.b"])
        scores = matvec(stack([vectors[k] for k in remaining]), query)
        position, step_log_prob = pick(scores, remaining)
        k = remaining.pop(position)
        chosen.append(candidates[k])
        parts.append(step_log_prob.item())
        log_prob = step_log_prob if log_prob is None else add(log_prob, step_log_prob)
        x = vectors[k]
    return chosen, log_prob, parts


def argument_sequence(
    g_vec: Tensor,
    tactic: TacticId,
    candidates: Sequence[Argument],
    params,
    rng: np.random.Generator,
    max_args: Optional[int] = None,
) -> Tuple[List[Argument], Tensor]:
    fwd = _forward(params)
    limit = fwd.params.config.max_args if max_args is None else max_args
    args, log_prob, _ = _run_arguments(
        g_vec, tactic, candidates, fwd, limit, lambda scores, _: categorical_sample(scores, rng)
    )
    return args, log_prob


def sample_arguments(
    g: Goal, tactic: TacticId, params, candidates: CandidateFn, rng: np.random.Generator
) -> Tuple[List[Argument], Tensor, List[float]]:
    fwd = _forward(params)
    return _run_arguments(
        fwd.goal_vector(g),
        tactic,
        list(candidates(g, tactic)),
        fwd,
        fwd.params.config.max_args,
        lambda scores, _: categorical_sample(scores, rng),
    )


def sample_action(
    state: MdpState, params, rng: np.random.Generator, candidates: CandidateFn
) -> SampledAction:
    """Fringe, then tactic on its first goal, then arguments; log-probs add up."""
    fwd = _forward(params)
    fringe_idx, fringe_lp = choose_fringe(state, fwd, rng)
    goal = state.fringes[fringe_idx].goals[0]
    tactic, tactic_lp = choose_tactic(goal, fwd, candidates, rng)
    args, args_lp, arg_parts = sample_arguments(goal, tactic, fwd, candidates, rng)
    log_prob = add(add(fringe_lp, tactic_lp), args_lp)
    return SampledAction(
        Action(fringe_idx, 0, tactic, tuple(args)),
        log_prob,
        fringe_lp.item(),
        tactic_lp.item(),
        arg_parts,
    )


def action_log_prob(state: MdpState, action: Action, params, candidates: CandidateFn) -> Tensor:
    """
    log pi(action | state) under `params`, for an action chosen earlier.

    Raises:
        InvalidActionError: if the action could not have been sampled here
    """
    fwd = _forward(params)
    if action.goal_idx != 0 or not 0 <= action.fringe_idx < len(state.fringes):
        raise InvalidActionError(f"{action} is outside the policy's support")
    fringe_lp = take(log_softmax(fwd.fringe_logits(state)), action.fringe_idx)
    goal = state.fringes[action.fringe_idx].goals[0]
    allowed = allowed_tactics(goal, candidates)
    if action.tactic not in allowed:
        raise InvalidActionError(f"{action.tactic.value} has no candidates on {goal}")
    tactic_lp = take(masked_tactic_log_probs(goal, fwd, allowed), allowed.index(action.tactic))

    pool = list(candidates(goal, action.tactic))
    forced = list(action.args)
    if len(forced) != _argument_steps(action.tactic, len(pool), fwd.params.config.max_args):
        raise InvalidActionError(f"{action} has an argument count the policy cannot produce")

    def pick(scores: Tensor, remaining: List[int]) -> Tuple[int, Tensor]:
        wanted = forced.pop(0)
        for position, k in enumerate(remaining):
            if pool[k] == wanted:
                return position, take(log_softmax(scores), position)
        raise InvalidActionError(f"argument {wanted} is not a remaining candidate")

    _, args_lp, _ = _run_arguments(
        fwd.goal_vector(goal), action.tactic, pool, fwd, fwd.params.config.max_args, pick
    )
    return add(add(fringe_lp, tactic_lp), args_lp)
