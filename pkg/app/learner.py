"""
REINFORCE training of the proof-search policy.

Each iteration rolls out one episode per training theorem, replays a stored
proof for theorems the agent failed on but proved before, takes one RMSProp
step on the summed policy gradient, updates the difficulty tracker and
appends one record to the metrics log.
"""
import json
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Deque, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .autodiff import Array, OptimizerState, Tensor, rmsprop_step, scale
from .encoder import Vocabulary, pretrain_reconstruction
from .env import Action, DifficultyTracker, EpisodeConfig, InvalidActionError, OutcomeKind, ProofEnv
from .kernel import Goal, Theorem, parse_term, print_term
from .policy import PolicyConfig, PolicyForward, PolicyParams, action_log_prob, sample_action
from .proof_script import ScriptError, replay_script
from .strategies import StrategyKind, StrategySpec, run_strategy
from .tactics import TacticId
from .utils.formatting import get_logger

logger = get_logger(__name__)

CHECKPOINT_VERSION = 1
REPLAY_CAPACITY = 5


class TrainingError(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class LearnerConfig:
    iterations: int = 300
    gamma: float = 0.99
    learning_rate: float = 5e-5
    seed: int = 0
    workers: int = 1
    checkpoint_every: int = 10
    baseline: bool = False
    record_wallclock: bool = False
    pretrain_epochs: int = 0
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class Trajectory:
    theorem: str
    actions: List[Action] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    kinds: List[OutcomeKind] = field(default_factory=list)
    log_probs: List[Tensor] = field(default_factory=list)
    proved: bool = False
    replayed: bool = False
    forward: Optional[PolicyForward] = None
    loss: Optional[float] = None
    gradient: Optional[Dict[str, Array]] = None

    def __len__(self) -> int:
        return len(self.actions)


# ========== RETURNS AND GRADIENTS ==========

def discounted_returns(rewards: Sequence[float], gamma: float) -> List[float]:
    """G_m = r_m + gamma * G_{m+1}, right to left."""
    returns = []
    g = 0.0
    for r in reversed(rewards):
        g = r + gamma * g
        returns.insert(0, g)
    return returns


def reinforce_gradient(trajectory: Trajectory, gamma: float, baseline: float = 0.0) -> Tuple[float, Dict[str, Array]]:
    """
    Loss -sum_m (G_m - baseline) log pi(a_m | s_m) and its gradient.

    The episode graph is released afterwards; the result is kept on the
    trajectory so later calls are free.
    """
    if trajectory.gradient is not None:
        return trajectory.loss, trajectory.gradient
    fwd = trajectory.forward
    if fwd is None:
        raise TrainingError(f"trajectory for {trajectory.theorem} has no policy graph")
    returns = discounted_returns(trajectory.rewards, gamma)
    loss: Optional[Tensor] = None
    for g, log_prob in zip(returns, trajectory.log_probs):
        term = scale(log_prob, -(g - baseline))
        loss = term if loss is None else loss + term
    if loss is None:
        grads = {name: np.zeros_like(leaf.value) for name, leaf in fwd.leaves.items()}
        value = 0.0
    else:
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError(f"non-finite loss on {trajectory.theorem} ({len(trajectory)} steps)")
        loss.backward()
        grads = fwd.gradients()
    trajectory.loss, trajectory.gradient = value, grads
    trajectory.log_probs = []
    trajectory.forward = None
    return value, grads


class GradientSum:
    """Running total of trajectory gradients; each one is released once added."""

    def __init__(self, params: PolicyParams):
        self.total = {name: np.zeros_like(value) for name, value in params.arrays.items()}
        self.loss = 0.0

    def add(self, trajectory: Trajectory, gamma: float, baseline: float = 0.0) -> None:
        value, grads = reinforce_gradient(trajectory, gamma, baseline)
        self.loss += value
        for name, g in grads.items():
            self.total[name] += g
        trajectory.gradient = None


def policy_gradient_step(
    trajectories: Sequence[Trajectory],
    params: PolicyParams,
    opt_state: OptimizerState,
    gamma: float = 0.99,
    baseline: float = 0.0,
    summed: Optional[GradientSum] = None,
) -> Tuple[PolicyParams, OptimizerState, Dict[str, float]]:
    """
    One RMSProp update on the gradient summed over `trajectories`.

    Pass `summed` when the gradients were already folded in as the
    trajectories arrived; the trajectories then only feed the statistics.
    """
    if summed is None:
        summed = GradientSum(params)
        for trajectory in trajectories:
            summed.add(trajectory, gamma, baseline)
    for name, g in summed.total.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name}")
    arrays, opt_state = rmsprop_step(params.arrays, summed.total, opt_state)
    episodes = [t for t in trajectories if not t.replayed]
    stats = {
        "loss": summed.loss,

        "mean_return": float(np.mean([discounted_returns(t.rewards, gamma)[0] for t in episodes if t.rewards]))
        if any(t.rewards for t in episodes) else 0.0,
        "proof_rate": float(np.mean([t.proved for t in episodes])) if episodes else 0.0,
    }
    return params.replace_arrays(arrays), opt_state, stats


# ========== ROLLOUTS ==========

def rollout(
    theorem: Theorem,
    library: Sequence[Theorem],
    params: PolicyParams,
    config: EpisodeConfig,
    tracker: Optional[DifficultyTracker],
    rng: np.random.Generator,
) -> Trajectory:
    env = ProofEnv.for_theorem(theorem, library, config, tracker)
    fwd = PolicyForward(params)
    trajectory = Trajectory(theorem.name, forward=fwd)
    while not env.done:
        sampled = sample_action(env.state, fwd, rng, env.candidates)
        result = env.step(sampled.action)
        trajectory.actions.append(sampled.action)
        trajectory.rewards.append(result.reward)
        trajectory.kinds.append(result.kind)
        trajectory.log_probs.append(sampled.log_prob)
    trajectory.proved = env.proved
    return trajectory


class ReplayBuffer:
    """The most recent successful action sequences per theorem, newest first."""

    def __init__(self, capacity: int = REPLAY_CAPACITY):
        self.capacity = capacity
        self._entries: Dict[str, Deque[Tuple[Action, ...]]] = {}

    def add(self, theorem: str, actions: Sequence[Action]) -> None:
        entries = self._entries.setdefault(theorem, deque(maxlen=self.capacity))
        entries.appendleft(tuple(actions))

    def get(self, theorem: str) -> List[Tuple[Action, ...]]:
        return list(self._entries.get(theorem, ()))

    def drop(self, theorem: str, actions: Sequence[Action]) -> None:
        entries = self._entries.get(theorem)
        if entries is not None and tuple(actions) in entries:
            entries.remove(tuple(actions))

    def __len__(self) -> int:
        return sum(len(v) for v in self._entries.values())

    def to_dict(self) -> Dict[str, List[List[Dict[str, object]]]]:
        return {
            name: [[_action_to_dict(a) for a in entry] for entry in entries]
            for name, entries in sorted(self._entries.items())
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object], library: Sequence[Theorem], capacity: int = REPLAY_CAPACITY) -> "ReplayBuffer":
        by_name = {t.name: t for t in library}
        buffer = cls(capacity)
        for name, entries in data.items():
            for entry in reversed(list(entries)):
                try:
                    buffer.add(name, [_action_from_dict(a, by_name) for a in entry])
                except (KeyError, ValueError):
                    logger.warning("dropping stale replay entry for %s", name)
        return buffer


def _action_to_dict(action: Action) -> Dict[str, object]:
    args = [{"theorem": a.name} if isinstance(a, Theorem) else {"term": print_term(a)} for a in action.args]
    return {"fringe": action.fringe_idx, "goal": action.goal_idx, "tactic": action.tactic.value, "args": args}


def _action_from_dict(data: Mapping[str, object], by_name: Mapping[str, Theorem]) -> Action:
    args = []
    for arg in data["args"]:
        args.append(by_name[arg["theorem"]] if "theorem" in arg else parse_term(arg["term"]))
    return Action(int(data["fringe"]), int(data["goal"]), TacticId.from_name(data["tactic"]), tuple(args))


def replay_actions(
    theorem: Theorem,
    actions: Sequence[Action],
    library: Sequence[Theorem],
    params: PolicyParams,
    config: EpisodeConfig,
    tracker: Optional[DifficultyTracker],
) -> Optional[Trajectory]:
    """Walk a stored proof again, scoring each action under the current parameters."""
    env = ProofEnv.for_theorem(theorem, library, config, tracker)
    fwd = PolicyForward(params)
    trajectory = Trajectory(theorem.name, replayed=True, forward=fwd)
    try:
        for action in actions:
            if env.done:
                break
            log_prob = action_log_prob(env.state, action, fwd, env.candidates)
            result = env.step(action)
            trajectory.actions.append(action)
            trajectory.rewards.append(result.reward)
            trajectory.kinds.append(result.kind)
            trajectory.log_probs.append(log_prob)
    except InvalidActionError as exc:
        logger.debug("stored proof of %s no longer applies: %s", theorem.name, exc)
        return None
    if not env.proved:
        return None
    trajectory.proved = True
    return trajectory


def maybe_replay(
    theorem: Theorem,
    episode: Trajectory,
    buffer: ReplayBuffer,
    library: Sequence[Theorem],
    params: PolicyParams,
    config: EpisodeConfig,
    tracker: Optional[DifficultyTracker],
    rng: np.random.Generator,
) -> Optional[Trajectory]:
    """
    Store a successful episode; after a failed one, replay one of the stored
    proofs of the same theorem if there is any.
    """
    if episode.proved:
        buffer.add(theorem.name, episode.actions)
        return None
    chosen, replayed = replay_stored(theorem, buffer.get(theorem.name), library, params, config, tracker, rng)
    if chosen is not None and replayed is None:
        buffer.drop(theorem.name, chosen)
    return replayed


def replay_stored(
    theorem: Theorem,
    entries: Sequence[Tuple[Action, ...]],
    library: Sequence[Theorem],
    params: PolicyParams,
    config: EpisodeConfig,
    tracker: Optional[DifficultyTracker],
    rng: np.random.Generator,
) -> Tuple[Optional[Tuple[Action, ...]], Optional[Trajectory]]:
    """Pick one stored proof at random and replay it; the buffer is left alone."""
    if not entries:
        return None, None
    chosen = entries[int(rng.integers(len(entries)))]
    return chosen, replay_actions(theorem, chosen, library, params, config, tracker)


# ========== CHECKPOINTS ==========

@dataclass
class Checkpoint:
    params: PolicyParams
    opt_state: OptimizerState
    tracker: DifficultyTracker
    buffer: Dict[str, object]
    iteration: int
    config: Dict[str, object]


def save_checkpoint(
    path: Union[str, Path],
    params: PolicyParams,
    opt_state: OptimizerState,
    tracker: DifficultyTracker,
    buffer: ReplayBuffer,
    iteration: int,
    config: Optional[LearnerConfig] = None,
) -> None:
    metadata = {
        "version": CHECKPOINT_VERSION,
        "iteration": iteration,
        "vocabulary": params.vocab.to_list(),
        "policy": asdict(params.config),
        "optimizer": {
            "learning_rate": opt_state.learning_rate,
            "decay": opt_state.decay,
            "epsilon": opt_state.epsilon,
            "steps": opt_state.steps,
        },
        "tracker": tracker.to_dict(),
        "replay": buffer.to_dict(),
        "config": _config_dict(config) if config is not None else {},
    }
    arrays = {f"param/{k}": v for k, v in params.arrays.items()}
    arrays.update({f"opt/{k}": v for k, v in opt_state.accumulators.items()})
    with open(path, "wb") as f:
        np.savez(f, metadata=np.array(json.dumps(metadata)), **arrays)


def _config_dict(config: LearnerConfig) -> Dict[str, object]:
    data = asdict(config)
    return json.loads(json.dumps(data))


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Raises:
        CheckpointError: if the file is not a checkpoint this version can read
    """
    try:
        with np.load(path, allow_pickle=False) as data:
            metadata = json.loads(str(data["metadata"]))
            params = {k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")}
            accumulators = {k[len("opt/"):]: data[k] for k in data.files if k.startswith("opt/")}
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if metadata.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {metadata.get('version')}")
    vocab = Vocabulary(metadata["vocabulary"])
    policy = PolicyParams(vocab, PolicyConfig(**metadata["policy"]), params)
    opt = metadata["optimizer"]
    opt_state = OptimizerState(opt["learning_rate"], opt["decay"], opt["epsilon"], accumulators, opt["steps"])
    return Checkpoint(
        policy,
        opt_state,
        DifficultyTracker.from_dict(metadata["tracker"]),
        metadata.get("replay", {}),
        metadata["iteration"],
        metadata.get("config", {}),
    )


# ========== TRAINING ==========

@dataclass
class TrainResult:
    params: PolicyParams
    opt_state: OptimizerState
    tracker: DifficultyTracker
    buffer: ReplayBuffer
    metrics: List[Dict[str, object]] = field(default_factory=list)


class ReturnBaseline:
    """Moving average of episode returns, subtracted when enabled."""

    def __init__(self, enabled: bool, decay: float = 0.9):
        self.enabled = enabled
        self.decay = decay
        self.value = 0.0

    def update(self, mean_return: float) -> None:
        if self.enabled:
            self.value = self.decay * self.value + (1.0 - self.decay) * mean_return

    @property
    def current(self) -> float:
        return self.value if self.enabled else 0.0


def build_vocabulary(library: Sequence[Theorem]) -> Vocabulary:
    return Vocabulary.from_terms(t.statement for t in library)


def _episode(
    index: int,
    iteration: int,
    theorem: Theorem,
    library: Sequence[Theorem],
    params: PolicyParams,
    config: LearnerConfig,
    tracker: DifficultyTracker,
    buffer: ReplayBuffer,
    baseline: float,
) -> Tuple[Trajectory, Optional[Tuple[Action, ...]], Optional[Trajectory]]:
    rng = np.random.default_rng([config.seed, iteration, index])
    episode = rollout(theorem, library, params, config.episode, tracker, rng)
    reinforce_gradient(episode, config.gamma, baseline)
    if episode.proved:
        return episode, None, None
    replay_rng = np.random.default_rng([config.seed, iteration, index, 1])
    chosen, replayed = replay_stored(
        theorem, buffer.get(theorem.name), library, params, config.episode, tracker, replay_rng
    )
    if replayed is None:
        return episode, chosen, None
    reinforce_gradient(replayed, config.gamma, baseline)
    return episode, None, replayed


def _run_episodes(jobs: Sequence[tuple], workers: int):
    """Episode outcomes in job order, computed on `workers` threads."""
    if workers == 1:
        for job in jobs:
            yield _episode(*job)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(lambda job: _episode(*job), jobs)


def train(
    train_set: Sequence[Theorem],
    library: Sequence[Theorem],
    config: LearnerConfig,
    metrics_path: Optional[Union[str, Path]] = None,
    checkpoint_path: Optional[Union[str, Path]] = None,
    start: Optional[Checkpoint] = None,
    on_iteration: Optional[Callable[[Dict[str, object]], None]] = None,
) -> TrainResult:
    """
    Train from scratch, or continue from `start`.

    Rollouts of one iteration see frozen parameters and a frozen difficulty
    tracker; per-episode random streams depend on (seed, iteration, theorem
    position) only, so the worker count does not change results.
    """
    if not train_set:
        raise TrainingError("the training split is empty")
    if start is not None:
        params, opt_state, tracker = start.params, start.opt_state, start.tracker
        buffer = ReplayBuffer.from_dict(start.buffer, library)
        first = start.iteration
    else:
        rng = np.random.default_rng(config.seed)
        params = PolicyParams.initialize(build_vocabulary(library), config.policy, rng)
        if config.pretrain_epochs > 0:
            arrays, report = pretrain_reconstruction(
                [t.statement for t in library], params.vocab, params.arrays, config.pretrain_epochs, rng
            )
            params = params.replace_arrays(arrays)
            logger.info("encoder pretraining accuracy %.3f", report.accuracy)
        opt_state = OptimizerState(learning_rate=config.learning_rate)
        tracker = DifficultyTracker()
        buffer = ReplayBuffer()
        first = 0
    tracker.register(t.name for t in train_set)
    baseline = ReturnBaseline(config.baseline)
    result = TrainResult(params, opt_state, tracker, buffer)

    if metrics_path is not None and start is None:
        Path(metrics_path).write_text("", encoding="utf-8")
    if checkpoint_path is not None and start is None:
        save_checkpoint(checkpoint_path, params, opt_state, tracker, buffer, 0, config)

    for iteration in range(first, first + config.iterations):
        started = time.perf_counter()
        frozen = tracker.snapshot()
        jobs = [
            (i, iteration, theorem, library, params, config, frozen, buffer, baseline.current)
            for i, theorem in enumerate(train_set)
        ]
        summed = GradientSum(params)
        outcomes = []
        for episode, stale, replayed in _run_episodes(jobs, config.workers):
            summed.add(episode, config.gamma, baseline.current)
            if replayed is not None:
                summed.add(replayed, config.gamma, baseline.current)
            outcomes.append((episode, stale, replayed))

        # Buffer updates wait until every rollout has read its stored proofs
        batch: List[Trajectory] = []
        for theorem, (episode, stale, replayed) in zip(train_set, outcomes):
            batch.append(episode)
            if episode.proved:
                buffer.add(theorem.name, episode.actions)
            if stale is not None:
                buffer.drop(theorem.name, stale)
            if replayed is not None:
                batch.append(replayed)

        params, opt_state, stats = policy_gradient_step(
            batch, params, opt_state, config.gamma, baseline.current, summed
        )
        baseline.update(stats["mean_return"])
        for theorem, (episode, _, _) in zip(train_set, outcomes):
            tracker.update(theorem.name, episode.proved)

        record = {
            "iteration": iteration,
            "proof_rate": stats["proof_rate"],
            "mean_return": stats["mean_return"],
            "loss": stats["loss"],
            "proved_ids": [t.name for t, (e, _, _) in zip(train_set, outcomes) if e.proved],
            "wallclock_ms": int((time.perf_counter() - started) * 1000) if config.record_wallclock else 0,
        }
        result.metrics.append(record)
        if metrics_path is not None:
            with open(metrics_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record) + "\n")
        logger.info(
            "iteration %d: proof rate %.3f, mean return %.3f, loss %.4f",
            iteration, record["proof_rate"], record["mean_return"], record["loss"],
        )
        if on_iteration is not None:
            on_iteration(record)
        done = iteration + 1
        if checkpoint_path is not None and (done % config.checkpoint_every == 0 or done == first + config.iterations):
            save_checkpoint(checkpoint_path, params, opt_state, tracker, buffer, done, config)

    result.params, result.opt_state = params, opt_state
    return result


# ========== EVALUATION ==========

@dataclass
class EvalReport:
    proved: int
    total: int
    mean_timesteps: float
    mean_proof_length: float
    rows: List[Dict[str, object]] = field(default_factory=list)

    @property
    def proved_ids(self) -> List[str]:
        return [r["name"] for r in self.rows if r["proved"]]


def evaluate(
    params: PolicyParams,
    test_set: Sequence[Theorem],
    library: Sequence[Theorem],
    budget: int = 50,
    seed: int = 0,
    config: Optional[EpisodeConfig] = None,
    spec: StrategySpec = StrategySpec(StrategyKind.LEARNED),
) -> EvalReport:
    """
    One sampled attempt per theorem; every proof found is replayed through
    the tactic engine before it is counted.
    """
    episode = config or EpisodeConfig()
    rows = []
    for i, theorem in enumerate(test_set):
        rng = np.random.default_rng([seed, i])
        result = run_strategy(
            Goal((), theorem.statement), params, spec, budget, rng,
            library, theorem.library_index, episode, theorem.name,
        )
        proved = result.proved
        if proved:
            try:
                replay_script(result.proof, episode.fuel)
            except ScriptError as exc:
                raise TrainingError(f"proof of {theorem.name} does not replay: {exc}") from None
        rows.append({
            "name": theorem.name,
            "proved": proved,
            "timesteps": result.timesteps,
            "proof_length": result.proof_length,
            "return": result.env.total_reward if result.env is not None else 0.0,
            "script": result.proof.render() if proved else None,
        })
    proved_rows = [r for r in rows if r["proved"]]
    return EvalReport(
        len(proved_rows),
        len(rows),
        float(np.mean([r["timesteps"] for r in proved_rows])) if proved_rows else 0.0,
        float(np.mean([r["proof_length"] for r in proved_rows])) if proved_rows else 0.0,
        rows,
    )
