"""
Tests for the factorized policy: distributions, masking, sampling and log-probabilities.
"""
import numpy as np
import pytest

from app.autodiff import finite_diff_check
from app.encoder import Vocabulary
from app.env import Action, InvalidActionError, ProofEnv
from app.kernel import parse_goal
from app.policy import (
    PolicyConfig,
    PolicyForward,
    PolicyParams,
    action_log_prob,
    allowed_tactics,
    fringe_distribution,
    ranked_tactics,
    sample_action,
    score_goal,
    tactic_distribution,
)
from app.tactics import TACTICS, ArgKind, TacticId

TINY = PolicyConfig(dim=3, embedding_dim=2, hidden=3, max_args=2)


def split_env(library):
    """Two fringes: the conjunction goal and its two stripped subgoals."""
    env = ProofEnv(parse_goal("p0 /\\ p1 ==> p1 /\\ p0"), library, len(library))
    env.step(Action(0, 0, TacticId.STRIP_TAC))
    return env


def params_for(library, config, seed=0):
    vocab = Vocabulary.from_terms(t.statement for t in library)
    return PolicyParams.initialize(vocab, config, np.random.default_rng(seed))


class TestParams:
    """Test cases for parameter construction."""

    def test_initialize_shapes(self, small_params, small_policy_config):
        arrays = small_params.arrays
        assert arrays["tactic.out.w"].shape == (len(TACTICS), small_policy_config.hidden)
        assert arrays["tactic_embed"].shape == (len(TACTICS), small_policy_config.dim)
        assert small_params.parameter_count() == sum(v.size for v in arrays.values())

    def test_zeros_keep_layout(self, small_params):
        zeros = PolicyParams.zeros(small_params.vocab, small_params.config)
        assert zeros.arrays.keys() == small_params.arrays.keys()
        assert all(not v.any() for v in zeros.arrays.values())


class TestDistributions:
    """Test cases for the fringe and tactic heads."""

    def test_fringe_distribution(self, small_library, small_policy_config):
        env = split_env(small_library)
        params = params_for(small_library, small_policy_config)
        probs = fringe_distribution(env.state, params)
        assert probs.shape == (2,)
        assert probs.sum() == pytest.approx(1.0)
        assert np.all(probs > 0)

    def test_fringe_score_is_sum_of_goal_scores(self, small_library, small_policy_config):
        env = split_env(small_library)
        params = params_for(small_library, small_policy_config)
        goals = env.state.fringes[1].goals
        logits = PolicyForward(params).fringe_logits(env.state).value
        assert logits[1] == pytest.approx(sum(score_goal(g, params) for g in goals))

    def test_tactic_distribution(self, small_params):
        probs = tactic_distribution(parse_goal("p0 ==> p0"), small_params)
        assert probs.shape == (len(TACTICS),)
        assert probs.sum() == pytest.approx(1.0)

    def test_zero_parameters_are_uniform(self, small_library, small_policy_config):
        env = split_env(small_library)
        params = params_for(small_library, small_policy_config)
        zeros = PolicyParams.zeros(params.vocab, params.config)
        np.testing.assert_allclose(fringe_distribution(env.state, zeros), [0.5, 0.5])
        np.testing.assert_allclose(tactic_distribution(env.state.main_goal, zeros), np.full(len(TACTICS), 1 / len(TACTICS)))

    def test_proved_state_has_no_fringe_distribution(self, small_params):
        env = ProofEnv(parse_goal("p0 ==> p0"))
        env.step(Action(0, 0, TacticId.SIMP))
        assert env.proved
        with pytest.raises(InvalidActionError):
            fringe_distribution(env.state, small_params)


class TestMasking:
    """Test cases for tactics without candidate arguments."""

    def test_single_theorem_tactics_need_candidates(self):
        env = ProofEnv(parse_goal("p0 ==> p1"))
        allowed = allowed_tactics(env.state.main_goal, env.candidates)
        assert TacticId.DRULE not in allowed
        assert TacticId.IRULE not in allowed
        assert TacticId.CASE_ON in allowed

    def test_list_tactics_stay_available(self):
        env = ProofEnv(parse_goal("p0 ==> p1"))
        allowed = allowed_tactics(env.state.main_goal, env.candidates)
        for tactic in TACTICS:
            if tactic.arg_kind is ArgKind.THEOREM_LIST:
                assert tactic in allowed

    def test_variable_free_goal_masks_case_analysis(self):
        env = ProofEnv(parse_goal("T"))
        assert TacticId.CASE_ON not in allowed_tactics(env.state.main_goal, env.candidates)

    def test_ranked_tactics_follow_probabilities(self, small_library, small_policy_config):
        env = split_env(small_library)
        params = params_for(small_library, small_policy_config)
        g = env.state.main_goal
        ranked = ranked_tactics(g, params, env.candidates)
        probs = tactic_distribution(g, params)
        assert sorted(ranked, key=lambda t: t.index) == allowed_tactics(g, env.candidates)
        scores = [probs[t.index] for t in ranked]
        assert scores == sorted(scores, reverse=True)


class TestSampling:
    """Test cases for drawing actions."""

    def test_sampled_actions_are_valid(self, small_library, small_policy_config):
        params = params_for(small_library, small_policy_config)
        rng = np.random.default_rng(7)
        for _ in range(30):
            env = split_env(small_library)
            sampled = sample_action(env.state, params, rng, env.candidates)
            action = sampled.action
            assert action.goal_idx == 0
            assert action.tactic in allowed_tactics(env.state.fringes[action.fringe_idx].goals[0], env.candidates)
            assert len(set(action.args)) == len(action.args) <= small_policy_config.max_args
            env.step(action)

    def test_log_prob_is_sum_of_parts(self, small_library, small_policy_config):
        params = params_for(small_library, small_policy_config)
        env = split_env(small_library)
        sampled = sample_action(env.state, params, np.random.default_rng(2), env.candidates)
        assert sampled.log_prob.item() == pytest.approx(sum(sampled.components))
        assert sampled.log_prob.item() <= 0.0

    def test_rescoring_matches_sampling(self, small_library, small_policy_config):
        params = params_for(small_library, small_policy_config)
        rng = np.random.default_rng(11)
        for _ in range(20):
            env = split_env(small_library)
            sampled = sample_action(env.state, params, rng, env.candidates)
            rescored = action_log_prob(env.state, sampled.action, params, env.candidates)
            assert rescored.item() == pytest.approx(sampled.log_prob.item())

    def test_same_seed_same_action(self, small_library, small_policy_config):
        params = params_for(small_library, small_policy_config)
        env = split_env(small_library)
        first = sample_action(env.state, params, np.random.default_rng(5), env.candidates).action
        second = sample_action(env.state, params, np.random.default_rng(5), env.candidates).action
        assert first == second


class TestActionLogProb:
    """Test cases for scoring a given action."""

    def test_rejects_other_goal_index(self, small_library, small_policy_config):
        params = params_for(small_library, small_policy_config)
        env = split_env(small_library)
        with pytest.raises(InvalidActionError):
            action_log_prob(env.state, Action(1, 1, TacticId.SIMP, ()), params, env.candidates)

    def test_rejects_wrong_argument_count(self, small_library, small_policy_config):
        params = params_for(small_library, small_policy_config)
        env = split_env(small_library)
        with pytest.raises(InvalidActionError):
            action_log_prob(env.state, Action(1, 0, TacticId.METIS, ()), params, env.candidates)

    def test_rejects_foreign_argument(self, small_library, small_policy_config):
        params = params_for(small_library, small_policy_config)
        env = split_env(small_library)
        q_dneg = small_library[2]
        action = Action(1, 0, TacticId.METIS, (q_dneg, small_library[0]))
        with pytest.raises(InvalidActionError):
            action_log_prob(env.state, action, params, env.candidates)

    def test_log_prob_gradient_matches_finite_differences(self, small_library):
        """Fringe, tactic and both argument steps all contribute to the gradient."""
        params = params_for(small_library, TINY, seed=3)
        env = split_env(small_library)
        action = Action(1, 0, TacticId.METIS, (small_library[3], small_library[1]))

        def log_pi(leaves):
            return action_log_prob(env.state, action, PolicyForward(params, leaves), env.candidates)

        report = finite_diff_check(log_pi, params.arrays)
        assert report.passed, report.failures[:5]
