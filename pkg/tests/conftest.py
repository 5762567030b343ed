"""
Test fixtures and utility functions for testing the fringe prover.
"""
import os

import numpy as np
import pytest

from app.corpus import generate_corpus, library_of, save_corpus, split
from app.encoder import Vocabulary
from app.env import EpisodeConfig
from app.kernel import BINARY_TYPES, Goal, Not, Theorem, parse_term
from app.learner import LearnerConfig, train
from app.policy import PolicyConfig, PolicyParams

DESK_ITERATIONS = 300


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running experiment, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# ========== KERNEL FIXTURES ==========

def terms_up_to_depth(leaves, depth):
    """Every term of depth at most `depth` over `leaves`; a leaf has depth 1."""
    found = list(leaves)
    for _ in range(depth - 1):
        shallower = found
        found = list(leaves) + [Not(t) for t in shallower]
        for cls in BINARY_TYPES:
            found.extend(cls(a, b) for a in shallower for b in shallower)
    return found


@pytest.fixture
def term_enumerator():
    """Exhaustive term enumeration, e.g. `term_enumerator([p, q], 3)`"""
    return terms_up_to_depth


@pytest.fixture
def goal_of_text():
    """Build a goal without assumptions from its text"""
    def build(text):
        return Goal((), parse_term(text))
    return build


@pytest.fixture
def small_library():
    """A hand-written library over theories p and q"""
    statements = [
        ("p_conj_comm", "p0 /\\ p1 <=> p1 /\\ p0", "p"),
        ("p_mp", "p0 ==> (p0 ==> p1) ==> p1", "p"),
        ("q_dneg", "~~q0 <=> q0", "q"),
        ("p_weaken", "p0 ==> p1 ==> p0", "p"),
    ]
    return [Theorem(name, parse_term(text), theory, i) for i, (name, text, theory) in enumerate(statements)]


# ========== CORPUS FIXTURES ==========

@pytest.fixture
def tiny_records():
    """Ten generated theorems over two theories"""
    return generate_corpus(seed=3, n=10, max_vars=3, max_depth=4, theory_count=2)


@pytest.fixture
def tiny_library(tiny_records):
    return library_of(tiny_records)


@pytest.fixture
def corpus_file(tmp_path, tiny_records):
    """The ten-theorem corpus written as JSONL"""
    path = tmp_path / "corpus.jsonl"
    save_corpus(tiny_records, path)
    return path


# ========== POLICY FIXTURES ==========

@pytest.fixture
def small_policy_config():
    """Network sizes small enough for fast tests"""
    return PolicyConfig(dim=8, embedding_dim=6, hidden=8, max_args=3)


@pytest.fixture
def small_params(tiny_library, small_policy_config):
    vocab = Vocabulary.from_terms(t.statement for t in tiny_library)
    return PolicyParams.initialize(vocab, small_policy_config, np.random.default_rng(0))


@pytest.fixture
def clean_environment():
    """Remove FRINGE_PROVER_* variables for the duration of a test"""
    old_env = dict(os.environ)
    for key in list(os.environ):
        if key.startswith("FRINGE_PROVER_"):
            del os.environ[key]
    yield
    os.environ.clear()
    os.environ.update(old_env)


# ========== DESK EXPERIMENT FIXTURES ==========

@pytest.fixture(scope="session")
def desk_corpus():
    """The default 250-theorem corpus: library, training split and held-out split"""
    records = generate_corpus(seed=0)
    train_records, test_records = split(records, 0.8, seed=0)
    return (
        library_of(records),
        [r.to_theorem() for r in train_records],
        [r.to_theorem() for r in test_records],
    )


@pytest.fixture(scope="session")
def desk_training(desk_corpus):
    """Trained parameters on the desk corpus for a given seed, each trained once"""
    library, train_set, _ = desk_corpus
    trained = {}

    def run(seed):
        if seed not in trained:
            config = LearnerConfig(
                iterations=DESK_ITERATIONS, seed=seed, learning_rate=1e-3, episode=EpisodeConfig(budget=50)
            )
            trained[seed] = train(train_set, library, config).params
        return trained[seed]
    return run
