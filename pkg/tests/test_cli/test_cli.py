"""
Tests for the command-line interface.
"""
import io
import json

import pytest
from click.testing import CliRunner
from rich.console import Console

from app import main
from app.main import cli

SMALL_NETWORK = {"dim": 8, "embedding_dim": 6, "hidden": 8, "max_args": 3, "checkpoint_every": 1}

COMMUTE_SCRIPT = (
    "Theorem commute: p /\\ q ==> q /\\ p\n"
    "Proof\n"
    "  strip_tac\n"
    "  >- (simp [])\n"
    "  >- (simp [])\n"
    "QED\n"
)


@pytest.fixture
def output(monkeypatch):
    """Route both consoles into one wide string buffer"""
    buffer = io.StringIO()
    test_console = Console(file=buffer, width=200)
    monkeypatch.setattr(main, "console", test_console)
    monkeypatch.setattr("app.utils.formatting.console", test_console)
    monkeypatch.setattr("app.utils.formatting.err_console", test_console)
    return buffer


@pytest.fixture
def workdir(tmp_path, monkeypatch, clean_environment):
    """An empty working directory with a small-network config file"""
    monkeypatch.chdir(tmp_path)
    (tmp_path / "small.json").write_text(json.dumps(SMALL_NETWORK), encoding="utf-8")
    return tmp_path


def invoke(*args):
    return CliRunner().invoke(cli, list(args))


@pytest.fixture
def corpus(workdir):
    result = invoke("gen-corpus", "--output", "c.jsonl", "--seed", "3", "--n", "10",
                    "--max-vars", "3", "--max-depth", "4", "--theories", "2")
    assert result.exit_code == 0
    return "c.jsonl"


@pytest.fixture
def checkpoint(corpus):
    result = invoke("-c", "small.json", "train", "--corpus", corpus, "--iterations", "2", "--budget", "3",
                    "--checkpoint", "model.npz", "--metrics", "metrics.jsonl")
    assert result.exit_code == 0, result.output
    return "model.npz"


class TestGenCorpus:
    """Test cases for the gen-corpus command."""

    def test_writes_corpus(self, workdir, output):
        result = invoke("gen-corpus", "-o", "c.jsonl", "-n", "6", "--max-vars", "3", "--theories", "2")
        assert result.exit_code == 0
        assert len((workdir / "c.jsonl").read_text(encoding="utf-8").splitlines()) == 6
        assert "Wrote 6 theorems to c.jsonl" in output.getvalue()

    def test_rejects_zero_theorems(self, workdir):
        assert invoke("gen-corpus", "-n", "0").exit_code == 2


class TestConfigCommand:
    """Test cases for the config command."""

    def test_shows_merged_values(self, workdir, output):
        result = invoke("-c", "small.json", "config")
        assert result.exit_code == 0
        text = output.getvalue()
        assert "FringeProver Configuration" in text
        assert "embedding_dim" in text
        assert "Config file: small.json" in text

    def test_unknown_key_in_file(self, workdir, output):
        (workdir / "bad.json").write_text(json.dumps({"colour": "red"}), encoding="utf-8")
        result = invoke("-c", "bad.json", "config")
        assert result.exit_code == 2
        assert "colour" in output.getvalue()

    def test_environment_value(self, workdir, output, monkeypatch):
        monkeypatch.setenv("FRINGE_PROVER_BUDGET", "0")
        assert invoke("config").exit_code == 2
        assert "budget must be at least 1" in output.getvalue()


class TestReplayCommand:
    """Test cases for checking proof scripts."""

    def test_valid_script(self, workdir, output):
        (workdir / "commute.txt").write_text(COMMUTE_SCRIPT, encoding="utf-8")
        result = invoke("replay", "commute.txt")
        assert result.exit_code == 0
        assert "commute: proof checked (3 steps)" in output.getvalue()

    def test_wrong_tactic(self, workdir, output):
        (workdir / "bad.txt").write_text(COMMUTE_SCRIPT.replace("strip_tac", "eq_tac"), encoding="utf-8")
        result = invoke("replay", "bad.txt")
        assert result.exit_code == 1
        assert "step 1" in output.getvalue()

    def test_missing_script(self, workdir):
        assert invoke("replay", "absent.txt").exit_code == 2

    def test_missing_corpus(self, workdir, output):
        (workdir / "commute.txt").write_text(COMMUTE_SCRIPT, encoding="utf-8")
        result = invoke("replay", "commute.txt", "--corpus", "missing.jsonl")
        assert result.exit_code == 2
        assert "corpus file not found: missing.jsonl" in output.getvalue()


class TestTrainCommand:
    """Test cases for training from the command line."""

    def test_missing_corpus(self, workdir, output):
        result = invoke("train", "--corpus", "missing.jsonl")
        assert result.exit_code == 2
        assert "corpus file not found: missing.jsonl" in output.getvalue()

    def test_same_seed_same_metrics(self, corpus, workdir):
        for name in ("a", "b"):
            result = invoke("-c", "small.json", "train", "--corpus", corpus, "-i", "2", "-b", "3",
                            "--checkpoint", f"{name}.npz", "--metrics", f"{name}.jsonl")
            assert result.exit_code == 0
        first = (workdir / "a.jsonl").read_text(encoding="utf-8")
        assert first == (workdir / "b.jsonl").read_text(encoding="utf-8")
        assert len(first.splitlines()) == 2

    def test_resume_appends(self, checkpoint, workdir):
        result = invoke("-c", "small.json", "train", "--corpus", "c.jsonl", "-i", "1", "-b", "3",
                        "--checkpoint", checkpoint, "--metrics", "metrics.jsonl", "--resume")
        assert result.exit_code == 0
        records = [json.loads(line) for line in (workdir / "metrics.jsonl").read_text(encoding="utf-8").splitlines()]
        assert [r["iteration"] for r in records] == [0, 1, 2]

    def test_resume_without_checkpoint(self, corpus, output):
        result = invoke("train", "--corpus", corpus, "--checkpoint", "none.npz", "--resume")
        assert result.exit_code == 2
        assert "checkpoint file not found: none.npz" in output.getvalue()


class TestEvaluationCommands:
    """Test cases for eval and ablate."""

    def test_eval(self, checkpoint, output):
        result = invoke("eval", "--corpus", "c.jsonl", "--checkpoint", checkpoint, "-b", "3", "--detailed")
        assert result.exit_code == 0
        text = output.getvalue()
        assert "Proved: " in text and "/2" in text
        assert "Mean timesteps:" in text
        assert "Mean proof length:" in text

    def test_eval_metis_proves_everything(self, checkpoint, output):
        result = invoke("eval", "--corpus", "c.jsonl", "--checkpoint", checkpoint, "--strategy", "metis",
                        "--split", "all")
        assert result.exit_code == 0
        assert "Proved: 10/10" in output.getvalue()
        assert "Mean timesteps: 1.00" in output.getvalue()

    def test_eval_bad_strategy(self, checkpoint):
        result = invoke("eval", "--corpus", "c.jsonl", "--checkpoint", checkpoint, "--strategy", "greedy")
        assert result.exit_code == 2

    def test_ablate_writes_table(self, checkpoint, workdir):
        result = invoke("ablate", "--corpus", "c.jsonl", "--checkpoint", checkpoint, "-b", "3",
                        "--strategy", "metis", "--strategy", "bfs:topk:2", "-o", "table.txt")
        assert result.exit_code == 0
        table = (workdir / "table.txt").read_text(encoding="utf-8")
        assert "metis" in table and "bfs topk b=2" in table
        assert "Mean proof length" in table


class TestProveCommand:
    """Test cases for single-goal search."""

    def test_prove_and_replay(self, checkpoint, workdir, output):
        result = invoke("prove", "p ==> p", "--checkpoint", checkpoint, "--strategy", "metis", "-o", "proof.txt")
        assert result.exit_code == 0
        assert "Proof of goal" in output.getvalue()
        assert (workdir / "proof.txt").read_text(encoding="utf-8").startswith("Theorem goal: p ==> p\n")
        assert invoke("replay", "proof.txt").exit_code == 0

    def test_unprovable_goal(self, checkpoint, output):
        result = invoke("prove", "p ==> q", "--checkpoint", checkpoint, "--strategy", "metis", "-b", "1")
        assert result.exit_code == 1
        assert "no proof found within 1 timesteps" in output.getvalue()

    def test_syntax_error(self, checkpoint):
        assert invoke("prove", "p ==>", "--checkpoint", checkpoint).exit_code == 2

    def test_missing_checkpoint(self, workdir, output):
        result = invoke("prove", "p ==> p", "--checkpoint", "none.npz")
        assert result.exit_code == 2
        assert "checkpoint file not found: none.npz" in output.getvalue()

    def test_dot_graph(self, checkpoint, workdir):
        result = invoke("prove", "p /\\ q ==> q /\\ p", "--checkpoint", checkpoint, "-b", "4", "--dot", "g.dot")
        assert result.exit_code in (0, 1)
        assert (workdir / "g.dot").read_text(encoding="utf-8").startswith("digraph search {")

    def test_export_dot(self, checkpoint, workdir, output):
        result = invoke("export-dot", "p ==> p", "--checkpoint", checkpoint, "--strategy", "metis", "-o", "s.dot")
        assert result.exit_code == 0
        dot = (workdir / "s.dot").read_text(encoding="utf-8")
        assert "lightblue" in dot
        assert "Search graph written to s.dot" in output.getvalue()


class TestPlotCommand:
    """Test cases for plotting the metrics log."""

    def test_plot(self, checkpoint, workdir):
        result = invoke("plot-metrics", "metrics.jsonl", "-o", "curve.png")
        assert result.exit_code == 0
        assert (workdir / "curve.png").read_bytes()[:4] == b"\x89PNG"

    def test_bad_metrics_line(self, workdir, output):
        (workdir / "bad.jsonl").write_text("{}\nnot json\n", encoding="utf-8")
        result = invoke("plot-metrics", "bad.jsonl")
        assert result.exit_code == 2
        assert "line 2" in output.getvalue()
