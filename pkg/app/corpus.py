"""
Theorem corpus: generated tautologies, JSONL storage and train/test splits.

Every theory owns the variables spelled with its letter (theory `p` has
`p0`, `p1`, ...), so the theories a goal mentions are read off its
variable names.
"""
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .kernel import (
    And,
    Iff,
    Imp,
    Not,
    Or,
    Term,
    TermSyntaxError,
    Theorem,
    Var,
    VariableBudgetError,
    is_valid_term,
    parse_term,
    print_term,
    term_depth,
)
from .tactics import instantiate
from .utils.formatting import get_logger

logger = get_logger(__name__)

THEORY_LETTERS = "pqrstuvwxyzabcdefghijklmno"
MAX_GENERATED_VARS = 8
ATTEMPTS_PER_THEOREM = 200


class CorpusError(ValueError):
    """Invalid corpus content; `line` is 1-based when the problem is on one line."""

    def __init__(self, line, reason: str):
        self.line = line
        self.reason = reason
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{reason}")


@dataclass(frozen=True)
class CorpusRecord:
    name: str
    statement: str
    theory: str
    index: int

    def to_theorem(self) -> Theorem:
        return Theorem(self.name, parse_term(self.statement), self.theory, self.index)


# ========== GENERATION ==========

# m_a, m_b, m_c are placeholders for random subformulas
SCHEMAS: Dict[str, str] = {
    "weaken": "m_a ==> m_b ==> m_a",
    "distribute_imp": "(m_a ==> m_b ==> m_c) ==> (m_a ==> m_b) ==> m_a ==> m_c",
    "conj_intro": "m_a ==> m_b ==> m_a /\\ m_b",
    "conj_elim": "m_a /\\ m_b ==> m_a",
    "conj_comm": "m_a /\\ m_b ==> m_b /\\ m_a",
    "disj_intro": "m_a ==> m_a \\/ m_b",
    "disj_comm": "m_a \\/ m_b ==> m_b \\/ m_a",
    "and_over_or": "m_a /\\ (m_b \\/ m_c) <=> m_a /\\ m_b \\/ m_a /\\ m_c",
    "or_over_and": "m_a \\/ m_b /\\ m_c <=> (m_a \\/ m_b) /\\ (m_a \\/ m_c)",
    "contrapositive": "(m_a ==> m_b) ==> ~m_b ==> ~m_a",
    "de_morgan_and": "~(m_a /\\ m_b) <=> ~m_a \\/ ~m_b",
    "de_morgan_or": "~(m_a \\/ m_b) <=> ~m_a /\\ ~m_b",
    "excluded_middle": "m_a \\/ ~m_a",
    "double_negation": "~~m_a <=> m_a",
    "syllogism": "(m_a ==> m_b) ==> (m_b ==> m_c) ==> m_a ==> m_c",
    "case_split": "(m_a ==> m_c) ==> (~m_a ==> m_c) ==> m_c",
    "curry": "(m_a /\\ m_b ==> m_c) <=> (m_a ==> m_b ==> m_c)",
}

_PARSED_SCHEMAS = {name: parse_term(text) for name, text in SCHEMAS.items()}
_PLACEHOLDERS = ("m_a", "m_b", "m_c")


def theory_variables(theory: str, max_vars: int) -> List[str]:
    return [f"{theory}{i}" for i in range(max_vars)]


def random_term(rng: np.random.Generator, variables: Sequence[str], depth: int) -> Term:
    if depth <= 0 or rng.random() < 0.35:
        return Var(variables[int(rng.integers(len(variables)))])
    kind = int(rng.integers(5))
    if kind == 0:
        return Not(random_term(rng, variables, depth - 1))
    cls = (And, Or, Imp, Iff)[kind - 1]
    return cls(random_term(rng, variables, depth - 1), random_term(rng, variables, depth - 1))


def generate_corpus(
    seed: int = 0,
    n: int = 250,
    max_vars: int = 5,
    max_depth: int = 5,
    theory_count: int = 5,
) -> List[CorpusRecord]:
    """
    `n` distinct tautologies by schema instantiation, theories assigned round-robin.

    Raises:
        CorpusError: if no new statement turns up within the retry bound
    """
    if n < 1:
        raise ValueError("corpus size must be at least 1")
    if not 1 <= max_vars <= MAX_GENERATED_VARS:
        raise ValueError(f"max_vars must be between 1 and {MAX_GENERATED_VARS}")
    if not 1 <= theory_count <= len(THEORY_LETTERS):
        raise ValueError(f"theory_count must be between 1 and {len(THEORY_LETTERS)}")
    rng = np.random.default_rng(seed)
    names = sorted(_PARSED_SCHEMAS)
    seen = set()
    records: List[CorpusRecord] = []
    for index in range(n):
        theory = THEORY_LETTERS[index % theory_count]
        variables = theory_variables(theory, max_vars)
        for _ in range(ATTEMPTS_PER_THEOREM):
            schema = _PARSED_SCHEMAS[names[int(rng.integers(len(names)))]]
            sub_depth = max(0, max_depth - term_depth(schema))
            binding = {p: random_term(rng, variables, sub_depth) for p in _PLACEHOLDERS}
            statement = instantiate(schema, binding)
            text = print_term(statement)
            if text in seen or not is_valid_term(statement):
                continue
            seen.add(text)
            records.append(CorpusRecord(f"{theory}_thm_{index:04d}", text, theory, index))
            break
        else:
            raise CorpusError(None, f"no new tautology after {ATTEMPTS_PER_THEOREM} attempts at index {index}")
    logger.info("generated %d theorems over %d theories", n, theory_count)
    return records


# ========== SPLITTING ==========

def split(records: Sequence[CorpusRecord], ratio: float = 0.8, seed: int = 0) -> Tuple[List[CorpusRecord], List[CorpusRecord]]:
    """Shuffled split with ceil(ratio * n) records for training; each side keeps library order."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("split ratio must be strictly between 0 and 1")
    n = len(records)
    order = np.random.default_rng(seed).permutation(n)
    cut = math.ceil(ratio * n - 1e-9)
    train = sorted((records[i] for i in order[:cut]), key=lambda r: r.index)
    test = sorted((records[i] for i in order[cut:]), key=lambda r: r.index)
    return train, test


def library_of(records: Sequence[CorpusRecord]) -> List[Theorem]:
    return sorted((r.to_theorem() for r in records), key=lambda t: t.library_index)


# ========== STORAGE ==========

_FIELDS = ("name", "statement", "theory", "index")


def save_corpus(records: Sequence[CorpusRecord], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(asdict(record)) + "\n")


def _record_from_line(number: int, line: str) -> CorpusRecord:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusError(number, f"invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise CorpusError(number, "expected a JSON object")
    missing = [k for k in _FIELDS if k not in data]
    if missing:
        raise CorpusError(number, f"missing fields: {', '.join(missing)}")
    if not isinstance(data["index"], int) or isinstance(data["index"], bool):
        raise CorpusError(number, "index must be an integer")
    record = CorpusRecord(str(data["name"]), str(data["statement"]), str(data["theory"]), data["index"])
    try:
        statement = parse_term(record.statement)
    except TermSyntaxError as exc:
        raise CorpusError(number, f"{record.name}: {exc}") from None
    try:
        valid = is_valid_term(statement)
    except VariableBudgetError as exc:
        raise CorpusError(number, f"{record.name}: {exc}") from None
    if not valid:
        raise CorpusError(number, f"{record.name}: statement is not a tautology")
    return record


def load_corpus(path: Union[str, Path]) -> List[CorpusRecord]:
    """
    Read and validate a JSONL corpus.

    Raises:
        CorpusError: naming the offending line or record
        OSError: if the file cannot be read
    """
    records: List[CorpusRecord] = []
    names = set()
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, 1):
            if not line.strip():
                continue
            record = _record_from_line(number, line)
            if record.name in names:
                raise CorpusError(number, f"duplicate theorem name {record.name}")
            names.add(record.name)
            records.append(record)
    indices = sorted(r.index for r in records)
    if indices != list(range(len(records))):
        raise CorpusError(None, "library indices must be a permutation of 0..n-1")
    return sorted(records, key=lambda r: r.index)
