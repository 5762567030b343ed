"""
Token vocabulary and the recurrent expression encoder.

Goals are flattened to one implication (assumptions sorted by printed form
and folded as antecedents), tokenized in Polish notation, embedded and run
through a gated recurrent cell; the final hidden state is the encoding.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .autodiff import (
    Array,
    OptimizerState,
    Tensor,
    add,
    constant,
    dense_forward,
    init_dense,
    init_recurrent,
    log_softmax,
    parameter,
    recurrent_cell,
    rmsprop_step,
    take,
)
from .kernel import CONSTANT_TOKENS, OPERATOR_TOKENS, Goal, Term, free_vars, tokenize_polish
from .utils.formatting import get_logger

logger = get_logger(__name__)

PAD = "<pad>"
UNK = "<unk>"
SOS = "<sos>"
EOS = "<eos>"
THM = "<thm>"
SPECIAL_TOKENS = (PAD, UNK, SOS, EOS, THM)

EMBEDDING = "embed"
ENCODER = "enc"


class Vocabulary:
    """Dense token ids; anything unseen maps to `<unk>`."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.tokens: List[str] = []
        self._ids: Dict[str, int] = {}
        for token in (*SPECIAL_TOKENS, *OPERATOR_TOKENS, *CONSTANT_TOKENS, *tokens):
            if token not in self._ids:
                self._ids[token] = len(self.tokens)
                self.tokens.append(token)

    @classmethod
    def from_terms(cls, terms: Iterable[Term]) -> "Vocabulary":
        names = set()
        for t in terms:
            names.update(free_vars(t))
        return cls(sorted(names))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id(self, token: str) -> int:
        return self._ids.get(token, self._ids[UNK])

    def ids(self, tokens: Sequence[str]) -> List[int]:
        return [self.id(t) for t in tokens]

    def to_list(self) -> List[str]:
        return list(self.tokens)


@dataclass(frozen=True)
class EncoderConfig:
    dim: int = 64
    embedding_dim: int = 32


def init_encoder(vocab: Vocabulary, config: EncoderConfig, rng: np.random.Generator) -> Dict[str, Array]:
    params = {EMBEDDING: rng.normal(0.0, 0.1, size=(len(vocab), config.embedding_dim))}
    params.update(init_recurrent(rng, config.embedding_dim, config.dim, ENCODER))
    return params


def encoding_dim(params: Mapping[str, object]) -> int:
    u = params[f"{ENCODER}.u_z"]
    return (u.value if isinstance(u, Tensor) else u).shape[0]


def encode(token_ids: Sequence[int], params: Mapping[str, Tensor]) -> Tensor:
    """Final hidden state after reading `token_ids` left to right from a zero state."""
    if not token_ids:
        raise ValueError("encode: empty token sequence")
    h = constant(np.zeros(encoding_dim(params)))
    for token_id in token_ids:
        h = recurrent_cell(take(params[EMBEDDING], token_id), h, params, ENCODER)
    return h


def goal_tokens(g: Goal) -> List[str]:
    return tokenize_polish(g.as_implication())


def theorem_tokens(statement: Term) -> List[str]:
    return [THM, *tokenize_polish(statement)]


def encode_goal(g: Goal, vocab: Vocabulary, params: Mapping[str, Tensor]) -> Tensor:
    return encode(vocab.ids(goal_tokens(g)), params)


# ========== RECONSTRUCTION PRETRAINING ==========

DECODER = "dec"
DECODER_OUT = "dec_out"


@dataclass
class PretrainReport:
    losses: List[float] = field(default_factory=list)
    accuracy: float = 0.0


def _reconstruction_loss(
    ids: Sequence[int], vocab: Vocabulary, leaves: Mapping[str, Tensor]
) -> Tuple[Tensor, int]:
    """Token cross-entropy with ground-truth inputs and the number of correct argmax predictions."""
    h = encode(ids, leaves)
    inputs = [vocab.id(SOS), *ids]
    targets = [*ids, vocab.id(EOS)]
    loss: Optional[Tensor] = None
    correct = 0
    for token_in, target in zip(inputs, targets):
        h = recurrent_cell(take(leaves[EMBEDDING], token_in), h, leaves, DECODER)
        log_probs = log_softmax(dense_forward(h, leaves[f"{DECODER_OUT}.w"], leaves[f"{DECODER_OUT}.b"]))
        if int(np.argmax(log_probs.value)) == target:
            correct += 1
        term = take(log_probs, target)
        loss = term if loss is None else add(loss, term)
    return -loss, correct


def pretrain_reconstruction(
    terms: Sequence[Term],
    vocab: Vocabulary,
    params: Mapping[str, Array],
    epochs: int,
    rng: Optional[np.random.Generator] = None,
    learning_rate: float = 1e-3,
) -> Tuple[Dict[str, Array], PretrainReport]:
    """
    Warm up the encoder as the front half of a sequence autoencoder.

    A paired decoder cell reads the encoding and predicts the token sequence
    feeding the true previous token; only the encoder and embedding arrays are returned.
    """
    params = dict(params)
    report = PretrainReport()
    if epochs <= 0:
        return params, report
    if not terms:
        raise ValueError("pretrain_reconstruction: no terms")
    rng = rng or np.random.default_rng(0)
    dim = encoding_dim(params)
    embedding_dim = params[EMBEDDING].shape[1]
    work = dict(params)
    work.update(init_recurrent(rng, embedding_dim, dim, DECODER))
    work.update(init_dense(rng, dim, len(vocab), DECODER_OUT))
    state = OptimizerState(learning_rate=learning_rate)
    sequences = [vocab.ids(tokenize_polish(t)) for t in terms]

    for epoch in range(epochs):
        epoch_loss = 0.0
        correct = 0
        predicted = 0
        for i in rng.permutation(len(sequences)):
            leaves = {name: parameter(value, name) for name, value in work.items()}
            loss, hits = _reconstruction_loss(sequences[i], vocab, leaves)
            loss.backward()
            work, state = rmsprop_step(work, {k: v.grad for k, v in leaves.items()}, state)
            epoch_loss += loss.item()
            correct += hits
            predicted += len(sequences[i]) + 1
        report.losses.append(epoch_loss / len(sequences))
        report.accuracy = correct / predicted
        logger.info("pretrain epoch %d: loss %.4f, accuracy %.3f", epoch, report.losses[-1], report.accuracy)

    return {name: work[name] for name in params}, report
