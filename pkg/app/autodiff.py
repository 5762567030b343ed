"""
Reverse-mode differentiation over numpy float64 arrays.

A `Tensor` records its parents and a vector-Jacobian closure. `backward`
sweeps the graph once in reverse topological order; intermediate adjoints
live only for the duration of the sweep and leaves accumulate into `.grad`,
so two sweeps without `zero_grad` double every leaf gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

Array = np.ndarray
BackwardFn = Callable[[Array], Sequence[Optional[Array]]]


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(
        self,
        value,
        parents: Sequence["Tensor"] = (),
        backward_fn: Optional[BackwardFn] = None,
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def is_leaf(self) -> bool:
        return self.backward_fn is None

    def item(self) -> float:
        return float(self.value)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def backward(self, seed: Optional[Array] = None) -> None:
        if seed is None:
            seed = np.ones_like(self.value)
        adjoints: Dict[int, Array] = {id(self): np.asarray(seed, dtype=np.float64)}
        for node in reversed(_topological_order(self)):
            g = adjoints.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                if node.requires_grad:
                    node.grad = node.grad + g
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                adjoints[key] = adjoints[key] + pg if key in adjoints else pg

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __getitem__(self, index: int) -> "Tensor":
        return take(self, index)

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"


def _topological_order(root: Tensor) -> List[Tensor]:
    """Parents before children, each node once."""
    order: List[Tensor] = []
    seen = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def parameter(value, name: Optional[str] = None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def constant(value) -> Tensor:
    return Tensor(value)


# ========== ELEMENTARY OPERATIONS ==========

def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def _unbroadcast(g: Array, shape: Tuple[int, ...]) -> Array:
    if g.shape == shape:
        return g
    return np.asarray(g.sum(), dtype=np.float64).reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    return Tensor(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    return Tensor(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    return Tensor(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor(a.value * c, (a,), lambda g: (g * c,))


def matvec(w: Tensor, x: Tensor) -> Tensor:
    if w.value.ndim != 2 or x.value.ndim != 1 or w.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: cannot apply {w.shape} to {x.shape}")
    return Tensor(w.value @ x.value, (w, x), lambda g: (np.outer(g, x.value), w.value.T @ g))


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot: shapes {a.shape} and {b.shape}")
    return Tensor(a.value @ b.value, (a, b), lambda g: (g * b.value, g * a.value))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.value)
    return Tensor(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return Tensor(y, (a,), lambda g: (g * y * (1.0 - y),))


def total(a: Tensor) -> Tensor:
    return Tensor(a.value.sum(), (a,), lambda g: (np.full(a.shape, float(g)),))


def take(a: Tensor, index: int) -> Tensor:
    """Element `index` of a vector, or row `index` of a matrix."""
    if not 0 <= index < a.shape[0]:
        raise ShapeError(f"take: index {index} out of range for {a.shape}")

    def backward(g: Array):
        out = np.zeros_like(a.value)
        out[index] = g
        return (out,)

    return Tensor(a.value[index], (a,), backward)


def take_many(a: Tensor, indices: Sequence[int]) -> Tensor:
    idx = np.asarray(indices, dtype=np.int64)

    def backward(g: Array):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return (out,)

    return Tensor(a.value[idx], (a,), backward)


def stack(items: Sequence[Tensor]) -> Tensor:
    if not items:
        raise ShapeError("stack: nothing to stack")
    shape = items[0].shape
    for item in items:
        if item.shape != shape:
            raise ShapeError(f"stack: shapes {shape} and {item.shape} differ")
    return Tensor(
        np.stack([t.value for t in items]),
        tuple(items),
        lambda g: tuple(g[i] for i in range(len(items))),
    )


def concat(items: Sequence[Tensor]) -> Tensor:
    sizes = [t.shape[0] for t in items]
    bounds = np.cumsum([0] + sizes)
    return Tensor(
        np.concatenate([t.value for t in items]),
        tuple(items),
        lambda g: tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(items))),
    )


def softmax(logits: Array) -> Array:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def log_softmax(a: Tensor) -> Tensor:
    if a.value.ndim != 1 or a.shape[0] == 0:
        raise ShapeError(f"log_softmax: expected a nonempty vector, got {a.shape}")
    shifted = a.value - a.value.max()
    y = shifted - np.log(np.exp(shifted).sum())
    p = np.exp(y)
    return Tensor(y, (a,), lambda g: (g - p * g.sum(),))


# ========== LAYERS ==========

def glorot(rng: np.random.Generator, shape: Tuple[int, ...]) -> Array:
    fan_in, fan_out = shape[-1], shape[0]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def dense_forward(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Wx + b."""
    if b.value.ndim != 1 or w.value.ndim != 2 or b.shape[0] != w.shape[0]:
        raise ShapeError(f"dense: bias {b.shape} does not fit weights {w.shape}")
    return add(matvec(w, x), b)


def init_dense(rng: np.random.Generator, n_in: int, n_out: int, prefix: str) -> Dict[str, Array]:
    return {f"{prefix}.w": glorot(rng, (n_out, n_in)), f"{prefix}.b": np.zeros(n_out)}


GRU_GATES = ("z", "r", "n")


def init_recurrent(rng: np.random.Generator, n_in: int, n_hidden: int, prefix: str) -> Dict[str, Array]:
    params: Dict[str, Array] = {}
    for gate in GRU_GATES:
        params[f"{prefix}.w_{gate}"] = glorot(rng, (n_hidden, n_in))
        params[f"{prefix}.u_{gate}"] = glorot(rng, (n_hidden, n_hidden))
        params[f"{prefix}.b_{gate}"] = np.zeros(n_hidden)
    return params


def recurrent_cell(x: Tensor, h: Tensor, params: Mapping[str, Tensor], prefix: str) -> Tensor:
    """
    Gated recurrent update:

        z = sigmoid(W_z x + U_z h + b_z)
        r = sigmoid(W_r x + U_r h + b_r)
        n = tanh(W_n x + U_n (r * h) + b_n)
        h' = n + z * (h - n)
    """

    def gate(name: str, hidden: Tensor) -> Tensor:
        return add(
            add(matvec(params[f"{prefix}.w_{name}"], x), matvec(params[f"{prefix}.u_{name}"], hidden)),
            params[f"{prefix}.b_{name}"],
        )

    if h.shape[0] != params[f"{prefix}.u_z"].shape[0]:
        raise ShapeError(f"recurrent cell: hidden state {h.shape} does not fit {prefix}")
    z = sigmoid(gate("z", h))
    r = sigmoid(gate("r", h))
    n = tanh(gate("n", mul(r, h)))
    return add(n, mul(z, sub(h, n)))


def run_recurrent(xs: Sequence[Tensor], h0: Tensor, params: Mapping[str, Tensor], prefix: str) -> List[Tensor]:
    """Hidden states after each input."""
    states = []
    h = h0
    for x in xs:
        h = recurrent_cell(x, h, params, prefix)
        states.append(h)
    return states


# ========== SAMPLING ==========

def categorical_sample(logits: Tensor, rng: np.random.Generator) -> Tuple[int, Tensor]:
    """Draw from softmax(logits); returns the index and its differentiable log-probability."""
    if not np.all(np.isfinite(logits.value)):
        raise ValueError("categorical_sample: logits are not finite")
    log_probs = log_softmax(logits)
    probs = np.exp(log_probs.value)
    index = int(rng.choice(len(probs), p=probs / probs.sum()))
    return index, take(log_probs, index)


# ========== OPTIMIZATION ==========

@dataclass
class OptimizerState:
    learning_rate: float = 5e-5
    decay: float = 0.99
    epsilon: float = 1e-8
    accumulators: Dict[str, Array] = field(default_factory=dict)
    steps: int = 0


def rmsprop_step(
    params: Mapping[str, Array], grads: Mapping[str, Array], state: OptimizerState
) -> Tuple[Dict[str, Array], OptimizerState]:
    """
    acc <- decay * acc + (1 - decay) * g^2
    p   <- p - lr * g / sqrt(acc + eps)

    Returns new arrays and a new state; the inputs are left untouched.
    """
    new_params: Dict[str, Array] = {}
    new_acc: Dict[str, Array] = {}
    for name, value in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(value)
        if g.shape != value.shape:
            raise ShapeError(f"rmsprop: gradient {g.shape} for {name} of shape {value.shape}")
        acc = state.accumulators.get(name, np.zeros_like(value))
        acc = state.decay * acc + (1.0 - state.decay) * g * g
        new_acc[name] = acc
        new_params[name] = value - state.learning_rate * g / np.sqrt(acc + state.epsilon)
    new_state = OptimizerState(state.learning_rate, state.decay, state.epsilon, new_acc, state.steps + 1)
    return new_params, new_state


# ========== GRADIENT CHECKING ==========

@dataclass
class GradientReport:
    max_rel_error: float
    failures: List[Tuple[str, Tuple[int, ...], float, float]]
    checked: int
    tolerance: float
    atol: float = 1e-9

    @property
    def passed(self) -> bool:
        return not self.failures


def relative_error(analytic: float, numeric: float) -> float:
    magnitude = max(abs(analytic), abs(numeric))
    return abs(analytic - numeric) / magnitude if magnitude > 0.0 else 0.0


def gradients_agree(analytic: float, numeric: float, rtol: float, atol: float) -> bool:
    """Symmetric `np.isclose`: |a - n| <= atol + rtol * max(|a|, |n|)."""
    return abs(analytic - numeric) <= atol + rtol * max(abs(analytic), abs(numeric))


def finite_diff_check(
    f: Callable[[Mapping[str, Tensor]], Tensor],
    params: Mapping[str, Array],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    atol: float = 1e-9,
) -> GradientReport:
    """
    Compare reverse-mode gradients of the scalar `f` with central differences
    on every coordinate of every parameter.

    A coordinate fails when the two differ by more than `atol` plus
    `tolerance` times the larger magnitude.
    """

    leaves = {name: parameter(np.array(value, dtype=np.float64), name) for name, value in params.items()}
    f(leaves).backward()
    analytic = {name: leaf.grad for name, leaf in leaves.items()}

    def evaluate(name: str, index: Tuple[int, ...], delta: float) -> float:
        shifted = {k: constant(np.array(v, dtype=np.float64)) for k, v in params.items()}
        shifted[name].value[index] += delta
        return f(shifted).item()

    failures = []
    worst = 0.0
    checked = 0
    for name, value in params.items():
        for index in np.ndindex(np.shape(value)):
            numeric = (evaluate(name, index, step) - evaluate(name, index, -step)) / (2.0 * step)
            a = float(analytic[name][index])
            worst = max(worst, relative_error(a, numeric))
            checked += 1
            if not gradients_agree(a, numeric, tolerance, atol):
                failures.append((name, index, a, numeric))
    return GradientReport(worst, failures, checked, tolerance, atol)
