"""Reverse-mode tape whose nodes carry a forward tangent channel.

Every node holds a value array and a tangent array (the derivative of the
value along one input direction, here time). The backward pass propagates
two adjoints per node, one for each channel, so a scalar built from
tangents (a residual ``dy/dt - f(y)``) can be differentiated with respect
to the parameters: reverse-over-forward.

For an elementwise ``y = f(x)`` with ``y_dot = f'(x) x_dot`` the rules are

    x_bar     += f'(x) y_bar + f''(x) x_dot y_dot_bar
    x_dot_bar += f'(x) y_dot_bar

Rows are collocation points; ops broadcast along them.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..common.errors import DifferentiationError
from .dual import gelu, gelu_prime, gelu_second

Adjoint = Tuple[Optional[np.ndarray], Optional[np.ndarray]]
Vjp = Callable[[np.ndarray, np.ndarray], Sequence[Adjoint]]


class Node:
    __slots__ = ("index", "op", "value", "tangent", "parents", "vjp")

    def __init__(self, index: int, op: str, value, tangent, parents: Tuple["Node", ...], vjp):
        self.index = index
        self.op = op
        self.value = value
        self.tangent = tangent
        self.parents = parents
        self.vjp = vjp

    @property
    def shape(self) -> Tuple[int, ...]:
        return np.shape(self.value)

    def __repr__(self):
        return f"Node({self.index}, {self.op}, shape={self.shape})"


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tape:
    """Append-only record of nodes; rebuilt for every loss evaluation."""

    def __init__(self):
        self.nodes: List[Node] = []
        self.params: Dict[str, Node] = {}

    def __len__(self):
        return len(self.nodes)

    def record(
        self,
        op: str,
        args: Sequence[Node],
        value,
        tangent=None,
        vjp: Optional[Vjp] = None,
    ) -> Node:
        """Append a node computed from ``args``.

        ``vjp(value_bar, tangent_bar)`` returns one ``(value_bar, tangent_bar)``
        contribution per argument (``None`` for no contribution).
        """
        value = np.asarray(value, dtype=float)
        tangent = np.zeros_like(value) if tangent is None else np.asarray(tangent, dtype=float)
        node = Node(len(self.nodes), op, value, tangent, tuple(args), vjp)
        self.nodes.append(node)
        return node

    # leaves

    def param(self, name: str, value: np.ndarray) -> Node:
        if name in self.params:
            raise DifferentiationError(f"parameter {name!r} recorded twice")
        node = self.record("param", (), np.array(value, dtype=float))
        self.params[name] = node
        return node

    def constant(self, value, tangent=None) -> Node:
        return self.record("constant", (), value, tangent)

    # elementwise and structural ops

    def add(self, a: Node, b: Node) -> Node:
        def vjp(y_bar, yt_bar):
            return (
                (_unbroadcast(y_bar, a.shape), _unbroadcast(yt_bar, a.shape)),
                (_unbroadcast(y_bar, b.shape), _unbroadcast(yt_bar, b.shape)),
            )

        return self.record("add", (a, b), a.value + b.value, a.tangent + b.tangent, vjp)

    def sub(self, a: Node, b: Node) -> Node:
        def vjp(y_bar, yt_bar):
            return (
                (_unbroadcast(y_bar, a.shape), _unbroadcast(yt_bar, a.shape)),
                (_unbroadcast(-y_bar, b.shape), _unbroadcast(-yt_bar, b.shape)),
            )

        return self.record("sub", (a, b), a.value - b.value, a.tangent - b.tangent, vjp)

    def mul(self, a: Node, b: Node) -> Node:
        def vjp(y_bar, yt_bar):
            return (
                (
                    _unbroadcast(y_bar * b.value + yt_bar * b.tangent, a.shape),
                    _unbroadcast(yt_bar * b.value, a.shape),
                ),
                (
                    _unbroadcast(y_bar * a.value + yt_bar * a.tangent, b.shape),
                    _unbroadcast(yt_bar * a.value, b.shape),
                ),
            )

        value = a.value * b.value
        tangent = a.tangent * b.value + a.value * b.tangent
        return self.record("mul", (a, b), value, tangent, vjp)

    def _elementwise(self, op: str, x: Node, f0, f1, f2) -> Node:
        def vjp(y_bar, yt_bar):
            return ((f1 * y_bar + f2 * x.tangent * yt_bar, f1 * yt_bar),)

        return self.record(op, (x,), f0, f1 * x.tangent, vjp)

    def log(self, x: Node) -> Node:
        if np.any(x.value <= 0):
            raise DifferentiationError("log of a non-positive tape value")
        rec = 1.0 / x.value
        return self._elementwise("log", x, np.log(x.value), rec, -rec * rec)

    def square(self, x: Node) -> Node:
        return self._elementwise("square", x, x.value ** 2, 2.0 * x.value, np.full_like(x.value, 2.0))

    def gelu(self, x: Node) -> Node:
        v = x.value
        return self._elementwise("gelu", x, gelu(v), gelu_prime(v), gelu_second(v))

    def affine(self, x: Node, weight: Node, bias: Node) -> Node:
        """Row-batched ``x @ W + b``."""

        def vjp(y_bar, yt_bar):
            w = weight.value
            w_bar = x.value.T @ y_bar + x.tangent.T @ yt_bar
            return (
                (y_bar @ w.T, yt_bar @ w.T),
                (w_bar, None),
                (y_bar.sum(axis=0), None),
            )

        value = x.value @ weight.value + bias.value
        tangent = x.tangent @ weight.value
        return self.record("affine", (x, weight, bias), value, tangent, vjp)

    def primal(self, x: Node) -> Node:
        """Same value with the tangent channel dropped."""

        def vjp(y_bar, yt_bar):
            return ((y_bar, None),)

        return self.record("primal", (x,), x.value.copy(), None, vjp)

    def tangent_of(self, x: Node) -> Node:
        """The tangent channel of ``x`` as a value."""

        def vjp(y_bar, yt_bar):
            return ((None, y_bar),)

        return self.record("tangent_of", (x,), x.tangent.copy(), None, vjp)

    def take(self, x: Node, columns: Sequence[int]) -> Node:
        columns = np.asarray(columns, dtype=int)

        def vjp(y_bar, yt_bar):
            x_bar = np.zeros_like(x.value)
            xt_bar = np.zeros_like(x.value)
            for k, column in enumerate(columns):
                x_bar[..., column] += y_bar[..., k]
                xt_bar[..., column] += yt_bar[..., k]
            return ((x_bar, xt_bar),)

        return self.record("take", (x,), x.value[..., columns], x.tangent[..., columns], vjp)

    def scatter(self, parts: Sequence[Tuple[Node, Sequence[int]]], width: int) -> Node:
        """Assemble a ``width``-column node from ``(node, columns)`` pieces."""
        parts = [(node, np.asarray(columns, dtype=int)) for node, columns in parts]
        rows = parts[0][0].shape[:-1]
        value = np.zeros(rows + (width,))
        tangent = np.zeros(rows + (width,))
        for node, columns in parts:
            value[..., columns] = node.value
            tangent[..., columns] = node.tangent

        def vjp(y_bar, yt_bar):
            return tuple((y_bar[..., columns], yt_bar[..., columns]) for _, columns in parts)

        return self.record("scatter", tuple(node for node, _ in parts), value, tangent, vjp)

    def custom(self, op: str, x: Node, value: np.ndarray, jacobian: np.ndarray) -> Node:
        """Row-wise map with an externally supplied Jacobian (..., out, in).

        The input must be tangent-free (see :meth:`primal`); curvature is not
        propagated.
        """
        if np.any(x.tangent != 0):
            raise DifferentiationError(f"custom node {op!r} needs a tangent-free input")

        def vjp(y_bar, yt_bar):
            return ((np.einsum("...o,...oi->...i", y_bar, jacobian), None),)

        return self.record(op, (x,), value, None, vjp)

    def weighted_mean(self, x: Node, weights: np.ndarray, mask: Optional[np.ndarray] = None) -> Node:
        """Scalar ``sum_rows(mask * sum_cols(w * x)) / count(mask)``."""
        weights = np.asarray(weights, dtype=float)
        rows = x.shape[0]
        mask = np.ones(rows, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        count = max(int(mask.sum()), 1)
        scale = mask[:, None] * weights / count
        value = np.sum(scale * x.value)

        def vjp(y_bar, yt_bar):
            return ((scale * y_bar, None),)

        return self.record("weighted_mean", (x,), value, None, vjp)


@dataclass
class GradientResult:
    loss_value: float
    gradient: np.ndarray


def backward(tape: Tape, seed: Node) -> Dict[str, np.ndarray]:
    """Gradient of a scalar ``seed`` value with respect to every parameter leaf.

    Nodes are visited once each, in reverse recording order.
    """
    if seed.value.size != 1:
        raise DifferentiationError(f"backward needs a scalar seed (got shape {seed.shape})")
    bars: Dict[int, np.ndarray] = {seed.index: np.ones_like(seed.value)}
    tangent_bars: Dict[int, np.ndarray] = {}
    for node in reversed(tape.nodes[: seed.index + 1]):
        y_bar = bars.get(node.index)
        yt_bar = tangent_bars.get(node.index)
        if node.vjp is None or (y_bar is None and yt_bar is None):
            continue
        if y_bar is None:
            y_bar = np.zeros_like(node.value)
        if yt_bar is None:
            yt_bar = np.zeros_like(node.value)
        for parent, (p_bar, pt_bar) in zip(node.parents, node.vjp(y_bar, yt_bar)):
            assert parent.index < node.index, "tape is not topologically ordered"
            if p_bar is not None:
                bars[parent.index] = bars[parent.index] + p_bar if parent.index in bars else p_bar
            if pt_bar is not None:
                tangent_bars[parent.index] = (
                    tangent_bars[parent.index] + pt_bar if parent.index in tangent_bars else pt_bar
                )
    return {
        name: bars.get(node.index, np.zeros_like(node.value)).reshape(node.shape)
        for name, node in tape.params.items()
    }
