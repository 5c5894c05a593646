"""Reverse-mode automatic differentiation over scalars and flat batch arrays.

A :class:`Tape` is a Wengert list: every :class:`DiffNode` is appended in
creation order, so parents always precede children and the backward pass is a
single sweep over the list in reverse. Node values are float64 scalars or 1-D
batch arrays. Scalar leaves broadcast against batch values and their adjoints
are summed back to the leaf shape.

The elementary functions (:func:`sin`, :func:`softplus`, ...) accept plain
numbers too and then evaluate with numpy without recording anything, so model
code is written once and runs both with and without a tape.
"""

import contextvars
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import (
    ConfigurationError, DomainError, NonFiniteValueError, ShapeError, TapeStateError
)

Number = Union[float, np.ndarray]


def _sigmoid(a: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _softplus(a: np.ndarray) -> np.ndarray:
    # max(s, 0) + ln(1 + exp(-|s|)) never overflows
    return np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))


def _safe_half_over(g: np.ndarray, out: np.ndarray) -> np.ndarray:
    # d sqrt at 0 is taken as 0 so zero residuals do not produce NaN gradients
    g, out = np.broadcast_arrays(np.asarray(g, dtype=np.float64), out)
    result = np.zeros(g.shape)
    np.divide(0.5 * g, out, out=result, where=out > 0)
    return result


class OpRule(NamedTuple):
    """Forward function and vector-Jacobian product of an elementary op."""
    arity: int
    forward: Callable[..., np.ndarray]
    backward: Callable[..., Tuple[np.ndarray, ...]]


# backward(g, out, *args) -> one adjoint contribution per argument
OPS: Dict[str, OpRule] = {
    "add": OpRule(2, lambda a, b: a + b, lambda g, out, a, b: (g, g)),
    "sub": OpRule(2, lambda a, b: a - b, lambda g, out, a, b: (g, -g)),
    "mul": OpRule(2, lambda a, b: a * b, lambda g, out, a, b: (g * b, g * a)),
    "div": OpRule(2, lambda a, b: a / b, lambda g, out, a, b: (g / b, -g * out / b)),
    "neg": OpRule(1, lambda a: -a, lambda g, out, a: (-g,)),
    "sin": OpRule(1, np.sin, lambda g, out, a: (g * np.cos(a),)),
    "cos": OpRule(1, np.cos, lambda g, out, a: (-g * np.sin(a),)),
    "exp": OpRule(1, np.exp, lambda g, out, a: (g * out,)),
    "ln": OpRule(1, np.log, lambda g, out, a: (g / a,)),
    "square": OpRule(1, lambda a: a * a, lambda g, out, a: (2.0 * a * g,)),
    "softplus": OpRule(1, _softplus, lambda g, out, a: (g * _sigmoid(a),)),
    "sqrt": OpRule(1, np.sqrt, lambda g, out, a: (_safe_half_over(g, out),)),
    "abs": OpRule(1, np.abs, lambda g, out, a: (g * np.where(a >= 0, 1.0, -1.0),)),
    "total": OpRule(1, lambda a: np.sum(a), lambda g, out, a: (g * np.ones_like(a),)),
}

ELEMENTARY_OPS = tuple(OPS)


def _check_domain(op: str, values: Sequence[np.ndarray]) -> None:
    if op == "ln" and np.any(values[0] <= 0):
        raise DomainError("ln requires a strictly positive argument")
    if op == "div" and np.any(values[1] == 0):
        raise DomainError("division by zero")
    if op == "sqrt" and np.any(values[0] < 0):
        raise DomainError("sqrt requires a non-negative argument")


def _unbroadcast(grad: Any, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast adjoint back down to ``shape``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape == shape:
        return grad
    if shape == ():
        return np.asarray(grad.sum())
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class DiffNode:
    """Node of a differentiation graph: value, adjoint, op tag and parents."""

    __slots__ = ("value", "adjoint", "op", "parents", "index", "tape", "name")

    # make numpy defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(
        self,
        value: np.ndarray,
        op: str,
        parents: Tuple["DiffNode", ...],
        index: int,
        tape: "Tape",
        name: Optional[str] = None
    ):
        self.value = value
        self.adjoint: Number = 0.0
        self.op = op
        self.parents = parents
        self.index = index
        self.tape = tape
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def is_leaf(self) -> bool:
        return not self.parents

    def __add__(self, other: Any) -> "DiffNode":
        return elementary("add", self, other)

    def __radd__(self, other: Any) -> "DiffNode":
        return elementary("add", other, self)

    def __sub__(self, other: Any) -> "DiffNode":
        return elementary("sub", self, other)

    def __rsub__(self, other: Any) -> "DiffNode":
        return elementary("sub", other, self)

    def __mul__(self, other: Any) -> "DiffNode":
        return elementary("mul", self, other)

    def __rmul__(self, other: Any) -> "DiffNode":
        return elementary("mul", other, self)

    def __truediv__(self, other: Any) -> "DiffNode":
        return elementary("div", self, other)

    def __rtruediv__(self, other: Any) -> "DiffNode":
        return elementary("div", other, self)

    def __neg__(self) -> "DiffNode":
        return elementary("neg", self)

    def __float__(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        label = self.name or self.op
        return f"DiffNode({label}#{self.index}, value={self.value!r})"


_ACTIVE_TAPE: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar(
    "active_tape", default=None
)


def current_tape() -> Optional["Tape"]:
    """Tape activated by the innermost ``with Tape():`` block, if any."""
    return _ACTIVE_TAPE.get()


class Tape:
    """Append-only record of one forward evaluation.

    A tape is single-threaded. Distinct tapes may be used from different
    threads at the same time; parameter values are copied into leaves at bind
    time, so a frozen model can be evaluated concurrently.
    """

    def __init__(self) -> None:
        self.nodes: List[DiffNode] = []
        self.variable_index: Dict[str, DiffNode] = {}
        self._bound: Dict[str, np.ndarray] = {}
        self._token: Optional[contextvars.Token] = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        if self._token is not None:
            _ACTIVE_TAPE.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def _append(self, value: np.ndarray, op: str, parents: Tuple[DiffNode, ...],
                name: Optional[str] = None) -> DiffNode:
        node = DiffNode(value, op, parents, len(self.nodes), self, name)
        self.nodes.append(node)
        return node

    def variable(self, name: str, value: Number) -> DiffNode:
        """Create a named leaf whose gradient is reported by :meth:`backward`."""
        if name in self.variable_index:
            raise ConfigurationError(f"Variable {name!r} already exists on this tape")
        array = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(array)):
            raise NonFiniteValueError(f"Cannot lift non-finite value for {name!r}")
        node = self._append(array, "leaf", (), name)
        self.variable_index[name] = node
        return node

    def lift(self, value: Number) -> DiffNode:
        """Create an anonymous leaf variable."""
        return self.variable(f"leaf{len(self.nodes)}", value)

    def constant(self, value: Number) -> DiffNode:
        """Record a value that takes part in the graph but receives no gradient."""
        return self._append(np.array(value, dtype=np.float64), "const", ())

    def record(self, op: str, parents: Sequence[DiffNode]) -> DiffNode:
        """Evaluate ``op`` on the parents' values and append the result."""
        rule = OPS[op]
        values = [p.value for p in parents]
        _check_domain(op, values)
        with np.errstate(over="ignore", invalid="ignore"):
            value = np.asarray(rule.forward(*values), dtype=np.float64)
        return self._append(value, op, tuple(parents))

    def bind(self, params: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        """
        Lift every entry of a named parameter collection into leaves.

        Args:
            params: Mapping from parameter name to a float array

        Returns:
            Mapping from the same names to object arrays of leaf nodes
        """
        bound: Dict[str, np.ndarray] = {}
        for name, array in params.items():
            array = np.asarray(array, dtype=np.float64)
            leaves = np.empty(array.shape, dtype=object)
            for position in np.ndindex(array.shape):
                label = f"{name}[{','.join(str(i) for i in position)}]"
                leaves[position] = self.variable(label, array[position])
            bound[name] = leaves
        self._bound.update(bound)
        return bound

    def gradients(self, bound: Optional[Dict[str, np.ndarray]] = None) -> Dict[str, np.ndarray]:
        """
        Collect leaf adjoints into arrays shaped like the bound parameters.

        Args:
            bound: Result of :meth:`bind`; defaults to everything bound on this tape

        Returns:
            Mapping from parameter name to gradient array
        """
        bound = self._bound if bound is None else bound
        grads: Dict[str, np.ndarray] = {}
        for name, leaves in bound.items():
            grad = np.zeros(leaves.shape)
            for position in np.ndindex(leaves.shape):
                grad[position] = float(np.sum(leaves[position].adjoint))
            grads[name] = grad
        return grads

    def zero_adjoints(self) -> None:
        for node in self.nodes:
            node.adjoint = 0.0

    def reset(self) -> None:
        """Forget the recorded graph."""
        self.nodes = []
        self.variable_index = {}
        self._bound = {}

    def replay(self) -> None:
        """Recompute every non-leaf value from the current leaf values."""
        for node in self.nodes:
            if node.parents:
                rule = OPS[node.op]
                values = [p.value for p in node.parents]
                _check_domain(node.op, values)
                with np.errstate(over="ignore", invalid="ignore"):
                    node.value = np.asarray(rule.forward(*values), dtype=np.float64)

    def backward(self, root: DiffNode) -> Dict[str, Number]:
        """
        Propagate adjoints from a scalar root to every node recorded before it.

        Args:
            root: Scalar node recorded on this tape

        Returns:
            Mapping from variable name to d(root)/d(variable)

        Raises:
            TapeStateError: if the root was not recorded on this tape
            ShapeError: if the root is not a scalar
        """
        if not isinstance(root, DiffNode):
            raise TapeStateError("backward needs a DiffNode root")
        if (
            root.tape is not self
            or root.index >= len(self.nodes)
            or self.nodes[root.index] is not root
        ):
            raise TapeStateError("root is not part of an evaluated graph on this tape")
        if root.value.size != 1:
            raise ShapeError(f"backward needs a scalar root, got shape {root.value.shape}")

        self.zero_adjoints()
        reached = [False] * (root.index + 1)
        reached[root.index] = True
        root.adjoint = np.ones_like(root.value)

        # creation order is a topological order
        for index in range(root.index, -1, -1):
            if not reached[index]:
                continue
            node = self.nodes[index]
            if not node.parents:
                continue
            rule = OPS[node.op]
            contributions = rule.backward(
                node.adjoint, node.value, *[p.value for p in node.parents]
            )
            for parent, contribution in zip(node.parents, contributions):
                parent.adjoint = parent.adjoint + _unbroadcast(contribution, parent.value.shape)
                reached[parent.index] = True

        gradients: Dict[str, Number] = {}
        for name, leaf in self.variable_index.items():
            adjoint = np.asarray(leaf.adjoint, dtype=np.float64)
            gradients[name] = float(adjoint) if adjoint.ndim == 0 else adjoint
        return gradients


def is_node(value: Any) -> bool:
    return isinstance(value, DiffNode)


_DEFAULT_TAPE: contextvars.ContextVar[Optional[Tape]] = contextvars.ContextVar(
    "default_tape", default=None
)


def default_tape() -> Tape:
    """Tape that receives leaves lifted outside any ``with Tape():`` block."""
    tape = _DEFAULT_TAPE.get()
    if tape is None:
        tape = Tape()
        _DEFAULT_TAPE.set(tape)
    return tape


def reset_default_tape() -> None:
    """Drop the default tape; the next bare :func:`lift` starts a fresh one."""
    _DEFAULT_TAPE.set(None)


def lift(value: Number, tape: Optional[Tape] = None) -> DiffNode:
    """
    Lift a plain value into a leaf node.

    Uses ``tape`` if given, otherwise the active tape, otherwise the default
    tape of the current context, so ``lift(3.0) * lift(4.0)`` records one graph.
    """
    # an empty tape is falsy, so compare against None
    target = tape if tape is not None else current_tape()
    if target is None:
        target = default_tape()
    return target.lift(value)


def elementary(op: str, *args: Any) -> Any:
    """
    Apply an elementary operation.

    With at least one DiffNode argument the result is recorded on that node's
    tape (plain arguments become constants). With only plain arguments the
    numpy result is returned directly.

    Raises:
        ConfigurationError: unknown op or wrong arity
        DomainError: ln of a non-positive value, division by zero
        TapeStateError: arguments recorded on different tapes
    """
    rule = OPS.get(op)
    if rule is None:
        raise ConfigurationError(f"Unknown elementary op {op!r}")
    if len(args) != rule.arity:
        raise ConfigurationError(f"{op} takes {rule.arity} argument(s), got {len(args)}")

    tape: Optional[Tape] = None
    for arg in args:
        if isinstance(arg, DiffNode):
            if tape is None:
                tape = arg.tape
            elif arg.tape is not tape:
                raise TapeStateError("cannot combine nodes from different tapes")

    if tape is None:
        values = [np.asarray(a, dtype=np.float64) for a in args]
        _check_domain(op, values)
        with np.errstate(over="ignore", invalid="ignore"):
            return rule.forward(*values)

    parents = [a if isinstance(a, DiffNode) else tape.constant(a) for a in args]
    return tape.record(op, parents)


def sin(x: Any) -> Any:
    return elementary("sin", x)


def cos(x: Any) -> Any:
    return elementary("cos", x)


def exp(x: Any) -> Any:
    return elementary("exp", x)


def ln(x: Any) -> Any:
    return elementary("ln", x)


def square(x: Any) -> Any:
    return elementary("square", x)


def softplus(x: Any) -> Any:
    return elementary("softplus", x)


def sqrt(x: Any) -> Any:
    return elementary("sqrt", x)


def absolute(x: Any) -> Any:
    return elementary("abs", x)


def total(x: Any) -> Any:
    """Sum a batch value down to a scalar."""
    return elementary("total", x)


def backward(root: DiffNode) -> Dict[str, Number]:
    """Run the backward pass on the root's own tape."""
    if not isinstance(root, DiffNode):
        raise TapeStateError("backward needs a DiffNode root")
    return root.tape.backward(root)


def value_of(x: Any) -> np.ndarray:
    """Numeric value of a node or plain number."""
    return x.value if isinstance(x, DiffNode) else np.asarray(x, dtype=np.float64)


def check_gradient(
    function: Callable[[np.ndarray], Any],
    point: Sequence[float],
    step: float = 1e-6
) -> float:
    """
    Compare reverse-mode gradients against central finite differences.

    ``function`` receives a 1-D array: an object array of leaf nodes for the
    AD pass and a float array for the difference quotients, and must return a
    scalar.

    Args:
        function: Scalar field written with the elementary functions of this module
        point: Evaluation point
        step: Finite-difference step

    Returns:
        max_i |AD_i - FD_i| / max(1, |FD_i|). At a kink (|x| at 0) the one-sided
        AD derivative and the symmetric difference disagree and the error is ~1.

    Raises:
        NonFiniteValueError: if the function value is not finite
    """
    base = np.asarray(point, dtype=np.float64).ravel()

    tape = Tape()
    leaves = np.empty(base.shape, dtype=object)
    for i, coordinate in enumerate(base):
        leaves[i] = tape.lift(coordinate)
    output = function(leaves)

    if isinstance(output, DiffNode):
        if not np.all(np.isfinite(output.value)):
            raise NonFiniteValueError("function value is not finite at the check point")
        tape.backward(output)
        ad = np.array([float(np.sum(leaf.adjoint)) for leaf in leaves])
    else:
        ad = np.zeros_like(base)

    def evaluate(x: np.ndarray) -> float:
        result = float(value_of(function(x)))
        if not np.isfinite(result):
            raise NonFiniteValueError("function value is not finite near the check point")
        return result

    worst = 0.0
    for i in range(base.size):
        plus = base.copy()
        minus = base.copy()
        plus[i] += step
        minus[i] -= step
        fd = (evaluate(plus) - evaluate(minus)) / (2.0 * step)
        worst = max(worst, abs(ad[i] - fd) / max(1.0, abs(fd)))
    return worst
