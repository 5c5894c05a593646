"""Learnable maps: additive coupling diffeomorphism, polynomial MLP coupling, softplus readout.

Vectors are lists of components. A component is a float, a 1-D batch array
or a DiffNode, so the same code runs numerically and on a tape. Parameters
live in named float arrays; passing ``params`` (for instance the leaves from
``Tape.bind``) overrides the stored values for one evaluation.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Optional, Protocol, Sequence, Tuple

import numpy as np

from ..engine.adcore import is_node, softplus, square
from ..errors import ConfigurationError, ShapeError

Vector = List[Any]
Params = Optional[Dict[str, Any]]


class Poly2(NamedTuple):
    """s -> a s^2 + b s + c."""
    a: float
    b: float
    c: float

    def __call__(self, s: Any) -> Any:
        return poly2(s, self.a, self.b, self.c)


def poly2(s: Any, a: Any, b: Any, c: Any) -> Any:
    return a * square(s) + b * s + c


def _check_length(x: Sequence[Any], expected: int, what: str) -> None:
    if len(x) != expected:
        raise ShapeError(f"{what} expects a vector of length {expected}, got {len(x)}")


def affine(weight: np.ndarray, bias: np.ndarray, x: Sequence[Any]) -> Vector:
    """
    weight @ x + bias for a component-list vector.

    Plain float parameters and plain inputs take a vectorized numpy path; as
    soon as a node is involved the sum is recorded term by term.
    """
    numeric = (
        weight.dtype != object
        and bias.dtype != object
        and not any(is_node(component) for component in x)
    )
    if numeric:
        stacked = np.stack(np.broadcast_arrays(*[np.asarray(c, dtype=np.float64) for c in x]))
        result = np.tensordot(weight, stacked, axes=(1, 0))
        result = result + bias.reshape(bias.shape + (1,) * (stacked.ndim - 1))
        return list(result)

    out: Vector = []
    for i in range(weight.shape[0]):
        acc = bias[i]
        for j in range(weight.shape[1]):
            acc = acc + weight[i, j] * x[j]
        out.append(acc)
    return out


class Diffeomorphism(Protocol):
    """Invertible map of R^dim with named parameters."""

    kind: str

    @property
    def dim(self) -> int: ...

    def forward(self, x: Sequence[Any], params: Params = None) -> Vector: ...

    def inverse(self, u: Sequence[Any], params: Params = None) -> Vector: ...

    def parameters(self) -> Dict[str, np.ndarray]: ...

    def set_parameters(self, params: Dict[str, np.ndarray]) -> None: ...

    def describe(self) -> Dict[str, Any]: ...


class AdditiveCouplingDiffeo:
    """
    One additive coupling layer.

    Each modified index i (odd by default) is shifted by a quadratic of the
    sum of its two neighbours x[i-1] + x[(i+1) mod dim]; the other parity
    passes through untouched. Neighbours are unchanged by the layer, so the
    inverse subtracts the same quadratic. Invertible for any coefficients.
    """

    kind = "additive_coupling"

    def __init__(
        self,
        dim: int,
        coefficients: Optional[np.ndarray] = None,
        modify_odd: bool = True,
        prefix: str = "phi"
    ):
        if dim < 2 or dim % 2 != 0:
            raise ConfigurationError(f"coupling layer needs an even dimension, got {dim}")
        self._dim = dim
        self.modify_odd = modify_odd
        self.prefix = prefix
        if coefficients is None:
            # all-zero polynomials: exact identity
            coefficients = np.zeros((dim // 2, 3))
        # rows of (a, b, c), one per modified index
        self.coefficients = np.array(coefficients, dtype=np.float64)
        if self.coefficients.shape != (dim // 2, 3):
            raise ConfigurationError(
                f"expected coefficients of shape {(dim // 2, 3)}, "
                f"got {self.coefficients.shape}"
            )
        if not np.all(np.isfinite(self.coefficients)):
            raise ConfigurationError("coupling coefficients must be finite")

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def polys(self) -> List[Poly2]:
        return [Poly2(*row) for row in self.coefficients]

    def _modified(self) -> List[Tuple[int, int, int]]:
        """(modified index, left neighbour, right neighbour) triples."""
        start = 1 if self.modify_odd else 0
        return [
            (i, (i - 1) % self._dim, (i + 1) % self._dim)
            for i in range(start, self._dim, 2)
        ]

    def _coefficients(self, params: Params) -> Any:
        if params is None:
            return self.coefficients
        return params.get(f"{self.prefix}.poly", self.coefficients)

    def forward(self, x: Sequence[Any], params: Params = None) -> Vector:
        _check_length(x, self._dim, "coupling layer")
        coeffs = self._coefficients(params)
        out = list(x)
        for k, (i, left, right) in enumerate(self._modified()):
            out[i] = x[i] + poly2(x[left] + x[right], *coeffs[k])
        return out

    def inverse(self, u: Sequence[Any], params: Params = None) -> Vector:
        _check_length(u, self._dim, "coupling layer")
        coeffs = self._coefficients(params)
        out = list(u)
        for k, (i, left, right) in enumerate(self._modified()):
            out[i] = u[i] - poly2(u[left] + u[right], *coeffs[k])
        return out

    def parameters(self) -> Dict[str, np.ndarray]:
        return {f"{self.prefix}.poly": self.coefficients.copy()}

    def set_parameters(self, params: Dict[str, np.ndarray]) -> None:
        self.coefficients = np.array(params[f"{self.prefix}.poly"], dtype=np.float64)

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "dim": self._dim, "modify_odd": self.modify_odd}


@dataclass
class PolyMLP:
    """
    Feedforward network with a learnable quadratic activation per hidden neuron
    and a linear output layer.
    """
    input_dim: int
    output_dim: int
    hidden_dims: Tuple[int, ...]
    params: Dict[str, np.ndarray]
    prefix: str = "f"

    def __post_init__(self) -> None:
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigurationError("network dimensions must be positive")
        if not self.hidden_dims or min(self.hidden_dims) < 1:
            raise ConfigurationError("need at least one hidden layer of positive width")
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)
        self.params = {k: np.array(v, dtype=np.float64) for k, v in self.params.items()}

        fan_in = self.input_dim
        for layer, width in enumerate(self.hidden_dims):
            self._expect(f"hidden{layer}.weight", (width, fan_in))
            self._expect(f"hidden{layer}.bias", (width,))
            self._expect(f"hidden{layer}.poly", (width, 3))
            fan_in = width
        self._expect("out.weight", (self.output_dim, fan_in))
        self._expect("out.bias", (self.output_dim,))

    def _expect(self, suffix: str, shape: Tuple[int, ...]) -> None:
        name = f"{self.prefix}.{suffix}"
        if name not in self.params:
            raise ConfigurationError(f"missing parameter {name}")
        if self.params[name].shape != shape:
            raise ConfigurationError(
                f"parameter {name} has shape {self.params[name].shape}, expected {shape}"
            )
        if not np.all(np.isfinite(self.params[name])):
            raise ConfigurationError(f"parameter {name} is not finite")

    @classmethod
    def initialized(
        cls,
        input_dim: int,
        output_dim: int,
        hidden_layers: int,
        hidden_dim: int,
        rng: np.random.Generator,
        weight_scale: float = 0.1,
        prefix: str = "f"
    ) -> "PolyMLP":
        """
        Network whose output is exactly zero for every input.

        Hidden weights are N(0, weight_scale^2), hidden biases zero, every
        activation starts as the identity (a=0, b=1, c=0) and the output layer
        is all zeros.
        """
        params: Dict[str, np.ndarray] = {}
        fan_in = input_dim
        for layer in range(hidden_layers):
            params[f"{prefix}.hidden{layer}.weight"] = rng.normal(
                0.0, weight_scale, size=(hidden_dim, fan_in)
            )
            params[f"{prefix}.hidden{layer}.bias"] = np.zeros(hidden_dim)
            params[f"{prefix}.hidden{layer}.poly"] = np.tile([0.0, 1.0, 0.0], (hidden_dim, 1))
            fan_in = hidden_dim
        params[f"{prefix}.out.weight"] = np.zeros((output_dim, fan_in))
        params[f"{prefix}.out.bias"] = np.zeros(output_dim)
        return cls(input_dim, output_dim, (hidden_dim,) * hidden_layers, params, prefix)

    def forward(self, x: Sequence[Any], params: Params = None) -> Vector:
        _check_length(x, self.input_dim, "coupling network")
        p = self.params if params is None else {**self.params, **params}
        h: Vector = list(x)
        for layer in range(len(self.hidden_dims)):
            name = f"{self.prefix}.hidden{layer}"
            pre = affine(p[f"{name}.weight"], p[f"{name}.bias"], h)
            poly = p[f"{name}.poly"]
            h = [poly2(s, *poly[k]) for k, s in enumerate(pre)]
        return affine(p[f"{self.prefix}.out.weight"], p[f"{self.prefix}.out.bias"], h)

    def parameters(self) -> Dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def set_parameters(self, params: Dict[str, np.ndarray]) -> None:
        for name in self.params:
            self.params[name] = np.array(params[name], dtype=np.float64)

    def describe(self) -> Dict[str, Any]:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden_dims": list(self.hidden_dims),
        }


@dataclass
class ReadoutMLP:
    """One softplus hidden layer followed by a linear output layer."""
    input_dim: int
    hidden_dim: int
    output_dim: int
    params: Dict[str, np.ndarray]
    prefix: str = "g"

    def __post_init__(self) -> None:
        if min(self.input_dim, self.hidden_dim, self.output_dim) < 1:
            raise ConfigurationError("readout dimensions must be positive")
        self.params = {k: np.array(v, dtype=np.float64) for k, v in self.params.items()}
        shapes = {
            "hidden.weight": (self.hidden_dim, self.input_dim),
            "hidden.bias": (self.hidden_dim,),
            "out.weight": (self.output_dim, self.hidden_dim),
            "out.bias": (self.output_dim,),
        }
        for suffix, shape in shapes.items():
            name = f"{self.prefix}.{suffix}"
            if name not in self.params or self.params[name].shape != shape:
                raise ConfigurationError(f"parameter {name} missing or not of shape {shape}")
            if not np.all(np.isfinite(self.params[name])):
                raise ConfigurationError(f"parameter {name} is not finite")

    @classmethod
    def initialized(
        cls,
        input_dim: int,
        hidden_dim: int,
        output_dim: int,
        rng: np.random.Generator,
        prefix: str = "g"
    ) -> "ReadoutMLP":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
        r_hidden = 1.0 / np.sqrt(input_dim)
        r_out = 1.0 / np.sqrt(hidden_dim)
        params = {
            f"{prefix}.hidden.weight": rng.uniform(-r_hidden, r_hidden, (hidden_dim, input_dim)),
            f"{prefix}.hidden.bias": rng.uniform(-r_hidden, r_hidden, hidden_dim),
            f"{prefix}.out.weight": rng.uniform(-r_out, r_out, (output_dim, hidden_dim)),
            f"{prefix}.out.bias": rng.uniform(-r_out, r_out, output_dim),
        }
        return cls(input_dim, hidden_dim, output_dim, params, prefix)

    def forward(self, z: Sequence[Any], params: Params = None) -> Vector:
        _check_length(z, self.input_dim, "readout")
        p = self.params if params is None else {**self.params, **params}
        pre = affine(p[f"{self.prefix}.hidden.weight"], p[f"{self.prefix}.hidden.bias"], z)
        hidden = [softplus(s) for s in pre]
        return affine(p[f"{self.prefix}.out.weight"], p[f"{self.prefix}.out.bias"], hidden)

    def parameters(self) -> Dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def set_parameters(self, params: Dict[str, np.ndarray]) -> None:
        for name in self.params:
            self.params[name] = np.array(params[name], dtype=np.float64)

    def describe(self) -> Dict[str, Any]:
        return {
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "output_dim": self.output_dim,
        }


def coupling_forward(phi: AdditiveCouplingDiffeo, x: Sequence[Any], params: Params = None) -> Vector:
    return phi.forward(x, params)


def coupling_inverse(phi: AdditiveCouplingDiffeo, u: Sequence[Any], params: Params = None) -> Vector:
    return phi.inverse(u, params)


def polymlp_forward(f: PolyMLP, x: Sequence[Any], params: Params = None) -> Vector:
    return f.forward(x, params)


def readout_forward(g: ReadoutMLP, z: Sequence[Any], params: Params = None) -> Vector:
    return g.forward(z, params)
