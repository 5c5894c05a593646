"""Tests for the coupling diffeomorphism and the two networks."""

import numpy as np
import pytest

from src.engine.adcore import check_gradient, square
from src.errors import ConfigurationError, ShapeError
from src.koopman.maps import (
    AdditiveCouplingDiffeo, Poly2, PolyMLP, ReadoutMLP, coupling_forward, coupling_inverse,
    polymlp_forward, readout_forward
)


def random_points(rng, dim, n):
    return [rng.normal(size=n) for _ in range(dim)]


def test_coupling_round_trip():
    rng = np.random.default_rng(0)
    phi = AdditiveCouplingDiffeo(10, coefficients=rng.normal(scale=0.5, size=(5, 3)))
    x = random_points(rng, 10, 10_000)

    back = coupling_inverse(phi, coupling_forward(phi, x))
    assert max(np.max(np.abs(b - a)) for a, b in zip(x, back)) <= 1e-10


def test_zero_coefficients_are_identity():
    phi = AdditiveCouplingDiffeo(4)
    x = [0.1, -2.0, 3.5, 0.25]
    assert phi.forward(x) == x
    assert phi.inverse(x) == x


def test_odd_indices_are_shifted_by_default():
    phi = AdditiveCouplingDiffeo(4, coefficients=np.ones((2, 3)))
    x = [1.0, 2.0, 3.0, 4.0]
    out = phi.forward(x)

    assert out[0] == x[0] and out[2] == x[2]
    # index 1 sees neighbours 0 and 2: s = 4, poly = 16 + 4 + 1
    assert out[1] == pytest.approx(2.0 + 21.0)
    # index 3 wraps around to neighbour 0: s = 3 + 1
    assert out[3] == pytest.approx(4.0 + 21.0)


def test_even_parity_variant():
    phi = AdditiveCouplingDiffeo(4, coefficients=np.ones((2, 3)), modify_odd=False)
    out = phi.forward([1.0, 2.0, 3.0, 4.0])
    assert out[1] == 2.0 and out[3] == 4.0


def test_coupling_rejects_odd_dimension():
    with pytest.raises(ConfigurationError):
        AdditiveCouplingDiffeo(3)


def test_coupling_rejects_wrong_length():
    with pytest.raises(ShapeError):
        AdditiveCouplingDiffeo(4).forward([1.0, 2.0])


def test_coupling_gradient_in_coefficients():
    x = [0.3, -0.2, 0.9, 0.5]
    phi = AdditiveCouplingDiffeo(4)

    def field(v):
        out = phi.inverse(x, {"phi.poly": np.asarray(v).reshape(2, 3)})
        return square(out[1]) + square(out[3]) * out[1]

    assert check_gradient(field, np.linspace(-0.5, 0.5, 6)) < 1e-6


def test_poly2():
    assert Poly2(2.0, -1.0, 0.5)(3.0) == pytest.approx(18.0 - 3.0 + 0.5)


def test_initialized_polymlp_outputs_zero():
    rng = np.random.default_rng(1)
    f = PolyMLP.initialized(3, 4, hidden_layers=2, hidden_dim=5, rng=rng)
    out = polymlp_forward(f, random_points(rng, 3, 50))
    assert len(out) == 4
    assert all(np.all(component == 0.0) for component in out)


def test_polymlp_hand_evaluation():
    """3 (2x + 1)^2 at x = 1 is 27."""
    f = PolyMLP(
        input_dim=1,
        output_dim=1,
        hidden_dims=(1,),
        params={
            "f.hidden0.weight": np.array([[2.0]]),
            "f.hidden0.bias": np.array([1.0]),
            "f.hidden0.poly": np.array([[1.0, 0.0, 0.0]]),
            "f.out.weight": np.array([[3.0]]),
            "f.out.bias": np.array([0.0]),
        },
    )
    assert float(f.forward([1.0])[0]) == pytest.approx(27.0)


def test_polymlp_rejects_misshaped_parameters():
    with pytest.raises(ConfigurationError):
        PolyMLP(
            input_dim=2,
            output_dim=1,
            hidden_dims=(1,),
            params={
                "f.hidden0.weight": np.zeros((1, 3)),
                "f.hidden0.bias": np.zeros(1),
                "f.hidden0.poly": np.zeros((1, 3)),
                "f.out.weight": np.zeros((1, 1)),
                "f.out.bias": np.zeros(1),
            },
        )


def test_constant_readout():
    g = ReadoutMLP(
        input_dim=2,
        hidden_dim=3,
        output_dim=1,
        params={
            "g.hidden.weight": np.zeros((3, 2)),
            "g.hidden.bias": np.zeros(3),
            "g.out.weight": np.zeros((1, 3)),
            "g.out.bias": np.array([0.7]),
        },
    )
    assert float(readout_forward(g, [5.0, -9.0])[0]) == pytest.approx(0.7)


def test_readout_initialization_is_seeded():
    first = ReadoutMLP.initialized(2, 4, 1, np.random.default_rng(5))
    second = ReadoutMLP.initialized(2, 4, 1, np.random.default_rng(5))
    for name, value in first.parameters().items():
        assert np.array_equal(value, second.parameters()[name])
