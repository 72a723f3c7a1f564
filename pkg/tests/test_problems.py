import json

import numpy as np
import pytest

from specsurg.problems import (
    DegenerateBoundaryError,
    InvalidPotentialError,
    NonSelfadjointBoundaryError,
    ProblemSpec,
    combine_scalar_to_matrix,
    family_exponential,
    family_inverse_square,
    load_spec,
    spec_from_json,
    spec_to_json,
    tabulated_potential,
    validate_boundary,
    zero_potential,
)


def test_validate_boundary_accepts_standard_pairs():
    for A, B in (([[0.0]], [[1.0]]), ([[1.0]], [[0.0]]), ([[1.0]], [[-2.0]])):
        pair = validate_boundary(A, B)
        assert pair.A.shape == (1, 1)


def test_validate_boundary_rejects_nonselfadjoint():
    with pytest.raises(NonSelfadjointBoundaryError):
        validate_boundary([[1.0]], [[1j]])


def test_validate_boundary_rejects_degenerate():
    with pytest.raises(DegenerateBoundaryError):
        validate_boundary([[0.0]], [[0.0]])


def test_exponential_family_values():
    alpha, eps, beta = 2.0, 1.0, 1.0 / 3.0
    p = family_exponential(alpha, eps, beta)
    for x in (0.0, 1.0, 3.7):
        e = np.exp(2 * beta * x)
        expected = -8 * alpha * eps * beta**2 * e / (alpha + eps * e) ** 2
        assert abs(p(x)[0, 0] - expected) < 1e-14


def test_inverse_square_family_values():
    p = family_inverse_square(1.5)
    for x in (0.0, 2.0):
        assert abs(p(x)[0, 0] - 2.0 / (x + 1.5) ** 2) < 1e-15


def test_combined_potential_structure():
    p = combine_scalar_to_matrix(family_exponential(1, 1, 1), zero_potential(1))
    V = p(0.7)
    v1 = family_exponential(1, 1, 1)(0.7)[0, 0]
    assert np.allclose(V, 0.5 * np.array([[v1, v1], [v1, v1]]), atol=1e-14)
    assert p.n == 2


def test_zero_potential():
    p = zero_potential(3)
    assert np.allclose(p(1.2), np.zeros((3, 3)))
    assert p.abs_tail(0.0) == 0.0


def test_tabulated_potential_interpolates():
    xs = np.linspace(0.0, 5.0, 51)
    base = family_exponential(1, 1, 1)
    p = tabulated_potential([(x, base(x)) for x in xs], interpolation="cubic")
    assert abs(p(1.23)[0, 0] - base(1.23)[0, 0]) < 1e-6
    assert np.allclose(p(6.0), 0.0)


def test_tabulated_potential_rejects_bad_grid():
    with pytest.raises(InvalidPotentialError):
        tabulated_potential([(1.0, np.eye(1))])
    with pytest.raises(InvalidPotentialError):
        tabulated_potential([(0.0, np.eye(1)), (0.0, np.eye(1))])
    with pytest.raises(InvalidPotentialError):
        tabulated_potential([(0.0, np.array([[1j]])), (1.0, np.eye(1))])


def test_spec_json_roundtrip_family():
    spec = ProblemSpec(family_inverse_square(1.0),
                       validate_boundary([[1.0]], [[-2.0]]))
    obj = spec_to_json(spec)
    back = spec_from_json(json.loads(json.dumps(obj)))
    assert np.allclose(back.potential(0.9), spec.potential(0.9))
    assert np.allclose(back.A, spec.A) and np.allclose(back.B, spec.B)


def test_spec_json_roundtrip_combined():
    spec = ProblemSpec(
        combine_scalar_to_matrix(family_exponential(2, 1, 1 / 3),
                                 zero_potential(1)),
        validate_boundary(np.eye(2), np.eye(2)),
    )
    back = spec_from_json(spec_to_json(spec))
    assert np.allclose(back.potential(1.7), spec.potential(1.7))


def test_load_spec_from_file(tmp_path):
    spec = ProblemSpec(zero_potential(1), validate_boundary([[0.0]], [[1.0]]))
    path = tmp_path / "problem.json"
    path.write_text(json.dumps(spec_to_json(spec)))
    back = load_spec(path)
    assert back.n == 1
