import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmcert.errors import DimensionError, ShapeError
from rmcert.qudit import (
    DensityMatrix,
    apply_local,
    fidelity,
    gellmann_basis,
    max_entangled_state,
    maximally_mixed,
    partial_trace,
    product_state,
    purity,
    trace_distance,
    unitarity_residual,
    validate_density,
)
from rmcert.sampling import haar_unitaries


def random_state(d, rng, rank=None):
    n = d * d
    k = rank or n
    g = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m), d, d)


def test_gellmann_qubit_is_pauli_over_sqrt2():
    g = gellmann_basis(2).generators
    s = 1 / np.sqrt(2)
    x = np.array([[0, 1], [1, 0]]) * s
    y = np.array([[0, -1j], [1j, 0]]) * s
    z = np.array([[1, 0], [0, -1]]) * s
    assert np.allclose(g, [x, y, z], atol=1e-15)


@pytest.mark.parametrize("d", [2, 3, 4, 5, 7])
def test_gellmann_orthonormal_traceless(d):
    b = gellmann_basis(d)
    assert b.generators.shape == (d * d - 1, d, d)
    assert np.allclose(b.gram(), np.eye(d * d - 1), atol=1e-12)
    assert np.allclose(np.trace(b.generators, axis1=1, axis2=2), 0, atol=1e-12)
    assert np.allclose(b.generators, b.generators.conj().transpose(0, 2, 1))


def test_gellmann_d3_gram_direct():
    g = gellmann_basis(3).generators
    gram = np.array([[np.trace(a @ b) for b in g] for a in g])
    assert np.max(np.abs(gram - np.eye(8))) < 1e-12


def test_gellmann_ordering_d3():
    g = gellmann_basis(3).generators
    s = 1 / np.sqrt(2)
    # symmetric (0,1), (0,2), (1,2), then antisymmetric, then diagonal
    assert np.isclose(g[1][0, 2], s) and np.isclose(g[1][2, 0], s)
    assert np.isclose(g[3][1, 0], 1j * s) and np.isclose(g[3][0, 1], -1j * s)
    assert np.allclose(np.diag(g[7]).real, np.array([1, 1, -2]) / np.sqrt(6))


@pytest.mark.parametrize("d", [1, 0, -2])
def test_gellmann_bad_dim(d):
    with pytest.raises(DimensionError):
        gellmann_basis(d)


def test_coefficients_reconstruct_operator():
    rng = np.random.default_rng(0)
    b = gellmann_basis(4)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    h = a + a.conj().T
    h -= np.trace(h) / 4 * np.eye(4)
    c = b.coefficients(h)
    assert np.allclose(np.tensordot(c, b.generators, axes=1), h)


def test_mes_properties():
    rho = max_entangled_state(5)
    assert np.isclose(np.trace(rho.matrix).real, 1)
    assert np.isclose(purity(rho), 1)
    assert np.allclose(partial_trace(rho, "a"), np.eye(5) / 5)
    assert np.allclose(partial_trace(rho, "b"), np.eye(5) / 5)


def test_mes_qubit_is_bell_projector():
    m = max_entangled_state(2).matrix
    expected = np.zeros((4, 4))
    expected[np.ix_([0, 3], [0, 3])] = 0.5
    assert np.allclose(m, expected)


def test_mes_bad_dim():
    with pytest.raises(DimensionError):
        max_entangled_state(1)


def test_density_matrix_is_read_only():
    rho = max_entangled_state(2)
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 1


def test_density_matrix_shape_errors():
    with pytest.raises(ShapeError):
        DensityMatrix(np.eye(3), 2, 2)
    with pytest.raises(ShapeError):
        DensityMatrix(np.full((4, 4), np.nan), 2, 2)


def test_roundtrip_dict():
    rho = random_state(3, np.random.default_rng(1))
    back = DensityMatrix.from_dict(rho.to_dict())
    assert np.array_equal(back.matrix, rho.matrix)


def test_apply_local_identity():
    rho = random_state(3, np.random.default_rng(2))
    out = apply_local(rho, np.eye(3), np.eye(3))
    assert np.allclose(out.matrix, rho.matrix)


def test_apply_local_matches_kron():
    rng = np.random.default_rng(3)
    rho = random_state(3, rng)
    a, b = haar_unitaries(3, 2, rng)
    k = np.kron(a, b)
    assert np.allclose(apply_local(rho, a, b).matrix, k @ rho.matrix @ k.conj().T)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_mes_invariant_under_u_ustar(d):
    u = haar_unitaries(d, 1, np.random.default_rng(d))[0]
    rho = max_entangled_state(d)
    out = apply_local(rho, u, u.conj())
    k = np.kron(u, u.conj())
    assert np.allclose(out.matrix, rho.matrix, atol=1e-12)
    assert np.allclose(k @ rho.matrix @ k.conj().T, rho.matrix, atol=1e-12)


def test_apply_local_shape_error():
    with pytest.raises(ShapeError):
        apply_local(max_entangled_state(3), np.eye(2), np.eye(3))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([2, 3, 4]))
def test_purity_and_trace_invariant_under_local_unitaries(seed, d):
    rng = np.random.default_rng(seed)
    rho = random_state(d, rng, rank=2)
    a, b = haar_unitaries(d, 2, rng)
    out = apply_local(rho, a, b)
    assert np.isclose(purity(out), purity(rho), atol=1e-12)
    assert np.isclose(np.trace(out.matrix).real, 1, atol=1e-12)
    assert validate_density(out).passed


def test_validate_mes_passes():
    rep = validate_density(max_entangled_state(5))
    assert rep.passed
    rep.raise_if_failed()


def test_validate_trace_failure():
    m = max_entangled_state(2).matrix * 0.9
    rep = validate_density(m)
    assert not rep.passed
    assert np.isclose(rep.trace_deviation, 0.1)
    assert any("trace" in f for f in rep.failures)


def test_validate_negative_eigenvalue():
    w = np.array([0.5 + 1e-6, 0.3, 0.2, -1e-6])
    rep = validate_density(np.diag(w), tol_psd=1e-9)
    assert not rep.passed
    assert np.isclose(rep.min_eigenvalue, -1e-6)
    assert any("eigenvalue" in f for f in rep.failures)


def test_validate_non_hermitian():
    m = np.eye(4) / 4 + 0j
    m[0, 1] = 1e-3
    assert not validate_density(m).passed


def test_unitarity_residual():
    assert unitarity_residual(np.eye(3)) == 0
    assert unitarity_residual(np.diag([1, 1, 1.001])) > 1e-3


def test_fidelity_and_trace_distance():
    rng = np.random.default_rng(4)
    rho = random_state(2, rng)
    assert np.isclose(fidelity(rho, rho), 1, atol=1e-9)
    assert trace_distance(rho, rho) < 1e-12
    mes, mix = max_entangled_state(2), maximally_mixed(2)
    assert np.isclose(fidelity(mes, mix), 0.25)
    assert np.isclose(trace_distance(mes, mix), 0.75)


def test_product_state_pure_marginals():
    rho = product_state([1, 1j, 0], [0, 1, 1])
    assert np.isclose(purity(rho), 1)
    pa = partial_trace(rho, "a")
    assert np.isclose(np.trace(pa @ pa).real, 1)
