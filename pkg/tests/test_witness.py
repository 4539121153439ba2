import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rmcert.correlation import cross_correlation, trace_norm
from rmcert.errors import DomainError, ShapeError
from rmcert.qudit import apply_local, max_entangled_state, maximally_mixed
from rmcert.sampling import SeededStream, random_phase_unitary
from rmcert.witness import correlator_from_blocks, dft_certify, dft_correlator, dft_matrix, scrambling_comparison


def explicit_cd(rho):
    d = rho.dim_a
    f = dft_matrix(d)
    op = np.zeros((d * d, d * d), dtype=complex)
    for j in range(d):
        e = np.eye(d)[j]
        op += np.kron(np.outer(e, e), np.outer(e, e))
        fj, fm = f[:, j], f[:, (-j) % d]
        op += np.kron(np.outer(fj, fj.conj()), np.outer(fm, fm.conj()))
    return np.trace(op @ rho.matrix).real


@pytest.mark.parametrize("d", [2, 3, 5, 7])
def test_dft_matrix_unitary_flat(d):
    f = dft_matrix(d)
    assert np.allclose(f.conj().T @ f, np.eye(d), atol=1e-12)
    assert np.allclose(np.abs(f), 1 / np.sqrt(d))


@pytest.mark.parametrize("d", [2, 3, 5])
def test_mes_gives_two(d):
    assert dft_correlator(max_entangled_state(d)) == pytest.approx(2.0, abs=1e-10)


def test_maximally_mixed():
    assert dft_correlator(maximally_mixed(5)) == pytest.approx(0.4, abs=1e-12)


def test_matches_explicit_operator():
    rho = apply_local(max_entangled_state(3), random_phase_unitary(3, SeededStream(0)), np.eye(3))
    assert dft_correlator(rho) == pytest.approx(explicit_cd(rho), abs=1e-12)


@pytest.mark.parametrize(
    "c,r",
    [(1.83184, 5), (1.15041, 1), (1.25493, 2), (1.32341, 2), (1.15997, 1), (1.17687, 1), (1.25993, 2), (2.0, 5), (0.0, 1), (1.2, 1)],
)
def test_certify_table(c, r):
    assert dft_certify(c, 5) == r


def test_certify_domain():
    with pytest.raises(DomainError):
        dft_certify(2.1, 5)
    with pytest.raises(DomainError):
        dft_certify(-0.1, 5)


@given(st.floats(0, 2), st.floats(0, 2), st.integers(2, 9))
def test_certify_monotone(a, b, d):
    lo, hi = sorted((a, b))
    assert dft_certify(lo, d) <= dft_certify(hi, d)


def test_blocks_normalized():
    d = 3
    comp = np.eye(d) * 7.0
    dft = np.zeros((d, d))
    dft[np.arange(d), (-np.arange(d)) % d] = 2.0
    assert correlator_from_blocks(comp, dft) == pytest.approx(2.0)
    with pytest.raises(ShapeError):
        correlator_from_blocks(np.eye(2), np.eye(3))
    with pytest.raises(DomainError):
        correlator_from_blocks(np.zeros((2, 2)), np.eye(2))


def test_unequal_dims():
    with pytest.raises(ShapeError):
        dft_correlator(maximally_mixed(2, 3))


def test_phases_break_dft_but_not_trace_norm():
    mes = max_entangled_state(5)
    tn0 = trace_norm(cross_correlation(mes))
    drops = 0
    for t in range(5):
        s = SeededStream(1, t)
        noisy = apply_local(mes, random_phase_unitary(5, s.child(0)), random_phase_unitary(5, s.child(1)))
        assert trace_norm(cross_correlation(noisy)) == pytest.approx(tn0, abs=1e-8)
        drops += dft_correlator(noisy) < 2 - 1e-6
    assert drops >= 1


def test_dephasing_never_raises_dft_on_average():
    mes = max_entangled_state(5)
    vals = []
    for t in range(1000):
        s = SeededStream(2, t)
        vals.append(dft_correlator(apply_local(mes, random_phase_unitary(5, s.child(0), (-0.5, 0.5)), random_phase_unitary(5, s.child(1), (-0.5, 0.5)))))
    assert np.mean(vals) <= 2.0


def test_scrambling_zero_range_keeps_dft():
    rows = scrambling_comparison(max_entangled_state(3), 3, (0.0, 0.0), SeededStream(3), n_settings=2000, grid_size=64)
    assert all(r.dft_value == pytest.approx(2.0) for r in rows)
    assert all(r.tracenorm_certified == 3 for r in rows)


def test_scrambling_full_range():
    rows = scrambling_comparison(max_entangled_state(5), 3, (0.0, 2 * np.pi), SeededStream(4), n_settings=4000, grid_size=128)
    assert len(rows) == 3
    for r in rows:
        assert r.tracenorm_certified == 5
        assert r.trace_norm == pytest.approx(4.8, abs=1e-8)
        assert r.dft_value < 2.0
    with pytest.raises(DomainError):
        scrambling_comparison(max_entangled_state(3), 0, (0, 1), SeededStream(0))


def test_phase_noisy_mes_closed_form():
    # diagonal phases on |kk> leave the computational block alone; the Fourier term is |sum e^{i psi}|^2 / d^2
    d = 5
    for t in range(10):
        s = SeededStream(5, t)
        da, db = random_phase_unitary(d, s.child(0)), random_phase_unitary(d, s.child(1))
        psi = np.angle(np.diag(da)) + np.angle(np.diag(db))
        expected = 1 + abs(np.exp(1j * psi).sum()) ** 2 / d**2
        assert dft_correlator(apply_local(max_entangled_state(d), da, db)) == pytest.approx(expected, abs=1e-12)
