"""Bipartite qudit states, the su(d) generator basis and local unitary actions."""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DimensionError, ShapeError, ValidationError

TOL_HERM = 1e-10
TOL_ORTH = 1e-10
TOL_UNIT = 1e-10
TOL_PSD = 1e-9
TOL_TR = 1e-10


def _frozen(a, dtype=complex):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """State of a ``dim_a x dim_b`` bipartite system.

    The matrix is stored in the product basis ``|i>|j>`` with row index
    ``i * dim_b + j``. Construction only checks shape and finiteness; use
    :func:`validate_density` for the physical invariants.
    """

    matrix: np.ndarray
    dim_a: int
    dim_b: int

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if self.dim_a < 1 or self.dim_b < 1:
            raise DimensionError(f"local dimensions must be positive, got {self.dim_a}, {self.dim_b}")
        n = self.dim_a * self.dim_b
        if m.shape != (n, n):
            raise ShapeError(f"density matrix must be {n}x{n}, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ShapeError("density matrix has non-finite entries")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self):
        return self.dim_a * self.dim_b

    @classmethod
    def from_vector(cls, psi, dim_a, dim_b=None):
        dim_b = dim_a if dim_b is None else dim_b
        psi = np.asarray(psi, dtype=complex).reshape(-1)
        if psi.size != dim_a * dim_b:
            raise ShapeError(f"state vector has {psi.size} entries, expected {dim_a * dim_b}")
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), dim_a, dim_b)

    def tensor(self):
        """View as a 4-index array ``[i, j, k, l] = <ij|rho|kl>``."""
        return self.matrix.reshape(self.dim_a, self.dim_b, self.dim_a, self.dim_b)

    def to_dict(self):
        m = self.matrix
        return {
            "dim_a": int(self.dim_a),
            "dim_b": int(self.dim_b),
            "matrix": np.stack([m.real, m.imag], axis=-1).tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        arr = np.asarray(data["matrix"], dtype=float)
        if arr.ndim != 3 or arr.shape[-1] != 2:
            raise ShapeError("matrix must be a nested array of [re, im] pairs")
        return cls(arr[..., 0] + 1j * arr[..., 1], int(data["dim_a"]), int(data["dim_b"]))


@dataclass(frozen=True, eq=False)
class SuBasis:
    """Hilbert-Schmidt orthonormal traceless Hermitian generators of su(d)."""

    d: int
    generators: np.ndarray = field(repr=False)

    @property
    def size(self):
        return self.d * self.d - 1

    def gram(self):
        g = self.generators
        return np.einsum("kab,lba->kl", g, g)

    def coefficients(self, op):
        """Real expansion coefficients ``Tr(g_k op)`` of a Hermitian operator."""
        return np.real(np.einsum("kab,ba->k", self.generators, op))


@lru_cache(maxsize=None)
def gellmann_basis(d):
    """Normalized generalized Gell-Mann matrices, ``Tr(g_k g_l) = delta_kl``.

    Order: symmetric off-diagonal pairs ``(i, j)`` with ``i < j`` in
    lexicographic order, then the antisymmetric ones in the same order, then
    the ``d - 1`` diagonal generators.
    """
    if int(d) != d or d < 2:
        raise DimensionError(f"su(d) basis needs d >= 2, got {d}")
    d = int(d)
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    gens = []
    s = 1 / np.sqrt(2)
    for i, j in pairs:
        g = np.zeros((d, d), dtype=complex)
        g[i, j] = g[j, i] = s
        gens.append(g)
    for i, j in pairs:
        g = np.zeros((d, d), dtype=complex)
        # i(|j><i| - |i><j|)
        g[j, i] = 1j * s
        g[i, j] = -1j * s
        gens.append(g)
    for k in range(1, d):
        v = np.zeros(d)
        v[:k] = 1.0
        v[k] = -k
        gens.append(np.diag(v / np.linalg.norm(v)).astype(complex))
    return SuBasis(d, _frozen(np.array(gens)))


def _check_dim(d):
    if int(d) != d or d < 2:
        raise DimensionError(f"local dimension must be >= 2, got {d}")
    return int(d)


def max_entangled_state(d):
    """Projector onto ``(1/sqrt d) sum_i |i>|i>``."""
    d = _check_dim(d)
    return DensityMatrix.from_vector(np.eye(d).reshape(-1), d, d)


def maximally_mixed(d_a, d_b=None):
    d_b = d_a if d_b is None else d_b
    n = d_a * d_b
    return DensityMatrix(np.eye(n) / n, d_a, d_b)


def product_state(a, b):
    """Pure product state ``|a> (x) |b>`` (vectors need not be normalized)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return DensityMatrix.from_vector(np.kron(a, b), a.size, b.size)


def unitarity_residual(u):
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ShapeError(f"unitary must be square, got shape {u.shape}")
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def apply_local(rho, a, b):
    """Return ``(A (x) B) rho (A (x) B)^dagger``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != (rho.dim_a, rho.dim_a) or b.shape != (rho.dim_b, rho.dim_b):
        raise ShapeError(
            f"local operators {a.shape}, {b.shape} do not match dims ({rho.dim_a}, {rho.dim_b})"
        )
    t = np.einsum("ai,bj,ijkl,ck,dl->abcd", a, b, rho.tensor(), a.conj(), b.conj(), optimize=True)
    return DensityMatrix(t.reshape(rho.dim, rho.dim), rho.dim_a, rho.dim_b)


def partial_trace(rho, keep):
    """Reduced state of party ``"a"`` or ``"b"`` as a plain array."""
    t = rho.tensor()
    if keep == "a":
        return np.einsum("ijkj->ik", t)
    if keep == "b":
        return np.einsum("ijil->jl", t)
    raise ValueError("keep must be 'a' or 'b'")


def purity(rho):
    m = rho.matrix
    return float(np.real(np.einsum("ij,ji->", m, m)))


def _psd_sqrt(m):
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def fidelity(rho, sigma):
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    s = sigma.matrix if isinstance(sigma, DensityMatrix) else np.asarray(sigma)
    sr = _psd_sqrt(r)
    w = np.linalg.eigvalsh(sr @ s @ sr)
    return float(min(np.sum(np.sqrt(np.clip(w, 0, None))) ** 2, 1.0))


def trace_distance(rho, sigma):
    diff = rho.matrix - sigma.matrix
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2))))


@dataclass(frozen=True)
class ValidationReport:
    hermiticity_residual: float
    min_eigenvalue: float
    trace_deviation: float
    failures: tuple

    @property
    def passed(self):
        return not self.failures

    def raise_if_failed(self, what="density matrix"):
        if self.failures:
            raise ValidationError(f"{what} invalid: " + "; ".join(self.failures))


def validate_density(rho, tol_herm=TOL_HERM, tol_psd=TOL_PSD, tol_tr=TOL_TR):
    """Check Hermiticity, positivity and unit trace; never raises on bad input."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    herm = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    min_eig = float(np.min(np.linalg.eigvalsh((m + m.conj().T) / 2)))
    tr_dev = float(abs(np.trace(m) - 1))
    failures = []
    if herm > tol_herm:
        failures.append(f"hermiticity residual {herm:.3g} > {tol_herm:g}")
    if min_eig < -tol_psd:
        failures.append(f"min eigenvalue {min_eig:.3g} < -{tol_psd:g}")
    if tr_dev > tol_tr:
        failures.append(f"trace deviation {tr_dev:.3g} > {tol_tr:g}")
    return ValidationReport(herm, min_eig, tr_dev, tuple(failures))
