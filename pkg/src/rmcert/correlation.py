"""Cross-correlation matrix, trace-norm Schmidt-number criterion, Bloch moments.

Moment convention (used consistently by the estimator and the boundary
curves): for singular values ``eps`` of the correlation matrix,

    S2 = sum(eps**2)
    S4 = (S2**2 + 2 * sum(eps**4)) / 3

which is what averaging ``(alpha X beta)^m`` over independent uniform unit
directions in R^(d^2-1) gives after multiplying by ``n^2`` (m = 2) and
``n^2 (n+2)^2 / 9`` (m = 4), ``n = d^2 - 1``.
"""

import csv
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .errors import DomainError, NumericError, ShapeError
from .qudit import gellmann_basis

IMAG_TOL = 1e-8
SV_FLOOR = 1e-12


@dataclass(frozen=True)
class MomentPair:
    s2: float
    s4: float

    def as_tuple(self):
        return (self.s2, self.s4)


@dataclass(frozen=True, eq=False)
class CrossCorrelationMatrix:
    d: int
    X: np.ndarray = field(repr=False)
    singular_values: np.ndarray = field(repr=False)

    @classmethod
    def from_matrix(cls, X, d=None):
        X = np.array(X, dtype=float)
        n = X.shape[0]
        if X.ndim != 2 or X.shape[1] != n:
            raise ShapeError(f"correlation matrix must be square, got {X.shape}")
        if d is None:
            d = int(round(np.sqrt(n + 1)))
        if d * d - 1 != n:
            raise ShapeError(f"{n}x{n} matrix is not (d^2-1)-dimensional")
        sv = np.linalg.svd(X, compute_uv=False)
        sv[sv < SV_FLOOR] = 0.0
        X.setflags(write=False)
        sv.setflags(write=False)
        return cls(d, X, sv)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in self.X:
                w.writerow([repr(float(v)) for v in row])
        return path


def correlation_matrices(rhos, d, basis=None):
    """Batch ``X[s, k, l] = Tr(g_k (x) g_l rho_s)`` for an array of states.

    ``rhos`` has shape ``(..., d*d, d*d)``. Returns the complex result so the
    caller can check the imaginary residue.
    """
    g = (basis or gellmann_basis(d)).generators
    rhos = np.asarray(rhos)
    lead = rhos.shape[:-2]
    # rho[a, b, x, y] = <ab|rho|xy>;  X_kl = sum g_k[x, a] g_l[y, b] rho[a, b, x, y]
    t = rhos.reshape(-1, d, d, d, d).transpose(0, 1, 3, 2, 4).reshape(-1, d * d, d * d)
    ga = g.transpose(0, 2, 1).reshape(len(g), d * d)  # [k, (a, x)] = g_k[x, a]
    X = np.einsum("kp,spq,lq->skl", ga, t, ga, optimize=True)
    return X.reshape(lead + X.shape[1:])


def cross_correlation(rho, basis=None):
    d = rho.dim_a
    if rho.dim_b != d:
        raise ShapeError(f"criterion needs equal local dimensions, got {rho.dim_a}x{rho.dim_b}")
    if basis is not None and basis.d != d:
        raise ShapeError(f"basis is for d={basis.d}, state has d={d}")
    Xc = correlation_matrices(rho.matrix, d, basis)
    resid = float(np.max(np.abs(Xc.imag)))
    if resid > IMAG_TOL:
        raise NumericError(f"correlation matrix has imaginary residue {resid:.3g}; input not Hermitian?")
    return CrossCorrelationMatrix.from_matrix(Xc.real, d)


def trace_norm(X):
    return float(np.sum(X.singular_values))


def certify_from_tracenorm(T, d, tol=1e-9):
    """Smallest ``r`` in ``[1, d]`` whose bound ``r - 1/d`` admits trace norm ``T``.

    Every state with trace norm ``T`` has Schmidt number at least the returned
    value. ``tol`` absorbs round-off so a state sitting exactly on a bound is
    not promoted to the next one.
    """
    if T < 0:
        raise DomainError(f"trace norm must be nonnegative, got {T}")
    if d < 2:
        raise DomainError(f"d must be >= 2, got {d}")
    r = ceil(T + 1.0 / d - tol)
    return int(min(max(r, 1), d))


def moments_from_singular_values(sv):
    sv = np.asarray(sv, dtype=float)
    e2 = sv * sv
    s2 = float(np.sum(e2))
    s4 = float((s2 * s2 + 2 * np.sum(e2 * e2)) / 3)
    return MomentPair(s2, s4)


def direct_moments(X):
    return moments_from_singular_values(X.singular_values)


def batch_direct_moments(Xs):
    """``(s2, s4)`` arrays for a stack of real correlation matrices."""
    sv = np.linalg.svd(np.asarray(Xs), compute_uv=False)
    sv[sv < SV_FLOOR] = 0.0
    e2 = sv * sv
    s2 = e2.sum(-1)
    return s2, (s2 * s2 + 2 * (e2 * e2).sum(-1)) / 3
