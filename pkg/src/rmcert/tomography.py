"""Overcomplete MUB tomography with a PSD-by-construction chi-square fit.

Party A is projected on ``|m_{alpha,i}>`` and party B on the complex
conjugate ``|m_{beta,j}>^*``. The fitted state is ``G^dag G / Tr(G^dag G)``
with ``G = c_0 1 + sum_k c_k g_k`` expanded in the su(D) generators of the
global ``D = d^2`` dimensional space.
"""

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateGaugeError, ShapeError, UnsupportedDimensionError
from .qudit import DensityMatrix, gellmann_basis
from .sampling import SeededStream

log = logging.getLogger(__name__)

SUPPORTED_PRIMES = (2, 3, 5, 7)
P_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class MubSet:
    d: int
    bases: np.ndarray  # [alpha, i, k]: component k of vector i of basis alpha

    def vectors(self, alpha):
        return self.bases[alpha]


def mub_bases(d):
    """Computational basis followed by the d Wootters-Fields bases."""
    if d not in SUPPORTED_PRIMES:
        raise UnsupportedDimensionError(f"MUBs implemented for primes {SUPPORTED_PRIMES}, got d={d}")
    if d == 2:
        s = 1 / np.sqrt(2)
        bases = np.array(
            [
                np.eye(2),
                [[s, s], [s, -s]],
                [[s, 1j * s], [s, -1j * s]],
            ],
            dtype=complex,
        )
    else:
        k = np.arange(d)
        w = np.exp(2j * np.pi / d)
        bases = [np.eye(d, dtype=complex)]
        for a in range(d):
            bases.append(np.array([w ** ((a * k * k + i * k) % d) for i in range(d)]) / np.sqrt(d))
        bases = np.array(bases)
    bases.setflags(write=False)
    return MubSet(d, bases)


def _projectors(mubs):
    """Vectors ``|m_{alpha,i}> (x) |m_{beta,j}>^*`` stacked as ``[alpha, beta, i, j, :]``."""
    b = mubs.bases
    d = mubs.d
    v = np.einsum("aik,bjl->abijkl", b, b.conj())
    return v.reshape(d + 1, d + 1, d, d, d * d)


def predict_probs(rho, mubs):
    """Probability table of shape ``(d+1, d+1, d, d)``."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    d = mubs.d
    if m.shape != (d * d, d * d):
        raise ShapeError(f"state of shape {m.shape} does not match MUBs for d={d}")
    v = _projectors(mubs)
    return np.einsum("abijp,pq,abijq->abij", v.conj(), m, v).real


@dataclass(frozen=True, eq=False)
class TomoData:
    """Measured frequencies ``p[alpha, beta, i, j]`` and setting totals ``N[alpha, beta]``.

    Settings with ``N == 0`` were not measured and are left out of the fit.
    """

    d: int
    probs: np.ndarray
    totals: np.ndarray

    @classmethod
    def from_counts(cls, counts):
        c = np.asarray(counts, dtype=float)
        if c.ndim != 4 or c.shape[0] != c.shape[1] or c.shape[2] != c.shape[3] or c.shape[0] != c.shape[2] + 1:
            raise ShapeError(f"counts must have shape (d+1, d+1, d, d), got {c.shape}")
        if np.any(c < 0):
            raise ShapeError("counts must be nonnegative")
        tot = c.sum(axis=(2, 3))
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(tot[..., None, None] > 0, c / tot[..., None, None], 0.0)
        return cls(c.shape[2], p, tot)

    @classmethod
    def exact(cls, rho, mubs, total=1.0):
        p = predict_probs(rho, mubs)
        return cls(mubs.d, p, np.full(p.shape[:2], float(total)))

    @property
    def measured(self):
        return self.totals > 0


def simulate_tomo_counts(rho, mubs, shots, stream, shots_computational=None):
    """Multinomial counts per setting; ``shots_computational`` overrides the
    computational-computational setting (brighter in the experiment)."""
    p = predict_probs(rho, mubs)
    d = mubs.d
    g = stream.generator()
    counts = np.zeros_like(p, dtype=np.int64)
    for a in range(d + 1):
        for b in range(d + 1):
            n = shots_computational if (a == b == 0 and shots_computational) else shots
            q = np.clip(p[a, b].reshape(-1), 0, None)
            counts[a, b] = g.multinomial(int(n), q / q.sum()).reshape(d, d)
    return counts


def gauge_operator(params, big_d):
    params = np.asarray(params, dtype=float)
    g = gellmann_basis(big_d).generators
    if params.size != big_d * big_d:
        raise ShapeError(f"need {big_d * big_d} gauge parameters, got {params.size}")
    return params[0] * np.eye(big_d) + np.tensordot(params[1:], g, axes=1)


def rho_from_gauge(params, d=None):
    """``G^dag G / Tr(G^dag G)`` for real parameters ``(c_0, c_1, ..., c_{D^2-1})``."""
    params = np.asarray(params, dtype=float)
    big_d = int(round(np.sqrt(params.size)))
    if d is None:
        d = int(round(np.sqrt(big_d)))
    if d * d != big_d:
        raise ShapeError(f"{params.size} parameters do not describe a bipartite d x d system")
    gmat = gauge_operator(params, big_d)
    m = gmat.conj().T @ gmat
    tr = np.trace(m).real
    if not tr > 0:
        raise DegenerateGaugeError("gauge operator is zero")
    return DensityMatrix(m / tr, d, d)


def gauge_from_rho(rho):
    """Parameters of the Hermitian square root of ``rho`` (one valid gauge)."""
    big_d = rho.dim
    w, v = np.linalg.eigh(rho.matrix)
    root = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    g = gellmann_basis(big_d).generators
    return np.concatenate([[np.trace(root).real / big_d], np.einsum("kab,ba->k", g, root).real])


def chi_square(p_meas, p_pred, weights=None, mask=None):
    """Sum over settings of ``(p_M - p_P)^2 / p_P`` (``p_P`` floored at 1e-12).

    ``weights[alpha, beta]`` multiplies each setting's terms.
    """
    pp = np.maximum(p_pred, P_FLOOR)
    terms = ((p_meas - p_pred) ** 2 / pp).sum(axis=(2, 3))
    if weights is not None:
        terms = terms * weights
    if mask is not None:
        terms = terms[mask]
    return float(terms.sum())


def setting_weights(totals):
    """Relative weights ``N_{alpha,beta} / mean(N)`` over measured settings."""
    tot = np.asarray(totals, dtype=float)
    meas = tot > 0
    return tot / tot[meas].mean()


@dataclass(frozen=True)
class TomoResult:
    rho: DensityMatrix
    objective: float
    iterations: int
    converged: bool
    params: np.ndarray
    start_objectives: tuple


def reconstruct(data, mubs, weighted=False, n_starts=8, seed=0, maxiter=5000, workers=1, initial=None):
    """Minimise the (weighted) chi-square over gauge parameters.

    Each start is an L-BFGS-B descent with finite-difference gradients from
    seeded random parameters; the best end point is returned. ``initial``
    adds an extra start.
    """
    d = mubs.d
    if data.d != d:
        raise ShapeError(f"data for d={data.d} used with MUBs for d={d}")
    mask = data.measured
    if not mask.all():
        warnings.warn(f"{int((~mask).sum())} of {mask.size} settings unmeasured; fitting the rest", stacklevel=2)
    weights = setting_weights(data.totals) if weighted else None
    big_d = d * d
    v = _projectors(mubs)
    vc = v.conj()
    g = gellmann_basis(big_d).generators
    eye = np.eye(big_d)
    pm = data.probs

    def objective(c):
        gm = c[0] * eye + np.tensordot(c[1:], g, axes=1)
        m = gm.conj().T @ gm
        m = m / np.trace(m).real
        pp = np.einsum("abijp,pq,abijq->abij", vc, m, v, optimize=True).real
        return chi_square(pm, pp, weights, mask)

    starts = []
    for s in range(n_starts):
        c0 = SeededStream(seed, s).child(7).generator().standard_normal(big_d * big_d)
        starts.append(c0)
    if initial is not None:
        starts.append(np.asarray(initial, dtype=float))

    def run(c0):
        res = minimize(objective, c0, method="L-BFGS-B", options={"maxiter": maxiter, "ftol": 1e-16, "gtol": 1e-12, "maxfun": 10**7})
        return res

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, starts))
    else:
        results = [run(c) for c in starts]
    best = min(results, key=lambda r: r.fun)
    log.info("tomography: best objective %.3e after %d iterations", best.fun, best.nit)
    return TomoResult(
        rho=rho_from_gauge(best.x, d),
        objective=float(best.fun),
        iterations=int(best.nit),
        converged=bool(best.success) or best.fun < 1e-12,
        params=best.x,
        start_objectives=tuple(float(r.fun) for r in results),
    )
