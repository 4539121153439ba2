"""Two-basis (computational + Fourier) Schmidt-number witness.

    C_d = sum_j |j><j| (x) |j><j| + |F j><F j| (x) |F(-j)><F(-j)|

with ``F|j> = d^(-1/2) sum_k w^(jk) |k>`` and indices mod d. A value
``<C_d> > 1 + (r-1)/d`` certifies Schmidt number at least ``r``.
"""

from dataclasses import dataclass

import numpy as np

from .boundary import boundary_curves, certify_point
from .correlation import certify_from_tracenorm, cross_correlation, trace_norm
from .errors import DomainError, ShapeError
from .qudit import apply_local
from .randmeas import Observable, estimate_moments, simulate_correlators
from .sampling import random_phase_unitary


def dft_matrix(d):
    j = np.arange(d)
    return np.exp(2j * np.pi * np.outer(j, j) / d) / np.sqrt(d)


def _blocks_from_state(rho):
    d = rho.dim_a
    if rho.dim_b != d:
        raise ShapeError(f"witness needs equal local dimensions, got {rho.dim_a}x{rho.dim_b}")
    t = rho.tensor()
    comp = np.einsum("ijij->ij", t).real
    f = dft_matrix(d)  # column j is |F j>
    # p[j, k] = <Fj, Fk| rho |Fj, Fk>
    tf = np.einsum("aj,bk,abcd,cj,dk->jk", f.conj(), f.conj(), t, f, f, optimize=True).real
    return comp, tf


def correlator_from_blocks(comp, dft):
    """``<C_d>`` from the computational and Fourier probability blocks.

    ``dft[j, k]`` is the probability of outcome ``(F j, F k)``. Each block is
    normalized to unit sum first.
    """
    comp = np.asarray(comp, dtype=float)
    dft = np.asarray(dft, dtype=float)
    if comp.ndim != 2 or comp.shape != dft.shape or comp.shape[0] != comp.shape[1]:
        raise ShapeError(f"need two square blocks of equal size, got {comp.shape} and {dft.shape}")
    d = comp.shape[0]
    if comp.sum() <= 0 or dft.sum() <= 0:
        raise DomainError("probability blocks must have positive sum")
    comp = comp / comp.sum()
    dft = dft / dft.sum()
    j = np.arange(d)
    return float(np.trace(comp) + dft[j, (-j) % d].sum())


def dft_correlator(rho):
    return correlator_from_blocks(*_blocks_from_state(rho))


def dft_certify(c, d):
    """Largest ``r`` in ``[1, d]`` with ``c > 1 + (r - 1)/d`` (1 if none)."""
    if not (0.0 <= c <= 2.0 + 1e-12):
        raise DomainError(f"<C_d> must lie in [0, 2], got {c}")
    best = 1
    for r in range(1, d + 1):
        if c > 1 + (r - 1) / d:
            best = r
    return best


@dataclass(frozen=True)
class ScramblingTrial:
    trial: int
    dft_value: float
    dft_certified: int
    trace_norm: float
    tracenorm_certified: int
    randomized_certified: int
    s2: float
    s4: float

    def to_dict(self):
        return dict(self.__dict__)


def scrambling_comparison(rho, n_trials, phase_range, stream, n_settings=20000, k_sigma=2.0, observable=None, grid_size=512):
    """Apply fresh local random phases per trial and certify with both methods.

    The randomized-measurement route uses ``n_settings`` exact correlators
    with its own seeded unitaries per trial.
    """
    if n_trials < 1:
        raise DomainError("n_trials must be >= 1")
    d = rho.dim_a
    obs = observable or Observable.default(d)
    curves = boundary_curves(d, grid_size)
    rows = []
    for t in range(n_trials):
        da = random_phase_unitary(d, stream.at(t).child(0), phase_range)
        db = random_phase_unitary(d, stream.at(t).child(1), phase_range)
        noisy = apply_local(rho, da, db)
        c = dft_correlator(noisy)
        tn = trace_norm(cross_correlation(noisy))
        xs = simulate_correlators(noisy, n_settings, seed=_trial_seed(stream, t), observable=obs)
        est = estimate_moments(xs, d)
        rep = certify_point(est, d, curves, k_sigma)
        rows.append(
            ScramblingTrial(t, c, dft_certify(min(c, 2.0), d), tn, certify_from_tracenorm(tn, d), rep.certified_r, est.s2, est.s4)
        )
    return rows


def _trial_seed(stream, t):
    return int(stream.at(t).child(2).generator().integers(0, 2**63 - 1))

