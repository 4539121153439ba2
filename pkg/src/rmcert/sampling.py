"""Seeded Haar sampling, random-phase channels and the dephasing ensemble.

All randomness comes from :class:`SeededStream`. A stream is addressed by a
seed, a per-unitary counter and an optional tag path, so any draw can be
reproduced without replaying the draws before it.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, DimensionError
from .qudit import DensityMatrix

# Tags separating the independent families of draws hanging off one setting.
TAG_UA, TAG_UB, TAG_PHASE_A, TAG_PHASE_B, TAG_COUNTS = range(5)


@dataclass(frozen=True)
class SeededStream:
    seed: int
    stream_id: int = 0
    tag: tuple = ()

    def generator(self):
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),) + tuple(self.tag))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys):
        """Stream with ``keys`` appended to the tag path."""
        return SeededStream(self.seed, self.stream_id, tuple(self.tag) + tuple(int(k) for k in keys))

    def at(self, stream_id):
        return SeededStream(self.seed, int(stream_id), self.tag)


def _ginibre_to_haar(z):
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    ph = diag / np.abs(diag)
    return q * ph[..., None, :]


def haar_unitaries(d, n, rng):
    """``n`` Haar unitaries from a single numpy ``Generator`` (bulk helper)."""
    z = (rng.standard_normal((n, d, d)) + 1j * rng.standard_normal((n, d, d))) / np.sqrt(2)
    return _ginibre_to_haar(z)


def sample_haar(d, stream):
    """Haar-random ``d x d`` unitary: QR of a complex Ginibre matrix with the
    R-diagonal phases divided out."""
    if d < 2:
        raise DimensionError(f"d must be >= 2, got {d}")
    return sample_haar_many(d, stream, [stream.stream_id])[0]


def sample_haar_many(d, stream, stream_ids):
    """One unitary per stream id; identical to calling :func:`sample_haar` on each."""
    if d < 2:
        raise DimensionError(f"d must be >= 2, got {d}")
    ids = list(stream_ids)
    z = np.empty((len(ids), d, d), dtype=complex)
    for j, sid in enumerate(ids):
        g = stream.at(sid).generator()
        z[j] = (g.standard_normal((d, d)) + 1j * g.standard_normal((d, d))) / np.sqrt(2)
    return _ginibre_to_haar(z)


def _phase_bounds(phase_range):
    lo, hi = (float(v) for v in phase_range)
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
        raise DomainError(f"empty or invalid phase range [{lo}, {hi}]")
    return lo, hi


def random_phases(d, stream, phase_range):
    lo, hi = _phase_bounds(phase_range)
    return stream.generator().uniform(lo, hi, size=d)


def random_phase_unitary(d, stream, phase_range=(0.0, 2 * np.pi)):
    """Diagonal unitary ``sum_i exp(i phi_i) |i><i|`` with uniform phases."""
    if d < 2:
        raise DimensionError(f"d must be >= 2, got {d}")
    return np.diag(np.exp(1j * random_phases(d, stream, phase_range)))


def random_phase_many(d, stream, stream_ids, phase_range):
    """Stacked diagonal phase vectors ``exp(i phi)``, shape ``(len(ids), d)``."""
    lo, hi = _phase_bounds(phase_range)
    out = np.empty((len(stream_ids), d), dtype=complex)
    for j, sid in enumerate(stream_ids):
        out[j] = np.exp(1j * stream.at(sid).generator().uniform(lo, hi, size=d))
    return out


def dephased_state(d, phimax, n, stream):
    """Equal mixture of ``n`` maximally entangled vectors with fluctuating phases.

    Member ``i`` is ``sum_k exp(i(phi_a[i,k] + phi_b[i,k])) |k>|k> / sqrt(d)`` with
    every phase uniform in ``[-phimax, phimax]``. The uniforms are drawn on
    ``[-1, 1]`` and scaled, so for a fixed stream the ensemble varies smoothly
    with ``phimax`` (common random numbers for fitting).
    """
    if d < 2:
        raise DimensionError(f"d must be >= 2, got {d}")
    if n < 1:
        raise DomainError(f"ensemble size must be >= 1, got {n}")
    if phimax < 0:
        raise DomainError(f"phimax must be >= 0, got {phimax}")
    g = stream.generator()
    u = g.uniform(-1.0, 1.0, size=(2, n, d))
    amp = np.exp(1j * phimax * (u[0] + u[1])) / np.sqrt(d)  # (n, d) amplitudes on |kk>
    inner = amp.T @ amp.conj() / n  # (d, d) block on span{|kk>}
    rho = np.zeros((d * d, d * d), dtype=complex)
    diag = np.arange(d) * (d + 1)
    rho[np.ix_(diag, diag)] = inner
    return DensityMatrix(rho, d, d)


@dataclass(frozen=True)
class PhiFit:
    phimax: float
    distance: float
    grid: np.ndarray
    distances: np.ndarray


def fit_phimax(target, unitaries, grid, d, stream, n=20000, observable=None, kappa4=1.0):
    """Grid search for the dephasing strength whose estimated moments are
    closest (Euclidean in the (S2, S4) plane) to ``target``.

    ``unitaries`` is a pair of stacked arrays ``(U_a, U_b)`` of shape
    ``(N, d, d)``; each candidate state is evaluated with exactly these settings.
    """
    from .randmeas import Observable, correlators, estimate_moments

    grid = np.asarray(list(grid), dtype=float)
    if grid.size == 0:
        raise DomainError("phimax grid is empty")
    ua, ub = (np.asarray(u) for u in unitaries)
    if len(ua) == 0 or len(ua) != len(ub):
        raise DomainError("need a nonempty, paired list of unitaries")
    obs = observable or Observable.default(d)
    t2, t4 = (target.s2, target.s4) if hasattr(target, "s2") else target
    dist = np.empty(grid.size)
    for i, phi in enumerate(grid):
        rho = dephased_state(d, phi, n, stream)
        est = estimate_moments(correlators(rho, ua, ub, obs), d, kappa4=kappa4)
        dist[i] = np.hypot(est.s2 - t2, est.s4 - t4)
    best = int(np.argmin(dist))
    return PhiFit(float(grid[best]), float(dist[best]), grid, dist)
