"""Randomized-measurement correlators and the (S2, S4) moment estimator.

A setting applies ``U_a (x) U_b`` to the state and detects in the
computational basis; the correlator of that setting is

    x = sum_{m,n} lam_m lam_n p(m, n),   p(m, n) = <mn|(U_a (x) U_b) rho (U_a (x) U_b)^dag|mn>

Second and fourth moments of ``x`` over Haar settings map to the Bloch
moments of :mod:`rmcert.correlation` through

    S2 = (d+1)^2 R2,   S4 = (d+1)^2 (d^2+1)^2 / (9 (d-1)^2) R4 / kappa4

The first relation is exact whenever ``sum(lam) == 0`` and
``sum(lam**2) == d - 1``. The second is exact for every state only when the
observable's fourth moment is rotation invariant (always true for d <= 3,
and for the default :meth:`Observable.isotropic` at any d); ``kappa4``
absorbs the residual scale for other observables.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .correlation import cross_correlation, direct_moments
from .errors import CalibrationError, DimensionError, DomainError, EmptyDataError, NumericError, ObservableError, ShapeError
from .haar_moments import isotropy_ratio
from .qudit import DensityMatrix
from .sampling import (
    TAG_COUNTS,
    TAG_PHASE_A,
    TAG_PHASE_B,
    TAG_UA,
    TAG_UB,
    SeededStream,
    haar_unitaries,
    random_phase_many,
    sample_haar_many,
)

OBS_TOL = 1e-9
CHUNK = 4096


def default_workers():
    try:
        return max(1, int(os.environ.get("RMCERT_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class Observable:
    """Outcome values ``lam_m`` assigned to the d detector outputs."""

    d: int
    eigenvalues: np.ndarray

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=float).reshape(-1)
        if lam.size != self.d:
            raise ObservableError(f"need {self.d} eigenvalues, got {lam.size}")
        if abs(lam.sum()) > OBS_TOL:
            raise ObservableError(f"observable must be traceless, sum = {lam.sum():.3g}")
        if abs(np.sum(lam**2) - (self.d - 1)) > OBS_TOL * self.d:
            raise ObservableError(f"need sum(lam^2) = d-1 = {self.d - 1}, got {np.sum(lam ** 2):.6g}")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)

    @staticmethod
    def _scaled(d, v):
        v = np.asarray(v, dtype=float)
        return Observable(d, v * np.sqrt((d - 1) / np.sum(v**2)))

    @classmethod
    def linear(cls, d):
        """``lam_m`` proportional to ``m - (d-1)/2``."""
        if d < 2:
            raise DimensionError(f"d must be >= 2, got {d}")
        return cls._scaled(d, np.arange(d) - (d - 1) / 2)

    @classmethod
    def isotropic(cls, d):
        """Odd power deformation ``sign(u)|u|^t`` of the linear spectrum with
        ``t`` chosen so ``Tr(M^4)/Tr(M^2)^2`` hits :func:`isotropy_ratio`.

        For d <= 3 every traceless observable is already isotropic and the
        linear one is returned.
        """
        if d < 2:
            raise DimensionError(f"d must be >= 2, got {d}")
        if d <= 3:
            return cls.linear(d)
        u = np.arange(d) - (d - 1) / 2
        target = isotropy_ratio(d)

        def excess(t):
            v = np.sign(u) * np.abs(u) ** t
            return np.sum(v**4) / np.sum(v**2) ** 2 - target

        t = brentq(excess, 1e-3, 60.0, xtol=1e-14)
        return cls._scaled(d, np.sign(u) * np.abs(u) ** t)

    @classmethod
    def default(cls, d):
        return cls.isotropic(d)

    @classmethod
    def from_spec(cls, d, spec):
        if spec is None or spec == "isotropic":
            return cls.isotropic(d)
        if spec == "linear":
            return cls.linear(d)
        if isinstance(spec, str):
            raise ObservableError(f"unknown observable spec {spec!r}")
        return cls(d, spec)


@dataclass(frozen=True)
class SettingRecord:
    U_a: np.ndarray
    U_b: np.ndarray
    counts: np.ndarray = None
    x: float = None


@dataclass(frozen=True)
class MomentEstimate:
    s2: float
    s4: float
    sigma_s2: float
    sigma_s4: float
    n_tot: int
    kappa4: float = 1.0
    cov_s2_s4: float = 0.0

    def to_dict(self):
        return {
            "s2": self.s2,
            "s4": self.s4,
            "sigma_s2": self.sigma_s2,
            "sigma_s4": self.sigma_s4,
            "n_tot": self.n_tot,
            "kappa4": self.kappa4,
            "cov_s2_s4": self.cov_s2_s4,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            float(data["s2"]),
            float(data["s4"]),
            float(data["sigma_s2"]),
            float(data["sigma_s4"]),
            int(data["n_tot"]),
            float(data.get("kappa4", 1.0)),
            float(data.get("cov_s2_s4", 0.0)),
        )


def _check_setting(rho, ua, ub, obs):
    d = rho.dim_a
    if rho.dim_b != d or obs.d != d:
        raise ShapeError(f"state {rho.dim_a}x{rho.dim_b} and observable d={obs.d} disagree")
    if ua.shape[-2:] != (d, d) or ub.shape[-2:] != (d, d):
        raise ShapeError(f"unitaries must be {d}x{d}, got {ua.shape[-2:]}, {ub.shape[-2:]}")
    return d


def correlators(rho, ua, ub, observable):
    """Exact correlators for stacked settings ``ua, ub`` of shape ``(N, d, d)``.

    Uses ``x = Tr[rho (U_a^dag M U_a) (x) (U_b^dag M U_b)]``.
    """
    ua = np.asarray(ua)
    ub = np.asarray(ub)
    d = _check_setting(rho, ua, ub, observable)
    lam = observable.eigenvalues
    # R'[(j, l), (k, i)] = rho[i, j, k, l]
    rp = rho.tensor().transpose(1, 3, 2, 0).reshape(d * d, d * d)
    out = np.empty(len(ua))
    for s in range(0, len(ua), CHUNK):
        a, b = ua[s : s + CHUNK], ub[s : s + CHUNK]
        ma = np.einsum("ski,k,skj->sij", a.conj(), lam, a)  # U_a^dag M U_a
        mb = np.einsum("ski,k,skj->sij", b.conj(), lam, b)
        y = (ma.reshape(len(a), -1) @ rp.T).reshape(-1, d, d)
        out[s : s + CHUNK] = np.einsum("sjl,slj->s", y, mb).real
    return out


def correlator_exact(rho, ua, ub, observable):
    """Correlator of a single setting."""
    return float(correlators(rho, np.asarray(ua)[None], np.asarray(ub)[None], observable)[0])


def outcome_probabilities(rho, ua, ub):
    """``p[s, m, n]`` for stacked settings (detect after applying the unitaries)."""
    ua = np.asarray(ua)
    ub = np.asarray(ub)
    d = rho.dim_a
    t = rho.tensor()
    out = np.empty((len(ua), d, d))
    for s in range(0, len(ua), CHUNK):
        a, b = ua[s : s + CHUNK], ub[s : s + CHUNK]
        # amplitude-free form: p(m,n) = sum a[m,i] b[n,j] rho[i,j,k,l] conj(a[m,k]) conj(b[n,l])
        tmp = np.einsum("smi,ijkl->smjkl", a, t)
        tmp = np.einsum("smjkl,smk->smjl", tmp, a.conj())
        tmp = np.einsum("snj,smjl,snl->smn", b, tmp, b.conj())
        out[s : s + CHUNK] = tmp.real
    return out


def simulate_counts(rho, ua, ub, n_events, stream):
    """Multinomial coincidence counts for one setting."""
    if n_events < 1:
        raise DomainError(f"n_events must be >= 1, got {n_events}")
    p = outcome_probabilities(rho, np.asarray(ua)[None], np.asarray(ub)[None])[0]
    counts = _draw_counts(p, n_events, stream)
    return SettingRecord(np.asarray(ua), np.asarray(ub), counts=counts)


def _draw_counts(p, n_events, stream):
    total = p.sum()
    if abs(total - 1) > 1e-9:
        raise NumericError(f"outcome probabilities sum to {total:.12g}")
    flat = np.clip(p.reshape(-1), 0, None)
    flat = flat / flat.sum()
    return stream.generator().multinomial(int(n_events), flat).reshape(p.shape)


def x_from_counts(record_or_counts, observable):
    counts = getattr(record_or_counts, "counts", record_or_counts)
    if counts is None:
        raise EmptyDataError("record carries no counts")
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise EmptyDataError("counts total is zero")
    lam = observable.eigenvalues
    return float(lam @ counts @ lam / total)


def moment_t(xs, t):
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise EmptyDataError("no correlators")
    if t not in (2, 4, 6, 8):
        raise DomainError(f"moment order must be 2, 4, 6 or 8, got {t}")
    return float(np.mean(xs**t))


def moment_constants(d):
    """``(c2, c4)`` mapping correlator moments ``R2, R4`` to ``S2, S4``."""
    if d < 2:
        raise DimensionError(f"d must be >= 2, got {d}")
    c2 = (d + 1) ** 2
    c4 = (d + 1) ** 2 * (d * d + 1) ** 2 / (9 * (d - 1) ** 2)
    return float(c2), float(c4)


def moments_from_averages(r2, r4, r8, n_tot, d, r6=None, kappa4=1.0):
    """Estimator and finite-sample variances from averaged correlator powers.

    ``sigma^2[S2] = c2^2 (R4 - R2^2) / N`` and ``sigma^2[S4] = c4^2 (R8 - R4^2) / N``;
    ``r6`` (optional) adds the S2/S4 covariance ``c2 c4 (R6 - R2 R4) / N``.
    """
    c2, c4 = moment_constants(d)
    c4 = c4 / kappa4
    n = int(n_tot)
    var2 = max(c2 * c2 * (r4 - r2 * r2) / n, 0.0)
    var4 = max(c4 * c4 * (r8 - r4 * r4) / n, 0.0)
    cov = 0.0 if r6 is None else c2 * c4 * (r6 - r2 * r4) / n
    return MomentEstimate(c2 * r2, c4 * r4, float(np.sqrt(var2)), float(np.sqrt(var4)), n, float(kappa4), float(cov))


def estimate_moments(xs, d, kappa4=1.0):
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise EmptyDataError("no correlators")
    if d < 2:
        raise DimensionError(f"d must be >= 2, got {d}")
    x2 = xs * xs
    x4 = x2 * x2
    return moments_from_averages(
        x2.mean(), x4.mean(), (x4 * x4).mean(), xs.size, d, r6=(x4 * x2).mean(), kappa4=kappa4
    )


def setting_unitaries(d, seed, start, n, phase_range=None):
    """Settings ``start .. start+n-1`` of an experiment: stacked ``U_a, U_b``.

    With ``phase_range`` each party's unitary is multiplied on the right by a
    fresh diagonal random-phase unitary (phase noise hits the state before the
    measurement unitary).
    """
    base = SeededStream(seed)
    ids = range(start, start + n)
    ua = sample_haar_many(d, base.child(TAG_UA), ids)
    ub = sample_haar_many(d, base.child(TAG_UB), ids)
    if phase_range is not None:
        ua = ua * random_phase_many(d, base.child(TAG_PHASE_A), ids, phase_range)[:, None, :]
        ub = ub * random_phase_many(d, base.child(TAG_PHASE_B), ids, phase_range)[:, None, :]
    return ua, ub


def simulate_correlators(rho, n, seed, observable, phase_range=None, n_events=None, workers=None, chunk=2048):
    """Correlators for settings ``0 .. n-1`` of the seeded experiment.

    ``n_events=None`` gives exact expectations; otherwise each setting is
    estimated from multinomial counts. Work is split in fixed chunks, so the
    output does not depend on the worker count.
    """
    d = rho.dim_a
    starts = list(range(0, n, chunk))

    def run(start):
        m = min(chunk, n - start)
        ua, ub = setting_unitaries(d, seed, start, m, phase_range)
        if n_events is None:
            return correlators(rho, ua, ub, observable)
        p = outcome_probabilities(rho, ua, ub)
        cstream = SeededStream(seed).child(TAG_COUNTS)
        return np.array(
            [x_from_counts(_draw_counts(p[j], n_events, cstream.at(start + j)), observable) for j in range(m)]
        )

    workers = workers or default_workers()
    if workers == 1 or len(starts) == 1:
        parts = [run(s) for s in starts]
    else:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, starts))
    return np.concatenate(parts) if parts else np.empty(0)


@dataclass(frozen=True)
class Calibration:
    kappa2: float
    kappa4: float
    stderr2: float
    stderr4: float
    n_states: int
    n_samples: int


def calibrate_observable(observable, d, n_samples, stream, n_states=20):
    """Ratio of estimated to direct moments, averaged over random pure states.

    Uses exact correlators of ``n_samples`` Haar settings per reference state.
    Returns the mean ratios and their standard errors over states.
    """
    if not isinstance(observable, Observable):
        try:
            observable = Observable(d, observable)
        except ObservableError as exc:
            raise CalibrationError(str(exc)) from exc
    if observable.d != d:
        raise CalibrationError(f"observable is for d={observable.d}, not {d}")
    if n_states < 2 or n_samples < 1:
        raise CalibrationError("need at least 2 reference states and 1 sample")
    rng = stream.generator()
    k2, k4 = [], []
    for _ in range(n_states):
        psi = rng.standard_normal(d * d) + 1j * rng.standard_normal(d * d)
        rho = DensityMatrix.from_vector(psi, d, d)
        mp = direct_moments(cross_correlation(rho))
        ua = haar_unitaries(d, n_samples, rng)
        ub = haar_unitaries(d, n_samples, rng)
        est = estimate_moments(correlators(rho, ua, ub, observable), d)
        k2.append(est.s2 / mp.s2)
        k4.append(est.s4 / mp.s4)
    k2, k4 = np.array(k2), np.array(k4)
    return Calibration(
        float(k2.mean()),
        float(k4.mean()),
        float(k2.std(ddof=1) / np.sqrt(n_states)),
        float(k4.std(ddof=1) / np.sqrt(n_states)),
        n_states,
        n_samples,
    )


def batch_distribution(xs, d, batch_size, n_batches, stream=None, kappa4=1.0):
    """``(S2, S4)`` of consecutive disjoint batches, shape ``(n_batches, 2)``.

    When more batches are requested than the data holds, further passes use
    seeded reshuffles of ``xs``.
    """
    xs = np.asarray(xs, dtype=float)
    if batch_size <= 0:
        raise DomainError("batch_size must be positive")
    if xs.size < batch_size:
        raise DomainError(f"need at least batch_size={batch_size} correlators, have {xs.size}")
    per_pass = xs.size // batch_size
    rng = (stream or SeededStream(0)).generator()
    pieces, have, order = [], 0, xs
    while have < n_batches:
        take = min(per_pass, n_batches - have)
        pieces.append(order[: take * batch_size].reshape(take, batch_size))
        have += take
        order = xs[rng.permutation(xs.size)]
    blocks = np.concatenate(pieces) if pieces else np.empty((0, batch_size))
    c2, c4 = moment_constants(d)
    b2 = blocks * blocks
    return np.column_stack([c2 * b2.mean(1), c4 / kappa4 * (b2 * b2).mean(1)])
