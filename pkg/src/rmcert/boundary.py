"""Schmidt-number regions in the (S2, S4) plane.

For Schmidt number ``r`` the trace-norm criterion restricts the singular
values of the correlation matrix to ``sum(eps) <= C = r - 1/d``. With
``S4 = (S2^2 + 2 sum(eps^4)) / 3`` the lower boundary of the reachable region is

    s4_min(S2) = min { (S2^2 + 2 sum eps^4) / 3 : eps >= 0, sum eps <= C, sum eps^2 = S2 }

over ``n = d^2 - 1`` components. Below ``S2 = C^2 / n`` the all-equal vector is
feasible and optimal. Above it the L1 constraint binds and the optimum has
``k = floor(C^2 / S2)`` components at a value ``a`` and one component at
``b <= a``. A point strictly below the r-th curve cannot come from a state of
Schmidt number <= r.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .correlation import batch_direct_moments, correlation_matrices
from .errors import DomainError
from .sampling import haar_unitaries

DEFAULT_GRID = 512
REGION_TOL = 1e-7


def _bound(r, d):
    if not (1 <= r <= d):
        raise DomainError(f"Schmidt number r={r} outside [1, {d}]")
    return r - 1.0 / d


def two_level_solution(s2, r, d):
    """Optimal singular values as ``(k, a, b)``: k entries equal to ``a``,
    one entry ``b`` (possibly 0), rest zero. ``None`` if ``s2`` is infeasible."""
    n = d * d - 1
    c = _bound(r, d)
    if s2 < 0 or s2 > c * c * (1 + 1e-12):
        return None
    if s2 == 0:
        return n, 0.0, 0.0
    if s2 * n <= c * c:
        # L1 constraint slack: spread evenly over all n components
        return n, float(np.sqrt(s2 / n)), 0.0
    k = int(np.floor(c * c / s2))
    k = min(max(k, 1), n - 1)
    disc = max(k * (k + 1) * s2 - k * c * c, 0.0)
    a = (c * k + np.sqrt(disc)) / (k * (k + 1))
    b = max(c - k * a, 0.0)
    return k, float(a), float(b)


def _polish(s2, r, d, eps0):
    """Local SLSQP from the two-level candidate; returns the better feasible one."""
    c = _bound(r, d)
    cons = [
        {"type": "eq", "fun": lambda e: np.sum(e * e) - s2, "jac": lambda e: 2 * e},
        {"type": "ineq", "fun": lambda e: c - np.sum(e), "jac": lambda e: -np.ones_like(e)},
    ]
    res = minimize(
        lambda e: np.sum(e**4),
        eps0,
        jac=lambda e: 4 * e**3,
        method="SLSQP",
        bounds=[(0, None)] * len(eps0),
        constraints=cons,
        options={"ftol": 1e-15, "maxiter": 200},
    )
    e = np.clip(res.x, 0, None)
    feasible = abs(np.sum(e * e) - s2) < 1e-12 and np.sum(e) <= c + 1e-12
    if feasible and np.sum(e**4) < np.sum(eps0**4) - 1e-14:
        return e
    return eps0


def s4_min(s2, r, d, polish=False):
    """Lower boundary value at ``s2``; ``inf`` where ``s2 > (r - 1/d)^2``."""
    sol = two_level_solution(s2, r, d)
    if sol is None:
        return float("inf")
    k, a, b = sol
    q = k * a**4 + b**4
    if polish and k < d * d - 1:
        eps = np.zeros(d * d - 1)
        eps[:k] = a
        eps[k] = b
        q = float(np.sum(_polish(s2, r, d, eps) ** 4))
    return float((s2 * s2 + 2 * q) / 3)


def s4_min_array(s2, r, d):
    """Vectorized :func:`s4_min` (no polish); ``inf`` past ``(r - 1/d)^2``."""
    s2 = np.asarray(s2, dtype=float)
    n = d * d - 1
    c = _bound(r, d)
    x = np.clip(s2, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.clip(np.floor(c * c / np.where(x > 0, x, 1.0)), 1, n - 1)
        disc = np.clip(k * (k + 1) * x - k * c * c, 0.0, None)
        a = (c * k + np.sqrt(disc)) / (k * (k + 1))
        b = np.clip(c - k * a, 0.0, None)
    q = np.where(x * n <= c * c, x * x / n, k * a**4 + b**4)
    out = (x * x + 2 * q) / 3
    return np.where(s2 > c * c * (1 + 1e-12), np.inf, out)


def s2_grid(r, d, size=DEFAULT_GRID):
    """Strictly increasing grid on ``(0, C^2]``.

    Geometric near zero, dense and linear up to the physical range
    ``S2 <= 1``, coarser beyond; the kinks ``C^2 / k`` replace their nearest
    grid points so linear interpolation is exact at them.
    """
    if size < 2:
        raise DomainError("grid_size must be >= 2")
    n = d * d - 1
    cmax = _bound(r, d) ** 2
    top = min(cmax, 1.0)
    n_geo = max(size // 8, 1)
    n_tail = size // 8 if cmax > top else 0
    n_lin = size - n_geo - n_tail
    lo = top * 1e-3
    pts = [np.geomspace(top * 1e-6, lo, n_geo, endpoint=False), np.linspace(lo, top, n_lin)]
    if n_tail:
        pts.append(np.linspace(top, cmax, n_tail + 1)[1:])
    grid = np.concatenate(pts)
    for k in range(1, n + 1):
        knot = cmax / k
        j = int(np.argmin(np.abs(grid - knot)))
        lo_ok = j == 0 or grid[j - 1] < knot
        hi_ok = j == len(grid) - 1 or grid[j + 1] > knot
        if lo_ok and hi_ok:
            grid[j] = knot
    grid[-1] = cmax
    return grid


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    r: int
    d: int
    s2: np.ndarray = field(repr=False)
    s4_min: np.ndarray = field(repr=False)

    @property
    def s2_max(self):
        return float(self.s2[-1])

    def __call__(self, s2):
        """Exact boundary value (closed form); ``inf`` past ``C^2``.

        Used for classification. Chords of the tabulated grid lie above the
        curve, so :meth:`interpolate` would overstate the boundary between
        grid points.
        """
        return s4_min_array(s2, self.r, self.d)

    def interpolate(self, s2):
        """Linear interpolation of the grid; ``(0, 0)`` anchors the left end, ``inf`` past ``C^2``."""
        s2 = np.asarray(s2, dtype=float)
        x = np.concatenate([[0.0], self.s2])
        y = np.concatenate([[0.0], self.s4_min])
        out = np.interp(s2, x, y)
        return np.where(s2 > self.s2_max * (1 + 1e-12), np.inf, out)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s2", "s4_min"])
            for a, b in zip(self.s2, self.s4_min):
                w.writerow([repr(float(a)), repr(float(b))])
        return path


def boundary_curve(r, d, grid_size=DEFAULT_GRID, polish=False):
    _bound(r, d)
    grid = s2_grid(r, d, grid_size)
    vals = np.array([s4_min(s, r, d, polish=polish) for s in grid])
    grid.setflags(write=False)
    vals.setflags(write=False)
    return BoundaryCurve(int(r), int(d), grid, vals)


def boundary_curves(d, grid_size=DEFAULT_GRID):
    """Curves for r = 1 .. d-1 (the ones that can certify something)."""
    return [boundary_curve(r, d, grid_size) for r in range(1, d)]


@dataclass(frozen=True)
class CertificationReport:
    certified_r: int
    cleared_curves: tuple
    k_sigma: float
    point: tuple
    sigmas: tuple
    rule: str
    flags: tuple = ()

    def to_dict(self):
        return {
            "certified_r": self.certified_r,
            "cleared_curves": list(self.cleared_curves),
            "k_sigma": self.k_sigma,
            "point": list(self.point),
            "sigmas": list(self.sigmas),
            "rule": self.rule,
            "flags": list(self.flags),
        }


RULES = ("ellipse", "box", "corner")
_ELLIPSE_POINTS = 4001


def _uncertainty_region(est, k, rule):
    """Points whose s4 must all lie below the curve (upper envelope of the region)."""
    s2, s4 = est.s2, est.s4
    e2, e4 = k * est.sigma_s2, k * est.sigma_s4
    if rule == "box":
        # curves are nondecreasing, so the left end of the top edge is binding
        return np.array([s2 - e2]), np.array([s4 + e4])
    if rule == "corner":
        return np.array([s2 + e2]), np.array([s4 + e4])
    if e2 == 0.0:
        return np.array([s2]), np.array([s4 + e4])
    rho = 0.0
    if est.sigma_s2 > 0 and est.sigma_s4 > 0:
        rho = float(np.clip(est.cov_s2_s4 / (est.sigma_s2 * est.sigma_s4), -1.0, 1.0))
    u = np.linspace(-1.0, 1.0, _ELLIPSE_POINTS)
    return s2 + e2 * u, s4 + e4 * (rho * u + np.sqrt(max(1 - rho * rho, 0.0)) * np.sqrt(1 - u * u))


def certify_point(est, d, curves, k_sigma=2.0, rule="ellipse"):
    """Certified Schmidt number ``1 + max{r : uncertainty region strictly below curve r}``.

    ``rule`` sets the uncertainty region of half-width ``k_sigma`` standard
    deviations:

    * ``"ellipse"`` (default): the confidence ellipse built from ``sigma_s2``,
      ``sigma_s4`` and their covariance. Monotone in ``k_sigma``.
    * ``"box"``: the axis-aligned rectangle; only its top-left corner matters.
    * ``"corner"``: compare the top edge with the curve at the right end of the
      rectangle, the most favourable s2. Not monotone in ``k_sigma``.

    Points on a curve do not clear it.
    """
    if rule not in RULES:
        raise DomainError(f"unknown rule {rule!r}; choose from {RULES}")
    if k_sigma < 0:
        raise DomainError("k_sigma must be >= 0")
    xs, ys = _uncertainty_region(est, k_sigma, rule)
    cleared, flags = [], []
    for curve in sorted(curves, key=lambda c: c.r):
        if curve.d != d:
            raise DomainError(f"curve for d={curve.d} used with d={d}")
        beyond = xs > curve.s2_max
        if np.any(beyond):
            flags.append(f"r={curve.r}: region reaches s2 > {curve.s2_max:.6g}, unreachable for Schmidt number <= {curve.r}")
        if np.all(ys < curve(np.clip(xs, 0.0, None))):
            cleared.append(curve.r)
    best = max(cleared, default=0)
    return CertificationReport(
        certified_r=int(best + 1),
        cleared_curves=tuple(cleared),
        k_sigma=float(k_sigma),
        point=(est.s2, est.s4),
        sigmas=(est.sigma_s2, est.sigma_s4),
        rule=rule,
        flags=tuple(flags),
    )


def random_schmidt_rank_states(d, r, n, rng, max_terms=4):
    """Mixtures of random pure states with Schmidt rank <= r.

    Each pure component has random Schmidt coefficients (a share of them
    exactly flat, which sits on the extremal boundary) and Haar local bases.
    Returns density matrices of shape ``(n, d*d, d*d)``.
    """
    rhos = np.zeros((n, d * d, d * d), dtype=complex)
    terms = rng.integers(1, max_terms + 1, size=n)
    pure_share = rng.random(n) < 0.5
    terms[pure_share] = 1
    for t in range(1, max_terms + 1):
        idx = np.nonzero(terms == t)[0]
        if idx.size == 0:
            continue
        weights = rng.dirichlet(np.ones(t), size=idx.size)
        for j in range(t):
            m = idx.size
            coef = rng.dirichlet(np.full(r, rng.choice([0.3, 1.0, 5.0])), size=m)
            flat = rng.random(m) < 0.2
            coef[flat] = 1.0 / r
            ua = haar_unitaries(d, m, rng)[:, :, :r]
            ub = haar_unitaries(d, m, rng)[:, :, :r]
            psi = np.einsum("sk,sik,sjk->sij", np.sqrt(coef), ua, ub).reshape(m, d * d)
            rhos[idx] += weights[:, j, None, None] * np.einsum("si,sj->sij", psi, psi.conj())
    return rhos


def region_check(r, d, n_samples, stream, tol=REGION_TOL, include_mes=True, batch=2000):
    """Count random states of Schmidt number <= r whose moments fall below the r-curve.

    Compares against the exact boundary (no grid interpolation). The contract
    is a count of zero.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    _bound(r, d)
    rng = stream.generator()
    violations = 0
    done = 0
    while done < n_samples:
        m = min(batch, n_samples - done)
        rhos = random_schmidt_rank_states(d, r, m, rng)
        if include_mes and done == 0:
            psi = np.zeros((d, d))
            psi[np.arange(r), np.arange(r)] = 1 / np.sqrt(r)
            rhos[0] = np.outer(psi.reshape(-1), psi.reshape(-1))
        s2, s4 = batch_direct_moments(correlation_matrices(rhos, d).real)
        bound = s4_min_array(s2, r, d)
        with np.errstate(invalid="ignore"):
            violations += int(np.sum(~(s4 >= bound - tol)))
        done += m
    return violations
