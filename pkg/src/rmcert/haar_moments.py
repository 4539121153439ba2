"""Exact Haar averages of randomized correlators via fourth-order Weingarten calculus.

For a traceless observable ``M`` the rotated operator ``U M U^dagger`` has
Bloch coordinates ``a_k = Tr(g_k U M U^dagger)``. Its fourth moment tensor is

    E[a_i a_j a_k a_l] = (alpha / 3) (d_ij d_kl + d_ik d_jl + d_il d_jk) + beta Q_ijkl

with ``Q`` the symmetrized ``Re Tr(g_i g_j g_k g_l)``. Only ``beta == 0`` gives
the rotation-invariant (sphere-like) fourth moment the moment estimator
assumes; :func:`isotropy_ratio` gives the ``Tr(M^4) / Tr(M^2)^2`` that achieves it.
"""

from functools import lru_cache
from itertools import permutations

import numpy as np

from .qudit import gellmann_basis

_PERMS = list(permutations(range(4)))


def _cycle_type(p):
    seen, out = set(), []
    for i in range(len(p)):
        if i in seen:
            continue
        n, j = 0, i
        while j not in seen:
            seen.add(j)
            j = p[j]
            n += 1
        out.append(n)
    return tuple(sorted(out))


def _compose(a, b):
    return tuple(a[b[i]] for i in range(len(b)))


def _inverse(a):
    out = [0] * len(a)
    for i, x in enumerate(a):
        out[x] = i
    return tuple(out)


@lru_cache(maxsize=None)
def _class_weights(d):
    """Weingarten weights summed over (cycle type of sigma, cycle type of tau).

    Restricted to the classes (2,2) and (4,) that survive for traceless
    operators. The pseudo-inverse keeps the formula valid for d < 4.
    """
    gram = np.array(
        [[float(d) ** len(_cycle_type(_compose(_inverse(s), t))) for t in _PERMS] for s in _PERMS]
    )
    wg = np.linalg.pinv(gram)
    acc = {}
    for i, s in enumerate(_PERMS):
        for j, t in enumerate(_PERMS):
            key = (_cycle_type(s), _cycle_type(t))
            acc[key] = acc.get(key, 0.0) + wg[i, j]
    c22, c4 = (2, 2), (4,)
    return acc[(c22, c22)], acc[(c22, c4)], acc[(c4, c22)], acc[(c4, c4)]


def fourth_moment_coefficients(d, eigenvalues):
    """``(alpha, beta)`` with ``E[Tr(A U M U^dag)^4] = alpha Tr(A^2)^2 + beta Tr(A^4)``
    for traceless Hermitian ``A``."""
    lam = np.asarray(eigenvalues, dtype=float)
    p = float(np.sum(lam**2) ** 2)
    q = float(np.sum(lam**4))
    w22_22, w22_4, w4_22, w4_4 = _class_weights(int(d))
    return p * w22_22 + q * w22_4, p * w4_22 + q * w4_4


def isotropy_ratio(d):
    """``Tr(M^4) / Tr(M^2)^2`` for which the fourth moment is rotation invariant."""
    _, w22_4, w4_22, w4_4 = _class_weights(int(d))
    return -w4_22 / w4_4


@lru_cache(maxsize=None)
def _sym_trace4(d):
    g = gellmann_basis(d).generators
    n = len(g)
    pairs = np.einsum("iab,jbc->ijac", g, g).reshape(n * n, d * d)
    # T[i,j,k,l] = Tr(g_i g_j g_k g_l)
    t = (pairs @ pairs.reshape(n, n, d, d).transpose(0, 1, 3, 2).reshape(n * n, d * d).T).real
    t = t.reshape(n, n, n, n)
    q = sum(t.transpose(p) for p in _PERMS) / 24.0
    q.setflags(write=False)
    return q


@lru_cache(maxsize=None)
def _sym_delta(n):
    e = np.eye(n)
    s = np.einsum("ij,kl->ijkl", e, e) + np.einsum("ik,jl->ijkl", e, e) + np.einsum("il,jk->ijkl", e, e)
    s.setflags(write=False)
    return s


def bloch_fourth_moment_tensor(d, eigenvalues):
    """``E[a (x) a (x) a (x) a]`` for ``a_k = Tr(g_k U M U^dag)``, U Haar."""
    alpha, beta = fourth_moment_coefficients(d, eigenvalues)
    return alpha / 3.0 * _sym_delta(d * d - 1) + beta * _sym_trace4(d)


def expected_correlator_moments(X, eigenvalues, eigenvalues_b=None):
    """Exact ``(E[x^2], E[x^4])`` over independent Haar ``U_a, U_b``.

    ``X`` is the real cross-correlation matrix of the state (the local Bloch
    vectors drop out because the observables are traceless).
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    d = int(round(np.sqrt(n + 1)))
    lam_a = np.asarray(eigenvalues, dtype=float)
    lam_b = lam_a if eigenvalues_b is None else np.asarray(eigenvalues_b, dtype=float)
    m2 = np.sum(lam_a**2) * np.sum(lam_b**2) / n**2 * np.sum(X * X)
    ta = bloch_fourth_moment_tensor(d, lam_a)
    tb = ta if eigenvalues_b is None else bloch_fourth_moment_tensor(d, lam_b)
    y = np.einsum("ijkl,ip->pjkl", ta, X)
    y = np.einsum("pjkl,jq->pqkl", y, X)
    y = np.einsum("pqkl,kr->pqrl", y, X)
    y = np.einsum("pqrl,ls->pqrs", y, X)
    return float(m2), float(np.sum(y * tb))
