"""The Markov transform of a covariance matrix and related diagnostics.

For a covariance matrix ``K`` on ordered points the Markov transform keeps
the diagonal and first off-diagonal of ``K`` and fills every other entry by
chaining successive regression coefficients::

    K^M[j, k] = K[j, j] * beta[j+1] * ... * beta[k],   j <= k,
    beta[l] = K[l-1, l] / K[l-1, l-1].

It is the Gaussian information projection of ``K`` onto covariances with a
tridiagonal inverse, and the covariance of the AR(1) chain with those links.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateKernelError, NumericalError

__all__ = [
    "MarkovFactorization",
    "ar1_covariance",
    "chain_matrix",
    "endpoint_identity_residual",
    "gaussian_kl",
    "markov_transform",
    "misspecification",
]


@dataclass(frozen=True, eq=False)
class MarkovFactorization:
    """Nodal variances and link coefficients of a Markov covariance.

    ``betas[l]`` links point ``l`` to point ``l + 1`` (0-based), so
    ``len(betas) == len(variances) - 1``.
    """

    variances: np.ndarray
    betas: np.ndarray
    # exact first off-diagonal, when known; keeps the band bit-exact
    band: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.variances, dtype=float).ravel()
        b = np.asarray(self.betas, dtype=float).ravel()
        if b.size != max(v.size - 1, 0):
            raise ValueError("need exactly one beta per consecutive pair of points")
        if np.any(v <= 0):
            raise DegenerateKernelError("nodal variances must be strictly positive")
        object.__setattr__(self, "variances", v)
        object.__setattr__(self, "betas", b)

    @property
    def p(self) -> int:
        return self.variances.size

    def matrix(self) -> np.ndarray:
        """Reconstructed Markov covariance matrix."""
        return chain_matrix(self.variances, self.betas, self.band)

    def innovation_variances(self) -> np.ndarray:
        """``var[l+1] - beta[l]**2 var[l]``; negative values signal inconsistency."""
        return self.variances[1:] - self.betas ** 2 * self.variances[:-1]


def chain_matrix(variances, betas, band=None) -> np.ndarray:
    """Fill ``sigma2[j] * prod(beta[j..k-1])`` on the upper triangle and mirror it.

    If ``band`` is given it is used verbatim as the first off-diagonal
    instead of ``sigma2[j] * beta[j]``.
    """
    v = np.asarray(variances, dtype=float)
    b = np.asarray(betas, dtype=float)
    p = v.size
    M = np.diag(v).astype(float)
    if p == 1:
        return M
    first = v[:-1] * b if band is None else np.asarray(band, dtype=float)
    idx = np.arange(p - 1)
    M[idx, idx + 1] = first
    for d in range(2, p):
        j = np.arange(p - d)
        M[j, j + d] = M[j, j + d - 1] * b[j + d - 1]
    iu = np.triu_indices(p, 1)
    M[iu[1], iu[0]] = M[iu]
    return M


def _check_diagonal(K):
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("expected a square matrix")
    d = np.diag(K)
    bad = np.flatnonzero(~(d > 0))
    if bad.size:
        raise DegenerateKernelError(
            f"diagonal entry {bad[0]} is {d[bad[0]]!r}; the Markov transform needs a "
            "strictly positive diagonal")
    return K


def markov_transform(K) -> tuple[MarkovFactorization, np.ndarray]:
    """Markov transform of a covariance matrix.

    Parameters
    ----------
    K : (p, p) array_like
        Symmetric matrix with strictly positive diagonal.

    Returns
    -------
    factorization : MarkovFactorization
        Nodal variances ``diag(K)`` and links ``K[l, l+1] / K[l, l]``.
    KM : (p, p) ndarray
        The transform. Its diagonal and first off-diagonal equal those of
        ``K`` bit for bit.
    """
    K = _check_diagonal(K)
    d = np.diag(K).copy()
    band = np.diag(K, 1).copy()
    fact = MarkovFactorization(d, band / d[:-1], band)
    return fact, fact.matrix()


def ar1_covariance(factorization: MarkovFactorization, tol: float = 1e-10) -> np.ndarray:
    """Covariance of the AR(1) chain ``Z[l+1] = beta[l] Z[l] + eps[l+1]``.

    ``Z[0]`` has variance ``variances[0]`` and the innovations have variances
    ``variances[l+1] - beta[l]**2 variances[l]``; values down to ``-tol``
    (relative to the nodal variance) are clamped to zero, anything lower
    raises :class:`NumericalError`.
    """
    v, b = factorization.variances, factorization.betas
    p = v.size
    innov = factorization.innovation_variances()
    bad = np.flatnonzero(innov < -tol * np.maximum(v[1:], 1.0))
    if bad.size:
        raise NumericalError(
            f"negative innovation variance {innov[bad[0]]:.3e} at link {bad[0]}; "
            "factorization is not a valid covariance")
    innov = np.maximum(innov, 0.0)
    C = np.zeros((p, p))
    C[0, 0] = v[0]
    for l in range(p - 1):
        C[: l + 1, l + 1] = b[l] * C[: l + 1, l]
        C[l + 1, l + 1] = b[l] ** 2 * C[l, l] + innov[l]
    iu = np.triu_indices(p, 1)
    C[iu[1], iu[0]] = C[iu]
    return C


def misspecification(K) -> tuple[float, float]:
    """Squared Frobenius distance from ``K`` to its Markov transform.

    Computed from correlations as
    ``2 sum_{j<k} K_jj K_kk (rho_jk - prod_{l=j}^{k-1} rho_{l,l+1})**2``.

    Returns
    -------
    distance : float
        ``||K - K^M||_F**2``.
    ratio : float
        ``distance / ||K||_F**2``, a scale-free goodness-of-fit measure.
    """
    K = _check_diagonal(K)
    d = np.diag(K)
    sd = np.sqrt(d)
    R = K / np.outer(sd, sd)
    p = d.size
    total = 0.0
    if p > 2:
        link = np.diag(R, 1)
        # chained[j, k] = prod_{l=j}^{k-1} rho_{l,l+1}, built diagonal by diagonal
        chained = np.ones((p, p))
        idx = np.arange(p - 1)
        chained[idx, idx + 1] = link
        for dd in range(2, p):
            j = np.arange(p - dd)
            chained[j, j + dd] = chained[j, j + dd - 1] * link[j + dd - 1]
        iu = np.triu_indices(p, 2)
        total = 2.0 * float(np.sum(d[iu[0]] * d[iu[1]] * (R[iu] - chained[iu]) ** 2))
    return total, total / float(np.sum(K * K))


def endpoint_identity_residual(K) -> np.ndarray:
    """``K[0, -1] - K[0, u] K[u, -1] / K[u, u]`` for every interior ``u``.

    A Markov covariance gives the zero vector.
    """
    K = _check_diagonal(K)
    if K.shape[0] < 3:
        raise ValueError("endpoint identity needs at least 3 points")
    inner = slice(1, -1)
    return K[0, -1] - K[0, inner] * K[inner, -1] / np.diag(K)[inner]


def gaussian_kl(K, S) -> float:
    """``KL(N(0, K) || N(0, S))``."""
    K = np.asarray(K, dtype=float)
    S = np.asarray(S, dtype=float)
    p = K.shape[0]
    L = np.linalg.cholesky(S)
    A = np.linalg.solve(L, np.linalg.solve(L, K).T)
    _, logdet_k = np.linalg.slogdet(K)
    logdet_s = 2.0 * np.sum(np.log(np.diag(L)))
    return 0.5 * (np.trace(A) - p + logdet_s - logdet_k)
