"""Independent reference computations used by several test modules."""

import numpy as np
from scipy import optimize


def random_pd(rng, p, ridge=0.5):
    G = rng.standard_normal((p, p))
    return G @ G.T + ridge * np.eye(p)


def _bidiag(theta, p):
    B = np.diag(np.exp(theta[:p]))
    B[np.arange(1, p), np.arange(p - 1)] = theta[p:]
    return B


def kl_projection_oracle(K):
    """Minimize KL(N(0,K) || N(0,S)) over S with tridiagonal inverse.

    The precision is parametrized as ``B B^T`` with ``B`` lower bidiagonal
    (log-diagonal), which covers every tridiagonal PD matrix.
    """
    p = K.shape[0]

    def f(theta):
        B = _bidiag(theta, p)
        P = B @ B.T
        _, logdet = np.linalg.slogdet(P)
        val = 0.5 * (np.trace(P @ K) - logdet)
        G = (K - np.linalg.inv(P)) @ B
        grad = np.concatenate([np.diag(G) * np.exp(theta[:p]), G[np.arange(1, p), np.arange(p - 1)]])
        return val, grad

    theta0 = np.concatenate([-0.5 * np.log(np.diag(K)), np.zeros(p - 1)])
    res = optimize.minimize(f, theta0, jac=True, method="BFGS",
                            options={"gtol": 1e-13, "maxiter": 10_000})
    B = _bidiag(res.x, p)
    return np.linalg.inv(B @ B.T)


def random_tridiagonal_precision_cov(rng, p):
    """Covariance whose inverse is a random tridiagonal PD matrix."""
    theta = np.concatenate([rng.normal(0, 0.7, p), rng.normal(0, 1.0, p - 1)])
    B = _bidiag(theta, p)
    return np.linalg.inv(B @ B.T)


def kriging_qp_oracle(K, k0):
    """Minimize ``w^T K w - 2 w^T k0`` subject to ``sum(w) = 1`` by eliminating one weight."""
    p = K.shape[0]
    # w = e_p + N z with N spanning {sum = 0}
    N = np.vstack([np.eye(p - 1), -np.ones((1, p - 1))])
    e = np.zeros(p)
    e[-1] = 1.0
    H = N.T @ K @ N
    g = N.T @ (K @ e - k0)
    z = np.linalg.lstsq(H, -g, rcond=None)[0]
    return e + N @ z
