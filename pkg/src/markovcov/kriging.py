"""Ordinary kriging with plug-in covariances.

The weights solve the bordered system::

    [ K + eps I   1 ] [ w  ]   [ k0 ]
    [ 1^T         0 ] [ mu ] = [ 1  ]

where ``K`` is the covariance among the nodes and ``k0`` the covariance
between the nodes and the target. The benchmark compares prediction errors
when ``K`` comes from different estimators fitted on training curves.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import KrigingError, NumericalError
from .estimation import EstimatedKernel, fit_estimator, oracle_kernel
from .processes import (Grid, KernelSpec, ObservationSet, cross_kernel, kernel_matrix, psd_factor,
                         seed_sequence)

__all__ = [
    "KrigingSystem",
    "default_ridge",
    "kriging_error_benchmark",
    "solve_kriging",
    "summarize_errors",
]

T0_POLICIES = ("leave-one-out", "midpoint", "fixed")


def default_ridge(K: np.ndarray) -> float:
    """``1e-8 * trace(K) / p``; scales with the covariance."""
    return 1e-8 * float(np.trace(K)) / K.shape[0]


@dataclass(frozen=True, eq=False)
class KrigingSystem:
    """A solved ordinary kriging system."""

    nodes: np.ndarray
    t0: float
    ridge: float
    weights: np.ndarray
    multiplier: float
    variance: float
    residual: float

    def predict(self, values) -> float:
        """``sum_j w_j x(t_j)`` for node values ``values``."""
        return float(np.asarray(values, dtype=float) @ self.weights)


def _cov_blocks(cov, nodes, t0):
    if isinstance(cov, EstimatedKernel):
        K = cov.evaluate(nodes)
        k0 = cov.evaluate(nodes, [t0])[:, 0]
        k00 = float(cov.evaluate([t0])[0, 0])
    elif isinstance(cov, KernelSpec):
        K = kernel_matrix(cov, nodes)
        k0 = cross_kernel(cov, nodes, [t0])[:, 0]
        k00 = float(cross_kernel(cov, [t0], [t0])[0, 0])
    elif callable(cov):
        K = np.array([[cov(a, b) for b in nodes] for a in nodes], dtype=float)
        k0 = np.array([cov(a, t0) for a in nodes], dtype=float)
        k00 = float(cov(t0, t0))
    else:
        raise TypeError("covariance source must be an EstimatedKernel, KernelSpec or callable")
    return 0.5 * (K + K.T), k0, k00


def solve_kriging(cov, nodes, t0: float, ridge: float | None = None) -> KrigingSystem:
    """Ordinary kriging weights for predicting ``X(t0)`` from ``X(nodes)``.

    Parameters
    ----------
    cov : EstimatedKernel, KernelSpec or callable
        Covariance source; a callable is evaluated as ``cov(s, t)``.
    nodes : Grid or array_like
        Distinct observation locations.
    t0 : float
        Target location in [0, 1].
    ridge : float, optional
        Added to the diagonal of the node covariance; defaults to
        :func:`default_ridge`.

    Raises
    ------
    KrigingError
        If the bordered matrix is numerically singular.
    """
    pts = nodes.points if isinstance(nodes, Grid) else np.asarray(nodes, dtype=float).ravel()
    if not 0.0 <= t0 <= 1.0:
        raise ValueError("t0 must lie in [0, 1]")
    if np.unique(pts).size != pts.size:
        raise ValueError("nodes must be distinct")
    K, k0, k00 = _cov_blocks(cov, pts, t0)
    eps = default_ridge(K) if ridge is None else float(ridge)
    if eps < 0:
        raise ValueError("ridge must be nonnegative")
    p = pts.size
    A = np.zeros((p + 1, p + 1))
    A[:p, :p] = K + eps * np.eye(p)
    A[:p, p] = A[p, :p] = 1.0
    rhs = np.append(k0, 1.0)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e15:
        raise KrigingError(f"bordered kriging matrix is singular (condition {cond:.2e})", cond)
    sol = scipy.linalg.solve(A, rhs, assume_a="sym")
    w, mu = sol[:p], float(sol[p])
    resid = float(np.linalg.norm(A @ sol - rhs))
    var = k00 - float(w @ k0) - mu
    return KrigingSystem(pts, float(t0), eps, w, mu, var, resid)


# ---------------------------------------------------------------------------
# Benchmark
# ---------------------------------------------------------------------------


def _targets(policy, grid, t0):
    """(t0, predictor index set) pairs for a target policy."""
    pts = grid.points
    p = pts.size
    if policy == "leave-one-out":
        keep = np.arange(p)
        return [(pts[j], keep[keep != j]) for j in range(1, p - 1)]
    if policy == "midpoint":
        mids = 0.5 * (pts[:-1] + pts[1:])
        return [(m, np.arange(p)) for m in mids]
    if policy == "fixed":
        if t0 is None:
            raise ValueError("the fixed policy needs t0")
        return [(float(t0), np.arange(p))]
    raise ValueError(f"t0 policy must be one of {T0_POLICIES}")


def kriging_error_benchmark(spec: KernelSpec, estimators=("markov", "empirical"), p: int = 20,
                            n: int = 200, policy: str = "leave-one-out", t0: float | None = None,
                            replicates: int = 1000, ridge: float | None = None, seed=None,
                            bandwidth: float = 0.1, refine: int = 4,
                            include_oracle: bool = True) -> list[dict]:
    """Prediction errors of kriging with plug-in covariance estimates.

    Each replicate draws ``n`` training curves on the regular ``p``-point
    grid and one independent target curve on a grid ``refine`` times finer
    that contains the training grid. Each estimator is fitted on the
    training curves and used to predict the target curve at every ``t0`` of
    the policy from its values at the predictor nodes.

    ``policy`` is ``"leave-one-out"`` (each interior node predicted from all
    other nodes), ``"midpoint"`` (midpoints between nodes) or ``"fixed"``.

    Returns
    -------
    list of dict
        One row per (estimator, replicate, t0) with keys ``estimator``,
        ``replicate``, ``t0`` and ``error`` (prediction minus truth). A
        replicate on which an estimator fails numerically is skipped for that
        estimator only.
    """
    if replicates < 1:
        raise ValueError("replicates must be positive")
    grid = Grid.regular(p)
    fine = grid.refine(refine)
    node_idx = np.searchsorted(fine.points, grid.points)
    targets = _targets(policy, grid, t0)
    if policy == "midpoint" and refine % 2:
        raise ValueError("midpoint policy needs an even refinement factor")
    target_idx = [int(np.argmin(np.abs(fine.points - t))) for t, _ in targets]
    names = list(estimators) + (["oracle"] if include_oracle and "oracle" not in estimators else [])
    L_fine = psd_factor(kernel_matrix(spec, fine))
    L_train = psd_factor(kernel_matrix(spec, grid))
    rows = []
    for rep, ss in enumerate(seed_sequence(seed).spawn(replicates)):
        rng = np.random.default_rng(ss)
        train = ObservationSet.dense(grid, rng.standard_normal((n, p)) @ L_train.T)
        target = L_fine @ rng.standard_normal(len(fine))
        for name in names:
            try:
                est = (oracle_kernel(spec, grid) if name == "oracle"
                       else fit_estimator(name, train, bandwidth))
                for (t, keep), ti in zip(targets, target_idx):
                    system = solve_kriging(est, grid.points[keep], t, ridge)
                    err = system.predict(target[node_idx[keep]]) - target[ti]
                    rows.append({"estimator": name, "replicate": rep, "t0": float(t),
                                 "error": float(err)})
            except NumericalError:
                continue
    return rows


def summarize_errors(rows) -> list[dict]:
    """Per-estimator MSE, its Monte Carlo standard error and error quantiles.

    The MSE standard error treats replicates (not individual targets) as
    independent units.
    """
    out = []
    names = list(dict.fromkeys(r["estimator"] for r in rows))
    for name in names:
        sel = [r for r in rows if r["estimator"] == name]
        err = np.array([r["error"] for r in sel])
        reps = np.array([r["replicate"] for r in sel])
        per_rep = np.array([np.mean(err[reps == k] ** 2) for k in np.unique(reps)])
        q25, q75 = np.quantile(err, [0.25, 0.75])
        out.append({
            "estimator": name,
            "mse": float(np.mean(err ** 2)),
            "mse_se": float(per_rep.std(ddof=1) / np.sqrt(per_rep.size)) if per_rep.size > 1 else 0.0,
            "median_abs": float(np.median(np.abs(err))),
            "q25": float(q25),
            "q75": float(q75),
            "replicates": int(per_rep.size),
        })
    return out


def errors_to_csv(rows, path=None, provenance=None) -> str:
    buf = io.StringIO()
    for key, val in (provenance or {}).items():
        buf.write(f"# {key}={val}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["estimator", "replicate", "t0", "error"])
    for r in rows:
        w.writerow([r["estimator"], r["replicate"], repr(r["t0"]), repr(r["error"])])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
