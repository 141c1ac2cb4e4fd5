"""Testing the Markov property through endpoint partial correlations.

For curves observed on a grid ``t_1 < ... < t_p``, a Markov process has
``X(t_1)`` and ``X(t_p)`` conditionally independent given each interior
``X(t_j)``, and for continuous, non-degenerate processes that family of
``p - 2`` conditions is also sufficient. The test computes one partial
correlation per interior point, Fisher-transforms it, and aggregates with a
maximum::

    T_n = max_j sqrt(n) |z_j|.

``T_n`` is calibrated against the maximum of a centered Gaussian vector whose
covariance is estimated from per-curve influence contributions of the
``z_j`` (``calibration="mc"``), or by a Bonferroni bound on the per-point
statistics ``sqrt(n - 4) |z_j|`` (``calibration="bonferroni"``).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .errors import DegenerateCorrelationError
from .processes import Grid, KernelSpec, ObservationSet, sample_curves, seed_sequence

__all__ = [
    "TestReport",
    "endpoint_statistics",
    "fisher_z",
    "markov_test",
    "partial_correlation",
    "power_curve",
    "simulate_roc",
    "simulate_tests",
    "roc_auc",
    "roc_curve",
]

CALIBRATIONS = ("mc", "bonferroni")

# residual variance below this fraction of the raw variance counts as collinear
_DEGENERATE_TOL = 1e-12


def fisher_z(rho):
    """Fisher z-transform ``0.5 log((1 + rho) / (1 - rho))``."""
    r = np.asarray(rho, dtype=float)
    if np.any(np.abs(r) >= 1) or np.any(np.isnan(r)):
        raise ValueError("Fisher z-transform needs |rho| < 1")
    out = np.arctanh(r)
    return out if out.ndim else float(out)


def _residuals(x, Z, center):
    """Residuals of no-intercept regressions of ``x`` on each column of ``Z``."""
    if center:
        x = x - x.mean()
        Z = Z - Z.mean(axis=0)
    zz = np.einsum("ij,ij->j", Z, Z)
    coef = (x @ Z) / zz
    return x[:, None] - Z * coef, zz


def _check_residuals(E, x, label, offset=1):
    ss = np.einsum("ij,ij->j", E, E)
    ref = max(float(x @ x), np.finfo(float).tiny)
    bad = np.flatnonzero(ss <= _DEGENERATE_TOL * ref)
    if bad.size:
        j = int(bad[0]) + offset
        raise DegenerateCorrelationError(
            f"residual of {label} on interior point {j} vanishes (perfect collinearity)",
            index=j)
    return ss


def partial_correlation(x1, xp, xj, center: bool = False) -> float:
    """Partial correlation of ``x1`` and ``xp`` given ``xj``.

    Both ``x1`` and ``xp`` are regressed on ``xj`` without intercept (the
    mean-zero model) unless ``center`` is set; the result is the empirical
    correlation of the two residual vectors.
    """
    x1 = np.asarray(x1, dtype=float).ravel()
    xp = np.asarray(xp, dtype=float).ravel()
    xj = np.asarray(xj, dtype=float).ravel()
    if not (x1.size == xp.size == xj.size):
        raise ValueError("inputs must have equal length")
    if x1.size < 5:
        raise ValueError("partial correlation needs n >= 5")
    if not np.any(xj != 0):
        raise DegenerateCorrelationError("conditioning variable is identically zero")
    Z = xj[:, None]
    e1, _ = _residuals(x1, Z, center)
    ep, _ = _residuals(xp, Z, center)
    s1 = _check_residuals(e1, x1, "x1", 0)
    sp = _check_residuals(ep, xp, "xp", 0)
    return float((e1[:, 0] @ ep[:, 0]) / np.sqrt(s1[0] * sp[0]))


@dataclass
class EndpointStatistics:
    """Partial correlations, z values and influence vectors at interior points."""

    rho: np.ndarray
    z: np.ndarray
    influence: np.ndarray  # (n, p - 2)


def endpoint_statistics(X, center: bool = False) -> EndpointStatistics:
    """Endpoint partial correlations for every interior grid point.

    ``X`` is an ``(n, p)`` array of curves. Column ``j`` of the influence
    matrix holds, per curve, ``(a b - rho (a^2 + b^2) / 2) / (1 - rho^2)``
    with ``a, b`` the standardized residuals; its covariance estimates
    ``n cov(z)``.
    """
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if p < 3:
        raise ValueError("the test needs at least 3 grid points")
    x1, xp, inner = X[:, 0], X[:, -1], X[:, 1:-1]
    if np.any(~np.any(inner != 0, axis=0)):
        j = int(np.flatnonzero(~np.any(inner != 0, axis=0))[0]) + 1
        raise DegenerateCorrelationError(f"interior point {j} is identically zero", index=j)
    E1, _ = _residuals(x1, inner, center)
    Ep, _ = _residuals(xp, inner, center)
    s1 = _check_residuals(E1, x1, "x1")
    sp = _check_residuals(Ep, xp, "xp")
    rho = np.einsum("ij,ij->j", E1, Ep) / np.sqrt(s1 * sp)
    rho = np.clip(rho, -1.0 + 1e-15, 1.0 - 1e-15)
    z = np.arctanh(rho)
    a = E1 / np.sqrt(s1 / n)
    b = Ep / np.sqrt(sp / n)
    infl = (a * b - rho * 0.5 * (a * a + b * b)) / (1.0 - rho * rho)
    return EndpointStatistics(rho, z, infl)


@dataclass
class TestReport:
    """Outcome of :func:`markov_test`.

    ``statistic`` is ``T_n = max_j sqrt(n)|z_j|``; ``screening`` holds the
    per-point values ``sqrt(n - 4)|z_j|``. With ``mc`` calibration the
    decision compares ``statistic`` with ``critical_value``; with
    ``bonferroni`` it compares ``max(screening)``.
    """

    __test__ = False  # keep pytest from collecting this class

    n: int
    alpha: float
    rho: np.ndarray
    z: np.ndarray
    statistic: float
    screening: np.ndarray
    critical_value: float
    p_value: float
    calibration: str
    reject: bool

    @property
    def decision(self) -> str:
        return "RejectMarkov" if self.reject else "FailToReject"

    @property
    def scaled(self) -> np.ndarray:
        """Per-point ``sqrt(n)|z_j|``."""
        return np.sqrt(self.n) * np.abs(self.z)

    def to_csv(self, path=None, provenance: dict | None = None) -> str:
        """One row per interior point (1-based index j), then a summary row."""
        buf = io.StringIO()
        for key, val in (provenance or {}).items():
            buf.write(f"# {key}={val}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "rho", "z", "sqrt_n_abs_z", "sqrt_n4_abs_z"])
        for j, (r, z, s, s4) in enumerate(zip(self.rho, self.z, self.scaled, self.screening),
                                          start=2):
            w.writerow([j, repr(float(r)), repr(float(z)), repr(float(s)), repr(float(s4))])
        w.writerow(["# summary", "T_n", "critical_value", "p_value", "decision", "calibration"])
        w.writerow(["summary", repr(self.statistic), repr(self.critical_value),
                    repr(self.p_value), self.decision, self.calibration])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def markov_test(obs, alpha: float = 0.05, calibration: str = "mc", draws: int = 10_000,
                seed=None, center: bool = False) -> TestReport:
    """Max-statistic test of the Markov property on dense data.

    Parameters
    ----------
    obs : ObservationSet or (n, p) array_like
        Dense curves; the first and last grid points are the endpoints.
    alpha : float
        Level in (0, 1).
    calibration : {"mc", "bonferroni"}
        ``mc`` simulates ``max_j |Y_j|`` with ``Y ~ N(0, S)``, ``S`` the
        empirical covariance of the influence vectors; ``bonferroni`` uses
        the per-point normal rule at level ``alpha / (p - 2)``.
    draws : int
        Monte Carlo draws for ``mc``.
    seed : optional
        Seed for the Monte Carlo draws.
    center : bool
        Center variables before regressing (for data with nonzero mean).
    """
    if isinstance(obs, ObservationSet):
        if not obs.is_dense:
            raise ValueError("the Markov test requires dense observations")
        X = obs.values
    else:
        X = np.asarray(obs, dtype=float)
    n, p = X.shape
    if p < 3:
        raise ValueError("the test needs p >= 3")
    if n < 8:
        raise ValueError("the test needs n >= 8")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if calibration not in CALIBRATIONS:
        raise ValueError(f"calibration must be one of {CALIBRATIONS}")

    st = endpoint_statistics(X, center)
    absz = np.abs(st.z)
    statistic = float(np.sqrt(n) * absz.max())
    screening = np.sqrt(n - 4) * absz

    if calibration == "bonferroni":
        m = p - 2
        crit = float(norm.ppf(1 - alpha / (2 * m)))
        top = float(screening.max())
        pval = float(min(1.0, 2 * m * norm.sf(top)))
        reject = top > crit
    else:
        rng = np.random.default_rng(seed)
        # Y = G U / sqrt(n) with G i.i.d. N(0, 1) has covariance exactly
        # U^T U / n; cost is linear in the number of interior points.
        U = st.influence - st.influence.mean(axis=0)
        maxima = np.empty(draws)
        chunk = max(1, min(draws, 2_000_000 // max(n, 1)))
        for start in range(0, draws, chunk):
            stop = min(draws, start + chunk)
            G = rng.standard_normal((stop - start, n))
            maxima[start:stop] = np.abs(G @ U).max(axis=1) / np.sqrt(n)
        crit = float(np.quantile(maxima, 1 - alpha))
        pval = float((1 + np.sum(maxima >= statistic)) / (draws + 1))
        reject = statistic > crit
    return TestReport(n, alpha, st.rho, st.z, statistic, screening, crit, pval,
                      calibration, bool(reject))


# ---------------------------------------------------------------------------
# Monte Carlo power and ROC
# ---------------------------------------------------------------------------


def _replicate_seeds(seed, count):
    return seed_sequence(seed).spawn(count)


def _one_replicate(spec, grid, n, alpha, calibration, draws, ss):
    data_ss, mc_ss = ss.spawn(2)
    obs = sample_curves(spec, grid, n, seed=data_ss)
    return markov_test(obs, alpha, calibration, draws, seed=mc_ss)


def simulate_tests(spec: KernelSpec, p: int, n: int, replicates: int, seed=None,
                   alpha: float = 0.05, calibration: str = "mc", draws: int = 10_000,
                   n_jobs: int = 1) -> list:
    """Run :func:`markov_test` on ``replicates`` fresh datasets from ``spec``.

    Each replicate gets its own child seed, so results do not depend on
    ``n_jobs``. A replicate whose test fails numerically yields ``None``.
    """
    grid = Grid.regular(p)
    seeds = _replicate_seeds(seed, replicates)

    def run(ss):
        try:
            return _one_replicate(spec, grid, n, alpha, calibration, draws, ss)
        except DegenerateCorrelationError:
            return None

    if n_jobs == 1:
        return [run(ss) for ss in seeds]
    from joblib import Parallel, delayed
    return Parallel(n_jobs=n_jobs)(delayed(run)(ss) for ss in seeds)


def power_curve(hs, p: int = 20, n: int = 500, alpha: float = 0.05, replicates: int = 500,
                seed=None, calibration: str = "mc", draws: int = 10_000, q: int = 200,
                n_jobs: int = 1) -> list[dict]:
    """Rejection rate of the test against KEBM alternatives, one row per ``h``.

    ``h = 0`` is Brownian motion (a size check). Rows carry ``h``, ``power``,
    the number of valid replicates and the binomial standard error.
    """
    if replicates < 100:
        raise ValueError("power curves need at least 100 replicates")
    rows = []
    root = seed_sequence(seed)
    for h, ss in zip(hs, root.spawn(len(hs))):
        spec = KernelSpec.kebm(h, q) if h > 0 else KernelSpec.brownian()
        reports = simulate_tests(spec, p, n, replicates, ss, alpha, calibration, draws, n_jobs)
        valid = [r for r in reports if r is not None]
        k = sum(r.reject for r in valid)
        m = len(valid)
        power = k / m if m else float("nan")
        rows.append({"h": float(h), "power": power, "rejections": k, "replicates": m,
                     "se": float(np.sqrt(power * (1 - power) / m)) if m else float("nan")})
    return rows


def roc_curve(null_scores, alt_scores) -> tuple[np.ndarray, np.ndarray]:
    """Empirical ROC from statistic values under the null and the alternative.

    The threshold sweeps from above the largest pooled value down to below
    the smallest, so the curve starts at (0, 0) and ends at (1, 1); tied
    values enter together.
    """
    null = np.asarray(null_scores, dtype=float)
    alt = np.asarray(alt_scores, dtype=float)
    thresholds = np.unique(np.concatenate([null, alt]))[::-1]
    fpr = [0.0] + [float(np.mean(null >= c)) for c in thresholds]
    tpr = [0.0] + [float(np.mean(alt >= c)) for c in thresholds]
    return np.array(fpr), np.array(tpr)


def roc_auc(fpr, tpr) -> float:
    """Trapezoidal area under an ROC curve."""
    return float(np.trapezoid(tpr, fpr))


def simulate_roc(null_spec: KernelSpec, alt_spec: KernelSpec, p: int, n: int,
                 replicates: int, seed=None, n_jobs: int = 1):
    """ROC of ``T_n`` for ``null_spec`` against ``alt_spec``.

    Returns ``(fpr, tpr, auc)``. Only the statistic is needed, so the
    calibration step is skipped.
    """
    if replicates < 100:
        raise ValueError("ROC curves need at least 100 replicates")
    grid = Grid.regular(p)
    s_null, s_alt = seed_sequence(seed).spawn(2)

    def scores(spec, ss):
        out = []
        for child in ss.spawn(replicates):
            X = sample_curves(spec, grid, n, seed=child).values
            try:
                st = endpoint_statistics(X)
            except DegenerateCorrelationError:
                continue
            out.append(np.sqrt(n) * np.abs(st.z).max())
        return np.array(out)

    fpr, tpr = roc_curve(scores(null_spec, s_null), scores(alt_spec, s_alt))
    return fpr, tpr, roc_auc(fpr, tpr)
