"""Covariance estimators for functional data.

The Markov estimator reduces any design to a synchronous one by binning
[0, 1] into ``p`` equal bins, estimates one variance per bin and one
regression coefficient per pair of consecutive bins, and chains them into a
Markov covariance on the bin nodes. Empirical, fully smoothed and
upper-triangle smoothed estimators serve as baselines for dense data.

Every estimator returns an :class:`EstimatedKernel`, which extends the nodal
matrix to [0, 1]^2 by bilinear interpolation.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EstimationError, NoiseIdentifiabilityError
from .processes import Grid, KernelSpec, ObservationSet, assign_bins, kernel_matrix
from .transform import MarkovFactorization, chain_matrix

__all__ = [
    "BinnedStatistics",
    "EstimatedKernel",
    "bin_observations",
    "empirical_estimate",
    "estimate_noise",
    "fit_estimator",
    "l2_error",
    "markov_estimate",
    "smoothed_estimate",
    "triangular_estimate",
]

ESTIMATORS = ("markov", "empirical", "smoothed", "triangular")


# ---------------------------------------------------------------------------
# Estimated kernels
# ---------------------------------------------------------------------------


def interpolation_weights(nodes: np.ndarray, x) -> np.ndarray:
    """Linear interpolation weights of points ``x`` on ``nodes``.

    Returns a ``(len(x), len(nodes))`` matrix with at most two nonzero
    entries per row. Points outside the node range take the nearest node.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    p = nodes.size
    W = np.zeros((x.size, p))
    if p == 1:
        W[:, 0] = 1.0
        return W
    j = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, p - 2)
    a = np.clip((x - nodes[j]) / (nodes[j + 1] - nodes[j]), 0.0, 1.0)
    rows = np.arange(x.size)
    W[rows, j] = 1.0 - a
    W[rows, j + 1] += a
    return W


@dataclass(frozen=True, eq=False)
class EstimatedKernel:
    """A nodal covariance estimate with its bilinear continuum extension.

    Attributes
    ----------
    nodes : ndarray
        Interpolation nodes, increasing.
    matrix : ndarray
        Symmetric nodal matrix.
    tag : str
        Estimator name: ``markov``, ``empirical``, ``smoothed``,
        ``triangular`` or ``oracle``.
    noise_var : float
        Noise variance used (or estimated) by the estimator.
    factorization : MarkovFactorization or None
        Nodal variances and links, for the Markov estimator.
    flags : tuple of str
        Diagnostics raised during estimation.
    """

    nodes: np.ndarray
    matrix: np.ndarray
    tag: str
    noise_var: float = 0.0
    factorization: MarkovFactorization | None = None
    flags: tuple = field(default_factory=tuple)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).ravel()
        M = np.asarray(self.matrix, dtype=float)
        if M.shape != (nodes.size, nodes.size):
            raise ValueError("matrix shape does not match the nodes")
        nodes.setflags(write=False)
        M.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "matrix", M)

    @property
    def p(self) -> int:
        return self.nodes.size

    def evaluate(self, s, t=None) -> np.ndarray:
        """Matrix of interpolated values ``K(s_i, t_j)``; ``t`` defaults to ``s``."""
        Ws = interpolation_weights(self.nodes, s)
        Wt = Ws if t is None else interpolation_weights(self.nodes, t)
        return Ws @ self.matrix @ Wt.T

    def __call__(self, s: float, t: float) -> float:
        return float(self.evaluate(s, t)[0, 0])

    def to_csv(self, path=None, provenance: dict | None = None) -> str:
        """Write header row of nodes then matrix rows; metadata in '#' lines.

        Returns the CSV text, and writes it to ``path`` when given.
        """
        buf = io.StringIO()
        for key, val in (provenance or {}).items():
            buf.write(f"# {key}={val}\n")
        buf.write(f"# tag={self.tag}\n# noise_var={self.noise_var!r}\n")
        if self.flags:
            buf.write(f"# flags={';'.join(self.flags)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([repr(float(x)) for x in self.nodes])
        for row in self.matrix:
            writer.writerow([repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "EstimatedKernel":
        """Read a file path or CSV text produced by :meth:`to_csv`."""
        text = source if isinstance(source, str) and "\n" in source else Path(source).read_text()
        meta, rows = {}, []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key] = val
            elif line.strip():
                rows.append([float(x) for x in line.split(",")])
        flags = tuple(f for f in meta.get("flags", "").split(";") if f)
        return cls(np.array(rows[0]), np.array(rows[1:]), meta.get("tag", "unknown"),
                   float(meta.get("noise_var", 0.0)), flags=flags)


# ---------------------------------------------------------------------------
# Binning
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BinnedStatistics:
    """Per-curve, per-bin summaries of an observation set.

    ``counts[i, k]`` is the number of observations of curve ``i`` in bin
    ``k``; ``sums`` and ``sumsq`` hold the sums of values and squared values
    in each cell. ``labels`` gives the 0-based bin of every observation,
    curve by curve. ``nodes`` are the interpolation nodes of the bins.
    """

    p: int
    counts: np.ndarray
    sums: np.ndarray
    sumsq: np.ndarray
    labels: tuple
    nodes: np.ndarray
    regime: str
    obs: ObservationSet

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def linked(self) -> np.ndarray:
        """``linked[i, k]``: curve ``i`` is observed in bins ``k`` and ``k+1``."""
        occ = self.counts > 0
        return occ[:, :-1] & occ[:, 1:]

    @property
    def n_links(self) -> np.ndarray:
        """Number of curves contributing to each link (``p - 1`` entries)."""
        return self.linked.sum(axis=0)

    def index_sets(self, i: int) -> list[np.ndarray]:
        """Observation indices of curve ``i`` falling in each bin."""
        lab = self.labels[i]
        return [np.flatnonzero(lab == k) for k in range(self.p)]

    def linked_curves(self, k: int) -> np.ndarray:
        """Curves observed in both bin ``k`` and bin ``k + 1``."""
        return np.flatnonzero(self.linked[:, k])

    def empty_links(self) -> np.ndarray:
        return np.flatnonzero(self.n_links == 0)


def bin_observations(obs: ObservationSet, p: int | None = None) -> BinnedStatistics:
    """Bin observation times into ``p`` equal sub-intervals of [0, 1].

    A time ``t`` falls in bin ``ceil(t p)`` (1-based), with ``t = 0`` in the
    first bin. A dense set binned with ``p`` equal to its grid size keeps one
    grid point per bin and uses the grid points as nodes; otherwise nodes are
    the bin midpoints ``(2k - 1) / (2p)``.
    """
    if p is None:
        if not obs.is_dense:
            raise ValueError("p is required for irregular observations")
        p = len(obs.grid)
    if p < 2:
        raise ValueError("need at least 2 bins")
    if obs.is_dense and p == len(obs.grid):
        Y = obs.values
        lab = np.arange(p)
        return BinnedStatistics(p, np.ones(Y.shape, dtype=int), Y.copy(), Y ** 2,
                                tuple(lab for _ in range(obs.n)),
                                obs.grid.points.copy(), "dense", obs)
    n = obs.n
    counts = np.zeros((n, p), dtype=int)
    sums = np.zeros((n, p))
    sumsq = np.zeros((n, p))
    labels = []
    for i, (t, y) in enumerate(obs.curves()):
        lab = assign_bins(t, p)
        labels.append(lab)
        counts[i] = np.bincount(lab, minlength=p)
        sums[i] = np.bincount(lab, weights=y, minlength=p)
        sumsq[i] = np.bincount(lab, weights=y * y, minlength=p)
    nodes = (2.0 * np.arange(1, p + 1) - 1.0) / (2.0 * p)
    return BinnedStatistics(p, counts, sums, sumsq, tuple(labels), nodes, obs.regime, obs)


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------


def _within_bin_pairs(stats: BinnedStatistics):
    """Half squared differences and lags of all distinct same-bin pairs.

    Also returns, for every pair, the weight ``1 / #pairs`` of its
    (curve, bin) cell so that each cell counts once.
    """
    halfsq, lags, weights = [], [], []
    for i, (t, y) in enumerate(stats.obs.curves()):
        lab = stats.labels[i]
        for k in np.flatnonzero(stats.counts[i] >= 2):
            sel = lab == k
            tk, yk = t[sel], y[sel]
            a, b = np.triu_indices(tk.size, 1)
            halfsq.append(0.5 * (yk[a] - yk[b]) ** 2)
            lags.append(np.abs(tk[a] - tk[b]))
            weights.append(np.full(a.size, 1.0 / a.size))
    if not halfsq:
        return None
    return np.concatenate(halfsq), np.concatenate(lags), np.concatenate(weights)


def estimate_noise(stats: BinnedStatistics, lag_correction: bool = True) -> float:
    """Estimate the measurement-noise variance from within-bin replicates.

    For a (curve, bin) cell with ``m >= 2`` observations, the mean of the
    squares minus the mean of the distinct cross-products equals the mean
    of ``(y_a - y_b)**2 / 2`` over pairs, whose expectation is the noise
    variance plus a term growing with the lag ``|t_a - t_b|``.

    Parameters
    ----------
    stats : BinnedStatistics
    lag_correction : bool
        If True (default), regress the half squared differences on the lag
        and return the intercept, removing the within-bin kernel variation
        to first order. If False, return the plain average over cells, which
        is biased upward by about ``w(bin width)``.

    Returns
    -------
    float
        Estimated noise variance, clamped at 0.
    """
    pairs = _within_bin_pairs(stats)
    if pairs is None:
        if stats.regime == "dense":
            warnings.warn("no within-bin replicates; noise variance set to 0",
                          RuntimeWarning, stacklevel=2)
            return 0.0
        raise NoiseIdentifiabilityError(
            "noise variance not identifiable: no curve has two observations in one bin")
    halfsq, lags, w = pairs
    if not lag_correction or np.ptp(lags) == 0.0:
        n_cells = w.sum()
        return max(float(np.sum(w * halfsq) / n_cells), 0.0)
    X = np.column_stack([np.ones_like(lags), lags])
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], halfsq * sw, rcond=None)
    return max(float(coef[0]), 0.0)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def markov_estimate(stats: BinnedStatistics, noise_var=0.0, strict: bool = False) -> EstimatedKernel:
    """Markov covariance estimator.

    Per bin ``k`` the de-noised variance is the average over linked curves
    of ``mean_k**2 - noise_var / m_k``; the link coefficient between bins
    ``k`` and ``k+1`` is the average cross-product of bin means divided by
    that variance. The nodal matrix chains the links.

    Parameters
    ----------
    stats : BinnedStatistics
    noise_var : float or "estimate"
        Known noise variance, or ``"estimate"`` to use :func:`estimate_noise`.
    strict : bool
        Raise instead of flooring a nonpositive de-noised variance.
    """
    if isinstance(noise_var, str):
        if noise_var != "estimate":
            raise ValueError("noise_var must be a number or 'estimate'")
        noise_var = estimate_noise(stats)
    noise_var = float(noise_var)
    if noise_var < 0:
        raise ValueError("noise variance must be nonnegative")
    empty = stats.empty_links()
    if empty.size:
        k = int(empty[0])
        raise EstimationError(
            f"no curve observed in both bins {k + 1} and {k + 2}; use fewer bins (smaller p)")
    p = stats.p
    with np.errstate(invalid="ignore", divide="ignore"):
        means = stats.sums / stats.counts
        debiased = means ** 2 - noise_var / stats.counts
    linked = stats.linked
    var = np.empty(p)
    cross = np.empty(p - 1)
    for k in range(p - 1):
        rows = linked[:, k]
        var[k] = debiased[rows, k].mean()
        cross[k] = (means[rows, k] * means[rows, k + 1]).mean()
    last = stats.counts[:, -1] > 0
    if not last.any():
        raise EstimationError(f"bin {p} holds no observations; use fewer bins (smaller p)")
    var[-1] = debiased[last, -1].mean()

    flags = []
    bad = np.flatnonzero(~(var > 0))
    if bad.size:
        if strict:
            raise EstimationError(f"nonpositive de-noised variance in bin {bad[0] + 1}")
        with np.errstate(invalid="ignore", divide="ignore"):
            second = np.nanmax(np.where(stats.counts > 0, stats.sumsq / stats.counts, np.nan))
        floor = 1e-10 * second
        var[bad] = floor
        flags.append("variance-floor:" + ",".join(str(b + 1) for b in bad))
    if p > stats.n:
        flags.append("p>n")
    betas = cross / var[:-1]
    fact = MarkovFactorization(var, betas, band=cross)
    return EstimatedKernel(stats.nodes, fact.matrix(), "markov", noise_var, fact, tuple(flags))


def _dense_values(obs: ObservationSet, name: str) -> np.ndarray:
    if not obs.is_dense:
        raise ValueError(f"{name} requires dense observations")
    return obs.values


def empirical_estimate(obs: ObservationSet) -> EstimatedKernel:
    """``(1/n) sum_i x_i x_i^T`` on the observation grid (mean-zero model)."""
    Y = _dense_values(obs, "empirical_estimate")
    C = Y.T @ Y / Y.shape[0]
    C = 0.5 * (C + C.T)
    return EstimatedKernel(obs.grid.points, C, "empirical")


def _gauss_weights(points, bandwidth):
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    d = (points[:, None] - points[None, :]) / bandwidth
    return np.exp(-0.5 * d * d)


def smoothed_estimate(obs: ObservationSet, bandwidth: float) -> EstimatedKernel:
    """Nadaraya-Watson smoothing of the empirical surface over the full square.

    Gaussian product weights with the given bandwidth; evaluated at the
    grid nodes.
    """
    C = empirical_estimate(obs).matrix
    G = _gauss_weights(obs.grid.points, bandwidth)
    W = G / G.sum(axis=1, keepdims=True)
    S = W @ C @ W.T
    return EstimatedKernel(obs.grid.points, 0.5 * (S + S.T), "smoothed")


def triangular_estimate(obs: ObservationSet, bandwidth: float) -> EstimatedKernel:
    """Nadaraya-Watson smoothing using only empirical entries with ``s <= t``.

    The upper triangle (diagonal included) is smoothed and mirrored.
    """
    C = empirical_estimate(obs).matrix
    G = _gauss_weights(obs.grid.points, bandwidth)
    upper = np.triu(np.ones_like(C))
    num = G @ (C * upper) @ G.T
    den = G @ upper @ G.T
    # den > 0 on the upper triangle; the lower one is discarded
    with np.errstate(invalid="ignore", divide="ignore"):
        S = np.triu(np.where(upper > 0, num / den, 0.0))
    S = S + np.triu(S, 1).T
    return EstimatedKernel(obs.grid.points, S, "triangular")


def fit_estimator(name: str, obs: ObservationSet, bandwidth: float = 0.1,
                  p: int | None = None, noise_var=0.0) -> EstimatedKernel:
    """Dispatch to an estimator by name."""
    if name == "markov":
        return markov_estimate(bin_observations(obs, p), noise_var)
    if name == "empirical":
        return empirical_estimate(obs)
    if name == "smoothed":
        return smoothed_estimate(obs, bandwidth)
    if name == "triangular":
        return triangular_estimate(obs, bandwidth)
    raise ValueError(f"unknown estimator {name!r}; choose from {', '.join(ESTIMATORS)}")


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


def _surface(source, u):
    if isinstance(source, EstimatedKernel):
        return source.evaluate(u)
    if isinstance(source, KernelSpec):
        return kernel_matrix(source, u)
    raise TypeError("expected an EstimatedKernel or a KernelSpec")


def l2_error(est: EstimatedKernel, truth, resolution: int = 200) -> float:
    """L2([0,1]^2) distance between ``est`` and ``truth``.

    The integral is approximated by the midpoint rule on a
    ``resolution x resolution`` grid; ``truth`` is a :class:`KernelSpec`
    or another :class:`EstimatedKernel`.
    """
    if resolution < est.p:
        raise ValueError("resolution must be at least the number of nodes")
    u = (np.arange(resolution) + 0.5) / resolution
    diff = est.evaluate(u) - _surface(truth, u)
    return float(np.sqrt(np.mean(diff * diff)))


def oracle_kernel(spec: KernelSpec, grid: Grid) -> EstimatedKernel:
    """The true kernel on ``grid`` wrapped as an estimate."""
    return EstimatedKernel(grid.points, kernel_matrix(spec, grid), "oracle")
