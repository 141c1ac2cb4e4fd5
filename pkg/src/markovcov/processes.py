"""Synthetic Gaussian processes on [0, 1] and their covariance kernels.

Three families are provided:

* Brownian motion, ``K(s, t) = min(s, t)``;
* the stationary Ornstein-Uhlenbeck process,
  ``K(s, t) = sigma**2 / (2 theta) * exp(-theta |s - t|)``;
* kernel-embedded Brownian motion (KEBM), the Brownian covariance smoothed on
  both sides by a compactly supported Wendland kernel of bandwidth ``h``.

Curves are drawn on a shared grid (dense design) or at ``r`` sorted uniform
times per curve (irregular design), optionally with i.i.d. Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import KernelSpecError, SamplingError

__all__ = [
    "Grid",
    "Irregular",
    "KernelSpec",
    "ObservationSet",
    "assign_bins",
    "cross_kernel",
    "eval_kernel",
    "kernel_matrix",
    "psd_factor",
    "sample_curves",
    "wendland",
]

# Relative tolerance used when mapping times to bins, so that k/p lands in bin k
# despite rounding in k/p * p.
_BIN_TOL = 1e-9


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing design points in [0, 1]."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).ravel()
        if pts.size == 0:
            raise ValueError("grid must contain at least one point")
        if np.any(pts < 0.0) or np.any(pts > 1.0):
            raise ValueError("grid points must lie in [0, 1]")
        if np.any(np.diff(pts) <= 0.0):
            raise ValueError("grid points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def regular(cls, p: int) -> "Grid":
        """The grid ``{1/p, 2/p, ..., 1}``; it excludes 0 where BM is degenerate."""
        if p < 1:
            raise ValueError("p must be positive")
        return cls(np.arange(1, p + 1) / p)

    def refine(self, factor: int) -> "Grid":
        """Insert ``factor - 1`` equispaced points in every gap (and before the first point)."""
        pts = np.concatenate([[0.0], self.points])
        fine = [
            pts[i] + (pts[i + 1] - pts[i]) * np.arange(1, factor + 1) / factor
            for i in range(len(pts) - 1)
        ]
        out = np.concatenate(fine)
        if self.points[0] == 0.0:
            out = np.concatenate([[0.0], out[factor:]])
        return Grid(out)

    def bins(self, p: int) -> np.ndarray:
        """0-based bin index of every point for the partition into ``p`` bins."""
        return assign_bins(self.points, p)

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        return isinstance(other, Grid) and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash(self.points.tobytes())


def assign_bins(t, p: int) -> np.ndarray:
    """Map times in [0, 1] to 0-based indices of the bins ((k-1)/p, k/p].

    ``t = 0`` goes to the first bin and ``t = 1`` to the last.
    """
    t = np.asarray(t, dtype=float)
    idx = np.ceil(t * p - _BIN_TOL).astype(int)
    return np.clip(idx, 1, p) - 1


@dataclass(frozen=True)
class Irregular:
    """Irregular design: ``r`` i.i.d. uniform observation times per curve."""

    r: int

    def __post_init__(self):
        if self.r < 2:
            raise ValueError("irregular design needs r >= 2")


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    """Specification of a covariance kernel.

    Use the constructors :meth:`brownian`, :meth:`ornstein_uhlenbeck` and
    :meth:`kebm` rather than instantiating directly.

    For KEBM, ``h`` is the Wendland bandwidth (``h = 0`` gives Brownian motion
    itself), ``q`` the number of quadrature nodes per smoothing integral, and
    ``normalize`` divides each smoothing kernel by its mass on [0, 1]. The
    default ``normalize=False`` uses ``(1/h) kappa(|s-u|/h)`` as is, whose
    mass is 2/3 away from the boundary.
    """

    kind: str
    theta: float = 1.0
    sigma: float = 1.0
    h: float = 0.0
    q: int = 200
    normalize: bool = False

    def __post_init__(self):
        if self.kind not in ("bm", "ou", "kebm"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "ou" and (self.theta <= 0 or self.sigma <= 0):
            raise ValueError("OU requires theta > 0 and sigma > 0")
        if self.kind == "kebm" and (self.h < 0 or self.q < 2):
            raise ValueError("KEBM requires h >= 0 and q >= 2")

    @classmethod
    def brownian(cls) -> "KernelSpec":
        return cls("bm")

    @classmethod
    def ornstein_uhlenbeck(cls, theta: float = 1.0, sigma: float = 1.0) -> "KernelSpec":
        return cls("ou", theta=float(theta), sigma=float(sigma))

    @classmethod
    def kebm(cls, h: float, q: int = 200, normalize: bool = False) -> "KernelSpec":
        return cls("kebm", h=float(h), q=int(q), normalize=bool(normalize))

    @property
    def label(self) -> str:
        if self.kind == "bm":
            return "bm"
        if self.kind == "ou":
            return f"ou(theta={self.theta:g},sigma={self.sigma:g})"
        return f"kebm(h={self.h:g})"


def wendland(r):
    """Wendland function ``max(1 - r, 0)**4 * (4 r + 1)`` for ``r >= 0``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("wendland is defined for r >= 0")
    out = np.maximum(1.0 - r, 0.0) ** 4 * (4.0 * r + 1.0)
    return out if out.ndim else float(out)


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("kernel arguments must lie in [0, 1]")
    return x


def _smoothing_nodes(s, spec: KernelSpec):
    """Local midpoint nodes and weights of ``u -> k_h(s, u)`` for each ``s``.

    Each integral runs over the support ``[s - h, s + h]`` clipped to [0, 1],
    split into ``q`` equal cells; returns arrays of shape (len(s), q).
    """
    h, q = spec.h, spec.q
    lo = np.maximum(s - h, 0.0)
    hi = np.minimum(s + h, 1.0)
    width = hi - lo
    u = lo[:, None] + width[:, None] * (np.arange(q) + 0.5) / q
    w = width[:, None] / q * wendland(np.abs(u - s[:, None]) / h) / h
    if spec.normalize:
        w = w / w.sum(axis=1, keepdims=True)
    return u, w


def _kebm_profiles(points_list, spec: KernelSpec):
    """Step-function profiles for the KEBM Gram representation.

    Using ``min(u, v) = int_0^1 1{x < u} 1{x < v} dx``, the quadrature of
    ``sum_ab w_a w_b min(u_a, v_b)`` equals ``int_0^1 S_s(x) S_t(x) dx`` with
    ``S_s(x) = sum_a w_a 1{u_a > x}``. ``S`` is piecewise constant between
    the pooled nodes, so the kernel is an exact weighted Gram matrix.
    """
    s_all = np.concatenate(points_list)
    u, w = _smoothing_nodes(s_all, spec)
    breaks = np.unique(np.concatenate([[0.0], u.ravel()]))
    lengths = np.diff(np.append(breaks, 1.0))
    # tail[i, a] = sum of w[i, a:], with a trailing zero
    tail = np.concatenate([np.cumsum(w[:, ::-1], axis=1)[:, ::-1],
                           np.zeros((len(s_all), 1))], axis=1)
    prof = np.empty((len(s_all), breaks.size))
    for i in range(len(s_all)):
        idx = np.searchsorted(u[i], breaks, side="right")
        prof[i] = tail[i, idx]
    out, start = [], 0
    for pts in points_list:
        out.append(prof[start:start + len(pts)])
        start += len(pts)
    return out, lengths


def cross_kernel(spec: KernelSpec, s, t) -> np.ndarray:
    """Kernel values ``K(s_i, t_j)`` for arrays ``s`` and ``t``."""
    s = np.atleast_1d(_check_domain(s)).ravel()
    t = np.atleast_1d(_check_domain(t)).ravel()
    if spec.kind == "bm" or (spec.kind == "kebm" and spec.h == 0.0):
        return np.minimum(s[:, None], t[None, :])
    if spec.kind == "ou":
        scale = spec.sigma ** 2 / (2.0 * spec.theta)
        return scale * np.exp(-spec.theta * np.abs(s[:, None] - t[None, :]))
    (ps, pt), lengths = _kebm_profiles([s, t], spec)
    return (ps * lengths) @ pt.T


def eval_kernel(spec: KernelSpec, s: float, t: float) -> float:
    """Evaluate ``K(s, t)``; arguments outside [0, 1] raise ``ValueError``."""
    if spec.kind == "kebm" and spec.h > 0:
        # sort the pair so the quadrature is symmetric to the last bit
        s, t = min(s, t), max(s, t)
    return float(cross_kernel(spec, s, t)[0, 0])


_MATRIX_CACHE: dict = {}
_CACHE_LIMIT = 64


def kernel_matrix(spec: KernelSpec, grid) -> np.ndarray:
    """Covariance matrix of ``spec`` on ``grid``, symmetrized.

    Raises :class:`KernelSpecError` when the smallest eigenvalue falls below
    ``-1e-8 * trace``. Results are cached per (spec, grid); the returned
    array is read-only.
    """
    pts = grid.points if isinstance(grid, Grid) else np.asarray(grid, dtype=float).ravel()
    if pts.size == 0:
        raise ValueError("grid must be nonempty")
    key = (spec, pts.tobytes())
    hit = _MATRIX_CACHE.get(key)
    if hit is not None:
        return hit
    if spec.kind == "kebm" and spec.h > 0:
        (prof,), lengths = _kebm_profiles([_check_domain(pts)], spec)
        K = (prof * lengths) @ prof.T
    else:
        K = cross_kernel(spec, pts, pts)
    K = 0.5 * (K + K.T)
    tr = np.trace(K)
    if K.shape[0] > 1:
        lam_min = np.linalg.eigvalsh(K)[0]
        if lam_min < -1e-8 * tr:
            raise KernelSpecError(
                f"{spec.label}: kernel matrix not PSD (min eigenvalue {lam_min:.3e})")
    K.setflags(write=False)
    if len(_MATRIX_CACHE) >= _CACHE_LIMIT:
        _MATRIX_CACHE.pop(next(iter(_MATRIX_CACHE)))
    _MATRIX_CACHE[key] = K
    return K


def psd_factor(K: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``K`` with escalating diagonal jitter.

    Jitter goes from 0 through ``1e-12 * trace`` up to ``1e-8 * trace``.
    """
    K = 0.5 * (K + K.T)
    tr = max(np.trace(K), np.finfo(float).tiny)
    eye = np.eye(K.shape[0])
    for jitter in (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8):
        try:
            return np.linalg.cholesky(K + jitter * tr * eye)
        except np.linalg.LinAlgError:
            continue
    raise SamplingError("covariance factorization failed after jitter up to 1e-8 * trace")


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Per-curve (time, value) observations.

    Dense sets keep their values as an ``(n, p)`` array aligned with
    ``grid``; irregular sets keep one sorted time array and one value array
    per curve.
    """

    regime: str
    values: Union[np.ndarray, tuple]
    times: tuple = ()
    grid: Grid | None = None
    noise_sd: float = 0.0

    @classmethod
    def dense(cls, grid: Grid, values, noise_sd: float = 0.0) -> "ObservationSet":
        Y = np.atleast_2d(np.asarray(values, dtype=float))
        if Y.shape[1] != len(grid):
            raise ValueError(f"values have {Y.shape[1]} columns, grid has {len(grid)} points")
        if not np.all(np.isfinite(Y)):
            raise ValueError("dense observations must not contain missing values")
        return cls("dense", Y, grid=grid, noise_sd=float(noise_sd))

    @classmethod
    def irregular(cls, times: Sequence, values: Sequence, noise_sd: float = 0.0) -> "ObservationSet":
        ts, ys = [], []
        for t, y in zip(times, values):
            t = np.asarray(t, dtype=float).ravel()
            y = np.asarray(y, dtype=float).ravel()
            if t.shape != y.shape:
                raise ValueError("times and values must have equal length per curve")
            _check_domain(t)
            order = np.argsort(t, kind="stable")
            ts.append(t[order])
            ys.append(y[order])
        if len(ts) != len(values):
            raise ValueError("times and values must describe the same number of curves")
        return cls("irregular", tuple(ys), times=tuple(ts), noise_sd=float(noise_sd))

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def is_dense(self) -> bool:
        return self.regime == "dense"

    def curves(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Iterate over ``(times, values)`` per curve."""
        if self.is_dense:
            for y in self.values:
                yield self.grid.points, y
        else:
            yield from zip(self.times, self.values)

    def scaled(self, c: float) -> "ObservationSet":
        """Copy with every observed value multiplied by ``c``."""
        if self.is_dense:
            return ObservationSet.dense(self.grid, c * self.values, self.noise_sd * abs(c))
        return ObservationSet.irregular(self.times, [c * y for y in self.values],
                                        self.noise_sd * abs(c))

    def subset(self, index) -> "ObservationSet":
        """Curves selected by an integer index array (dense only)."""
        if not self.is_dense:
            raise ValueError("subset is only supported for dense observations")
        return ObservationSet.dense(self.grid, self.values[np.asarray(index)], self.noise_sd)


def seed_sequence(seed) -> np.random.SeedSequence:
    """``SeedSequence(seed)``, passing an existing sequence through."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def sample_curves(spec: KernelSpec, design, n: int, noise_sd: float = 0.0,
                  seed=None) -> ObservationSet:
    """Draw ``n`` i.i.d. mean-zero Gaussian curves.

    Parameters
    ----------
    spec : KernelSpec
        Covariance of the latent process.
    design : Grid or Irregular
        Shared grid (dense) or number of uniform times per curve.
    n : int
        Number of curves.
    noise_sd : float
        Standard deviation of additive i.i.d. Gaussian measurement noise.
    seed : int, SeedSequence or Generator, optional
        Output is a deterministic function of the seed.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if noise_sd < 0:
        raise ValueError("noise_sd must be nonnegative")
    rng = np.random.default_rng(seed)
    if isinstance(design, Grid):
        L = psd_factor(kernel_matrix(spec, design))
        Y = rng.standard_normal((n, len(design))) @ L.T
        if noise_sd > 0:
            Y = Y + noise_sd * rng.standard_normal(Y.shape)
        return ObservationSet.dense(design, Y, noise_sd)
    if isinstance(design, Irregular):
        times, values = [], []
        for _ in range(n):
            t = np.sort(rng.uniform(0.0, 1.0, design.r))
            L = psd_factor(cross_kernel(spec, t, t))
            y = L @ rng.standard_normal(design.r)
            if noise_sd > 0:
                y = y + noise_sd * rng.standard_normal(design.r)
            times.append(t)
            values.append(y)
        return ObservationSet.irregular(times, values, noise_sd)
    raise TypeError("design must be a Grid or an Irregular instance")
