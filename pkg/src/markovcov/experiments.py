"""Experiment harness.

Each ``run_*`` function takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentResult` holding CSV tables, extra files and SVG figures.
Outputs depend only on the configuration, seed included: every cell draws
from a child of ``SeedSequence(config.seed)``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import svg
from .errors import NumericalError
from .estimation import ESTIMATORS, fit_estimator, l2_error
from .kriging import T0_POLICIES, kriging_error_benchmark, summarize_errors
from .markovtest import CALIBRATIONS, markov_test, power_curve, simulate_roc
from .processes import Grid, Irregular, KernelSpec, sample_curves, seed_sequence
from .tables import ResultTable, config_hash

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "ExperimentResult",
    "loglog_slope",
    "run_convergence",
    "run_estimate_one",
    "run_experiment",
    "run_kriging",
    "run_power",
    "run_roc",
    "run_surfaces",
    "run_test_one",
]

KINDS = ("convergence", "surfaces", "kriging", "power", "roc", "test-one", "estimate-one")
PROCESSES = ("bm", "ou", "kebm")

# Per-kind defaults for fields left as None.
_DEFAULTS = {
    "convergence": dict(process="bm", replicates=200, estimators=("markov", "empirical"),
                        n_grid=(50, 100, 200, 400, 800, 1600, 3200)),
    "surfaces": dict(process="ou", n=200, p=20, replicates=1,
                     estimators=("markov", "empirical", "smoothed", "triangular")),
    "kriging": dict(process="bm", n=200, p=20, replicates=1000,
                    estimators=("markov", "empirical", "smoothed", "triangular"),
                    n_grid=(50, 100, 200, 400), p_grid=(10, 20, 40)),
    "power": dict(process="kebm", n=500, replicates=500, p_grid=(20,),
                  h_grid=(0.0, 0.05, 0.1, 0.2, 0.3, 0.5)),
    "roc": dict(process="kebm", n=500, replicates=500, p_grid=(10, 100)),
    "test-one": dict(process="bm", n=500, p=20, replicates=1),
    "estimate-one": dict(process="bm", n=200, p=20, replicates=1,
                         estimators=("markov", "empirical")),
}


@dataclass
class ExperimentConfig:
    """Flat experiment configuration.

    Fields left as ``None`` take per-kind defaults when the config is
    resolved. ``p_ratio`` ties the grid size to ``n`` in convergence runs
    when ``p`` is unset. ``r > 0`` switches to the irregular design with
    ``r`` uniform times per curve (Markov estimator only).
    """

    kind: str = "convergence"
    process: str | None = None
    theta: float = 1.0
    sigma: float = 1.0
    h: float = 0.1
    q: int = 200
    normalize: bool = False
    n: int | None = None
    p: int | None = None
    r: int = 0
    noise_sd: float = 0.0
    noise: str = "known"
    alpha: float = 0.05
    replicates: int | None = None
    seed: int = 0
    out: str | None = None
    estimators: tuple | None = None
    calibration: str = "mc"
    draws: int = 10_000
    bandwidth: float = 0.1
    n_grid: tuple | None = None
    p_grid: tuple | None = None
    h_grid: tuple | None = None
    p_ratio: float = 0.2
    policy: str = "leave-one-out"
    t0: float | None = None
    ridge: float | None = None
    contour: bool = False
    resolution: int = 200
    n_jobs: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.kind in ("power", "roc") and self.p is not None and self.p_grid is None:
            self.p_grid = (self.p,)
        for key, val in _DEFAULTS[self.kind].items():
            if getattr(self, key) is None:
                setattr(self, key, val)
        for name in ("estimators", "n_grid", "p_grid", "h_grid"):
            val = getattr(self, name)
            if val is not None:
                setattr(self, name, tuple(val))
        if self.process not in PROCESSES:
            raise ValueError(f"process must be one of {', '.join(PROCESSES)}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        for name in ("n", "p", "replicates", "draws", "q", "resolution", "n_jobs"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("n_grid", "p_grid"):
            val = getattr(self, name)
            if val is not None and any(v <= 0 for v in val):
                raise ValueError(f"{name} entries must be positive")
        if self.r < 0 or self.r == 1:
            raise ValueError("r must be 0 (dense) or at least 2")
        if self.noise_sd < 0 or self.theta <= 0 or self.sigma <= 0 or self.h < 0:
            raise ValueError("noise_sd, theta, sigma and h must be nonnegative (theta, sigma positive)")
        if self.noise not in ("known", "estimate"):
            raise ValueError("noise must be 'known' or 'estimate'")
        if self.calibration not in CALIBRATIONS:
            raise ValueError(f"calibration must be one of {', '.join(CALIBRATIONS)}")
        if self.policy not in T0_POLICIES:
            raise ValueError(f"policy must be one of {', '.join(T0_POLICIES)}")
        for e in self.estimators or ():
            if e not in ESTIMATORS:
                raise ValueError(f"unknown estimator {e!r}; choose from {', '.join(ESTIMATORS)}")

    def spec(self) -> KernelSpec:
        if self.process == "bm":
            return KernelSpec.brownian()
        if self.process == "ou":
            return KernelSpec.ornstein_uhlenbeck(self.theta, self.sigma)
        return KernelSpec.kebm(self.h, self.q, self.normalize)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def provenance(self) -> dict:
        from . import __version__
        # out and n_jobs do not change results
        cfg = {k: v for k, v in self.as_dict().items() if k not in ("out", "n_jobs")}
        return {"experiment": self.kind, "config_hash": config_hash(cfg), "seed": self.seed,
                "version": __version__}


@dataclass
class ExperimentResult:
    """Tables, extra text files and SVG figures of one experiment run."""

    config: ExperimentConfig
    tables: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    figures: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def save(self, out=None) -> list[Path]:
        """Write everything under ``out`` (default ``config.out``)."""
        out = Path(out or self.config.out or ".")
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name, table in self.tables.items():
            path = out / f"{name}.csv"
            table.to_csv(path)
            written.append(path)
        for name, text in {**self.files, **self.figures}.items():
            path = out / name
            path.write_text(text)
            written.append(path)
        return written


def loglog_slope(x, y) -> tuple[float, float]:
    """Least-squares slope and intercept of ``log y`` on ``log x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(y) & (y > 0)
    if ok.sum() < 2:
        return float("nan"), float("nan")
    slope, icpt = np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)
    return float(slope), float(icpt)


def _check_geometric(levels):
    levels = np.asarray(levels, dtype=float)
    if levels.size < 4:
        raise ValueError("the n-grid needs at least 4 levels")
    ratios = levels[1:] / levels[:-1]
    if np.any(ratios <= 1) or np.ptp(ratios) > 0.05 * ratios.mean():
        raise ValueError("the n-grid must be increasing and geometric")


def _grid_size(cfg, n):
    if cfg.p is not None:
        return cfg.p
    return max(2, int(round(cfg.p_ratio * n)))


def _seeds(seed, count):
    return seed_sequence(seed).spawn(count)


# ---------------------------------------------------------------------------
# Convergence
# ---------------------------------------------------------------------------


def run_convergence(cfg: ExperimentConfig) -> ExperimentResult:
    """Mean L2 error per (estimator, n) and a log-log slope per estimator.

    All estimators at a given replicate see the same dataset. A failing
    fit is counted in the ``failures`` column and left out of the mean.
    """
    _check_geometric(cfg.n_grid)
    spec = cfg.spec()
    irregular = cfg.r > 0
    if irregular and set(cfg.estimators) - {"markov"}:
        raise ValueError("only the markov estimator handles the irregular design")
    noise_var = "estimate" if cfg.noise == "estimate" else cfg.noise_sd ** 2
    prov = cfg.provenance()
    table = ResultTable("convergence", ["estimator", "n", "p", "replicates", "failures",
                                        "mean_l2", "se_l2"], provenance=prov)
    for n, level_ss in zip(cfg.n_grid, _seeds(cfg.seed, len(cfg.n_grid))):
        p = _grid_size(cfg, n)
        design = Irregular(cfg.r) if irregular else Grid.regular(p)
        res = max(cfg.resolution, 2 * p)
        errs = {e: [] for e in cfg.estimators}
        fails = {e: 0 for e in cfg.estimators}
        for ss in level_ss.spawn(cfg.replicates):
            obs = sample_curves(spec, design, n, cfg.noise_sd, seed=ss)
            for e in cfg.estimators:
                try:
                    est = fit_estimator(e, obs, cfg.bandwidth, p=p, noise_var=noise_var)
                    errs[e].append(l2_error(est, spec, res))
                except NumericalError:
                    fails[e] += 1
        for e in cfg.estimators:
            v = np.array(errs[e])
            table.add(estimator=e, n=n, p=p, replicates=cfg.replicates, failures=fails[e],
                      mean_l2=float(v.mean()) if v.size else float("nan"),
                      se_l2=float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan"))
    slopes = ResultTable("convergence_slopes", ["estimator", "slope", "intercept"], provenance=prov)
    series = {}
    for e in cfg.estimators:
        sel = [r for r in table.records() if r["estimator"] == e]
        x = [r["n"] for r in sel]
        y = [r["mean_l2"] for r in sel]
        slope, icpt = loglog_slope(x, y)
        slopes.add(estimator=e, slope=slope, intercept=icpt)
        series[e] = (x, y)
    fig = svg.line_plot(series, title=f"L2 error, {spec.label}", xlabel="n", ylabel="L2 error",
                        logx=True, logy=True)
    return ExperimentResult(cfg, {"convergence": table, "convergence_slopes": slopes},
                            figures={"convergence.svg": fig},
                            summary={"slopes": {r["estimator"]: r["slope"] for r in slopes.records()}})


# ---------------------------------------------------------------------------
# Surfaces and single-dataset runs
# ---------------------------------------------------------------------------


def _fit_all(cfg, obs, p):
    fits = {}
    noise_var = "estimate" if cfg.noise == "estimate" else cfg.noise_sd ** 2
    for e in cfg.estimators:
        try:
            fits[e] = fit_estimator(e, obs, cfg.bandwidth, p=p, noise_var=noise_var)
        except NumericalError:
            fits[e] = None
    return fits


def _estimate_files(cfg, fits, prefix, prov):
    spec = cfg.spec()
    table = ResultTable(f"{prefix}_summary", ["estimator", "status", "l2_error"], provenance=prov)
    files = {}
    for e, est in fits.items():
        if est is None:
            table.add(estimator=e, status="failed", l2_error=float("nan"))
            continue
        files[f"{prefix}_{e}.csv"] = est.to_csv(provenance=prov)
        table.add(estimator=e, status="ok", l2_error=l2_error(est, spec, cfg.resolution))
    return table, files


def run_surfaces(cfg: ExperimentConfig) -> ExperimentResult:
    """Nodal matrices of every estimator fitted on one dense dataset, plus heat maps."""
    if cfg.r > 0:
        raise ValueError("surfaces need the dense design")
    spec = cfg.spec()
    obs = sample_curves(spec, Grid.regular(cfg.p), cfg.n, cfg.noise_sd, seed=cfg.seed)
    fits = _fit_all(cfg, obs, cfg.p)
    prov = cfg.provenance()
    table, files = _estimate_files(cfg, fits, "surface", prov)
    fig = svg.heatmaps({e: est.matrix for e, est in fits.items() if est is not None},
                       title=f"estimated covariance, {spec.label}, n={cfg.n}")
    return ExperimentResult(cfg, {"surfaces": table}, files, {"surfaces.svg": fig},
                            summary={"fits": fits})


def _one_dataset(cfg):
    spec = cfg.spec()
    design = Irregular(cfg.r) if cfg.r > 0 else Grid.regular(cfg.p)
    return sample_curves(spec, design, cfg.n, cfg.noise_sd, seed=cfg.seed)


def run_estimate_one(cfg: ExperimentConfig) -> ExperimentResult:
    """Simulate one dataset and fit each requested estimator."""
    obs = _one_dataset(cfg)
    if not obs.is_dense and set(cfg.estimators) - {"markov"}:
        raise ValueError("only the markov estimator handles the irregular design")
    fits = _fit_all(cfg, obs, cfg.p)
    prov = cfg.provenance()
    table, files = _estimate_files(cfg, fits, "estimate", prov)
    return ExperimentResult(cfg, {"estimate_summary": table}, files, summary={"fits": fits})


def run_test_one(cfg: ExperimentConfig) -> ExperimentResult:
    """Simulate one dense dataset and run the Markov test."""
    if cfg.r > 0:
        raise ValueError("the test needs the dense design")
    data_ss, mc_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    obs = sample_curves(cfg.spec(), Grid.regular(cfg.p), cfg.n, cfg.noise_sd, seed=data_ss)
    report = markov_test(obs, cfg.alpha, cfg.calibration, cfg.draws, seed=mc_ss)
    prov = cfg.provenance()
    return ExperimentResult(cfg, files={"test_report.csv": report.to_csv(provenance=prov)},
                            summary={"report": report})


# ---------------------------------------------------------------------------
# Kriging
# ---------------------------------------------------------------------------


def _kriging_rows(cfg, spec, p, n, seed):
    return kriging_error_benchmark(spec, cfg.estimators, p=p, n=n, policy=cfg.policy,
                                   t0=cfg.t0, replicates=cfg.replicates, ridge=cfg.ridge,
                                   seed=seed, bandwidth=cfg.bandwidth)


def run_kriging(cfg: ExperimentConfig) -> ExperimentResult:
    """Kriging error distributions, or an (n, p) MSE sweep when ``contour`` is set."""
    spec = cfg.spec()
    prov = cfg.provenance()
    if cfg.contour:
        return _run_kriging_contour(cfg, spec, prov)
    rows = _kriging_rows(cfg, spec, cfg.p, cfg.n, cfg.seed)
    errors = ResultTable("kriging_errors", ["estimator", "replicate", "t0", "error"], provenance=prov)
    for r in rows:
        errors.add(**r)
    summary = summarize_errors(rows)
    cols = ["estimator", "mse", "mse_se", "median_abs", "q25", "q75", "replicates"]
    table = ResultTable("kriging_summary", cols, provenance=prov)
    for s in summary:
        table.add(**s)
    fig = svg.boxplot(summary, title=f"kriging errors, {spec.label}, p={cfg.p}, n={cfg.n}")
    return ExperimentResult(cfg, {"kriging_errors": errors, "kriging_summary": table},
                            figures={"kriging.svg": fig},
                            summary={s["estimator"]: s for s in summary})


def _run_kriging_contour(cfg, spec, prov):
    cells = [(n, p) for n in cfg.n_grid for p in cfg.p_grid]
    long = ResultTable("kriging_contour", ["n", "p", "estimator", "mse", "mse_se"], provenance=prov)
    mse = {}
    for (n, p), ss in zip(cells, _seeds(cfg.seed, len(cells))):
        for s in summarize_errors(_kriging_rows(cfg, spec, p, n, ss)):
            long.add(n=n, p=p, estimator=s["estimator"], mse=s["mse"], mse_se=s["mse_se"])
            mse[(s["estimator"], n, p)] = s["mse"]
    tables = {"kriging_contour": long}
    names = list(dict.fromkeys(long.column("estimator")))
    for e in names:
        mat = ResultTable(f"kriging_contour_{e}", ["n"] + [f"p={p}" for p in cfg.p_grid],
                          provenance=prov)
        for n in cfg.n_grid:
            mat.rows.append([n] + [mse.get((e, n, p), float("nan")) for p in cfg.p_grid])
        tables[mat.name] = mat
    return ExperimentResult(cfg, tables)


# ---------------------------------------------------------------------------
# Power and ROC
# ---------------------------------------------------------------------------


def run_power(cfg: ExperimentConfig) -> ExperimentResult:
    """Rejection rates over the ``h`` grid for each ``p`` with Wilson intervals."""
    from statsmodels.stats.proportion import proportion_confint

    prov = cfg.provenance()
    table = ResultTable("power", ["p", "h", "power", "wilson_lo", "wilson_hi", "rejections",
                                  "replicates"], provenance=prov)
    series = {}
    for p, ss in zip(cfg.p_grid, _seeds(cfg.seed, len(cfg.p_grid))):
        rows = power_curve(cfg.h_grid, p=p, n=cfg.n, alpha=cfg.alpha, replicates=cfg.replicates,
                           seed=ss, calibration=cfg.calibration, draws=cfg.draws, q=cfg.q,
                           n_jobs=cfg.n_jobs)
        for r in rows:
            if r["replicates"]:
                lo, hi = proportion_confint(r["rejections"], r["replicates"], cfg.alpha, "wilson")
            else:
                lo = hi = float("nan")
            table.add(p=p, h=r["h"], power=r["power"], wilson_lo=float(lo), wilson_hi=float(hi),
                      rejections=r["rejections"], replicates=r["replicates"])
        series[f"p={p}"] = ([r["h"] for r in rows], [r["power"] for r in rows])
    fig = svg.line_plot(series, title=f"power, n={cfg.n}, alpha={cfg.alpha}", xlabel="h",
                        ylabel="rejection rate")
    return ExperimentResult(cfg, {"power": table}, figures={"power.svg": fig})


def run_roc(cfg: ExperimentConfig) -> ExperimentResult:
    """ROC of the test statistic, Brownian motion against the configured process."""
    alt = cfg.spec()
    prov = cfg.provenance()
    table = ResultTable("roc", ["p", "fpr", "tpr"], provenance=prov)
    auc = ResultTable("roc_auc", ["p", "auc"], provenance=prov)
    series = {}
    for p, ss in zip(cfg.p_grid, _seeds(cfg.seed, len(cfg.p_grid))):
        fpr, tpr, a = simulate_roc(KernelSpec.brownian(), alt, p, cfg.n, cfg.replicates, ss)
        for f, t in zip(fpr, tpr):
            table.add(p=p, fpr=float(f), tpr=float(t))
        auc.add(p=p, auc=a)
        series[f"p={p}"] = (fpr, tpr)
    fig = svg.line_plot(series, title=f"ROC, BM vs {alt.label}, n={cfg.n}", xlabel="FPR",
                        ylabel="TPR")
    return ExperimentResult(cfg, {"roc": table, "roc_auc": auc}, figures={"roc.svg": fig})


EXPERIMENTS = {
    "convergence": run_convergence,
    "surfaces": run_surfaces,
    "kriging": run_kriging,
    "power": run_power,
    "roc": run_roc,
    "test-one": run_test_one,
    "estimate-one": run_estimate_one,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return EXPERIMENTS[cfg.kind](cfg)
