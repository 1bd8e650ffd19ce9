"""Heavy-tailed laws, Cox-model data generation and Monte-Carlo error studies.

Random streams
--------------
Replication ``r`` of a run with seed ``s`` draws from
``numpy.random.default_rng(SeedSequence(s, spawn_key=(r,)))`` in this order:
covariates ``(n, p)``, failure uniforms ``(n,)``, censoring draws ``(n,)``.
Reports are therefore bit-identical for a given seed whatever the number of
worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .aggregation import aggregate_adaptive, aggregate_simple
from .cox import breslow_baseline, fit_beta
from .data import SurvivalSample
from .errors import CoxTailError, DataError
from .tail import _baseline_cum_hazard, hill_theta
from .threshold import SelectionParams, calibrate_D, replication_rng, select_threshold

__all__ = [
    "TruncatedCauchy",
    "LogGamma",
    "Pareto",
    "law_from_dict",
    "law_survival",
    "law_quantile",
    "law_density",
    "geometric_grid",
    "SimConfig",
    "ConfigError",
    "simcauch1_config",
    "simcauch2_config",
    "loggamma_config",
    "simulate_cox_sample",
    "rel_mse",
    "avg_rel_mse",
    "censoring_rate_above",
    "MCReport",
    "run_monte_carlo",
]


def _open_unit(u):
    # isf is singular at 0 (and at 1 for laws starting at 0)
    return np.clip(u, np.finfo(float).tiny, 1.0)


class _Law:
    kind = ""

    def cdf(self, x):
        return 1.0 - self.survival(x)

    def quantile(self, u):
        return self.isf(1.0 - np.asarray(u, dtype=float))

    def sample(self, rng, size):
        return self.isf(_open_unit(rng.uniform(size=size)))

    def to_dict(self):
        return {"kind": self.kind, **asdict(self)}


@dataclass(frozen=True)
class TruncatedCauchy(_Law):
    """Cauchy law with location ``x0`` and scale ``gamma`` conditioned on ``X > 0``.

    ``S(x) = S_c((x - x0)/gamma) / S_c(-x0/gamma)`` with the standard Cauchy
    survival ``S_c(y) = 1/2 - arctan(y)/pi``. Tail index 1.
    """

    x0: float = 0.0
    gamma: float = 1.0
    kind = "truncated_cauchy"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("Cauchy scale must be positive")

    @property
    def tail_index(self):
        return 1.0

    @staticmethod
    def _sc(y):
        # 1/2 - arctan(y)/pi without cancellation for large y
        return np.arctan2(1.0, y) / np.pi

    def _norm(self):
        return self._sc(-self.x0 / self.gamma)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        s = self._sc((x - self.x0) / self.gamma) / self._norm()
        return np.where(x <= 0, 1.0, s)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        y = (x - self.x0) / self.gamma
        f = 1.0 / (np.pi * self.gamma * (1 + y * y)) / self._norm()
        return np.where(x < 0, 0.0, f)

    def isf(self, s):
        a = np.pi * np.asarray(s, dtype=float) * self._norm()
        return self.x0 + self.gamma * np.cos(a) / np.sin(a)


@dataclass(frozen=True)
class LogGamma(_Law):
    """``exp(G)`` with ``G ~ Gamma(shape a, rate b)``; support ``(1, inf)``, tail index ``1/b``."""

    a: float = 1.0
    b: float = 1.0
    kind = "log_gamma"

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("log-Gamma parameters must be positive")

    @property
    def tail_index(self):
        return 1.0 / self.b

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        lx = np.log(np.maximum(x, 1.0))
        return np.where(x <= 1, 1.0, special.gammaincc(self.a, self.b * lx))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        lx = np.log(np.maximum(x, 1.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            logf = (
                self.a * np.log(self.b)
                + (self.a - 1) * np.log(lx)
                - special.gammaln(self.a)
                - (self.b + 1) * np.log(np.maximum(x, 1.0))
            )
        return np.where(x <= 1, 0.0, np.exp(logf))

    def isf(self, s):
        return np.exp(special.gammainccinv(self.a, np.asarray(s, dtype=float)) / self.b)

    def sample(self, rng, size):
        return np.exp(rng.gamma(self.a, 1.0 / self.b, size=size))


@dataclass(frozen=True)
class Pareto(_Law):
    """Standard Pareto law, ``S(x) = x ** (-1/theta)`` on ``[1, inf)``."""

    theta: float = 1.0
    kind = "pareto"

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("Pareto index must be positive")

    @property
    def tail_index(self):
        return self.theta

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 1, 1.0, np.maximum(x, 1.0) ** (-1.0 / self.theta))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        xm = np.maximum(x, 1.0)
        return np.where(x < 1, 0.0, xm ** (-1.0 / self.theta - 1) / self.theta)

    def isf(self, s):
        return np.asarray(s, dtype=float) ** (-self.theta)


_LAWS = {cls.kind: cls for cls in (TruncatedCauchy, LogGamma, Pareto)}


def law_from_dict(d):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _LAWS:
        raise ValueError(f"unknown law kind {kind!r}; expected one of {sorted(_LAWS)}")
    return _LAWS[kind](**d)


def law_survival(law, x):
    return law.survival(x)


def law_quantile(law, u):
    """Inverse CDF; ``u`` must lie in ``(0, 1)``."""
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("u must lie in (0, 1)")
    return law.quantile(u)


def law_density(law, x):
    return law.density(x)


def geometric_grid(lo=0.1, hi=100.0, num=100):
    return np.geomspace(lo, hi, num)


class ConfigError(DataError):
    """Invalid simulation configuration; the message starts with the field path."""


@dataclass(frozen=True)
class SimConfig:
    """Monte-Carlo study settings.

    ``critical_value=None`` calibrates ``D`` for ``n`` before the run using
    ``calibration_n_mc`` Pareto replications seeded with
    ``calibration_seed`` (``seed + 1`` by default). ``m0_frac=None`` selects
    the smallest admissible first rank for simple aggregation.
    ``censoring=None`` produces uncensored samples.
    """

    n: int
    n_mc: int
    beta: tuple = (-0.5,)
    covariate_low: float = -1.0
    covariate_high: float = 1.0
    failure: _Law = field(default_factory=TruncatedCauchy)
    censoring: _Law | None = field(default_factory=lambda: TruncatedCauchy(0.0, 2.0))
    eval_points: tuple = (100.0, 200.0, 300.0, 400.0, 500.0)
    arel_grid: tuple = tuple(geometric_grid())
    seed: int = 0
    M: int = 10
    m0_frac: float | None = 0.06
    selection: SelectionParams = field(default_factory=SelectionParams)
    critical_value: float | None = None
    calibration_n_mc: int = 1000
    calibration_quantile: float = 0.99
    calibration_seed: int | None = None
    fixed_taus: tuple = ()
    estimate_beta: bool = False

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in np.atleast_1d(self.beta)))
        object.__setattr__(self, "eval_points", tuple(float(x) for x in self.eval_points))
        object.__setattr__(self, "arel_grid", tuple(float(x) for x in self.arel_grid))
        object.__setattr__(self, "fixed_taus", tuple(float(x) for x in self.fixed_taus))
        checks = [
            ("n", self.n >= 3, "must be >= 3"),
            ("n_mc", self.n_mc >= 1, "must be >= 1"),
            ("M", self.M >= 1, "must be >= 1"),
            ("covariate_high", self.covariate_high >= self.covariate_low, "must be >= covariate_low"),
            ("eval_points", all(x > 0 for x in self.eval_points), "must be positive"),
            ("eval_points", list(self.eval_points) == sorted(self.eval_points), "must be ascending"),
            ("arel_grid", all(x > 0 for x in self.arel_grid), "must be positive"),
            ("fixed_taus", all(x > 0 for x in self.fixed_taus), "must be positive"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{name}: {msg}")

    @property
    def D(self):
        return self.critical_value

    def to_dict(self):
        return {
            "n": self.n,
            "n_mc": self.n_mc,
            "beta": list(self.beta),
            "covariate_low": self.covariate_low,
            "covariate_high": self.covariate_high,
            "failure": self.failure.to_dict(),
            "censoring": None if self.censoring is None else self.censoring.to_dict(),
            "eval_points": list(self.eval_points),
            "arel_grid": list(self.arel_grid),
            "seed": self.seed,
            "M": self.M,
            "m0_frac": self.m0_frac,
            "selection": {
                "n_grid": self.selection.n_grid,
                "zeta_prime": self.selection.zeta_prime,
                "zeta_second": self.selection.zeta_second,
            },
            "critical_value": self.critical_value,
            "calibration_n_mc": self.calibration_n_mc,
            "calibration_quantile": self.calibration_quantile,
            "calibration_seed": self.calibration_seed,
            "fixed_taus": list(self.fixed_taus),
            "estimate_beta": self.estimate_beta,
        }

    @classmethod
    def from_dict(cls, d):
        """Build a config from parsed JSON, reporting the offending field path."""
        if not isinstance(d, dict):
            raise ConfigError("<root>: expected an object")
        known = set(cls.__dataclass_fields__)
        for key in d:
            if key not in known:
                raise ConfigError(f"{key}: unknown field")
        for key in ("n", "n_mc"):
            if key not in d:
                raise ConfigError(f"{key}: required field missing")
        kw = {}
        for key, val in d.items():
            try:
                if key == "censoring" and val is None:
                    kw[key] = None
                elif key in ("failure", "censoring"):
                    kw[key] = law_from_dict(val)
                elif key == "selection":
                    kw[key] = SelectionParams(**val)
                elif key in ("n", "n_mc", "M", "seed", "calibration_n_mc"):
                    if isinstance(val, bool) or not isinstance(val, int):
                        raise TypeError("expected an integer")
                    kw[key] = val
                elif key == "calibration_seed":
                    kw[key] = None if val is None else int(val)
                elif key in ("critical_value", "m0_frac"):
                    kw[key] = None if val is None else float(val)
                elif key == "estimate_beta":
                    kw[key] = bool(val)
                elif key in ("beta", "eval_points", "arel_grid", "fixed_taus"):
                    kw[key] = tuple(float(x) for x in val)
                else:
                    kw[key] = float(val)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: {exc}") from None
        return cls(**kw)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"<root>: invalid JSON ({exc})") from None
        return cls.from_dict(d)


def simcauch1_config(n=100, n_mc=200, seed=0, **kw):
    """Failure: Cauchy(0, 1) truncated at 0; censoring: Cauchy(0, 2) truncated at 0."""
    return SimConfig(n=n, n_mc=n_mc, seed=seed, failure=TruncatedCauchy(0, 1),
                     censoring=TruncatedCauchy(0, 2), **kw)


def simcauch2_config(n=100, n_mc=200, seed=0, **kw):
    """As :func:`simcauch1_config` with censoring Cauchy(10, 0.1)."""
    return SimConfig(n=n, n_mc=n_mc, seed=seed, failure=TruncatedCauchy(0, 1),
                     censoring=TruncatedCauchy(10, 0.1), **kw)


def loggamma_config(n=100, n_mc=200, seed=0, **kw):
    """Failure log-Gamma(2, 2), censoring log-Gamma(5, 3.5)."""
    return SimConfig(n=n, n_mc=n_mc, seed=seed, failure=LogGamma(2, 2),
                     censoring=LogGamma(5, 3.5), **kw)


def simulate_cox_sample(config, replication):
    """Draw one censored Cox-model sample.

    Failure times solve ``S0(x) = u ** exp(-beta.z)`` for uniform ``u``, so
    that ``S(x | z) = S0(x) ** exp(beta.z)``; censoring ignores covariates.
    """
    rng = replication_rng(config.seed, replication)
    beta = np.asarray(config.beta)
    n = config.n
    z = rng.uniform(config.covariate_low, config.covariate_high, size=(n, beta.size))
    u = _open_unit(rng.uniform(size=n))
    x = config.failure.isf(u ** np.exp(-(z @ beta)))
    if config.censoring is None:
        return SurvivalSample(x, np.ones(n, dtype=np.int8), z)
    c = config.censoring.sample(rng, n)
    return SurvivalSample(np.minimum(x, c), (x <= c).astype(np.int8), z)


def rel_mse(estimates, truth, return_excluded=False):
    """Mean of ``ln(S_hat / S) ** 2`` over replications.

    Zero estimates would contribute ``+inf``; they are excluded from the mean
    and their number is reported (as a warning, and in the return value when
    ``return_excluded`` is true).
    """
    est = np.asarray(estimates, dtype=float)
    if not 0 < truth <= 1:
        raise ValueError("truth must lie in (0, 1]")
    zero = est <= 0
    excluded = int(zero.sum())
    if excluded:
        warnings.warn(f"{excluded} zero estimates excluded from RelMSE", RuntimeWarning, stacklevel=2)
    vals = np.log(est[~zero] / truth) ** 2
    value = float(vals.mean()) if vals.size else float("inf")
    return (value, excluded) if return_excluded else value


def avg_rel_mse(values):
    """Arithmetic mean of RelMSE values over an evaluation grid."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty grid")
    return float(values.mean())


def censoring_rate_above(sample, tau):
    """Fraction of censored observations among those strictly above ``tau``."""
    above = sample.times > tau
    if not above.any():
        raise DataError(f"no observations above {tau:g}")
    return float(1.0 - sample.status[above].mean())


CORE_ESTIMATORS = ("nelson_aalen", "adaptive", "simple_aggregation", "adaptive_aggregation")


def fixed_name(tau):
    return f"fixed:{tau:g}"


@dataclass(eq=False)
class MCReport:
    """Monte-Carlo summary.

    ``rel_mse[name]`` is aligned with ``eval_points`` and ``arel_mse[name]``
    averages RelMSE over ``arel_grid``. ``failures[name]`` counts replications
    where the estimator could not be computed; they are excluded from its
    averages.
    """

    estimators: list
    eval_points: np.ndarray
    rel_mse: dict
    arel_grid: np.ndarray
    arel_mse: dict
    failures: dict
    n_mc: int
    seed: int
    mean_censoring_rate: float
    critical_value: float
    beta_hat: np.ndarray
    tau_hat: np.ndarray
    s_hat: np.ndarray
    exceeded: np.ndarray
    config: dict

    def ratio(self, num, den):
        """Pointwise RelMSE ratio ``num / den`` at the evaluation points."""
        return self.rel_mse[num] / self.rel_mse[den]

    def to_dict(self):
        return {
            "estimators": list(self.estimators),
            "eval_points": self.eval_points.tolist(),
            "rel_mse": {k: v.tolist() for k, v in self.rel_mse.items()},
            "arel_grid": self.arel_grid.tolist(),
            "arel_mse": dict(self.arel_mse),
            "failures": dict(self.failures),
            "n_mc": self.n_mc,
            "seed": self.seed,
            "mean_censoring_rate": self.mean_censoring_rate,
            "critical_value": self.critical_value,
            "beta_hat": self.beta_hat.tolist(),
            "tau_hat": self.tau_hat.tolist(),
            "s_hat": self.s_hat.tolist(),
            "exceeded": self.exceeded.tolist(),
            "config": self.config,
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is None:
            return text
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)

    def to_csv(self, path=None):
        """Flat ``estimator,x,rel_mse`` table over the evaluation points."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["estimator", "x", "rel_mse"])
        for name in self.estimators:
            for x, v in zip(self.eval_points, self.rel_mse[name]):
                w.writerow([name, repr(float(x)), repr(float(v))])
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _one_replication(config, r, points, D):
    sample = simulate_cox_sample(config, r)
    beta_true = np.asarray(config.beta)
    cens = 1.0 - sample.status.mean()
    if config.estimate_beta:
        try:
            beta = fit_beta(sample).beta
        except CoxTailError:
            return {}, cens, np.full(beta_true.size, np.nan), np.nan, np.nan, False
    else:
        beta = beta_true
    cox = breslow_baseline(sample, beta)
    cum_h = {}
    cum_h["nelson_aalen"] = cox.cum_hazard(points)
    tau_hat = s_hat = np.nan
    exceeded = False
    params = config.selection.with_D(D)
    sel = None
    try:
        sel = select_threshold(sample, beta, params, cox=cox)
        tau_hat, s_hat, exceeded = sel.tau_hat, sel.s_hat, sel.exceeded
        cum_h["adaptive"] = _baseline_cum_hazard(cox, sel.tau_hat, sel.theta_hat, points)
    except CoxTailError:
        pass
    try:
        agg = aggregate_simple(sample, beta, M=config.M, m0_frac=config.m0_frac, cox=cox)
        cum_h["simple_aggregation"] = agg.cum_hazard(points)
    except CoxTailError:
        pass
    if sel is not None:
        try:
            agg = aggregate_adaptive(sample, beta, sel, M=config.M, cox=cox)
            cum_h["adaptive_aggregation"] = agg.cum_hazard(points)
        except CoxTailError:
            pass
    for tau in config.fixed_taus:
        try:
            tail = hill_theta(sample, beta, tau, cox=cox)
            cum_h[fixed_name(tau)] = _baseline_cum_hazard(cox, tail.tau, tail.theta, points)
        except CoxTailError:
            pass
    return cum_h, cens, np.asarray(beta, dtype=float), tau_hat, s_hat, exceeded


def _run_chunk(args):
    config, reps, points, D = args
    return [_one_replication(config, r, points, D) for r in reps]


def run_monte_carlo(config, n_jobs=1):
    """Run the study described by ``config``.

    Each replication simulates a sample, uses the true ``beta`` (or fits it
    when ``config.estimate_beta``), and evaluates the baseline survival of:
    the Breslow/Nelson-Aalen estimator, the adaptive-threshold estimator,
    simple and adaptive aggregation, and a fixed-threshold estimator for each
    entry of ``config.fixed_taus``. Errors are measured against the true
    baseline survival of ``config.failure``.
    """
    D = config.critical_value
    if D is None:
        cal_seed = config.seed + 1 if config.calibration_seed is None else config.calibration_seed
        D = calibrate_D(
            config.n,
            config.selection,
            quantile=config.calibration_quantile,
            n_mc=config.calibration_n_mc,
            seed=cal_seed,
            n_jobs=n_jobs,
        )
    eval_pts = np.asarray(config.eval_points)
    arel = np.asarray(config.arel_grid)
    points = np.concatenate((eval_pts, arel))
    true_log_s = np.log(config.failure.survival(points))
    names = list(CORE_ESTIMATORS) + [fixed_name(t) for t in config.fixed_taus]

    reps = list(range(config.n_mc))
    if n_jobs is None or n_jobs <= 1:
        results = _run_chunk((config, reps, points, D))
    else:
        chunks = [reps[i::n_jobs] for i in range(n_jobs)]
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            parts = list(ex.map(_run_chunk, [(config, c, points, D) for c in chunks]))
        results = [None] * config.n_mc
        for c, part in zip(chunks, parts):
            for r, res in zip(c, part):
                results[r] = res

    sq = {name: np.full((config.n_mc, points.size), np.nan) for name in names}
    for r, (cum_h, *_rest) in enumerate(results):
        for name, h in cum_h.items():
            sq[name][r] = (-np.asarray(h) - true_log_s) ** 2
    failures = {name: int(np.isnan(sq[name][:, 0]).sum()) for name in names}
    rel, arel_mse = {}, {}
    ne = eval_pts.size
    for name in names:
        ok = ~np.isnan(sq[name][:, 0])
        if ok.any():
            m = sq[name][ok].mean(axis=0)
        else:
            m = np.full(points.size, np.nan)
        rel[name] = m[:ne]
        arel_mse[name] = float(m[ne:].mean()) if arel.size else float("nan")
    return MCReport(
        estimators=names,
        eval_points=eval_pts,
        rel_mse=rel,
        arel_grid=arel,
        arel_mse=arel_mse,
        failures=failures,
        n_mc=config.n_mc,
        seed=config.seed,
        mean_censoring_rate=float(np.mean([res[1] for res in results])),
        critical_value=float(D),
        beta_hat=np.array([res[2] for res in results]),
        tau_hat=np.array([res[3] for res in results]),
        s_hat=np.array([res[4] for res in results]),
        exceeded=np.array([res[5] for res in results]),
        config=config.to_dict(),
    )
