"""Adaptive threshold selection by sequential likelihood-ratio testing.

Observations are ranked by decreasing time, ``t_1 >= t_2 >= ... >= t_n``;
ranks are 1-based throughout this module so that the window rules
``ceil(zeta' k) <= l <= floor((1 - zeta'') k)`` read as written.

Procedure
---------
1. Walk a uniform grid of ranks ``k_1 < k_2 < ...`` (thresholds moving
   down in time). At each ``k`` test a single Pareto tail above ``t_k``
   against a tail with a break at ``t_l`` for every ``l`` in the window, using

       LR(t_k, t_l) = n_{k,l} K(lambda_{k,l}, theta_k) + n_l K(theta_l, theta_k).

   The first ``k`` where ``max_l LR > D`` is the breaking point ``k_hat``.
2. Inside the window of ``k_hat`` pick the ``l`` maximising the penalised
   likelihood ``n_l K(theta_l, theta_{k_hat})``; the threshold is ``t_l``.

The critical value ``D`` is calibrated by simulation under a standard
Pareto law (:func:`calibrate_D`).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cox import breslow_baseline
from .errors import SelectionError
from .tail import TailFit, hill_theta, kl_pareto, _exceedance_sums

__all__ = [
    "SelectionParams",
    "ThresholdSelection",
    "ThreePartModel",
    "RankTable",
    "build_grid",
    "window",
    "lambda_hat",
    "fit_three_part",
    "lr_statistic",
    "penalized_likelihood",
    "find_breaking_point",
    "select_threshold",
    "sweep_max_lr",
    "calibrate_D",
]

_EPS = 1e-9


@dataclass(frozen=True)
class SelectionParams:
    """Tuning constants of the selection procedure.

    ``D`` may be left as ``None`` when only calibration is intended.
    """

    n_grid: int = 100
    zeta_prime: float = 0.25
    zeta_second: float = 0.05
    D: float | None = None

    def __post_init__(self):
        if not (0 < self.zeta_prime < 0.5 and 0 < self.zeta_second < 0.5):
            raise ValueError("zeta' and zeta'' must lie in (0, 0.5)")
        if self.n_grid < 1:
            raise ValueError("n_grid must be positive")
        if self.D is not None and not self.D >= 0:
            raise ValueError("critical value D must be non-negative")

    def with_D(self, D):
        return replace(self, D=float(D))


def window(k, params):
    """Inclusive rank window ``(lo, hi)`` of candidate break points for ``k``."""
    lo = max(1, math.ceil(params.zeta_prime * k - _EPS))
    hi = min(k - 1, math.floor((1 - params.zeta_second) * k + _EPS))
    return lo, hi


class RankTable:
    """Per-rank exceedance statistics of a sample in descending time order.

    For every rank ``r`` (1-based) with threshold ``t_r``:

    ``n_tau[r]``
        events strictly above ``t_r``;
    ``num[r]``
        ``sum_{t_i > t_r} w_i ln(t_i / t_r)`` with ``w_i = exp(beta.z_i)``;
    ``theta[r]``
        ``num / n_tau`` (NaN where ``n_tau == 0``).

    Arrays are padded at index 0 so that ``arr[r]`` is rank ``r``.
    ``num`` is accumulated from non-negative log-gaps, which keeps it free of
    cancellation and exactly invariant to rescaling of the times up to
    rounding.
    """

    def __init__(self, sample, beta):
        t, d, z = sample.sorted()
        eta = z @ np.asarray(beta, dtype=float) if z.shape[1] else np.zeros(t.size)
        w = np.exp(eta)
        n = t.size
        self.n = n
        self.t = np.concatenate(([np.inf], t))
        self.status = np.concatenate(([0], d))
        # first 0-based position of each tie block = #obs strictly above
        above = np.searchsorted(-t, -t, side="left")
        cum_e = np.concatenate(([0], np.cumsum(d)))
        gaps = np.log(t[:-1] / t[1:]) if n > 1 else np.zeros(0)
        cum_w = np.cumsum(w)
        num0 = np.concatenate(([0.0], np.cumsum(cum_w[:-1] * gaps)))
        n_tau = cum_e[above]
        with np.errstate(divide="ignore", invalid="ignore"):
            theta = np.where(n_tau > 0, num0 / n_tau, np.nan)
        self.n_tau = np.concatenate(([0], n_tau))
        self.num = np.concatenate(([0.0], num0))
        self.theta = np.concatenate(([np.nan], theta))

    def lr_row(self, k, lo, hi):
        """LR(t_k, t_l) for ``l = lo..hi``; NaN where the pair is not testable."""
        ls = np.arange(lo, hi + 1)
        if ls.size == 0:
            return ls, np.zeros(0)
        n_l = self.n_tau[ls]
        n_kl = self.n_tau[k] - n_l
        ok = (n_l >= 1) & (n_kl >= 1) & (self.t[ls] > self.t[k])
        out = np.full(ls.size, np.nan)
        if ok.any():
            th_k = self.theta[k]
            lam = (self.num[k] - self.num[ls[ok]]) / n_kl[ok]
            out[ok] = n_kl[ok] * kl_pareto(lam, th_k) + n_l[ok] * kl_pareto(self.theta[ls[ok]], th_k)
        return ls, out

    def pen_row(self, k, lo, hi):
        """Penalised likelihood ``n_l K(theta_l, theta_k)`` for ``l = lo..hi``."""
        ls = np.arange(lo, hi + 1)
        n_l = self.n_tau[ls]
        ok = (n_l >= 1) & (self.t[ls] > self.t[k])
        out = np.full(ls.size, np.nan)
        if ok.any():
            out[ok] = n_l[ok] * kl_pareto(self.theta[ls[ok]], self.theta[k])
        return ls, out

    def lr_matrix(self, ks, params):
        """LR over every grid rank (rows) and every window rank (columns, 1..n).

        Entries outside a row's window or not testable are NaN.
        """
        ks = np.asarray(ks)
        n = self.n
        ls = np.arange(1, n + 1)
        lo = np.maximum(1, np.ceil(params.zeta_prime * ks - _EPS)).astype(int)
        hi = np.minimum(ks - 1, np.floor((1 - params.zeta_second) * ks + _EPS)).astype(int)
        n_l = self.n_tau[ls][None, :]
        n_k = self.n_tau[ks][:, None]
        n_kl = n_k - n_l
        mask = (
            (ls[None, :] >= lo[:, None])
            & (ls[None, :] <= hi[:, None])
            & (n_l >= 1)
            & (n_kl >= 1)
            & (self.t[ls][None, :] > self.t[ks][:, None])
        )
        out = np.full(mask.shape, np.nan)
        if not mask.any():
            return out
        rows, cols = np.nonzero(mask)
        kk = ks[rows]
        ll = cols + 1
        nkl = n_kl[rows, cols]
        th_k = self.theta[kk]
        lam = (self.num[kk] - self.num[ll]) / nkl
        out[rows, cols] = nkl * kl_pareto(lam, th_k) + self.n_tau[ll] * kl_pareto(self.theta[ll], th_k)
        return out


def build_grid(sample, beta, n_grid):
    """Uniform grid of ranks from ``k_min`` to ``n`` inclusive.

    ``k_min`` is the smallest rank whose threshold has at least two events
    strictly above it. The grid has ``min(n_grid, n - k_min + 1)`` points.
    """
    if sample.n < 3:
        raise SelectionError("at least 3 observations are needed to build a grid")
    if sample.status.sum() < 2:
        raise SelectionError("at least 2 events are needed to build a grid")
    return _grid_from_table(RankTable(sample, beta), n_grid)


def _grid_from_table(table, n_grid):
    n = table.n
    ok = np.flatnonzero(table.n_tau[1:] >= 2)
    if ok.size == 0:
        raise SelectionError("no rank has two events above it")
    k_min = int(ok[0]) + 1
    size = min(n_grid, n - k_min + 1)
    grid = np.unique(np.rint(np.linspace(k_min, n, size)).astype(int))
    return grid


def lambda_hat(sample, beta, s, tau):
    """Middle-segment index ``(theta_s n_s - theta_tau n_tau) / n_{s,tau}``.

    Events are counted in ``(s, tau]``.
    """
    s, tau = float(s), float(tau)
    if not s < tau:
        raise ValueError("need s < tau")
    num_s, n_s = _exceedance_sums(sample, beta, s)
    num_t, n_t = _exceedance_sums(sample, beta, tau)
    n_st = n_s - n_t
    if n_st < 1:
        raise SelectionError(f"no events in ({s:g}, {tau:g}]")
    return (num_s - num_t) / n_st


@dataclass(frozen=True)
class ThreePartModel:
    """Baseline with a break: Pareto index ``lam`` on ``(s, tau]`` and ``theta`` beyond.

    ``relative_survival(x)`` is ``S0(x) / S0(s)`` for ``x >= s``; the curve is
    continuous at both ``s`` and ``tau``.
    """

    s: float
    tau: float
    lam: float
    theta: float

    def __post_init__(self):
        if not (0 < self.s <= self.tau):
            raise ValueError("need 0 < s <= tau")
        if not (self.lam > 0 and self.theta > 0):
            raise ValueError("indices must be positive")

    def relative_survival(self, x):
        x = np.asarray(x, dtype=float)
        mid = np.minimum(np.maximum(x, self.s), self.tau)
        out = (mid / self.s) ** (-1 / self.lam)
        out = out * np.where(x > self.tau, (np.maximum(x, self.tau) / self.tau) ** (-1 / self.theta), 1.0)
        return out if out.ndim else float(out)

    def hazard(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > self.tau, 1 / (self.theta * x), 1 / (self.lam * x))


def fit_three_part(sample, beta, s, tau):
    """Quasi-likelihood fit of :class:`ThreePartModel` at fixed ``s < tau``."""
    lam = lambda_hat(sample, beta, s, tau)
    theta = hill_theta(sample, beta, tau).theta
    return ThreePartModel(s=float(s), tau=float(tau), lam=lam, theta=theta)


def _t_at(sample, rank):
    return float(sample.times[sample.order[rank - 1]])


def lr_statistic(sample, beta, k, l):
    """Likelihood-ratio statistic for a break at rank ``l`` above threshold rank ``k``.

    Computed directly from exceedance sums; :class:`RankTable` is the
    vectorised equivalent.
    """
    if not 1 <= l < k <= sample.n:
        raise ValueError("need 1 <= l < k <= n")
    t_k, t_l = _t_at(sample, k), _t_at(sample, l)
    num_k, n_k = _exceedance_sums(sample, beta, t_k)
    num_l, n_l = _exceedance_sums(sample, beta, t_l)
    if n_l < 1:
        raise SelectionError(f"no events above t_{l}")
    th_k = num_k / n_k
    th_l = num_l / n_l
    lam = lambda_hat(sample, beta, t_k, t_l)
    n_kl = n_k - n_l
    return n_kl * kl_pareto(lam, th_k) + n_l * kl_pareto(th_l, th_k)


def penalized_likelihood(sample, beta, k_hat, l):
    """``n_l K(theta_l, theta_{k_hat})``, the second summand of the LR statistic."""
    if not 1 <= l < k_hat <= sample.n:
        raise ValueError("need 1 <= l < k_hat <= n")
    num_k, n_k = _exceedance_sums(sample, beta, _t_at(sample, k_hat))
    num_l, n_l = _exceedance_sums(sample, beta, _t_at(sample, l))
    if n_l < 1:
        raise SelectionError(f"no events above t_{l}")
    return n_l * kl_pareto(num_l / n_l, num_k / n_k)


def find_breaking_point(sample, beta, params, table=None, grid=None):
    """First grid rank where ``max_l LR > D``.

    Returns
    -------
    k_hat : int
    exceeded : bool
        False when ``D`` is never exceeded; ``k_hat`` is then the last grid
        rank.
    """
    if params.D is None:
        raise ValueError("params.D must be set (see calibrate_D)")
    table = RankTable(sample, beta) if table is None else table
    grid = _grid_from_table(table, params.n_grid) if grid is None else grid
    for k in grid:
        lo, hi = window(int(k), params)
        _, row = table.lr_row(int(k), lo, hi)
        if row.size and np.any(row > params.D):
            return int(k), True
    return int(grid[-1]), False


@dataclass(frozen=True, eq=False)
class ThresholdSelection:
    """Outcome of :func:`select_threshold`.

    ``profile`` holds ``(l, penalised likelihood)`` rows, ascending in ``l``.
    """

    grid: np.ndarray
    k_hat: int
    s_hat: float
    profile: np.ndarray
    l_hat: int
    tau_hat: float
    theta_hat: float
    exceeded: bool
    params: SelectionParams
    tail: TailFit = field(repr=False)

    def to_dict(self):
        return {
            "grid": [int(k) for k in self.grid],
            "k_hat": self.k_hat,
            "s_hat": self.s_hat,
            "profile": [[int(l), float(v)] for l, v in self.profile],
            "l_hat": self.l_hat,
            "tau_hat": self.tau_hat,
            "theta_hat": self.theta_hat,
            "D": self.params.D,
            "exceeded": self.exceeded,
            "n_grid": self.params.n_grid,
            "zeta_prime": self.params.zeta_prime,
            "zeta_second": self.params.zeta_second,
        }


def select_threshold(sample, beta, params, cox=None):
    """Breaking point search followed by penalised-likelihood choice of ``tau``.

    Ties in the penalised profile go to the smaller rank (larger threshold).

    Raises
    ------
    SelectionError
        If the window of the breaking point contains no admissible rank.
    """
    table = RankTable(sample, beta)
    grid = _grid_from_table(table, params.n_grid)
    k_hat, exceeded = find_breaking_point(sample, beta, params, table=table, grid=grid)
    lo, hi = window(k_hat, params)
    ls, pen = table.pen_row(k_hat, lo, hi)
    ok = np.isfinite(pen)
    if not ok.any():
        raise SelectionError(f"selection window empty at k_hat={k_hat}")
    profile = np.column_stack((ls[ok], pen[ok]))
    l_hat = int(profile[np.argmax(profile[:, 1]), 0])
    tau_hat = float(table.t[l_hat])
    if cox is None:
        cox = breslow_baseline(sample, beta)
    tail = hill_theta(sample, beta, tau_hat, cox=cox)
    return ThresholdSelection(
        grid=grid,
        k_hat=k_hat,
        s_hat=float(table.t[k_hat]),
        profile=profile,
        l_hat=l_hat,
        tau_hat=tau_hat,
        theta_hat=tail.theta,
        exceeded=exceeded,
        params=params,
        tail=tail,
    )


def sweep_max_lr(sample, beta, params):
    """Largest LR statistic over every grid rank and every window rank."""
    table = RankTable(sample, beta)
    grid = _grid_from_table(table, params.n_grid)
    mat = table.lr_matrix(grid, params)
    return float(np.nanmax(mat)) if np.isfinite(mat).any() else 0.0


def replication_rng(seed, replication):
    """Independent generator for replication ``replication`` of run ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replication,)))


def _pareto_null_sample(n, rng, theta, censor_theta):
    from .data import SurvivalSample

    x = rng.uniform(size=n) ** (-theta)
    if censor_theta is None:
        return SurvivalSample(x, np.ones(n, dtype=int))
    c = rng.uniform(size=n) ** (-censor_theta)
    return SurvivalSample(np.minimum(x, c), (x <= c).astype(int))


def _calibration_chunk(args):
    n, params, seed, reps, theta, censor_theta = args
    out = []
    for r in reps:
        rng = replication_rng(seed, r)
        sample = _pareto_null_sample(n, rng, theta, censor_theta)
        out.append(sweep_max_lr(sample, np.zeros(0), params))
    return out


def calibration_maxima(n, params, n_mc, seed, theta=1.0, censor_theta=None, n_jobs=1):
    """Per-replication sweep maxima of the LR statistic under a Pareto null."""
    reps = list(range(n_mc))
    if n_jobs is None or n_jobs <= 1:
        return np.array(_calibration_chunk((n, params, seed, reps, theta, censor_theta)))
    chunks = [reps[i::n_jobs] for i in range(n_jobs)]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        parts = list(ex.map(_calibration_chunk, [(n, params, seed, c, theta, censor_theta) for c in chunks]))
    maxima = np.empty(n_mc)
    for c, vals in zip(chunks, parts):
        maxima[c] = vals
    return maxima


def calibrate_D(n, params=None, quantile=0.99, n_mc=2000, seed=0, theta=1.0, censor_theta=None, n_jobs=1):
    """Critical value as the ``quantile`` of the sweep-maximum LR statistic.

    Each replication draws ``n`` standard Pareto times (index ``theta``, no
    covariates), optionally censored by an independent Pareto law with index
    ``censor_theta``, and records the maximum LR over the whole sequential
    sweep. The result is bit-identical for a given seed whatever ``n_jobs``.
    """
    if not 0 < quantile < 1:
        raise ValueError("quantile must lie in (0, 1)")
    if n_mc < 100:
        raise ValueError("n_mc must be at least 100")
    params = SelectionParams() if params is None else params
    maxima = calibration_maxima(n, params, n_mc, seed, theta, censor_theta, n_jobs)
    return float(np.quantile(maxima, quantile))
