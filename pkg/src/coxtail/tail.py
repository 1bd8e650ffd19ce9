"""Pareto tail beyond a threshold on top of the Breslow baseline.

Below the threshold ``tau`` the baseline survival is the nonparametric
``exp(-H0(x))``; above it the baseline hazard is ``1 / (theta x)``, so that

    S0(x) = S0(tau) * (x / tau) ** (-1 / theta),   x > tau,

and covariates act through the usual power ``S(x|z) = S0(x) ** exp(beta.z)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cox import CoxFit
from .errors import DataError, SelectionError

__all__ = [
    "kl_pareto",
    "TailFit",
    "SemiParamModel",
    "hill_theta",
    "snap_threshold",
    "fit_semiparametric",
    "semiparam_cum_hazard",
    "semiparam_survival",
    "semiparam_quantile",
    "step_quantile",
]


def kl_pareto(theta_a, theta_b):
    """Kullback-Leibler divergence between Pareto laws with indices a and b.

    ``K(a, b) = a/b - 1 - ln(a/b)``. Broadcasts over arrays. For ratios close
    to one a series expansion avoids the cancellation in the closed form.
    """
    a, b = np.broadcast_arrays(np.asarray(theta_a, dtype=float), np.asarray(theta_b, dtype=float))
    if np.any(~(a > 0)) or np.any(~(b > 0)):
        raise ValueError("Pareto indices must be positive")
    shape = a.shape
    dlt = np.atleast_1d((a - b) / b)
    out = dlt - np.log1p(dlt)
    small = np.abs(dlt) < 1e-2
    if np.any(small):
        # d - ln(1+d) = sum_{m>=2} (-1)^m d^m / m
        ds = dlt[small]
        acc = np.zeros_like(ds)
        for m in range(11, 1, -1):
            acc = acc * ds + (-1.0) ** m / m
        out[small] = acc * ds * ds
    out = out.reshape(shape)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class TailFit:
    """Pareto tail fitted above a threshold.

    ``numerator`` is ``sum_{t_i > tau} exp(beta.z_i) ln(t_i / tau)`` and
    ``n_tau`` the number of events strictly above ``tau``.
    """

    tau: float
    theta: float
    n_tau: int
    s0_at_tau: float
    numerator: float

    def to_dict(self):
        return {
            "tau": self.tau,
            "theta": self.theta,
            "n_tau": self.n_tau,
            "s0_at_tau": self.s0_at_tau,
            "numerator": self.numerator,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tau=float(d["tau"]),
            theta=float(d["theta"]),
            n_tau=int(d["n_tau"]),
            s0_at_tau=float(d["s0_at_tau"]),
            numerator=float(d.get("numerator", d["theta"] * d["n_tau"])),
        )


def _exceedance_sums(sample, beta, tau):
    w = np.exp(sample.linear_predictor(beta))
    above = sample.times > tau
    num = float(np.sum(w[above] * np.log(sample.times[above] / tau)))
    n_tau = int(sample.status[above].sum())
    return num, n_tau


def hill_theta(sample, beta, tau, cox=None):
    """Weighted Hill-type estimate of the tail index above ``tau``.

    ``theta = sum_{t_i > tau} exp(beta.z_i) ln(t_i/tau) / sum_{t_i > tau} delta_i``.
    Censored exceedances enter the numerator but not the denominator.

    Parameters
    ----------
    sample : SurvivalSample
    beta : array_like
    tau : float
        Any positive threshold; it need not be an observed time.
    cox : CoxFit, optional
        Baseline used to fill ``s0_at_tau``. Computed from ``beta`` if absent.

    Raises
    ------
    SelectionError
        If no event lies strictly above ``tau``.
    """
    tau = float(tau)
    if not tau > 0:
        raise DataError("threshold must be positive")
    num, n_tau = _exceedance_sums(sample, beta, tau)
    if n_tau < 1:
        raise SelectionError(f"no events above threshold {tau:g}")
    if cox is None:
        from .cox import breslow_baseline

        cox = breslow_baseline(sample, beta)
    s0 = float(cox.baseline_survival(tau))
    return TailFit(tau=tau, theta=num / n_tau, n_tau=n_tau, s0_at_tau=s0, numerator=num)


def snap_threshold(sample, tau):
    """Smallest observed time ``>= tau``."""
    t = np.sort(sample.times)
    pos = np.searchsorted(t, tau, side="left")
    if pos == t.size:
        raise SelectionError(f"threshold {tau:g} exceeds the largest observed time")
    return float(t[pos])


@dataclass(frozen=True, eq=False)
class SemiParamModel:
    """Breslow baseline below ``tail.tau`` and a Pareto tail above it."""

    cox: CoxFit
    tail: TailFit

    def cum_hazard(self, x, z=None):
        return semiparam_cum_hazard(self, z, x)

    def survival(self, x, z=None):
        return semiparam_survival(self, z, x)

    def quantile(self, p, z=None):
        return semiparam_quantile(self, z, p)

    def to_dict(self):
        return {"kind": "semiparametric", "cox": self.cox.to_dict(), "tail": self.tail.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(cox=CoxFit.from_dict(d["cox"]), tail=TailFit.from_dict(d["tail"]))


def fit_semiparametric(sample, beta, tau, cox=None):
    """Semi-parametric model with a fixed threshold ``tau``."""
    if cox is None:
        from .cox import breslow_baseline

        cox = breslow_baseline(sample, beta)
    return SemiParamModel(cox=cox, tail=hill_theta(sample, beta, tau, cox=cox))


def _baseline_cum_hazard(cox, tau, theta, x):
    x = np.asarray(x, dtype=float)
    h = cox.cum_hazard(np.minimum(x, tau))
    with np.errstate(divide="ignore", invalid="ignore"):
        extra = np.where(x > tau, np.log(np.maximum(x, tau) / tau) / theta, 0.0)
    return h + extra


def semiparam_cum_hazard(model, z, x):
    """Conditional cumulative hazard; equals ``-log`` of :func:`semiparam_survival`."""
    out = model.cox.risk_score(z) * _baseline_cum_hazard(
        model.cox, model.tail.tau, model.tail.theta, x
    )
    return out if np.ndim(out) else float(out)


def semiparam_survival(model, z, x):
    """Conditional survival ``S_{0,tau,theta}(x) ** exp(beta.z)``."""
    out = np.exp(-np.asarray(semiparam_cum_hazard(model, z, x)))
    return out if out.ndim else float(out)


def _check_prob(p):
    if not 0 < p < 1:
        raise ValueError(f"probability must lie in (0, 1), got {p}")


def step_quantile(cox, z, p):
    """Left-most knot where the step survival drops to ``p`` or below.

    Returns ``None`` when the step curve never reaches ``p``.
    """
    _check_prob(p)
    surv = np.exp(-cox.risk_score(z) * np.cumsum(cox.increments))
    hit = np.flatnonzero(surv <= p)
    if hit.size == 0:
        return None
    return float(cox.times[hit[0]])


def semiparam_quantile(model, z, p):
    """Smallest ``x`` with conditional survival ``<= p``.

    Beyond the threshold the Pareto piece is inverted in closed form,
    ``x = tau * (p ** exp(-beta.z) / S0(tau)) ** (-theta)``; below it the step
    function is inverted by the left-most-knot rule.
    """
    _check_prob(p)
    tau, theta = model.tail.tau, model.tail.theta
    target = -np.log(p) / model.cox.risk_score(z)
    h_tau = float(model.cox.cum_hazard(tau))
    if target >= h_tau:
        return float(tau * np.exp(theta * (target - h_tau)))
    return step_quantile(model.cox, z, p)
