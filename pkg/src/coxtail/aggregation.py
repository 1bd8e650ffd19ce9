"""Aggregation of semi-parametric fits over several thresholds.

Both aggregates average conditional cumulative hazards,

    S_agg(x | z) = exp(-sum_k w_k H_{z, tau_k, theta_k}(x)),

which smooths the junction between the step baseline and the Pareto tail.
Simple aggregation uses ``M`` consecutive order statistics with uniform
weights; adaptive aggregation uses the ``M`` best candidates of the
penalised-likelihood profile, weighted by their profile values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cox import CoxFit, breslow_baseline
from .errors import SelectionError
from .tail import TailFit, _baseline_cum_hazard, _check_prob, hill_theta

__all__ = [
    "AggregateModel",
    "min_admissible_m0",
    "aggregate_simple",
    "aggregate_adaptive",
    "aggregate_cum_hazard",
    "aggregate_survival",
    "aggregate_quantile",
]


@dataclass(frozen=True, eq=False)
class AggregateModel:
    """Weighted set of Pareto tails sharing one Breslow baseline."""

    cox: CoxFit
    components: tuple  # of (TailFit, weight)

    def __post_init__(self):
        comps = tuple((c, float(w)) for c, w in self.components)
        if not comps:
            raise ValueError("aggregate needs at least one component")
        ws = np.array([w for _, w in comps])
        if np.any(ws < 0) or abs(ws.sum() - 1) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "components", comps)

    @property
    def taus(self):
        return np.array([c.tau for c, _ in self.components])

    @property
    def thetas(self):
        return np.array([c.theta for c, _ in self.components])

    @property
    def weights(self):
        return np.array([w for _, w in self.components])

    def cum_hazard(self, x, z=None):
        return aggregate_cum_hazard(self, z, x)

    def survival(self, x, z=None):
        return aggregate_survival(self, z, x)

    def quantile(self, p, z=None):
        return aggregate_quantile(self, z, p)

    def to_dict(self):
        return {
            "kind": "aggregate",
            "cox": self.cox.to_dict(),
            "components": [dict(c.to_dict(), weight=w) for c, w in self.components],
        }

    @classmethod
    def from_dict(cls, d):
        comps = tuple((TailFit.from_dict(c), c["weight"]) for c in d["components"])
        return cls(cox=CoxFit.from_dict(d["cox"]), components=comps)


def min_admissible_m0(sample):
    """Smallest rank whose threshold has at least one event strictly above it."""
    t, d, _ = sample.sorted()
    above = np.searchsorted(-t, -t, side="left")
    n_tau = np.concatenate(([0], np.cumsum(d)))[above]
    ok = np.flatnonzero(n_tau >= 1)
    if ok.size == 0:
        raise SelectionError("no observation has an event above it")
    return int(ok[0]) + 1


def aggregate_simple(sample, beta, m0=None, M=10, m0_frac=None, cox=None):
    """Uniformly weighted aggregate over thresholds ``t_{m0}, ..., t_{m0+M-1}``.

    Parameters
    ----------
    m0 : int, optional
        1-based rank of the first threshold. Defaults to the smallest
        admissible rank, or to ``round(m0_frac * n)`` (not below it) when
        ``m0_frac`` is given.
    M : int
        Number of thresholds.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    m_min = min_admissible_m0(sample)
    if m0 is None:
        m0 = m_min if m0_frac is None else max(m_min, int(round(m0_frac * sample.n)))
    if m0 < m_min:
        raise SelectionError(f"m0={m0} is below the smallest admissible rank {m_min}")
    if m0 + M - 1 > sample.n:
        raise SelectionError(f"m0 + M - 1 = {m0 + M - 1} exceeds n = {sample.n}")
    if cox is None:
        cox = breslow_baseline(sample, beta)
    t_sorted = sample.times[sample.order]
    comps = tuple(
        (hill_theta(sample, beta, float(t_sorted[r - 1]), cox=cox), 1.0 / M)
        for r in range(m0, m0 + M)
    )
    return AggregateModel(cox=cox, components=comps)


def aggregate_adaptive(sample, beta, selection, M=10, cox=None):
    """Aggregate over the ``M`` highest entries of the selection profile.

    Candidates are ranked by decreasing penalised likelihood (ties to the
    smaller rank) and weighted proportionally to it.

    Raises
    ------
    SelectionError
        When the profile has fewer than ``M`` entries or the chosen values
        sum to zero.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    prof = np.asarray(selection.profile, dtype=float)
    prof = prof[np.isfinite(prof[:, 1])]
    if prof.shape[0] < M:
        raise SelectionError(f"profile has {prof.shape[0]} entries, M={M} requested")
    # descending value, ascending rank on ties
    idx = np.lexsort((prof[:, 0], -prof[:, 1]))[:M]
    chosen = prof[idx]
    total = chosen[:, 1].sum()
    if not total > 0:
        raise SelectionError("no informative candidates: penalised likelihoods are all zero")
    if cox is None:
        cox = breslow_baseline(sample, beta)
    t_sorted = sample.times[sample.order]
    weights = chosen[:, 1] / total
    comps = tuple(
        (hill_theta(sample, beta, float(t_sorted[int(l) - 1]), cox=cox), w)
        for l, w in zip(chosen[:, 0], weights)
    )
    return AggregateModel(cox=cox, components=comps)


def _baseline_agg_hazard(agg, x):
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape)
    for comp, w in agg.components:
        total = total + w * _baseline_cum_hazard(agg.cox, comp.tau, comp.theta, x)
    return total


def aggregate_cum_hazard(agg, z, x):
    out = agg.cox.risk_score(z) * _baseline_agg_hazard(agg, x)
    return out if np.ndim(out) else float(out)


def aggregate_survival(agg, z, x):
    """``exp(-sum_k w_k H_k(x | z))``."""
    out = np.exp(-np.asarray(aggregate_cum_hazard(agg, z, x)))
    return out if out.ndim else float(out)


def aggregate_quantile(agg, z, p, rtol=1e-13):
    """Smallest ``x`` with aggregated survival ``<= p``.

    Past the largest threshold the aggregated hazard is ``a + b ln x`` and is
    inverted exactly; below it the infimum is located by bisection.
    """
    _check_prob(p)
    target = -np.log(p) / agg.cox.risk_score(z)
    tau_max = float(agg.taus.max())
    h_max = float(_baseline_agg_hazard(agg, tau_max))
    if target >= h_max:
        b = float(np.sum(agg.weights / agg.thetas))
        return float(tau_max * np.exp((target - h_max) / b))
    lo, hi = 0.0, tau_max
    # invariant: H(lo) < target <= H(hi)
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if _baseline_agg_hazard(agg, mid) >= target:
            hi = mid
        else:
            lo = mid
    knots = agg.cox.times
    # snap to a knot when the infimum sits on a jump
    pos = np.searchsorted(knots, hi, side="right") - 1
    if pos >= 0 and hi - knots[pos] <= 2 * rtol * hi:
        return float(knots[pos])
    return float(hi)
