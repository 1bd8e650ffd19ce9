"""Cox partial-likelihood fit and the Breslow baseline cumulative hazard.

Ties are handled with Breslow's convention everywhere: every observation
with ``t_j >= t_i`` is in the risk set of ``t_i``, and tied events share that
risk set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConvergenceError, DataError, SingularInformationError

__all__ = [
    "StepFunction",
    "CoxFit",
    "risk_set_ends",
    "log_partial_likelihood",
    "fit_beta",
    "breslow_baseline",
    "fit_cox",
    "survival_at",
]


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous step function.

    ``values[i]`` holds on ``[knots[i], knots[i+1])`` and ``left_value``
    before the first knot.
    """

    knots: np.ndarray
    values: np.ndarray
    left_value: float = 0.0

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if knots.shape != values.shape or knots.ndim != 1:
            raise ValueError("knots and values must be 1-d arrays of equal length")
        if knots.size > 1 and np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly ascending")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "left_value", float(self.left_value))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        pos = np.searchsorted(self.knots, x, side="right") - 1
        padded = np.concatenate(([self.left_value], self.values))
        out = padded[pos + 1]
        return out if out.ndim else float(out)


def risk_set_ends(sorted_times):
    """For times sorted in descending order, index of the last tied element.

    Position ``i`` gets the largest ``j`` with ``t_j == t_i``, so the Breslow
    risk set of ``t_i`` is ``0..j``.
    """
    neg = -np.asarray(sorted_times, dtype=float)
    return np.searchsorted(neg, neg, side="right") - 1


@dataclass(frozen=True, eq=False)
class CoxFit:
    """Regression coefficients plus the Breslow baseline.

    Attributes
    ----------
    beta : ndarray, shape (p,)
    times : ndarray
        Distinct observed times, ascending (the knots of the baseline).
    increments : ndarray
        Baseline hazard jump at each knot; zero at purely censored times.
    log_partial_likelihood : float
    converged : bool
    iterations : int
    """

    beta: np.ndarray
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    increments: np.ndarray = field(default_factory=lambda: np.zeros(0))
    log_partial_likelihood: float = float("nan")
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).ravel())
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "increments", np.asarray(self.increments, dtype=float))

    @cached_property
    def cum_hazard(self):
        """Baseline cumulative hazard as a :class:`StepFunction`."""
        return StepFunction(self.times, np.cumsum(self.increments), 0.0)

    def baseline_cum_hazard(self, x):
        return self.cum_hazard(x)

    def baseline_survival(self, x):
        return np.exp(-self.cum_hazard(x))

    def risk_score(self, z):
        """``exp(beta . z)``; ``z=None`` means the zero covariate."""
        if z is None or self.beta.size == 0:
            return 1.0
        z = np.asarray(z, dtype=float).ravel()
        if z.size != self.beta.size:
            raise DataError(f"z has length {z.size}, model has {self.beta.size} covariates")
        return float(np.exp(z @ self.beta))

    def to_dict(self):
        return {
            "beta": self.beta.tolist(),
            "knots": self.times.tolist(),
            "increments": self.increments.tolist(),
            "cum_hazard": np.cumsum(self.increments).tolist(),
            "log_partial_likelihood": self.log_partial_likelihood,
            "converged": self.converged,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            beta=d["beta"],
            times=d["knots"],
            increments=d["increments"],
            log_partial_likelihood=d.get("log_partial_likelihood", float("nan")),
            converged=d.get("converged", True),
            iterations=d.get("iterations", 0),
        )


def _sorted_parts(sample):
    t, d, z = sample.sorted()
    return t, d.astype(float), z


def log_partial_likelihood(sample, beta):
    """Breslow log partial likelihood at ``beta``."""
    t, d, z = _sorted_parts(sample)
    beta = np.asarray(beta, dtype=float).ravel()
    eta = z @ beta if z.shape[1] else np.zeros(t.size)
    return _loglik_grad_hess(t, d, z, eta, need_derivs=False)[0]


def _loglik_grad_hess(t, d, z, eta, need_derivs=True):
    ends = risk_set_ends(t)
    shift = eta.max() if eta.size else 0.0
    w = np.exp(eta - shift)
    s0 = np.cumsum(w)[ends]
    ev = d > 0
    ll = float(np.sum(eta[ev]) - np.sum(np.log(s0[ev]) + shift))
    if not need_derivs:
        return ll, None, None
    wz = w[:, None] * z
    s1 = np.cumsum(wz, axis=0)[ends]
    s2 = np.cumsum(wz[:, :, None] * z[:, None, :], axis=0)[ends]
    zbar = s1[ev] / s0[ev, None]
    grad = np.sum(z[ev] - zbar, axis=0)
    info = np.sum(s2[ev] / s0[ev, None, None], axis=0) - zbar.T @ zbar
    return ll, grad, info


def fit_beta(sample, init=None, tol=1e-8, max_iter=50, max_halving=20):
    """Maximum partial-likelihood estimate of the regression coefficients.

    Newton-Raphson with step halving: a step is halved (up to
    ``max_halving`` times) until the log partial likelihood does not
    decrease. Columns that are constant carry no information in the partial
    likelihood and their coefficient is fixed at zero.

    Parameters
    ----------
    sample : SurvivalSample
    init : array_like, optional
        Starting point, zeros by default.
    tol : float
        Convergence threshold on the max-norm of the gradient. Iteration
        also stops once the Newton decrement falls below the floating-point
        resolution of the log partial likelihood.
    max_iter : int

    Returns
    -------
    CoxFit
        With ``beta`` set and an empty baseline.

    Raises
    ------
    ConvergenceError
        No convergence after ``max_iter`` iterations; ``err.beta`` holds the
        last iterate.
    SingularInformationError
        The information matrix is not positive definite, typically because
        the likelihood is monotone (separated covariates).
    """
    t, d, z = _sorted_parts(sample)
    p = z.shape[1]
    if d.sum() < 1:
        raise DataError("at least one event is required to fit beta")
    beta = np.zeros(p) if init is None else np.asarray(init, dtype=float).ravel().copy()
    if beta.size != p:
        raise DataError(f"init has length {beta.size}, sample has {p} covariates")
    free = np.ptp(z, axis=0) > 0 if t.size else np.zeros(p, bool)
    beta[~free] = 0.0
    if not free.any():
        ll = _loglik_grad_hess(t, d, z, np.zeros(t.size), need_derivs=False)[0]
        return CoxFit(beta=beta, log_partial_likelihood=ll, converged=True, iterations=0)

    zf = z[:, free]
    b = beta[free]
    ll, grad, info = _loglik_grad_hess(t, d, zf, zf @ b)
    info_scale = float(np.max(np.diag(info)))
    it = 0
    at_precision = False
    while np.max(np.abs(grad)) > tol:
        if it >= max_iter:
            beta[free] = b
            raise ConvergenceError(
                f"no convergence after {max_iter} iterations "
                f"(|grad|={np.max(np.abs(grad)):.3g})",
                beta=beta.copy(),
                iterations=it,
            )
        try:
            chol = np.linalg.cholesky(info)
        except np.linalg.LinAlgError:
            beta[free] = b
            raise SingularInformationError(
                "singular information matrix (monotone likelihood?)",
                beta=beta.copy(),
                iterations=it,
            ) from None
        step = np.linalg.solve(chol.T, np.linalg.solve(chol, grad))
        # predicted gain of the Newton step; below float resolution of ll
        # the gradient test cannot be met by further iterations
        at_precision = float(grad @ step) <= 64 * np.finfo(float).eps * max(1.0, abs(ll))
        it += 1
        for _ in range(max_halving + 1):
            cand = b + step
            ll_new, g_new, i_new = _loglik_grad_hess(t, d, zf, zf @ cand)
            if np.isfinite(ll_new) and ll_new >= ll:
                break
            step = step / 2
        else:
            break
        b, ll, grad, info = cand, ll_new, g_new, i_new
        if at_precision:
            break
    beta[free] = b
    converged = bool(np.max(np.abs(grad)) <= tol) or at_precision
    # a vanishing gradient together with vanishing information means the
    # likelihood is monotone and the optimum is at infinity
    if np.linalg.eigvalsh(info)[0] <= 1e-8 * info_scale:
        raise SingularInformationError(
            "information matrix degenerate at the optimum (monotone likelihood?)",
            beta=beta.copy(),
            iterations=it,
        )
    if not converged:
        raise ConvergenceError(
            f"step halving stalled with |grad|={np.max(np.abs(grad)):.3g}",
            beta=beta.copy(),
            iterations=it,
        )
    return CoxFit(beta=beta, log_partial_likelihood=ll, converged=True, iterations=it)


def breslow_baseline(sample, beta):
    """Breslow estimate of the baseline cumulative hazard.

    The increment at a distinct time ``t`` is the number of events at ``t``
    divided by ``sum_{t_j >= t} exp(beta . z_j)``.
    """
    if sample.n == 0:
        raise DataError("empty sample")
    beta = np.asarray(beta, dtype=float).ravel()
    if not np.all(np.isfinite(beta)):
        raise DataError("beta must be finite")
    t, d, z = _sorted_parts(sample)
    eta = z @ beta if z.shape[1] else np.zeros(t.size)
    w = np.exp(eta)
    ends = risk_set_ends(t)
    risk = np.cumsum(w)[ends]
    # first position of each tie block, blocks in descending time
    first = np.flatnonzero(np.concatenate(([True], t[1:] != t[:-1])))
    events = np.add.reduceat(d, first)
    knots = t[first][::-1]
    inc = (events / risk[first])[::-1]
    ll = _loglik_grad_hess(t, d, z, eta, need_derivs=False)[0] if d.sum() else 0.0
    return CoxFit(beta=beta, times=knots, increments=inc, log_partial_likelihood=ll)


def fit_cox(sample, beta=None, **newton):
    """Fit ``beta`` (unless given) and attach the Breslow baseline."""
    if beta is None:
        fit = fit_beta(sample, **newton)
        base = breslow_baseline(sample, fit.beta)
        return CoxFit(
            beta=fit.beta,
            times=base.times,
            increments=base.increments,
            log_partial_likelihood=fit.log_partial_likelihood,
            converged=fit.converged,
            iterations=fit.iterations,
        )
    return breslow_baseline(sample, beta)


def survival_at(fit, z, x):
    """Conditional survival ``S0(x) ** exp(beta . z)``."""
    return np.exp(-fit.risk_score(z) * fit.cum_hazard(x))
