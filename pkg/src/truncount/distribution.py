"""Right-truncated Poisson distribution.

The support is ``{0, 1, ..., r}`` and the mass at ``x`` is proportional to
``lam**x / x!``. Everything is evaluated in log space: the unnormalized
weights overflow for moderate ``lam`` and ``r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from .exceptions import DomainError, NumericalError

__all__ = [
    "TruncatedPoisson",
    "CountSample",
    "DistFit",
    "pmf",
    "log_pmf",
    "cdf",
    "truncated_mean",
    "truncated_variance",
    "log_likelihood",
    "score",
    "fit_mle",
    "fit_poisson",
    "std_error",
    "moore_estimate",
    "sample",
]

SCORE_TOL = 1e-10
MAX_ITER = 200
_LAMBDA_FLOOR = 1e-12


def _check_bound(r):
    if isinstance(r, bool) or int(r) != r or r < 0:
        raise DomainError(f"truncation bound must be a non-negative integer, got {r!r}")
    return int(r)


@dataclass(frozen=True)
class TruncatedPoisson:
    """Poisson(``lam``) conditioned on ``X <= r``."""

    lam: float
    r: int

    def __post_init__(self):
        object.__setattr__(self, "r", _check_bound(self.r))
        lam = float(self.lam)
        if not math.isfinite(lam) or lam <= 0:
            raise DomainError(f"rate must be positive and finite, got {self.lam!r}")
        object.__setattr__(self, "lam", lam)


@dataclass(frozen=True)
class CountSample:
    """Observed counts, each between 0 and the truncation bound ``r``."""

    values: np.ndarray
    r: int

    def __post_init__(self):
        r = _check_bound(self.r)
        arr = np.asarray(self.values)
        if arr.ndim != 1:
            raise DomainError("count sample must be one-dimensional")
        if arr.size and not np.all(np.equal(np.mod(arr, 1), 0)):
            raise DomainError("count sample holds non-integer values")
        arr = arr.astype(np.int64)
        if arr.size and (arr.min() < 0 or arr.max() > r):
            raise DomainError(f"count sample values must lie in [0, {r}]")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "r", r)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class DistFit:
    """Result of fitting a single-rate count distribution.

    ``std_error`` is ``None`` when the estimate sits on the boundary
    (``lambda_hat == 0``) and the information is undefined.
    """

    lambda_hat: float
    std_error: Optional[float]
    loglik: float
    n: int
    converged: bool
    iterations: int
    method: str = "mle"
    family: str = "right_truncated_poisson"
    r: Optional[int] = None
    extra: dict = field(default_factory=dict, compare=False)

    def to_dict(self):
        return {
            "family": self.family,
            "method": self.method,
            "lambda_hat": self.lambda_hat,
            "std_error": self.std_error,
            "loglik": self.loglik,
            "n": self.n,
            "converged": self.converged,
            "iterations": self.iterations,
        }


def _logsumexp(a):
    top = a.max(axis=-1, keepdims=True)
    return np.log(np.exp(a - top).sum(axis=-1)) + top[..., 0]


def _log_weights(log_lam, r):
    """Unnormalized log-weights ``j*log(lam) - log(j!)`` for j = 0..r.

    ``log_lam`` may be scalar or 1-d; the weights axis is last.
    """
    j = np.arange(r + 1)
    return np.multiply.outer(log_lam, j) - gammaln(j + 1)


def _probabilities(log_lam, r):
    lw = _log_weights(log_lam, r)
    return np.exp(lw - np.expand_dims(_logsumexp(lw), -1))


def log_normalizer(lam, r):
    """``log(sum_{j=0}^{r} lam**j / j!)``, vectorized over ``lam``."""
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore"):
        return _logsumexp(_log_weights(np.log(lam), r))


def moments(lam, r):
    """Mean and variance of the truncated distribution, vectorized over ``lam``."""
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore"):
        p = _probabilities(np.log(lam), r)
    j = np.arange(r + 1)
    # E[X] = lam * P(X <= r - 1): stays below lam under rounding
    mean = lam * (1.0 - p[..., r])
    # central form avoids cancellation in E[X^2] - mean^2
    centered = j - np.expand_dims(mean, -1)
    var = np.sum(p * centered**2, axis=-1)
    return mean, var


def log_pmf(x, model: TruncatedPoisson) -> float:
    if int(x) != x or x < 0 or x > model.r:
        raise DomainError(f"x={x!r} is outside the support [0, {model.r}]")
    return float(x * math.log(model.lam) - gammaln(x + 1) - log_normalizer(model.lam, model.r))


def pmf(x, model: TruncatedPoisson) -> float:
    if int(x) != x or x < 0 or x > model.r:
        return 0.0
    return math.exp(log_pmf(x, model))


def cdf(x, model: TruncatedPoisson) -> float:
    if x < 0:
        return 0.0
    if x >= model.r:
        return 1.0
    p = _probabilities(math.log(model.lam), model.r)
    return float(min(1.0, p[: int(math.floor(x)) + 1].sum()))


def truncated_mean(model: TruncatedPoisson) -> float:
    return float(moments(model.lam, model.r)[0])


def truncated_variance(model: TruncatedPoisson) -> float:
    return float(moments(model.lam, model.r)[1])


def _as_sample(sample):
    if not isinstance(sample, CountSample):
        raise TypeError("expected a CountSample")
    if sample.n == 0:
        raise DomainError("operation needs a non-empty sample")
    return sample


def log_likelihood(sample: CountSample, lam: float) -> float:
    """Sum of ``log_pmf`` over the sample."""
    sample = _as_sample(sample)
    model = TruncatedPoisson(lam, sample.r)
    x = sample.values
    return float(
        x.sum() * math.log(model.lam)
        - gammaln(x + 1).sum()
        - sample.n * log_normalizer(model.lam, model.r)
    )


def score(lam: float, sample: CountSample) -> float:
    """Log-likelihood derivative in ``log(lam)``: ``n * (xbar - mean(lam))``.

    Its root is the maximum-likelihood estimate.
    """
    sample = _as_sample(sample)
    if not lam > 0:
        raise DomainError(f"score needs lam > 0, got {lam!r}")
    mean, _ = moments(lam, sample.r)
    return float(sample.n * (sample.mean - mean))


def std_error(lam: float, r: int, n: int) -> float:
    """Standard error of the rate estimate from ``n`` observations.

    Per-observation information is ``var(lam) / lam**2``; at the MLE this is
    the observed information, since the sample mean equals the fitted mean.
    """
    if not lam > 0 or n < 1:
        raise DomainError("std_error needs lam > 0 and n >= 1")
    _, var = moments(lam, _check_bound(r))
    info = float(var) / lam**2
    return 1.0 / math.sqrt(n * info)


def fit_mle(sample: CountSample, tol: float = SCORE_TOL, max_iter: int = MAX_ITER) -> DistFit:
    """Maximum-likelihood rate for a right-truncated Poisson sample.

    The score is monotone in ``lam``, so the root is bracketed on
    ``[eps, max(10*xbar, r)]``, narrowed by bisection on the log scale and
    polished with Newton steps. ``tol`` bounds ``|xbar - mean(lam_hat)|``.
    """
    sample = _as_sample(sample)
    n, r, xbar = sample.n, sample.r, sample.mean

    if xbar == 0:
        return DistFit(0.0, None, 0.0, n, True, 0, r=r)
    if xbar >= r:
        # all mass at r: likelihood increases without bound in lam
        return DistFit(math.inf, None, 0.0, n, False, 0, r=r)

    def gap(lam):
        return xbar - float(moments(lam, r)[0])

    lo, hi = _LAMBDA_FLOOR, max(10.0 * xbar, float(r))
    iterations = 0
    while gap(hi) > 0:
        lo, hi = hi, 2.0 * hi
        iterations += 1
        if iterations >= max_iter:
            raise NumericalError("could not bracket the score root")

    lam = math.sqrt(lo * hi)
    g = gap(lam)
    while iterations < max_iter and abs(g) > tol and hi / lo - 1.0 > 1e-6:
        if g > 0:
            lo = lam
        else:
            hi = lam
        lam = math.sqrt(lo * hi)
        g = gap(lam)
        iterations += 1

    while iterations < max_iter and abs(g) > tol:
        _, var = moments(lam, r)
        step = g * lam / float(var)
        candidate = lam + step
        if not lo < candidate < hi:
            candidate = math.sqrt(lo * hi)
        lam = candidate
        g = gap(lam)
        if g > 0:
            lo = max(lo, lam)
        else:
            hi = min(hi, lam)
        iterations += 1

    converged = abs(g) <= tol
    return DistFit(
        lambda_hat=lam,
        std_error=std_error(lam, r, n),
        loglik=log_likelihood(sample, lam),
        n=n,
        converged=converged,
        iterations=iterations,
        r=r,
    )


def fit_poisson(sample: CountSample) -> DistFit:
    """Untruncated Poisson fit of the same counts (closed form)."""
    sample = _as_sample(sample)
    xbar, n = sample.mean, sample.n
    if xbar == 0:
        return DistFit(0.0, None, 0.0, n, True, 0, family="poisson", r=None)
    loglik = float(poisson.logpmf(sample.values, xbar).sum())
    return DistFit(xbar, math.sqrt(xbar / n), loglik, n, True, 0, family="poisson", r=None)


def moore_estimate(sample: CountSample) -> float:
    """Moore's simple estimator: sum of all counts over the number below ``r``.

    Observations sitting on the bound are excluded from the denominator; this
    makes the ratio match ``E[X] = lam * P(X <= r - 1)``.
    """
    sample = _as_sample(sample)
    m = int(np.count_nonzero(sample.values <= sample.r - 1))
    if m == 0:
        raise DomainError("Moore estimator undefined: no observation below the bound")
    return float(sample.values.sum()) / m


def _draw(log_lam, r, u):
    cum = np.cumsum(_probabilities(log_lam, r), axis=-1)
    if cum.ndim == 1:
        idx = np.searchsorted(cum, u, side="right")
    else:
        idx = (u[:, None] >= cum).sum(axis=1)
    return np.minimum(idx, r)


def sample(model: TruncatedPoisson, n: int, seed: int) -> CountSample:
    """Draw ``n`` counts by inverse-CDF lookup with a seeded generator."""
    if n < 1:
        raise DomainError("sample size must be positive")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    return CountSample(_draw(math.log(model.lam), model.r, u), model.r)


def sample_rates(lam, r, rng):
    """One draw per entry of ``lam`` (row-specific rates, shared bound)."""
    lam = np.asarray(lam, dtype=float)
    u = rng.random(lam.size)
    with np.errstate(divide="ignore"):
        return _draw(np.log(lam.ravel()), r, u).reshape(lam.shape)
