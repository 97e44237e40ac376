"""Right-truncated Poisson regression with normal random cluster effects.

The log-rate is ``X @ beta + Z @ u`` with ``u ~ Normal(0, sigma2)`` per
cluster. Fixed and random effects are estimated jointly by maximizing the
hierarchical likelihood

    h = sum_rows log p(y | u; beta) + sum_clusters log phi(u_i; 0, sigma2)

with Newton-Raphson on ``(beta, u)``; ``sigma2`` is refreshed between Newton
solves with its stationary value ``sum(u**2) / q``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.special import gammaln
from scipy.stats import norm

from . import selection
from .distribution import log_normalizer, moments, sample_rates
from .exceptions import DomainError, NumericalError, ValidationError

log = logging.getLogger(__name__)

__all__ = [
    "MixedModelSpec",
    "FixedDesign",
    "RandomDesign",
    "MixedFit",
    "INDIVIDUAL",
    "build_design",
    "rates",
    "h_likelihood",
    "score_beta",
    "score_u",
    "fit",
    "fit_design",
    "simulate",
    "summary",
    "wald",
]

SIGMA2_FLOOR = 1e-8
SCORE_TOL = 1e-6
MAX_HALVINGS = 30
RIDGE = 1e-8

#: cluster name that puts every row in its own cluster
INDIVIDUAL = "individual"


@dataclass(frozen=True)
class MixedModelSpec:
    r: int
    cluster: str
    covariates: tuple = ("lines_per_page", "words_per_line")
    response: str = "pages_blank"
    tol: float = 1e-8
    max_iter: int = 500
    sigma2_fixed: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if len(set(self.covariates)) != len(self.covariates):
            raise ValidationError("covariate names must be distinct")
        if self.cluster in self.covariates:
            raise ValidationError("cluster variable cannot also be a covariate")
        if self.response in self.covariates or self.response == self.cluster:
            raise ValidationError("response cannot be reused as a covariate or cluster")


@dataclass(frozen=True)
class FixedDesign:
    matrix: np.ndarray
    labels: tuple


@dataclass(frozen=True)
class RandomDesign:
    matrix: np.ndarray
    labels: tuple


@dataclass
class MixedFit:
    beta: np.ndarray
    beta_se: np.ndarray
    u: np.ndarray
    sigma2: float
    cond_loglik: float
    h_value: float
    t_values: np.ndarray
    p_values: np.ndarray
    aic: float
    bic: float
    converged: bool
    iterations: int
    n: int
    beta_labels: tuple = ()
    cluster_labels: tuple = ()
    h_trace: list = field(default_factory=list, repr=False)

    @property
    def k(self) -> int:
        return int(self.beta.size)

    def model_score(self, label):
        return selection.ModelScore.from_loglik(label, self.cond_loglik, self.k, self.n)


def build_design(data: Mapping[str, Sequence], spec: MixedModelSpec):
    """Fixed design (intercept first), cluster indicators and response.

    ``data`` maps column names to equal-length sequences. Setting
    ``spec.cluster`` to ``"individual"`` gives each row its own cluster.
    """
    needed = [spec.response, *spec.covariates]
    if spec.cluster != INDIVIDUAL:
        needed.append(spec.cluster)
    missing = [c for c in needed if c not in data]
    if missing:
        raise ValidationError(f"unknown column(s): {', '.join(missing)}")

    y = np.asarray(data[spec.response], dtype=float)
    n = y.size
    if n == 0:
        raise ValidationError("dataset is empty")
    if np.any(y < 0) or np.any(y > spec.r) or np.any(y != np.round(y)):
        bad = int(np.flatnonzero((y < 0) | (y > spec.r) | (y != np.round(y)))[0])
        raise ValidationError(
            f"response {spec.response!r} row {bad + 1} = {y[bad]:g} is not a count in [0, {spec.r}]"
        )

    columns = [np.ones(n)]
    for name in spec.covariates:
        col = np.asarray(data[name], dtype=float)
        if col.size != n:
            raise ValidationError(f"column {name!r} has {col.size} rows, expected {n}")
        if not np.all(np.isfinite(col)):
            raise ValidationError(f"column {name!r} holds non-finite values")
        if np.ptp(col) == 0:
            raise ValidationError(f"covariate {name!r} is constant and aliases the intercept")
        columns.append(col)
    X = np.column_stack(columns)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ValidationError("fixed design is rank deficient")

    if spec.cluster == INDIVIDUAL:
        levels = tuple(str(i + 1) for i in range(n))
        codes = np.arange(n)
    else:
        raw = [str(v) for v in data[spec.cluster]]
        if len(raw) != n:
            raise ValidationError(f"column {spec.cluster!r} has {len(raw)} rows, expected {n}")
        levels = tuple(sorted(set(raw)))
        lookup = {lvl: i for i, lvl in enumerate(levels)}
        codes = np.array([lookup[v] for v in raw])
    Z = np.zeros((n, len(levels)))
    Z[np.arange(n), codes] = 1.0

    return (
        FixedDesign(X, ("Intercept", *spec.covariates)),
        RandomDesign(Z, levels),
        y,
    )


def _conform(beta, u, X, Z):
    beta = np.asarray(beta, dtype=float)
    u = np.asarray(u, dtype=float)
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if X.ndim != 2 or Z.ndim != 2 or X.shape[0] != Z.shape[0]:
        raise DomainError("X and Z must be 2-d with the same number of rows")
    if X.shape[1] != beta.size or Z.shape[1] != u.size:
        raise DomainError(
            f"dimension mismatch: X {X.shape} vs beta {beta.size}, Z {Z.shape} vs u {u.size}"
        )
    return beta, u, X, Z


def rates(beta, u, X, Z):
    """Row rates ``exp(X @ beta + Z @ u)``."""
    beta, u, X, Z = _conform(beta, u, X, Z)
    return np.exp(X @ beta + Z @ u)


def _check_sigma2(sigma2):
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2!r}")


def _cond_loglik(eta, y, r):
    return float(np.sum(y * eta - gammaln(y + 1) - log_normalizer(np.exp(eta), r)))


def _random_loglik(u, sigma2):
    q = u.size
    return float(-0.5 * q * (math.log(2 * math.pi) + math.log(sigma2)) - np.sum(u * u) / (2 * sigma2))


def h_likelihood(beta, u, sigma2, X, Z, y, r):
    """Conditional truncated-Poisson log-likelihood plus the normal log-density of ``u``."""
    _check_sigma2(sigma2)
    beta, u, X, Z = _conform(beta, u, X, Z)
    eta = X @ beta + Z @ u
    return _cond_loglik(eta, np.asarray(y, dtype=float), r) + _random_loglik(u, sigma2)


def _residual(beta, u, X, Z, y, r):
    mean, _ = moments(np.exp(X @ beta + Z @ u), r)
    return np.asarray(y, dtype=float) - mean


def score_beta(beta, u, X, Z, y, r):
    """``X.T @ (y - mu)`` with ``mu`` the truncated mean of each row."""
    beta, u, X, Z = _conform(beta, u, X, Z)
    return X.T @ _residual(beta, u, X, Z, y, r)


def score_u(beta, u, sigma2, X, Z, y, r):
    """Per-cluster ``sum(y - mu) - u / sigma2``."""
    _check_sigma2(sigma2)
    beta, u, X, Z = _conform(beta, u, X, Z)
    return Z.T @ _residual(beta, u, X, Z, y, r) - u / sigma2


def _gradient_and_information(theta, sigma2, W, p, y, r):
    eta = W @ theta
    mean, var = moments(np.exp(eta), r)
    grad = W.T @ (y - mean)
    grad[p:] -= theta[p:] / sigma2
    info = (W * var[:, None]).T @ W
    info[p:, p:] += np.eye(theta.size - p) / sigma2
    return grad, info


def _solve(info, grad, labels):
    try:
        return linalg.cho_solve(linalg.cho_factor(info), grad)
    except linalg.LinAlgError:
        pass
    ridged = info + RIDGE * np.eye(info.shape[0])
    try:
        log.debug("Hessian not positive definite, retrying with ridge %g", RIDGE)
        return linalg.cho_solve(linalg.cho_factor(ridged), grad)
    except linalg.LinAlgError:
        w, v = np.linalg.eigh(info)
        worst = int(np.argmax(np.abs(v[:, 0])))
        raise NumericalError(
            f"singular Hessian: direction dominated by {labels[worst]!r} "
            f"(smallest eigenvalue {w[0]:.3g})"
        ) from None


def _newton(theta, sigma2, W, p, y, r, tol, max_steps, labels, trace):
    h_of = lambda th: _cond_loglik(W @ th, y, r) + _random_loglik(th[p:], sigma2)
    h = h_of(theta)
    steps = 0
    for _ in range(max_steps):
        grad, info = _gradient_and_information(theta, sigma2, W, p, y, r)
        direction = _solve(info, grad, labels)
        if np.max(np.abs(direction)) < tol and np.max(np.abs(grad)) < SCORE_TOL:
            return theta, h, True, steps
        if grad @ direction < 1e-9 * max(1.0, abs(h)):
            # predicted gain below the rounding level of h: plain Newton step
            theta = theta + direction
            h = h_of(theta)
            trace.append(h)
            steps += 1
            continue
        step = 1.0
        for _ in range(MAX_HALVINGS + 1):
            candidate = theta + step * direction
            h_new = h_of(candidate)
            if h_new >= h:
                break
            step *= 0.5
        else:
            # no ascent along the Newton direction: at the optimum up to rounding
            return theta, h, np.max(np.abs(grad)) < SCORE_TOL, steps
        theta, h = candidate, h_new
        trace.append(h)
        steps += 1
    grad, _ = _gradient_and_information(theta, sigma2, W, p, y, r)
    return theta, h, bool(np.max(np.abs(grad)) < SCORE_TOL), steps


def fit_design(
    X,
    Z,
    y,
    r,
    *,
    tol=1e-8,
    max_iter=500,
    sigma2_fixed=None,
    beta_labels=None,
    cluster_labels=None,
):
    """Maximize the h-likelihood for explicit design matrices.

    ``sigma2_fixed`` pins the random-effect variance (floored at 1e-8)
    instead of estimating it.
    """
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    q = Z.shape[1]
    beta_labels = tuple(beta_labels or (f"beta{i}" for i in range(p)))
    cluster_labels = tuple(cluster_labels or (str(i) for i in range(q)))
    labels = beta_labels + tuple(f"u[{c}]" for c in cluster_labels)

    W = np.hstack([X, Z])
    theta = np.zeros(p + q)
    ybar = float(y.mean())
    theta[0] = float(np.clip(math.log(ybar) if ybar > 0 else -10.0, -10.0, 10.0))
    if sigma2_fixed is not None:
        sigma2 = max(float(sigma2_fixed), SIGMA2_FLOOR)
    else:
        sigma2 = 0.1

    trace = []
    iterations = 0
    converged = False
    for outer in range(max_iter):
        theta_old = theta
        theta, h, inner_ok, steps = _newton(
            theta, sigma2, W, p, y, r, tol, max_iter, labels, trace
        )
        iterations += steps
        if sigma2_fixed is not None:
            converged = inner_ok
            break
        u = theta[p:]
        new_sigma2 = max(float(u @ u) / q, SIGMA2_FLOOR)
        change = max(
            abs(new_sigma2 - sigma2),
            float(np.max(np.abs(theta - theta_old))) if outer else math.inf,
        )
        sigma2 = new_sigma2
        log.debug("outer %d: sigma2=%.6g h=%.6f", outer, sigma2, h)
        if inner_ok and change < tol:
            converged = True
            break

    if sigma2_fixed is None:
        # final solve at the reported sigma2 so the scores vanish there
        theta, h, inner_ok, steps = _newton(
            theta, sigma2, W, p, y, r, tol, max_iter, labels, trace
        )
        iterations += steps
        converged = converged and inner_ok
    if not converged:
        log.warning("h-likelihood maximization did not converge")

    _, info = _gradient_and_information(theta, sigma2, W, p, y, r)
    try:
        cov = linalg.cho_solve(linalg.cho_factor(info), np.eye(p + q))
    except linalg.LinAlgError:
        cov = linalg.pinvh(info)
    beta = theta[:p].copy()
    u = theta[p:].copy()
    beta_se = np.sqrt(np.diag(cov)[:p])
    t_values, p_values = wald(beta, beta_se)
    cond = _cond_loglik(W @ theta, y, r)
    reported_sigma2 = 0.0 if sigma2 <= SIGMA2_FLOOR and sigma2_fixed is None else sigma2

    return MixedFit(
        beta=beta,
        beta_se=beta_se,
        u=u,
        sigma2=reported_sigma2,
        cond_loglik=cond,
        h_value=h,
        t_values=t_values,
        p_values=p_values,
        aic=selection.aic(cond, p),
        bic=selection.bic(cond, p, n),
        converged=converged,
        iterations=iterations,
        n=n,
        beta_labels=beta_labels,
        cluster_labels=cluster_labels,
        h_trace=trace,
    )


def fit(spec: MixedModelSpec, data: Mapping[str, Sequence]) -> MixedFit:
    fixed, random, y = build_design(data, spec)
    return fit_design(
        fixed.matrix,
        random.matrix,
        y,
        spec.r,
        tol=spec.tol,
        max_iter=spec.max_iter,
        sigma2_fixed=spec.sigma2_fixed,
        beta_labels=fixed.labels,
        cluster_labels=random.labels,
    )


def simulate(beta, sigma2, X, Z, r, seed):
    """Draw a response vector from the generative model.

    One normal effect per cluster, then one truncated-Poisson count per row.
    """
    if sigma2 < 0:
        raise DomainError("sigma2 must be non-negative")
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    rng = np.random.default_rng(seed)
    u = rng.normal(0.0, math.sqrt(sigma2), Z.shape[1])
    lam = rates(beta, u, X, Z)
    return sample_rates(lam, r, rng)


def wald(estimate, std_error):
    """Wald ratios and their two-sided normal p-values."""
    t = np.asarray(estimate, dtype=float) / np.asarray(std_error, dtype=float)
    return t, 2.0 * norm.sf(np.abs(t))


def format_p(p):
    return "< 0.0001" if p < 1e-4 else f"{p:.4f}"


def summary(fit: MixedFit) -> dict:
    """Coefficient table (estimate, SE, t, p) with a likelihood footer."""
    rows = [
        {
            "term": label,
            "estimate": float(b),
            "std_error": float(se),
            "t_value": float(t),
            "p_value": float(pv),
            "p_display": format_p(pv),
        }
        for label, b, se, t, pv in zip(
            fit.beta_labels, fit.beta, fit.beta_se, fit.t_values, fit.p_values
        )
    ]
    return {
        "coefficients": rows,
        "sigma2": fit.sigma2,
        "loglik": fit.cond_loglik,
        "h_value": fit.h_value,
        "k": fit.k,
        "n": fit.n,
        "aic": fit.aic,
        "bic": fit.bic,
        "converged": fit.converged,
        "iterations": fit.iterations,
    }


def format_summary(fit: MixedFit) -> str:
    table = summary(fit)
    lines = [f"{'Coefficients':<18}{'Estimate (Std. Error)':>26}{'t-value':>10}{'P-value':>12}"]
    for row in table["coefficients"]:
        est = f"{row['estimate']:.5f}({row['std_error']:.5f})"
        lines.append(f"{row['term']:<18}{est:>26}{row['t_value']:>10.3f}{row['p_display']:>12}")
    lines.append(
        f"log-likelihood {table['loglik']:.4f}  AIC {table['aic']:.3f}  BIC {table['bic']:.3f}"
    )
    return "\n".join(lines)
