"""Two-group linear discriminant analysis.

Fits Fisher's discriminant direction, scores records, places the cutoff at
the average of the two group centroids, and provides Box's M test for equal
covariance matrices and Wilks' lambda for group separation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .exceptions import DomainError, NumericalError, ValidationError

__all__ = [
    "QUANTITATIVE",
    "NON_QUANTITATIVE",
    "FEATURES",
    "LdaModel",
    "BoxMResult",
    "WilksResult",
    "ConfusionMatrix",
    "fit_lda",
    "score",
    "classify",
    "classify_score",
    "box_m",
    "wilks",
    "confusion",
]

QUANTITATIVE = "quantitative"
NON_QUANTITATIVE = "non-quantitative"
FEATURES = ("pages_blank", "lines_per_page", "words_per_line")


@dataclass(frozen=True)
class LdaModel:
    groups: tuple
    group_means: np.ndarray
    pooled_cov: np.ndarray
    raw_coefficients: np.ndarray
    standardized_coefficients: np.ndarray
    centroids: np.ndarray
    cutoff: float
    feature_names: tuple = FEATURES
    degenerate: bool = False

    @property
    def low_group(self):
        """Group whose centroid lies below the cutoff."""
        return self.groups[0] if self.centroids[0] <= self.centroids[1] else self.groups[1]

    @property
    def high_group(self):
        return self.groups[1] if self.low_group == self.groups[0] else self.groups[0]

    def to_dict(self):
        return {
            "groups": list(self.groups),
            "features": list(self.feature_names),
            "group_means": self.group_means.tolist(),
            "pooled_cov": self.pooled_cov.tolist(),
            "raw_coefficients": self.raw_coefficients.tolist(),
            "standardized_coefficients": self.standardized_coefficients.tolist(),
            "centroids": self.centroids.tolist(),
            "cutoff": self.cutoff,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class BoxMResult:
    M: float
    chi2: float
    df: int
    p: float


@dataclass(frozen=True)
class WilksResult:
    lam: float
    chi2: float
    df: int
    p: float


@dataclass(frozen=True)
class ConfusionMatrix:
    """Actual (rows) against predicted (columns) group counts."""

    labels: tuple
    counts: np.ndarray

    @classmethod
    def from_counts(cls, counts, labels=(QUANTITATIVE, NON_QUANTITATIVE)):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (2, 2) or np.any(counts < 0):
            raise DomainError("confusion counts must be a non-negative 2x2 array")
        return cls(tuple(labels), counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def row_percentages(self) -> np.ndarray:
        totals = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(totals > 0, 100.0 * self.counts / totals, 0.0)

    @property
    def overall_accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.n if self.n else 0.0

    def to_dict(self):
        return {
            "labels": list(self.labels),
            "counts": self.counts.tolist(),
            "row_percentages": self.row_percentages.tolist(),
            "overall_accuracy": self.overall_accuracy,
        }


def _split(features, grouping, min_size=2):
    X = np.asarray(features, dtype=float)
    g = np.asarray([str(v) for v in grouping])
    if X.ndim != 2 or X.shape[0] != g.size:
        raise ValidationError("features must be n x p with one group label per row")
    if not np.all(np.isfinite(X)):
        raise ValidationError("features hold missing or non-finite values")
    levels = tuple(sorted(set(g.tolist())))
    if len(levels) != 2:
        raise ValidationError(f"exactly two groups required, found {len(levels)}")
    order = _canonical_order(levels)
    parts = [X[g == lvl] for lvl in order]
    if any(part.shape[0] < min_size for part in parts):
        raise ValidationError(f"each group needs at least {min_size} members")
    return order, parts


def _canonical_order(levels):
    # keep the quantitative group first whatever spelling the data uses
    aliases = {"q": 0, QUANTITATIVE: 0, "nq": 1, NON_QUANTITATIVE: 1}
    keyed = [aliases.get(lvl.lower()) for lvl in levels]
    if None not in keyed and len(set(keyed)) == 2:
        return tuple(sorted(levels, key=lambda lvl: aliases[lvl.lower()]))
    return tuple(sorted(levels))


def _pooled(parts):
    n = sum(part.shape[0] for part in parts)
    scatter = sum((part - part.mean(axis=0)).T @ (part - part.mean(axis=0)) for part in parts)
    return scatter / (n - len(parts))


def _collinear_columns(S, names):
    w, v = np.linalg.eigh(S)
    loadings = np.abs(v[:, 0])
    involved = [names[i] for i in np.flatnonzero(loadings > 0.1)]
    return ", ".join(involved) or names[int(np.argmax(loadings))]


def fit_lda(features, grouping, feature_names: Sequence[str] = FEATURES) -> LdaModel:
    """Fisher discriminant for two groups.

    Raw coefficients are ``S_w^-1 (m_first - m_second)``. The standardized
    coefficients are that direction rescaled to unit pooled within-group
    score variance and multiplied by each variable's pooled standard
    deviation, signed so the first coefficient is non-negative. Centroids
    and the cutoff are computed by applying the standardized coefficients
    to the raw feature values.
    """
    order, parts = _split(features, grouping)
    names = tuple(feature_names)
    means = np.vstack([part.mean(axis=0) for part in parts])
    S = _pooled(parts)
    if np.linalg.matrix_rank(S) < S.shape[0]:
        raise NumericalError(
            f"pooled within-group covariance is singular; collinear columns: {_collinear_columns(S, names)}"
        )
    raw = np.linalg.solve(S, means[0] - means[1])
    spread = float(raw @ S @ raw)
    degenerate = spread <= 1e-24 * max(1.0, float(np.trace(S)))
    if degenerate:
        warnings.warn("group means coincide: no usable discriminant direction", RuntimeWarning)
        standardized = np.zeros_like(raw)
    else:
        unit = raw / math.sqrt(spread)
        standardized = unit * np.sqrt(np.diag(S))
        if standardized[0] < 0:
            standardized = -standardized
    centroids = np.array([float(np.mean(part @ standardized)) for part in parts])
    return LdaModel(
        groups=order,
        group_means=means,
        pooled_cov=S,
        raw_coefficients=raw,
        standardized_coefficients=standardized,
        centroids=centroids,
        cutoff=float(centroids.mean()),
        feature_names=names,
        degenerate=degenerate,
    )


def score(coefficients, record) -> float:
    """Discriminant score: dot product of coefficients and raw values."""
    return float(np.dot(np.asarray(coefficients, dtype=float), np.asarray(record, dtype=float)))


def classify_score(value, cutoff, below=QUANTITATIVE, otherwise=NON_QUANTITATIVE):
    """``below`` when the score is strictly under the cutoff; ties go to ``otherwise``."""
    if not math.isfinite(cutoff):
        raise DomainError("cutoff must be finite")
    return below if value < cutoff else otherwise


def classify(model: LdaModel, record):
    s = score(model.standardized_coefficients, record)
    return classify_score(s, model.cutoff, model.low_group, model.high_group)


def box_m(features, grouping) -> BoxMResult:
    """Box's M test of equal group covariance matrices (chi-square approximation)."""
    X = np.asarray(features, dtype=float)
    p = X.shape[1] if X.ndim == 2 else 1
    _, parts = _split(features, grouping, min_size=p + 1)
    g = len(parts)
    sizes = np.array([part.shape[0] for part in parts])
    n = int(sizes.sum())
    covs = [np.cov(part, rowvar=False, ddof=1).reshape(p, p) for part in parts]
    logdets = []
    for c in covs:
        sign, ld = np.linalg.slogdet(c)
        if sign <= 0:
            raise NumericalError("a group covariance matrix is singular")
        logdets.append(ld)
    pooled = sum((k - 1) * c for k, c in zip(sizes, covs)) / (n - g)
    sign, pooled_ld = np.linalg.slogdet(pooled)
    M = (n - g) * pooled_ld - float(np.sum((sizes - 1) * np.array(logdets)))
    M = max(M, 0.0)
    c = (np.sum(1.0 / (sizes - 1)) - 1.0 / (n - g)) * (2 * p * p + 3 * p - 1) / (6.0 * (p + 1) * (g - 1))
    chi2 = M * (1.0 - c)
    df = p * (p + 1) * (g - 1) // 2
    return BoxMResult(float(M), float(chi2), int(df), float(stats.chi2.sf(chi2, df)))


def wilks(features, grouping) -> WilksResult:
    """Wilks' lambda ``det(W) / det(T)`` with Bartlett's chi-square approximation."""
    _, parts = _split(features, grouping)
    X = np.vstack(parts)
    n, p = X.shape
    g = len(parts)
    W = sum((part - part.mean(axis=0)).T @ (part - part.mean(axis=0)) for part in parts)
    centered = X - X.mean(axis=0)
    T = centered.T @ centered
    sign_t, ld_t = np.linalg.slogdet(T)
    if sign_t <= 0:
        raise NumericalError("total scatter matrix is singular")
    _, ld_w = np.linalg.slogdet(W)
    lam = float(math.exp(ld_w - ld_t))
    chi2 = -(n - 1 - (p + g) / 2.0) * (ld_w - ld_t)
    df = p * (g - 1)
    return WilksResult(lam, float(chi2), int(df), float(stats.chi2.sf(chi2, df)))


def confusion(model: LdaModel, features, grouping) -> ConfusionMatrix:
    X = np.asarray(features, dtype=float)
    actual = [str(v) for v in grouping]
    index = {lvl: i for i, lvl in enumerate(model.groups)}
    counts = np.zeros((2, 2), dtype=np.int64)
    for row, label in zip(X, actual):
        if label not in index:
            raise ValidationError(f"unknown group label {label!r}")
        counts[index[label], index[classify(model, row)]] += 1
    return ConfusionMatrix(model.groups, counts)
