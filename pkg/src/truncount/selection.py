"""Information criteria and model ranking."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .exceptions import DomainError

__all__ = ["aic", "caic", "bic", "ModelScore", "Ranking", "rank"]


def aic(loglik, k):
    """Akaike information criterion, ``2k - 2*loglik``."""
    return 2.0 * k - 2.0 * loglik


def caic(aic_value, k, n):
    """AIC with the small-sample correction ``2k(k+1)/(n-k-1)``."""
    if n <= k + 1:
        raise DomainError(f"corrected AIC needs n > k + 1 (n={n}, k={k})")
    return aic_value + 2.0 * k * (k + 1) / (n - k - 1)


def bic(loglik, k, n):
    """Bayesian information criterion, ``k*ln(n) - 2*loglik``."""
    if n < 1:
        raise DomainError("BIC needs n >= 1")
    return k * math.log(n) - 2.0 * loglik


@dataclass(frozen=True)
class ModelScore:
    label: str
    loglik: float
    k: int
    n: int
    aic: float
    #: None when the sample is too small for the correction (n <= k + 1)
    caic: Optional[float]
    bic: float

    @classmethod
    def from_loglik(cls, label, loglik, k, n):
        a = aic(loglik, k)
        c = caic(a, k, n) if n > k + 1 else None
        return cls(label, float(loglik), int(k), int(n), a, c, bic(loglik, k, n))

    def to_dict(self):
        return {
            "label": self.label,
            "loglik": self.loglik,
            "k": self.k,
            "n": self.n,
            "aic": self.aic,
            "caic": self.caic,
            "bic": self.bic,
        }


@dataclass(frozen=True)
class Ranking:
    """Models ordered best-first plus the minimizer of each criterion."""

    order: tuple
    best: dict

    def to_dict(self):
        return {"order": [s.label for s in self.order], "best": dict(self.best)}


def rank(scores):
    """Order models by AIC (ties: BIC, then label); lower is better."""
    scores = list(scores)
    if not scores:
        raise DomainError("rank needs at least one model")
    order = tuple(sorted(scores, key=lambda s: (s.aic, s.bic, s.label)))
    best = {}
    for crit in ("aic", "caic", "bic"):
        usable = [s for s in scores if getattr(s, crit) is not None]
        best[crit] = min(usable, key=lambda s: (getattr(s, crit), s.label)).label if usable else None
    return Ranking(order, best)
