"""Exact integer optimization of the page-utility difference.

All quantities are :class:`fractions.Fraction`; the search is a plain
enumeration of the candidate page counts, which is exact and cheap for
booklets of a few hundred pages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .exceptions import DomainError, ValidationError

__all__ = [
    "UtilityProblem",
    "UtilityValue",
    "Feasibility",
    "UtilitySolution",
    "utility",
    "feasible",
    "optimize",
    "parse_config",
    "load_config",
    "CONFIG_KEYS",
]

CONFIG_KEYS = ("X", "N1", "N2", "c11", "c12", "c21", "c22", "A0", "X1_min", "X1_max")


def _frac(value, name):
    try:
        out = Fraction(str(value).strip()) if not isinstance(value, Fraction) else value
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"{name}: not a decimal number: {value!r}") from None
    if out < 0:
        raise ValidationError(f"{name} must be non-negative")
    return out


@dataclass(frozen=True)
class UtilityProblem:
    X: int
    N1: int
    N2: int
    c11: Fraction
    c12: Fraction
    c21: Fraction
    c22: Fraction
    A0: Fraction
    x1_min: int = 0
    x1_max: Optional[int] = None
    #: optional inclusive range of current page counts to search as well
    x_range: Optional[tuple] = None

    def __post_init__(self):
        for name in ("X", "N1", "N2"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ValidationError(f"{name} must be an integer")
            object.__setattr__(self, name, int(value))
        if self.X < 1 or self.N1 < 1 or self.N2 < 0:
            raise ValidationError("need X >= 1, N1 >= 1, N2 >= 0")
        for name in ("c11", "c12", "c21", "c22", "A0"):
            object.__setattr__(self, name, _frac(getattr(self, name), name))
        x1_max = self.X if self.x1_max is None else int(self.x1_max)
        object.__setattr__(self, "x1_max", x1_max)
        object.__setattr__(self, "x1_min", int(self.x1_min))
        if not 0 <= self.x1_min <= x1_max <= self.X:
            raise ValidationError(f"X1 range [{self.x1_min}, {x1_max}] must lie within [0, {self.X}]")
        if self.x_range is not None:
            lo, hi = (int(v) for v in self.x_range)
            if not 1 <= lo <= hi:
                raise ValidationError("X range must satisfy 1 <= lo <= hi")
            object.__setattr__(self, "x_range", (lo, hi))

    def candidates(self):
        xs = [self.X] if self.x_range is None else range(self.x_range[0], self.x_range[1] + 1)
        for x in xs:
            hi = min(self.x1_max, x)
            for x1 in range(self.x1_min, hi + 1):
                yield x, x1


@dataclass(frozen=True, order=True)
class UtilityValue:
    value: Fraction
    k_adjust: int = field(compare=False)


@dataclass(frozen=True)
class Feasibility:
    ok: bool
    main_slack: Fraction
    additional_slack: Fraction

    @property
    def binding(self):
        out = []
        if self.main_slack == 0:
            out.append("main_script_surplus")
        if self.additional_slack == 0:
            out.append("additional_script_cost")
        return tuple(out)


@dataclass(frozen=True)
class UtilitySolution:
    found: bool
    x_star: Optional[int]
    x1_star: Optional[int]
    utility: Optional[UtilityValue]
    feasible_count: int
    binding: tuple = ()
    candidate_count: int = 0

    def to_dict(self):
        u = self.utility
        return {
            "found": self.found,
            "X": self.x_star,
            "X1": self.x1_star,
            "utility": None if u is None else str(u.value),
            "utility_float": None if u is None else float(u.value),
            "k_adjust": None if u is None else u.k_adjust,
            "feasible_count": self.feasible_count,
            "candidate_count": self.candidate_count,
            "binding": list(self.binding),
        }


def utility(X, X1, N1) -> UtilityValue:
    """``3*N1*(X - X1)/4 + k`` with ``k = N1*(X - X1) mod 4``."""
    if X1 < 0 or X1 > X:
        raise DomainError(f"X1 must lie in [0, X]; got X={X}, X1={X1}")
    saved = N1 * (X - X1)
    k = saved % 4
    return UtilityValue(Fraction(3 * saved, 4) + k, k)


def feasible(X, X1, problem: UtilityProblem) -> Feasibility:
    """Check the main-script surplus and additional-script cost constraints."""
    if X1 < 0 or X1 > X:
        raise DomainError(f"X1 must lie in [0, X]; got X={X}, X1={X1}")
    p = problem
    main = p.N1 * X * p.c11 - p.N1 * X1 * p.c12 - p.A0
    additional = p.A0 - (4 * p.N2 * p.c21 + Fraction(p.N1 * (X - X1), 4) * p.c22)
    return Feasibility(main >= 0 and additional >= 0, main, additional)


def optimize(problem: UtilityProblem) -> UtilitySolution:
    """Exhaustive search; ties prefer the larger X1, then the smaller X."""
    best = None
    best_key = None
    n_feasible = 0
    n_total = 0
    for x, x1 in problem.candidates():
        n_total += 1
        check = feasible(x, x1, problem)
        if not check.ok:
            continue
        n_feasible += 1
        u = utility(x, x1, problem.N1)
        key = (u.value, x1, -x)
        if best_key is None or key > best_key:
            best_key, best = key, (x, x1, u, check)
    if best is None:
        return UtilitySolution(False, None, None, None, 0, (), n_total)
    x, x1, u, check = best
    return UtilitySolution(True, x, x1, u, n_feasible, check.binding, n_total)


def parse_config(text: str) -> UtilityProblem:
    """Parse ``key = value`` lines (``#`` comments allowed) into a problem.

    Keys are exactly those in :data:`CONFIG_KEYS`; ``:`` also works as the
    separator.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        if sep is None:
            raise ValidationError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split(sep, 1))
        if key not in CONFIG_KEYS:
            raise ValidationError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ValidationError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    missing = [k for k in CONFIG_KEYS if k not in values]
    if missing:
        raise ValidationError(f"missing config keys: {', '.join(missing)}")

    def integer(key):
        try:
            return int(values[key])
        except ValueError:
            raise ValidationError(f"{key} must be an integer, got {values[key]!r}") from None

    return UtilityProblem(
        X=integer("X"),
        N1=integer("N1"),
        N2=integer("N2"),
        c11=values["c11"],
        c12=values["c12"],
        c21=values["c21"],
        c22=values["c22"],
        A0=values["A0"],
        x1_min=integer("X1_min"),
        x1_max=integer("X1_max"),
    )


def load_config(path) -> UtilityProblem:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
