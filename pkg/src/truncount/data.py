"""Answer-booklet dataset: loading, validation, summaries and plot tables."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distribution import CountSample, DistFit, TruncatedPoisson, pmf, sample_rates
from .exceptions import ValidationError

__all__ = [
    "COLUMNS",
    "NUMERIC_COLUMNS",
    "StudentRecord",
    "Dataset",
    "load",
    "loads",
    "summarize",
    "histogram",
    "fit_overlay",
    "simulate_dataset",
    "to_csv",
    "write_table",
]

COLUMNS = ("course_type", "paper_type", "pages_blank", "lines_per_page", "words_per_line")
NUMERIC_COLUMNS = ("pages_blank", "lines_per_page", "words_per_line")
COURSE_TYPES = ("UG", "PG")
PAPER_TYPES = ("Q", "NQ")


@dataclass(frozen=True)
class StudentRecord:
    course_type: str
    paper_type: str
    pages_blank: int
    lines_per_page: float
    words_per_line: float


@dataclass(frozen=True)
class Dataset:
    records: tuple
    r: int
    source: str = "<memory>"

    @property
    def row_count(self) -> int:
        return len(self.records)

    def column(self, name):
        if name not in COLUMNS:
            raise KeyError(name)
        values = [getattr(rec, name) for rec in self.records]
        if name in ("course_type", "paper_type"):
            return values
        return np.asarray(values, dtype=np.int64 if name == "pages_blank" else float)

    def columns(self):
        return {name: self.column(name) for name in COLUMNS}

    def counts(self) -> CountSample:
        return CountSample(self.column("pages_blank"), self.r)

    def features(self, names=NUMERIC_COLUMNS):
        return np.column_stack([self.column(n) for n in names]).astype(float)


def _parse_rows(reader, r, source):
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError(f"{source}: file is empty") from None
    header = [h.strip() for h in header]
    missing = [c for c in COLUMNS if c not in header]
    unknown = [h for h in header if h not in COLUMNS]
    if missing or unknown or len(set(header)) != len(header):
        parts = []
        if missing:
            parts.append(f"missing column(s) {', '.join(missing)}")
        if unknown:
            parts.append(f"unknown column(s) {', '.join(unknown)}")
        if len(set(header)) != len(header):
            parts.append("duplicate columns")
        raise ValidationError(f"{source}: line 1: " + "; ".join(parts))
    pos = {name: header.index(name) for name in COLUMNS}

    records, problems = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            problems.append(f"line {lineno}: expected {len(header)} fields, found {len(row)}")
            continue
        cell = {name: row[i].strip() for name, i in pos.items()}
        errs = []
        if cell["course_type"] not in COURSE_TYPES:
            errs.append(f"course_type {cell['course_type']!r} not in {'/'.join(COURSE_TYPES)}")
        if cell["paper_type"] not in PAPER_TYPES:
            errs.append(f"paper_type {cell['paper_type']!r} not in {'/'.join(PAPER_TYPES)}")
        try:
            blank = int(cell["pages_blank"])
            if not 0 <= blank <= r:
                errs.append(f"pages_blank {blank} outside [0, {r}]")
        except ValueError:
            blank = None
            errs.append(f"pages_blank {cell['pages_blank']!r} is not an integer")
        reals = {}
        for name in ("lines_per_page", "words_per_line"):
            try:
                value = float(cell[name])
            except ValueError:
                errs.append(f"{name} {cell[name]!r} is not numeric")
                continue
            if not math.isfinite(value) or value < 0:
                errs.append(f"{name} {cell[name]!r} must be finite and non-negative")
            reals[name] = value
        if errs:
            problems.extend(f"line {lineno}: {e}" for e in errs)
            continue
        records.append(
            StudentRecord(cell["course_type"], cell["paper_type"], blank, reals["lines_per_page"], reals["words_per_line"])
        )
    if problems:
        raise ValidationError(f"{source}: {len(problems)} invalid field(s); first: {problems[0]}", problems)
    if not records:
        raise ValidationError(f"{source}: no data rows")
    return records


def loads(text: str, r: int, source="<string>") -> Dataset:
    """Parse CSV text (header row required; LF or CRLF)."""
    if isinstance(r, bool) or int(r) != r or r < 0:
        raise ValidationError(f"truncation bound must be a non-negative integer, got {r!r}")
    reader = csv.reader(io.StringIO(text, newline=""))
    return Dataset(tuple(_parse_rows(reader, int(r), source)), int(r), source)


def load(path, r: int) -> Dataset:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except FileNotFoundError:
        raise ValidationError(f"{path}: no such file") from None
    except UnicodeDecodeError as exc:
        raise ValidationError(f"{path}: not UTF-8 ({exc.reason})") from None
    return loads(text, r, str(path))


def _moments(values):
    x = np.asarray(values, dtype=float)
    mean = float(x.mean())
    sd = float(x.std(ddof=1)) if x.size > 1 else 0.0
    m2 = float(np.mean((x - mean) ** 2))
    skew = float(np.mean((x - mean) ** 3) / m2**1.5) if m2 > 0 else None
    return {"mean": mean, "sd": sd, "skewness": skew, "min": float(x.min()), "max": float(x.max())}


def _count_bins(dataset):
    # one bin per distinct integer in the observed range
    x = dataset.column("pages_blank")
    return int(x.max() - x.min()) + 1


def summarize(dataset: Dataset, bin_count: int = 10) -> dict:
    """Factor proportions, moments per numeric column and histogram tables.

    Skewness is the standardized third central moment; it is ``None`` for a
    constant column.
    """
    n = dataset.row_count
    proportions = {}
    for factor, levels in (("course_type", COURSE_TYPES), ("paper_type", PAPER_TYPES)):
        tally = Counter(dataset.column(factor))
        proportions[factor] = {lvl: tally.get(lvl, 0) / n for lvl in levels}
    return {
        "n": n,
        "r": dataset.r,
        "proportions": proportions,
        "moments": {name: _moments(dataset.column(name)) for name in NUMERIC_COLUMNS},
        "histograms": {
            name: histogram(dataset, name, _count_bins(dataset) if name == "pages_blank" else bin_count)
            for name in NUMERIC_COLUMNS
        },
    }


def histogram(dataset: Dataset, column: str, bin_count: int):
    """Equal-width bins spanning the column's range: ``[(lower, upper, count), ...]``.

    Each bin is half-open except the last, which includes the maximum.
    """
    if column not in NUMERIC_COLUMNS:
        raise ValidationError(f"{column!r} is not a numeric column")
    if bin_count < 1:
        raise ValidationError("bin_count must be at least 1")
    x = np.asarray(dataset.column(column), dtype=float)
    counts, edges = np.histogram(x, bins=int(bin_count), range=(x.min(), x.max()))
    return [(float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


def fit_overlay(dataset: Dataset, fitted: DistFit):
    """Observed and expected counts at every support point ``0..r``."""
    r = dataset.r
    if fitted.r is not None and fitted.r != r:
        raise ValidationError(f"fit used r={fitted.r}, dataset has r={r}")
    n = dataset.row_count
    observed = np.bincount(dataset.column("pages_blank"), minlength=r + 1)
    if fitted.lambda_hat > 0 and math.isfinite(fitted.lambda_hat):
        model = TruncatedPoisson(fitted.lambda_hat, r)
        expected = [n * pmf(x, model) for x in range(r + 1)]
    else:
        # boundary fits put every observation on one support point
        point = 0 if fitted.lambda_hat == 0 else r
        expected = [float(n) if x == point else 0.0 for x in range(r + 1)]
    return [(x, int(observed[x]), float(expected[x])) for x in range(r + 1)]


def simulate_dataset(lam: float, r: int, n: int, seed: int) -> Dataset:
    """Synthetic booklet data; ``pages_blank`` is right-truncated Poisson(``lam``).

    Factor levels follow the 24/76 course and 56/44 paper-type mix; lines
    per page and words per line are averages of three noisy readings.
    """
    model = TruncatedPoisson(lam, r)
    rng = np.random.default_rng(seed)
    blank = sample_rates(np.full(n, model.lam), model.r, rng)
    course = np.where(rng.random(n) < 0.24, "PG", "UG")
    paper = np.where(rng.random(n) < 0.56, "Q", "NQ")
    lines = np.clip(rng.normal(22.0, 3.0, (n, 3)), 0, 29).mean(axis=1).round(2)
    words = np.clip(rng.normal(7.0, 2.0, (n, 3)), 0, None).mean(axis=1).round(2)
    records = tuple(
        StudentRecord(str(c), str(p), int(b), float(l), float(w))
        for c, p, b, l, w in zip(course, paper, blank, lines, words)
    )
    return Dataset(records, model.r, f"simulated(lambda={lam}, r={r}, n={n}, seed={seed})")


def to_csv(dataset: Dataset) -> str:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for rec in dataset.records:
        writer.writerow([rec.course_type, rec.paper_type, rec.pages_blank, repr(rec.lines_per_page), repr(rec.words_per_line)])
    return buf.getvalue()


def write_table(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
