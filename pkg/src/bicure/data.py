"""Datasets and the CSV format.

Censored data live in :class:`BivariateDataset`; uncensored draws with
cured (infinite) times live in :class:`CureTruthDataset`. Infinite times
are ``np.inf`` in memory and the literal token ``inf`` on disk.

CSV layout: ``id,t1,t2,d1,d2`` followed by covariate columns named
``x1_<name>`` (margin 1) and ``x2_<name>`` (margin 2). Cure-truth files
omit the ``d`` columns.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, InsufficientDataError, ShapeError

__all__ = [
    "BivariateDataset",
    "CureTruthDataset",
    "read_csv",
    "write_csv",
    "dataset_to_csv",
    "load_retinopathy",
    "PATTERNS",
]

PATTERNS = ((0, 0), (1, 0), (0, 1), (1, 1))


def _as_matrix(x, n, name):
    if x is None:
        return np.zeros((n, 0))
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != n:
        raise ShapeError(f"{name} has {x.shape[0]} rows, expected {n}")
    return x


@dataclass(frozen=True, eq=False)
class BivariateDataset:
    t1: np.ndarray
    t2: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    x1: np.ndarray = None
    x2: np.ndarray = None
    covariate_names: tuple = ((), ())
    ids: np.ndarray = None
    _patterns: dict = field(default=None, repr=False)

    def __post_init__(self):
        t1 = np.asarray(self.t1, dtype=float)
        t2 = np.asarray(self.t2, dtype=float)
        n = t1.size
        if n == 0:
            raise InsufficientDataError("dataset is empty")
        if t1.shape != (n,) or t2.shape != (n,):
            raise ShapeError("t1 and t2 must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(t1)) and np.all(np.isfinite(t2))):
            raise DataFormatError("censored data must have finite observed times")
        if np.any(t1 <= 0) or np.any(t2 <= 0):
            raise DataFormatError("observed times must be positive")
        d1 = np.asarray(self.d1)
        d2 = np.asarray(self.d2)
        for d in (d1, d2):
            if d.shape != (n,) or not np.all((d == 0) | (d == 1)):
                raise DataFormatError("event indicators must be 0/1 with one per row")
        x1 = _as_matrix(self.x1, n, "x1")
        x2 = _as_matrix(self.x2, n, "x2")
        names = tuple(tuple(ns) for ns in self.covariate_names)
        if names == ((), ()) and (x1.shape[1] or x2.shape[1]):
            names = (tuple(f"v{k + 1}" for k in range(x1.shape[1])), tuple(f"v{k + 1}" for k in range(x2.shape[1])))
        if len(names[0]) != x1.shape[1] or len(names[1]) != x2.shape[1]:
            raise ShapeError("covariate_names do not match covariate columns")
        ids = np.arange(1, n + 1) if self.ids is None else np.asarray(self.ids)
        d1 = d1.astype(np.int8)
        d2 = d2.astype(np.int8)
        pats = {}
        for a, b in PATTERNS:
            idx = np.flatnonzero((d1 == a) & (d2 == b))
            pats[(a, b)] = idx
        for k, v in dict(t1=t1, t2=t2, d1=d1, d2=d2, x1=x1, x2=x2, covariate_names=names,
                          ids=ids, _patterns=pats).items():
            object.__setattr__(self, k, v)
        for arr in (t1, t2, d1, d2, x1, x2):
            arr.setflags(write=False)

    @property
    def n(self):
        return self.t1.size

    def __len__(self):
        return self.n

    @property
    def d1_total(self):
        return int(self.d1.sum())

    @property
    def d2_total(self):
        return int(self.d2.sum())

    @property
    def d12_total(self):
        return int((self.d1 & self.d2).sum())

    @property
    def has_covariates(self):
        return self.x1.shape[1] > 0 or self.x2.shape[1] > 0

    def pattern_index(self, pattern):
        return self._patterns[tuple(pattern)]

    def censoring_rates(self):
        return 1.0 - self.d1.mean(), 1.0 - self.d2.mean()

    def shared_covariates(self):
        """Columns present in both margins with identical values (usable under R=inf)."""
        out = []
        for i, name in enumerate(self.covariate_names[0]):
            if name in self.covariate_names[1]:
                j = self.covariate_names[1].index(name)
                if np.array_equal(self.x1[:, i], self.x2[:, j]):
                    out.append(i)
        return out

    def without_covariates(self):
        return BivariateDataset(self.t1, self.t2, self.d1, self.d2, ids=self.ids)

    def subset(self, idx):
        idx = np.asarray(idx)
        return BivariateDataset(self.t1[idx], self.t2[idx], self.d1[idx], self.d2[idx], self.x1[idx],
                                self.x2[idx], self.covariate_names, self.ids[idx])

    def equals(self, other):
        return (
            isinstance(other, BivariateDataset)
            and self.covariate_names == other.covariate_names
            and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("t1", "t2", "d1", "d2", "x1", "x2", "ids"))
        )


@dataclass(frozen=True, eq=False)
class CureTruthDataset:
    """Uncensored pairs in (0, inf]; ``inf`` marks a cured margin."""

    t1: np.ndarray
    t2: np.ndarray
    x1: np.ndarray = None
    x2: np.ndarray = None
    covariate_names: tuple = ((), ())
    ids: np.ndarray = None

    def __post_init__(self):
        t1 = np.asarray(self.t1, dtype=float)
        t2 = np.asarray(self.t2, dtype=float)
        n = t1.size
        if t1.shape != (n,) or t2.shape != (n,):
            raise ShapeError("t1 and t2 must be 1-D arrays of equal length")
        if np.any(np.isnan(t1)) or np.any(np.isnan(t2)) or np.any(t1 <= 0) or np.any(t2 <= 0):
            raise DataFormatError("extended times must lie in (0, inf]")
        x1 = _as_matrix(self.x1, n, "x1")
        x2 = _as_matrix(self.x2, n, "x2")
        names = tuple(tuple(ns) for ns in self.covariate_names)
        ids = np.arange(1, n + 1) if self.ids is None else np.asarray(self.ids)
        for k, v in dict(t1=t1, t2=t2, x1=x1, x2=x2, covariate_names=names, ids=ids).items():
            object.__setattr__(self, k, v)

    @property
    def n(self):
        return self.t1.size

    def __len__(self):
        return self.n

    def pairs(self):
        return np.column_stack([self.t1, self.t2])

    def cured(self):
        return np.isinf(self.t1), np.isinf(self.t2)

    def equals(self, other):
        return (
            isinstance(other, CureTruthDataset)
            and self.covariate_names == other.covariate_names
            and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("t1", "t2", "x1", "x2", "ids"))
        )


def _fmt(v):
    if math.isinf(v):
        return "inf"
    # repr gives the shortest string that round-trips
    return repr(float(v))


def _parse_float(s, row, col):
    s = s.strip()
    if s == "inf":
        return math.inf
    try:
        v = float(s)
    except ValueError:
        raise DataFormatError(f"row {row}: column {col!r} is not a number: {s!r}") from None
    if not math.isfinite(v):
        raise DataFormatError(f"row {row}: column {col!r} must be finite or the token 'inf'")
    return v


def dataset_to_csv(ds):
    """CSV text of a dataset, LF line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    censored = isinstance(ds, BivariateDataset)
    head = ["id", "t1", "t2"] + (["d1", "d2"] if censored else [])
    head += [f"x1_{c}" for c in ds.covariate_names[0]] + [f"x2_{c}" for c in ds.covariate_names[1]]
    w.writerow(head)
    for i in range(ds.n):
        row = [str(ds.ids[i]), _fmt(ds.t1[i]), _fmt(ds.t2[i])]
        if censored:
            row += [str(int(ds.d1[i])), str(int(ds.d2[i]))]
        row += [_fmt(v) for v in ds.x1[i]] + [_fmt(v) for v in ds.x2[i]]
        w.writerow(row)
    return buf.getvalue()


def write_csv(ds, path):
    Path(path).write_bytes(dataset_to_csv(ds).encode("utf-8"))


def _read_text(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"{path}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"{path}: not UTF-8 ({exc.reason})") from exc


def read_csv(path):
    """Read a dataset file; the presence of d1/d2 columns selects the type."""
    text = _read_text(path)
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    head = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataFormatError(f"{path}: no data rows")
    for need in ("t1", "t2"):
        if need not in head:
            raise DataFormatError(f"{path}: missing column {need!r}")
    censored = "d1" in head or "d2" in head
    if censored and not ("d1" in head and "d2" in head):
        raise DataFormatError(f"{path}: need both d1 and d2")
    cov1 = [h for h in head if h.startswith("x1_")]
    cov2 = [h for h in head if h.startswith("x2_")]
    known = {"id", "t1", "t2", "d1", "d2", *cov1, *cov2}
    extra = [h for h in head if h not in known]
    if extra:
        raise DataFormatError(f"{path}: unexpected columns {extra}")
    col = {h: k for k, h in enumerate(head)}
    data = {h: [] for h in head}
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(head):
            raise DataFormatError(f"line {lineno}: expected {len(head)} fields, got {len(r)}")
        for h in head:
            s = r[col[h]]
            if h == "id":
                data[h].append(s.strip())
            elif h in ("d1", "d2"):
                if s.strip() not in ("0", "1"):
                    raise DataFormatError(f"line {lineno}: {h} must be 0 or 1, got {s!r}")
                data[h].append(int(s))
            else:
                data[h].append(_parse_float(s, lineno, h))
    ids = np.array([int(i) if i.lstrip("-").isdigit() else i for i in data["id"]]) if "id" in col else None
    x1 = np.column_stack([data[h] for h in cov1]) if cov1 else None
    x2 = np.column_stack([data[h] for h in cov2]) if cov2 else None
    names = (tuple(h[3:] for h in cov1), tuple(h[3:] for h in cov2))
    t1 = np.array(data["t1"])
    t2 = np.array(data["t2"])
    try:
        if censored:
            return BivariateDataset(t1, t2, np.array(data["d1"]), np.array(data["d2"]), x1, x2, names, ids)
        return CureTruthDataset(t1, t2, x1, x2, names, ids)
    except (ShapeError, InsufficientDataError) as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def load_retinopathy(path):
    """Load the wide retinopathy export (id,t1,d1,t2,d2,age,risk1,risk2).

    Margin 1 is the laser-treated eye. Age is centred and divided by its
    sample standard deviation (ddof=1); the risk score is margin-specific.
    """
    text = _read_text(path)
    rows = list(csv.DictReader(io.StringIO(text)))
    need = {"id", "t1", "d1", "t2", "d2", "age", "risk1", "risk2"}
    if not rows or not need <= set(rows[0]):
        raise DataFormatError(f"{path}: expected columns {sorted(need)}")
    col = {k: np.array([float(r[k]) for r in rows]) for k in need}
    age = col["age"]
    age = (age - age.mean()) / age.std(ddof=1)
    x1 = np.column_stack([age, col["risk1"]])
    x2 = np.column_stack([age, col["risk2"]])
    return BivariateDataset(col["t1"], col["t2"], col["d1"].astype(int), col["d2"].astype(int), x1, x2,
                            (("age", "risk"), ("age", "risk")), col["id"].astype(int))
