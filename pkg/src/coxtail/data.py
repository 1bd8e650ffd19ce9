"""Survival data containers, CSV ingestion and basic diagnostics.

A :class:`SurvivalSample` holds right-censored observations ``(t_i, delta_i,
z_i)`` together with the permutation that sorts them by decreasing time.
Every estimator in the package works on that descending order, so it is
computed once at construction.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError

__all__ = [
    "SurvivalSample",
    "DatasetDiagnostics",
    "descending_order",
    "load_dataset",
    "dump_dataset",
    "diagnostics",
]


def descending_order(times, status):
    """Permutation sorting observations by decreasing time.

    Ties are broken by placing events before censorings, then by input
    position (stable).
    """
    times = np.asarray(times, dtype=float)
    status = np.asarray(status)
    idx = np.arange(times.size)
    # lexsort: last key is primary
    return np.lexsort((idx, -status, -times))


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SurvivalSample:
    """Right-censored survival observations with covariates.

    Parameters
    ----------
    times : array_like, shape (n,)
        Observed times ``T = min(X, C)``; strictly positive and finite.
    status : array_like, shape (n,)
        Failure indicator, 1 for an observed event and 0 for censoring.
    covariates : array_like, shape (n, p), optional
        Covariate vectors. A 1-d array is read as a single covariate.
        Defaults to an ``(n, 0)`` matrix.
    names : sequence of str, optional
        Covariate column names, ``z1, ..., zp`` by default.

    Attributes
    ----------
    order : ndarray of int
        Indices such that ``times[order]`` is non-increasing.
    """

    times: np.ndarray
    status: np.ndarray
    covariates: np.ndarray
    names: tuple
    order: np.ndarray

    def __init__(self, times, status, covariates=None, names=None):
        times = np.asarray(times, dtype=float).ravel()
        status_raw = np.asarray(status).ravel()
        n = times.size
        if covariates is None:
            covariates = np.zeros((n, 0))
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        if covariates.ndim != 2:
            raise DataError("covariates must be a 2-d array")
        if covariates.shape[0] != n:
            raise DataError(
                f"covariate rows ({covariates.shape[0]}) != number of times ({n})"
            )
        if status_raw.size != n:
            raise DataError(f"status length ({status_raw.size}) != number of times ({n})")
        if n and not np.all(np.isfinite(times)):
            raise DataError("times must be finite")
        if n and np.any(times <= 0):
            raise DataError("times must be strictly positive")
        if n and not ((status_raw == 0) | (status_raw == 1)).all():
            raise DataError("status values must be 0 or 1")
        if not np.all(np.isfinite(covariates)):
            raise DataError("covariates must be finite (missing cells are not imputed)")
        status_arr = status_raw.astype(np.int8)
        p = covariates.shape[1]
        if names is None:
            names = tuple(f"z{j + 1}" for j in range(p))
        names = tuple(names)
        if len(names) != p:
            raise DataError(f"{len(names)} covariate names for {p} columns")

        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "status", _frozen(status_arr))
        object.__setattr__(self, "covariates", _frozen(covariates))
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "order", _frozen(descending_order(times, status_arr)))

    @property
    def n(self):
        return self.times.size

    @property
    def p(self):
        return self.covariates.shape[1]

    def sorted(self):
        """Return ``(times, status, covariates)`` in descending time order."""
        o = self.order
        return self.times[o], self.status[o], self.covariates[o]

    def linear_predictor(self, beta):
        """``beta . z_i`` for every observation (input order)."""
        beta = np.asarray(beta, dtype=float).ravel()
        if beta.size != self.p:
            raise DataError(f"beta has length {beta.size}, sample has {self.p} covariates")
        if self.p == 0:
            return np.zeros(self.n)
        return self.covariates @ beta

    def scaled(self, c):
        """Copy with every time multiplied by ``c > 0``."""
        return SurvivalSample(self.times * c, self.status, self.covariates, self.names)

    def __len__(self):
        return self.n

    def __repr__(self):
        return (
            f"SurvivalSample(n={self.n}, p={self.p}, "
            f"events={int(self.status.sum())})"
        )


@dataclass(frozen=True)
class DatasetDiagnostics:
    n: int
    event_count: int
    censoring_rate: float
    max_time: float
    max_time_censored: bool


def diagnostics(sample):
    """Summary counts for a sample; raises ``DataError`` when it is empty."""
    if sample.n == 0:
        raise DataError("empty sample: censoring rate is undefined")
    events = int(sample.status.sum())
    top = sample.order[0]
    return DatasetDiagnostics(
        n=sample.n,
        event_count=events,
        censoring_rate=1.0 - events / sample.n,
        max_time=float(sample.times[top]),
        max_time_censored=bool(sample.status[top] == 0),
    )


def _parse_float(cell, lineno, column):
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"column {column!r}: cannot parse {cell!r} as a number", lineno) from None
    return value


def load_dataset(source, schema=None):
    """Read a CSV file with header ``time,status,z1,...,zp``.

    Parameters
    ----------
    source : path, str, bytes or file-like
        A filesystem path, raw CSV bytes, or an open text/binary stream.
        Lines starting with ``#`` are skipped.
    schema : sequence of str, optional
        Expected column names. When given the header must match exactly.

    Returns
    -------
    SurvivalSample

    Raises
    ------
    DataError
        On a malformed row (with its line number), a non-positive time or a
        status outside ``{0, 1}``.
    """
    text = _read_text(source)
    lines = text.splitlines()
    rows = []
    header = None
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        cells = [c.strip() for c in next(csv.reader([line]))]
        if header is None:
            header = cells
            if len(header) < 2 or header[0] != "time" or header[1] != "status":
                raise DataError("header must start with 'time,status'", lineno)
            if schema is not None and list(schema) != header:
                raise DataError(f"header {header} does not match schema {list(schema)}", lineno)
            continue
        if len(cells) != len(header):
            raise DataError(f"expected {len(header)} cells, found {len(cells)}", lineno)
        if any(c == "" for c in cells):
            raise DataError("missing cell", lineno)
        t = _parse_float(cells[0], lineno, "time")
        if not np.isfinite(t) or t <= 0:
            raise DataError(f"time must be positive and finite, got {cells[0]}", lineno)
        d = _parse_float(cells[1], lineno, "status")
        if d not in (0.0, 1.0):
            raise DataError(f"status must be 0 or 1, got {cells[1]}", lineno)
        z = [_parse_float(c, lineno, header[j + 2]) for j, c in enumerate(cells[2:])]
        rows.append((t, int(d), z))
    if header is None:
        raise DataError("no header found")
    p = len(header) - 2
    times = np.array([r[0] for r in rows], dtype=float)
    status = np.array([r[1] for r in rows], dtype=np.int8)
    cov = np.array([r[2] for r in rows], dtype=float).reshape(len(rows), p)
    return SurvivalSample(times, status, cov, names=header[2:])


def _read_text(source):
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data


def dump_dataset(sample, dest=None):
    """Write ``sample`` as CSV in input order; return the text if ``dest`` is None."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["time", "status", *sample.names])
    for i in range(sample.n):
        writer.writerow(
            [repr(float(sample.times[i])), int(sample.status[i])]
            + [repr(float(v)) for v in sample.covariates[i]]
        )
    text = buf.getvalue()
    if dest is None:
        return text
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        dest.write(text)
    return None
