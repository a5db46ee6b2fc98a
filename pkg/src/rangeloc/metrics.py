"""Evaluation quantities and their CSV / JSON-lines serialization."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAE_COLUMNS = ("t", "mae", "m_effective")
CDF_COLUMNS = ("value", "fraction")
VARIANCE_COLUMNS = ("tau", "var", "tau_var")
DECISION_COLUMNS = ("trial", "t", "agent_id", "old_volume", "new_volume", "chosen", "flag")


@dataclass(frozen=True)
class MaeSeries:
    mae: np.ndarray          # NaN where no trial had an estimate
    m_effective: np.ndarray  # trials contributing at each t
    M: int

    def rows(self):
        for t, (v, m) in enumerate(zip(self.mae, self.m_effective)):
            yield {"t": t, "mae": float(v), "m_effective": int(m)}


def mae_from_errors(errors: np.ndarray) -> MaeSeries:
    """Column means of a ``(M, T)`` error array, skipping NaN (missing) entries."""
    errors = np.asarray(errors, dtype=float)
    present = np.isfinite(errors)
    count = present.sum(axis=0)
    total = np.where(present, errors, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mae = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return MaeSeries(mae, count, errors.shape[0])


def position_errors(traces, target: int = 0) -> np.ndarray:
    """``(M, T)`` distances between each trial's reported estimate and the truth."""
    lengths = {len(tr) for tr in traces}
    if len(lengths) > 1:
        raise ValueError("all traces must have the same length")
    return np.stack([np.linalg.norm(tr.reported_estimates(target) - tr.target_positions[:, target], axis=1)
                     for tr in traces])


def mae(traces, target: int = 0) -> MaeSeries:
    return mae_from_errors(position_errors(traces, target))


@dataclass(frozen=True)
class EmpiricalCdf:
    values: np.ndarray
    fractions: np.ndarray

    def __call__(self, x) -> np.ndarray:
        idx = np.searchsorted(self.values, x, side="right")
        return np.where(idx > 0, idx / len(self.values), 0.0)

    def median(self) -> float:
        return float(np.median(self.values))

    def rows(self):
        for v, f in zip(self.values, self.fractions):
            yield {"value": float(v), "fraction": float(f)}


def empirical_cdf(samples) -> EmpiricalCdf:
    values = np.sort(np.asarray(samples, dtype=float).ravel())
    if values.size == 0:
        raise ValueError("need at least one sample")
    return EmpiricalCdf(values, np.arange(1, values.size + 1) / values.size)


cdf_of_info_errors = empirical_cdf


def dominates(a: EmpiricalCdf, b: EmpiricalCdf) -> bool:
    """True iff ``a(x) >= b(x)`` at every point of the merged support."""
    grid = np.union1d(a.values, b.values)
    return bool(np.all(a(grid) >= b(grid)))


@dataclass(frozen=True)
class VarianceTrace:
    tau: np.ndarray
    var: np.ndarray

    @property
    def tau_var(self) -> np.ndarray:
        return self.tau * self.var

    def rows(self):
        for t, v, tv in zip(self.tau, self.var, self.tau_var):
            yield {"tau": int(t), "var": float(v), "tau_var": float(tv)}


def variance_trace(ensemble, taus: Sequence[int] | None = None) -> VarianceTrace:
    """Trace of the sample covariance (``M - 1`` denominator) per round.

    ``ensemble`` is ``(M, n_tau, m)``: one estimate per trial and round.
    """
    ensemble = np.asarray(ensemble, dtype=float)
    if ensemble.shape[0] < 2:
        raise ValueError("need at least two trials")
    var = np.var(ensemble, axis=0, ddof=1).sum(axis=-1)
    tau = np.arange(1, ensemble.shape[1] + 1) if taus is None else np.asarray(taus)
    return VarianceTrace(tau, var)


def first_within(series: np.ndarray, reference: float, rel_tol: float) -> int | None:
    """Index of the first finite entry within ``rel_tol`` of ``reference``."""
    hit = np.isfinite(series) & (np.abs(series - reference) <= rel_tol * abs(reference))
    idx = np.flatnonzero(hit)
    return int(idx[0]) if idx.size else None


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(path, columns: Sequence[str], rows: Iterable[dict], fmt: str = "csv") -> Path:
    """Write rows with a fixed column layout. Floats keep full precision."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            if fmt == "csv":
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(columns)
                for row in rows:
                    writer.writerow([_cell(row[c]) for c in columns])
            elif fmt == "jsonl":
                for row in rows:
                    fh.write(json.dumps({c: row[c] for c in columns}, allow_nan=True) + "\n")
            else:
                raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc
    return path


def _parse(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def read_table(path, fmt: str | None = None) -> list[dict]:
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix == ".jsonl" else "csv")
    try:
        with path.open(newline="") as fh:
            if fmt == "csv":
                return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]
            return [json.loads(line) for line in fh if line.strip()]
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def export(results, path, fmt: str = "csv") -> Path:
    """Serialize a :class:`MaeSeries`, :class:`EmpiricalCdf` or :class:`VarianceTrace`."""
    columns = {MaeSeries: MAE_COLUMNS, EmpiricalCdf: CDF_COLUMNS, VarianceTrace: VARIANCE_COLUMNS}[type(results)]
    return write_table(path, columns, results.rows(), fmt)


def import_mae(path, fmt: str | None = None) -> MaeSeries:
    rows = read_table(path, fmt)
    mae_values = np.array([float(r["mae"]) for r in rows])
    counts = np.array([int(r["m_effective"]) for r in rows], dtype=int)
    return MaeSeries(mae_values, counts, int(counts.max()) if len(counts) else 0)


def import_cdf(path, fmt: str | None = None) -> EmpiricalCdf:
    rows = read_table(path, fmt)
    return EmpiricalCdf(np.array([float(r["value"]) for r in rows]), np.array([float(r["fraction"]) for r in rows]))


def import_variance(path, fmt: str | None = None) -> VarianceTrace:
    rows = read_table(path, fmt)
    return VarianceTrace(np.array([int(r["tau"]) for r in rows]), np.array([float(r["var"]) for r in rows]))


def decision_rows(traces) -> Iterable[dict]:
    for tr in traces:
        for dec in tr.decisions:
            yield {"trial": tr.trial, "t": dec.t, "agent_id": dec.agent_id,
                   "old_volume": float(dec.old_volume), "new_volume": float(dec.new_volume),
                   "chosen": " ".join(repr(float(c)) for c in dec.chosen_pos), "flag": dec.flag}


def trace_columns(dim: int) -> tuple[str, ...]:
    axes = "xyz"[:dim]
    return (("trial", "t", "agent_id", "target_id")
            + tuple(f"agent_{a}" for a in axes) + tuple(f"target_{a}" for a in axes)
            + tuple(f"est_{a}" for a in axes) + ("volume", "reporter"))


def trace_rows(traces) -> Iterable[dict]:
    for tr in traces:
        T, n, K, d = tr.estimates.shape
        axes = "xyz"[:d]
        for t in range(T):
            for i in range(n):
                for k in range(K):
                    row = {"trial": tr.trial, "t": t, "agent_id": i, "target_id": k,
                           "volume": float(tr.volumes[t, i, k]), "reporter": int(tr.reporter[t] == i)}
                    for c, a in enumerate(axes):
                        row[f"agent_{a}"] = float(tr.agent_positions[t, i, c])
                        row[f"target_{a}"] = float(tr.target_positions[t, k, c])
                        row[f"est_{a}"] = float(tr.estimates[t, i, k, c])
                    yield row


def is_missing(value) -> bool:
    return isinstance(value, float) and math.isnan(value)
