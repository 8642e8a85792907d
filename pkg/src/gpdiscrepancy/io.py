"""
Reading and writing artifacts: delimited tables with headers, JSON summaries
and sidecars, and content hashes for run manifests.

Floats are written with 17 significant digits so a table round-trips
bit-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .dynamics import TimeSeriesDataset
from .inference import LaplaceSummary, ParameterSplit
from .kernels import KernelConfig
from .prediction import PredictiveDistribution
from .sampler import PosteriorSamples

__all__ = [
    "write_json",
    "read_json",
    "write_table",
    "read_table",
    "save_dataset",
    "load_dataset",
    "laplace_to_dict",
    "laplace_from_dict",
    "save_laplace",
    "load_laplace",
    "save_samples",
    "load_samples",
    "save_predictive",
    "save_scores",
    "save_acf",
    "save_psd",
    "file_sha256",
]

FLOAT_FMT = "%.17g"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def write_table(path, columns, rows) -> Path:
    """Comma-delimited table with a header row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_table(path):
    """(columns, float array) for an all-numeric table."""
    with Path(path).open(newline="") as fh:
        header = next(csv.reader(fh))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# --------------------------------------------------------------------------
# datasets
# --------------------------------------------------------------------------


def save_dataset(ds: TimeSeriesDataset, path, metadata: dict | None = None) -> tuple:
    """Table with columns t, u_*, y_* plus a JSON sidecar with dt, t0 and labels."""
    path = Path(path)
    u_cols = [f"u{j}" for j in range(ds.input.shape[1])]
    y_cols = [f"y{c}" for c in ds.channel_labels]
    rows = np.hstack([ds.times[:, None], ds.input, ds.output])
    write_table(path, ["t"] + u_cols + y_cols, rows)
    side = path.with_suffix(".json")
    write_json({"dt": ds.dt, "t0": ds.t0, "n": ds.n, "n_inputs": ds.input.shape[1],
                "channel_labels": list(ds.channel_labels), **(metadata or {})}, side)
    return path, side


def load_dataset(path) -> TimeSeriesDataset:
    path = Path(path)
    meta = read_json(path.with_suffix(".json"))
    _, data = read_table(path)
    nx = int(meta["n_inputs"])
    return TimeSeriesDataset(float(meta["dt"]), data[:, 1: 1 + nx], data[:, 1 + nx:],
                             tuple(meta["channel_labels"]), float(meta["t0"]))


# --------------------------------------------------------------------------
# inference results
# --------------------------------------------------------------------------


def laplace_to_dict(s: LaplaceSummary) -> dict:
    cov = s.covariance
    return {
        "model_id": s.model_id,
        "kernel_family": s.kernel_family,
        "mmte_order": s.mmte_order,
        "names": s.names,
        "theta_names": s.mpv.theta_names,
        "units": s.mpv.units,
        "transforms": s.mpv.transforms,
        "mpv": s.mpv.vector,
        "std": s.std,
        "covariance": cov,
        "converged": s.converged,
        "iterations": s.iterations,
        "neg_log_posterior_at_mpv": s.neg_log_posterior_at_mpv,
        "log_likelihood_at_mpv": s.log_likelihood_at_mpv,
        "identifiable": s.identifiable,
        "log_evidence": s.log_evidence,
        "n_data": s.n_data,
        "trace": s.trace,
        "kernel": s.kernel().to_dict(),
    }


def _float(v):
    return float(v)  # non-finite values are stored as "inf"/"nan" strings


def laplace_from_dict(d: dict) -> LaplaceSummary:
    x = np.asarray(d["mpv"], dtype=float)
    nt = len(d["theta_names"])
    names = d["names"]
    split = ParameterSplit(x[:nt], x[nt:], names[:nt], names[nt:], d.get("units", []), d.get("transforms", []))
    cov = None if d.get("covariance") is None else np.asarray(d["covariance"], dtype=float)
    return LaplaceSummary(
        mpv=split, covariance=cov, converged=bool(d["converged"]), iterations=int(d["iterations"]),
        neg_log_posterior_at_mpv=_float(d["neg_log_posterior_at_mpv"]),
        log_likelihood_at_mpv=_float(d["log_likelihood_at_mpv"]),
        identifiable=bool(d.get("identifiable", True)),
        log_evidence=None if d.get("log_evidence") is None else _float(d["log_evidence"]),
        trace=[_float(v) for v in d.get("trace", [])], model_id=d.get("model_id", ""),
        kernel_family=d["kernel_family"], mmte_order=d.get("mmte_order"), n_data=int(d.get("n_data", 0)),
    )


def save_laplace(s: LaplaceSummary, path) -> Path:
    return write_json(laplace_to_dict(s), path)


def load_laplace(path) -> LaplaceSummary:
    return laplace_from_dict(read_json(path))


def save_samples(ps: PosteriorSamples, path, extra: dict | None = None) -> tuple:
    """One row per sample (parameters + log_likelihood) and a JSON summary."""
    path = Path(path)
    names = ps.names or [f"x{j}" for j in range(ps.samples.shape[1])]
    write_table(path, list(names) + ["log_likelihood"], np.column_stack([ps.samples, ps.log_likelihoods]))
    side = path.with_suffix(".json")
    write_json({"names": list(names), "n_samples": ps.n_samples, "log_evidence": ps.log_evidence,
                "stages": ps.n_stages, "stage_betas": ps.stage_betas, "acceptance_rates": ps.acceptance_rates,
                **(extra or {})}, side)
    return path, side


def load_samples(path) -> PosteriorSamples:
    path = Path(path)
    meta = read_json(path.with_suffix(".json"))
    _, data = read_table(path)
    return PosteriorSamples(data[:, :-1], data[:, -1], _float(meta["log_evidence"]),
                            np.asarray(meta["stage_betas"], dtype=float),
                            np.asarray(meta["acceptance_rates"], dtype=float), list(meta["names"]))


def save_predictive(pd: PredictiveDistribution, path, k: float | None = 2.0) -> Path:
    cols, rows = pd.table(k)
    return write_table(path, cols, rows)


def save_scores(columns, rows, path) -> Path:
    return write_table(path, columns, rows)


def save_acf(acf, dt: float, path) -> Path:
    acf = np.asarray(acf, dtype=float)
    return write_table(path, ["lag_s", "acf"], np.column_stack([dt * np.arange(acf.size), acf]))


def save_psd(spectrum, path) -> Path:
    return write_table(path, ["frequency_hz", "power"], np.column_stack([spectrum.frequencies, spectrum.power]))


def kernel_from_summary(path) -> KernelConfig:
    return KernelConfig.from_dict(read_json(path)["kernel"])
