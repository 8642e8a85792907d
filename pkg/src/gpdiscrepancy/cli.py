"""
Command-line pipeline: ``gpdiscrepancy <command> --config run.yaml``.

Each command runs one stage, writes its artifacts below the output directory
and records them, with SHA-256 hashes, in ``manifest.json``. Exit status is
0 on success, 1 for configuration or missing-input problems and 2 for
numerical failures (details go to ``diagnostics.json``).
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, check, load_config, split_indices, stage_seed
from .diagnostics import ResidualSeries, peak_pick, periodogram, sample_acf
from .dynamics import TimeSeriesDataset, synthesize_dataset
from .errors import ConfigError, NumericalError
from .inference import ModelClass, Problem, TruncationPolicy, find_mpv, laplace_covariance
from .io import (
    file_sha256,
    load_dataset,
    load_laplace,
    load_samples,
    read_json,
    save_acf,
    save_dataset,
    save_laplace,
    save_predictive,
    save_psd,
    save_samples,
    save_scores,
    write_json,
    write_table,
)
from .prediction import log_posterior_predictive_score, map_predict, mixture_predict, reconstruct_missing
from .sampler import tmcmc_sample
from .selection import (
    ModelClassScore,
    bic_score,
    initial_point,
    score_table,
    select_mmte_order,
)

log = logging.getLogger("gpdiscrepancy")

COMMANDS = ("synthesize", "infer-mpv", "infer-tmcmc", "predict", "reconstruct", "select", "diagnose", "report")


class MissingArtifact(Exception):
    pass


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


class Run:
    """State shared by the stage functions of one invocation."""

    def __init__(self, cfg: ExperimentConfig, out: Path, seed: int, threads: int):
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.threads = threads
        self.artifacts: list = []

    def path(self, *parts) -> Path:
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def record(self, *paths):
        for p in paths:
            self.artifacts.append(Path(p))

    def require(self, *parts) -> Path:
        p = self.out.joinpath(*parts)
        if not p.exists():
            raise MissingArtifact(f"missing artifact {p.relative_to(self.out)}; run the producing stage first")
        return p

    # data ----------------------------------------------------------------
    def dataset(self) -> TimeSeriesDataset:
        data = self.cfg.data
        if "path" in data:
            p = Path(data["path"])
            if not p.is_absolute() and self.cfg.source:
                p = Path(self.cfg.source).parent / p
            if not p.exists():
                raise MissingArtifact(f"missing artifact {p}")
            return load_dataset(p)
        return load_dataset(self.require("data", "dataset.csv"))

    def split(self, ds: TimeSeriesDataset, key: str, default=None):
        interval = self.cfg.prediction.get(key, default)
        if interval is None:
            return 0, ds.n
        return split_indices(ds.n, ds.dt, interval, ds.t0)

    def training(self, ds):
        a, b = self.split(ds, "train")
        return ds.segment(a, b)

    def problem(self, family, order, ds=None) -> Problem:
        cfg = self.cfg
        ds = self.training(self.dataset()) if ds is None else ds
        mc = ModelClass(cfg.structure(), family, cfg.prior(family, order), order)
        tr = cfg.inference.get("truncation", {}) or {}
        policy = TruncationPolicy(float(tr.get("relative_threshold", 0.005)), True) if tr.get("enabled") else None
        return Problem(mc, ds, truncation=policy)

    def initial_point(self, problem: Problem) -> np.ndarray:
        mc = problem.model_class
        theta = self.cfg.theta_init()
        explicit = (self.cfg.kernel_block.get("init", {}) or {}).get(mc.model_id)
        if explicit is not None:
            return np.concatenate([theta, np.asarray(explicit, dtype=float)])
        ell = float(self.cfg.kernel_block.get("inv_ell2_init", 3e-3))
        return initial_point(problem, theta, ell)

    def mpv_options(self) -> dict:
        inf = self.cfg.inference
        return {"tol": float(inf.get("tol", 1e-6)), "max_iter": int(inf.get("max_iter", 100)),
                "budget": int(inf.get("budget", 500)), "restarts": int(inf.get("restarts", 2)),
                "seed": stage_seed(self.seed, "infer-mpv")}


def _tag(family, order):
    return f"{family}{order}" if family == "MMTE" else family


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------


def cmd_synthesize(run: Run):
    syn = run.cfg.data.get("synthesis")
    if syn is None:
        raise ConfigError("synthesize needs a data.synthesis block")
    ds = synthesize_dataset(run.cfg.truth_model(), float(syn.get("input_std", 1.0)), run.seed,
                            float(syn["dt"]), float(syn["duration"]), float(syn.get("noise_std", 0) or 0))
    clean = synthesize_dataset(run.cfg.truth_model(), float(syn.get("input_std", 1.0)),
                               run.seed, float(syn["dt"]), float(syn["duration"]))
    run.record(*save_dataset(ds, run.path("data", "dataset.csv"), {"seed": run.seed}))
    run.record(*save_dataset(clean, run.path("data", "noise_free.csv"), {"seed": run.seed, "noise_free": True}))


def cmd_infer_mpv(run: Run):
    for fam, order in run.cfg.candidates():
        pb = run.problem(fam, order)
        s = find_mpv(pb, run.initial_point(pb), **run.mpv_options())
        s = laplace_covariance(pb, s)
        run.record(save_laplace(s, run.path("results", f"mpv_{_tag(fam, order)}.json")))
        log.info("%s: MPV %s", _tag(fam, order), np.array2string(s.mpv.vector, precision=5))


def cmd_infer_tmcmc(run: Run):
    for fam, order in run.cfg.candidates():
        pb = run.problem(fam, order)
        tcfg = run.cfg.tmcmc(stage_seed(run.seed, f"infer-tmcmc/{_tag(fam, order)}"))
        ps = tmcmc_sample(pb, tcfg, workers=run.threads)
        run.record(*save_samples(ps, run.path("results", f"samples_{_tag(fam, order)}.csv"),
                                 {"model_id": _tag(fam, order), "kernel_family": fam, "mmte_order": order}))
        log.info("%s: log evidence %.6g over %d stages", _tag(fam, order), ps.log_evidence, ps.n_stages)


def _heldout(run: Run, ds):
    if "heldout" not in run.cfg.prediction:
        raise ConfigError("prediction.heldout is required for this stage")
    a, b = run.split(ds, "heldout")
    return ds.input[a:b], ds.output[a:b]


def cmd_predict(run: Run):
    ds = run.dataset()
    u_pred, _ = _heldout(run, ds)
    k = float(run.cfg.prediction.get("band_k", 2.0))
    max_comp = run.cfg.prediction.get("max_components")
    produced = False
    for fam, order in run.cfg.candidates():
        tag = _tag(fam, order)
        pb = run.problem(fam, order, run.training(ds))
        mpv = run.out / "results" / f"mpv_{tag}.json"
        if mpv.exists():
            pd = map_predict(load_laplace(mpv), pb, u_pred)
            run.record(save_predictive(pd, run.path("predictions", f"map_{tag}.csv"), k))
            produced = True
        smp = run.out / "results" / f"samples_{tag}.csv"
        if smp.exists():
            pd = mixture_predict(load_samples(smp), pb, u_pred, max_components=max_comp)
            run.record(save_predictive(pd, run.path("predictions", f"mixture_{tag}.csv"), k))
            produced = True
    if not produced:
        raise MissingArtifact("missing artifact: no results/mpv_* or results/samples_* files")


def cmd_reconstruct(run: Run):
    ds = run.dataset()
    gap = run.cfg.prediction.get("gap")
    if gap is None:
        raise ConfigError("prediction.gap is required for reconstruct")
    k = float(run.cfg.prediction.get("band_k", 2.0))
    produced = False
    for fam, order in run.cfg.candidates():
        tag = _tag(fam, order)
        mpv = run.out / "results" / f"mpv_{tag}.json"
        if not mpv.exists():
            continue
        s = load_laplace(mpv)
        model = run.cfg.structure().build(s.mpv.theta)
        pd = reconstruct_missing(ds, tuple(gap), model, s.kernel())
        run.record(save_predictive(pd, run.path("predictions", f"gap_{tag}.csv"), k))
        produced = True
    if not produced:
        raise MissingArtifact("missing artifact: no results/mpv_* files")


def cmd_select(run: Run):
    ds = run.dataset()
    scores = []
    max_comp = run.cfg.prediction.get("max_components")
    for fam, order in run.cfg.candidates():
        tag = _tag(fam, order)
        smp = run.out / "results" / f"samples_{tag}.csv"
        mpv = run.out / "results" / f"mpv_{tag}.json"
        bic = None
        if mpv.exists():
            s = load_laplace(mpv)
            bic = bic_score(s.log_likelihood_at_mpv, s.mpv.vector.size, s.n_data)
        if smp.exists():
            ps = load_samples(smp)
            lpp = None
            if "heldout" in run.cfg.prediction:
                u_pred, y_pred = _heldout(run, ds)
                pb = run.problem(fam, order, run.training(ds))
                lpp = log_posterior_predictive_score(ps, pb, u_pred, y_pred, max_components=max_comp)
            scores.append(ModelClassScore(tag, ps.log_evidence, lpp, None, bic, "TMCMC"))
        elif mpv.exists() and s.log_evidence is not None:
            scores.append(ModelClassScore(tag, s.log_evidence, None, None, bic, "Laplace"))
    if scores:
        cols, rows = score_table(scores)
        run.record(save_scores(cols, rows, run.path("selection", "scores.csv")))
    orders = run.cfg.selection.get("orders")
    if orders:
        res = select_mmte_order(run.training(ds), run.cfg.structure(), run.cfg.theta_prior(), run.cfg.kernel_bounds(),
                                orders, run.cfg.theta_init(),
                                inv_ell2_init=float(run.cfg.kernel_block.get("inv_ell2_init", 3e-3)),
                                **run.mpv_options())
        rows = [[m, res.summaries[m].log_likelihood_at_mpv, res.bic[m], int(m == res.chosen)] for m in sorted(res.bic)]
        run.record(write_table(run.path("selection", "order_bic.csv"), ["order", "log_likelihood", "bic", "chosen"], rows))
    if not scores and not orders:
        raise MissingArtifact("missing artifact: no inference results to score and no orders to select")


def cmd_diagnose(run: Run):
    ds = run.training(run.dataset())
    diag = run.cfg.diagnostics
    theta = np.asarray(diag.get("theta", run.cfg.theta_init()), dtype=float)
    r = ds.output - run.cfg.structure().response(theta, ds.input, ds.dt)
    max_lag = int(diag.get("max_lag", min(ds.n - 1, 1000)))
    peaks = {}
    for j, label in enumerate(ds.channel_labels):
        series = ResidualSeries(r[:, j], ds.dt, f"dof{label}")
        run.record(save_acf(sample_acf(series, max_lag), ds.dt, run.path("diagnostics", f"acf_dof{label}.csv")))
        spec = periodogram(series)
        run.record(save_psd(spec, run.path("diagnostics", f"psd_dof{label}.csv")))
        peaks[f"dof{label}"] = peak_pick(spec, int(diag.get("max_peaks", 6))).tolist()
    run.record(write_json({"theta": theta, "peaks_hz": peaks}, run.path("diagnostics", "peaks.json")))


def cmd_report(run: Run):
    results = sorted((run.out / "results").glob("mpv_*.json")) if (run.out / "results").exists() else []
    samples = sorted((run.out / "results").glob("samples_*.json")) if (run.out / "results").exists() else []
    if not results and not samples:
        raise MissingArtifact("missing artifact: nothing to report (run infer-mpv or infer-tmcmc first)")
    report = {"mpv": {}, "tmcmc": {}}
    for p in results:
        d = read_json(p)
        report["mpv"][d["model_id"]] = {
            "names": d["names"], "mpv": d["mpv"], "std": d["std"], "converged": d["converged"],
            "log_evidence_laplace": d["log_evidence"], "log_likelihood_at_mpv": d["log_likelihood_at_mpv"]}
    for p in samples:
        d = read_json(p)
        ps = load_samples(p.with_suffix(".csv"))
        mean = ps.samples.mean(axis=0)
        report["tmcmc"][d.get("model_id", p.stem)] = {
            "names": d["names"], "mean": mean, "std": ps.samples.std(axis=0),
            "log_evidence": d["log_evidence"], "stages": d["stages"]}
    scores = run.out / "selection" / "scores.csv"
    if scores.exists():
        report["scores_file"] = str(scores.relative_to(run.out))
    run.record(write_json(report, run.path("report.json")))


STAGES = {
    "synthesize": cmd_synthesize,
    "infer-mpv": cmd_infer_mpv,
    "infer-tmcmc": cmd_infer_tmcmc,
    "predict": cmd_predict,
    "reconstruct": cmd_reconstruct,
    "select": cmd_select,
    "diagnose": cmd_diagnose,
    "report": cmd_report,
}


# --------------------------------------------------------------------------
# manifest, lock, entry point
# --------------------------------------------------------------------------


@contextlib.contextmanager
def output_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = out / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"output directory {out} is locked by another run ({lock})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _update_manifest(run: Run, command: str, wall: float):
    path = run.out / "manifest.json"
    manifest = read_json(path) if path.exists() else {"stages": {}, "artifacts": {}}
    import scipy

    manifest["config_sha256"] = run.cfg.digest()
    manifest["seed"] = run.seed
    manifest["versions"] = {"gpdiscrepancy": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                            "python": platform.python_version()}
    files = {str(p.relative_to(run.out)): file_sha256(p) for p in run.artifacts}
    manifest["stages"][command] = {"wall_time_s": round(wall, 3), "artifacts": sorted(files)}
    manifest["artifacts"].update(files)
    write_json(manifest, path)


def run(cfg: ExperimentConfig, command: str, out: Path | None = None, seed: int | None = None,
        threads: int = 1) -> int:
    """Execute one stage; returns the exit status."""
    try:
        check(cfg)
    except ConfigError as e:
        log.error("%s", e)
        return 1
    out = Path(out or cfg.output)
    r = Run(cfg, out, cfg.seed if seed is None else int(seed), max(int(threads), 1))
    try:
        with output_lock(out):
            t0 = time.perf_counter()
            try:
                STAGES[command](r)
            except (NumericalError, np.linalg.LinAlgError) as e:
                diag = getattr(e, "diagnostics", {})
                write_json({"command": command, "error": str(e), "diagnostics": diag}, out / "diagnostics.json")
                log.error("numerical failure: %s", e)
                return 2
            _update_manifest(r, command, time.perf_counter() - t0)
    except (ConfigError, MissingArtifact, KeyError, ValueError) as e:
        log.error("%s", e)
        return 1
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="gpdiscrepancy", description=__doc__.strip().splitlines()[0])
    ap.add_argument("command", choices=COMMANDS + ("validate",))
    ap.add_argument("--config", required=True, help="experiment YAML file")
    ap.add_argument("--out", help="output directory (overrides config)")
    ap.add_argument("--seed", type=int, help="64-bit seed (overrides config)")
    ap.add_argument("--threads", type=int, default=1, help="likelihood evaluations in parallel")
    ap.add_argument("--quiet", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        log.error("%s: %s", args.config, e)
        return 1
    if args.seed is not None:
        cfg.raw["seed"] = args.seed
    if args.command == "validate":
        from .config import validate

        findings = validate(cfg)
        for f in findings:
            print(f"{args.config}: {f}")
        return 1 if any(f.level == "error" for f in findings) else 0
    return run(cfg, args.command, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
