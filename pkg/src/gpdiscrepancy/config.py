"""
Experiment configuration: a YAML document with a ``schema_version`` field.

Parsing keeps the source line of every key so validation findings point at
the offending line. See ``configs/`` for complete examples.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dynamics import (
    BASE,
    ModalRatios,
    Rayleigh,
    ShearBuildingModel,
    ShearFamily,
    StructuralParameter,
    ViscousRatio,
)
from .errors import ConfigError, InvalidModelError
from .inference import PriorSpec, kernel_priors, prior_from_dict
from .kernels import FAMILIES
from .sampler import TmcmcConfig

__all__ = ["Finding", "ExperimentConfig", "load_config", "parse_config", "validate", "stage_seed"]

SCHEMA_VERSION = 1
TOP_KEYS = {"schema_version", "seed", "output", "model", "kernel", "data", "inference", "prediction",
            "selection", "diagnostics"}


@dataclass(frozen=True)
class Finding:
    level: str  # "error" or "warning"
    message: str
    line: int | None = None

    def __str__(self):
        where = f"line {self.line}: " if self.line else ""
        return f"{self.level}: {where}{self.message}"


# --------------------------------------------------------------------------
# YAML with line numbers
# --------------------------------------------------------------------------


def _line_map(node, path=(), out=None):
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = k.value
            out[path + (key,)] = k.start_mark.line + 1
            _line_map(v, path + (key,), out)
            out[path + (key,)] = k.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, path + (i,), out)
    return out


def _load_text(text: str):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        raise ConfigError(f"cannot parse configuration: {getattr(err, 'problem', err)}",
                          None if mark is None else mark.line + 1) from None
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping", 1)
    return data, _line_map(node)


# --------------------------------------------------------------------------
# typed view
# --------------------------------------------------------------------------


def _damping(d):
    kind = str(d.get("type", "")).lower()
    if kind == "rayleigh":
        return Rayleigh(float(d["alpha"]), float(d["beta"]))
    if kind == "viscous":
        return ViscousRatio(float(d["zeta"]))
    if kind == "modal":
        return ModalRatios(tuple(float(z) for z in d["zeta"]))
    raise ValueError(f"unknown damping type {d.get('type')!r}")


def _structure(d) -> ShearBuildingModel:
    inp = d.get("input_dof", 0)
    return ShearBuildingModel(
        np.asarray(d["masses"], dtype=float), np.asarray(d["stiffnesses"], dtype=float), _damping(d["damping"]),
        tuple(d.get("observed_dofs", [0])), BASE if inp == BASE else int(inp))


@dataclass
class ExperimentConfig:
    raw: dict
    lines: dict = field(default_factory=dict)
    source: str = ""

    # convenience accessors -------------------------------------------------
    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def output(self) -> str:
        return str(self.raw.get("output", "out"))

    def model_template(self) -> ShearBuildingModel:
        return _structure(self.raw["model"])

    def unknowns(self) -> list:
        return list(self.raw["model"].get("unknowns", []))

    def structure(self) -> ShearFamily:
        params = tuple(StructuralParameter(u["name"], u["kind"], int(u["index"])) for u in self.unknowns())
        return ShearFamily(self.model_template(), params)

    def theta_prior(self) -> PriorSpec:
        return PriorSpec([u["name"] for u in self.unknowns()], [prior_from_dict(u["prior"]) for u in self.unknowns()])

    def theta_init(self) -> np.ndarray:
        return np.array([float(u["init"]) for u in self.unknowns()])

    @property
    def kernel_block(self) -> dict:
        return self.raw.get("kernel", {})

    def kernel_bounds(self) -> dict:
        return {k: tuple(float(x) for x in v) for k, v in self.kernel_block.get("bounds", {}).items()}

    def candidates(self) -> list:
        """(family, order) pairs to infer: the selection list, else the kernel block."""
        sel = self.raw.get("selection", {}) or {}
        if sel.get("kernels"):
            out = []
            for k in sel["kernels"]:
                fam, _, order = str(k).upper().partition(":")
                out.append((fam, int(order) if order else (1 if fam == "MMTE" else None)))
            return out
        fam = str(self.kernel_block.get("family", "GWN")).upper()
        order = self.kernel_block.get("order")
        return [(fam, int(order) if order else (1 if fam == "MMTE" else None))]

    def prior(self, family: str, order: int | None) -> PriorSpec:
        return self.theta_prior() + kernel_priors(family, order, self.kernel_bounds())

    @property
    def inference(self) -> dict:
        return self.raw.get("inference", {}) or {}

    def tmcmc(self, seed: int) -> TmcmcConfig:
        t = dict(self.inference.get("tmcmc", {}) or {})
        return TmcmcConfig(int(t.get("n_samples", 1000)), float(t.get("target_weight_cov", 1.0)),
                           float(t.get("proposal_scale", 0.2)), int(t.get("max_stages", 60)), seed)

    @property
    def prediction(self) -> dict:
        return self.raw.get("prediction", {}) or {}

    @property
    def selection(self) -> dict:
        return self.raw.get("selection", {}) or {}

    @property
    def diagnostics(self) -> dict:
        return self.raw.get("diagnostics", {}) or {}

    @property
    def data(self) -> dict:
        return self.raw.get("data", {}) or {}

    def truth_model(self) -> ShearBuildingModel:
        return _structure(self.data["synthesis"]["truth"])

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True, default=str).encode()).hexdigest()

    def line(self, *path) -> int | None:
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return self.lines.get(())


def parse_config(text: str, source: str = "") -> ExperimentConfig:
    data, lines = _load_text(text)
    return ExperimentConfig(data, lines, source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None
    return parse_config(text, str(path))


def stage_seed(seed: int, stage: str) -> int:
    """Independent 64-bit seed for a named pipeline stage."""
    key = int.from_bytes(hashlib.sha256(stage.encode()).digest()[:4], "little")
    return int(np.random.SeedSequence(int(seed), spawn_key=(key,)).generate_state(1, np.uint64)[0])


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------


def _interval(v):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ValueError("expected [start, stop]")
    a, b = float(v[0]), float(v[1])
    if not a < b:
        raise ValueError(f"interval [{a}, {b}] must have start < stop")
    return a, b


def validate(cfg: ExperimentConfig) -> list:
    """Structural, prior-support and unit checks. Returns a list of Findings."""
    out = []
    raw = cfg.raw

    def err(msg, *path):
        out.append(Finding("error", msg, cfg.line(*path)))

    def warn(msg, *path):
        out.append(Finding("warning", msg, cfg.line(*path)))

    if raw.get("schema_version") != SCHEMA_VERSION:
        err(f"schema_version must be {SCHEMA_VERSION}", "schema_version")
    for key in raw:
        if key not in TOP_KEYS:
            warn(f"unknown top-level key {key!r}", key)
    seed = raw.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        err("seed must be an unsigned 64-bit integer", "seed")

    # model
    model = raw.get("model")
    template = None
    if not isinstance(model, dict):
        err("missing model block", "model")
    else:
        try:
            template = _structure(model)
        except (KeyError, TypeError, ValueError, InvalidModelError) as e:
            err(f"invalid model: {e}", "model")
        for i, u in enumerate(model.get("unknowns", []) or []):
            name = u.get("name", f"#{i}")
            try:
                p = StructuralParameter(str(u["name"]), str(u["kind"]), int(u["index"]))
                if template is not None:
                    ShearFamily(template, (p,))
            except (KeyError, TypeError, ValueError, InvalidModelError) as e:
                err(f"unknown parameter {name}: {e}", "model", "unknowns", i)
                continue
            try:
                prior = prior_from_dict(u["prior"])
            except (KeyError, TypeError, ValueError) as e:
                err(f"prior of {name}: {e}", "model", "unknowns", i, "prior")
                continue
            if "init" not in u:
                err(f"{name}: init is required", "model", "unknowns", i)
            elif not prior.contains(float(u["init"])):
                err(f"{name}: init {u['init']} outside prior support [{prior.lo}, {prior.hi}]",
                    "model", "unknowns", i, "init")

    # kernel
    kb = raw.get("kernel", {}) or {}
    fams = []
    try:
        fams = cfg.candidates()
    except (TypeError, ValueError) as e:
        err(f"candidate kernels: {e}", "selection")
    for fam, order in fams:
        if fam not in FAMILIES:
            err(f"unknown kernel family {fam!r}", "kernel")
        elif fam == "MMTE" and (order is None or order < 1):
            err("MMTE needs order >= 1", "kernel")
    for name, b in (kb.get("bounds", {}) or {}).items():
        try:
            lo, hi = float(b[0]), float(b[1])
            if not 0 < lo < hi:
                raise ValueError(f"bounds ({lo}, {hi}) need 0 < lo < hi")
        except (TypeError, ValueError, IndexError) as e:
            err(f"kernel bound {name}: {e}", "kernel", "bounds", name)
    if fams and all(f in FAMILIES for f, _ in fams):
        for fam, order in fams:
            try:
                kernel_priors(fam, order, cfg.kernel_bounds())
            except (TypeError, ValueError) as e:
                err(f"{fam}: {e}", "kernel", "bounds")

    # data
    data = raw.get("data", {}) or {}
    has_path, has_syn = "path" in data, "synthesis" in data
    duration = None
    if has_path == has_syn:
        err("data needs exactly one of 'path' or 'synthesis'", "data")
    elif has_syn:
        syn = data["synthesis"]
        try:
            _structure(syn["truth"])
        except (KeyError, TypeError, ValueError, InvalidModelError) as e:
            err(f"invalid truth model: {e}", "data", "synthesis", "truth")
        try:
            dt, duration = float(syn["dt"]), float(syn["duration"])
            if not dt > 0 or not duration > 0:
                raise ValueError("dt and duration must be positive")
            ratio = duration / dt
            if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio) or round(ratio) < 2:
                err(f"duration/dt = {ratio:g} must be an integer >= 2", "data", "synthesis", "duration")
        except (KeyError, TypeError, ValueError) as e:
            err(f"synthesis timing: {e}", "data", "synthesis")
        if float(syn.get("noise_std", 0) or 0) < 0:
            err("noise_std must be >= 0", "data", "synthesis", "noise_std")
    elif not isinstance(data["path"], str):
        err("data path must be a string", "data", "path")

    # inference
    inf = raw.get("inference", {}) or {}
    method = inf.get("method", "mpv")
    if method not in ("mpv", "tmcmc"):
        err(f"inference method {method!r} must be mpv or tmcmc", "inference", "method")
    tr = inf.get("truncation", {}) or {}
    if tr.get("enabled") and not 1e-3 <= float(tr.get("relative_threshold", 0.005)) <= 1e-2:
        err("truncation relative_threshold must lie in [0.001, 0.01]", "inference", "truncation")
    tm = inf.get("tmcmc", {}) or {}
    try:
        TmcmcConfig(int(tm.get("n_samples", 1000)), float(tm.get("target_weight_cov", 1.0)),
                    float(tm.get("proposal_scale", 0.2)), int(tm.get("max_stages", 60)), 0)
    except (TypeError, ValueError) as e:
        err(f"tmcmc: {e}", "inference", "tmcmc")

    # prediction splits
    pred = raw.get("prediction", {}) or {}
    for key in ("train", "heldout", "gap"):
        if key not in pred:
            continue
        try:
            a, b = _interval(pred[key])
        except (TypeError, ValueError) as e:
            err(f"prediction.{key}: {e}", "prediction", key)
            continue
        if duration is not None and (a < 0 or b > duration + 1e-9):
            bad = b if b > duration else a
            err(f"prediction.{key} time {bad:g} s lies outside the record [0, {duration:g}] s", "prediction", key)
    if "train" not in pred and any(k in pred for k in ("heldout",)):
        err("prediction.heldout needs prediction.train", "prediction")

    sel = raw.get("selection", {}) or {}
    for m in sel.get("orders", []) or []:
        if not isinstance(m, int) or m < 1:
            err(f"MMTE order {m!r} must be a positive integer", "selection", "orders")

    return out


def check(cfg: ExperimentConfig) -> None:
    """Raise ConfigError on the first validation error."""
    for f in validate(cfg):
        if f.level == "error":
            raise ConfigError(f.message, f.line)


def split_indices(n: int, dt: float, interval, t0: float = 0.0) -> tuple:
    """Sample range [start, stop) for a time interval, rounded toward its interior."""
    a, b = interval
    start = int(math.ceil((a - t0) / dt - 1e-9))
    stop = int(math.floor((b - t0) / dt + 1e-9))
    return max(start, 0), min(stop, n)
