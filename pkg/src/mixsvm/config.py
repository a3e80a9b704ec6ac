"""TOML experiment configs: parsing, ``--set`` overrides, validation.

Every key has a documented default (or is required); the resolved dict
returned with the parsed objects contains all of them so it can be echoed
into run metadata.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import tomli

from . import process as proc
from .harness import ConfigError, ExperimentConfig
from .kernel import KernelSpec
from .loss import LossSpec
from .schedule import ScheduleSpec

log = logging.getLogger(__name__)

REQUIRED = object()

SCHEMA: Dict[str, Dict[str, Any]] = {
    "process": {
        "kind": REQUIRED,
        "trans": None,
        "init": "stationary",
        "feature_map": None,
        "rho": None,
        "noise_sd": None,
        "x0": 0.0,
        "x_dist": None,
        "label": REQUIRED,
    },
    "loss": {"kind": REQUIRED, "epsilon": 0.0, "delta": 1.0, "y_range": None},
    "kernel": {"kind": "gaussian", "sigma": 1.0, "input_dim": None, "degree": 2, "offset": 0.0},
    "schedule": {"c": 1.0, "gamma": REQUIRED, "alpha": 1.0, "beta": 1.0, "p": None},
    "experiment": {
        "n_grid": REQUIRED,
        "seeds": [0],
        "test_m": 10_000,
        "ref_m_factor": 20,
        "tol": 1e-8,
        "future_window": 1000,
        "selection": "midpoint",
        "ref_seed": 0,
        "jobs": 1,
    },
    "simulate": {"n": 1000, "seed": 0},
    "train": {"n": 1000, "seed": 0, "lam": None},
    "mixing": {"lags": list(range(1, 11)), "start": 1},
    "lln": {"n_grid": None, "test_functions": [{"kind": "label_indicator"}]},
}

LABEL_KEYS = {
    "classification": {"kind": REQUIRED, "eta": REQUIRED},
    "regression": {"kind": REQUIRED, "mean": REQUIRED, "noise": {"kind": "gaussian", "scale": 1.0}, "q": 2.0},
}

ENTRIES = {
    "eta": ("kind", "values", "weight", "bias", "threshold", "low", "high", "value"),
    "mean": ("kind", "values", "value", "weight", "bias", "amplitude", "frequency", "centers", "coeffs", "sigma"),
    "noise": ("kind", "scale", "df"),
    "x_dist": ("kind", "weights", "means", "sds", "lo", "hi"),
}

VARIANT_KEYS = {
    "markov": {"trans"},
    "iid": {"x_dist"},
    "ar1": {"rho", "noise_sd"},
    "noisy_doubling": {"noise_sd"},
}


@dataclass
class Resolved:
    """Parsed config: the resolved dict plus the objects built from it."""

    data: Dict[str, Dict[str, Any]]
    process: proc.ProcessSpec
    loss: Optional[LossSpec]
    kernel: Optional[KernelSpec]
    schedule: Optional[ScheduleSpec]

    def experiment(self, **changes) -> ExperimentConfig:
        e = self.data.get("experiment")
        if e is None:
            raise ConfigError("[experiment] section is required for this command")
        for name, v in (("loss", self.loss), ("schedule", self.schedule)):
            if v is None:
                raise ConfigError(f"[{name}] section is required for this command")
        s = self.data["schedule"]
        kw = dict(
            process=self.process,
            loss=self.loss,
            kernel=self.kernel,
            schedule=self.schedule,
            n_grid=e["n_grid"],
            seeds=e["seeds"],
            test_m=e["test_m"],
            ref_m_factor=e["ref_m_factor"],
            tol=e["tol"],
            alpha=s["alpha"],
            beta=s["beta"],
            selection=e["selection"],
            ref_seed=e["ref_seed"],
            future_window=e["future_window"],
            jobs=e["jobs"],
        )
        kw.update(changes)
        return ExperimentConfig(**kw)


# --------------------------------------------------------------------------
# overrides


def _parse_value(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def _leaf_paths(d, prefix=()):
    for k, v in d.items():
        if isinstance(v, dict):
            yield from _leaf_paths(v, prefix + (k,))
        yield prefix + (k,)


def apply_override(data: dict, item: str) -> None:
    """Apply one ``key=value`` override. Dotted keys address nested tables;
    a bare key must name a unique field across the known sections."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, text = item.split("=", 1)
    key = key.strip()
    value = _parse_value(text.strip())
    if "." in key:
        path = tuple(key.split("."))
    else:
        known = {p for p in _leaf_paths(data)} | {(s, k) for s, keys in SCHEMA.items() for k in keys}
        hits = sorted({p for p in known if p[-1] == key})
        if not hits:
            raise ConfigError(f"override key {key!r} matches no config field")
        if len(hits) > 1:
            raise ConfigError(f"override key {key!r} is ambiguous: " + ", ".join(".".join(h) for h in hits))
        path = hits[0]
    node = data
    for part in path[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r}: {part!r} is not a table")
    node[path[-1]] = value


# --------------------------------------------------------------------------
# validation


def _fill(section: str, given: dict, schema: dict) -> dict:
    unknown = sorted(set(given) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    out = {}
    for k, default in schema.items():
        if k in given:
            out[k] = given[k]
        elif default is REQUIRED:
            raise ConfigError(f"[{section}] is missing required key {k!r}")
        else:
            out[k] = copy.deepcopy(default)
    return out


def _entry(section: str, name: str, d) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{section}.{name} must be a table")
    unknown = sorted(set(d) - set(ENTRIES[name]))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}.{name}: {', '.join(unknown)}")
    if "kind" not in d:
        raise ConfigError(f"{section}.{name} is missing 'kind'")
    out = {}
    for k, v in d.items():
        if isinstance(v, list):
            v = tuple(tuple(x) if isinstance(x, list) else x for x in v)
        out[k] = v
    return out


def _guard(field: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{field}: {e}") from e


def _label(d: dict):
    if not isinstance(d, dict):
        raise ConfigError("process.label must be a table")
    kind = d.get("kind")
    if kind not in LABEL_KEYS:
        raise ConfigError(f"process.label.kind must be one of {sorted(LABEL_KEYS)}, got {kind!r}")
    d = _fill("process.label", d, LABEL_KEYS[kind])
    if kind == "classification":
        eta = _guard("process.label.eta", proc.EtaModel, **_entry("process.label", "eta", d["eta"]))
        return d, proc.Classification(eta)
    mean = _guard("process.label.mean", proc.MeanModel, **_entry("process.label", "mean", d["mean"]))
    noise = _guard("process.label.noise", proc.Noise, **_entry("process.label", "noise", d["noise"]))
    return d, _guard("process.label", proc.Regression, mean, noise, float(d["q"]))


def _process(d: dict):
    kind = d["kind"]
    if kind not in VARIANT_KEYS:
        raise ConfigError(f"process.kind must be one of {sorted(VARIANT_KEYS)}, got {kind!r}")
    for k in VARIANT_KEYS[kind]:
        if d[k] is None:
            raise ConfigError(f"process.{k} is required for kind={kind!r}")
    stray = [k for k in ("trans", "rho", "x_dist") if d[k] is not None and k not in VARIANT_KEYS[kind]]
    if stray:
        raise ConfigError(f"process.{stray[0]} does not apply to kind={kind!r}")
    label_d, label = _label(d["label"])
    d["label"] = label_d
    if kind == "markov":
        P = _guard("process.trans", np.asarray, d["trans"], dtype=float)
        m = P.shape[0] if P.ndim == 2 else 0
        init = d["init"]
        if init == "stationary":
            init = _guard("process.trans", proc.stationary_distribution, P) if P.ndim == 2 and P.shape == (m, m) else None
        fm = d["feature_map"] if d["feature_map"] is not None else [[float(i)] for i in range(m)]
        if init is None:
            raise ConfigError("process.trans must be a square matrix")
        spec = _guard("process", proc.MarkovChainSpec, P, np.asarray(init, dtype=float), np.asarray(fm, dtype=float), label)
        if proc.doeblin_power(spec.trans) is None:
            # periodic or reducible chains are legitimate test cases, so only warn
            log.warning("no power of process.trans has a strictly positive column; the Doeblin condition does not hold")
        d["init"] = spec.init.tolist()
        d["feature_map"] = spec.feature_map.tolist()
        return spec
    if kind == "ar1":
        x0 = None if d["x0"] == "stationary" else float(d["x0"])
        return _guard("process", proc.Ar1Spec, float(d["rho"]), float(d["noise_sd"]), label, x0)
    if kind == "noisy_doubling":
        return _guard("process", proc.NoisyDoublingSpec, float(d["noise_sd"]), label)
    xd = _entry("process", "x_dist", d["x_dist"])
    xk = xd.pop("kind")
    if xk == "gaussian_mixture":
        x_dist = _guard("process.x_dist", proc.GaussianMixture, **xd)
    elif xk == "uniform_box":
        x_dist = _guard("process.x_dist", proc.UniformBox, **xd)
    else:
        raise ConfigError(f"process.x_dist.kind must be gaussian_mixture or uniform_box, got {xk!r}")
    return proc.IidSpec(x_dist, label)


def resolve(raw: dict) -> Resolved:
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    if "process" not in raw:
        raise ConfigError("[process] section is required")
    data: Dict[str, Dict[str, Any]] = {}
    for section, schema in SCHEMA.items():
        if section in raw or section in ("process", "kernel", "simulate", "train", "mixing", "lln"):
            given = raw.get(section, {})
            if not isinstance(given, dict):
                raise ConfigError(f"[{section}] must be a table")
            data[section] = _fill(section, given, schema)
    spec = _process(data["process"])

    loss = None
    if "loss" in data:
        ld = data["loss"]
        yr = tuple(ld["y_range"]) if ld["y_range"] is not None else None
        loss = _guard("loss", LossSpec, ld["kind"], float(ld["epsilon"]), float(ld["delta"]), yr)

    kd = data["kernel"]
    if kd["input_dim"] is None:
        kd["input_dim"] = int(spec.input_dim)
    kernel = _guard("kernel", KernelSpec, kd["kind"], int(kd["input_dim"]), float(kd["sigma"]), int(kd["degree"]), float(kd["offset"]))

    schedule = None
    if "schedule" in data:
        sd = data["schedule"]
        schedule = _guard("schedule", ScheduleSpec, sd["c"], sd["gamma"])
        for k in ("alpha", "beta"):
            if not 0 < float(sd[k]) <= 1:
                raise ConfigError(f"schedule.{k} must lie in (0, 1]")
    if "experiment" in data:
        e = data["experiment"]
        if e["selection"] not in ("midpoint", "dual"):
            raise ConfigError("experiment.selection must be 'midpoint' or 'dual'")
        if int(e["jobs"]) < 1:
            raise ConfigError("experiment.jobs must be positive")
    return Resolved(data, spec, loss, kernel, schedule)


def parse_config(path, overrides: Sequence[str] = ()) -> Resolved:
    """Read a TOML config, apply ``key=value`` overrides and validate."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {p}: {e.strerror}") from e
    return parse_config_text(text, overrides, source=str(p))


def parse_config_text(text: str, overrides: Sequence[str] = (), source: str = "<string>") -> Resolved:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        line = getattr(e, "lineno", None)
        if line is None:
            raise ConfigError(f"{source}: {e}") from e
        raise ConfigError(f"{source}: line {line}, column {e.colno}: {e.msg}") from e
    for item in overrides:
        apply_override(raw, item)
    return resolve(raw)


def lln_functions(resolved: Resolved) -> List:
    out = []
    for t in resolved.data["lln"]["test_functions"]:
        kind = t.get("kind")
        if kind == "state_indicator":
            out.append(proc.state_indicator(int(t["state"])))
        elif kind == "constant":
            out.append(proc.constant_function(float(t["value"])))
        elif kind == "x_threshold":
            out.append(proc.x_threshold(float(t["t"])))
        elif kind == "label_indicator":
            out.append(proc.label_indicator())
        else:
            raise ConfigError(f"unknown lln test function kind {kind!r}")
    return out
