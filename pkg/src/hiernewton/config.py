"""Scenario files: TOML documents with ``[chain]``, ``[[tasks]]`` and ``[run]``.

Point-mass studies use a ``[pointmass]`` table instead of ``[chain]`` and
``[[tasks]]``. Unknown keys are rejected at every level.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from . import robot_model as rm
from .control import EIGEN_FLOOR, SWITCH_FACTOR, Formulation, Method, TaskSpec
from .sim import Scenario

__all__ = [
    "ConfigError",
    "PointMassConfig",
    "load_document",
    "apply_override",
    "build",
    "shipped",
    "shipped_path",
    "SHIPPED",
]

# shipped scenario -> figure it reproduces
SHIPPED = {
    "example1": "Fig. 5",
    "example2": "Fig. 8",
    "example3": "Figs. 10-12",
    "pointmass-acc": "Fig. 2",
    "pointmass-vel": "Fig. 3",
}

_CHAIN_KEYS = {"links", "gravity"}
_LINK_KEYS = {"length", "mass", "com_offset", "inertia"}
_TASK_KEYS = {"level", "kind", "relation", "kp", "kv", "target", "augmentable", "controller",
              "joints", "rho", "limit", "bounds"}
_RUN_KEYS = {"dt", "duration", "formulation", "method", "mu", "seed", "q0", "qd0", "eps",
             "nu_factor", "name"}
_POINTMASS_KEYS = {"controller", "mus", "gain_rule", "mass", "kp", "q0", "qd0"}
_RELATIONS = {"EQUAL": 0, "UPPER": 1, "LOWER": 2}


class ConfigError(ValueError):
    pass


@dataclass
class PointMassConfig:
    controller: str
    mus: list
    gain_rule: str
    mass: float
    kp: float
    q0: float
    qd0: float
    dt: float
    duration: float
    name: str = ""


def shipped_path(name) -> Path:
    return Path(str(resources.files("hiernewton") / "scenarios" / f"{name}.toml"))


def shipped(name):
    return build(load_document(shipped_path(name)))


def load_document(path) -> dict:
    """Parse a scenario file; a bare shipped name (``example1``) is accepted too."""
    p = Path(path)
    if not p.exists() and str(path) in SHIPPED:
        p = shipped_path(str(path))
    try:
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(doc: dict, item: str) -> dict:
    """Return a copy of ``doc`` with ``a.b.c=value`` applied; list entries by index."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, text = item.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"malformed override key {key!r}")
    out = copy.deepcopy(doc)
    node = out
    for depth, part in enumerate(parts):
        last = depth == len(parts) - 1
        if isinstance(node, list):
            try:
                idx = int(part)
                node[idx]
            except (ValueError, IndexError):
                raise ConfigError(f"override {key!r}: no list entry {part!r}") from None
            if last:
                node[idx] = _parse_value(text.strip())
            else:
                node = node[idx]
        elif isinstance(node, dict):
            if last:
                node[part] = _parse_value(text.strip())
            else:
                if part not in node:
                    node[part] = {}
                node = node[part]
        else:
            raise ConfigError(f"override {key!r}: {parts[depth - 1]!r} is not a table")
    return out


def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a table")
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _chain(doc):
    table = doc.get("chain")
    if table is None:
        raise ConfigError("missing [chain] table")
    _check_keys(table, _CHAIN_KEYS, "[chain]")
    links = table.get("links")
    if not links:
        raise ConfigError("[chain] needs a non-empty links list")
    for i, link in enumerate(links):
        _check_keys(link, _LINK_KEYS, f"chain.links[{i}]")
        if "length" not in link or "mass" not in link:
            raise ConfigError(f"chain.links[{i}] needs length and mass")
    lengths = [float(k["length"]) for k in links]
    kwargs = {}
    if any("com_offset" in k for k in links):
        kwargs["com_offsets"] = [float(k.get("com_offset", k["length"])) for k in links]
    if any("inertia" in k for k in links):
        kwargs["link_inertias"] = [float(k.get("inertia", 0.0)) for k in links]
    if "gravity" in table:
        kwargs["gravity"] = table["gravity"]
    return rm.PlanarChain(lengths, [float(k["mass"]) for k in links], **kwargs)


def _task(i, table):
    _check_keys(table, _TASK_KEYS, f"tasks[{i}]")
    if "kind" not in table or "level" not in table:
        raise ConfigError(f"tasks[{i}] needs kind and level")
    args = dict(table)
    if "relation" in args:
        rel = str(args["relation"]).upper()
        if rel not in _RELATIONS:
            raise ConfigError(f"tasks[{i}]: unknown relation {args['relation']!r}")
        args["relation"] = _RELATIONS[rel]
    for key in ("joints", "bounds"):
        if key in args:
            args[key] = tuple(args[key])
    return TaskSpec(**args)


def build(doc: dict):
    """Scenario (chain documents) or PointMassConfig (point-mass documents)."""
    try:
        return _build(doc)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def _build(doc):
    allowed = {"run", "pointmass"} if "pointmass" in doc else {"run", "chain", "tasks"}
    _check_keys(doc, allowed, "the document")
    run = doc.get("run", {})
    _check_keys(run, _RUN_KEYS, "[run]")
    dt = float(run.get("dt", 0.005))
    duration = float(run.get("duration", 10.0))
    if "pointmass" in doc:
        pm = doc["pointmass"]
        _check_keys(pm, _POINTMASS_KEYS, "[pointmass]")
        extra = sorted(set(run) - {"dt", "duration", "seed", "name"})
        if extra:
            raise ConfigError(f"unknown key(s) in [run] of a point-mass study: {', '.join(extra)}")
        cfg = PointMassConfig(str(pm.get("controller", "ACC_DAMPED")),
                              [float(m) for m in pm.get("mus", [0.0])],
                              str(pm.get("gain_rule", "kv(kp)")), float(pm.get("mass", 1.0)),
                              float(pm.get("kp", 1.0)), float(pm.get("q0", 1.0)),
                              float(pm.get("qd0", 0.0)), dt, duration, str(run.get("name", "")))
        if cfg.controller not in ("ACC_DAMPED", "VEL_PD"):
            raise ConfigError(f"unknown point-mass controller {cfg.controller!r}")
        if cfg.gain_rule not in ("kv(kp)", "kv(kp,mu)"):
            raise ConfigError(f"unknown gain rule {cfg.gain_rule!r}")
        if not (0 < dt < duration):
            raise ConfigError("dt must lie in (0, duration)")
        return cfg
    chain = _chain(doc)
    tasks_doc = doc.get("tasks")
    if not tasks_doc:
        raise ConfigError("no [[tasks]] given")
    tasks = [_task(i, t) for i, t in enumerate(tasks_doc)]
    if "q0" not in run:
        raise ConfigError("[run] needs q0")
    return Scenario(chain, tasks, q0=np.asarray(run["q0"], dtype=float),
                    qd0=None if "qd0" not in run else np.asarray(run["qd0"], dtype=float),
                    dt=dt, duration=duration,
                    formulation=Formulation(str(run.get("formulation", "VEL")).upper()),
                    method=Method(str(run.get("method", "GN")).upper()),
                    mu=float(run.get("mu", 0.0)), name=str(run.get("name", "")),
                    eps=float(run.get("eps", EIGEN_FLOOR)),
                    nu_factor=float(run.get("nu_factor", SWITCH_FACTOR)))
