"""Experiment configuration: YAML loading, schema validation, object assembly.

An experiment file has the sections ``model``, ``graph``, ``gains``,
``controller``, ``trajectory``, ``initial``, ``sim`` and, for concurrent
hierarchies, ``scenario``. Scenario groups inherit any top-level section
they do not override; mappings are merged key by key.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .controllers import ControllerSpec, trajectory_from_spec
from .dynamics import ContractViolation, model_from_dict
from .simulator import ConcurrentScenario, Disturbance, Group, RelayEdge, SimConfig
from .topology import Gains, GraphSchedule, apply_inhibition, build_graph

PRESET_DIR = Path(__file__).parent / "presets"


class ConfigError(ContractViolation):
    """The experiment file does not match the schema or is inconsistent."""


_num = {"type": "number"}
_gain = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1},
                   {"type": "array", "items": {"type": "array", "items": _num}}]}
_pair = {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2}

_MODEL = {
    "type": "object",
    "properties": {
        "file": {"type": "string"},
        "kind": {"enum": ["two-link-arm", "cart-double-pendulum"]},
        "n": {"type": "integer", "minimum": 1},
        "params": {"type": "object", "additionalProperties": _num},
        "gravity_on": {"type": "boolean"},
        "scale": {"type": "number", "exclusiveMinimum": 0},
        "eps_M": {"type": "number", "exclusiveMinimum": 0},
        "version": {"type": "integer"},
    },
    "additionalProperties": False,
    "anyOf": [{"required": ["file"]}, {"required": ["kind"]}],
}

_GRAPH_ONE = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["ring", "inline", "digraph", "custom"]},
        "p": {"type": "integer", "minimum": 2},
        "edges": {"type": "array", "items": _pair},
        "offsets": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "directed": {"type": "boolean"},
        "partial_mask": {"type": "array", "items": {"enum": [0, 1]}},
        "inhibitory_link": _pair,
        "t": {"type": "number", "minimum": 0},
    },
    "additionalProperties": False,
}

_GRAPH = {
    "oneOf": [
        dict(_GRAPH_ONE, required=["kind", "p"]),
        {"type": "object", "properties": {"schedule": {"type": "array", "minItems": 1,
                                                        "items": dict(_GRAPH_ONE, required=["t"])},
                                          "p": {"type": "integer", "minimum": 2}},
         "required": ["schedule"], "additionalProperties": False},
    ]
}

_GAINS = {
    "type": "object",
    "properties": {"K1": _gain, "K2": _gain, "Lambda": _gain, "Gamma": _gain, "K_inhib": _gain},
    "required": ["K1", "K2", "Lambda"],
    "additionalProperties": False,
}

_CONTROLLER = {
    "type": "object",
    "properties": {
        "law": {"enum": ["tracking-sync", "adaptive", "pd", "velocity-only", "partial", "delayed"]},
        "delay_T": {"type": "number", "minimum": 0},
        "a_hat0": {"type": "array", "items": _num},
        "gravity_feedforward": {"type": "boolean"},
        "inhibition": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
    },
    "additionalProperties": False,
}

_TRAJ = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["zero", "constant", "profile", "relayed"]},
        "q": {"type": "array", "items": _num},
        "joints": {"type": "array"},
    },
    "additionalProperties": False,
}

_INITIAL = {
    "type": "object",
    "properties": {"q": {"type": "array"}, "qdot": {"type": "array"}},
    "additionalProperties": False,
}

_SIM = {
    "type": "object",
    "properties": {
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "t_final": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "decimation": {"type": "integer", "minimum": 1},
        "q_bound": {"type": "number", "minimum": 0},
        "qdot_bound": {"type": "number", "minimum": 0},
        "integrator": {"enum": ["rk4"]},
        "hp_tau": {"type": "number", "exclusiveMinimum": 0},
        "disturbance": {"oneOf": [
            {"type": "string", "pattern": "^(sinusoid|noise)(:[0-9.eE+-]+)?$"},
            {"type": "object", "properties": {"kind": {"enum": ["sinusoid", "noise"]},
                                              "amplitude": {"type": "number", "minimum": 0}},
             "required": ["kind"], "additionalProperties": False},
            {"type": "null"}]},
    },
    "additionalProperties": False,
}

_GROUP = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "model": {"type": "object"},
        "graph": {"type": "object"},
        "gains": {"type": "object"},
        "controller": {"type": "object"},
        "trajectory": {"type": "object"},
        "initial": _INITIAL,
    },
    "additionalProperties": False,
}

_RELAY = {
    "type": "object",
    "properties": {
        "from": _pair,
        "to": _pair,
        "scale": _num,
        "offset": {"oneOf": [_num, {"type": "array", "items": _num}]},
        "select": {"type": "array", "items": {"type": "integer", "minimum": 0}},
    },
    "required": ["from", "to"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "version": {"type": "integer"},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "model": _MODEL,
        "graph": _GRAPH,
        "gains": _GAINS,
        "controller": _CONTROLLER,
        "trajectory": _TRAJ,
        "initial": _INITIAL,
        "sim": _SIM,
        "scenario": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["single-group", "concurrent-hierarchy"]},
                "groups": {"type": "array", "items": _GROUP, "minItems": 1},
                "relays": {"type": "array", "items": _RELAY},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "acceptance": {"type": "array", "items": {
            "type": "object",
            "properties": {"check": {"type": "string"}, "group": {"type": "integer", "minimum": 0},
                           "max": _num, "min": _num, "window": _num, "min_r2": _num},
            "required": ["check"], "additionalProperties": False}},
        "output": {"type": "object", "properties": {"dir": {"type": "string"}},
                   "additionalProperties": False},
    },
    "additionalProperties": False,
}


def _merge(base, over):
    if not isinstance(base, dict) or not isinstance(over, dict):
        return copy.deepcopy(over)
    out = copy.deepcopy(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if k in out and isinstance(out[k], dict) and isinstance(v, dict) \
            else copy.deepcopy(v)
    return out


def _validate(doc, schema, where):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {path}: {exc.message}") from None


def validate_config(cfg: dict) -> dict:
    """Check ``cfg`` against the schema and resolve group sections.

    Returns the config with ``scenario.groups`` fully populated.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("experiment config must be a mapping")
    _validate(cfg, SCHEMA, "config")
    scen = cfg.get("scenario", {"kind": "single-group"})
    if scen["kind"] == "single-group":
        if "groups" in scen and len(scen["groups"]) != 1:
            raise ConfigError("single-group scenario takes exactly one group")
        if scen.get("relays"):
            raise ConfigError("single-group scenario cannot have relays")
    groups = scen.get("groups") or [{}]
    resolved = []
    for i, gdoc in enumerate(groups):
        g = {}
        for key in ("model", "graph", "gains", "controller", "trajectory", "initial"):
            top = cfg.get(key)
            if key in gdoc:
                # graphs are replaced as a whole so that kind-specific keys do not leak
                g[key] = copy.deepcopy(gdoc[key]) if key == "graph" or top is None else _merge(top, gdoc[key])
            elif top is not None:
                g[key] = copy.deepcopy(top)
        g["name"] = gdoc.get("name", f"group{i + 1}")
        for key, sch in (("model", _MODEL), ("graph", _GRAPH), ("gains", _GAINS),
                         ("controller", _CONTROLLER), ("trajectory", _TRAJ)):
            if key in g:
                _validate(g[key], sch, f"group {g['name']} {key}")
        for key in ("model", "graph", "gains"):
            if key not in g:
                raise ConfigError(f"group {g['name']} has no {key} section")
        resolved.append(g)
    out = copy.deepcopy(cfg)
    out["scenario"] = {"kind": scen["kind"], "groups": resolved, "relays": scen.get("relays", [])}
    return out


def load_config(path) -> dict:
    """Read and validate an experiment YAML file."""
    path = Path(path)
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    return validate_config(cfg)


def preset_path(name: str) -> Path:
    p = PRESET_DIR / f"{name}.yaml"
    if not p.exists():
        names = sorted(x.stem for x in PRESET_DIR.glob("*.yaml"))
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(names)}")
    return p


def raw_preset(name: str) -> dict:
    """Unvalidated preset document, for editing before ``validate_config``.

    Top-level sections of a validated config have already been copied into
    its groups, so edits to them after loading have no effect.
    """
    with open(preset_path(name)) as fh:
        return yaml.safe_load(fh)


def load_preset(name: str) -> dict:
    return load_config(preset_path(name))


def _graph_from(doc):
    if "schedule" in doc:
        items = doc["schedule"]
        graphs = tuple(_graph_from({k: v for k, v in it.items() if k != "t"}) for it in items)
        return GraphSchedule(tuple(float(it["t"]) for it in items), graphs)
    return build_graph(
        doc["kind"], doc["p"], directed=doc.get("directed"), partial_mask=doc.get("partial_mask"),
        inhibitory=doc.get("inhibitory_link"), edges=doc.get("edges"), offsets=doc.get("offsets"))


def _gains_from(doc, n):
    def mat(x):
        return None if x is None else np.asarray(x, dtype=float)
    return Gains(mat(doc["K1"]), mat(doc["K2"]), mat(doc["Lambda"]), mat(doc.get("Gamma")),
                 mat(doc.get("K_inhib")), n=n)


@dataclass
class Experiment:
    scenario: ConcurrentScenario
    sim: SimConfig
    config: dict
    name: str

    @property
    def groups(self):
        return self.scenario.groups


def sim_config_from(doc: dict, **overrides) -> SimConfig:
    doc = dict(doc or {})
    doc.update({k: v for k, v in overrides.items() if v is not None})
    dist = doc.pop("disturbance", None)
    if isinstance(dist, str):
        dist = Disturbance.parse(dist)
    elif isinstance(dist, dict):
        dist = Disturbance(dist["kind"], float(dist.get("amplitude", 0.1)))
    return SimConfig(disturbance=dist, **doc)


def build_group(g: dict) -> Group:
    model = model_from_dict(g["model"])
    graph = _graph_from(g["graph"])
    gains = _gains_from(g["gains"], model.n)
    ctrl_doc = g.get("controller", {}) or {}
    inhib = ctrl_doc.get("inhibition")
    if inhib is not None:
        a, b, K = inhib
        graphs = graph.graphs if isinstance(graph, GraphSchedule) else (graph,)
        new = [apply_inhibition(gr, gains, (int(a), int(b)), K) for gr in graphs]
        gains = new[0][1]
        graph = GraphSchedule(graph.times, tuple(x[0] for x in new)) \
            if isinstance(graph, GraphSchedule) else new[0][0]
    first = graph.graphs[0] if isinstance(graph, GraphSchedule) else graph
    law = ctrl_doc.get("law", "tracking-sync")
    spec = ControllerSpec(
        law, gains, first, float(ctrl_doc.get("delay_T", 0.0)),
        None if ctrl_doc.get("a_hat0") is None else np.asarray(ctrl_doc["a_hat0"], dtype=float),
        bool(ctrl_doc.get("gravity_feedforward", False)))
    traj_doc = g.get("trajectory")
    traj = trajectory_from_spec(traj_doc, model.n)
    init = g.get("initial") or {}
    return Group(g["name"], [model] * first.p, graph, spec, traj,
                 None if "q" not in init else np.asarray(init["q"], dtype=float),
                 None if "qdot" not in init else np.asarray(init["qdot"], dtype=float))


def build_experiment(cfg: dict, **sim_overrides) -> Experiment:
    """Assemble scenario and simulation settings from a validated config."""
    if "scenario" not in cfg or "groups" not in cfg["scenario"]:
        cfg = validate_config(cfg)
    groups = [build_group(g) for g in cfg["scenario"]["groups"]]
    relays = []
    for r in cfg["scenario"].get("relays", []):
        relays.append(RelayEdge(int(r["from"][0]), int(r["from"][1]), int(r["to"][0]), int(r["to"][1]),
                                float(r.get("scale", 1.0)), r.get("offset", 0.0),
                                tuple(r["select"]) if "select" in r else None))
    scenario = ConcurrentScenario(groups, relays)
    sim = sim_config_from(cfg.get("sim"), **sim_overrides)
    return Experiment(scenario, sim, cfg, cfg.get("name", "experiment"))
