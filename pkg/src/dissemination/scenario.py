"""JSON scenario files: schema, validation and conversion to model objects.

A scenario has a ``model`` section (``{"type": "custom", ...}`` with explicit
model fields, or ``{"type": "preset", "name": ..., "params": {...}}``) and
optional ``run``, ``simulate``, ``oracle`` and ``outputs`` sections.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np

from .kernels import kernel_from_dict, kernel_to_dict
from .model import ArrivalClass, BackgroundChain, ModelSpec, ShockStream

__all__ = [
    "SCHEMA",
    "ScenarioError",
    "Scenario",
    "parse_scenario",
    "load_scenario",
    "build_spec",
    "spec_to_dict",
    "spec_from_dict",
]

_num = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_vec = {"type": "array", "items": _num}
_intvec = {"type": "array", "items": {"type": "integer", "minimum": 0}}

_kernel = {
    "oneOf": [
        {"type": "object", "additionalProperties": False, "required": ["type", "vector"],
         "properties": {"type": {"const": "deterministic"}, "vector": _intvec}},
        {"type": "object", "additionalProperties": False, "required": ["type", "probs"],
         "properties": {"type": {"const": "multinomial_leak"}, "probs": _vec}},
        {"type": "object", "additionalProperties": False, "required": ["type", "alpha", "inner"],
         "properties": {"type": {"const": "amplified"}, "alpha": _num,
                        "inner": {"type": "object", "additionalProperties": False,
                                  "required": ["type", "probs"],
                                  "properties": {"type": {"const": "multinomial_leak"}, "probs": _vec}}}},
        {"type": "object", "additionalProperties": False, "required": ["type", "support"],
         "properties": {"type": {"const": "table"},
                        "support": {"type": "array", "minItems": 1,
                                    "items": {"type": "array", "prefixItems": [_intvec, _num],
                                              "minItems": 2, "maxItems": 2}}}},
    ]
}

_kernel_table = {"type": "array", "items": {"type": "array", "items": _kernel}}

_custom = {
    "type": "object",
    "additionalProperties": False,
    "required": ["type", "n_agents", "chain"],
    "properties": {
        "type": {"const": "custom"},
        "n_agents": {"type": "integer", "minimum": 1},
        "chain": {
            "type": "object", "additionalProperties": False, "required": ["Q"],
            "properties": {
                "Q": {"type": "array", "items": _vec},
                "initial": {"oneOf": [{"type": "integer", "minimum": 0}, _vec]},
            },
        },
        "arrivals": {
            "type": "array",
            "items": {"type": "object", "additionalProperties": False, "required": ["targets", "rates"],
                      "properties": {"targets": _intvec, "rates": _vec}},
        },
        "shock_rates": _vec,
        "kernels": _kernel_table,
        "shocks": {
            "type": "array",
            "items": {"type": "object", "additionalProperties": False, "required": ["rates", "kernels"],
                      "properties": {"name": {"type": "string"}, "rates": _vec, "kernels": _kernel_table}},
        },
        "initial_wealth": _intvec,
    },
}

_wealth_params = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "base": {"enum": ["transient", "poverty"]},
        "n_agents": {"type": "integer", "minimum": 2},
        "q12": _nonneg, "q21": _nonneg,
        "lam": _vec, "gamma": _vec, "p": _vec, "r": _vec, "s": _vec,
        "leader_leak": _vec, "follower_leak": _vec,
    },
}
_opinion_params = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "n_a": {"type": "integer", "minimum": 1}, "n_b": {"type": "integer", "minimum": 1},
        "q12": _nonneg, "q21": _nonneg, "gamma": _nonneg,
        "ratio_a": _nonneg, "ratio_b": _nonneg, "alpha": _nonneg, "lam_a2": _nonneg,
        "m0_a": {"type": "integer", "minimum": 0}, "m0_b": {"type": "integer", "minimum": 0},
    },
}
_storage_params = {
    "type": "object", "additionalProperties": False, "required": ["lam"],
    "properties": {
        "variant": {"enum": ["basic", "faulty_link", "with_failures"]},
        "lam": _nonneg, "gamma": _nonneg, "horizon": _nonneg,
        "q_up": _nonneg, "q_down": _nonneg, "gamma_fail": _nonneg,
        "kappa_backup": _nonneg, "kappa_uncopied": _nonneg,
    },
}

_preset = {
    "type": "object",
    "additionalProperties": False,
    "required": ["type", "name"],
    "properties": {
        "type": {"const": "preset"},
        "name": {"enum": ["wealth", "opinion", "storage"]},
        "params": {"type": "object"},
    },
    "allOf": [
        {"if": {"properties": {"name": {"const": "wealth"}}},
         "then": {"properties": {"params": _wealth_params}}},
        {"if": {"properties": {"name": {"const": "opinion"}}},
         "then": {"properties": {"params": _opinion_params}}},
        {"if": {"properties": {"name": {"const": "storage"}}},
         "then": {"properties": {"params": _storage_params}}},
    ],
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "model": {
            "type": "object",
            "required": ["type"],
            "properties": {"type": {"enum": ["custom", "preset"]}},
            "allOf": [
                {"if": {"properties": {"type": {"const": "custom"}}}, "then": _custom},
                {"if": {"properties": {"type": {"const": "preset"}}}, "then": _preset},
            ],
        },
        "run": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "t_end": _nonneg,
                "step": {"type": "number", "exclusiveMinimum": 0},
                "sample_times": _vec,
                "stride": {"type": "integer", "minimum": 1},
            },
        },
        "simulate": {
            "type": "object", "additionalProperties": False,
            "properties": {"runs": {"type": "integer", "minimum": 1},
                           "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1}},
        },
        "oracle": {
            "type": "object", "additionalProperties": False,
            "properties": {"cap": _intvec, "budget": {"type": "integer", "minimum": 1}},
        },
        "outputs": {"type": "array", "items": {"type": "string"}},
    },
}


class ScenarioError(ValueError):
    """Invalid scenario; ``errors`` lists ``(json_pointer, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p or '/'}: {m}" for p, m in self.errors))


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def _leaf_errors(error):
    # descend into oneOf/anyOf branches to report the most specific failures
    if error.context:
        best = max(error.context, key=lambda e: len(e.absolute_path))
        return _leaf_errors(best)
    return [error]


def _non_finite(doc, path=()):
    if isinstance(doc, float) and not math.isfinite(doc):
        yield _pointer(path), "number must be finite"
    elif isinstance(doc, dict):
        for k, v in doc.items():
            yield from _non_finite(v, path + (k,))
    elif isinstance(doc, list):
        for i, v in enumerate(doc):
            yield from _non_finite(v, path + (i,))


@dataclass
class Scenario:
    model: dict
    run: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    source: Optional[str] = None


def parse_scenario(doc: Any, source: str = None) -> Scenario:
    """Validate a decoded JSON document; raise :class:`ScenarioError` with pointers."""
    errors = list(_non_finite(doc))
    validator = jsonschema.Draft202012Validator(SCHEMA)
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        for leaf in _leaf_errors(err):
            path = list(leaf.absolute_path)
            msg = leaf.message
            if leaf.validator == "additionalProperties":
                extra = sorted(set(leaf.instance) - set(leaf.schema.get("properties", {})))
                if extra:
                    path = path + [extra[0]]
                    msg = f"unknown key {extra[0]!r}"
            errors.append((_pointer(path), msg))
    if errors:
        raise ScenarioError(dict.fromkeys(errors))
    return Scenario(doc["model"], doc.get("run", {}), doc.get("simulate", {}), doc.get("oracle", {}),
                    doc.get("outputs", []), source)


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file (``OSError`` / ``json.JSONDecodeError`` propagate)."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_scenario(json.loads(text), str(path))


# ---------------------------------------------------------------------------
# model conversion
# ---------------------------------------------------------------------------

def spec_from_dict(model: dict) -> ModelSpec:
    """Custom model section to :class:`ModelSpec`."""
    chain_d = model["chain"]
    Q = np.array(chain_d["Q"], dtype=float)
    initial = chain_d.get("initial", 0)
    chain = BackgroundChain(Q, initial if isinstance(initial, int) else np.array(initial, dtype=float))
    arrivals = [ArrivalClass(a["targets"], a["rates"]) for a in model.get("arrivals", [])]
    streams = []
    if "kernels" in model or "shock_rates" in model:
        if "kernels" not in model or "shock_rates" not in model:
            raise ScenarioError([("/model", "shock_rates and kernels must be given together")])
        streams.append(ShockStream(model["shock_rates"],
                                   [[kernel_from_dict(k) for k in row] for row in model["kernels"]]))
    for s in model.get("shocks", []):
        streams.append(ShockStream(s["rates"], [[kernel_from_dict(k) for k in row] for row in s["kernels"]],
                                   s.get("name", "shock")))
    return ModelSpec(model["n_agents"], chain, tuple(arrivals), tuple(streams), model.get("initial_wealth"))


def spec_to_dict(spec: ModelSpec) -> dict:
    """Inverse of :func:`spec_from_dict` (always in the multi-stream form)."""
    init = spec.chain.initial
    return {
        "type": "custom",
        "n_agents": spec.n_agents,
        "chain": {"Q": spec.chain.Q.tolist(),
                  "initial": int(init) if isinstance(init, (int, np.integer)) else np.asarray(init).tolist()},
        "arrivals": [{"targets": list(a.targets), "rates": a.rates.tolist()} for a in spec.arrivals],
        "shocks": [{"name": s.name, "rates": s.rates.tolist(),
                    "kernels": [[kernel_to_dict(k) for k in row] for row in s.kernels]} for s in spec.shocks],
        "initial_wealth": spec.initial_wealth.tolist(),
    }


def preset_scenario(model: dict):
    """Build the application scenario object of a preset model section."""
    from .applications import opinion, storage, wealth

    name, params = model["name"], dict(model.get("params", {}))
    if name == "wealth":
        base = params.pop("base", "transient")
        n = params.pop("n_agents", 30)
        ref = wealth.transient_preset(n) if base == "transient" else wealth.poverty_preset(n)
        fields = {f: getattr(ref, f) for f in ("q12", "q21", "lam", "gamma", "p", "r", "s")}
        leaks = {k: params.pop(k) for k in ("leader_leak", "follower_leak") if k in params}
        fields.update({k: tuple(v) if isinstance(v, list) else v for k, v in params.items()})
        if leaks:
            ll = leaks.get("leader_leak", ref.leader_leak)
            fl = leaks.get("follower_leak", ref.follower_leak)
            return wealth.WealthScenario.from_leaks(n, fields["q12"], fields["q21"], fields["lam"],
                                                    fields["gamma"], fields["p"], ll, fl)
        return wealth.WealthScenario(n, **fields)
    if name == "opinion":
        return opinion.base_preset(**params)
    variant = params.pop("variant", "basic")
    return storage.StorageScenario(**params), variant


def build_spec(scenario: Scenario) -> ModelSpec:
    """Model of a scenario, through the preset builders when applicable."""
    model = scenario.model
    if model["type"] == "custom":
        return spec_from_dict(model)
    from .applications import opinion, storage, wealth

    sc = preset_scenario(model)
    if model["name"] == "wealth":
        return wealth.build_wealth_spec(sc)
    if model["name"] == "opinion":
        return opinion.build_opinion_spec(sc)
    st, variant = sc
    return storage.build_storage_spec(st, variant)
