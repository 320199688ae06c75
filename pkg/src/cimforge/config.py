"""
Run configuration: one JSON document -> MacroConfig.

Noise sigmas are given in millivolts in JSON and converted to volts here.
Unknown keys are rejected. A ``null`` seed falls back to $CIM_FORGE_SEED, then 0.
"""

from __future__ import annotations

import copy
import json
import os
from importlib import resources
from pathlib import Path

import jsonschema

from .adc import AdcConfig
from .errors import ConfigError
from .macro import MacroConfig
from .variation import NoiseModel

SEED_ENV = "CIM_FORGE_SEED"

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "vdd": {"type": "number", "minimum": 0.6, "maximum": 1.2},
        "activated_rows": {"enum": [4, 8, 16]},
        "rho": {"type": "number", "minimum": 0},
        "seed": {"type": ["integer", "null"], "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "adc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "bits": {"type": "integer", "minimum": 1, "maximum": 10},
                "ref_mode": {"enum": ["in_sram", "ideal"]},
                "cutoff": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "scheme": {"enum": ["coarse_fine", "full_flash"]},
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "dac_anchor_sigma_mV": {"type": "number", "minimum": 0},
                "abl_sigma_mV": {"type": "number", "minimum": 0},
                "cmp_sigma_mV": {"type": "number", "minimum": 0},
                "dac_table_mV": {
                    "type": ["array", "null"],
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["vdd", "sigma"],
                        "properties": {
                            "vdd": {"type": "number"},
                            "sigma": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 16, "maxItems": 16},
                        },
                    },
                },
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}


def default_config() -> dict:
    text = resources.files("cimforge").joinpath("default-config.json").read_text()
    return json.loads(text)


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = v
    return out


def validate(doc: dict) -> dict:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    return doc


def load(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the file at ``path``, then ``overrides``; validated at each layer."""
    doc = default_config()
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        doc = merge(doc, validate(user))
    if overrides:
        doc = merge(doc, overrides)
    return validate(doc)


def resolve_seed(doc: dict) -> int:
    seed = doc.get("seed")
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return 0
    try:
        value = int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from None
    if value < 0:
        raise ConfigError(f"{SEED_ENV} must be non-negative")
    return value


def noise_model(doc: dict) -> NoiseModel:
    n = doc.get("noise", {})
    table = n.get("dac_table_mV")
    if table is not None:
        table = tuple((row["vdd"], tuple(s * 1e-3 for s in row["sigma"])) for row in table)
    return NoiseModel(
        enabled=n.get("enabled", True),
        dac_anchor_sigma=n.get("dac_anchor_sigma_mV", 1.8) * 1e-3,
        abl_sigma=n.get("abl_sigma_mV", 1.0) * 1e-3,
        cmp_sigma=n.get("cmp_sigma_mV", 2.0) * 1e-3,
        dac_table=table,
    )


def macro_config(doc: dict) -> MacroConfig:
    a = doc.get("adc", {})
    adc_cfg = AdcConfig(
        bits=a.get("bits", 4),
        ref_mode=a.get("ref_mode", "in_sram"),
        cutoff=a.get("cutoff", 0.5),
        scheme=a.get("scheme", "coarse_fine"),
    )
    return MacroConfig(
        vdd=doc.get("vdd", 0.9),
        activated_rows=doc.get("activated_rows", 16),
        rho=doc.get("rho", 1.0),
        adc=adc_cfg,
        noise=noise_model(doc),
        seed=resolve_seed(doc),
        workers=doc.get("workers", 1),
    )
