"""Run configuration: JSON schema, validation and model construction."""

import json

import jsonschema

from .dist import iid_model, make_marginal, read_table_csv
from .errors import ConfigInvalid

_num = {"type": "number"}
_supp = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}


def _marginal(kind, **params):
    props = {"kind": {"const": kind}, "support": _supp}
    props.update(params)
    return {"type": "object", "properties": props, "required": ["kind"], "additionalProperties": False}


MARGINAL_SCHEMA = {
    "oneOf": [
        _marginal("uniform"),
        _marginal("power_law", theta=_num, eta=_num),
        _marginal("trunc_pareto", eta=_num),
        _marginal("trunc_normal", theta=_num),
        _marginal("trunc_gamma", eta=_num, lam=_num),
        _marginal("beta", alpha=_num, beta=_num),
        _marginal("table", path={"type": "string"}),
    ]
}

SWEEP_VARS = ("eta", "theta", "lam", "k", "N", "xlo")
TARGETS = ("pure2d", "mixed2d", "separate2d", "pureN", "separateN", "exclusion")

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "bundleopt run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "marginal": MARGINAL_SCHEMA,
        "dims": {"type": "integer", "minimum": 2, "maximum": 6},
        "k": {"type": "number", "exclusiveMinimum": 0},
        "out": {"type": "string"},
        "seed": {"type": "integer"},
        "zeta": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n": {"type": "integer", "minimum": 3}},
        },
        "solve": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "starts": {"type": "integer", "minimum": 1},
                "foc_tol": {"type": "number", "exclusiveMinimum": 0},
                "global_check": {"type": "boolean"},
                "exhaustive": {"type": "boolean"},
                "max_segments": {"type": "integer", "minimum": 1},
            },
        },
        "oracle": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["lp", "variational"]},
                "n": {"type": "integer", "minimum": 2},
                "max_iter": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "allow_large": {"type": "boolean"},
            },
        },
        "certify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "target": {"enum": list(TARGETS)},
                "N": {"type": "integer", "minimum": 2},
                "space": {"enum": ["hypercube", "unit_demand", "conv_kk", "interior_kink"]},
                "prices": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"p1": _num, "p_single": _num, "p_bundle": _num},
                },
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["variable", "start", "stop", "step"],
            "properties": {
                "variable": {"enum": list(SWEEP_VARS)},
                "start": _num,
                "stop": _num,
                "step": {"type": "number", "exclusiveMinimum": 0},
                "target": {"enum": list(TARGETS)},
            },
        },
    },
}

RESULT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "bundleopt solve result",
    "type": "object",
    "additionalProperties": False,
    "required": ["config", "result"],
    "properties": {
        "config": CONFIG_SCHEMA,
        "result": {
            "type": "object",
            "additionalProperties": False,
            "required": ["branch", "family", "class", "revenue", "cutoffs", "ubar", "menu", "report_passed", "failures"],
            "properties": {
                "branch": {"type": "string"},
                "family": {"type": "string"},
                "class": {"type": "string"},
                "revenue": _num,
                "cutoffs": {"type": "object", "additionalProperties": _num},
                "ubar": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["u0", "k", "segments"],
                    "properties": {
                        "u0": _num,
                        "k": _num,
                        "segments": {
                            "type": "array",
                            "items": {
                                "type": "object",
                                "additionalProperties": False,
                                "required": ["x_lo", "x_hi", "kind", "slope"],
                                "properties": {
                                    "x_lo": _num,
                                    "x_hi": _num,
                                    "kind": {"enum": ["affine", "follow"]},
                                    "slope": _num,
                                },
                            },
                        },
                    },
                },
                "menu": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["class", "k", "entries"],
                    "properties": {
                        "class": {"type": "string"},
                        "k": _num,
                        "entries": {
                            "type": "array",
                            "items": {
                                "type": "object",
                                "additionalProperties": False,
                                "properties": {
                                    "q1": _num,
                                    "q2": _num,
                                    "price": _num,
                                    "status": {"type": "string"},
                                    "a": _num,
                                    "b": _num,
                                    "slope": _num,
                                },
                            },
                        },
                    },
                },
                "report_passed": {"type": "boolean"},
                "failures": {"type": "array", "items": {"type": "string"}},
            },
        },
    },
}

DEFAULT_CONFIG = {"marginal": {"kind": "uniform"}, "dims": 2, "k": 1.0}


def _pointer(err):
    path = "/".join(str(p) for p in err.absolute_path)
    return "/" + path if path else "/"


def validate(doc, schema=CONFIG_SCHEMA):
    """Raise ConfigInvalid naming the offending key when ``doc`` is invalid."""
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        # oneOf failures hide the real cause: drop the branches whose kind
        # does not match and report the first error of the branch that does
        if err.context:
            branches = {}
            for sub in err.context:
                branches.setdefault(sub.schema_path[0], []).append(sub)
            live = [b for b in branches.values() if not any(e.validator == "const" for e in b)]
            if not live:
                raise ConfigInvalid(f"{_pointer(err)}/kind: unknown marginal kind {err.instance.get('kind')!r}"
                                    if isinstance(err.instance, dict) else f"{_pointer(err)}: {err.message}")
            err = live[0][0]
        raise ConfigInvalid(f"{_pointer(err)}: {err.message}")
    return doc


def load_config(path=None, overrides=None):
    """Read, merge over the defaults, and validate a run configuration."""
    doc = json.loads(json.dumps(DEFAULT_CONFIG))
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{path}: not valid JSON ({exc.msg})") from exc
        if not isinstance(user, dict):
            raise ConfigInvalid("/: configuration must be a JSON object")
        doc.update(user)
    for key, val in (overrides or {}).items():
        if val is not None:
            doc[key] = val
    return validate(doc)


def marginal_from_config(entry):
    entry = dict(entry)
    kind = entry.pop("kind")
    support = entry.pop("support", None)
    if kind == "table":
        return read_table_csv(entry["path"])
    return make_marginal(kind, entry, support=tuple(support) if support else None)


def model_from_config(cfg):
    return iid_model(marginal_from_config(cfg["marginal"]), dims=cfg.get("dims", 2))
