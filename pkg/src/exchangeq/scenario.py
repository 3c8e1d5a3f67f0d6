"""Scenario files: schema, object construction, validation and report generation."""

import json
import logging
import math
import time
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from . import tolerances
from .errors import ConfigError, InferenceError, ShapeError, ValidationError
from .gpt import (
    GptMeasurement,
    GptState,
    classical_system,
    custom_system,
    distinguishing_measurement,
    embed_povm,
    embed_state,
    perfectly_distinguishable,
    standard_basis,
    unembed_state,
)
from .hilbert import (
    DensityMatrix,
    Povm,
    matrix_from_json,
    matrix_to_json,
    outcome_distribution,
    projective_measurement,
)
from .inference import (
    ExperimentRecord,
    SimplexProductModel,
    StateModel,
    exchangeability_report,
    outcome_parameters,
    partial_exch_predictive,
    posterior_update,
    predictive,
)
from .knowledge import (
    DitherMatrix,
    MixtureWeights,
    dither_measurement,
    mix_measurements,
)
from .priors import (
    ensemble_statistics,
    prior_spec_from_json,
    prior_spec_to_json,
    sample_prior,
)

logger = logging.getLogger(__name__)

SCHEMA_ID = "exchange-q/v1"

_matrix = {
    "oneOf": [
        {"type": "string"},
        {
            "type": "object",
            "required": ["dim", "entries"],
            "properties": {
                "dim": {"type": "integer", "minimum": 1},
                "entries": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                },
            },
        },
    ]
}
_vector = {"type": "array", "items": {"type": "number"}}
_state = {"oneOf": [_matrix, _vector]}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema", "system", "measurements", "prior", "particle_count", "records", "queries"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_ID},
        "system": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["quantum", "classical", "categorical", "custom"]},
                "n": {"type": "integer", "minimum": 2},
                "k": {"type": "integer", "minimum": 2},
                "extremal_states": {"type": "array", "items": _vector},
            },
        },
        "measurements": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "properties": {
                    "povm": {"type": "array", "items": _matrix, "minItems": 1},
                    "projective": {"type": "array", "items": {"type": "array"}},
                    "effects": {"type": "array", "items": _vector, "minItems": 1},
                    "outcomes": {"type": "integer", "minimum": 1},
                    "mixture": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
                    "weights": _vector,
                    "dither": {"type": "string"},
                    "matrix": {"type": "array", "items": _vector},
                    "outcome_labels": {"type": "array", "items": {"type": "string"}},
                },
                "oneOf": [
                    {"required": ["povm"]},
                    {"required": ["projective"]},
                    {"required": ["effects"]},
                    {"required": ["outcomes"]},
                    {"required": ["mixture", "weights"]},
                    {"required": ["dither", "matrix"]},
                ],
            },
        },
        "prior": {
            "type": "object",
            "required": ["kind", "seed"],
            "properties": {
                "kind": {
                    "enum": ["haar_pure", "hilbert_schmidt", "simplex_dirichlet", "product_dirichlet", "grid", "explicit"]
                },
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
            },
        },
        "particle_count": {"type": "integer", "minimum": 1},
        "records": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["steps"],
                "properties": {
                    "steps": {
                        "type": "array",
                        "items": {
                            "type": "array",
                            "prefixItems": [{"type": "string"}, {"type": "integer", "minimum": 0}],
                            "minItems": 2,
                            "maxItems": 2,
                        },
                    }
                },
            },
        },
        "queries": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["type"],
                "properties": {
                    "type": {
                        "enum": [
                            "predictive",
                            "posterior",
                            "distinguishability",
                            "exchangeability_check",
                            "embed_diagnostics",
                        ]
                    },
                    "record": {"type": "string"},
                    "permutation": {"type": "array", "items": {"type": "integer"}},
                    "states": {"type": "array", "items": _state, "minItems": 2, "maxItems": 2},
                    "state": _state,
                    "resample": {"type": "boolean"},
                },
            },
        },
    },
}

_REQUIRED_FIELDS = {
    "predictive": ("record",),
    "posterior": ("record",),
    "distinguishability": ("states",),
    "exchangeability_check": ("record", "permutation"),
    "embed_diagnostics": ("state",),
}


def pointer(*parts):
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def check_schema(config):
    """Raise ConfigError for the first schema violation, with its JSON pointer."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, pointer(*err.absolute_path))
    for i, q in enumerate(config["queries"]):
        for name in _REQUIRED_FIELDS[q["type"]]:
            if name not in q:
                raise ConfigError(f"{q['type']} query needs {name!r}", pointer("queries", i))
        if "record" in q and q["record"] not in config["records"]:
            raise ConfigError(f"unknown record {q['record']!r}", pointer("queries", i, "record"))
    system = config["system"]
    need = {"quantum": "n", "classical": "k", "custom": "extremal_states"}.get(system["kind"])
    if need and need not in system:
        raise ConfigError(f"{system['kind']} system needs {need!r}", pointer("system"))


@dataclass
class Scenario:
    config: dict
    system_kind: str
    dim: int = 0
    system: object = None
    measurements: dict = field(default_factory=dict)
    constructed: set = field(default_factory=set)
    prior: object = None
    records: dict = field(default_factory=dict)

    @property
    def registry(self):
        if self.system_kind == "categorical":
            return SimplexProductModel(self.measurements)
        return StateModel(self.measurements)


class _Collector:
    """Runs checks either fail-fast (run) or collecting every failure (validate)."""

    def __init__(self, collect):
        self.collect = collect
        self.rows = []

    def check(self, what, fn):
        try:
            value = fn()
        except (ValidationError, ShapeError) as exc:
            if not self.collect:
                raise
            self.rows.append((what, False, _describe(exc)))
            return None
        self.rows.append((what, True, ""))
        return value


def _describe(exc):
    name = getattr(exc, "invariant", type(exc).__name__)
    mag = getattr(exc, "magnitude", None)
    extra = f", max deviation {mag:.3e}" if mag is not None else ""
    return f"{type(exc).__name__} [{name}{extra}]: {exc}"


def _parse_state(obj, scenario):
    if scenario.system_kind == "quantum":
        if not isinstance(obj, (str, dict)):
            raise ConfigError("quantum states must be matrices")
        return DensityMatrix(matrix_from_json(obj))
    name = scenario.system.name if scenario.system is not None else "custom"
    return GptState(obj, name)


def _basic_measurement(mid, spec, scenario, ptr):
    kind = scenario.system_kind
    labels = spec.get("outcome_labels")
    if "povm" in spec:
        if kind != "quantum":
            raise ConfigError("POVMs need a quantum system", ptr)
        mats = []
        for j, m in enumerate(spec["povm"]):
            try:
                mats.append(matrix_from_json(m))
            except KeyError as exc:
                raise ConfigError(str(exc.args[0]), pointer(*ptr.strip("/").split("/"), "povm", j)) from None
        return Povm(mats, label=mid, outcome_labels=labels)
    if "projective" in spec:
        if kind != "quantum":
            raise ConfigError("projective measurements need a quantum system", ptr)
        vecs = [[complex(re_, im) for re_, im in v] for v in spec["projective"]]
        return projective_measurement(vecs, label=mid, outcome_labels=labels)
    if "effects" in spec:
        if kind not in ("classical", "custom"):
            raise ConfigError("effect vectors need a classical or custom system", ptr)
        return GptMeasurement(mid, spec["effects"], tuple(labels or ()), scenario.system.name)
    if kind != "categorical":
        raise ConfigError("outcome-count measurements need a categorical system", ptr)
    return int(spec["outcomes"])


def _as_gpt(m, scenario):
    if isinstance(m, Povm):
        return embed_povm(m, standard_basis(scenario.dim))
    return m


def _build_measurements(config, scenario, checks):
    specs = config["measurements"]
    done = {}
    state = {}

    def build(mid, trail):
        ptr = pointer("measurements", mid)
        if mid in done:
            return done[mid]
        if mid not in specs:
            raise ConfigError(f"unknown measurement {mid!r}", trail)
        if state.get(mid) == "visiting":
            raise ConfigError(f"measurement {mid!r} is defined in terms of itself", ptr)
        state[mid] = "visiting"
        spec = specs[mid]
        if "mixture" in spec or "dither" in spec:
            if scenario.system_kind == "categorical":
                raise ConfigError("mixtures and dithers need state-space measurements", ptr)
            scenario.constructed.add(mid)
            if "mixture" in spec:
                a, b = spec["mixture"]
                ma = build(a, pointer("measurements", mid, "mixture", 0))
                mb = build(b, pointer("measurements", mid, "mixture", 1))

                def make():
                    if ma is None or mb is None:
                        raise ValidationError("depends on an invalid measurement")
                    q = MixtureWeights(spec["weights"])
                    return mix_measurements(_as_gpt(ma, scenario), _as_gpt(mb, scenario), q, label=mid)

            else:
                base = build(spec["dither"], pointer("measurements", mid, "dither"))

                def make():
                    if base is None:
                        raise ValidationError("depends on an invalid measurement")
                    Q = DitherMatrix(spec["matrix"])
                    return dither_measurement(_as_gpt(base, scenario), Q, label=mid, outcome_labels=spec.get("outcome_labels"))

        else:

            def make():
                return _basic_measurement(mid, spec, scenario, ptr)

        value = checks.check(f"measurement {mid}", make)
        done[mid] = value
        state[mid] = "done"
        return value

    for mid in specs:
        build(mid, pointer("measurements", mid))
    return done


def load(config, collect=False):
    """Build a :class:`Scenario` from a parsed config.

    With ``collect`` numerical failures are recorded per object instead of
    raised; the list of ``(object, ok, message)`` rows is returned alongside.
    """
    check_schema(config)
    checks = _Collector(collect)
    sysobj = config["system"]
    kind = sysobj["kind"]
    scenario = Scenario(config, kind)
    if kind == "quantum":
        scenario.dim = int(sysobj["n"])
    elif kind == "classical":
        scenario.dim = int(sysobj["k"])
        scenario.system = classical_system(scenario.dim)
        scenario.measurements["fine"] = scenario.system.measurements["fine"]
    elif kind == "custom":
        scenario.system = checks.check("system", lambda: custom_system(sysobj["extremal_states"], {}))
        scenario.dim = len(sysobj["extremal_states"][0]) if sysobj["extremal_states"] else 0
        if scenario.system is None:
            return scenario, checks.rows

    built = _build_measurements(config, scenario, checks)
    scenario.measurements.update({k: v for k, v in built.items() if v is not None})

    if kind == "custom" and scenario.system is not None:
        gpts = {k: v for k, v in scenario.measurements.items() if isinstance(v, GptMeasurement)}
        scenario.system = checks.check(
            "system", lambda: custom_system(scenario.system.extremal_states, gpts)
        ) or scenario.system

    for name, rec in config["records"].items():
        for j, (mid, o) in enumerate(rec["steps"]):
            if mid not in config["measurements"] and mid not in scenario.measurements:
                raise ConfigError(f"unknown measurement {mid!r}", pointer("records", name, "steps", j, 0))
            m = scenario.measurements.get(mid)
            if m is not None:
                size = m if isinstance(m, int) else len(m)
                if o >= size:
                    raise ConfigError(
                        f"outcome {o} out of range for {mid!r} with {size} outcomes",
                        pointer("records", name, "steps", j, 1),
                    )
        scenario.records[name] = ExperimentRecord(tuple(tuple(s) for s in rec["steps"]))

    try:
        scenario.prior = checks.check("prior", lambda: prior_spec_from_json(config["prior"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed prior: {exc}", pointer("prior")) from None
    if scenario.prior is not None:
        checks.check("prior/system compatibility", lambda: _check_prior_fits(scenario))
    for i, q in enumerate(config["queries"]):
        for j, s in enumerate(q.get("states", [])):
            checks.check(f"query {i} state {j}", lambda s=s: _parse_state(s, scenario))
        if "state" in q:
            checks.check(f"query {i} state", lambda: _parse_state(q["state"], scenario))
        if q["type"] == "exchangeability_check":
            n = len(scenario.records[q["record"]])
            if sorted(q["permutation"]) != list(range(n)):
                raise ConfigError(f"not a permutation of {n} steps", pointer("queries", i, "permutation"))
    return scenario, checks.rows


def _check_prior_fits(scenario):
    p = scenario.prior
    kind = scenario.system_kind
    if kind == "quantum" and p.kind in ("haar_pure", "hilbert_schmidt", "grid") and p.n != scenario.dim:
        raise ShapeError(f"prior dimension {p.n} does not match system dimension {scenario.dim}")
    if kind == "quantum" and p.kind in ("simplex_dirichlet", "product_dirichlet"):
        raise ShapeError(f"{p.kind} prior cannot describe quantum states")
    if kind in ("classical", "custom") and p.kind in ("haar_pure", "hilbert_schmidt", "grid", "product_dirichlet"):
        raise ShapeError(f"{p.kind} prior does not match a {kind} system")
    if kind == "categorical" and p.kind in ("haar_pure", "hilbert_schmidt", "grid"):
        raise ShapeError(f"{p.kind} prior does not match a categorical system")
    if kind == "categorical" and p.kind == "simplex_dirichlet":
        if len(scenario.measurements) != 1:
            raise ShapeError("a single Dirichlet prior serves exactly one measurement kind")
        (size,) = scenario.measurements.values()
        if len(p.alpha) != size:
            raise ShapeError(f"Dirichlet of length {len(p.alpha)} for {size} outcomes")
    if kind == "categorical" and p.kind == "product_dirichlet":
        missing = set(scenario.measurements) - set(p.labels)
        if missing:
            raise ShapeError(f"product_dirichlet prior lacks factors for {sorted(missing)}")
        for lab, a in zip(p.labels, p.alphas):
            if lab in scenario.measurements and len(a) != scenario.measurements[lab]:
                raise ShapeError(f"factor {lab!r} has {len(a)} concentrations for {scenario.measurements[lab]} outcomes")
    if kind in ("classical", "custom") and p.kind == "simplex_dirichlet" and len(p.alpha) != scenario.dim:
        raise ShapeError(f"Dirichlet of length {len(p.alpha)} for a system of dimension {scenario.dim}")
    return True


# -- running ------------------------------------------------------------------


def _finite(x):
    """JSON-safe floats: non-finite values become strings."""
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _finite(x.tolist())
    return x


def _measurement_report(scenario):
    out = {}
    for mid, m in scenario.measurements.items():
        entry = {"constructed": mid in scenario.constructed}
        if isinstance(m, int):
            entry["outcomes"] = m
        else:
            g = _as_gpt(m, scenario)
            entry["outcome_labels"] = list(g.outcome_labels)
            entry["effects"] = g.effects.tolist()
        out[mid] = entry
    return out


class Runner:
    def __init__(self, scenario, threads=1):
        self.scenario = scenario
        self.threads = threads
        self._ensemble = None

    @property
    def ensemble(self):
        if self._ensemble is None:
            sc = self.scenario
            logger.info("sampling %s prior with %d particles", sc.prior.kind, sc.config["particle_count"])
            self._ensemble = sample_prior(sc.prior, sc.config["particle_count"], self.threads)
        return self._ensemble

    def provenance(self):
        e = self.ensemble
        return {
            "seed": int(self.scenario.prior.seed),
            "particle_count": len(e),
            "prior_kind": self.scenario.prior.kind,
            "exact_quadrature": bool(e.exact),
        }

    def predictive(self, q):
        sc = self.scenario
        rec = sc.records[q["record"]]
        if sc.system_kind == "categorical":
            res = partial_exch_predictive(sc.prior, rec, sc.measurements, threads=self.threads, ensemble=self.ensemble)
            out = _predictive_block(res.mc)
            if res.closed_form_log_probability is not None:
                out["closed_form"] = {
                    "log_probability": res.closed_form_log_probability,
                    "probability": float(np.exp(res.closed_form_log_probability)),
                    "agrees_within_3_std_errors": res.agrees,
                }
            return out
        return _predictive_block(predictive(self.ensemble, rec, sc.registry, self.threads))

    def posterior(self, q):
        sc = self.scenario
        rec = sc.records[q["record"]]
        post = posterior_update(self.ensemble, rec, sc.registry, self.threads, resample=q.get("resample", False))
        stats = ensemble_statistics(post)
        out = {"kind": "exact" if post.exact else "monte_carlo", "ess": stats.ess}
        if stats.mean_state is not None:
            out["mean_state"] = matrix_to_json(stats.mean_state)
            out["mean_purity"] = stats.mean_purity
            out["mean_state_vector"] = embed_state(stats.mean_state).coords.tolist()
        else:
            out["mean_vectors"] = {k: v.tolist() for k, v in stats.mean_vectors.items()}
        nxt = {}
        for mid, m in sc.measurements.items():
            size = m if isinstance(m, int) else len(m)
            nxt[mid] = [
                _predictive_block(predictive(post, ExperimentRecord(((mid, o),)), sc.registry, self.threads))
                for o in range(size)
            ]
        out["next_outcome"] = nxt
        return out

    def distinguishability(self, q):
        sc = self.scenario
        a, b = (_parse_state(s, sc) for s in q["states"])
        if sc.system_kind == "quantum":
            d = perfectly_distinguishable(a, b)
            out = {"kind": "exact", "distinguishable": d.distinguishable, "overlap": d.overlap,
                   "support_overlap": d.support_overlap}
            if d.witness is not None:
                out["witness"] = [matrix_to_json(e.matrix) for e in d.witness.effects]
            return out
        if sc.system is None:
            raise ConfigError("distinguishability needs a state-space system", "/system")
        system = type(sc.system)(sc.system.kind, sc.system.dim, sc.system.extremal_states,
                                 {k: v for k, v in sc.measurements.items() if isinstance(v, GptMeasurement)})
        label = distinguishing_measurement(system, a, b)
        return {"kind": "exact", "distinguishable": label is not None, "witness_measurement": label}

    def exchangeability_check(self, q):
        sc = self.scenario
        rep = exchangeability_report(sc.records[q["record"]], q["permutation"], self.ensemble, sc.registry)
        return {"kind": "monte_carlo" if not self.ensemble.exact else "exact", **rep}

    def embed_diagnostics(self, q):
        sc = self.scenario
        st = _parse_state(q["state"], sc)
        out = {"kind": "exact"}
        if sc.system_kind == "quantum":
            basis = standard_basis(sc.dim)
            s = embed_state(st, basis)
            back = unembed_state(s, basis)
            out["state_vector"] = s.coords.tolist()
            out["round_trip_error"] = float(np.max(np.abs(back.matrix - st.matrix)))
            out["trace_formula"] = {
                mid: outcome_distribution(m, st).tolist() for mid, m in sc.measurements.items() if isinstance(m, Povm)
            }
        else:
            s = st
            out["state_vector"] = s.coords.tolist()
        if sc.system_kind != "categorical":
            params = outcome_parameters(st if sc.system_kind == "quantum" else s, sc.registry)
            out["vector_formula"] = {k: v.tolist() for k, v in params.items()}
        return out


def _predictive_block(res):
    out = {"kind": "exact" if res.exact else "monte_carlo"}
    out.update(res.to_json())
    return out


def run_config(config, threads=1, config_name=None):
    """Execute every query and return the report as a dict."""
    scenario, _ = load(config)
    runner = Runner(scenario, threads)
    report = {
        "schema": SCHEMA_ID,
        "config": config_name,
        "provenance": {
            "prior": prior_spec_to_json(scenario.prior),
            "particle_count": config["particle_count"],
            "rng": "philox4x64-10; key=(seed, stream); counter=(0, 0, 0, particle)",
            "tolerances": tolerances.as_dict(),
        },
        "measurements": _measurement_report(scenario),
        "queries": [],
    }
    for i, q in enumerate(config["queries"]):
        t0 = time.perf_counter()
        logger.info("query %d: %s", i, q["type"])
        result = getattr(runner, q["type"])(q)
        report["queries"].append(
            {
                "index": i,
                "query": q,
                "result": result,
                "provenance": runner.provenance(),
                "timing": {"wall_clock_seconds": time.perf_counter() - t0},
            }
        )
    return _finite(report)


def strip_timing(report):
    """Copy of a report without its timing fields."""
    out = json.loads(json.dumps(report))
    for q in out.get("queries", []):
        q.pop("timing", None)
    return out


def exit_code(exc):
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, (ValidationError, ShapeError)):
        return 3
    if isinstance(exc, InferenceError):
        return 4
    return 1
