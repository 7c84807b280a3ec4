"""
Scenario files: a model, a window [0, T], an error budget and run settings.

Layout::

    {"model": {"kind": "rotating_spin", "params": {"omega0": 1, "theta": 0.1, "omega": 0.1}},
     "T": 31.47, "epsilon": 0.1, "steps": 2000, "gauge": "aligned", "tol": 1e-10,
     "initial": {"basis_level": 0}, "outputs": ["series"]}

Tabulated models give ``"path"`` (relative to the scenario file) instead of
``params``. Initial amplitudes are eigenbasis coefficients c_n(0) at t = 0;
omitting ``initial`` runs every basis level in turn.
"""

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import models
from .errors import AdicheckError, ParseError, ValidationError
from .flow import GAUGES, MIN_STEPS

DEFAULT_STEPS = 2000
DEFAULT_GAUGE = "aligned"
DEFAULT_TOL = 1e-10
OUTPUTS = ("conditions", "deviation", "series", "figures")
DEFAULT_OUTPUTS = ("conditions", "deviation")
TOP_KEYS = {"name", "description", "model", "T", "epsilon", "steps", "gauge", "tol",
            "initial", "outputs"}
MODEL_PARAMS = {
    "constant": {"h_re": True, "h_im": False},
    "rotating_spin": {"omega0": True, "theta": True, "omega": True},
    "landau_zener": {"v": True, "delta": True, "t0": True},
    "linear_interpolation": {"h0_re": True, "h0_im": False, "h1_re": True, "h1_im": False,
                             "T": False},
    "tabulated": {"max_spacing": False},
}
SCALAR_PARAMS = {"omega0", "theta", "omega", "v", "delta", "t0", "T", "max_spacing"}


@dataclass(frozen=True)
class Scenario:
    kind: str
    params: dict
    T: float
    epsilon: float
    steps: int = DEFAULT_STEPS
    gauge: str = DEFAULT_GAUGE
    tol: float = DEFAULT_TOL
    initial: dict = None
    outputs: tuple = DEFAULT_OUTPUTS
    path: str = None
    name: str = None
    base_dir: Path = field(default=None, compare=False, repr=False)

    def build_model(self):
        """Instantiate the Hamiltonian model described by this scenario."""
        p = self.params
        if self.kind == "constant":
            return models.constant(models._matrix_from(p["h_re"], p.get("h_im")))
        if self.kind == "rotating_spin":
            return models.rotating_spin(p["omega0"], p["theta"], p["omega"])
        if self.kind == "landau_zener":
            return models.landau_zener(p["v"], p["delta"], p["t0"])
        if self.kind == "linear_interpolation":
            H0 = models._matrix_from(p["h0_re"], p.get("h0_im"))
            H1 = models._matrix_from(p["h1_re"], p.get("h1_im"))
            return models.linear_interpolation(H0, H1, p.get("T", self.T))
        if self.kind == "tabulated":
            return models.load_tabulated_json(self.resolved_path(), p.get("max_spacing"))
        raise ValidationError("model.kind", f"unknown kind {self.kind!r}")

    def resolved_path(self):
        p = Path(self.path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        return p

    def initial_states(self, dim):
        """List of ``(label, c0)`` eigenbasis coefficient vectors to propagate."""
        if self.initial is None:
            return [(f"level_{n}", np.eye(dim, dtype=np.complex128)[n]) for n in range(dim)]
        if "basis_level" in self.initial:
            n = self.initial["basis_level"]
            if not 0 <= n < dim:
                raise ValidationError("initial.basis_level", f"level {n} outside 0..{dim - 1}")
            return [(f"level_{n}", np.eye(dim, dtype=np.complex128)[n])]
        re = np.asarray(self.initial["amplitudes_re"], dtype=float)
        im = np.asarray(self.initial.get("amplitudes_im", np.zeros_like(re)), dtype=float)
        if re.shape != (dim,) or im.shape != (dim,):
            raise ValidationError("initial", f"amplitudes must have length {dim}")
        return [("amplitudes", re + 1j * im)]

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_param(self, name, value):
        """Copy with ``T``, ``epsilon``, ``steps``, ``tol`` or a scalar model parameter set to ``value``."""
        if name in ("T", "epsilon", "tol"):
            s = self.replace(**{name: float(value)})
        elif name == "steps":
            s = self.replace(steps=int(value))
        elif name in MODEL_PARAMS[self.kind] and name in SCALAR_PARAMS:
            s = self.replace(params={**self.params, name: float(value)})
        else:
            raise ValidationError(name, f"cannot sweep {name!r} for kind {self.kind!r}")
        s.validate()
        return s

    def validate(self):
        """Check the scenario invariants; raises ValidationError naming the field."""
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValidationError("T", f"must be positive and finite, got {self.T}")
        if not (0.0 < self.epsilon < 1.0):
            raise ValidationError("epsilon", f"must lie in (0, 1), got {self.epsilon}")
        if self.steps < MIN_STEPS:
            raise ValidationError("steps", f"must be >= {MIN_STEPS}, got {self.steps}")
        if self.gauge not in GAUGES:
            raise ValidationError("gauge", f"must be one of {GAUGES}, got {self.gauge!r}")
        if not (math.isfinite(self.tol) and self.tol > 0):
            raise ValidationError("tol", f"must be positive, got {self.tol}")
        bad = [o for o in self.outputs if o not in OUTPUTS]
        if bad:
            raise ValidationError("outputs", f"unknown entries {bad}; allowed {OUTPUTS}")
        if self.initial is not None and "basis_level" not in self.initial:
            re = np.asarray(self.initial["amplitudes_re"], dtype=float)
            im = np.asarray(self.initial.get("amplitudes_im", np.zeros_like(re)), dtype=float)
            if re.shape != im.shape:
                raise ValidationError("initial", "amplitudes_re and amplitudes_im differ in length")
            norm = math.sqrt(float(np.sum(re ** 2 + im ** 2)))
            if abs(norm - 1.0) > 1e-8:
                raise ValidationError("initial", f"amplitudes must be normalized, norm = {norm!r}")
        try:
            model = self.build_model()
        except ValidationError:
            raise
        except (AdicheckError, ValueError, KeyError, OSError) as exc:
            raise ValidationError("model", str(exc)) from exc
        lo, hi = model.domain
        if lo > 0.0 or hi < self.T * (1 - 1e-12):
            raise ValidationError("T", f"window [0, {self.T}] leaves model domain [{lo}, {hi}]")
        if model.dim < 2:
            raise ValidationError("model", "need at least two levels")
        self.initial_states(model.dim)
        return model

    def to_dict(self):
        model = {"kind": self.kind}
        if self.kind == "tabulated":
            model["path"] = self.path
            if self.params:
                model["params"] = dict(self.params)
        else:
            model["params"] = dict(self.params)
        out = {}
        if self.name is not None:
            out["name"] = self.name
        out.update({
            "model": model, "T": self.T, "epsilon": self.epsilon, "steps": self.steps,
            "gauge": self.gauge, "tol": self.tol,
        })
        if self.initial is not None:
            out["initial"] = dict(self.initial)
        out["outputs"] = list(self.outputs)
        return out


def _number(doc, key, kind=float, required=True, default=None):
    if key not in doc:
        if required:
            raise ParseError("missing required field", field=key)
        return default
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ParseError(f"expected a number, got {type(val).__name__}", field=key)
    if kind is int:
        if isinstance(val, float) and not val.is_integer():
            raise ParseError(f"expected an integer, got {val!r}", field=key)
        return int(val)
    return float(val)


def _matrix_field(params, key, required):
    if key not in params:
        if required:
            raise ParseError("missing required model parameter", field=f"model.params.{key}")
        return
    val = params[key]
    ok = isinstance(val, list) and val and all(
        isinstance(r, list) and len(r) == len(val)
        and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in r) for r in val)
    if not ok:
        raise ParseError("expected a square list-of-lists of numbers", field=f"model.params.{key}")


def _parse_model(doc):
    if "model" not in doc:
        raise ParseError("missing required field", field="model")
    m = doc["model"]
    if not isinstance(m, dict):
        raise ParseError("expected an object", field="model")
    kind = m.get("kind")
    if not isinstance(kind, str):
        raise ParseError("missing or non-string kind", field="model.kind")
    if kind not in models.KINDS:
        raise ValidationError("model.kind", f"unknown kind {kind!r}; expected one of {models.KINDS}")
    params = m.get("params", {})
    if not isinstance(params, dict):
        raise ParseError("expected an object", field="model.params")
    params = dict(params)
    allowed = MODEL_PARAMS[kind]
    unknown = set(params) - set(allowed)
    if unknown:
        raise ParseError(f"unknown parameters {sorted(unknown)}", field="model.params")
    for key, required in allowed.items():
        if key in SCALAR_PARAMS:
            if key in params:
                params[key] = _number(params, key)
                if not math.isfinite(params[key]):
                    raise ValidationError(f"model.params.{key}", "must be finite")
            elif required:
                raise ParseError("missing required model parameter", field=f"model.params.{key}")
        else:
            _matrix_field(params, key, required)
    path = m.get("path")
    if kind == "tabulated":
        if not isinstance(path, str):
            raise ParseError("tabulated models need a 'path' string", field="model.path")
    elif path is not None:
        raise ParseError("'path' is only valid for tabulated models", field="model.path")
    return kind, params, path


def _parse_initial(doc):
    init = doc.get("initial")
    if init is None:
        return None
    if not isinstance(init, dict):
        raise ParseError("expected an object", field="initial")
    if "basis_level" in init:
        if set(init) != {"basis_level"}:
            raise ParseError("basis_level cannot be combined with amplitudes", field="initial")
        return {"basis_level": _number(init, "basis_level", int)}
    if "amplitudes_re" not in init:
        raise ParseError("need basis_level or amplitudes_re", field="initial")
    out = {}
    for key in ("amplitudes_re", "amplitudes_im"):
        if key in init:
            vals = init[key]
            if not (isinstance(vals, list) and all(
                    isinstance(x, (int, float)) and not isinstance(x, bool) for x in vals)):
                raise ParseError("expected a list of numbers", field=f"initial.{key}")
            out[key] = [float(x) for x in vals]
    return out


def scenario_from_dict(doc, base_dir=None):
    """Build and validate a Scenario from an already-parsed JSON object."""
    if not isinstance(doc, dict):
        raise ParseError("top level must be a JSON object")
    unknown = set(doc) - TOP_KEYS
    if unknown:
        raise ParseError(f"unknown fields {sorted(unknown)}", field=sorted(unknown)[0])
    kind, params, path = _parse_model(doc)
    outputs = doc.get("outputs", list(DEFAULT_OUTPUTS))
    if not (isinstance(outputs, list) and all(isinstance(o, str) for o in outputs)):
        raise ParseError("expected a list of strings", field="outputs")
    gauge = doc.get("gauge", DEFAULT_GAUGE)
    if not isinstance(gauge, str):
        raise ParseError("expected a string", field="gauge")
    name = doc.get("name")
    s = Scenario(
        kind=kind, params=params,
        T=_number(doc, "T"), epsilon=_number(doc, "epsilon"),
        steps=_number(doc, "steps", int, False, DEFAULT_STEPS),
        gauge=gauge,
        tol=_number(doc, "tol", float, False, DEFAULT_TOL),
        initial=_parse_initial(doc),
        outputs=tuple(outputs),
        path=path,
        name=str(name) if name is not None else None,
        base_dir=Path(base_dir) if base_dir is not None else None,
    )
    s.validate()
    return s


def load_scenario(path):
    """
    Read and validate a scenario file.

    Raises
    ------
    OSError
        The file cannot be read.
    ParseError
        Malformed JSON (with line number) or a missing or mistyped field.
    ValidationError
        A field is well-formed but violates a scenario invariant.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    return scenario_from_dict(doc, base_dir=path.parent)
