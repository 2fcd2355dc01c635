"""TOML experiment files: schema, defaults, environment overrides and validation.

Every key below is the complete vocabulary; anything else is rejected with the
offending key and, when it came from a file, its line number. Environment
variables ``CDPFLOW_<SECTION>__<KEY>`` override file values, e.g.
``CDPFLOW_SOLVER__DT=5e-5``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import re
import sys
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .constitutive import ExponentFn, StressModel
from .energies import STRAIN_EXPONENT_3D, default_q
from .errors import CdpflowError, ConfigError
from .solver import (SCHEMES, SingleModeForcing, SolverConfig, TimeRampForcing,
                     ZeroForcing)
from .torus import (GridSpec, ScalarField, VectorField, make_grid, random_scalar,
                    random_solenoidal)

ENV_PREFIX = "CDPFLOW_"
_REQUIRED = object()

# section -> key -> default (``_REQUIRED`` marks mandatory keys, ``None`` "derived")
SCHEMA: dict[str, dict[str, Any]] = {
    "experiment": {"name": "unnamed", "seed": 0, "analysis": False, "report_every": 10,
                   "snapshot_every": 0},
    "grid": {"dim": _REQUIRED, "n": _REQUIRED, "K": _REQUIRED},
    "stress": {"nu0": 0.05, "shape": None, "p_minus": _REQUIRED, "p_plus": _REQUIRED,
               "c_mid": 0.15, "slope": 40.0, "a": None, "b": 0.0},
    "solver": {"dt": 1e-3, "t_end": _REQUIRED, "q": None, "delta": 0.05, "scheme": "imex_euler",
               "blowup_threshold": 1e8, "cfl": 0.25, "max_substeps": 64,
               "strain_exponent": STRAIN_EXPONENT_3D},
    "forcing": {"kind": "zero", "k": None, "amplitude": 0.0, "component": 0, "rate": 0.0},
    "initial": {"velocity": "random", "velocity_amplitude": 1.0, "velocity_kmax": 3,
                "concentration": "random", "c_mean": 0.15, "c_amplitude": 0.02, "c_kmax": 2},
    "twin": {"eps": [1e-4, 1e-5, 1e-6]},
    "sweep": {"key": None, "values": []},
    "verify": {"samples": 100_000, "magnitude_cap": 10.0, "lemma_l": 1.6},
}

SHAPES = ("constant", "logistic", "affine")
FORCING_KINDS = ("zero", "single_mode", "ramp")
VELOCITY_KINDS = ("zero", "shear", "random", "taylor_green")
CONCENTRATION_KINDS = ("constant", "cosine", "random")

PRESET_NAMES = ("newtonian-decay", "heat-kernel", "shear-thinning-3d", "shear-thinning-2d",
                "twin-contraction", "galerkin-refine")


@dataclass(frozen=True, eq=False)
class Experiment:
    """A resolved configuration: the solver config plus the experiment description."""

    resolved: dict
    solver: SolverConfig
    warnings: tuple[str, ...] = ()

    @property
    def seed(self) -> int:
        return int(self.resolved["experiment"]["seed"])

    @property
    def config_hash(self) -> str:
        return config_hash(self.resolved)

    def section(self, name: str) -> dict:
        return self.resolved[name]

    def initial_fields(self, grid: Optional[GridSpec] = None) -> tuple[VectorField, ScalarField]:
        return initial_fields(self.resolved["initial"], grid or self.solver.grid, self.seed)

    def with_value(self, dotted: str, value) -> "Experiment":
        raw = copy.deepcopy(self.resolved)
        sec, key = dotted.split(".", 1)
        raw[sec][key] = value
        return resolve(raw)


def config_hash(resolved: Mapping) -> str:
    """SHA-256 of the canonical JSON form of a resolved configuration."""
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(blob.encode()).hexdigest()


def _line_of(text: str, section: str, key: Optional[str]) -> Optional[int]:
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section and re.match(rf"^{re.escape(key)}\s*=", s):
            return i
    return None


def _parse_env_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def env_overrides(environ: Mapping[str, str]) -> list[tuple[str, str, Any]]:
    out = []
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        sec, key = name[len(ENV_PREFIX):].split("__", 1)
        sec = sec.lower()
        lookup = {k.lower(): k for k in SCHEMA.get(sec, {})}
        out.append((sec, lookup.get(key.lower(), key.lower()), _parse_env_value(value)))
    return out


def load_text(text: str, source: str = "<string>", environ: Optional[Mapping[str, str]] = None) -> Experiment:
    """Parse TOML text, apply environment overrides, validate."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"{source}: malformed configuration: {exc}",
                          line=int(m.group(1)) if m else None) from None
    for sec, body in raw.items():
        if sec not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{sec}]", key=sec, line=_line_of(text, sec, None))
        if not isinstance(body, dict):
            raise ConfigError(f"{source}: '{sec}' must be a section", key=sec, line=_line_of(text, sec, None))
        for key in body:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{source}: unknown key {sec}.{key}", key=f"{sec}.{key}",
                                  line=_line_of(text, sec, key))
    for sec, key, value in env_overrides(os.environ if environ is None else environ):
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError(f"environment override for unknown key {sec}.{key}", key=f"{sec}.{key}")
        raw.setdefault(sec, {})[key] = value
    try:
        return resolve(raw)
    except ConfigError as exc:
        if exc.line is None and exc.key and "." in exc.key:
            sec, key = exc.key.split(".", 1)
            exc.line = _line_of(text, sec, key)
        raise


def load(path_or_preset: str | Path, environ: Optional[Mapping[str, str]] = None) -> Experiment:
    """Load a configuration file, or a shipped preset by name."""
    p = Path(path_or_preset)
    if p.is_file():
        return load_text(p.read_text(), str(p), environ)
    if str(path_or_preset) in PRESET_NAMES:
        return load_text(preset_text(str(path_or_preset)), str(path_or_preset), environ)
    raise ConfigError(f"no such configuration file or preset: {path_or_preset}")


def preset_text(name: str) -> str:
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    return resources.files("cdpflow.presets").joinpath(f"{name}.toml").read_text()


def _fill_defaults(raw: Mapping) -> dict:
    out = {}
    for sec, keys in SCHEMA.items():
        body = dict(raw.get(sec, {}))
        for key, default in keys.items():
            if key not in body:
                if default is _REQUIRED:
                    raise ConfigError(f"missing required key {sec}.{key}", key=f"{sec}.{key}")
                body[key] = copy.deepcopy(default)
        out[sec] = body
    return out


def _num(sec, key, value, kind=float):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is int:
        ok = ok and float(value).is_integer()
    if not ok or not math.isfinite(float(value)):
        raise ConfigError(f"{sec}.{key} must be a finite {kind.__name__}, got {value!r}", key=f"{sec}.{key}")
    return kind(value)


def _choice(sec, key, value, options):
    if value not in options:
        raise ConfigError(f"{sec}.{key} must be one of {', '.join(options)}, got {value!r}", key=f"{sec}.{key}")
    return value


def _exponent(st: dict) -> ExponentFn:
    pm, pp = st["p_minus"], st["p_plus"]
    shape = st["shape"] or ("constant" if pm == pp else "logistic")
    st["shape"] = _choice("stress", "shape", shape, SHAPES)
    if shape == "constant":
        if pm != pp:
            raise ConfigError("constant exponent needs p_minus == p_plus", key="stress.p_plus")
        return ExponentFn.constant(pm)
    if shape == "logistic":
        return ExponentFn.logistic(pm, pp, st["c_mid"], st["slope"])
    if st["a"] is None:
        raise ConfigError("affine exponent needs stress.a", key="stress.a")
    return ExponentFn.affine(st["a"], st["b"], pm, pp)


def resolve(raw: Mapping) -> Experiment:
    """Apply defaults and validate a raw nested mapping."""
    cfg = _fill_defaults(raw)
    notes: list[str] = []
    ex, gr, st, so, fo, ini = (cfg[s] for s in ("experiment", "grid", "stress", "solver", "forcing", "initial"))
    for key in ("dim", "n", "K"):
        gr[key] = _num("grid", key, gr[key], int)
    for key in ("seed", "report_every", "snapshot_every"):
        ex[key] = _num("experiment", key, ex[key], int)
    if ex["seed"] < 0:
        raise ConfigError("experiment.seed must be nonnegative", key="experiment.seed")
    for key in ("nu0", "p_minus", "p_plus", "c_mid", "slope", "b"):
        st[key] = _num("stress", key, st[key])
    for key in ("dt", "t_end", "delta", "blowup_threshold", "cfl", "strain_exponent"):
        so[key] = _num("solver", key, so[key])
    so["max_substeps"] = _num("solver", "max_substeps", so["max_substeps"], int)
    so["scheme"] = _choice("solver", "scheme", so["scheme"], SCHEMES)
    fo["kind"] = _choice("forcing", "kind", fo["kind"], FORCING_KINDS)
    ini["velocity"] = _choice("initial", "velocity", ini["velocity"], VELOCITY_KINDS)
    ini["concentration"] = _choice("initial", "concentration", ini["concentration"], CONCENTRATION_KINDS)
    try:
        grid = make_grid(gr["dim"], gr["n"], gr["K"])
    except CdpflowError as exc:
        raise ConfigError(str(exc), key="grid.K") from None
    if so["q"] is None:
        so["q"] = default_q(grid.dim)
    so["q"] = _num("solver", "q", so["q"])
    if grid.dim == 3 and st["p_minus"] <= 7.0 / 5.0:
        msg = f"p_minus={st['p_minus']} is at or below 7/5, outside the 3D existence regime"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    try:
        exponent = _exponent(st)
    except CdpflowError as exc:
        raise ConfigError(str(exc), key="stress.p_minus") from None
    try:
        cfg_solver = SolverConfig(
            grid=grid, stress=StressModel(st["nu0"], exponent), dt=so["dt"], t_end=so["t_end"],
            q=so["q"], delta=so["delta"], forcing=_forcing(fo, grid), scheme=so["scheme"],
            blowup_threshold=so["blowup_threshold"], strain_exponent=so["strain_exponent"],
            cfl=so["cfl"], max_substeps=so["max_substeps"], analysis=bool(ex["analysis"]))
    except ConfigError:
        raise
    except CdpflowError as exc:
        raise ConfigError(str(exc), key=_blame(str(exc))) from None
    eps = cfg["twin"]["eps"]
    cfg["twin"]["eps"] = [_num("twin", "eps", e) for e in (eps if isinstance(eps, list) else [eps])]
    sw = cfg["sweep"]
    if sw["key"] is not None:
        if not isinstance(sw["key"], str) or "." not in sw["key"]:
            raise ConfigError("sweep.key must look like 'section.key'", key="sweep.key")
        sec, key = sw["key"].split(".", 1)
        if sec not in SCHEMA or key not in SCHEMA[sec] or sec == "sweep":
            raise ConfigError(f"sweep.key names unknown key {sw['key']}", key="sweep.key")
        if not isinstance(sw["values"], list) or not sw["values"]:
            raise ConfigError("sweep.values must be a nonempty list", key="sweep.values")
    vf = cfg["verify"]
    vf["samples"] = _num("verify", "samples", vf["samples"], int)
    return Experiment(cfg, cfg_solver, tuple(notes))


_BLAME = (("monitors need q", "solver.q"), ("dt and t_end", "solver.dt"), ("mollification", "solver.delta"),
          ("p_plus=", "stress.p_plus"), ("strain exponent", "solver.strain_exponent"),
          ("nu0", "stress.nu0"), ("forcing", "forcing.k"))


def _blame(message: str) -> Optional[str]:
    return next((key for needle, key in _BLAME if needle in message), None)


def _forcing(fo: dict, grid: GridSpec):
    if fo["kind"] == "zero":
        return ZeroForcing()
    if fo["k"] is None:
        raise ConfigError("forcing.k is required for non-zero forcing", key="forcing.k")
    k = tuple(_num("forcing", "k", kj, int) for kj in fo["k"])
    base = SingleModeForcing(k, _num("forcing", "amplitude", fo["amplitude"]),
                             _num("forcing", "component", fo["component"], int))
    try:
        base.validate(grid, 0.0)
    except CdpflowError as exc:
        raise ConfigError(str(exc), key="forcing.k") from None
    if fo["kind"] == "single_mode":
        return base
    return TimeRampForcing(base, _num("forcing", "rate", fo["rate"]))


def initial_fields(ini: Mapping, grid: GridSpec, seed: int) -> tuple[VectorField, ScalarField]:
    """Initial velocity and concentration described by an ``[initial]`` section."""
    rng = np.random.default_rng(seed)
    x = grid.coords()
    A = float(ini["velocity_amplitude"])
    v = np.zeros((grid.dim,) + grid.shape)
    kind = ini["velocity"]
    if kind == "shear":
        v[0] = A * np.sin(2.0 * np.pi * x[1])
    elif kind == "taylor_green":
        v[0] = A * np.sin(2.0 * np.pi * x[0]) * np.cos(2.0 * np.pi * x[1])
        v[1] = -A * np.cos(2.0 * np.pi * x[0]) * np.sin(2.0 * np.pi * x[1])
    elif kind == "random":
        kmax = min(int(ini["velocity_kmax"]), grid.n // 3)
        v = A * random_solenoidal(grid, rng, kmax=kmax).values
    kind = ini["concentration"]
    c = np.full(grid.shape, float(ini["c_mean"]))
    if kind == "cosine":
        c = c + float(ini["c_amplitude"]) * np.cos(2.0 * np.pi * x[0])
    elif kind == "random":
        kmax = min(int(ini["c_kmax"]), grid.n // 3)
        c = c + float(ini["c_amplitude"]) * random_scalar(grid, rng, kmax=kmax).values
    return VectorField(grid, v), ScalarField(grid, c)


def dump_toml(resolved: Mapping) -> str:
    """Serialise a resolved configuration back to TOML (``None`` values are omitted)."""
    lines = []
    for sec, body in resolved.items():
        lines.append(f"[{sec}]")
        for key, value in body.items():
            if value is not None:
                lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return str(v)
