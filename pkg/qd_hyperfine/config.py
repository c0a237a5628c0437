"""Run configuration: embedded defaults, JSON loading and validation.
"""
import copy
import json
import numbers
import pathlib

import attr

from .electronic import SIGMA_MODES
from .geometry import DISORDER_MODES, DisorderSpec, DotGeometry
from .slater_koster import TIERS
from .solver import METHODS
from .spinbath import SOURCES
from .utils import QdHyperfineException

EXAMPLE_CONFIG = pathlib.Path(__file__).parent / 'data' / 'example_config.json'

DEFAULTS = {
    "seed": 0,
    "output_dir": "qd_hyperfine_out",
    "database": None,
    "geometry": {
        "base_diameter": 15.0,
        "height": 6.0,
        "dot_material": "InAs",
        "buffer_material": "GaAs",
        "margin_lateral": 12.0,
        "margin_vertical": 10.0,
        "wetting_layer": False,
    },
    "disorder": {
        "mode": "none",
        "alloy_fraction": 0.0,
        "interface_thickness": 1.25,
        "isotope_sampling": False,
    },
    "strain": {
        "enabled": True,
        "tolerance": 1e-6,
        "max_iter": 20000,
        "periodic": False,
    },
    "electronic": {
        "tier": "sp3s*",
        "parameters": None,
    },
    "solver": {
        "sigma": "midgap",
        "k": 2,
        "tol": 1e-6,
        "method": "folded",
        "max_states": 64,
    },
    "hyperfine": {
        "reach_fraction": 0.01,
        "profile_bin": None,
    },
    "bath": {
        "sources": list(SOURCES),
        "mc_samples": 1000,
        "workers": 1,
        "g_e": 2.0,
        "size_delta_diameter": 1.0,
        "size_delta_height": 0.5,
        "alloy_fraction": 0.5,
        "alloy_realizations": 3,
        "interface_thickness": 1.25,
    },
    "budget": {
        "exchange": 3e-4,
        # null: taken from the solved orbital spacing
        "orbital_spacing": None,
        # null: Delta E of `zeeman_source'
        "zeeman_difference": None,
        "zeeman_source": "random-spins",
        "static_field": 1.0,
        "esr_amplitude": 1e-3,
        "field_parallel": 0.0,
        "field_perpendicular": 0.01,
        # null: Delta B_N of `zeeman_source'
        "drift_parallel": None,
        "drift_perpendicular": None,
        "threshold": 1e-4,
    },
}

SECTIONS = tuple(k for k, v in DEFAULTS.items() if isinstance(v, dict))


class ConfigException(QdHyperfineException):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("Invalid configuration:\n  " +
                         "\n  ".join(self.errors))


@attr.s(frozen=True)
class RunConfig:
    seed = attr.ib()
    output_dir = attr.ib()
    database = attr.ib()
    geometry = attr.ib()
    disorder = attr.ib()
    strain = attr.ib()
    electronic = attr.ib()
    solver = attr.ib()
    hyperfine = attr.ib()
    bath = attr.ib()
    budget = attr.ib()
    # the merged JSON this config was built from
    raw = attr.ib(repr=False, eq=False)
    base_dir = attr.ib(default=None)

    def dot_geometry(self, base_diameter=None, height=None) -> DotGeometry:
        g = dict(self.geometry)
        if base_diameter is not None:
            g["base_diameter"] = base_diameter
        if height is not None:
            g["height"] = height
        return DotGeometry(**g)

    def disorder_spec(self) -> DisorderSpec:
        return DisorderSpec(seed=self.seed, **self.disorder)

    def resolve(self, path):
        if path is None:
            return None
        path = pathlib.Path(path)
        if not path.is_absolute() and self.base_dir is not None:
            path = pathlib.Path(self.base_dir) / path
        return path

    @property
    def parameters_path(self):
        return self.resolve(self.electronic["parameters"])

    @property
    def database_path(self):
        return self.resolve(self.database)


def defaults():
    return copy.deepcopy(DEFAULTS)


def merge(user):
    """User values over the defaults, section by section.

    Unknown keys are kept so that `validate' can report them.
    """
    cfg = defaults()
    for key, value in user.items():
        if key in SECTIONS and isinstance(value, dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    return cfg


def load_config(path):
    path = pathlib.Path(path)
    try:
        with open(str(path)) as fin:
            user = json.load(fin)
    except ValueError as e:
        raise ConfigException(["{}: not valid JSON: {}".format(path, e)])
    if not isinstance(user, dict):
        raise ConfigException(["{}: top level must be an object".format(path)])
    return validate(merge(user), base_dir=path.parent)


def _is_real(value):
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


def _number(errors, name, value, low=None, high=None, strict_low=False,
            integer=False):
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind):
        errors.append("{}: expected {}, got {!r}".format(
            name, "an integer" if integer else "a number", value))
        return False
    if low is not None and (value < low or (strict_low and value == low)):
        errors.append("{}: must be {} {}, got {}".format(
            name, '>' if strict_low else '>=', low, value))
        return False
    if high is not None and value > high:
        errors.append("{}: must be <= {}, got {}".format(name, high, value))
        return False
    return True


def _choice(errors, name, value, choices):
    if value not in choices:
        errors.append("{}: expected one of {}, got {!r}".format(
            name, list(choices), value))


def _check_keys(errors, cfg):
    for key in cfg:
        if key not in DEFAULTS:
            errors.append("unknown key {!r}".format(key))
    for section in SECTIONS:
        value = cfg.get(section)
        if not isinstance(value, dict):
            errors.append("{}: expected an object".format(section))
            continue
        for key in value:
            if key not in DEFAULTS[section]:
                errors.append("unknown key {}.{}".format(section, key))


def _check_geometry(errors, g):
    ok = _number(errors, "geometry.base_diameter", g["base_diameter"], 0)
    ok &= _number(errors, "geometry.height", g["height"], 0)
    if ok and g["height"] > g["base_diameter"]:
        errors.append("geometry.height: must not exceed base_diameter")
        ok = False
    _number(errors, "geometry.margin_lateral", g["margin_lateral"], 0)
    _number(errors, "geometry.margin_vertical", g["margin_vertical"], 0)
    return ok


def _check_size_variants(errors, g, b):
    """Both size-distribution geometries must be valid non-empty lenses.
    """
    keys = (g["base_diameter"], g["height"], b["size_delta_diameter"],
            b["size_delta_height"])
    if not all(_is_real(v) for v in keys):
        return
    diameter, height, dd, dh = keys
    for name, sign in (('size-minus', -1), ('size-plus', 1)):
        d_var, h_var = diameter + sign * dd, height + sign * dh
        label = "bath.size_delta_diameter/size_delta_height"
        if d_var <= 0 or h_var <= 0:
            errors.append("{}: {} dot {:g}x{:g} nm is empty"
                          .format(label, name, d_var, h_var))
        elif h_var > d_var:
            errors.append("{}: {} dot height {:g} exceeds its base "
                          "diameter {:g}".format(label, name, h_var, d_var))


def _check_file(errors, name, path):
    if path is not None and not pathlib.Path(path).is_file():
        errors.append("{}: file {} does not exist".format(name, path))


def validate(cfg, base_dir=None) -> RunConfig:
    """Check every field and cross-field constraint; raise with all errors.
    """
    errors = []
    _check_keys(errors, cfg)
    if errors:
        raise ConfigException(errors)

    _number(errors, "seed", cfg["seed"], 0, integer=True)
    if not isinstance(cfg["output_dir"], str) or not cfg["output_dir"]:
        errors.append("output_dir: expected a non-empty path")

    geometry_ok = _check_geometry(errors, cfg["geometry"])

    d = cfg["disorder"]
    _choice(errors, "disorder.mode", d["mode"], DISORDER_MODES)
    _number(errors, "disorder.alloy_fraction", d["alloy_fraction"], 0, 1)
    _number(errors, "disorder.interface_thickness", d["interface_thickness"],
            0)

    s = cfg["strain"]
    _number(errors, "strain.tolerance", s["tolerance"], 0, strict_low=True)
    _number(errors, "strain.max_iter", s["max_iter"], 1, integer=True)

    e = cfg["electronic"]
    _choice(errors, "electronic.tier", e["tier"], TIERS)
    if e["tier"] == 'sp3d5s*' and not e["parameters"]:
        errors.append("electronic.parameters: tier sp3d5s* requires a "
                      "parameter file")

    sv = cfg["solver"]
    if not _is_real(sv["sigma"]):
        _choice(errors, "solver.sigma", sv["sigma"], SIGMA_MODES)
    _number(errors, "solver.k", sv["k"], 1, integer=True)
    _number(errors, "solver.tol", sv["tol"], 0, strict_low=True)
    _choice(errors, "solver.method", sv["method"], METHODS)
    _number(errors, "solver.max_states", sv["max_states"], 2, integer=True)

    h = cfg["hyperfine"]
    if _number(errors, "hyperfine.reach_fraction", h["reach_fraction"], 0,
               strict_low=True) and h["reach_fraction"] >= 1:
        errors.append("hyperfine.reach_fraction: must be < 1")
    if h["profile_bin"] is not None:
        _number(errors, "hyperfine.profile_bin", h["profile_bin"], 0,
                strict_low=True)

    b = cfg["bath"]
    if not isinstance(b["sources"], list) or not b["sources"]:
        errors.append("bath.sources: expected a non-empty list")
    else:
        for src in b["sources"]:
            _choice(errors, "bath.sources", src, SOURCES)
    _number(errors, "bath.mc_samples", b["mc_samples"], 2, integer=True)
    _number(errors, "bath.workers", b["workers"], 1, integer=True)
    _number(errors, "bath.g_e", b["g_e"], 0, strict_low=True)
    _number(errors, "bath.size_delta_diameter", b["size_delta_diameter"], 0,
            strict_low=True)
    _number(errors, "bath.size_delta_height", b["size_delta_height"], 0)
    _number(errors, "bath.alloy_fraction", b["alloy_fraction"], 0, 1)
    _number(errors, "bath.alloy_realizations", b["alloy_realizations"], 2,
            integer=True)
    _number(errors, "bath.interface_thickness", b["interface_thickness"], 0,
            strict_low=True)
    if geometry_ok and isinstance(b["sources"], list) and \
            'size-distribution' in b["sources"]:
        _check_size_variants(errors, cfg["geometry"], b)

    bu = cfg["budget"]
    _number(errors, "budget.exchange", bu["exchange"], 0, strict_low=True)
    for key in ("orbital_spacing", "zeeman_difference", "drift_parallel",
                "drift_perpendicular"):
        if bu[key] is not None:
            _number(errors, "budget." + key, bu[key], 0)
    _choice(errors, "budget.zeeman_source", bu["zeeman_source"], SOURCES)
    _number(errors, "budget.static_field", bu["static_field"], 0,
            strict_low=True)
    _number(errors, "budget.esr_amplitude", bu["esr_amplitude"], 0,
            strict_low=True)
    _number(errors, "budget.field_parallel", bu["field_parallel"])
    _number(errors, "budget.field_perpendicular", bu["field_perpendicular"])
    if _number(errors, "budget.threshold", bu["threshold"], 0,
               strict_low=True) and bu["threshold"] >= 1:
        errors.append("budget.threshold: must be < 1")
    if bu["orbital_spacing"] is None and isinstance(sv["k"], int) \
            and sv["k"] < 2:
        errors.append("solver.k: at least 2 states are needed to derive "
                      "budget.orbital_spacing")
    if bu["zeeman_difference"] is None and \
            isinstance(b["sources"], list) and \
            bu["zeeman_source"] not in b["sources"]:
        errors.append("budget.zeeman_source: {!r} is not among bath.sources"
                      .format(bu["zeeman_source"]))

    run = RunConfig(
        seed=cfg["seed"], output_dir=cfg["output_dir"],
        database=cfg["database"], geometry=dict(cfg["geometry"]),
        disorder=dict(d), strain=dict(s), electronic=dict(e),
        solver=dict(sv), hyperfine=dict(h), bath=dict(b), budget=dict(bu),
        raw=copy.deepcopy(cfg),
        base_dir=str(base_dir) if base_dir is not None else None)
    _check_file(errors, "database", run.database_path)
    _check_file(errors, "electronic.parameters", run.parameters_path)
    if errors:
        raise ConfigException(errors)
    return run


def load_example():
    return load_config(EXAMPLE_CONFIG)
