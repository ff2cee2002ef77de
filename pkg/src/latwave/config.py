"""Strict INI experiment configuration.

Every section and key is checked against a schema; unknown names, duplicate
keys and unparsable values raise :class:`ConfigError` naming the file, section,
key and (when configparser knows it) the line.  ``effective`` holds the fully
defaulted configuration, which the command line echoes into its metadata.

Speeds accept a number or an expression ``cstar``, ``cstar+0.5``, ``cstar-0.2``.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .dispersion import Problem
from .kernels import make_kernel
from .models import make_builtin


class ConfigError(ValueError):
    pass


# section -> key -> (type, default); default None means "required or unset"
_MODEL_KEYS = {
    "host_vector": ("a", "b"),
    "fisher_kpp": (),
    "age_structured": ("delta", "p", "gamma", "alpha"),
    "nicholson": ("delta", "p", "a"),
}

SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "model": {"name": ("str", None)},
    "kernel": {"type": ("str", "dirac"), "alpha": ("float", None), "weights": ("str", None),
               "path": ("str", None), "tail_tol": ("float", 1e-10)},
    "problem": {"d": ("float", 1.0), "tau": ("float", 0.0)},
    "numerics": {"m": ("int", 10), "dt": ("float_or_auto", "auto"), "x_min": ("float_or_auto", "auto"),
                 "x_max": ("float_or_auto", "auto"), "T": ("float", 60.0),
                 "backend": ("str", "auto")},
    "analyze": {"c_list": ("floats", ""), "c_offsets": ("floats", "0.1, 0.5, 1.0"),
                "lambda_max": ("float_or_auto", "auto"), "n_lambda": ("int", 201)},
    "profile": {"c": ("speed", "cstar+0.5"), "T_relax": ("float", 400.0), "tol": ("float", 1e-10),
                "polish": ("bool", "true")},
    "simulate": {"initial": ("str", "front"), "c": ("speed", "cstar+0.5"), "step_at": ("float", 0.0),
                 "record_every": ("float", 0.25), "snapshot_every": ("float", 5.0),
                 "boundary": ("str", "equilibria")},
    "stability": {"c": ("speed", "cstar+0.5"), "c_list": ("speeds", ""), "tau_list": ("floats", ""),
                  "shape": ("str", "bump"), "amplitude": ("float", 0.1), "location": ("float", 0.0),
                  "rate": ("float_or_auto", "auto"), "delta": ("float", 0.5), "width": ("float", 1.0),
                  "fit_t0": ("float", 10.0), "fit_t1": ("float", 60.0),
                  "reference": ("str", "simulated"), "squeeze": ("bool", "true"),
                  "record_every": ("float", 0.25)},
    "green": {"b": ("float", 1.0), "tau": ("float", 1.0), "t_max": ("float", 10.0),
              "n_t": ("int", 101), "eps": ("float", 0.5), "times": ("floats", "0.1, 1, 10, 100"),
              "n_omega": ("int", 256)},
    "output": {"dir": ("str", "latwave_out"), "seed": ("int", 0)},
}

_SPEED = re.compile(r"^\s*cstar\s*(?:([+-])\s*([0-9.eE+-]+))?\s*$")


@dataclass(frozen=True)
class Speed:
    """A speed either absolute or relative to c*."""
    offset: float
    relative: bool

    def resolve(self, c_star: float) -> float:
        return c_star + self.offset if self.relative else self.offset

    def __str__(self) -> str:
        if not self.relative:
            return repr(self.offset)
        if self.offset == 0:
            return "cstar"
        return f"cstar{'+' if self.offset > 0 else '-'}{abs(self.offset)!r}"


def parse_speed(text: str) -> Speed:
    m = _SPEED.match(text)
    if m:
        off = 0.0 if m.group(2) is None else float(m.group(2))
        return Speed(-off if m.group(1) == "-" else off, True)
    return Speed(float(text), False)


def _convert(kind: str, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind == "str":
            return raw
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ValueError(raw)
            return low in ("true", "yes", "1", "on")
        if kind == "float_or_auto":
            return None if raw.lower() == "auto" else float(raw)
        if kind == "floats":
            return [float(x) for x in raw.split(",") if x.strip()]
        if kind == "speed":
            return parse_speed(raw)
        if kind == "speeds":
            return [parse_speed(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from None
    raise AssertionError(kind)


def _render(kind: str, value) -> str:
    if value is None:
        return "auto"
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("floats",):
        return ", ".join(repr(float(v)) for v in value)
    if kind == "speeds":
        return ", ".join(str(v) for v in value)
    if kind in ("float", "float_or_auto"):
        return repr(float(value))
    return str(value)


@dataclass
class ExperimentConfig:
    model_name: str
    model_params: dict[str, float]
    sections: dict[str, dict]
    source: str = "<defaults>"
    raw_model_keys: tuple = field(default=())

    def __getitem__(self, section: str) -> dict:
        return self.sections[section]

    @property
    def seed(self) -> int:
        return self.sections["output"]["seed"]

    def build_problem(self, tau: float | None = None) -> Problem:
        tau = self["problem"]["tau"] if tau is None else float(tau)
        params = dict(self.model_params)
        if self.model_name == "age_structured":
            params["tau"] = tau
        try:
            model = make_builtin(self.model_name, params)
            kern = self._kernel()
            return Problem(model, kern, d=self["problem"]["d"], tau=tau)
        except ConfigError:
            raise
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"{self.source}: {exc}") from exc

    def _kernel(self):
        k = self["kernel"]
        spec: dict = {"type": k["type"]}
        if k["type"] == "gaussian":
            if k["alpha"] is None:
                raise ConfigError(f"{self.source}: [kernel] alpha is required for type gaussian")
            spec["alpha"] = k["alpha"]
        elif k["type"] == "lattice_sum":
            if not k["weights"]:
                raise ConfigError(f"{self.source}: [kernel] weights is required for type lattice_sum")
            w = {}
            for item in k["weights"].split(","):
                try:
                    j, val = item.split(":")
                    w[int(j)] = float(val)
                except ValueError:
                    raise ConfigError(f"{self.source}: [kernel] weights: bad entry {item.strip()!r} "
                                      "(expected offset:weight)") from None
            spec["weights"] = w
        elif k["type"] == "tabulated":
            if not k["path"]:
                raise ConfigError(f"{self.source}: [kernel] path is required for type tabulated")
            spec["path"] = k["path"]
        return make_kernel(spec)

    def effective(self) -> dict[str, dict[str, str]]:
        """Post-default configuration as strings, re-loadable with :func:`loads`."""
        out = {"model": {"name": self.model_name}}
        out["model"].update({k: repr(float(v)) for k, v in sorted(self.model_params.items())})
        for sec, keys in SCHEMA.items():
            if sec == "model":
                continue
            out[sec] = {}
            for key, (kind, _) in keys.items():
                val = self.sections[sec][key]
                if val is None and kind in ("str", "float"):
                    continue
                out[sec][key] = _render(kind, val)
        return out

    def dumps(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp.read_dict(self.effective())
        import io
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def loads(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True,
                                   inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep case, e.g. T
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown = [s for s in cp.sections() if s not in SCHEMA]
    if unknown:
        raise ConfigError(f"{source}: unknown section [{unknown[0]}] "
                          f"(expected one of {', '.join(SCHEMA)})")
    if not cp.has_section("model") or not cp.has_option("model", "name"):
        raise ConfigError(f"{source}: [model] name is required")
    name = cp.get("model", "name").strip()
    if name not in _MODEL_KEYS:
        raise ConfigError(f"{source}: [model] name: unknown model {name!r} "
                          f"(expected one of {', '.join(_MODEL_KEYS)})")
    params = {}
    for key, raw in cp.items("model"):
        if key == "name":
            continue
        if key not in _MODEL_KEYS[name]:
            raise ConfigError(f"{source}: [model] unknown key {key!r} for model {name} "
                              f"(allowed: {', '.join(_MODEL_KEYS[name]) or 'none'})")
        params[key] = _convert("float", raw, f"{source}: [model] {key}")
    sections: dict[str, dict] = {}
    for sec, keys in SCHEMA.items():
        if sec == "model":
            continue
        given = dict(cp.items(sec)) if cp.has_section(sec) else {}
        for key in given:
            if key not in keys:
                raise ConfigError(f"{source}: [{sec}] unknown key {key!r} "
                                  f"(allowed: {', '.join(keys)})")
        vals = {}
        for key, (kind, default) in keys.items():
            where = f"{source}: [{sec}] {key}"
            if key in given:
                vals[key] = _convert(kind, given[key], where)
            elif default is None:
                vals[key] = None
            else:
                vals[key] = _convert(kind, str(default), where)
        sections[sec] = vals
    _check(sections, source)
    return ExperimentConfig(name, params, sections, source)


def _check(s: dict, source: str) -> None:
    def bad(sec, key, why):
        raise ConfigError(f"{source}: [{sec}] {key}: {why}")
    if s["numerics"]["m"] < 1:
        bad("numerics", "m", "must be a positive integer")
    if s["numerics"]["backend"] not in ("auto", "python", "cython"):
        bad("numerics", "backend", "expected auto, python or cython")
    if s["kernel"]["type"] not in ("dirac", "gaussian", "lattice_sum", "tabulated"):
        bad("kernel", "type", "expected dirac, gaussian, lattice_sum or tabulated")
    if s["stability"]["shape"] not in ("bump", "shift", "left_decaying"):
        bad("stability", "shape", "expected bump, shift or left_decaying")
    if s["stability"]["reference"] not in ("simulated", "profile"):
        bad("stability", "reference", "expected simulated or profile")
    if not s["stability"]["fit_t0"] < s["stability"]["fit_t1"]:
        bad("stability", "fit_t1", "must exceed fit_t0")
    if s["simulate"]["initial"] not in ("front", "step"):
        bad("simulate", "initial", "expected front or step")
    if s["simulate"]["boundary"] not in ("equilibria", "hold"):
        bad("simulate", "boundary", "expected equilibria or hold")
    if not 0 < s["green"]["eps"] < 1:
        bad("green", "eps", "must lie in (0, 1)")


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return loads(text, source=str(path))
