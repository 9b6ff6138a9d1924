"""Run configuration: parsing, validation, defaults, and round-trip
emission.

Configs are TOML.  Models come either from a named preset or from
coefficient tables in the factored form x_i (1 - x_i) p(x), which is
tangent to every face by construction.  Raw (unfactored) coefficient
tables are accepted only behind ``unsafe_model = true`` and then pass
through a runtime tangency factorization that rejects violations.
"""

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - py310
    import tomli as tomllib

from dataclasses import dataclass, field

import numpy as np

from . import presets
from .errors import ParseError, ValidationError
from .model import Model1D, Model2D, model1d_from_raw, model2d_from_raw

COMMANDS = (
    "classify",
    "simulate",
    "cycle-analysis",
    "convergence",
    "hitting-verify",
    "calc-tests",
)

# every default lands in the output metadata so no setting is silent
DEFAULTS = {
    "dt": 1e-3,
    "horizon": 100.0,
    "runs": 200,
    "seed": 0,
    "threads": 1,
    "r": 0.15,
    "eps": 0.2,
    "r0": 0.05,
    "trap_radius": 1e-3,
    "tol_hyp": 1e-9,
    "n_paths": 120,
    "n_starts": 5,
    "n_grid": 250,
    "bins": 50,
}


@dataclass
class RunConfig:
    command: str
    model_spec: dict
    params: dict
    out: str = "out"
    seed: int = 0
    threads: int = 1
    defaults_used: dict = field(default_factory=dict, compare=False)

    def as_dict(self):
        return {
            "command": self.command,
            "seed": self.seed,
            "out": self.out,
            "threads": self.threads,
            "model": dict(self.model_spec),
            "params": dict(self.params),
        }


def parse_config(text):
    """Parse and validate a TOML run configuration."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"config is not valid TOML: {exc}") from exc
    command = raw.get("command", "")
    if command and command not in COMMANDS:
        raise ValidationError(f"unknown command '{command}' (field 'command')")
    model_spec = raw.get("model", {})
    if not isinstance(model_spec, dict):
        raise ValidationError("'model' must be a table")
    if "preset" not in model_spec and "dim" not in model_spec:
        raise ValidationError("model table needs 'preset' or 'dim' (field 'model')")
    params = dict(raw.get("params", {}))
    defaults_used = {}
    preset_meta = {}
    if "preset" in model_spec:
        name = model_spec["preset"]
        if name not in presets.PRESETS:
            raise ValidationError(f"unknown preset '{name}' (field 'model.preset')")
        preset_meta = {
            k: v for k, v in presets.get_preset(name).items() if k != "model"
        }
    for key, val in DEFAULTS.items():
        if key in ("seed", "threads"):
            continue
        if key not in params:
            params[key] = preset_meta.get(key, val)
            defaults_used[key] = params[key]
    _validate_params(params)
    cfg = RunConfig(
        command=command,
        model_spec=model_spec,
        params=params,
        out=raw.get("out", "out"),
        seed=int(raw.get("seed", DEFAULTS["seed"])),
        threads=int(raw.get("threads", DEFAULTS["threads"])),
        defaults_used=defaults_used,
    )
    if "seed" not in raw:
        cfg.defaults_used["seed"] = cfg.seed
    if "threads" not in raw:
        cfg.defaults_used["threads"] = cfg.threads
    return cfg


def _validate_params(params):
    for key in ("dt", "horizon"):
        v = params.get(key)
        if not isinstance(v, (int, float)) or v <= 0:
            raise ValidationError(f"'{key}' must be a positive number (field 'params.{key}')")
    r = params.get("r")
    if not (0 < r < 0.25):
        raise ValidationError("'r' must lie in (0, 1/4) (field 'params.r')")
    if "r_prime" in params and not (0 < params["r_prime"] < r):
        raise ValidationError("'r_prime' must lie in (0, r) (field 'params.r_prime')")
    eps = params.get("eps")
    if not (0 < eps < 1):
        raise ValidationError("'eps' must lie in (0, 1) (field 'params.eps')")
    if "delta" in params and not (0 < params["delta"] < 1):
        raise ValidationError("'delta' must lie in (0, 1) (field 'params.delta')")


def build_model(cfg):
    """Instantiate the model a config describes."""
    spec = cfg.model_spec
    if "preset" in spec:
        return presets.get_preset(spec["preset"])["model"]
    dim = spec["dim"]
    name = spec.get("name", "config_model")
    if spec.get("unsafe_model", False):
        if dim == 1:
            return model1d_from_raw(spec["b"], spec["s"], name=name)
        return model2d_from_raw(spec["b1"], spec["b2"], spec["s"], name=name)
    try:
        if dim == 1:
            return Model1D(spec["p"], spec["qs"], name=name)
        q = [[np.array(spec["q"][m][i]) for i in range(2)] for m in range(2)]
        return Model2D(np.array(spec["p1"]), np.array(spec["p2"]), q, name=name)
    except KeyError as exc:
        raise ValidationError(f"model table missing {exc} (field 'model')") from exc


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ValidationError(f"cannot emit value of type {type(v).__name__}")


def emit_config(cfg):
    """Serialize a RunConfig back to TOML; parse(emit(c)) == c."""
    lines = [
        f"command = {_toml_value(cfg.command)}",
        f"seed = {_toml_value(cfg.seed)}",
        f"out = {_toml_value(cfg.out)}",
        f"threads = {_toml_value(cfg.threads)}",
        "",
        "[model]",
    ]
    for k in sorted(cfg.model_spec):
        lines.append(f"{k} = {_toml_value(cfg.model_spec[k])}")
    lines += ["", "[params]"]
    for k in sorted(cfg.params):
        lines.append(f"{k} = {_toml_value(cfg.params[k])}")
    return "\n".join(lines) + "\n"
