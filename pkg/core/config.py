"""Experiment configuration for demirage.

Loads a nested TOML file (tables shape, physics, discretization, source,
imaging, localize, sweeps, run). CLI flags override config file values.
Config file overrides defaults. Unknown keys are rejected.
"""

import copy
import tomllib

from core.errors import ConfigError
from core.geometry import CURVE_KINDS, SHAPE_DEFAULTS


# SI units unless the key says nm.
DEFAULTS = {
    "shape": {
        "kind": "diamond",
        "delta": 1e-8,
        "center": [0.0, 0.0],
    },
    "physics": {
        "omega_p": 2e15,
        "tau": 1e-14,
        "eps0": 8.854187128e-12,
        "mu0": 1.25663706144e-6,
        "eps_m": None,       # None: vacuum background, eps_m = eps0
        "mu_m": None,        # None: mu_m = mu0
        "omega_range": [0.2, 0.99],  # resonance search, in units of omega_p
    },
    "discretization": {
        "M": 256,
        "n_sensors": 256,
        "radius_factor": 3000.0,   # R = radius_factor * delta
        "n_eig": 16,
    },
    "source": {
        "position_nm": [18.65, 16.65],
        "moment": [-1.0, 1.0],     # normalized on load
        "omega": 1.505e15,         # rad/s, or "resonance:n"
    },
    "imaging": {
        "window_center_nm": [0.0, 0.0],
        "window_nm": 300.0,
        "grid": 61,
        "guard_nm": 0.0,
    },
    "localize": {
        "n_modes": 6,
        "modes": [],               # explicit mode subset; overrides n_modes when set
        "amplitudes": "modal",     # "modal": alpha_n tied to the dipole, "free": fitted independently
        "multistart": 5,
        "max_evaluations": 500,
        "xatol_nm": 1e-3,
    },
    "sweeps": {
        "offsets_nm": [0.0, 5.0, 10.0, 20.0, 30.0, 50.0, 75.0, 100.0],
        "sigma0": [0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5],
        "realizations": 100,
        "n_modes_list": [2, 3, 4, 5, 6, 7],
        "gallery_modes": 6,
        "gallery_grid": 81,
        "gallery_extent": 6.0,     # half width of mode-field grids, in units of delta
    },
    "run": {
        "experiment": "mirage",
        "out": "out",
        "seed": 0,
        "threads": 1,
        "cache_dir": "",
        "data": "",               # far-field CSV read by the image and localize primitives
    },
}

EXPERIMENTS = ("modes", "mirage", "sweep-distance", "sweep-noise", "mode-table",
               "forward", "image", "localize")
AMPLITUDE_MODELS = ("modal", "free")


def _normalize_keys(obj):
    """TOML allows - or _ in keys; internally always _."""
    if isinstance(obj, dict):
        return {str(k).replace("-", "_"): _normalize_keys(v) for k, v in obj.items()}
    return obj


def _merge(base: dict, override: dict, path: str = "") -> dict:
    result = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"Unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"Config key '{where}' must be a table")
            result[key] = _merge(base[key], value, where + ".")
        else:
            result[key] = value
    return result


def _merge_shape(base: dict, override: dict) -> dict:
    kind = override.get("kind", base["kind"])
    if kind not in CURVE_KINDS:
        raise ConfigError(f"Unknown shape kind '{kind}'. Available: {', '.join(CURVE_KINDS)}")
    allowed = {"kind", "delta", "center", *SHAPE_DEFAULTS[kind]}
    for key in override:
        if key not in allowed:
            raise ConfigError(f"Unknown config key 'shape.{key}' for kind '{kind}'")
    result = {"kind": kind, "delta": base["delta"], "center": list(base["center"])}
    if kind == base["kind"]:
        result.update({k: v for k, v in base.items() if k in allowed})
    result.update(override)
    return result


def build_config(overrides: dict | None = None) -> dict:
    """DEFAULTS deep-merged with ``overrides`` (same nesting), validated."""
    overrides = _normalize_keys(overrides or {})
    shape = overrides.pop("shape", {})
    config = _merge(DEFAULTS, overrides)
    config["shape"] = _merge_shape(DEFAULTS["shape"], shape)
    validate_config(config)
    return config


def load_config(config_path: str | None = None) -> dict:
    """Load configuration from a TOML file.

    Args:
        config_path: Path to the config file. If None, returns DEFAULTS.

    Returns:
        Nested config dict with ``_config_file`` set when a file was read.
    """
    if not config_path:
        return build_config()
    try:
        with open(config_path, "rb") as f:
            file_config = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config file {config_path}: {e}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{config_path}: {e}")
    config = build_config(file_config)
    config["_config_file"] = str(config_path)
    return config


def merge_cli_args(config: dict, args) -> dict:
    """Merge CLI arguments over config file values.

    CLI args that are None don't override config.
    """
    result = copy.deepcopy(config)
    mappings = {
        "out": ("run", "out"),
        "seed": ("run", "seed"),
        "threads": ("run", "threads"),
        "experiment": ("run", "experiment"),
        "data": ("run", "data"),
        "cache_dir": ("run", "cache_dir"),
    }
    for arg_name, (table, key) in mappings.items():
        cli_value = getattr(args, arg_name, None)
        if cli_value is None:
            continue
        result[table][key] = cli_value
    validate_config(result)
    return result


def _require(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {message}")


def _is_pair(value) -> bool:
    return isinstance(value, (list, tuple)) and len(value) == 2 and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)


def parse_omega(value) -> tuple[str, float | int]:
    """("value", omega) for a number, ("resonance", n) for "resonance:n"."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if value <= 0:
            raise ConfigError(f"source.omega: must be positive, got {value}")
        return "value", float(value)
    if isinstance(value, str) and value.startswith("resonance:"):
        try:
            n = int(value.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"source.omega: bad mode index in '{value}'")
        if n < 1:
            raise ConfigError(f"source.omega: resonance mode index must be >= 1, got {n}")
        return "resonance", n
    raise ConfigError(f"source.omega: expected a positive number or 'resonance:n', got {value!r}")


def validate_config(config: dict) -> None:
    """Range checks; raises ConfigError naming the offending key."""
    shape = config["shape"]
    _require(isinstance(shape["delta"], (int, float)) and shape["delta"] > 0, "shape.delta", "must be > 0")
    _require(_is_pair(shape["center"]), "shape.center", "must be two numbers")

    phys = config["physics"]
    for key in ("omega_p", "tau", "eps0", "mu0"):
        _require(isinstance(phys[key], (int, float)) and phys[key] > 0, f"physics.{key}", "must be > 0")
    for key in ("eps_m", "mu_m"):
        _require(phys[key] is None or (isinstance(phys[key], (int, float)) and phys[key] > 0),
                 f"physics.{key}", "must be > 0")
    lo_hi = phys["omega_range"]
    _require(_is_pair(lo_hi) and 0 < lo_hi[0] < lo_hi[1], "physics.omega_range", "must be 0 < lo < hi")

    disc = config["discretization"]
    M = disc["M"]
    _require(isinstance(M, int) and M >= 16 and M % 2 == 0, "discretization.M", "must be an even integer >= 16")
    _require(isinstance(disc["n_sensors"], int) and disc["n_sensors"] >= 1, "discretization.n_sensors", "must be >= 1")
    _require(disc["radius_factor"] > 0, "discretization.radius_factor", "must be > 0")
    _require(isinstance(disc["n_eig"], int) and 2 <= disc["n_eig"] <= M, "discretization.n_eig", "must be in [2, M]")

    src = config["source"]
    _require(_is_pair(src["position_nm"]), "source.position_nm", "must be two numbers")
    _require(_is_pair(src["moment"]) and any(src["moment"]), "source.moment", "must be a nonzero 2-vector")
    kind, value = parse_omega(src["omega"])
    if kind == "resonance":
        _require(value < disc["n_eig"], "source.omega", f"mode {value} is not retained (n_eig = {disc['n_eig']})")

    img = config["imaging"]
    _require(_is_pair(img["window_center_nm"]), "imaging.window_center_nm", "must be two numbers")
    _require(img["window_nm"] > 0, "imaging.window_nm", "must be > 0")
    _require(isinstance(img["grid"], int) and img["grid"] >= 3, "imaging.grid", "must be an integer >= 3")
    _require(img["guard_nm"] >= 0, "imaging.guard_nm", "must be >= 0")

    loc = config["localize"]
    _require(isinstance(loc["n_modes"], int) and 0 <= loc["n_modes"] < disc["n_eig"],
             "localize.n_modes", f"must be in [0, {disc['n_eig'] - 1}]")
    _require(all(isinstance(n, int) and 1 <= n < disc["n_eig"] for n in loc["modes"]),
             "localize.modes", f"entries must be in [1, {disc['n_eig'] - 1}]")
    for key in ("multistart", "max_evaluations"):
        _require(isinstance(loc[key], int) and loc[key] >= 1, f"localize.{key}", "must be >= 1")
    _require(loc["xatol_nm"] > 0, "localize.xatol_nm", "must be > 0")
    _require(loc["amplitudes"] in AMPLITUDE_MODELS, "localize.amplitudes",
             f"must be one of {', '.join(AMPLITUDE_MODELS)}")

    sw = config["sweeps"]
    _require(len(sw["offsets_nm"]) >= 1 and all(o >= 0 for o in sw["offsets_nm"]),
             "sweeps.offsets_nm", "must be a nonempty list of offsets >= 0")
    _require(len(sw["sigma0"]) >= 1 and all(s >= 0 for s in sw["sigma0"]),
             "sweeps.sigma0", "must be a nonempty list of levels >= 0")
    _require(isinstance(sw["realizations"], int) and sw["realizations"] >= 1, "sweeps.realizations", "must be >= 1")
    _require(all(isinstance(n, int) and 0 <= n < disc["n_eig"] for n in sw["n_modes_list"]),
             "sweeps.n_modes_list", f"entries must be in [0, {disc['n_eig'] - 1}]")
    _require(isinstance(sw["gallery_modes"], int) and 1 <= sw["gallery_modes"] < disc["n_eig"],
             "sweeps.gallery_modes", f"must be in [1, {disc['n_eig'] - 1}]")
    _require(isinstance(sw["gallery_grid"], int) and sw["gallery_grid"] >= 3, "sweeps.gallery_grid", "must be >= 3")
    _require(sw["gallery_extent"] > 1, "sweeps.gallery_extent", "must be > 1")

    run = config["run"]
    _require(run["experiment"] in EXPERIMENTS, "run.experiment", f"must be one of {', '.join(EXPERIMENTS)}")
    _require(isinstance(run["seed"], int), "run.seed", "must be an integer")
    _require(isinstance(run["threads"], int) and run["threads"] >= 1, "run.threads", "must be >= 1")
    _require(isinstance(run["cache_dir"], str), "run.cache_dir", "must be a path string")
    _require(isinstance(run["data"], str), "run.data", "must be a path string")


def generate_sample_config() -> str:
    """Generate a sample demirage.toml config file."""
    return '''# demirage configuration
# Every key is optional; omitted keys take the defaults shown.

[shape]
kind = "diamond"          # flower | diamond | ellipse | disk | fourier
delta = 1e-8              # characteristic size, meters
center = [0.0, 0.0]
# diamond: scale = 2.0, coefficient = 0.066, order = 3
# flower:  base = 2.0, amplitude = 0.6, petals = 5
# ellipse: a = 1.0, b = 5.0
# fourier: coefficients = [[1, 1.0, 0.0], [-3, 0.05, 0.0]]

[physics]
omega_p = 2e15            # plasma frequency, rad/s
tau = 1e-14               # Drude relaxation time, s
eps0 = 8.854187128e-12
mu0 = 1.25663706144e-6
# eps_m = 8.854187128e-12 # background permittivity (default: eps0)
omega_range = [0.2, 0.99] # resonance search interval / omega_p

[discretization]
M = 256                   # boundary nodes
n_sensors = 256
radius_factor = 3000.0    # measurement radius R = radius_factor * delta
n_eig = 16

[source]
position_nm = [18.65, 16.65]
moment = [-1.0, 1.0]
omega = 1.505e15          # rad/s, or "resonance:n" for the n-th tabulated mode

[imaging]
window_center_nm = [0.0, 0.0]
window_nm = 300.0
grid = 61

[localize]
n_modes = 6
# modes = [4, 6]          # explicit subset instead of the first n_modes
amplitudes = "modal"      # modal | free
multistart = 5
max_evaluations = 500
xatol_nm = 1e-3

[sweeps]
offsets_nm = [0.0, 5.0, 10.0, 20.0, 30.0, 50.0, 75.0, 100.0]
sigma0 = [0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5]
realizations = 100
n_modes_list = [2, 3, 4, 5, 6, 7]

[run]
experiment = "mirage"     # modes | mirage | sweep-distance | sweep-noise | mode-table
out = "out"
seed = 0
threads = 1
# cache_dir = "cache"     # mode-image cache; empty disables it
# data = "out/far_field.csv"  # input of the image and localize primitives
'''
