"""Experiment config files: flat key=value entries under section headers.

Unknown sections or keys are rejected so typos fail fast. Kind-specific
defaults (mechanism, maskable/driver sets, sample sizes of the fixed-mask
studies) are resolved here, before validation.
"""

from __future__ import annotations

import configparser
import dataclasses
import io

from .experiments import KINDS, METHODS, ExperimentConfig

__all__ = ["ConfigError", "parse_config", "format_resolved"]


class ConfigError(ValueError):
    """Bad experiment configuration (unknown key, out-of-range value, ...)."""


def _parse_int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in raw.replace(",", " ").split())


def _parse_float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


# section -> key -> (config field, parser)
_SCHEMA = {
    "experiment": {
        "kind": ("kind", str),
        "methods": ("methods", lambda raw: tuple(t.strip() for t in raw.split(",") if t.strip())),
        "alpha": ("alpha", float),
        "seed": ("seed", int),
        "n_train": ("n_train", int),
        "n_cal": ("n_cal", int),
        "n_test_per_mask": ("n_test_per_mask", int),
        "n_reps": ("n_reps", int),
        "out_dir": ("out_dir", str),
        "jobs": ("jobs", int),
    },
    "model": {
        "d": ("d", int),
        "rho": ("rho", float),
        "beta": ("beta", _parse_float_list),
        "mu": ("mu", float),
        "noise_var": ("noise_var", float),
    },
    "missingness": {
        "mechanism": ("mechanism", str),
        "rate": ("rate", float),
        "maskable": ("maskable", _parse_int_list),
        "driver": ("driver", _parse_int_list),
    },
    "imputation": {
        "n_rounds": ("imp_rounds", int),
        "mode": ("imp_mode", str),
        "use_response": ("imp_use_response", _parse_bool),
    },
    "base_models": {
        "n_trees": ("n_trees", int),
        "depth": ("tree_depth", int),
        "learning_rate": ("learning_rate", float),
        "max_bins": ("max_bins", int),
        "min_samples_leaf": ("min_samples_leaf", int),
    },
    "ratio": {
        "q": ("ratio_q", int),
        "sampler": ("ratio_sampler", str),
    },
    "search": {
        "grid_steps": ("grid_steps", int),
    },
    "perturb": {
        "scale": ("perturb_scale", float),
        "bias": ("perturb_bias", float),
        "inflation": ("perturb_inflation", float),
        "fixed_mask": ("fixed_mask", str),
        "sigma_list": ("sigma_list", _parse_float_list),
        "extra_n": ("bound_extra_n", int),
    },
    "csv": {
        "path": ("csv_path", str),
        "na_token": ("na_token", str),
        "header": ("csv_header", _parse_bool),
    },
}

# defaults layered on top of the dataclass defaults, per experiment kind
_KIND_DEFAULTS = {
    "synth-mcar": {"mechanism": "mcar", "rate": 0.5},
    "ablation-nocorrect": {"mechanism": "mcar", "rate": 0.5},
    "impute-ablation": {"mechanism": "mcar", "rate": 0.5},
    "real-csv": {"mechanism": "mcar", "rate": 0.5},
    "synth-mar": {"mechanism": "mar", "rate": 0.2, "maskable": (0, 1, 2), "driver": (3, 4)},
    "synth-mnar": {"mechanism": "mnar", "rate": 0.2, "maskable": (0, 1, 2)},
    "ratio-quality": {"mechanism": "mcar", "rate": 0.5, "n_train": 200, "n_cal": 100, "n_test_per_mask": 100},
    "bound-check": {"mechanism": "mcar", "rate": 0.5, "n_train": 200, "n_cal": 100, "n_test_per_mask": 100},
}


def parse_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read, resolve defaults, and validate one experiment config file."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    values: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]; valid: {', '.join(_SCHEMA)}")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]; valid: {', '.join(_SCHEMA[section])}")
            field, cast = _SCHEMA[section][key]
            try:
                values[field] = cast(raw)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section}] {key} = {raw!r}: {exc}") from exc

    kind = values.get("kind")
    if kind is None:
        raise ConfigError("missing required key: [experiment] kind")
    if kind not in KINDS:
        raise ConfigError(f"unknown kind {kind!r}; valid: {', '.join(KINDS)}")
    for field, default in _KIND_DEFAULTS.get(kind, {}).items():
        values.setdefault(field, default)
    if overrides:
        values.update(overrides)

    methods = values.get("methods")
    if methods is not None:
        bad = [m for m in methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {', '.join(bad)}; valid: {', '.join(METHODS)}")
    try:
        return ExperimentConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def format_resolved(cfg: ExperimentConfig) -> str:
    """The fully resolved config (defaults included) as key = value lines."""
    buf = io.StringIO()
    buf.write("# resolved configuration\n")
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ", ".join(str(v) for v in value)
        buf.write(f"{f.name} = {value}\n")
    return buf.getvalue()
