"""Run configuration: flat INI-style key/value files with sections.

Every key is validated against the schema below; unknown sections or keys
reject the whole file (typos must not silently fall back to defaults).
All physical quantities are in hbar = 1 energy/time units.
"""

import configparser
import hashlib
from dataclasses import dataclass
from importlib import resources


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "lattice": {
        "kind": ("str", "chain"),
        "dims": ("int_list", [10]),
        "pbc": ("bool", True),
    },
    "model": {
        "j": ("float", 1.0),
        "h": ("float", 2.0),
    },
    "ansatz": {
        "m": ("int", 4),
        "alpha": ("int", 1),
        "n_modes": ("int", 16),
        "train_omega": ("bool", True),
        "init_sigma": ("float", 0.01),
    },
    "schedule": {
        "delta_t": ("float", 0.25),
        "windows": ("int", 4),
        "points": ("int", 129),
        "iterations": ("int", 1000),
        "warm_start": ("bool", True),
    },
    "optimizer": {
        "lr": ("float", 1e-3),
        "beta1": ("float", 0.9),
        "beta2": ("float", 0.999),
        "eps": ("float", 1e-8),
    },
    "sampling": {
        "estimator": ("str", "exact"),
        "samples": ("int", 512),
        "chains": ("int", 8),
        "burn_in": ("int", 100),
        "thin": ("int", 1),
    },
    "run": {
        "seed": ("int", 0),
        "observables": ("str_list", ["sx_avg"]),
        "benchmark_horizon": ("float", 0.0),
        "cg_m_list": ("int_list", [4, 8, 16, 32]),
        "cg_times": ("float_list", [0.5]),
    },
}

_CASTS = {
    "str": lambda s: s.strip(),
    "int": int,
    "float": float,
    "bool": lambda s: {"true": True, "false": False, "1": True, "0": False,
                       "yes": True, "no": False}[s.strip().lower()],
    "int_list": lambda s: [int(x) for x in s.replace(",", " ").split()],
    "float_list": lambda s: [float(x) for x in s.replace(",", " ").split()],
    "str_list": lambda s: [x for x in s.replace(",", " ").split()],
}


@dataclass
class RunConfig:
    values: dict
    text: str = ""

    def __getitem__(self, key):
        section, name = key.split(".")
        return self.values[section][name]

    @property
    def sha256(self):
        return hashlib.sha256(self.text.encode()).hexdigest()

    def override(self, section, name, value):
        self.values[section][name] = value
        self.text += f"\n# override: {section}.{name} = {value}\n"


def _defaults():
    return {sec: {k: (v[1].copy() if isinstance(v[1], list) else v[1])
                  for k, v in keys.items()} for sec, keys in _SCHEMA.items()}


def parse_config(text, source="<config>"):
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    values = _defaults()
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {section}.{key}")
            kind = _SCHEMA[section][key][0]
            try:
                values[section][key] = _CASTS[kind](raw)
            except Exception as exc:
                raise ConfigError(
                    f"{source}: bad value for {section}.{key}: {raw!r}") from exc
    cfg = RunConfig(values=values, text=text)
    _validate(cfg, source)
    return cfg


def _validate(cfg, source):
    checks = [
        (cfg["lattice.kind"] in ("chain", "square"), "lattice.kind"),
        (len(cfg["lattice.dims"]) in (1, 2), "lattice.dims"),
        (cfg["ansatz.m"] >= 0, "ansatz.m"),
        (cfg["ansatz.n_modes"] >= 2, "ansatz.n_modes"),
        (cfg["schedule.delta_t"] > 0, "schedule.delta_t"),
        (cfg["schedule.windows"] >= 1, "schedule.windows"),
        (cfg["schedule.points"] >= 3 and cfg["schedule.points"] % 2 == 1,
         "schedule.points (odd, >= 3)"),
        (cfg["schedule.iterations"] >= 1, "schedule.iterations"),
        (cfg["sampling.estimator"] in ("exact", "mc"), "sampling.estimator"),
        (cfg["sampling.samples"] % max(cfg["sampling.chains"], 1) == 0,
         "sampling.samples divisible by chains"),
        (len(cfg["run.observables"]) >= 1, "run.observables"),
    ]
    for ok, what in checks:
        if not ok:
            raise ConfigError(f"{source}: invalid {what}")


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read(), source=str(path))


def load_preset(name):
    try:
        text = (resources.files("tnqg") / "presets" / f"{name}.cfg").read_text()
    except FileNotFoundError:
        available = sorted(p.name[:-4] for p in
                           (resources.files("tnqg") / "presets").iterdir()
                           if p.name.endswith(".cfg"))
        raise ConfigError(f"unknown preset {name!r}; available: {available}")
    return parse_config(text, source=f"preset:{name}")
