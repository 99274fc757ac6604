"""Run configuration files and presets.

A run config is JSON with four sections::

    {"system":     {"name": "msd", "parameters": {...}, "ranges": {...}},
     "model":      {"arch": "ddpinn", "f": 100, "order": 1, "n_g": 5, ...},
     "training":   {"epochs": 1000, "batches": 50, "n_collo": 10000, ...},
     "evaluation": {"test_signal": {...}, "x0": [...], "horizon": 1.0, "seed": 0}}

Unknown keys anywhere are rejected with the offending path in the message.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import dynamics, signals
from .sample import SamplingBox, derive_box_from_trajectory
from .train import TrainConfig


class ConfigError(ValueError):
    pass


MODEL_KEYS = ("arch", "f", "order", "n_g", "damped", "base_function", "layers", "neurons")
TRAINING_KEYS = tuple(f.name for f in fields(TrainConfig) if f.name not in MODEL_KEYS)
SYSTEM_KEYS = ("name", "parameters", "ranges")
RANGE_KEYS = ("x_low", "x_high", "u_low", "u_high", "margin")
EVALUATION_KEYS = ("test_signal", "x0", "horizon", "seed", "substeps")


@dataclass
class RunConfig:
    system: dict
    model: dict
    training: dict = field(default_factory=dict)
    evaluation: dict = field(default_factory=dict)
    preset: str | None = None

    def train_config(self, seed: int | None = None) -> TrainConfig:
        kw = {**self.model, **self.training}
        if seed is not None:
            kw["seed"] = seed
        try:
            return TrainConfig(**kw)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from None

    def system_spec(self) -> dynamics.SystemSpec:
        try:
            return dynamics.make_system(self.system["name"], self.system.get("parameters"))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"system: {e}") from None

    def test_signal(self, spec=None):
        sysm = self.system_spec()
        spec = spec if spec is not None else self.evaluation.get(
            "test_signal", signals.DEFAULT_TEST_SIGNALS[sysm.name])
        try:
            return signals.from_spec(spec, sysm.p)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"evaluation.test_signal: {e}") from None

    def test_x0(self) -> np.ndarray:
        sysm = self.system_spec()
        x0 = np.asarray(self.evaluation.get("x0", signals.DEFAULT_TEST_X0[sysm.name]), dtype=float)
        if x0.shape != (sysm.m,):
            raise ConfigError(f"evaluation.x0 needs {sysm.m} entries")
        return x0

    @property
    def horizon(self) -> float:
        return float(self.evaluation.get("horizon", 1.0))

    def box(self) -> SamplingBox:
        """Sampling box from explicit ranges, the system defaults, or the test path."""
        from .integrate import simulate
        sysm = self.system_spec()
        f = float(self.model["f"])
        r = self.system.get("ranges", {})
        if all(k in r for k in ("x_low", "x_high", "u_low", "u_high")):
            try:
                return SamplingBox.for_frequency(r["x_low"], r["x_high"], r["u_low"], r["u_high"], f)
            except ValueError as e:
                raise ConfigError(f"system.ranges: {e}") from None
        if sysm.has_box and not r:
            return SamplingBox.for_frequency(sysm.x_low, sysm.x_high, sysm.u_low, sysm.u_high, f)
        # no box known: derive it from the simulated test path with a margin
        h = 1.0 / f / int(self.evaluation.get("substeps", 10))
        traj = simulate(sysm.rhs, self.test_x0(), self.test_signal(), self.horizon, h)
        return derive_box_from_trajectory(traj.states, traj.inputs, f, margin=r.get("margin", 0.10))

    def to_dict(self) -> dict:
        d = {"system": self.system, "model": self.model, "training": self.training,
             "evaluation": self.evaluation}
        return copy.deepcopy(d)

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _check_keys(section: dict, allowed, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def from_dict(d: dict, preset: str | None = None) -> RunConfig:
    _check_keys(d, ("system", "model", "training", "evaluation", "preset"), "config")
    base = {}
    if "preset" in d:
        base = preset_dict(d["preset"])
        preset = d["preset"]
    merged = {k: {**base.get(k, {}), **d.get(k, {})} for k in ("system", "model", "training", "evaluation")}
    for key, allowed in (("system", SYSTEM_KEYS), ("model", MODEL_KEYS),
                         ("training", TRAINING_KEYS), ("evaluation", EVALUATION_KEYS)):
        _check_keys(merged[key], allowed, key)
    if "name" not in merged["system"]:
        raise ConfigError("system.name is required")
    if "f" not in merged["model"]:
        raise ConfigError("model.f is required")
    _check_keys(merged["system"].get("ranges", {}), RANGE_KEYS, "system.ranges")
    cfg = RunConfig(merged["system"], merged["model"], merged["training"], merged["evaluation"],
                    preset=preset)
    cfg.system_spec()
    cfg.train_config()
    return cfg


def load(path_or_preset: str) -> RunConfig:
    """Read a config file, or expand a preset name."""
    if path_or_preset.partition(":")[0] in PRESETS:
        return from_dict(preset_dict(path_or_preset), preset=path_or_preset)
    try:
        with open(path_or_preset) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path_or_preset!r}: {e.strerror}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path_or_preset}: line {e.lineno} column {e.colno}: {e.msg}") from None
    return from_dict(d)


def save(cfg: RunConfig, path):
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- presets -----------------------------------------------------------------
# Full-scale presets carry the published training budgets; the "-desk" variants
# shrink points, epochs and width to run on one CPU core in minutes.

def _preset(system, model, training, evaluation=None):
    return {"system": system, "model": model, "training": training, "evaluation": evaluation or {}}


def _msd(f):
    return _preset(
        {"name": "msd"},
        {"arch": "ddpinn", "f": f, "order": 1, "n_g": 5, "damped": True, "layers": 1, "neurons": 96},
        {"epochs": 4000, "batches": 1500, "n_collo": 375_000, "n_ic": 0, "n_data": 2000},
        {"horizon": 1.0},
    )


PRESETS = {
    "msd-50": _msd(50.0),
    "msd-100": _msd(100.0),
    "msd-200": _msd(200.0),
    "chain-50": _preset(
        {"name": "chain", "ranges": {"margin": 0.10}},
        {"arch": "ddpinn", "f": 50.0, "order": 2, "n_g": 20, "damped": True, "layers": 2, "neurons": 128},
        {"epochs": 2500, "batches": 500, "n_collo": 250_000, "n_ic": 0, "n_data": 0},
        {"horizon": 1.0},
    ),
    "twolink-5": _preset(
        {"name": "twolink"},
        {"arch": "ddpinn", "f": 5.0, "order": 0, "n_g": 20, "damped": True, "layers": 2, "neurons": 128},
        {"epochs": 2500, "batches": 1000, "n_collo": 1_000_000, "n_ic": 0, "n_data": 0},
        {"horizon": 5.0},
    ),
    "msd-100-desk": _preset(
        {"name": "msd"},
        {"arch": "ddpinn", "f": 100.0, "order": 1, "n_g": 5, "damped": True, "layers": 1, "neurons": 32},
        {"epochs": 1000, "batches": 50, "n_collo": 10_000, "n_ic": 0, "n_data": 0},
        {"horizon": 1.0},
    ),
    "chain-50-desk": _preset(
        {"name": "chain", "ranges": {"margin": 0.10}},
        {"arch": "ddpinn", "f": 50.0, "order": 2, "n_g": 5, "damped": True, "layers": 1, "neurons": 64},
        {"epochs": 300, "batches": 50, "n_collo": 10_000, "n_ic": 0, "n_data": 0},
        {"horizon": 1.0},
    ),
    "twolink-5-desk": _preset(
        {"name": "twolink"},
        {"arch": "ddpinn", "f": 5.0, "order": 0, "n_g": 10, "damped": True, "layers": 1, "neurons": 64},
        {"epochs": 300, "batches": 50, "n_collo": 10_000, "n_ic": 0, "n_data": 0},
        {"horizon": 5.0},
    ),
}

# The PINC settings of the published comparison, keyed by system.
PINC_OVERRIDES = {
    "msd": ({"arch": "pinc", "order": 0, "layers": 1, "neurons": 96},
            {"epochs": 4000, "batches": 400, "n_collo": 20_000, "n_ic": 40_000, "n_data": 2000}),
    "chain": ({"arch": "pinc", "order": 0, "layers": 2, "neurons": 128},
              {"epochs": 2400, "batches": 400, "n_collo": 20_000, "n_ic": 40_000, "n_data": 0}),
    "twolink": ({"arch": "pinc", "order": 0, "layers": 4, "neurons": 64},
                {"epochs": 7000, "batches": 400, "n_collo": 20_000, "n_ic": 40_000, "n_data": 0}),
}


def preset_dict(name: str) -> dict:
    """Expand ``name`` or ``name:pinc`` into a config dict."""
    base, _, variant = name.partition(":")
    if base not in PRESETS or variant not in ("", "pinc"):
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)} "
                          "(append ':pinc' for the PINC variant)")
    d = copy.deepcopy(PRESETS[base])
    if variant == "pinc":
        model, training = PINC_OVERRIDES[d["system"]["name"]]
        d["model"] = {"f": d["model"]["f"], **model}
        if base.endswith("-desk"):
            # keep the desk budget, with twice as many IC points as collocation points
            d["model"].update(layers=PRESETS[base]["model"]["layers"],
                              neurons=PRESETS[base]["model"]["neurons"])
            d["training"]["n_ic"] = 2 * d["training"]["n_collo"]
        else:
            d["training"] = dict(training)
    return d


def preset_names() -> list[str]:
    return sorted(PRESETS) + sorted(f"{k}:pinc" for k in PRESETS)


def train_config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
