"""Experiment configuration: a flat TOML file mapped onto one dataclass.

Exactly one data source is configured: ``data`` (path to a canonical
CSV) or ``synth`` (a profile name activating the synthetic generator,
whose parameters live in flat keys alongside it). Unknown keys are
rejected so typos fail loudly instead of silently running defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields as dc_fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

from ..errors import ConfigError
from ..gp_core import KernelFamily
from ..lisal import LisalConfig
from ..nonstationary import NgpKind
from .synth import SynthSpec

__all__ = ["ExperimentConfig", "load_config"]

# synth generator keys admitted in the flat file, mapped onto SynthSpec
_SYNTH_KEYS = (
    "nx",
    "ny",
    "nt",
    "amplitude",
    "width",
    "center",
    "length_x",
    "length_y",
    "length_t",
    "sigma_f",
    "sigma_n",
    "latent_length",
    "ch_a",
    "ch_b",
)

_INT_KEYS = ("m1", "m2", "c", "k", "history_window", "seed", "restarts", "max_iter")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment run needs, in validated form.

    ``data`` holds the dataset path (resolved against the config file's
    directory) when reading a file; ``synth`` holds the full generator
    spec when generating. Exactly one of the two is set.
    """

    kind: NgpKind
    family: KernelFamily
    m1: int
    m2: int
    c: int
    data: Path = None
    synth: SynthSpec = None
    k: int = 6
    history_window: int = 0
    standardize: bool = True
    seed: int = 0
    restarts: int = 4
    first_restarts: int = None
    max_iter: int = 200
    out: Path = Path("out")

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", NgpKind(self.kind))
            object.__setattr__(self, "family", KernelFamily(self.family))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if (self.data is None) == (self.synth is None):
            raise ConfigError("configure exactly one of 'data' and 'synth'")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.history_window < 0:
            raise ConfigError("history_window must be non-negative")
        if self.data is not None and not Path(self.data).is_file():
            raise ConfigError(f"dataset file does not exist: {self.data}")
        # delegate the loop parameter checks; surfaced as config errors
        try:
            self.lisal_config()
        except Exception as exc:
            raise ConfigError(f"invalid run parameters: {exc}") from exc

    def lisal_config(self) -> LisalConfig:
        return LisalConfig(
            m1=self.m1,
            m2=self.m2,
            c=self.c,
            kind=self.kind,
            family=self.family,
            seed=self.seed,
            restarts=self.restarts,
            max_iter=self.max_iter,
            first_restarts=self.first_restarts,
        )


def _coerce_int(key, value):
    # bools are ints in python; a bare true/false here is always a typo
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return value


def _coerce_float(key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ConfigError(f"{key} must be finite, got {value!r}")
    return v


def load_config(path) -> ExperimentConfig:
    """Parse and validate a flat TOML config file."""
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot open config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc

    known = (
        {"data", "synth", "kind", "family", "standardize", "out", "first_restarts"}
        | set(_SYNTH_KEYS)
        | set(_INT_KEYS)
    )
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key in ("m1", "m2", "c", "kind", "family"):
        if key not in raw:
            raise ConfigError(f"missing required config key: {key}")

    kwargs = {}
    for key in ("kind", "family"):
        if not isinstance(raw[key], str):
            raise ConfigError(f"{key} must be a string")
        kwargs[key] = raw[key]
    for key in _INT_KEYS:
        if key in raw:
            kwargs[key] = _coerce_int(key, raw[key])
    if "first_restarts" in raw:
        kwargs["first_restarts"] = _coerce_int("first_restarts", raw["first_restarts"])
    if "standardize" in raw:
        if not isinstance(raw["standardize"], bool):
            raise ConfigError("standardize must be true or false")
        kwargs["standardize"] = raw["standardize"]
    if "out" in raw:
        if not isinstance(raw["out"], str):
            raise ConfigError("out must be a path string")
        kwargs["out"] = Path(raw["out"])

    synth_given = {k: raw[k] for k in _SYNTH_KEYS if k in raw}
    if "data" in raw and "synth" in raw:
        raise ConfigError("configure exactly one of 'data' and 'synth'")
    if "data" in raw:
        if synth_given:
            raise ConfigError(
                "synthetic generator keys need 'synth': " + ", ".join(sorted(synth_given))
            )
        if not isinstance(raw["data"], str):
            raise ConfigError("data must be a path string")
        kwargs["data"] = (path.parent / raw["data"]).resolve()
    elif "synth" in raw:
        if not isinstance(raw["synth"], str):
            raise ConfigError("synth must name a latent profile")
        spec_kwargs = {"profile": raw["synth"]}
        for key, value in synth_given.items():
            if key in ("nx", "ny", "nt"):
                spec_kwargs[key] = _coerce_int(key, value)
            else:
                spec_kwargs[key] = _coerce_float(key, value)
        spec_kwargs["kind"] = kwargs["kind"]
        spec_kwargs["family"] = kwargs["family"]
        try:
            kwargs["synth"] = SynthSpec(**spec_kwargs)
        except Exception as exc:
            raise ConfigError(f"invalid synthetic spec: {exc}") from exc
    try:
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(str(exc)) from exc
