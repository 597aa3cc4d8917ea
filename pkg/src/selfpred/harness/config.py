"""Experiment configuration files.

Format: INI with an ``[experiment]`` section holding ``kind``, ``seeds`` and
``out``, plus a ``[params]`` section of kind-specific keys. Values are typed
by their key's declared type in ``PARAM_TYPES``. Keys ending in ``_file``
name files that must exist when the config is loaded.

Example::

    [experiment]
    kind = linear-collapse
    seeds = 0-99
    out = artifacts

    [params]
    envs = mountain-car,load-unload
    lr = 0.01
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field

KINDS = ("oracle-suite", "linear-collapse", "bound-check", "train", "rank-report")


class ConfigError(ValueError):
    pass


def _list(text: str) -> tuple:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


PARAM_TYPES = {
    # shared
    "steps": int, "lr": float, "budget": int, "n_pomdps": int, "n_samples": int,
    "stride": int, "latent_dim": int, "window": int, "target": str, "mix": float,
    # linear collapse
    "envs": _list, "modes": _list, "drift_lrs": lambda s: tuple(float(x) for x in _list(s)),
    "drift_env": str, "drift_seeds": int,
    # training
    "env": str, "variants": _list, "distractors": lambda s: tuple(int(x) for x in _list(s)),
    "target_modes": _list, "aux_coef": float, "gamma": float, "eval_every": int,
    "exploration": str, "warmup_steps": int, "n_step": int, "batch_size": int,
    "update_every": int, "margin": float, "n_layouts": int, "eval_episodes": int,
    "hidden": int, "replay_capacity": int,
    # oracle suites
    "suites": _list, "scale": float,
    # files
    "fixture_file": str,
}


def parse_seeds(text: str) -> tuple[int, ...]:
    """``0-8``, ``1,3,5`` or a mix such as ``0-2,10``."""
    seeds = []
    for part in _list(text):
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            lo_i, hi_i = int(lo), int(hi)
            if hi_i < lo_i:
                raise ConfigError(f"empty seed range {part!r}")
            seeds.extend(range(lo_i, hi_i + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError("seed list is empty")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seed list has duplicates")
    return tuple(seeds)


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seeds: tuple
    out: str = "artifacts"
    params: dict = field(default_factory=dict)
    raw: tuple = ()  # sorted (section, key, value) triples the hash is taken over

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")

    def content_hash(self) -> str:
        text = "\n".join(f"{s}.{k}={v}" for s, k, v in self.raw)
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def get(self, key, default=None):
        return self.params.get(key, default)

    def with_seeds(self, seeds) -> "ExperimentConfig":
        raw = tuple(sorted([t for t in self.raw if (t[0], t[1]) != ("experiment", "seeds")]
                           + [("experiment", "seeds", ",".join(map(str, seeds)))]))
        return ExperimentConfig(self.kind, tuple(seeds), self.out, self.params, raw)

    def with_out(self, out: str) -> "ExperimentConfig":
        # the output directory is not part of the experiment's identity
        return ExperimentConfig(self.kind, self.seeds, out, self.params, self.raw)


def _normalize(value: str) -> str:
    return " ".join(value.split())


def loads_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"malformed config: {err}") from err
    if "experiment" not in parser:
        raise ConfigError("missing [experiment] section")
    unknown_sections = set(parser.sections()) - {"experiment", "params"}
    if unknown_sections:
        raise ConfigError(f"unknown sections {sorted(unknown_sections)}")
    exp = parser["experiment"]
    extra = set(exp) - {"kind", "seeds", "out"}
    if extra:
        raise ConfigError(f"unknown [experiment] keys {sorted(extra)}")
    if "kind" not in exp:
        raise ConfigError("[experiment] needs a kind")
    kind = exp["kind"].strip()
    seeds = parse_seeds(exp.get("seeds", "0"))
    out = exp.get("out", "artifacts").strip()
    params = {}
    raw = [("experiment", "kind", kind), ("experiment", "seeds", ",".join(map(str, seeds)))]
    if "params" in parser:
        for key, value in parser["params"].items():
            if key not in PARAM_TYPES:
                raise ConfigError(f"unknown parameter {key!r}")
            try:
                params[key] = PARAM_TYPES[key](value.strip())
            except (TypeError, ValueError) as err:
                raise ConfigError(f"bad value for {key}: {value!r} ({err})") from err
            if key.endswith("_file"):
                path = os.path.join(base_dir, params[key])
                if not os.path.exists(path):
                    raise ConfigError(f"{key} refers to a missing file: {params[key]}")
                params[key] = path
            raw.append(("params", key, _normalize(value)))
    return ExperimentConfig(kind, seeds, out, params, tuple(sorted(raw)))


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return loads_config(fh.read(), base_dir=os.path.dirname(os.path.abspath(path)))
