"""Run configuration: one JSON file, a reference preset, flag overrides.

Precedence, lowest to highest: built-in defaults, the config file,
the reference preset (when requested, it re-pins every experiment knob
while keeping paths and the model roster), environment variables
(MUTAPROBE_ENDPOINT, MUTAPROBE_TIMEOUT_S), explicit flags.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import MalformedRecord, MissingInputError, ValidationError
from .mutate import KINDS

# Experiment knobs pinned by --paper-preset: temperature/sample profiles,
# mutation budget, thresholds, and the probe protocol.
PRESET_KNOBS: dict = {
    "seed": 0,
    "profiles": [
        {"name": "t0", "temperature": 0.0, "n_samples": 1},
        {"name": "t0_stability", "temperature": 0.0, "n_samples": 3},
        {"name": "t08", "temperature": 0.8, "n_samples": 10},
    ],
    "mutation": {
        "kinds": list(KINDS),
        "variants_per_kind": 6,
        "top_k": 10,
        "skip_nonword": False,
    },
    "analysis": {
        "taus": [1, 10, 50],
        "alpha": 0.05,
        "anomaly_policy": "first",
        "group_by": "cwe",
    },
    "probe": {
        "min_flip_rate": 0.10,
        "min_instances": 20,
        "folds": 5,
        "dev_fraction": 0.8,
        "resamples": 1000,
        "ci_level": 0.95,
    },
    "generation": {"max_new_tokens": 1024, "timeout_s": 60.0},
    "evaluation": {"oracle_timeout_s": 60.0, "workers": 8, "save_oracle_logs": False},
}

_PATH_DEFAULTS: dict = {
    "corpus": None,
    "outdir": "out",
    "models": {"stub-model": "stub"},
    "embeddings": None,  # {"container": path, "vocab": path}
    "tokenizations": None,  # optional exported tokenization file
    "activations": None,  # directory store path or "synthetic[:layers[:dim]]"
    "grouping": None,
}


@dataclass(frozen=True)
class TemperatureProfile:
    name: str
    temperature: float
    n_samples: int

    def __post_init__(self):
        if not self.name:
            raise ValidationError("profile name must be non-empty")
        if self.temperature < 0.0:
            raise ValidationError(f"profile {self.name}: temperature must be >= 0")
        if self.n_samples < 1:
            raise ValidationError(f"profile {self.name}: n_samples must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    corpus: str | None
    outdir: str
    models: dict[str, str]
    embeddings_container: str | None
    embeddings_vocab: str | None
    tokenizations: str | None
    activations: str | None
    grouping: str | None
    seed: int
    profiles: tuple[TemperatureProfile, ...]
    mutation_kinds: tuple[str, ...]
    variants_per_kind: int
    top_k: int
    skip_nonword: bool
    taus: tuple[int, ...]
    alpha: float
    anomaly_policy: str
    group_by: str
    min_flip_rate: float
    min_instances: int
    folds: int
    dev_fraction: float
    resamples: int
    ci_level: float
    max_new_tokens: int
    timeout_s: float
    oracle_timeout_s: float
    eval_workers: int
    save_oracle_logs: bool

    def __post_init__(self):
        if not self.models:
            raise ValidationError("model roster is empty")
        names = [p.name for p in self.profiles]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate profile names: {names}")
        if not self.profiles:
            raise ValidationError("at least one temperature profile is required")
        for kind in self.mutation_kinds:
            if kind not in KINDS:
                raise ValidationError(f"unknown mutation kind {kind!r}")
        if self.variants_per_kind < 1:
            raise ValidationError("variants_per_kind must be >= 1")
        if self.top_k < 1:
            raise ValidationError("top_k must be >= 1")
        if not all(t >= 1 for t in self.taus):
            raise ValidationError(f"taus must be positive integers: {self.taus}")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must be in (0, 1)")
        if not 0.0 < self.dev_fraction < 1.0:
            raise ValidationError("dev_fraction must be in (0, 1)")
        if self.folds < 2:
            raise ValidationError("folds must be >= 2")
        if self.eval_workers < 1:
            raise ValidationError("evaluation workers must be >= 1")

    def profile(self, name: str) -> TemperatureProfile:
        for p in self.profiles:
            if p.name == name:
                return p
        raise ValidationError(f"no profile named {name!r}")

    @property
    def main_profile(self) -> TemperatureProfile:
        """The deterministic profile analysis treats as the baseline run."""
        zeros = [p for p in self.profiles if p.temperature == 0.0]
        if not zeros:
            raise ValidationError("no temperature-0 profile configured")
        return min(zeros, key=lambda p: p.n_samples)

    @property
    def sampled_profile(self) -> TemperatureProfile | None:
        """The first sampled profile, if any; drives the significance test."""
        hot = [p for p in self.profiles if p.temperature > 0.0]
        return hot[0] if hot else None

    def to_dict(self) -> dict:
        return {
            "corpus": self.corpus,
            "outdir": self.outdir,
            "models": dict(self.models),
            "embeddings": (
                {"container": self.embeddings_container, "vocab": self.embeddings_vocab}
                if self.embeddings_container
                else None
            ),
            "tokenizations": self.tokenizations,
            "activations": self.activations,
            "grouping": self.grouping,
            "seed": self.seed,
            "profiles": [
                {"name": p.name, "temperature": p.temperature, "n_samples": p.n_samples}
                for p in self.profiles
            ],
            "mutation": {
                "kinds": list(self.mutation_kinds),
                "variants_per_kind": self.variants_per_kind,
                "top_k": self.top_k,
                "skip_nonword": self.skip_nonword,
            },
            "analysis": {
                "taus": list(self.taus),
                "alpha": self.alpha,
                "anomaly_policy": self.anomaly_policy,
                "group_by": self.group_by,
            },
            "probe": {
                "min_flip_rate": self.min_flip_rate,
                "min_instances": self.min_instances,
                "folds": self.folds,
                "dev_fraction": self.dev_fraction,
                "resamples": self.resamples,
                "ci_level": self.ci_level,
            },
            "generation": {"max_new_tokens": self.max_new_tokens, "timeout_s": self.timeout_s},
            "evaluation": {
                "oracle_timeout_s": self.oracle_timeout_s,
                "workers": self.eval_workers,
                "save_oracle_logs": self.save_oracle_logs,
            },
        }


# Mapping-valued keys whose entries are data, not knobs: replace wholesale.
_ATOMIC_KEYS = {"models", "profiles", "embeddings"}


def _deep_merge(base: dict, override: dict, atomic: frozenset = frozenset(_ATOMIC_KEYS)) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in atomic and isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value, frozenset())
        else:
            out[key] = copy.deepcopy(value)
    return out


def config_from_dict(data: dict) -> RunConfig:
    known = set(_PATH_DEFAULTS) | set(PRESET_KNOBS)
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    embeddings = data.get("embeddings") or {}
    if embeddings and ("container" not in embeddings or "vocab" not in embeddings):
        raise ValidationError("embeddings config needs both container and vocab paths")
    try:
        profiles = tuple(TemperatureProfile(**p) for p in data["profiles"])
    except TypeError as e:
        raise ValidationError(f"bad profile entry: {e}") from None
    mutation = data["mutation"]
    analysis = data["analysis"]
    probe = data["probe"]
    generation = data["generation"]
    evaluation = data["evaluation"]
    return RunConfig(
        corpus=data.get("corpus"),
        outdir=data["outdir"],
        models=dict(data["models"]),
        embeddings_container=embeddings.get("container"),
        embeddings_vocab=embeddings.get("vocab"),
        tokenizations=data.get("tokenizations"),
        activations=data.get("activations"),
        grouping=data.get("grouping"),
        seed=int(data["seed"]),
        profiles=profiles,
        mutation_kinds=tuple(mutation["kinds"]),
        variants_per_kind=int(mutation["variants_per_kind"]),
        top_k=int(mutation["top_k"]),
        skip_nonword=bool(mutation["skip_nonword"]),
        taus=tuple(int(t) for t in analysis["taus"]),
        alpha=float(analysis["alpha"]),
        anomaly_policy=analysis["anomaly_policy"],
        group_by=analysis["group_by"],
        min_flip_rate=float(probe["min_flip_rate"]),
        min_instances=int(probe["min_instances"]),
        folds=int(probe["folds"]),
        dev_fraction=float(probe["dev_fraction"]),
        resamples=int(probe["resamples"]),
        ci_level=float(probe["ci_level"]),
        max_new_tokens=int(generation["max_new_tokens"]),
        timeout_s=float(generation["timeout_s"]),
        oracle_timeout_s=float(evaluation["oracle_timeout_s"]),
        eval_workers=int(evaluation["workers"]),
        save_oracle_logs=bool(evaluation["save_oracle_logs"]),
    )


def resolve_config_dict(partial: dict) -> RunConfig:
    """Fill a possibly partial file-shaped document with the defaults."""
    if not isinstance(partial, dict):
        raise ValidationError("config document must be a JSON object")
    return config_from_dict(_deep_merge(_deep_merge(_PATH_DEFAULTS, PRESET_KNOBS), partial))


def load_config(
    config_path: str | Path | None = None,
    paper_preset: bool = False,
    overrides: dict | None = None,
    env: dict | None = None,
) -> RunConfig:
    """Assemble the effective configuration.

    ``overrides`` carries flag values: seed, taus, endpoint, outdir, corpus.
    ``env`` defaults to os.environ; MUTAPROBE_ENDPOINT rewrites every roster
    endpoint and MUTAPROBE_TIMEOUT_S the request timeout, unless the same
    thing was set by an explicit flag.
    """
    env = os.environ if env is None else env
    overrides = overrides or {}

    data = _deep_merge(_PATH_DEFAULTS, PRESET_KNOBS)
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise MissingInputError(f"config file {path} does not exist")
        try:
            file_data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise MalformedRecord(detail=f"config file {path}: {e}") from None
        if not isinstance(file_data, dict):
            raise ValidationError(f"config file {path} must hold a JSON object")
        data = _deep_merge(data, file_data)
    if paper_preset:
        data = _deep_merge(data, PRESET_KNOBS)

    endpoint = overrides.get("endpoint") or env.get("MUTAPROBE_ENDPOINT")
    if endpoint:
        data["models"] = {mid: endpoint for mid in data["models"]} or {"stub-model": endpoint}
    if overrides.get("timeout_s") is not None:
        data["generation"]["timeout_s"] = overrides["timeout_s"]
    elif env.get("MUTAPROBE_TIMEOUT_S"):
        try:
            data["generation"]["timeout_s"] = float(env["MUTAPROBE_TIMEOUT_S"])
        except ValueError:
            raise ValidationError(
                f"MUTAPROBE_TIMEOUT_S must be a number, got {env['MUTAPROBE_TIMEOUT_S']!r}"
            ) from None
    if overrides.get("seed") is not None:
        data["seed"] = overrides["seed"]
    if overrides.get("taus"):
        data["analysis"]["taus"] = list(overrides["taus"])
    for key in ("corpus", "outdir", "activations", "grouping", "tokenizations"):
        if overrides.get(key) is not None:
            data[key] = overrides[key]

    return config_from_dict(data)
