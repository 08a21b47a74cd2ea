"""Experiment configuration: one YAML document drives every command.

The document has a mandatory root seed plus optional sections (model,
dataset, attack, search, train, defense, output_dir).  Section seeds
default to the root seed; unknown keys anywhere are rejected so stale
configs fail loudly instead of silently running defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import yaml

from .attack import AttackConfig
from .data import DatasetSpec, FolderSpec
from .defenses import DefenseSpec
from .federated import TrainConfig
from .models import ModelConfig
from .search import SearchConfig
from .transforms import parse_policy

_TUPLE_KEYS = {"input_shape", "hidden", "channels", "shape"}
_TOP_KEYS = {"seed", "output_dir", "model", "dataset", "attack", "search",
             "train", "defense"}


def _build_section(doc: dict, name: str, cls, root_seed: int, exclude=()):
    raw = doc.get(name) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"section '{name}' must be a mapping")
    allowed = {f.name for f in dataclasses.fields(cls)} - set(exclude)
    unknown = set(raw) - allowed
    if unknown:
        raise ValueError(f"unknown key '{sorted(unknown)[0]}' in section "
                         f"'{name}'")
    kwargs = {k: tuple(v) if k in _TUPLE_KEYS and isinstance(v, list) else v
              for k, v in raw.items()}
    if "seed" in allowed:
        kwargs.setdefault("seed", root_seed)
    return cls(**kwargs)


def _build_defense(raw):
    if raw is None or raw == {}:
        return None
    if not isinstance(raw, dict):
        raise ValueError("section 'defense' must be a mapping")
    if "kind" in raw:
        allowed = {f.name for f in dataclasses.fields(DefenseSpec)}
        unknown = set(raw) - allowed
        if unknown:
            raise ValueError(f"unknown key '{sorted(unknown)[0]}' in "
                             f"section 'defense'")
        return DefenseSpec(**raw)
    if "policy" in raw:
        if set(raw) - {"policy"}:
            raise ValueError("defense policy entry takes only 'policy'")
        return parse_policy(str(raw["policy"]))
    if "policies" in raw:
        if set(raw) - {"policies"}:
            raise ValueError("defense policies entry takes only 'policies'")
        return [parse_policy(str(s)) for s in raw["policies"]]
    raise ValueError("defense needs 'kind', 'policy', or 'policies'")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    output_dir: str
    model: ModelConfig
    dataset: DatasetSpec
    attack: AttackConfig
    search: SearchConfig
    train: TrainConfig
    defense: object
    raw: dict

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return build_config({**self.raw, "seed": int(seed)})


def _build_dataset(doc: dict, seed: int):
    raw = doc.get("dataset") or {}
    if isinstance(raw, dict) and "folder" in raw:
        if set(raw) - {"folder"}:
            raise ValueError("dataset folder entry takes only 'folder'")
        return FolderSpec(folder=str(raw["folder"]))
    return _build_section(doc, "dataset", DatasetSpec, seed)


def build_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ValueError("config document must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ValueError(f"unknown top-level key '{sorted(unknown)[0]}'")
    if "seed" not in doc:
        raise ValueError("config must set a root 'seed'")
    seed = int(doc["seed"])
    defense = _build_defense(doc.get("defense"))
    train = _build_section(doc, "train", TrainConfig, seed,
                           exclude=("defense",))
    if defense is not None:
        train = dataclasses.replace(train, defense=defense)
    return ExperimentConfig(
        seed=seed,
        output_dir=str(doc.get("output_dir", "reports")),
        model=_build_section(doc, "model", ModelConfig, seed),
        dataset=_build_dataset(doc, seed),
        attack=_build_section(doc, "attack", AttackConfig, seed,
                              exclude=("init_image",)),
        search=_build_section(doc, "search", SearchConfig, seed),
        train=train,
        defense=defense,
        raw={k: doc[k] for k in doc},
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return build_config(doc)


def dump_config(cfg: ExperimentConfig) -> str:
    """The snapshot text: re-running it reproduces the run."""
    return yaml.safe_dump(cfg.raw, sort_keys=True)
