"""JSON run configuration.

Example::

    {
      "data": {"path": "synthetic.csv", "label": "label", "missing_token": "NA"},
      "groups": [["demographics", ["age", "sex"]], ["imaging", ["organ_volume"]]],
      "kinds": {"sex": "categorical"},
      "preprocessing": {"impute": true, "remove_outliers": true, "normalize": true},
      "vmd": {"columns": null, "alpha": 5.0, "tau": 1.0},
      "hyperparameters": {"hidden_size": 16, "num_heads": 2, "k_modes": 2, "dropout_rate": 0.1},
      "protocol": {"k_folds": 5, "patience": 10, "max_epochs": 200, "batch_size": 32},
      "search_space": [{"name": "hidden_size", "kind": "integer", "lower": 8, "upper": 32}],
      "pso": {"swarm_size": 10, "iterations": 10},
      "variant": "bilstm-am-vmd",
      "seed": 0
    }

Relative data paths resolve against the config file's directory.
"""

import copy
import json
import os
from dataclasses import dataclass, field, fields

from .errors import ConfigError
from .pipeline.experiment import FEATURE_VMD, AblationSpec, HyperParams
from .pipeline.training import TrainProtocol
from .pso import DEFAULT_SPACE, PsoConfig, SearchSpace
from .vmd import VmdConfig

SECTIONS = {
    "data", "groups", "kinds", "preprocessing", "vmd", "hyperparameters", "protocol",
    "search_space", "pso", "variant", "seed",
}


def _build(cls, values, section):
    values = dict(values or {})
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(sorted(unknown))}")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from None


def _space(doc):
    if "search_space" not in doc:
        return DEFAULT_SPACE
    try:
        return SearchSpace.from_list(doc["search_space"])
    except TypeError as exc:
        raise ConfigError(f"invalid 'search_space' entry: {exc}") from None


@dataclass
class RunConfig:
    data_path: str | None
    label: str
    missing_token: str
    groups: list
    kinds: dict
    preprocessing: dict
    vmd_columns: list | None
    vmd: VmdConfig
    hp: HyperParams
    protocol: TrainProtocol
    space: SearchSpace
    pso: PsoConfig
    spec: AblationSpec
    seed: int
    raw: dict = field(default_factory=dict)


def load_config(path=None, overrides=None):
    """Read a config file (optional) and apply ``overrides`` (a dict of sections)."""
    doc = {}
    base_dir = os.getcwd()
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        base_dir = os.path.dirname(os.path.abspath(path))
    doc = copy.deepcopy(doc)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict):
            doc.setdefault(key, {}).update(value)
        else:
            doc[key] = value
    unknown = set(doc) - SECTIONS
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")

    data = dict(doc.get("data", {}))
    data_path = data.get("path")
    if data_path is not None and not os.path.isabs(data_path):
        data_path = os.path.join(base_dir, data_path)

    vmd_doc = dict(doc.get("vmd", {}))
    vmd_columns = vmd_doc.pop("columns", None)
    vmd_base = {f.name: getattr(FEATURE_VMD, f.name) for f in fields(VmdConfig)}
    vmd_base.update(vmd_doc)
    try:
        vmd_cfg = VmdConfig(**vmd_base)
    except TypeError as exc:
        raise ConfigError(f"invalid 'vmd' section: {exc}") from None

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    pso_doc = dict(doc.get("pso", {}))
    pso_doc.setdefault("seed", seed)

    prep = doc.get("preprocessing", {})
    bad = set(prep) - {"impute", "remove_outliers", "normalize"}
    if bad:
        raise ConfigError(f"unknown key(s) in 'preprocessing': {', '.join(sorted(bad))}")

    groups = doc.get("groups", [])
    if isinstance(groups, dict):
        groups = list(groups.items())

    return RunConfig(
        data_path=data_path,
        label=data.get("label", "label"),
        missing_token=data.get("missing_token", "NA"),
        groups=[(g[0], list(g[1])) for g in groups],
        kinds=dict(doc.get("kinds", {})),
        preprocessing={"impute": True, "remove_outliers": True, "normalize": True,
                       **doc.get("preprocessing", {})},
        vmd_columns=vmd_columns,
        vmd=vmd_cfg,
        hp=_build(HyperParams, doc.get("hyperparameters"), "hyperparameters"),
        protocol=_build(TrainProtocol, doc.get("protocol"), "protocol"),
        space=_space(doc),
        pso=_build(PsoConfig, pso_doc, "pso"),
        spec=AblationSpec(doc.get("variant", "bilstm-am-vmd")),
        seed=seed,
        raw=doc,
    )
