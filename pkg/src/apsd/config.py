"""``key = value`` configuration with ``[geometry]``, ``[cost]``, ``[policy]`` and ``[simulator]`` sections.

Example::

    [simulator]
    seed = 7
    op_ratio = 0.07

    [geometry]
    blocks = 64

    [cost]
    erase_us = 3000

    [policy]
    t1 = 0.75
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields

from .errors import InvalidConfig, InvalidPolicy
from .ftl import DEFAULT_OP_RATIO
from .metrics import CostParams
from .nand import Geometry
from .policy import PolicyTable, load_policy

SEED_ENV = "APSD_SEED"


@dataclass(frozen=True)
class Config:
    geometry: Geometry = field(default_factory=Geometry)
    costs: CostParams = field(default_factory=CostParams)
    policy: PolicyTable = field(default_factory=PolicyTable)
    seed: int | None = None
    op_ratio: float = DEFAULT_OP_RATIO


def _section(parser, name, allowed):
    if not parser.has_section(name):
        return {}
    items = dict(parser.items(name))
    unknown = set(items) - allowed
    if unknown:
        raise InvalidConfig(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    return items


def _parse_seed(raw: str) -> int:
    try:
        seed = int(raw, 0)
    except ValueError:
        raise InvalidConfig(f"seed must be an integer, got {raw!r}") from None
    if not 0 <= seed < 1 << 64:
        raise InvalidConfig(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed


def parse_config(text: str) -> Config:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise InvalidConfig(str(exc)) from None
    extra = set(parser.sections()) - {"geometry", "cost", "policy", "simulator"}
    if extra:
        raise InvalidConfig(f"unknown sections: {', '.join(sorted(extra))}")

    geo = _section(parser, "geometry", {f.name for f in fields(Geometry)})
    try:
        geometry = Geometry(**{k: int(v) for k, v in geo.items()})
    except ValueError as exc:
        raise InvalidConfig(f"[geometry] {exc}") from None

    cost = _section(parser, "cost", {f.name for f in fields(CostParams)})
    try:
        costs = CostParams(**{k: float(v) for k, v in cost.items()})
    except ValueError as exc:
        raise InvalidConfig(f"[cost] {exc}") from None

    try:
        policy = load_policy(_section(parser, "policy", {f.name for f in fields(PolicyTable)}))
    except InvalidPolicy as exc:
        raise InvalidConfig(f"[policy] {exc}") from None

    sim = _section(parser, "simulator", {"seed", "op_ratio"})
    seed = _parse_seed(sim["seed"]) if "seed" in sim else None
    op_ratio = DEFAULT_OP_RATIO
    if "op_ratio" in sim:
        try:
            op_ratio = float(sim["op_ratio"])
        except ValueError:
            raise InvalidConfig(f"op_ratio must be a number, got {sim['op_ratio']!r}") from None
        if not 0.0 <= op_ratio < 1.0:
            raise InvalidConfig(f"op_ratio must be in [0, 1), got {op_ratio}")
    return Config(geometry, costs, policy, seed, op_ratio)


def load_config(path) -> Config:
    if path is None:
        return Config()
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def resolve_seed(cli_seed: int | None, config: Config, environ=None) -> int:
    """``--seed`` beats the config file, which beats ``APSD_SEED``; default 0."""
    if cli_seed is not None:
        return cli_seed
    if config.seed is not None:
        return config.seed
    env = (environ if environ is not None else os.environ).get(SEED_ENV)
    if env:
        return _parse_seed(env)
    return 0
