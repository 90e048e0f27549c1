"""Experiment configuration: a flat ``key = value`` text format.

Lines starting with ``#`` and trailing ``# ...`` comments are ignored. Keys
under ``strategy.`` and ``model.`` configure the federated strategy and the
client model; the rest describe data, rounds and output. ``strategy = sfl``
is shorthand for ``strategy.kind = sfl``.

Local steps (``strategy.s_local_steps``) count mini-batch SGD steps, not epochs.
"""
from __future__ import annotations

import dataclasses
import difflib
import os
from dataclasses import dataclass, field, fields

from .errors import ConfigError

STRATEGIES = ("local_only", "fedavg", "fedprox", "sfl", "sfl_star")
TASKS = ("classification", "traffic")
GRAPHS = ("auto", "none", "complete", "block", "kernel")


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "sfl"
    lambda0: float = 0.1
    mu_prox: float = 0.01
    eta: float = 0.05
    s_local_steps: int = 5
    m_gcn_steps: int = 2
    gamma: float = 0.2
    tau: float = 1.0
    # tau is a multiple of the median pairwise squared distance between local models
    tau_relative: bool = True
    structure_every: int = 1
    init_local_from_global: bool | None = None

    @property
    def start_from_global(self) -> bool:
        """Resolved ``init_local_from_global``: defaults on for fedavg/fedprox only."""
        if self.init_local_from_global is None:
            return self.kind in ("fedavg", "fedprox")
        return self.init_local_from_global

    @property
    def personalized(self) -> bool:
        return self.kind in ("local_only", "sfl", "sfl_star")

    def validate(self) -> None:
        def bad(key, msg):
            raise ConfigError(f"strategy.{key}: {msg}", f"strategy.{key}")

        if self.kind not in STRATEGIES:
            bad("kind", f"must be one of {', '.join(STRATEGIES)}, got {self.kind!r}")
        if self.lambda0 < 0:
            bad("lambda0", "must be >= 0")
        if self.mu_prox < 0:
            bad("mu_prox", "must be >= 0")
        if not self.eta > 0:
            bad("eta", "must be > 0")
        if self.s_local_steps < 1:
            bad("s_local_steps", "must be >= 1")
        if self.m_gcn_steps < 0:
            bad("m_gcn_steps", "must be >= 0")
        if not 0 < self.gamma <= 1:
            bad("gamma", "must lie in (0, 1]")
        if not self.tau > 0:
            bad("tau", "must be > 0")
        if self.structure_every < 1:
            bad("structure_every", "must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    task: str = "classification"
    n_clients: int = 20
    rounds: int = 20
    batch_size: int = 128
    graph: str = "auto"
    workers: int = 1
    output_dir: str = ""
    # classification data
    shards_k: int = 2
    n_classes: int = 10
    dim: int = 8
    samples_per_class: int = 200
    cluster_spread: float = 1.0
    planted_blocks: int = 0
    # traffic data
    sigma: float = 0.25
    threshold: float = 0.3
    t_len: int = 200
    noise: float = 1.0
    window: int = 12
    horizon: int = 3
    alpha: float = 0.5
    beta: float = 0.4
    period: float = 24.0
    # client model
    hidden_dim: int = 0
    strategy: StrategyConfig = field(default_factory=StrategyConfig)

    def validate(self) -> "ExperimentConfig":
        def bad(key, msg):
            raise ConfigError(f"{key}: {msg}", key)

        if self.task not in TASKS:
            bad("task", f"must be one of {', '.join(TASKS)}, got {self.task!r}")
        if self.graph not in GRAPHS:
            bad("graph", f"must be one of {', '.join(GRAPHS)}, got {self.graph!r}")
        if self.seed < 0:
            bad("seed", "must be >= 0")
        if self.n_clients < 2:
            bad("n_clients", "must be >= 2")
        if self.rounds < 0:
            bad("rounds", "must be >= 0")
        if self.batch_size < 1:
            bad("batch_size", "must be >= 1")
        if self.workers < 1:
            bad("workers", "must be >= 1")
        if self.hidden_dim < 0:
            bad("model.hidden_dim", "must be >= 0")
        if self.task == "classification":
            if self.shards_k < 1:
                bad("shards_k", "must be >= 1")
            if self.n_classes < 2:
                bad("n_classes", "must be >= 2")
            if self.dim < 2:
                bad("dim", "must be >= 2")
            if self.samples_per_class < 1:
                bad("samples_per_class", "must be >= 1")
            if self.cluster_spread < 0:
                bad("cluster_spread", "must be >= 0")
            if self.planted_blocks < 0:
                bad("planted_blocks", "must be >= 0")
            if self.graph == "kernel":
                bad("graph", "kernel graphs need task = traffic")
            blocks = max(1, self.planted_blocks)
            if self.n_clients % blocks or self.n_classes % blocks:
                bad("planted_blocks", "must divide n_clients and n_classes")
            pool = self.samples_per_class * self.n_classes // blocks
            shards = self.n_clients // blocks * self.shards_k
            if pool % shards:
                bad("shards_k", f"samples per block ({pool}) must be divisible by "
                                f"clients per block * shards_k ({shards})")
        else:
            if not self.sigma > 0:
                bad("sigma", "must be > 0")
            if not 0 <= self.threshold < 1:
                bad("threshold", "must lie in [0, 1)")
            if self.t_len < 200:
                bad("t_len", "must be >= 200")
            if self.noise < 0:
                bad("noise", "must be >= 0")
            if self.window < 1:
                bad("window", "must be >= 1")
            if self.horizon < 1:
                bad("horizon", "must be >= 1")
            if self.period <= 0:
                bad("period", "must be > 0")
            if self.graph == "block":
                bad("graph", "block graphs need task = classification with planted_blocks")
        if self.graph == "block" and self.planted_blocks < 2:
            bad("graph", "block graph needs planted_blocks >= 2")
        self.strategy.validate()
        return self

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with dotted-key overrides applied (values already typed)."""
        top, strat = {}, {}
        for key, value in changes.items():
            key = _ALIASES.get(key, key)
            if key.startswith("strategy."):
                strat[key[len("strategy."):]] = value
            elif key == "model.hidden_dim":
                top["hidden_dim"] = value
            else:
                top[key] = value
        s = self.strategy
        if strat:
            s = dataclasses.replace(s, **strat)
        return dataclasses.replace(self, strategy=s, **top)

    def as_flat(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name == "strategy":
                continue
            key = "model.hidden_dim" if f.name == "hidden_dim" else f.name
            out[key] = getattr(self, f.name)
        for f in fields(self.strategy):
            out[f"strategy.{f.name}"] = getattr(self.strategy, f.name)
        return out


def _key_types() -> dict[str, type]:
    types = {}
    for f in fields(ExperimentConfig):
        if f.name == "strategy":
            continue
        types["model.hidden_dim" if f.name == "hidden_dim" else f.name] = f.type
    for f in fields(StrategyConfig):
        types[f"strategy.{f.name}"] = f.type
    return types


KEY_TYPES = _key_types()
_ALIASES = {"strategy": "strategy.kind", "hidden_dim": "model.hidden_dim"}


def valid_keys() -> list[str]:
    return sorted(KEY_TYPES)


def _convert(key: str, raw: str):
    kind = KEY_TYPES[key]
    text = raw.strip()
    try:
        if kind in ("int",):
            return int(text)
        if kind in ("float",):
            return float(text)
        if kind.startswith("bool"):
            low = text.lower()
            if kind.endswith("None") and low in ("auto", "none", ""):
                return None
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.split(' ')[0]}, got {text!r}", key) from None
    return text


def _resolve_key(key: str) -> str:
    key = _ALIASES.get(key, key)
    if key not in KEY_TYPES:
        close = difflib.get_close_matches(key, valid_keys(), n=1, cutoff=0.0)
        hint = f"; did you mean {close[0]!r}?" if close else ""
        raise ConfigError(f"unknown key {key!r}{hint}", key)
    return key


def parse_pairs(pairs: dict[str, str], base: ExperimentConfig | None = None) -> ExperimentConfig:
    cfg = base or ExperimentConfig()
    typed = {}
    for key, raw in pairs.items():
        key = _resolve_key(key)
        typed[key] = _convert(key, raw)
    return cfg.replace(**typed)


def parse_text(text: str, source: str = "<config>") -> ExperimentConfig:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}", key)
        pairs[key] = value
    return parse_pairs(pairs)


def parse_config(path) -> ExperimentConfig:
    """Read, default-fill and validate a configuration file."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        cfg = parse_text(fh.read(), str(path))
    return cfg.validate()


def parse_override(item: str) -> tuple[str, str]:
    if "=" not in item:
        raise ConfigError(f"override must look like key=value, got {item!r}")
    key, value = item.split("=", 1)
    return key.strip(), value.strip()


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in cfg.as_flat().items():
        if value is None:
            value = "auto"
        lines.append(f"{key} = {str(value).lower() if isinstance(value, bool) else value}")
    return "\n".join(lines) + "\n"
