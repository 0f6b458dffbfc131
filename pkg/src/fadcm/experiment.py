"""Regret experiments: configuration, the simulation loop, aggregation, output files.

Randomness: each replication owns ``SeedSequence(seed, spawn_key=(rep,))``,
split into three PCG64 streams (truth draw, user sessions, policy coins).
Replications therefore never share state and can run in any order.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np

from .model import (Catalog, DiscountCurve, ModelError, ModelParams, Relevance,
                    BehaviorParams, Slate, prefix_counts, reward_from_attractiveness)
from .optimizer import optimal_slate
from .policies import ExploreThenExploit, FaDcm, FaDcmP, OraclePolicy, Policy
from .simulator import InteractionRecord, sample_session

POLICY_KINDS = ("fadcmp", "fadcm", "ete", "oracle")
POLICY_PARAM_KEYS = {
    "fadcmp": {"exploration_scale"},
    "fadcm": {"alpha", "threshold", "exploration_count", "delta_form", "exploration_scale"},
    "ete": {"beta", "floor"},
    "oracle": set(),
}
CSV_COLUMNS = ("checkpoint_t", "mean_cum_regret", "lo95", "hi95", "policy", "case_label",
               "config_hash", "master_seed")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    case_label: str = "case1"
    n_categories: int = 3
    items_per_category: Any = 10
    relevance: dict = field(default_factory=lambda: {"kind": "uniform", "low": 0.0, "high": 0.5})
    discount: dict = field(default_factory=lambda: {"kind": "exponential", "rate": 0.1})
    plateau_index: Optional[int] = None
    g: float = 0.85
    q: float = 0.7
    horizon: int = 10_000
    replications: int = 20
    seed: int = 2020
    policy: str = "fadcmp"
    policy_params: dict = field(default_factory=dict)
    max_len: Optional[int] = None
    checkpoint_every: int = 100

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown configuration field")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError("config", str(exc)) from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def category_sizes(self) -> list[int]:
        if isinstance(self.items_per_category, (list, tuple)):
            return [int(s) for s in self.items_per_category]
        return [int(self.items_per_category)] * int(self.n_categories)

    @property
    def n_items(self) -> int:
        return sum(self.category_sizes)

    def validate(self) -> None:
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        need(isinstance(self.name, str) and self.name, "name", "must be a non-empty string")
        need(isinstance(self.case_label, str) and self.case_label, "case_label",
             "must be a non-empty string")
        need(_is_int(self.n_categories) and self.n_categories >= 1, "n_categories",
             "must be an integer >= 1")
        if isinstance(self.items_per_category, (list, tuple)):
            need(len(self.items_per_category) == self.n_categories, "items_per_category",
                 "list length must equal n_categories")
            need(all(_is_int(s) and s >= 1 for s in self.items_per_category),
                 "items_per_category", "sizes must be integers >= 1")
        else:
            need(_is_int(self.items_per_category) and self.items_per_category >= 1,
                 "items_per_category", "must be an integer >= 1 or a list of them")
        for name in ("g", "q"):
            v = getattr(self, name)
            need(_is_num(v) and 0.0 <= v <= 1.0, name, "must be a probability in [0, 1]")
        need(self.q <= self.g, "q", f"must satisfy 0 <= q <= g <= 1 (got q={self.q} > g={self.g})")
        need(_is_int(self.horizon) and self.horizon >= 1, "horizon", "must be an integer >= 1")
        need(_is_int(self.replications) and self.replications >= 1, "replications",
             "must be an integer >= 1")
        need(_is_int(self.seed) and 0 <= self.seed < 2**64, "seed", "must be an integer in [0, 2^64)")
        need(_is_int(self.checkpoint_every) and self.checkpoint_every >= 1, "checkpoint_every",
             "must be an integer >= 1")
        need(self.policy in POLICY_KINDS, "policy", f"must be one of {', '.join(POLICY_KINDS)}")
        need(isinstance(self.policy_params, dict), "policy_params", "must be a table")
        extra = set(self.policy_params) - POLICY_PARAM_KEYS[self.policy]
        need(not extra, "policy_params", f"unsupported for {self.policy}: {sorted(extra)}")
        if self.plateau_index is not None:
            need(_is_int(self.plateau_index) and self.plateau_index >= 0, "plateau_index",
                 "must be an integer >= 0")
        if self.max_len is not None:
            need(_is_int(self.max_len) and 1 <= self.max_len <= self.n_items, "max_len",
                 f"must be an integer in [1, {self.n_items}]")
        self._validate_relevance()
        self._validate_discount()

    def _validate_relevance(self) -> None:
        spec = self.relevance
        if not isinstance(spec, dict) or spec.get("kind") not in ("uniform", "fixed"):
            raise ConfigError("relevance.kind", "must be 'uniform' or 'fixed'")
        if spec["kind"] == "uniform":
            low, high = spec.get("low", 0.0), spec.get("high", 1.0)
            if not (_is_num(low) and _is_num(high) and 0.0 <= low <= high <= 1.0):
                raise ConfigError("relevance", "draw range must satisfy 0 <= low <= high <= 1")
        else:
            values = spec.get("values")
            if not isinstance(values, (list, tuple)) or len(values) != self.n_items:
                raise ConfigError("relevance.values", f"need a list of {self.n_items} values")
            if not all(_is_num(v) and 0.0 <= v <= 1.0 for v in values):
                raise ConfigError("relevance.values", "entries must lie in [0, 1]")

    def _validate_discount(self) -> None:
        spec = self.discount
        if not isinstance(spec, dict) or spec.get("kind") not in ("exponential", "table"):
            raise ConfigError("discount.kind", "must be 'exponential' or 'table'")
        if spec["kind"] == "exponential":
            rate = spec.get("rate")
            if not (_is_num(rate) and rate >= 0):
                raise ConfigError("discount.rate", "must be a number >= 0")
        else:
            try:
                DiscountCurve(spec.get("values", []))
            except ModelError as exc:
                raise ConfigError("discount.values", str(exc)) from exc

    @property
    def resolved_plateau(self) -> int:
        if self.discount["kind"] == "table":
            return len(self.discount["values"]) - 1
        return self.n_items if self.plateau_index is None else self.plateau_index

    def catalog(self) -> Catalog:
        return Catalog.from_sizes(self.category_sizes)

    def discount_curve(self) -> DiscountCurve:
        if self.discount["kind"] == "table":
            return DiscountCurve(self.discount["values"])
        return DiscountCurve.exponential(float(self.discount["rate"]), self.resolved_plateau)

    def draw_truth(self, rng: np.random.Generator) -> ModelParams:
        catalog = self.catalog()
        spec = self.relevance
        if spec["kind"] == "uniform":
            u = rng.uniform(spec.get("low", 0.0), spec.get("high", 1.0), catalog.n_items)
        else:
            u = np.asarray(spec["values"], dtype=float)
        return ModelParams(catalog, Relevance(u), self.discount_curve(),
                           BehaviorParams(self.g, self.q))

    def checkpoints(self) -> np.ndarray:
        pts = list(range(self.checkpoint_every, self.horizon + 1, self.checkpoint_every))
        if not pts or pts[-1] != self.horizon:
            pts.append(self.horizon)
        return np.array(pts, dtype=np.int64)


def _is_int(v) -> bool:
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) \
        and math.isfinite(v)


def replication_streams(seed: int, replication: int) -> tuple[np.random.Generator, ...]:
    root = np.random.SeedSequence(seed, spawn_key=(replication,))
    return tuple(np.random.Generator(np.random.PCG64(s)) for s in root.spawn(3))


def make_policy(config: ExperimentConfig, truth: ModelParams, rng: np.random.Generator) -> Policy:
    params = config.policy_params
    catalog = truth.catalog
    if config.policy == "oracle":
        return OraclePolicy(truth, config.max_len)
    if config.policy == "fadcmp":
        return FaDcmP(catalog, truth.discount, config.max_len, **params)
    if config.policy == "fadcm":
        return FaDcm(catalog, config.horizon, plateau_index=config.resolved_plateau,
                     max_len=config.max_len, **params)
    return ExploreThenExploit(catalog, rng, plateau_index=config.resolved_plateau,
                              max_len=config.max_len, **params)


def instantaneous_regret(truth: ModelParams, offered: Iterable[int],
                         optimum: Optional[Slate] = None) -> float:
    """Expected-click gap between the optimal slate and ``offered``."""
    if optimum is None:
        optimum = optimal_slate(truth.catalog, truth.u, truth.discount)
    best = _reward(truth, optimum)
    return max(best - _reward(truth, truth.catalog.validate_slate(offered)), 0.0)


def _attractiveness(truth: ModelParams, slate: Slate) -> np.ndarray:
    h = prefix_counts(slate, truth.catalog.categories)
    return truth.discount(h) * truth.u[np.asarray(slate, dtype=np.int64)]


def _reward(truth: ModelParams, slate: Slate) -> float:
    return reward_from_attractiveness(_attractiveness(truth, slate), truth.g, truth.q)


@dataclass
class RegretSeries:
    instantaneous: np.ndarray
    realized_clicks: np.ndarray
    policy: str
    case_label: str
    replication: int

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.instantaneous)

    @property
    def final(self) -> float:
        return float(self.instantaneous.sum())


def run_replication(config: ExperimentConfig, replication: int,
                    on_session: Optional[Callable[[int, InteractionRecord], None]] = None,
                    return_policy: bool = False):
    """One policy-vs-user loop over ``config.horizon`` rounds."""
    truth_rng, env_rng, policy_rng = replication_streams(config.seed, replication)
    truth = config.draw_truth(truth_rng)
    policy = make_policy(config, truth, policy_rng)
    best_slate = optimal_slate(truth.catalog, truth.u, truth.discount, config.max_len)
    best = _reward(truth, best_slate)
    g, q = truth.g, truth.q

    regret = np.empty(config.horizon)
    clicks = np.empty(config.horizon, dtype=np.int64)
    for t in range(1, config.horizon + 1):
        slate = policy.select_slate(t)
        z = _attractiveness(truth, slate)
        regret[t - 1] = max(best - reward_from_attractiveness(z, g, q), 0.0)
        record = sample_session(slate, z, g, q, env_rng)
        clicks[t - 1] = record.realized_clicks
        if on_session is not None:
            on_session(t, record)
        policy.observe(record, t)

    series = RegretSeries(regret, clicks, config.policy, config.case_label, replication)
    if return_policy:
        return series, policy
    return series


@dataclass
class SummaryStats:
    config: ExperimentConfig
    checkpoints: np.ndarray
    mean: np.ndarray
    lo95: np.ndarray
    hi95: np.ndarray
    finals: np.ndarray
    mean_clicks: np.ndarray

    @property
    def final_mean(self) -> float:
        return float(self.finals.mean())

    def mean_at(self, t: int) -> float:
        idx = int(np.searchsorted(self.checkpoints, t))
        if idx >= self.checkpoints.size or self.checkpoints[idx] != t:
            raise KeyError(f"{t} is not a checkpoint")
        return float(self.mean[idx])


def summarize(config: ExperimentConfig, series: Sequence[RegretSeries]) -> SummaryStats:
    series = sorted(series, key=lambda s: s.replication)
    pts = config.checkpoints()
    cum = np.stack([s.cumulative[pts - 1] for s in series])
    mean = cum.mean(axis=0)
    lo, hi = np.percentile(cum, [2.5, 97.5], axis=0)
    return SummaryStats(
        config=config,
        checkpoints=pts,
        mean=mean,
        lo95=np.minimum(lo, mean),
        hi95=np.maximum(hi, mean),
        finals=np.array([s.final for s in series]),
        mean_clicks=np.array([s.realized_clicks.mean() for s in series]),
    )


def _run_one(args) -> RegretSeries:
    config, rep = args
    return run_replication(config, rep)


def run_experiment(config: ExperimentConfig, jobs: int = 1,
                   progress: Optional[Callable[[str], None]] = None) -> SummaryStats:
    """Run every replication of ``config`` and aggregate at the checkpoints."""
    tasks = [(config, r) for r in range(config.replications)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = []
        for task in tasks:
            results.append(_run_one(task))
            if progress:
                progress(f"{config.name}/{config.case_label}: replication "
                         f"{task[1] + 1}/{config.replications} done")
    return summarize(config, results)


def run_cases(configs: Sequence[ExperimentConfig], jobs: int = 1,
              progress: Optional[Callable[[str], None]] = None) -> list[SummaryStats]:
    """Run several cases, pooling all their replications into one work queue."""
    tasks = [(c, r) for c in configs for r in range(c.replications)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = []
        for config, rep in tasks:
            results.append(_run_one((config, rep)))
            if progress:
                progress(f"{config.name}/{config.case_label}: replication "
                         f"{rep + 1}/{config.replications} done")
    out, k = [], 0
    for c in configs:
        out.append(summarize(c, results[k:k + c.replications]))
        k += c.replications
    return out


# presets ---------------------------------------------------------------------

_PRESET_BASE = dict(n_categories=3, items_per_category=10,
                    relevance={"kind": "uniform", "low": 0.0, "high": 0.5},
                    q=0.7, horizon=10_000, replications=20, seed=2020)


def _exp(rate: float) -> dict:
    return {"kind": "exponential", "rate": rate}


def preset(name: str) -> list[ExperimentConfig]:
    """Configurations for experiments I-IV, one per case."""
    key = name.upper().removeprefix("EXP")
    if key == "I":
        return [ExperimentConfig(name="expI", case_label=f"case{k}", g=g, discount=_exp(0.1),
                                 policy="fadcmp", **_PRESET_BASE)
                for k, g in ((1, 0.95), (2, 0.85), (3, 0.75))]
    if key == "II":
        return [ExperimentConfig(name="expII", case_label=f"case{k}", g=g, discount=_exp(rate),
                                 policy="fadcm", **_PRESET_BASE)
                for k, g, rate in ((4, 0.85, 0.1), (5, 0.85, 0.15), (6, 0.75, 0.1))]
    if key == "III":
        return [ExperimentConfig(name="expIII", case_label=kind, g=0.75, discount=_exp(0.1),
                                 policy=kind, **_PRESET_BASE)
                for kind in ("fadcm", "ete")]
    if key == "IV":
        base = dict(_PRESET_BASE, n_categories=5, items_per_category=20, q=0.823)
        return [ExperimentConfig(name="expIV", case_label=kind, g=0.843, discount=_exp(0.1),
                                 policy=kind, **base)
                for kind in ("fadcm", "ete")]
    raise KeyError(f"unknown preset {name!r}; choose from I, II, III, IV")


PRESET_NAMES = ("I", "II", "III", "IV")


# config files and outputs ------------------------------------------------------

def load_config_file(path) -> list[ExperimentConfig]:
    """Parse a TOML/JSON config (or a results sidecar) into one config per case.

    Top-level keys are shared defaults; an optional ``cases`` array of tables
    overrides them per case.
    """
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix.lower() == ".toml":
            import tomli
            data = tomli.loads(text)
        else:
            data = json.loads(text)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(path), f"cannot parse: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(str(path), "top level must be a table")
    if "config" in data and isinstance(data["config"], dict) and "finals" in data:
        data = data["config"]
    return configs_from_dict(data)


def configs_from_dict(data: dict) -> list[ExperimentConfig]:
    base = {k: v for k, v in data.items() if k not in ("cases", "config_hash", "master_seed")}
    cases = data.get("cases") or [{}]
    if not isinstance(cases, list):
        raise ConfigError("cases", "must be an array of tables")
    out = []
    for k, case in enumerate(cases):
        merged = dict(base)
        merged.update(case)
        if "case_label" not in merged and "label" in merged:
            merged["case_label"] = merged.pop("label")
        merged.pop("label", None)
        merged.setdefault("case_label", f"case{k + 1}")
        out.append(ExperimentConfig.from_dict(merged))
    labels = [c.case_label for c in out]
    if len(set(labels)) != len(labels):
        raise ConfigError("cases", f"duplicate case labels: {labels}")
    return out


def summary_csv(summary: SummaryStats) -> str:
    cfg = summary.config
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    h = cfg.config_hash()
    for t, m, lo, hi in zip(summary.checkpoints.tolist(), summary.mean.tolist(),
                            summary.lo95.tolist(), summary.hi95.tolist()):
        writer.writerow([t, repr(m), repr(lo), repr(hi), cfg.policy, cfg.case_label, h, cfg.seed])
    return buf.getvalue()


def summary_sidecar(summary: SummaryStats) -> dict:
    cfg = summary.config
    return {
        "config_hash": cfg.config_hash(),
        "master_seed": cfg.seed,
        "config": cfg.to_dict(),
        "final_mean": summary.final_mean,
        "finals": summary.finals.tolist(),
        "mean_realized_clicks": summary.mean_clicks.tolist(),
        "rng": "numpy PCG64 via SeedSequence(seed, spawn_key=(replication,))",
    }


def write_summary(summary: SummaryStats, out_dir) -> dict[str, Path]:
    """Write ``<name>_<case>.csv``, its JSON sidecar and the resolved config echo."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = summary.config
    stem = f"{cfg.name}_{cfg.case_label}"
    paths = {
        "csv": out_dir / f"{stem}.csv",
        "sidecar": out_dir / f"{stem}.json",
        "config": out_dir / f"{stem}.config.json",
    }
    paths["csv"].write_text(summary_csv(summary))
    paths["sidecar"].write_text(json.dumps(summary_sidecar(summary), indent=2, sort_keys=True) + "\n")
    echo = {"config_hash": cfg.config_hash(), "master_seed": cfg.seed, **cfg.to_dict()}
    paths["config"].write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
    return paths
