"""Run configuration, experiment orchestration and result files."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .channel import ChannelConfig
from .drl import DrlHyper
from .env import ConstraintThresholds, EnvConfig, PhyConfig, RewardWeights
from .federate import FederateConfig, ReplayConfig, RoundReport, RunMode, Trainer
from .topology import TopologyConfig

log = logging.getLogger(__name__)

CSV_HEADER = ["round", "step_span", "system_throughput_bps", "cum_reward", "avg_energy_mj",
              "avg_eff_bits_per_mj", "c1", "c3"]
METRICS = {
    "system_throughput": "system_throughput_bps",
    "cum_reward": "cum_reward",
    "avg_energy": "avg_energy_mj",
    "avg_efficiency": "avg_eff_bits_per_mj",
}
_CSV_NAME = re.compile(r"^(?P<mode>feddrl|idrl|ra)_N(?P<n>\d+)_seed(?P<seed>-?\d+)\.csv$")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunSettings:
    modes: tuple = ("feddrl", "idrl", "ra")
    seeds: tuple = (1,)
    output_dir: str = "results"
    final_k: int = 10
    trace: bool = False

    def __post_init__(self):
        if not self.modes:
            raise ValueError("modes must not be empty")
        for m in self.modes:
            RunMode.parse(m)
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        if self.final_k < 1:
            raise ValueError("final_k must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    phy: PhyConfig = field(default_factory=PhyConfig)
    reward: RewardWeights = field(default_factory=RewardWeights)
    constraints: ConstraintThresholds = field(default_factory=ConstraintThresholds)
    drl: DrlHyper = field(default_factory=DrlHyper)
    replay: ReplayConfig = field(default_factory=ReplayConfig)
    federate: FederateConfig = field(default_factory=FederateConfig)
    run: RunSettings = field(default_factory=RunSettings)

    def env_config(self) -> EnvConfig:
        return EnvConfig(self.topology, self.channel, self.phy, self.reward, self.constraints)

    def replace(self, **sections) -> RunConfig:
        return dataclasses.replace(self, **sections)


SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(RunConfig)}


def _coerce(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if default and isinstance(default[0], int):
                return tuple(int(s) for s in items)
            if default and isinstance(default[0], float):
                return tuple(float(s) for s in items)
            return tuple(items)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _field_owner(key: str) -> list:
    return [sec for sec, factory in SECTIONS.items()
            if key in {f.name for f in dataclasses.fields(factory())}]


def parse_config(text: str) -> RunConfig:
    """Parse INI-style text; absent keys keep their defaults.

    Keys may appear under their section (``[drl]`` / ``gamma = 0.99``) or
    before any section header when the name is unambiguous.
    """
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string("[__top__]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"syntax error: {exc}") from None

    values: dict = {sec: {} for sec in SECTIONS}
    for sec in parser.sections():
        for key, raw in parser.items(sec):
            if sec == "__top__":
                owners = _field_owner(key)
                if not owners:
                    raise ConfigError(f"unknown key {key!r}")
                if len(owners) > 1:
                    raise ConfigError(f"ambiguous key {key!r}: appears in {owners}; use a section")
                target = owners[0]
            elif sec not in SECTIONS:
                raise ConfigError(f"unknown section [{sec}]")
            else:
                target = sec
            defaults = {f.name: getattr(SECTIONS[target](), f.name)
                        for f in dataclasses.fields(SECTIONS[target]())}
            if key not in defaults:
                raise ConfigError(f"unknown key {key!r} in [{target}]")
            values[target][key] = _coerce(raw, defaults[key], f"{target}.{key}")

    built = {}
    for sec, kwargs in values.items():
        try:
            built[sec] = SECTIONS[sec](**kwargs) if kwargs else SECTIONS[sec]()
        except (ValueError, TypeError) as exc:
            keys = ", ".join(sorted(kwargs))
            raise ConfigError(f"[{sec}] ({keys}): {exc}") from None
    return RunConfig(**built)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def emit_config(cfg: RunConfig) -> str:
    out = []
    for sec in SECTIONS:
        obj = getattr(cfg, sec)
        out.append(f"[{sec}]")
        for f in dataclasses.fields(obj):
            out.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
        out.append("")
    return "\n".join(out)


# ---- result files -------------------------------------------------------------


def csv_name(mode, n: int, seed: int) -> str:
    return f"{RunMode.parse(mode).value}_N{n}_seed{seed}.csv"


def write_reports_csv(path, reports: Iterable[RoundReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rep in reports:
            w.writerow(rep.csv_row())


def read_reports_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [dict(zip(CSV_HEADER, row)) for row in reader]


def final_k_means(rows: list, k: int) -> dict:
    tail = rows[-k:]
    return {metric: float(np.mean([float(r[col]) for r in tail])) for metric, col in METRICS.items()}


@dataclass
class MetricStats:
    mean: float
    std: float
    normalized: float
    per_seed: dict


@dataclass
class Summary:
    final_k: int
    # (mode, N) -> metric -> MetricStats
    groups: dict

    def get(self, mode, n: int, metric: str) -> MetricStats:
        return self.groups[(RunMode.parse(mode).value, n)][metric]

    def to_json(self) -> dict:
        out = {"final_k": self.final_k, "groups": []}
        for (mode, n), metrics in sorted(self.groups.items()):
            out["groups"].append({
                "mode": mode, "transmitters": n,
                "metrics": {name: {"mean": s.mean, "std": s.std, "normalized": s.normalized,
                                   "per_seed": {str(k): v for k, v in sorted(s.per_seed.items())}}
                            for name, s in metrics.items()},
            })
        return out


def _normalize(values: dict) -> dict:
    """Scale so the best mode maps to 1.0; shifts first when anything is negative."""
    vals = np.array(list(values.values()), dtype=float)
    hi, lo = vals.max(), vals.min()
    if lo >= 0:
        return {k: (v / hi if hi > 0 else 0.0) for k, v in values.items()}
    span = hi - lo
    return {k: ((v - lo) / span if span > 0 else 1.0) for k, v in values.items()}


def summarize(runs: dict, final_k: int) -> Summary:
    """``runs`` maps ``(mode, N, seed)`` to CSV row dicts."""
    per: dict = {}
    for (mode, n, seed), rows in runs.items():
        for metric, value in final_k_means(rows, final_k).items():
            per.setdefault((mode, n), {}).setdefault(metric, {})[seed] = value

    groups: dict = {}
    for (mode, n), metrics in per.items():
        groups[(mode, n)] = {}
        for metric, seeds in metrics.items():
            vals = np.array([seeds[s] for s in sorted(seeds)])
            std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
            groups[(mode, n)][metric] = MetricStats(float(vals.mean()), std, float("nan"), dict(seeds))

    for n in {n for _, n in groups}:
        for metric in METRICS:
            means = {mode: groups[(mode, nn)][metric].mean for (mode, nn) in groups if nn == n}
            for mode, v in _normalize(means).items():
                groups[(mode, n)][metric].normalized = float(v)
    return Summary(final_k, groups)


def load_runs(directory) -> dict:
    directory = Path(directory)
    runs = {}
    for path in sorted(directory.glob("*.csv")):
        m = _CSV_NAME.match(path.name)
        if m:
            runs[(m["mode"], int(m["n"]), int(m["seed"]))] = read_reports_csv(path)
    if not runs:
        raise FileNotFoundError(f"no run CSVs found in {directory}")
    return runs


@dataclass
class ComparisonRow:
    metric: str
    transmitters: int
    baseline: str
    feddrl: float
    other: float
    delta_pct: float


def pct_delta(new: float, base: float) -> float:
    if base == 0:
        return 0.0 if new == 0 else float("inf") * np.sign(new)
    return (new - base) / abs(base) * 100.0


def compare(summary: Summary) -> list:
    """Percentage change of FedDRL against each baseline, per metric and N."""
    modes_by_n: dict = {}
    for mode, n in summary.groups:
        modes_by_n.setdefault(n, set()).add(mode)
    rows = []
    for n, modes in sorted(modes_by_n.items()):
        if "feddrl" not in modes or len(modes) < 2:
            raise ValueError(f"N={n}: need feddrl and at least one baseline, have {sorted(modes)}")
        ref_seeds = set(summary.get("feddrl", n, "system_throughput").per_seed)
        for base in ("idrl", "ra"):
            if base not in modes:
                continue
            if set(summary.get(base, n, "system_throughput").per_seed) != ref_seeds:
                raise ValueError(f"N={n}: seeds of {base} differ from feddrl")
            for metric in METRICS:
                f = summary.get("feddrl", n, metric).mean
                b = summary.get(base, n, metric).mean
                rows.append(ComparisonRow(metric, n, base, f, b, pct_delta(f, b)))
    return rows


def format_comparison(rows: list) -> str:
    lines = [f"{'metric':<18} {'N':>3} {'vs':<6} {'feddrl':>14} {'baseline':>14} {'delta%':>9}"]
    for r in rows:
        lines.append(f"{r.metric:<18} {r.transmitters:>3} {r.baseline:<6} {r.feddrl:>14.6g} "
                     f"{r.other:>14.6g} {r.delta_pct:>+9.2f}")
    return "\n".join(lines)


# ---- experiment -----------------------------------------------------------------


def run_experiment(cfg: RunConfig, out_dir=None) -> Summary:
    """Train every (mode, seed) pair, write one CSV each plus ``summary.json``."""
    out = Path(out_dir if out_dir is not None else cfg.run.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(emit_config(cfg))
    except OSError as exc:
        raise OSError(f"cannot write to output directory {out}: {exc}") from exc

    n = cfg.topology.transmitters
    runs = {}
    for seed in cfg.run.seeds:
        for mode in cfg.run.modes:
            mode = RunMode.parse(mode)
            log.info("running mode=%s seed=%d N=%d", mode.value, seed, n)
            trainer = Trainer(cfg.env_config(), cfg.drl, cfg.replay, cfg.federate, mode, seed,
                              record_trace=cfg.run.trace)
            reports = trainer.run()
            path = out / csv_name(mode, n, seed)
            write_reports_csv(path, reports)
            if trainer.env.trace is not None:
                with open(out / f"trace_{mode.value}_N{n}_seed{seed}.ndjson", "w") as fh:
                    trainer.env.trace.write_ndjson(fh)
            runs[(mode.value, n, seed)] = read_reports_csv(path)

    summary = summarize(runs, cfg.run.final_k)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary.to_json(), fh, indent=2, sort_keys=True)
    return summary
