"""Experiment configuration files (TOML).

All SNR and power quantities in a config are in dB; they are converted to
linear scale with ``10 ** (dB / 10)`` when a simulation is set up.
"""
from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .linksim import Precoder, SimConfig
from .mqam import SUPPORTED_ORDERS

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "load_preset",
           "PRESETS", "db2lin", "lin2db"]

EXPERIMENTS = ("power_sweep", "ee_vs_channel", "ee_vs_target", "validate")
PRESETS = ("fig2", "fig3", "fig4")


class ConfigError(ValueError):
    pass


def db2lin(db):
    return 10.0 ** (np.asarray(db, float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(np.asarray(x, float))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    M: int = 2
    K: int = 2
    orders: tuple[int, ...] = (4,)
    precoder: Precoder = Precoder.MCIPM
    sigma2_db: float = 0.0
    gamma0_db: float = 0.0
    zeta_db: float | None = None
    zeta_db_by_order: dict = field(default_factory=dict)
    compute_bound: bool = False
    n_channels: int = 100
    n_slots: int = 10
    seed: int = 0
    sweep_variable: str = "zeta_th"
    start_db: float = 0.0
    stop_db: float = 0.0
    step_db: float = 1.0
    output: str = "results.csv"
    quick: bool = False

    def grid_db(self) -> list[float]:
        n = int(np.floor((self.stop_db - self.start_db) / self.step_db + 1e-9)) + 1
        return [self.start_db + i * self.step_db for i in range(n)]

    def zeta_db_for(self, order: int) -> float:
        if order in self.zeta_db_by_order:
            return self.zeta_db_by_order[order]
        if self.zeta_db is None:
            raise ConfigError(f"no SNR target given for {order}-QAM "
                              f"(set zeta_db or zeta_db_by_order)")
        return self.zeta_db

    def sim_config(self, order: int) -> SimConfig:
        """Base simulation config for one order; the swept field is set per point."""
        zeta = 1.0 if self.sweep_variable == "zeta_th" else float(db2lin(self.zeta_db_for(order)))
        gamma0 = 1.0 if self.sweep_variable == "gamma0" else float(db2lin(self.gamma0_db))
        return SimConfig(M=self.M, K=self.K, order=order, zeta=zeta,
                         sigma2=float(db2lin(self.sigma2_db)), gamma0=gamma0,
                         n_channels=self.n_channels, n_slots=self.n_slots,
                         seed=self.seed, precoder=self.precoder,
                         compute_bound=self.compute_bound)

    def with_overrides(self, seed=None, output=None) -> "ExperimentConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        if output is not None:
            cfg = replace(cfg, output=str(output))
        return cfg


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=", re.M)
    m = pat.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _parse(text: str, source: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None

    def err(key, msg):
        line = _line_of(text, key)
        where = f"{source}:{line}" if line else source
        return ConfigError(f"{where}: {key}: {msg}")

    data = dict(raw)
    sweep = data.pop("sweep", {})
    zbo = data.pop("zeta_db_by_order", {})
    kw: dict = {}
    spec = {
        "experiment": str, "M": int, "K": int, "precoder": str,
        "sigma2_db": float, "gamma0_db": float, "zeta_db": float,
        "compute_bound": bool, "n_channels": int, "n_slots": int,
        "seed": int, "output": str, "quick": bool,
    }
    for key, value in data.items():
        if key == "orders":
            if not isinstance(value, list) or not value:
                raise err(key, "must be a non-empty list")
            bad = [o for o in value if o not in SUPPORTED_ORDERS]
            if bad:
                raise err(key, f"unsupported orders {bad}; accepted orders are "
                               f"{list(SUPPORTED_ORDERS)}")
            kw["orders"] = tuple(int(o) for o in value)
            continue
        if key not in spec:
            raise err(key, "unknown key")
        typ = spec[key]
        if typ is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, typ) or (typ is int and isinstance(value, bool)):
            raise err(key, f"expected {typ.__name__}, got {value!r}")
        kw[key] = value
    if "experiment" not in kw:
        raise ConfigError(f"{source}: missing required key 'experiment'")
    if kw["experiment"] not in EXPERIMENTS:
        raise err("experiment", f"must be one of {list(EXPERIMENTS)}")
    if "precoder" in kw:
        try:
            kw["precoder"] = Precoder(kw["precoder"].upper())
        except ValueError:
            raise err("precoder", "must be 'MCIPM' or 'ZF'") from None
    for key in ("M", "K", "n_channels", "n_slots"):
        if key in kw and kw[key] < 1:
            raise err(key, "must be >= 1")
    if zbo:
        try:
            kw["zeta_db_by_order"] = {int(k): float(v) for k, v in zbo.items()}
        except (TypeError, ValueError):
            raise err("zeta_db_by_order", "keys must be orders, values dB numbers") from None
    for key, value in sweep.items():
        if key == "variable":
            if value not in ("zeta_th", "gamma0"):
                raise err("variable", "sweep variable must be 'zeta_th' or 'gamma0'")
            kw["sweep_variable"] = value
        elif key in ("start_db", "stop_db", "step_db"):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise err(key, f"expected a number, got {value!r}")
            kw[key] = float(value)
        else:
            raise err(key, "unknown key in [sweep]")
    cfg = ExperimentConfig(**kw)
    if cfg.experiment != "validate":
        if not sweep:
            raise ConfigError(f"{source}: missing [sweep] table")
        if cfg.step_db <= 0:
            raise err("step_db", "must be > 0")
        if cfg.start_db > cfg.stop_db:
            raise err("start_db", "start_db must be <= stop_db")
        if cfg.sweep_variable == "gamma0":
            for o in cfg.orders:
                try:
                    cfg.zeta_db_for(o)
                except ConfigError as exc:
                    raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return _parse(text, str(path))


def load_preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {list(PRESETS)}")
    text = resources.files("cislp.presets").joinpath(f"{name}.toml").read_text()
    return _parse(text, f"preset {name}")
