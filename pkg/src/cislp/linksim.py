"""Monte Carlo link-level simulation of symbol-level precoding.

Each channel realization ``c`` owns independent random substreams keyed by
``(seed, stream, c, user)``: channel rows, symbol draws and receiver noise.
Work is split across processes by channel index only and results are reduced
in channel order, so outputs are bit-identical for any worker count.

The same channel, symbol and noise draws are reused at every sweep point
(common random numbers). A target-SNR sweep therefore sees exactly scaled
transmit vectors and a shrinking normalized noise.
"""
from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .chanmodel import ChannelMatrix, generate_rayleigh, user_streams
from .mqam import build_constellation
from .slp import (
    RankDeficientChannel,
    SnrTargets,
    SymbolSlot,
    precode_min_power,
    precode_zf_symbol,
    received_indices,
)
from .solver.qp import Status
from .solver.sdp import SdpProblem, solve_multicast_sdp

__all__ = [
    "Precoder",
    "SimConfig",
    "MetricsRecord",
    "SlotOutcome",
    "SlotFailure",
    "run_slot",
    "run_sweep",
    "run_sweeps",
    "ser_interval",
    "multicast_bound",
]

log = logging.getLogger(__name__)

FAIL_FLAG_FRACTION = 0.01
Z95 = 1.959963984540054

_STREAM_SYMBOLS = 1
_STREAM_NOISE = 2


class Precoder(str, enum.Enum):
    MCIPM = "MCIPM"
    ZF = "ZF"


class SlotFailure(RuntimeError):
    def __init__(self, status: Status, message: str, where: str = ""):
        super().__init__(f"{where}: {status.value}: {message}" if where else message)
        self.status = status


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings. Powers and SNR targets are linear."""

    M: int
    K: int
    order: int
    zeta: float | tuple[float, ...]
    sigma2: float = 1.0
    gamma0: float = 1.0
    n_channels: int = 100
    n_slots: int = 10
    seed: int = 0
    precoder: Precoder = Precoder.MCIPM
    compute_bound: bool = False

    def __post_init__(self):
        if min(self.M, self.K, self.n_channels, self.n_slots) < 1:
            raise ValueError("M, K, n_channels and n_slots must be >= 1")
        z = np.atleast_1d(np.asarray(self.zeta, float))
        if z.size not in (1, self.K):
            raise ValueError(f"zeta must be a scalar or have K={self.K} entries")
        if np.any(z <= 0) or self.sigma2 <= 0 or self.gamma0 <= 0:
            raise ValueError("SNR targets, sigma2 and gamma0 must be positive")
        build_constellation(self.order)
        object.__setattr__(self, "precoder", Precoder(self.precoder))

    def targets(self) -> SnrTargets:
        return SnrTargets(np.broadcast_to(np.asarray(self.zeta, float), (self.K,)).copy(),
                          math.sqrt(self.sigma2))


@dataclass
class MetricsRecord:
    """Averages at one sweep point.

    ``energy_efficiency`` is total goodput over mean power (ratio of
    averages); ``energy_efficiency_avg_ratio`` averages the per-channel
    ratio instead.
    """

    variable: str
    value: float
    order: int
    avg_tx_power: float
    ser: np.ndarray
    ser_ci: np.ndarray
    effective_rate: np.ndarray
    energy_efficiency: float
    energy_efficiency_avg_ratio: float
    ci_lower_bound: float | None
    n_slots: int
    n_errors: np.ndarray
    n_fail: int
    flagged: bool = False
    extra: dict = field(default_factory=dict)


@dataclass
class SlotOutcome:
    power: float
    detected: np.ndarray


def ser_interval(errors, n: int, z: float = Z95) -> tuple[np.ndarray, np.ndarray]:
    """Point estimate and 95% normal-approximation half-width."""
    p = np.asarray(errors, float) / n
    return p, z * np.sqrt(p * (1.0 - p) / n)


def _precode(H, slot, targets, precoder: Precoder):
    if precoder is Precoder.ZF:
        return precode_zf_symbol(H, slot, targets)
    return precode_min_power(H, slot, targets)


def run_slot(H, slot: SymbolSlot, targets: SnrTargets, precoder=Precoder.MCIPM,
             rng: np.random.Generator | None = None, noise=None,
             where: str = "") -> SlotOutcome:
    """Precode one slot, add receiver noise and detect.

    Noise ``z_j ~ CN(0, sigma^2)`` is drawn from ``rng`` unless given
    explicitly; with neither the link is noiseless.
    """
    try:
        sol = _precode(H, slot, targets, Precoder(precoder))
    except RankDeficientChannel as exc:
        raise SlotFailure(Status.INFEASIBLE, str(exc), where) from exc
    if not sol.ok:
        raise SlotFailure(sol.status, sol.message, where)
    K = len(slot)
    if noise is None and rng is not None:
        g = rng.standard_normal((K, 2))
        noise = targets.sigma * (g[:, 0] + 1j * g[:, 1]) / math.sqrt(2.0)
    det = received_indices(H, sol.x, targets, slot.spec, noise)
    return SlotOutcome(power=sol.power, detected=det)


@lru_cache(maxsize=65536)
def _bound_cached(key: bytes, shape: tuple[int, int], zeta: tuple, sigma2: float) -> float:
    h = np.frombuffer(key, dtype=complex).reshape(shape)
    res = solve_multicast_sdp(SdpProblem.from_channel(h, np.asarray(zeta), sigma2))
    if res.status is not Status.OPTIMAL:
        return math.nan
    return res.trace_value


def multicast_bound(H: ChannelMatrix, zeta, sigma2: float) -> float:
    """Multicast SDP trace for channel ``H``.

    The optimum is linear in ``sigma2 * zeta``, so the program is solved with
    the largest target scaled to one and the result rescaled. A sweep over a
    shared target then costs one solve per channel.
    """
    h = np.ascontiguousarray(H.entries)
    z = np.broadcast_to(np.asarray(zeta, float), (h.shape[0],))
    c = float(np.max(z))
    key = tuple(float(v) / c for v in z)
    return c * float(sigma2) * _bound_cached(h.tobytes(), h.shape, key, 1.0)


def _draws(cfg: SimConfig, c: int):
    sym = [g.integers(0, cfg.order, cfg.n_slots)
           for g in user_streams(cfg.seed, _STREAM_SYMBOLS, c, n=cfg.K)]
    noise = [g.standard_normal((cfg.n_slots, 2))
             for g in user_streams(cfg.seed, _STREAM_NOISE, c, n=cfg.K)]
    symbols = np.stack(sym, axis=1)                      # (slots, K)
    unit_noise = np.stack([(n[:, 0] + 1j * n[:, 1]) / math.sqrt(2.0) for n in noise],
                          axis=1)                        # (slots, K), CN(0, 1)
    return symbols, unit_noise


def _simulate_channel(cfg: SimConfig, c: int, points: Sequence[SimConfig]) -> list[dict]:
    spec = build_constellation(cfg.order)
    symbols, unit_noise = _draws(cfg, c)
    out = []
    for pcfg in points:
        H = generate_rayleigh(pcfg.K, pcfg.M, pcfg.gamma0, pcfg.seed, trial=c)
        targets = pcfg.targets()
        power_sum, n_ok, n_fail = 0.0, 0, 0
        errors = np.zeros(pcfg.K, dtype=np.int64)
        for s in range(pcfg.n_slots):
            slot = SymbolSlot(tuple(symbols[s]), spec)
            try:
                res = run_slot(H, slot, targets, pcfg.precoder,
                               noise=targets.sigma * unit_noise[s],
                               where=f"channel {c} slot {s}")
            except SlotFailure as exc:
                log.debug("%s", exc)
                n_fail += 1
                continue
            power_sum += res.power
            n_ok += 1
            errors += res.detected != symbols[s]
        bound = multicast_bound(H, targets.zeta, pcfg.sigma2) if pcfg.compute_bound else None
        out.append({"power_sum": power_sum, "n_ok": n_ok, "n_fail": n_fail,
                    "errors": errors, "bound": bound})
    return out


def _simulate_chunk(args):
    cfgs, chans, points = args
    return [[_simulate_channel(cfg, c, pts) for cfg, pts in zip(cfgs, points)]
            for c in chans]


def _reduce(cfg: SimConfig, variable: str, value: float, rows: list[dict]) -> MetricsRecord:
    bits = build_constellation(cfg.order).bits_per_symbol
    power_sum = 0.0
    n_ok = n_fail = 0
    errors = np.zeros(cfg.K, dtype=np.int64)
    ratio_sum, ratio_n = 0.0, 0
    bound_sum, bound_n = 0.0, 0
    for r in rows:
        power_sum += r["power_sum"]
        n_ok += r["n_ok"]
        n_fail += r["n_fail"]
        errors += r["errors"]
        if r["n_ok"]:
            rate_c = bits * (1.0 - r["errors"] / r["n_ok"])
            ratio_sum += float(np.sum(rate_c)) / (r["power_sum"] / r["n_ok"])
            ratio_n += 1
        if r["bound"] is not None and not math.isnan(r["bound"]):
            bound_sum += r["bound"]
            bound_n += 1
    total = n_ok + n_fail
    if n_ok == 0:
        nan = np.full(cfg.K, np.nan)
        return MetricsRecord(variable, value, cfg.order, math.nan, nan, nan, nan,
                             math.nan, math.nan, None, 0, errors, n_fail, True)
    avg_power = power_sum / n_ok
    ser, half = ser_interval(errors, n_ok)
    eff = bits * (1.0 - ser)
    return MetricsRecord(
        variable=variable, value=value, order=cfg.order,
        avg_tx_power=avg_power, ser=ser, ser_ci=half, effective_rate=eff,
        energy_efficiency=float(np.sum(eff)) / avg_power,
        energy_efficiency_avg_ratio=ratio_sum / ratio_n,
        ci_lower_bound=(bound_sum / bound_n) if cfg.compute_bound and bound_n else None,
        n_slots=n_ok, n_errors=errors, n_fail=n_fail,
        flagged=n_fail > FAIL_FLAG_FRACTION * total,
    )


def _points(config: SimConfig, variable: str, grid: list[float]) -> list[SimConfig]:
    if variable == "zeta_th":
        return [replace(config, zeta=g) for g in grid]
    if variable == "gamma0":
        return [replace(config, gamma0=g) for g in grid]
    raise ValueError(f"unknown sweep variable {variable!r}; use 'zeta_th' or 'gamma0'")


def run_sweeps(configs: Sequence[SimConfig], variable: str, grid: Sequence[float],
               workers: int = 1) -> list[list[MetricsRecord]]:
    """Run the same sweep for several configs (e.g. one per QAM order).

    The configs must share ``seed``, ``M``, ``K`` and ``n_channels`` so that
    they see the same channel realizations. Each worker task covers a block of
    channel indices for every config, which keeps per-channel caches (the
    multicast bound) warm.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("sweep grid must not be empty")
    configs = list(configs)
    base = configs[0]
    for cfg in configs[1:]:
        if (cfg.seed, cfg.M, cfg.K, cfg.n_channels) != (base.seed, base.M, base.K,
                                                        base.n_channels):
            raise ValueError("configs in one sweep must share seed, M, K and n_channels")
    points = [_points(cfg, variable, grid) for cfg in configs]

    n = base.n_channels
    if workers <= 1:
        per_channel = _simulate_chunk((configs, range(n), points))
    else:
        size = max(1, math.ceil(n / (4 * workers)))
        chunks = [range(i, min(i + size, n)) for i in range(0, n, size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_channel = [r for part in pool.map(_simulate_chunk,
                                                   [(configs, ch, points) for ch in chunks])
                           for r in part]
    out = []
    for k, cfg_points in enumerate(points):
        records = []
        for i, (pcfg, g) in enumerate(zip(cfg_points, grid)):
            rec = _reduce(pcfg, variable, g, [pc[k][i] for pc in per_channel])
            if rec.flagged:
                log.warning("%d-QAM %s=%g: %d failed slots", pcfg.order, variable, g,
                            rec.n_fail)
            records.append(rec)
        out.append(records)
    return out


def run_sweep(config: SimConfig, variable: str, grid: Sequence[float],
              workers: int = 1) -> list[MetricsRecord]:
    """Simulate every grid value of ``variable`` ("zeta_th" or "gamma0").

    Grid values are linear. Returns one record per grid point; results do not
    depend on ``workers``.
    """
    return run_sweeps([config], variable, grid, workers)[0]
