"""Invariant suite behind the ``validate`` command.

Each check draws its own random instances from a fixed seed and reports a
single pass/fail line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chanmodel import generate_rayleigh
from .mqam import build_constellation, detect
from .slp import (
    SnrTargets,
    SymbolSlot,
    build_constraints,
    precode_min_power,
    precode_zf_symbol,
    received_indices,
    rowspace_coefficients,
)
from .solver.qp import LeastNormProblem, Status, kkt_residuals, solve_active_set, solve_enumerate
from .solver.sdp import SdpProblem, solve_multicast_sdp

__all__ = ["Check", "random_least_norm_problem", "run_validation", "mcipm_instances"]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def random_least_norm_problem(rng: np.random.Generator, max_dim: int = 8,
                              max_ineq: int = 6) -> LeastNormProblem:
    """Random least-norm program with up to ``max_ineq`` inequality rows and
    at most ``dim - 1`` equality rows."""
    n = int(rng.integers(1, max_dim + 1))
    m_in = int(rng.integers(0, max_ineq + 1))
    m_eq = int(rng.integers(0, min(n - 1, 3) + 1))
    return LeastNormProblem.from_blocks(
        n, rng.standard_normal((m_eq, n)), rng.standard_normal(m_eq),
        rng.standard_normal((m_in, n)), rng.standard_normal(m_in))


def mcipm_instances(order: int, count: int, seed: int, M: int = 2, K: int = 2,
                    zeta_db: tuple[float, float] = (0.0, 20.0)):
    """Yield ``(H, slot, targets)`` with Rayleigh channels, uniform symbols and
    per-user targets drawn uniformly in dB."""
    spec = build_constellation(order)
    rng = np.random.default_rng([seed, order])
    for i in range(count):
        H = generate_rayleigh(K, M, 1.0, seed, trial=1_000_000 * order + i)
        slot = SymbolSlot(tuple(rng.integers(0, order, K)), spec)
        zeta = 10.0 ** (rng.uniform(*zeta_db, K) / 10.0)
        yield H, slot, SnrTargets(zeta, 1.0)


def _oracle_check(n: int, seed: int) -> Check:
    rng = np.random.default_rng(seed)
    worst, mism = 0.0, 0
    for _ in range(n):
        p = random_least_norm_problem(rng)
        a, e = solve_active_set(p), solve_enumerate(p)
        if a.status != e.status:
            mism += 1
            continue
        if a.status is Status.OPTIMAL:
            gap = abs(a.objective - e.objective) / max(e.objective, 1e-300)
            if e.objective == 0.0:
                gap = abs(a.objective)
            worst = max(worst, gap)
    ok = mism == 0 and worst <= 1e-9
    return Check("oracle_equivalence", ok,
                 f"{n} instances, status mismatches {mism}, max rel objective gap {worst:.2e}")


def _mcipm_checks(n: int, seed: int) -> list[Check]:
    stat = cs = dual = rs = 0.0
    dom_viol = 0
    not_opt = 0
    det_bad = 0
    scale_err = 0.0
    gaps = {}
    for order in (4, 8, 16):
        gaps[order] = []
        for H, slot, tg in mcipm_instances(order, n, seed):
            sol = precode_min_power(H, slot, tg)
            if not sol.ok:
                not_opt += 1
                continue
            p = sol.constraints.to_problem()
            v = np.r_[sol.x.real, sol.x.imag]
            r = kkt_residuals(p, v, sol.duals)
            stat = max(stat, r["stationarity"])
            cs = max(cs, r["comp_slack"])
            dual = min(dual, r["min_dual"])
            fit = rowspace_coefficients(sol, H)
            rs = max(rs, fit.residual / max(np.linalg.norm(sol.x), 1e-300))
            zf = precode_zf_symbol(H, slot, tg)
            if sol.power > zf.power + 1e-9:
                dom_viol += 1
            gaps[order].append(zf.power - sol.power)
            if np.any(received_indices(H, sol.x, tg, slot.spec) != np.asarray(slot.indices)):
                det_bad += 1
            s2 = precode_min_power(H, slot, tg.scaled(3.0))
            scale_err = max(scale_err, abs(s2.power / sol.power - 3.0) / 3.0)
    total = 3 * n
    return [
        Check("kkt_certificate", not_opt == 0 and stat <= 1e-8 and cs <= 1e-8
              and dual >= -1e-9 and rs <= 1e-8,
              f"{total} instances, non-optimal {not_opt}, stationarity {stat:.1e}, "
              f"comp. slackness {cs:.1e}, min dual {dual:.1e}, row-space residual {rs:.1e}"),
        Check("zf_dominance", dom_viol == 0 and np.mean(gaps[4]) > 0,
              f"violations {dom_viol}, mean ZF-MCIPM gap 4/8/16-QAM "
              + "/".join(f"{np.mean(gaps[o]):.4g}" for o in (4, 8, 16))),
        Check("target_scaling", scale_err <= 1e-10,
              f"max relative error of power(3 zeta)/power(zeta) = 3: {scale_err:.1e}"),
        Check("noiseless_detection", det_bad == 0,
              f"{det_bad} of {total} slots detected incorrectly without noise"),
    ]


def _detect_roundtrip() -> Check:
    bad = 0
    for order in (4, 8, 16):
        spec = build_constellation(order)
        bad += sum(detect(spec, p) != k for k, p in enumerate(spec.points))
    return Check("detect_roundtrip", bad == 0, f"{bad} constellation points misdetected")


def _sdp_checks(seed: int) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for M in (2, 3):
        h = rng.standard_normal((1, M)) + 1j * rng.standard_normal((1, M))
        zeta = float(rng.uniform(1, 10))
        res = solve_multicast_sdp(SdpProblem.from_channel(h, zeta))
        worst = max(worst, abs(res.trace_value / (zeta / np.linalg.norm(h) ** 2) - 1))
        # orthogonal rows via a random unitary
        U = np.linalg.qr(rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M)))[0]
        g = rng.uniform(0.3, 2.0, 2)
        h2 = g[:, None] * U[:2].conj()
        z2 = rng.uniform(1, 10, 2)
        res = solve_multicast_sdp(SdpProblem.from_channel(h2, z2))
        ref = float(np.sum(z2 / np.linalg.norm(h2, axis=1) ** 2))
        worst = max(worst, abs(res.trace_value / ref - 1))
    return Check("multicast_sdp_closed_form", worst <= 1e-6,
                 f"max relative error vs closed form {worst:.1e}")


def run_validation(quick: bool = False, seed: int = 0) -> list[Check]:
    n_oracle = 500 if quick else 10_000
    n_mcipm = 50 if quick else 1000
    checks = [_detect_roundtrip(), _oracle_check(n_oracle, seed)]
    checks += _mcipm_checks(n_mcipm, seed)
    checks.append(_sdp_checks(seed))
    return checks
