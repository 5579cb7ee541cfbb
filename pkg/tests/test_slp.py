import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cislp.chanmodel import generate_rayleigh
from cislp.mqam import build_constellation
from cislp.slp import (
    RankDeficientChannel,
    Sense,
    SnrTargets,
    SymbolSlot,
    build_constraints,
    precode_min_power,
    precode_zf_symbol,
    received_indices,
    rowspace_coefficients,
    sinr_constructive,
    sinr_conventional,
    solve_all_active,
)
from cislp.solver import Status, kkt_residuals, solve_enumerate
from cislp.validation import mcipm_instances


def idx(spec, re, im):
    target = (re + 1j * im) * spec.scale / math.sqrt(2)
    return int(np.argmin(np.abs(spec.points - target)))


def rand_h(rng, K, M):
    return (rng.standard_normal((K, M)) + 1j * rng.standard_normal((K, M))) / math.sqrt(2)


# --- constraint construction ----------------------------------------------

def test_qpsk_single_user_rows():
    spec = build_constellation(4)
    h = np.array([[0.7 - 0.2j, 1.1j]])
    cs = build_constraints(h, SymbolSlot((idx(spec, 1, 1),), spec), SnrTargets([1.0], 1.0))
    assert len(cs.rows) == 2 and cs.dim == 4
    assert all(r.sense is Sense.GEQ for r in cs.rows)
    np.testing.assert_allclose([r.rhs for r in cs.rows], 1 / math.sqrt(2), rtol=1e-15)


def test_rows_encode_received_components():
    rng = np.random.default_rng(1)
    spec = build_constellation(16)
    h = rand_h(rng, 2, 3)
    x = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    v = np.r_[x.real, x.imag]
    cs = build_constraints(h, SymbolSlot((idx(spec, 1, 1), idx(spec, 1, 3)), spec),
                           SnrTargets([1.0, 1.0]))
    y = h @ x
    vals = [r.coeffs @ v for r in cs.rows]
    np.testing.assert_allclose(vals, [y[0].real, y[0].imag, y[1].real, y[1].imag], atol=1e-14)


def test_16qam_inner_rows_are_equalities():
    spec = build_constellation(16)
    cs = build_constraints(np.array([[1.0, 0.5j]]), SymbolSlot((idx(spec, 1, 1),), spec),
                           SnrTargets([2.0], 1.0))
    assert [r.sense for r in cs.rows] == [Sense.EQ, Sense.EQ]
    assert cs.rows[0].rhs == pytest.approx(math.sqrt(2.0) / math.sqrt(10), rel=1e-14)


def test_8qam_negative_outer_is_sign_flipped():
    spec = build_constellation(8)
    h = np.array([[0.3 + 0.4j, -1.0]])
    zeta, sigma = 5.0, 0.8
    cs = build_constraints(h, SymbolSlot((idx(spec, -3, 1),), spec), SnrTargets([zeta], sigma))
    re_row, im_row = cs.rows
    assert re_row.sense is Sense.GEQ and im_row.sense is Sense.GEQ
    # alpha_r <= sigma sqrt(zeta/3) (-3)/sqrt(2), stored as -alpha_r >= ...
    thr = sigma * math.sqrt(zeta / 3) * (-3) / math.sqrt(2)
    assert re_row.rhs == pytest.approx(-thr, rel=1e-14)
    np.testing.assert_allclose(re_row.coeffs, -np.r_[h.real[0], -h.imag[0]])
    assert im_row.rhs == pytest.approx(sigma * math.sqrt(zeta / 3) / math.sqrt(2), rel=1e-14)


@pytest.mark.parametrize("order", [8, 16])
def test_case_tables(order):
    """Every point reproduces the per-point constraint table of the 8/16-QAM cases."""
    spec = build_constellation(order)
    raw_re = (-3, -1, 1, 3)
    raw_im = (-1, 1) if order == 8 else (-3, -1, 1, 3)
    scale = 1 / math.sqrt(3) if order == 8 else 1 / math.sqrt(5)
    for a in raw_re:
        for b in raw_im:
            cs = build_constraints(np.array([[1.0]]), SymbolSlot((idx(spec, a, b),), spec),
                                   SnrTargets([1.0]))
            for row, coord, top in ((cs.rows[0], a, 3), (cs.rows[1], b, max(raw_im))):
                thr = scale * coord / math.sqrt(2)
                if abs(coord) < top:
                    assert row.sense is Sense.EQ and row.rhs == pytest.approx(thr)
                else:
                    s = np.sign(coord)
                    assert row.sense is Sense.GEQ
                    assert row.rhs == pytest.approx(s * thr)
                    assert row.coeffs[0] == pytest.approx(s * (1.0 if row is cs.rows[0] else 0.0))


def test_dimension_mismatch():
    spec = build_constellation(4)
    with pytest.raises(ValueError):
        build_constraints(np.ones((2, 2)), SymbolSlot((0,), spec), SnrTargets([1.0]))
    with pytest.raises(ValueError):
        build_constraints(np.ones((2, 2)), SymbolSlot((0, 1), spec), SnrTargets([1.0, 1.0, 1.0]))


# --- min-power precoder ------------------------------------------------------

@pytest.mark.parametrize("order", [4, 8, 16])
def test_single_user_is_mrt(order):
    rng = np.random.default_rng(order)
    spec = build_constellation(order)
    for k in range(order):
        h = rand_h(rng, 1, 3)
        zeta, sigma = 7.0, 0.6
        sol = precode_min_power(h, SymbolSlot((k,), spec), SnrTargets([zeta], sigma))
        hn2 = np.linalg.norm(h) ** 2
        d = spec.points[k]
        x_ref = sigma * math.sqrt(zeta) * d * h.conj().ravel() / hn2
        assert sol.status is Status.OPTIMAL
        np.testing.assert_allclose(sol.x, x_ref, atol=1e-13)
        assert sol.power == pytest.approx(zeta * sigma**2 * abs(d) ** 2 / hn2, rel=1e-12)
        fit = rowspace_coefficients(sol, h)
        assert fit.nu[0] == pytest.approx(sigma * math.sqrt(zeta) * d / hn2, rel=1e-12)


def test_qpsk_single_user_power():
    spec = build_constellation(4)
    h = np.array([[1.0 + 1j, 0.5]])
    sol = precode_min_power(h, SymbolSlot((2,), spec), SnrTargets([3.0], 1.0))
    assert sol.power == pytest.approx(3.0 / np.linalg.norm(h) ** 2, rel=1e-13)


def test_orthogonal_rows_decouple():
    spec = build_constellation(4)
    h = np.array([[1.0, 1j], [0.5, -0.5j]])
    zeta = np.array([2.0, 9.0])
    for a in range(4):
        for b in range(4):
            sol = precode_min_power(h, SymbolSlot((a, b), spec), SnrTargets(zeta, 1.0))
            ref = float(np.sum(zeta / np.linalg.norm(h, axis=1) ** 2))
            assert sol.power == pytest.approx(ref, rel=1e-12)
            x_ref = sum(math.sqrt(zeta[j]) * spec.points[s] * h[j].conj() / np.linalg.norm(h[j]) ** 2
                        for j, s in enumerate((a, b)))
            np.testing.assert_allclose(sol.x, x_ref, atol=1e-13)


def test_power_scaling():
    for H, slot, tg in mcipm_instances(16, 30, seed=3):
        p1 = precode_min_power(H, slot, tg).power
        for c in (0.25, 2.0, 10.0):
            assert precode_min_power(H, slot, tg.scaled(c)).power == pytest.approx(c * p1, rel=1e-10)


@pytest.mark.parametrize("order", [4, 8, 16])
def test_kkt_and_oracle(order):
    for H, slot, tg in mcipm_instances(order, 150, seed=21, M=3, K=2):
        sol = precode_min_power(H, slot, tg)
        p = sol.constraints.to_problem()
        r = kkt_residuals(p, np.r_[sol.x.real, sol.x.imag], sol.duals)
        assert r["stationarity"] <= 1e-8 and r["comp_slack"] <= 1e-8
        assert r["feasibility"] <= 1e-9 and r["min_dual"] >= -1e-9
        ref = solve_enumerate(p)
        assert sol.power == pytest.approx(ref.objective, rel=1e-9)


def test_relaxing_equalities_never_increases_power():
    from cislp.solver import LeastNormProblem, solve_active_set
    rng = np.random.default_rng(4)
    for H, slot, tg in mcipm_instances(16, 100, seed=5):
        p = build_constraints(H, slot, tg).to_problem()
        base = solve_active_set(p).objective
        for i in np.flatnonzero(p.is_eq):
            # relax toward the direction the row's own dual prefers
            s = rng.choice([-1.0, 1.0])
            A, b, eq = p.A.copy(), p.b.copy(), p.is_eq.copy()
            A[i] *= s
            b[i] *= s
            eq[i] = False
            relaxed = solve_active_set(LeastNormProblem(A, b, eq)).objective
            assert relaxed <= base * (1 + 1e-12) + 1e-12


def test_noiseless_detection():
    for order in (4, 8, 16):
        for H, slot, tg in mcipm_instances(order, 100, seed=8):
            sol = precode_min_power(H, slot, tg)
            assert list(received_indices(H, sol.x, tg, slot.spec)) == list(slot.indices)


# --- zero forcing ------------------------------------------------------------

def test_zf_exact_points():
    for H, slot, tg in mcipm_instances(16, 20, seed=2):
        zf = precode_zf_symbol(H, slot, tg)
        np.testing.assert_allclose(H.entries @ zf.x, tg.amplitude * slot.symbols, atol=1e-10)
        h = H.entries
        ref = h.conj().T @ np.linalg.solve(h @ h.conj().T, tg.amplitude * slot.symbols)
        np.testing.assert_allclose(zf.x, ref, rtol=1e-9, atol=1e-12)


def test_zf_single_user_equals_mrt():
    spec = build_constellation(8)
    h = np.array([[0.2 + 1j, -0.7, 0.1j]])
    slot, tg = SymbolSlot((5,), spec), SnrTargets([4.0], 1.0)
    np.testing.assert_allclose(precode_zf_symbol(h, slot, tg).x,
                               precode_min_power(h, slot, tg).x, atol=1e-14)


def test_zf_equals_min_power_for_interior_symbols():
    spec = build_constellation(16)
    h = np.array([[1.0, 1j], [1.0, -1j]])
    slot = SymbolSlot((idx(spec, 1, -1), idx(spec, -1, 1)), spec)
    tg = SnrTargets([3.0, 5.0])
    assert precode_zf_symbol(h, slot, tg).power == pytest.approx(
        precode_min_power(h, slot, tg).power, rel=1e-14)


def test_zf_rank_deficient():
    spec = build_constellation(4)
    h = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(RankDeficientChannel):
        precode_zf_symbol(h, SymbolSlot((0, 1), spec), SnrTargets([1.0, 1.0]))
    with pytest.raises(RankDeficientChannel):
        precode_zf_symbol(np.ones((3, 2)), SymbolSlot((0, 1, 2), spec), SnrTargets([1.0] * 3))


@pytest.mark.parametrize("order", [4, 8, 16])
def test_dominance_over_zf(order):
    gaps = []
    for H, slot, tg in mcipm_instances(order, 300, seed=17):
        mc = precode_min_power(H, slot, tg).power
        zf = precode_zf_symbol(H, slot, tg).power
        assert mc <= zf + 1e-9
        gaps.append(zf - mc)
    if order == 4:
        assert np.mean(gaps) > 0


# --- all-active closed form ------------------------------------------------

def test_all_active_single_user():
    spec = build_constellation(4)
    h = np.array([[0.3 - 1j, 2.0]])
    slot, tg = SymbolSlot((3,), spec), SnrTargets([6.0], 1.0)
    a, m = solve_all_active(h, slot, tg), precode_min_power(h, slot, tg)
    assert a.status is Status.OPTIMAL
    np.testing.assert_allclose(a.x, m.x, atol=1e-14)


def test_all_active_interior_slot():
    spec = build_constellation(16)
    rng = np.random.default_rng(0)
    h = rand_h(rng, 2, 2)
    slot = SymbolSlot((idx(spec, 1, 1), idx(spec, -1, 1)), spec)
    tg = SnrTargets([10.0, 10.0])
    a, m = solve_all_active(h, slot, tg), precode_min_power(h, slot, tg)
    assert a.status is Status.OPTIMAL
    assert a.power == pytest.approx(m.power, rel=1e-12)


def test_all_active_aligned_channels():
    spec = build_constellation(4)
    rng = np.random.default_rng(3)
    seen = set()
    for _ in range(50):
        h1 = rand_h(rng, 1, 3)[0]
        h2 = h1 * np.exp(0.3j) + 0.05 * rand_h(rng, 1, 3)[0]
        h = np.vstack([h1, h2])
        k = int(rng.integers(0, 4))
        slot, tg = SymbolSlot((k, k), spec), SnrTargets([3.0, 3.0])
        a, m = solve_all_active(h, slot, tg), precode_min_power(h, slot, tg)
        seen.add(a.status)
        assert a.status in (Status.OPTIMAL, Status.NOT_APPLICABLE)
        if a.status is Status.OPTIMAL:
            np.testing.assert_allclose(a.x, m.x, atol=1e-8 * max(1.0, np.linalg.norm(m.x)))
        else:
            assert m.power <= a.power + 1e-9
    assert Status.NOT_APPLICABLE in seen


def test_all_active_singular():
    spec = build_constellation(4)
    slot, tg = SymbolSlot((0, 1, 2), spec), SnrTargets([1.0] * 3)
    assert solve_all_active(np.ones((3, 2)), slot, tg).status is Status.NUMERICAL_FAILURE


# --- row-space and SINR diagnostics -----------------------------------------

def test_rowspace_residual_of_perturbation():
    rng = np.random.default_rng(6)
    spec = build_constellation(4)
    h = rand_h(rng, 2, 4)
    sol = precode_min_power(h, SymbolSlot((0, 3), spec), SnrTargets([2.0, 2.0]))
    assert rowspace_coefficients(sol, h).residual <= 1e-8 * np.linalg.norm(sol.x)
    # vector orthogonal to both rows
    null = np.linalg.svd(h)[2][2:].conj()
    pert = 0.37 * null[0]
    sol.x = sol.x + pert
    assert rowspace_coefficients(sol, h).residual == pytest.approx(np.linalg.norm(pert), rel=1e-10)


def test_sinr_conventional_zf():
    rng = np.random.default_rng(2)
    h = rand_h(rng, 2, 2)
    W = np.linalg.pinv(h)
    W /= np.linalg.norm(W, axis=0)
    p = np.array([2.0, 3.0])
    g = sinr_conventional(h, W, p, sigma=0.5)
    np.testing.assert_allclose(g, p * np.abs(np.diag(h @ W)) ** 2 / 0.25, rtol=1e-10)


def test_sinr_conventional_identity():
    g = sinr_conventional(np.eye(2), np.eye(2), [1.0, 1.0], sigma=1.0)
    np.testing.assert_allclose(g, [1.0, 1.0])
    h = np.array([[1.0, 0.5], [0.25, 1.0]])
    g = sinr_conventional(h, np.eye(2), [2.0, 1.0], sigma=1.0)
    np.testing.assert_allclose(g, [2.0 / (0.25 + 1), 1.0 / (2 * 0.0625 + 1)])


def test_sinr_single_user_is_snr():
    h = np.array([[1.0, 1j]])
    w = np.array([[1.0], [-1j]]) / math.sqrt(2)
    assert sinr_conventional(h, w, [4.0], sigma=2.0)[0] == pytest.approx(4.0 * 2 / 4)
    assert sinr_constructive(h, 2 * w.ravel(), sigma=2.0)[0] == pytest.approx(8.0 / 4)


def test_sinr_constructive_zf():
    h = np.array([[1.0, 0.5], [0.25, 1.0]])
    x = np.array([1.0 + 1j, -0.5])
    np.testing.assert_allclose(sinr_constructive(h, x, 1.0), np.abs(h @ x) ** 2)
    g = sinr_constructive(np.eye(2), x, 0.5)
    np.testing.assert_allclose(g, np.abs(x) ** 2 / 0.25)


@given(st.integers(0, 10_000), st.sampled_from([4, 8, 16]))
@settings(max_examples=60, deadline=None)
def test_row_space_property(seed, order):
    rng = np.random.default_rng(seed)
    spec = build_constellation(order)
    K, M = int(rng.integers(1, 4)), int(rng.integers(1, 5))
    h = rand_h(rng, K, M)
    slot = SymbolSlot(tuple(rng.integers(0, order, K)), spec)
    sol = precode_min_power(h, slot, SnrTargets(rng.uniform(0.5, 20, K)))
    if sol.status is Status.OPTIMAL:
        assert rowspace_coefficients(sol, h).residual <= 1e-8 * max(np.linalg.norm(sol.x), 1e-300)
    else:
        assert K > M and sol.status is Status.INFEASIBLE
