"""Exit criteria. Each test records one PASS/FAIL line, printed after the run."""
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opasqueeze import detection
from opasqueeze.cli import main
from opasqueeze.estimation import (Grid, agrees_with_oracle, fit_pump_sweep, fit_trace, oracle_fit_pump_sweep,
                                   remove_downstream_loss, simulate_sweep)
from opasqueeze.gaussian import GaussianState, loss_channel, quadrature_variance, rotate, squeeze, to_db, vacuum
from opasqueeze.report import run_report
from opasqueeze.squeezer import noise_levels, noise_levels_db, pct_per_w_to_si
from opasqueeze.traces import ScanConfig, synthesize

from conftest import ACCEPTANCE

A = pct_per_w_to_si(1034)
P = 0.330
L = 0.386


@contextmanager
def criterion(n, title):
    notes = []
    try:
        yield notes
    except BaseException as exc:
        ACCEPTANCE[n] = (title, "FAIL", f"{type(exc).__name__}: {str(exc).splitlines()[0][:160]}")
        raise
    ACCEPTANCE[n] = (title, "PASS", "; ".join(notes))


def test_1_operating_point():
    with criterion(1, "operating point: 1034 %/W, 330 mW, L=38.6% -> -4.0 / 14.1 dB (+-0.2 dB)") as notes:
        t0 = time.perf_counter()
        m_db, p_db = noise_levels_db(A, P, L)
        elapsed = time.perf_counter() - t0
        assert abs(m_db - (-4.0)) <= 0.2, m_db
        assert abs(p_db - 14.1) <= 0.2, p_db
        assert elapsed < 0.1
        notes.append(f"computed {m_db:.2f} / {p_db:.2f} dB in {1e3 * elapsed:.2f} ms")


def test_2_loss_budget():
    with criterion(2, "loss budget: total in [0.38, 0.40]; items 25% (+-0.5), 10%, 7% (+-0.5), 2%") as notes:
        module = detection.module_element(0.56)
        coupler = detection.coupler_element(0.45, 0.50)
        det = detection.detector_element(1.16, 1553.3)
        elec = detection.electronic_element(0.02)
        total = detection.compose([module, coupler, det, elec])
        assert abs(100 * module.loss - 25) <= 0.5, module.loss
        assert abs(100 * coupler.loss - 10) <= 1e-12, coupler.loss
        assert abs(100 * det.loss - 7) <= 0.5, det.loss
        assert abs(100 * elec.loss - 2) <= 1e-12, elec.loss
        assert 0.38 <= total <= 0.40, total
        notes.append(f"items {module.loss:.4f}, {coupler.loss:.4f}, {det.loss:.4f}, {elec.loss:.4f}; total {total:.4f}")


def test_3_source_inference():
    with criterion(3, "module-output inference: -5.7 / 14.9 dB (+-0.2 dB)") as notes:
        downstream = detection.compose([
            detection.coupler_element(0.45, 0.50),
            detection.detector_element(1.16, 1553.3),
            detection.electronic_element(0.02),
        ])
        r_minus, r_plus = noise_levels(A, P, L)
        s_minus = to_db(remove_downstream_loss(r_minus, downstream))
        s_plus = to_db(remove_downstream_loss(r_plus, downstream))
        assert abs(s_minus - (-5.7)) <= 0.2, s_minus
        assert abs(s_plus - 14.9) <= 0.2, s_plus
        notes.append(f"downstream loss {downstream:.4f}; computed {s_minus:.2f} / {s_plus:.2f} dB")


# oracle grid for the random cases; three zoom levels resolve the narrow (L, a) valley
ORACLE_GRID = Grid(l_step=0.005, a_step=0.05, a_max=55.0, refine_levels=3)
SWEEP_POWERS = np.round(np.arange(0.05, 0.3301, 0.02), 12)    # 15 points
JITTER_POWERS = np.round(np.arange(0.03, 0.3301, 0.01), 12)   # 31 points


def test_4_fit_recovery():
    with criterion(4, "fit recovery: 100 random (L, a) to 1e-4 rel; 0.1 dB jitter to 2%; oracle within one step") as notes:
        t0 = time.perf_counter()
        rng = np.random.default_rng(20240601)
        worst = 0.0
        for k in range(100):
            L_true, a_true = rng.uniform(0.0, 0.9), rng.uniform(0.1, 50.0)
            sweep = simulate_sweep(a_true, L_true, SWEEP_POWERS)
            fit = fit_pump_sweep(sweep)
            assert fit.converged, (L_true, a_true)
            rel = max(abs(fit["L"] - L_true) / L_true, abs(fit["a"] - a_true) / a_true)
            worst = max(worst, rel)
            assert rel <= 1e-4, (L_true, a_true, fit.params)
            oracle = oracle_fit_pump_sweep(sweep, ORACLE_GRID)
            assert agrees_with_oracle(fit, oracle, ORACLE_GRID), (L_true, a_true, fit.params, oracle.params)

        worst_jit = 0.0
        for seed in range(100):
            sweep = simulate_sweep(A, L, JITTER_POWERS, jitter_db=0.1, seed=seed)
            fit = fit_pump_sweep(sweep)
            rel = max(abs(fit["L"] / L - 1), abs(fit["a"] / A - 1))
            worst_jit = max(worst_jit, rel)
            assert rel <= 0.02, (seed, fit.params)
            if seed < 10:
                assert agrees_with_oracle(fit, oracle_fit_pump_sweep(sweep, ORACLE_GRID), ORACLE_GRID), seed
        elapsed = time.perf_counter() - t0
        assert elapsed < 60.0, elapsed
        notes.append(f"worst noiseless rel err {worst:.1e}; worst jittered rel err {100 * worst_jit:.2f}%; "
                     f"{elapsed:.1f} s")


def test_5_trace_roundtrip():
    with criterion(5, "trace round-trip: 1e-9 dB noiseless; +-0.1 dB at sigma=0.1 dB, N=2000") as notes:
        r_minus, r_plus = noise_levels(A, P, L)
        for offset in (0.0, 0.7, 2.2):
            fit = fit_trace(synthesize(ScanConfig(noise_sigma_db=0.0, phase_offset=offset), r_plus, r_minus))
            assert abs(fit.extra["R_plus_db"] - to_db(r_plus)) <= 1e-9
            assert abs(fit.extra["R_minus_db"] - to_db(r_minus)) <= 1e-9
        worst = 0.0
        for seed in range(20):
            cfg = ScanConfig(noise_sigma_db=0.1, rng_seed=seed, phase_offset=0.3 * seed)
            assert cfg.n_samples == 2000
            fit = fit_trace(synthesize(cfg, r_plus, r_minus))
            err = max(abs(fit.extra["R_plus_db"] - to_db(r_plus)), abs(fit.extra["R_minus_db"] - to_db(r_minus)))
            worst = max(worst, err)
            assert err <= 0.1, (seed, err)
        notes.append(f"worst jittered error {worst:.3f} dB over 20 seeds")


# invariant suite

fractions = st.floats(0.0, 1.0)
squeezings = st.floats(-2.0, 2.0)


@st.composite
def states(draw):
    return loss_channel(rotate(squeeze(vacuum(), draw(squeezings)), draw(st.floats(-7, 7))), draw(fractions))


@settings(max_examples=300, deadline=None)
@given(states(), fractions)
def _loss_affine(s, loss):
    np.testing.assert_allclose(loss_channel(s, loss).cov, (1 - loss) * s.cov + loss * np.eye(2), rtol=1e-12, atol=1e-12)


@settings(max_examples=300, deadline=None)
@given(states(), fractions, fractions)
def _loss_composition(s, l1, l2):
    np.testing.assert_allclose(loss_channel(loss_channel(s, l1), l2).cov,
                               loss_channel(s, 1 - (1 - l1) * (1 - l2)).cov, rtol=1e-12, atol=1e-12)


@settings(max_examples=300, deadline=None)
@given(states(), st.floats(-7, 7))
def _rotation_det(s, theta):
    assert abs(rotate(s, theta).det - s.det) <= 1e-12 * max(1.0, s.det)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 50), st.floats(0, 0.5))
def _purity_product(a, p):
    r_minus, r_plus = noise_levels(a, p, 0.0)
    assert abs(r_minus * r_plus - 1) <= 1e-12


@settings(max_examples=300, deadline=None)
@given(st.floats(0.01, 50), st.floats(0, 0.99), st.floats(0, 0.4), st.floats(1e-3, 0.1))
def _monotone(a, loss, p, dp):
    m1, q1 = noise_levels(a, p, loss)
    m2, q2 = noise_levels(a, p + dp, loss)
    assert m2 < m1 and q2 > q1


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(0, 0.999))
def _removal_roundtrip(R, loss):
    lossy = quadrature_variance(loss_channel(GaussianState(np.diag([R, 1 / R])), loss), 0.0)
    assert abs(remove_downstream_loss(lossy, loss) - R) <= 1e-12 * max(1.0, R)


INVARIANTS = {
    "loss-channel affine form": _loss_affine,
    "loss composition law": _loss_composition,
    "rotation preserves det": _rotation_det,
    "purity product R+R- = 1 at L=0": _purity_product,
    "R+- monotone in pump": _monotone,
    "loss removal round-trip": _removal_roundtrip,
}


def test_6_invariants():
    with criterion(6, "invariant suite (6 property tests)") as notes:
        for name, prop in INVARIANTS.items():
            try:
                prop()
            except Exception as exc:
                raise AssertionError(f"{name}: {exc}") from exc
        notes.append(", ".join(INVARIANTS))


def test_7_report(capsys):
    with criterion(7, "report: every row PASS by default; deterministic") as notes:
        first = run_report()
        second = run_report()
        assert first.all_pass, first.to_table()
        assert first.to_json() == second.to_json()
        assert main(["report"]) == 0
        out = capsys.readouterr().out
        assert out.rstrip().endswith("ALL PASS")
        notes.append(f"{sum(r.status == 'PASS' for r in first.rows)}/{len(first.rows)} rows PASS")
