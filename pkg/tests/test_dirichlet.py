import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from ultrafunctions.basis import FOURIER_RING, SINE_BOX, BasisSpec, make_quadrature
from ultrafunctions.dirichlet import (
    SourceSpec,
    default_tests,
    energy,
    green_1d,
    green_error,
    load_vector,
    oscillatory_report,
    solve_level,
    solve_net,
    stiffness,
)
from ultrafunctions.levels import LevelSchedule
from ultrafunctions.ultrafun import DISTRIBUTIONAL_LIKE, PROPER_LIKE, STANDARD_LIKE, Ultrafunction, delta, evaluate

SIN = SourceSpec.smooth(lambda x: np.sin(np.pi * x))


def test_stiffness_is_diagonal_laplacian():
    A = stiffness(BasisSpec(SINE_BOX, 6))
    np.testing.assert_allclose(A, np.diag((np.arange(1, 7) * np.pi) ** 2), atol=1e-9)
    spec = BasisSpec(SINE_BOX, 3, 2)
    A2 = stiffness(spec)
    expect = [np.pi**2 * (a * a + b * b) for a in range(1, 4) for b in range(1, 4)]
    np.testing.assert_allclose(A2, np.diag(expect), atol=1e-9)


def test_stiffness_rejects_other_bases():
    with pytest.raises(ValueError):
        stiffness(BasisSpec(FOURIER_RING, 4))


def test_smooth_source_closed_form():
    u = solve_level(SIN, BasisSpec(SINE_BOX, 16))
    assert abs(u.coeffs[0] - 1 / (math.sqrt(2) * math.pi**2)) <= 1e-12
    assert np.max(np.abs(u.coeffs[1:])) <= 1e-12
    assert u.meta["residual"] <= 1e-10
    # energy at the solution is -b.u/2 = -1/(4 pi^2)
    assert u.meta["energy"] == pytest.approx(-1 / (4 * math.pi**2), abs=1e-14)


def test_smooth_source_2d():
    f = SourceSpec.smooth(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    u = solve_level(f, BasisSpec(SINE_BOX, 5, 2))
    # u = f / (2 pi^2); e_(1,1) = 2 sin sin, so the coefficient is 1 / (4 pi^2)
    assert abs(u.coeffs[0] - 1 / (4 * math.pi**2)) <= 1e-12
    assert np.max(np.abs(u.coeffs[1:])) <= 1e-12


def test_dirac_solution_is_truncated_green_series():
    spec = BasisSpec(SINE_BOX, 32)
    u = solve_level(SourceSpec.dirac(0.3), spec)
    j = np.arange(1, 33)
    np.testing.assert_allclose(u.coeffs, math.sqrt(2) * np.sin(j * np.pi * 0.3) / (j * np.pi) ** 2, atol=1e-14)


def test_green_error_decreases():
    errs = [green_error(solve_level(SourceSpec.dirac(0.5), BasisSpec(SINE_BOX, t)), 0.5) for t in (16, 32, 64)]
    assert errs[-1] <= 1e-2
    assert errs[0] > errs[1] > errs[2]


def test_green_closed_form():
    assert green_1d(0.25, 0.5) == pytest.approx(0.125)
    assert green_1d(0.75, 0.5) == pytest.approx(0.125)
    assert green_1d(0.5, 0.3) == pytest.approx(0.3 * 0.5)


def test_dirac_squared_load_matches_triple_integrals():
    spec = BasisSpec(SINE_BOX, 4)
    y = 0.3
    b = load_vector(SourceSpec.dirac_squared(y), spec)
    e = lambda j, x: math.sqrt(2) * math.sin(j * math.pi * x)
    for j in range(1, 5):
        ref = 0.0
        for a in range(1, 5):
            for c in range(1, 5):
                val, _ = integrate.quad(lambda x: e(a, x) * e(c, x) * e(j, x), 0, 1)
                ref += e(a, y) * e(c, y) * val
        assert b[j - 1] == pytest.approx(ref, abs=1e-12)


def test_oscillatory_source_weak_action_closed_form():
    # u = sin(k pi x) / (k pi)^2 and (u, 1 + x) = (1 - 2(-1)^k) / (k pi)^3
    sched = LevelSchedule((64, 128))
    rep = oscillatory_report([4, 8, 16, 32], lambda x: 1.0 + x, sched)
    for row in rep.rows:
        k = row["k"]
        assert row["weak_action"] == pytest.approx(abs(1 - 2 * (-1) ** k) / (k * math.pi) ** 3, rel=1e-10)
        assert row["sup_node"] == pytest.approx(1 / (k * math.pi) ** 2, rel=2e-2)
    assert rep.skipped == []


def test_oscillatory_report_skips_unresolved():
    rep = oscillatory_report([4, 8], lambda x: 1.0 + x, LevelSchedule((8, 16)))
    assert rep.skipped == [(0, 8)]
    assert [r["k"] for r in rep.at_level(1)] == [4, 8]


@pytest.mark.parametrize(
    "make",
    [
        lambda: SourceSpec.dirac(0.0),
        lambda: SourceSpec.dirac((0.5, 1.2)),
        lambda: SourceSpec.oscillatory(0.5),
        lambda: SourceSpec.oscillatory(4, (1.0, 1.0)),
        lambda: SourceSpec.smooth(3.0),
        lambda: SourceSpec("magic"),
    ],
)
def test_source_validation(make):
    with pytest.raises(ValueError):
        make()


def test_coeff_source_and_mismatch():
    spec = BasisSpec(SINE_BOX, 4)
    u = solve_level(SourceSpec.coeff(Ultrafunction(spec, [1.0, 0, 0, 0])), spec)
    assert u.coeffs[0] == pytest.approx(1 / math.pi**2)
    with pytest.raises(ValueError):
        solve_level(SourceSpec.coeff(Ultrafunction(spec, [1.0, 0, 0, 0])), BasisSpec(SINE_BOX, 5))


def test_solve_net_tags():
    sched = LevelSchedule((8, 16, 32, 64))
    assert solve_net(SIN, sched).tag == STANDARD_LIKE
    assert solve_net(SourceSpec.dirac(0.5), sched).tag == DISTRIBUTIONAL_LIKE
    net = solve_net(SourceSpec.dirac_squared(0.5), sched)
    assert net.tag == PROPER_LIKE
    act = np.abs(net.action(default_tests(1)[0]).values())
    assert np.all(act[1:] / act[:-1] >= 2.0)


def test_solve_net_threads_identical():
    sched = LevelSchedule((8, 16, 32))
    a = solve_net(SourceSpec.dirac(0.3), sched, threads=1)
    b = solve_net(SourceSpec.dirac(0.3), sched, threads=3)
    for u, v in zip(a.levels, b.levels):
        assert np.array_equal(u.coeffs, v.coeffs)


def test_energy_dirac_pairing_is_point_value():
    spec = BasisSpec(SINE_BOX, 16)
    u = solve_level(SourceSpec.dirac(0.3), spec)
    # J(u) = u^T A u / 2 - u(0.3) equals -u(0.3)/2 at the solution
    assert energy(u, SourceSpec.dirac(0.3)) == pytest.approx(-0.5 * evaluate(u, 0.3), abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), eps=st.floats(1e-3, 1.0))
def test_solution_minimizes_energy(seed, eps):
    spec = BasisSpec(SINE_BOX, 12)
    f = SourceSpec.smooth(lambda x: x * (1 - x) * np.exp(x))
    u = solve_level(f, spec)
    v = np.random.default_rng(seed).standard_normal(12)
    w = Ultrafunction(spec, u.coeffs + eps * v)
    assert energy(w, f) >= energy(u, f)


@settings(max_examples=30, deadline=None)
@given(y=st.floats(0.05, 0.95))
def test_residual_is_small(y):
    u = solve_level(SourceSpec.dirac(y), BasisSpec(SINE_BOX, 24))
    assert u.meta["residual"] <= 1e-10
