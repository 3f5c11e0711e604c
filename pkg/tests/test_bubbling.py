import math

import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings
from hypothesis import strategies as st

from ultrafunctions.basis import FOURIER_RING, SINE_BOX, BasisSpec, make_quadrature
from ultrafunctions.bubbling import (
    MinimizeOptions,
    barycenter,
    concentration_ratio,
    constraint_value,
    critical_exponent,
    critical_normalize,
    m_table,
    minimize_on_Mp,
    p_branch,
)
from ultrafunctions.dirichlet import stiffness
from ultrafunctions.levels import LevelSchedule
from ultrafunctions.ultrafun import gaussian_bump, project, unit


def _level(theta, p, dim=1):
    spec = BasisSpec(SINE_BOX, theta, dim)
    return spec, make_quadrature(spec, math.ceil(p) + 1)


def fd_ground_state_energy(p, n=400):
    """Independent oracle: finite differences on (0, 1) with L-BFGS on J / (int |u|^p)^(2/p)."""
    h = 1.0 / (n + 1)
    x = np.linspace(h, 1 - h, n)

    def quotient(u):
        padded = np.concatenate(([0.0], u, [0.0]))
        du = np.diff(padded)
        J = np.sum(du**2) / h
        C = h * np.sum(np.abs(u) ** p)
        gJ = 2.0 / h * (du[:-1] - du[1:])
        gC = h * p * np.abs(u) ** (p - 2) * u
        R = J / C ** (2 / p)
        return R, gJ / C ** (2 / p) - (2 / p) * R * gC / C

    res = scipy.optimize.minimize(quotient, np.sin(np.pi * x), jac=True, method="L-BFGS-B", options={"gtol": 1e-12, "ftol": 1e-15, "maxiter": 20000})
    return res.fun


def test_options_validation():
    for bad in (dict(p=2.0), dict(p=4, tol_grad=0), dict(p=4, restarts=0), dict(p=4, init="zero"), dict(p=4, constraint=0)):
        with pytest.raises(ValueError):
            MinimizeOptions(**bad)


def test_quadrature_requirements():
    spec, _ = _level(8, 4)
    with pytest.raises(ValueError):
        minimize_on_Mp(spec, make_quadrature(spec, 2), MinimizeOptions(p=4))
    ring = BasisSpec(FOURIER_RING, 4)
    with pytest.raises(ValueError):
        minimize_on_Mp(ring, make_quadrature(ring, 5), MinimizeOptions(p=4))


def test_critical_exponent():
    assert critical_exponent(3) == 6.0
    assert math.isinf(critical_exponent(2))


def test_one_dimensional_ground_state_matches_finite_differences():
    spec, quad = _level(16, 4)
    res = minimize_on_Mp(spec, quad, MinimizeOptions(p=4))
    assert res.best.converged
    assert res.m == pytest.approx(fd_ground_state_energy(4), rel=1e-3)


def test_restarts_agree_in_one_dimension():
    spec, quad = _level(16, 4)
    res = minimize_on_Mp(spec, quad, MinimizeOptions(p=4, restarts=4, init="random", seed=3))
    ms = np.array([r.m for r in res.runs])
    assert np.all(np.abs(ms - ms.min()) <= 1e-4 * ms.min())
    assert len(res.runs) == 4 and [r.seed for r in res.runs] == [3, 4, 5, 6]


def test_feasibility_and_sign_flip():
    spec, quad = _level(12, 6)
    u, m = minimize_on_Mp(spec, quad, MinimizeOptions(p=6))
    assert abs(constraint_value(u, 6, quad) - 1.0) <= 1e-8
    A = stiffness(spec, quad)
    assert (-u).coeffs @ A @ (-u).coeffs == pytest.approx(m, rel=1e-14)
    assert constraint_value(-u, 6, quad) == pytest.approx(1.0, abs=1e-12)
    assert m > 0


@pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
def test_constraint_scaling(c):
    # u on {C = c} is c^(1/p) times a point of {C = 1}, so m scales by c^(2/p)
    p = 4
    spec, quad = _level(12, p)
    m1 = minimize_on_Mp(spec, quad, MinimizeOptions(p=p)).m
    mc = minimize_on_Mp(spec, quad, MinimizeOptions(p=p, constraint=c)).m
    assert mc == pytest.approx(c ** (2 / p) * m1, rel=1e-8)


def test_nonconvergence_is_flagged():
    spec, quad = _level(12, 4)
    res = minimize_on_Mp(spec, quad, MinimizeOptions(p=4, max_iters=1, restarts=1))
    assert not res.best.converged
    assert res.best.iterations == 1
    assert abs(constraint_value(res.u, 4, quad) - 1.0) <= 1e-8


def test_nested_levels_monotone():
    recs = p_branch(4, LevelSchedule((4, 8, 16)), MinimizeOptions(p=4), space_dim=1)
    ms = [r.m for r in recs]
    assert all(b <= a * (1 + 1e-3) for a, b in zip(ms, ms[1:]))
    assert all(r.converged and r.feasibility <= 1e-8 for r in recs)


def test_barycenter_of_symmetric_function_is_center():
    spec, quad = _level(5, 4, dim=3)
    u = unit(spec, 1)
    u = u * constraint_value(u, 4, quad) ** -0.25
    np.testing.assert_allclose(barycenter(u, 4, quad), [0.5, 0.5, 0.5], atol=1e-8)


def test_barycenter_of_narrow_bump():
    spec, quad = _level(24, 4, dim=2)
    c, w = (0.3, 0.65), 0.05
    u = project(gaussian_bump(c, w), spec, quad)
    u = u * constraint_value(u, 4, quad) ** -0.25
    assert np.linalg.norm(barycenter(u, 4, quad) - c) <= w


def test_concentration_ratio_limits():
    spec, quad = _level(6, 4, dim=2)
    u = unit(spec, 1)
    u = u * constraint_value(u, 4, quad) ** -0.25
    assert concentration_ratio(u, (0.5, 0.5), 2.0, 4, quad) == pytest.approx(1.0, abs=1e-12)
    assert concentration_ratio(u, (0.5, 0.5), 0.0, 4, quad) == 0.0
    r = concentration_ratio(u, (0.5, 0.5), 0.2, 4, quad)
    assert 0 < r < 1


def test_critical_normalize():
    spec, quad = _level(4, 6, dim=3)
    u = critical_normalize(unit(spec, 1) * 3.0, quad)
    assert constraint_value(u, 6.0, quad) == pytest.approx(1.0, abs=1e-12)
    spec1, quad1 = _level(4, 6)
    with pytest.raises(ValueError):
        critical_normalize(unit(spec1, 1), quad1)


def test_m_table_rows_and_thread_independence():
    sched = LevelSchedule((4, 8))
    opts = MinimizeOptions(p=4, restarts=2)
    a = m_table([4, 6], sched, opts, space_dim=1, threads=1)
    b = m_table([4, 6], sched, opts, space_dim=1, threads=2)
    assert [(r.p, r.theta) for r in a] == [(4, 4), (4, 8), (6, 4), (6, 8)]
    for x, y in zip(a, b):
        assert x.m == y.m and np.array_equal(x.barycenter, y.barycenter)
    row = a[0].row()
    assert list(row) == ["N", "p", "theta", "m", "bx", "by", "bz", "conc_r02", "iters", "converged", "seed"]
    assert row["by"] is None and row["bz"] is None
    for r in a:
        assert r.m > 0 and 0.0 <= r.concentration <= 1.0


@settings(max_examples=15, deadline=None)
@given(p=st.floats(2.5, 8.0), seed=st.integers(0, 1000))
def test_minimum_is_positive_and_feasible(p, seed):
    spec, quad = _level(8, p)
    res = minimize_on_Mp(spec, quad, MinimizeOptions(p=p, restarts=2, seed=seed, init="random"))
    assert res.m > 0
    for run in res.runs:
        assert abs(constraint_value(run.u, p, quad) - 1.0) <= 1e-8
    # |u(x)| <= sqrt(x(1-x)) |u'|_2 <= |u'|_2 / 2, so 1 = int |u|^p <= (sqrt(J) / 2)^p and m >= 4
    assert res.m >= 4.0


@pytest.mark.slow
@pytest.mark.parametrize("p", [5.5, 6.0])
def test_barycenter_stable_on_finest_levels(p):
    recs = p_branch(p, LevelSchedule((4, 6, 8)), MinimizeOptions(p=p, restarts=3), space_dim=3)
    fine, finest = recs[-2], recs[-1]
    if fine.converged and finest.converged:
        assert np.linalg.norm(fine.barycenter - finest.barycenter) <= 0.1
    for rec in recs:
        assert len(rec.restart_barycenters) == 3
