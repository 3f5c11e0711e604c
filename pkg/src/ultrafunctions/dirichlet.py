"""Generalized Dirichlet problem ``-Laplace_Phi u = f`` on sine-box levels.

At each level the weak form ``sum_k A_jk u_k = b_j`` is solved with the
stiffness matrix ``A`` of the sine basis and the load ``b_j = <f, e_j>``.
Sources may be smooth functions, Dirac masses, squared Dirac ultrafunctions
or oscillating layers; only the load vector differs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .basis import SINE_BOX, BasisSpec, QuadratureRule, TensorOperator, make_quadrature
from .levels import DEFAULT_TOL, LevelSchedule
from .ultrafun import (
    PointFunction,
    Ultrafunction,
    UltrafunNet,
    as_function,
    classify_diagnostic,
    delta,
    evaluate,
    extend_op,
    gaussian_bump,
    inner,
    pointwise,
    project,
)

SMOOTH = "smooth"
DIRAC = "dirac"
DIRAC_SQUARED = "dirac_squared"
OSCILLATORY = "oscillatory"
COEFF = "coeff"

RESIDUAL_TOL = 1e-10
TEST_WIDTH = 0.06


@dataclass(frozen=True, eq=False)
class SourceSpec:
    """Right-hand side of the Dirichlet problem.

    Use the constructors :meth:`smooth`, :meth:`dirac`, :meth:`dirac_squared`,
    :meth:`oscillatory` and :meth:`coeff` rather than the raw fields.
    The oscillatory source is ``sin(alpha * pi * (n . x))``.
    """

    kind: str
    f: PointFunction | None = None
    y: tuple[float, ...] | None = None
    alpha: float | None = None
    n: tuple[float, ...] | None = None
    u: Ultrafunction | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind in (DIRAC, DIRAC_SQUARED):
            y = tuple(float(c) for c in np.atleast_1d(self.y))
            if not all(0.0 < c < 1.0 for c in y):
                raise ValueError(f"dirac point {y} must be interior to the unit box")
            object.__setattr__(self, "y", y)
        elif self.kind == OSCILLATORY:
            n = tuple(float(c) for c in np.atleast_1d(self.n))
            if abs(math.hypot(*n) - 1.0) > 1e-12:
                raise ValueError(f"direction {n} must have unit length")
            if self.alpha is None or self.alpha < 1:
                raise ValueError(f"alpha must be >= 1, got {self.alpha}")
            object.__setattr__(self, "n", n)
        elif self.kind == SMOOTH:
            if not callable(self.f):
                raise ValueError("smooth source needs a callable f")
        elif self.kind == COEFF:
            if not isinstance(self.u, Ultrafunction):
                raise ValueError("coeff source needs an Ultrafunction")
        else:
            raise ValueError(f"unknown source kind {self.kind!r}")

    @classmethod
    def smooth(cls, f: PointFunction, label: str = "smooth") -> "SourceSpec":
        return cls(SMOOTH, f=f, label=label)

    @classmethod
    def dirac(cls, y) -> "SourceSpec":
        return cls(DIRAC, y=y, label="dirac")

    @classmethod
    def dirac_squared(cls, y) -> "SourceSpec":
        return cls(DIRAC_SQUARED, y=y, label="dirac_squared")

    @classmethod
    def oscillatory(cls, alpha: float, n=(1.0,)) -> "SourceSpec":
        return cls(OSCILLATORY, alpha=float(alpha), n=n, label=f"oscillatory({alpha})")

    @classmethod
    def coeff(cls, u: Ultrafunction) -> "SourceSpec":
        return cls(COEFF, u=u, label="coeff")


def _require_sine(spec: BasisSpec):
    if spec.kind != SINE_BOX:
        raise ValueError(f"the Dirichlet solver needs a sine_box basis, got {spec.kind}")


def stiffness(spec: BasisSpec, quad: QuadratureRule | None = None) -> np.ndarray:
    """``A_jk = sum_q w_q grad e_j(x_q) . grad e_k(x_q)``.

    Assembled axis by axis: on a tensor rule the matrix is a sum of Kronecker
    products of one-dimensional derivative and mass matrices.
    """
    _require_sine(spec)
    quad = quad or make_quadrature(spec)
    op = TensorOperator(spec, quad)
    mass = [(v.T * w) @ v for v, w in zip(op.values, quad.axis_weights)]
    grad = [(d.T * w) @ d for d, w in zip(op.derivs, quad.axis_weights)]
    A = np.zeros((spec.dim, spec.dim))
    for d in range(spec.space_dim):
        term = np.ones((1, 1))
        for a in range(spec.space_dim):
            term = np.kron(term, grad[a] if a == d else mass[a])
        A += term
    return A


def load_vector(f: SourceSpec, spec: BasisSpec, quad: QuadratureRule | None = None) -> np.ndarray:
    """``b_j = <f, e_j>`` for every source kind."""
    _require_sine(spec)
    quad = quad or make_quadrature(spec)
    if f.kind == SMOOTH:
        return project(f.f, spec, quad).coeffs
    if f.kind == DIRAC:
        return delta(spec, f.y).coeffs
    if f.kind == DIRAC_SQUARED:
        if quad.oversample < 3:
            quad = make_quadrature(spec, 3)
        return extend_op(pointwise(np.square), delta(spec, f.y), quad, aliasing_check=False).coeffs
    if f.kind == OSCILLATORY:
        n, alpha = f.n, f.alpha
        if len(n) != spec.space_dim:
            raise ValueError("direction does not match space dimension")
        return project(lambda *x: np.sin(alpha * np.pi * sum(ni * xi for ni, xi in zip(n, x))), spec, quad).coeffs
    if f.u.spec != spec:
        raise ValueError("coefficient source lives on a different basis")
    return f.u.coeffs


def solve_level(f: SourceSpec, spec: BasisSpec, quad: QuadratureRule | None = None) -> Ultrafunction:
    """Galerkin solution on one level via a Cholesky factorization.

    The relative residual ``|Au - b| / |b|`` is stored in ``meta['residual']``;
    a residual above 1e-10 raises :class:`numpy.linalg.LinAlgError`.
    """
    quad = quad or make_quadrature(spec)
    A = stiffness(spec, quad)
    b = load_vector(f, spec, quad)
    u = scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), b)
    bnorm = np.linalg.norm(b)
    residual = float(np.linalg.norm(A @ u - b) / bnorm) if bnorm > 0 else 0.0
    if residual > RESIDUAL_TOL:
        raise np.linalg.LinAlgError(f"Galerkin residual {residual:.3e} exceeds {RESIDUAL_TOL}")
    energy_value = float(-0.5 * b @ u)
    return Ultrafunction(spec, u, {"residual": residual, "energy": energy_value})


def default_tests(space_dim: int) -> list[PointFunction]:
    """Narrow interior Gaussians used as test functions by :func:`solve_net`.

    With width 0.06 and centers 0.4 from the boundary they vanish there to
    ~1e-10, so their sine coefficients decay like exp(-(j pi w)^2 / 2) and
    the actions of convergent nets settle well below the default tolerance.
    """
    centers = [(0.4,) * space_dim, (0.6,) * space_dim]
    return [gaussian_bump(c, TEST_WIDTH) for c in centers]


def solve_net(
    f: SourceSpec,
    schedule: LevelSchedule,
    oversample: float = 2,
    space_dim: int = 1,
    tests: Sequence[PointFunction] | None = None,
    tol: float = DEFAULT_TOL,
    threads: int = 1,
) -> UltrafunNet:
    """Solve on every level of the schedule and tag the resulting net."""

    def level(theta):
        spec = BasisSpec(SINE_BOX, theta, space_dim)
        return solve_level(f, spec, make_quadrature(spec, oversample))

    net = UltrafunNet.build(schedule, level, threads)
    tests = default_tests(space_dim) if tests is None else tests
    return net.with_tag(classify_diagnostic(net, tests, tol))


def energy(u: Ultrafunction, f: SourceSpec, quad: QuadratureRule | None = None) -> float:
    """``J(u) = 1/2 u^T A u - <f, u>``; for a Dirac source ``<f, u> = u(y)``."""
    quad = quad or make_quadrature(u.spec)
    A = stiffness(u.spec, quad)
    c = u.coeffs
    if f.kind == DIRAC:
        pairing = evaluate(u, f.y if u.spec.space_dim > 1 else f.y[0])
    else:
        pairing = load_vector(f, u.spec, quad) @ c
    return float(0.5 * c @ A @ c - np.real(pairing))


def green_1d(x, y: float) -> np.ndarray:
    """Closed-form Green function of -u'' on (0, 1) with zero boundary values."""
    x = np.asarray(x, dtype=float)
    return np.where(x <= y, x * (1.0 - y), y * (1.0 - x))


def green_error(u: Ultrafunction, y: float, exclude: float = 0.1, npts: int = 801) -> float:
    """Max |u - G(., y)| over a uniform grid, excluding |x - y| <= exclude."""
    x = np.linspace(0.0, 1.0, npts)
    x = x[np.abs(x - y) > exclude]
    return float(np.max(np.abs(evaluate(u, x) - green_1d(x, y))))


@dataclass
class OscillatoryReport:
    """Rows ``(level, theta, k, weak_action, sup_node)`` plus the skipped (level, k) pairs."""

    rows: list[dict] = field(default_factory=list)
    skipped: list[tuple[int, int]] = field(default_factory=list)

    def at_level(self, level: int) -> list[dict]:
        return [r for r in self.rows if r["level"] == level]


def oscillatory_report(
    ks: Sequence[int],
    v: PointFunction,
    schedule: LevelSchedule,
    oversample: float = 2,
) -> OscillatoryReport:
    """Weak action and node magnitude of solutions with source sin(k pi x).

    A wavenumber is resolvable at a level only if ``k <= theta/2``; other
    pairs are listed in ``skipped``.
    """
    report = OscillatoryReport()
    for level, theta in enumerate(schedule.dims):
        spec = BasisSpec(SINE_BOX, theta, 1)
        quad = make_quadrature(spec, oversample)
        v_proj = project(v, spec, quad)
        for k in ks:
            if k > theta / 2:
                report.skipped.append((level, int(k)))
                continue
            u = solve_level(SourceSpec.oscillatory(k), spec, quad)
            nodes = as_function(u, quad)(*quad.coordinate_grids())
            report.rows.append(
                {
                    "level": level,
                    "theta": theta,
                    "k": int(k),
                    "weak_action": float(abs(inner(u, v_proj))),
                    "sup_node": float(np.max(np.abs(nodes))),
                }
            )
    return report
