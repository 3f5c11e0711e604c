"""Ultrafunctions at one level and nets of them across levels.

An :class:`Ultrafunction` is a coefficient vector over a truncated orthonormal
basis.  Functions, functionals and nonlinear operators are brought into the
span by quadrature projection; across a :class:`LevelSchedule` the same
construction yields an :class:`UltrafunNet` whose tail behaviour is read by
:func:`classify_diagnostic`.

Pointwise functions passed to :func:`project` and friends take one coordinate
array per axis, ``f(x)`` in 1-D, ``f(x, y)`` in 2-D, and must broadcast like
numpy ufuncs.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .basis import (
    BasisSpec,
    QuadratureRule,
    TensorOperator,
    make_quadrature,
    point_matrix,
)
from .levels import DEFAULT_TOL, FINITE, INFINITESIMAL, LambdaNet, LevelSchedule, classify
from ._fmt import dumps

STANDARD_LIKE = "standard-like"
DISTRIBUTIONAL_LIKE = "distributional-like"
PROPER_LIKE = "proper-like"

PointFunction = Callable[..., np.ndarray]


class NonFiniteError(ValueError):
    """A pointwise function produced a non-finite value at a quadrature node."""

    def __init__(self, node, value):
        self.node = tuple(float(c) for c in np.atleast_1d(node))
        self.value = value
        super().__init__(f"non-finite value {value!r} at node {self.node}")


class SpecMismatch(ValueError):
    """Ultrafunctions over different bases were combined."""


@dataclass(frozen=True, eq=False)
class Ultrafunction:
    """``u = sum_j coeffs[j-1] e_j`` over ``spec``.

    ``meta`` carries diagnostics such as the aliasing estimate of a
    nonlinear extension or the residual of a linear solve.
    """

    spec: BasisSpec
    coeffs: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.array(self.coeffs, copy=True)
        if c.dtype.kind not in "fc":
            c = c.astype(float)
        c = c.reshape(-1)
        if c.size != self.spec.dim:
            raise ValueError(f"expected {self.spec.dim} coefficients, got {c.size}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def __call__(self, x):
        return evaluate(self, x)

    def _same(self, other):
        if not isinstance(other, Ultrafunction) or other.spec != self.spec:
            raise SpecMismatch("ultrafunctions live on different bases")

    def __add__(self, other):
        self._same(other)
        return Ultrafunction(self.spec, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._same(other)
        return Ultrafunction(self.spec, self.coeffs - other.coeffs)

    def __neg__(self):
        return Ultrafunction(self.spec, -self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, Ultrafunction):
            return NotImplemented
        return Ultrafunction(self.spec, self.coeffs * scalar)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def to_dict(self) -> dict:
        if np.iscomplexobj(self.coeffs):
            coeffs = [[float(c.real), float(c.imag)] for c in self.coeffs]
        else:
            coeffs = [float(c) for c in self.coeffs]
        return {
            "basis_kind": self.spec.kind,
            "space_dim": self.spec.space_dim,
            "theta": list(self.spec.theta),
            "coeffs": coeffs,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    @classmethod
    def from_dict(cls, record: dict) -> "Ultrafunction":
        spec = BasisSpec(record["basis_kind"], tuple(record["theta"]), int(record["space_dim"]))
        raw = record["coeffs"]
        if raw and isinstance(raw[0], (list, tuple)):
            coeffs = np.array([complex(re, im) for re, im in raw])
        else:
            coeffs = np.array(raw, dtype=float)
        return cls(spec, coeffs)


def zero(spec: BasisSpec) -> Ultrafunction:
    return Ultrafunction(spec, np.zeros(spec.dim, dtype=complex if spec.is_complex else float))


def unit(spec: BasisSpec, j: int) -> Ultrafunction:
    """Coefficient vector of the basis function e_j (1-based)."""
    c = np.zeros(spec.dim, dtype=complex if spec.is_complex else float)
    c[j - 1] = 1.0
    return Ultrafunction(spec, c)


def evaluate(u: Ultrafunction, x):
    """``sum_j u_j e_j(x)`` at one point (scalar result) or at an ``(n, N)`` array."""
    pts = u.spec.check_point(x)
    vals = point_matrix(u.spec, pts) @ u.coeffs
    if np.ndim(x) == 0 or (np.ndim(x) == 1 and u.spec.space_dim > 1 and len(x) == u.spec.space_dim):
        return vals[0]
    return vals


def evaluate_grad(u: Ultrafunction, x) -> np.ndarray:
    """Gradient of u at points, shape ``(npts, N)``."""
    pts = u.spec.check_point(x)
    return np.stack([point_matrix(u.spec, pts, derivative=d) @ u.coeffs for d in range(u.spec.space_dim)], axis=1)


def inner(u: Ultrafunction, v: Ultrafunction):
    """``(u, v) = sum_j u_j conj(v_j)``; conjugate-linear in the second slot."""
    u._same(v)
    return np.vdot(v.coeffs, u.coeffs)


def inner_quadrature(u: Ultrafunction, v: Ultrafunction, quad: QuadratureRule):
    """Same scalar product computed as ``sum_q w_q u(x_q) conj(v(x_q))``."""
    u._same(v)
    op = TensorOperator(u.spec, quad)
    return np.sum(quad.grid_weights * op.synthesize(u.coeffs) * np.conj(op.synthesize(v.coeffs)))


def _grid_values(f: PointFunction, quad: QuadratureRule) -> np.ndarray:
    grids = quad.coordinate_grids()
    vals = np.broadcast_to(np.asarray(f(*grids)), quad.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        idx = np.argwhere(bad)[0]
        node = [quad.axis_nodes[a][i] for a, i in enumerate(idx)]
        raise NonFiniteError(node, vals[tuple(idx)])
    return vals


def project(f: PointFunction, spec: BasisSpec, quad: QuadratureRule | None = None) -> Ultrafunction:
    """Orthogonal projection ``u_j = sum_q w_q f(x_q) conj(e_j(x_q))``."""
    quad = quad or make_quadrature(spec)
    op = TensorOperator(spec, quad)
    coeffs = op.analyze(_grid_values(f, quad))
    if not spec.is_complex and np.iscomplexobj(coeffs):
        coeffs = coeffs.real if np.all(coeffs.imag == 0) else coeffs
    return Ultrafunction(spec, coeffs)


def delta(spec: BasisSpec, q) -> Ultrafunction:
    """Dirac ultrafunction at q, ``delta_j = conj(e_j(q))``.

    ``inner(v, delta(q)) == v(q)`` for every v in the span; for real bases the
    slots can be swapped.
    """
    pts = spec.check_point(q)
    if pts.shape[0] != 1:
        raise ValueError("delta takes a single point")
    c = np.conj(point_matrix(spec, pts)[0])
    return Ultrafunction(spec, c)


def dual_project(T: Callable[[PointFunction], complex], spec: BasisSpec) -> Ultrafunction:
    """Dual ultravector of a linear functional T.

    ``T`` receives a pointwise function and returns its action.  It is applied
    to ``conj(e_j)`` so that evaluation at q reproduces :func:`delta` and
    integration against f reproduces :func:`project` on complex bases too.
    """
    coeffs = []
    for j in range(1, spec.dim + 1):
        def ej_conj(*x, _j=j):
            pts = np.stack([np.asarray(c, dtype=float).ravel() for c in np.broadcast_arrays(*x)], axis=1)
            shape = np.broadcast(*x).shape
            return np.conj(point_matrix(spec, pts)[:, _j - 1]).reshape(shape)

        coeffs.append(T(ej_conj))
    coeffs = np.array(coeffs)
    if not spec.is_complex and np.iscomplexobj(coeffs) and np.all(coeffs.imag == 0):
        coeffs = coeffs.real
    return Ultrafunction(spec, coeffs)


def as_function(u: Ultrafunction, quad: QuadratureRule | None = None) -> PointFunction:
    """Pointwise closure over ``evaluate(u, .)``.

    On the nodes of ``quad`` it uses the separable synthesis, elsewhere the
    dense point evaluation.
    """
    op = TensorOperator(u.spec, quad) if quad is not None else None
    grid_vals = op.synthesize(u.coeffs) if op is not None else None

    def f(*x):
        if grid_vals is not None and len(x) == quad.space_dim:
            grids = quad.coordinate_grids()
            if all(np.shape(xi) == g.shape and np.array_equal(xi, g) for xi, g in zip(x, grids)):
                return grid_vals
        arrs = np.broadcast_arrays(*[np.asarray(xi, dtype=float) for xi in x])
        pts = np.stack([a.ravel() for a in arrs], axis=1)
        return (point_matrix(u.spec, pts) @ u.coeffs).reshape(arrs[0].shape)

    return f


def pointwise(g: Callable[[np.ndarray], np.ndarray]) -> Callable[[PointFunction], PointFunction]:
    """Lift a scalar map (``np.square``, ``abs``...) to an operator on functions."""

    def F(f):
        return lambda *x: g(f(*x))

    return F


def extend_op(
    F: Callable[[PointFunction], PointFunction],
    u: Ultrafunction,
    quad: QuadratureRule | None = None,
    *,
    aliasing_check: bool = True,
) -> Ultrafunction:
    """Canonical extension ``F_Phi(u) = Phi(F(u))`` at the level of ``u``.

    ``F`` maps a pointwise function to a pointwise function.  The result's
    ``meta['aliasing']`` is the relative coefficient change when the
    quadrature oversampling is raised by one.
    """
    quad = quad or make_quadrature(u.spec)
    out = project(F(as_function(u, quad)), u.spec, quad)
    meta = {"oversample": quad.oversample}
    if aliasing_check:
        finer = make_quadrature(u.spec, quad.oversample + 1)
        ref = project(F(as_function(u, finer)), u.spec, finer)
        scale = max(np.linalg.norm(ref.coeffs), np.finfo(float).tiny)
        meta["aliasing"] = float(np.linalg.norm(out.coeffs - ref.coeffs) / scale)
    return Ultrafunction(u.spec, out.coeffs, meta)


def embed(u: Ultrafunction, spec: BasisSpec) -> Ultrafunction:
    """Zero-pad (or truncate) u onto another truncation of the same family."""
    if spec.kind != u.spec.kind or spec.space_dim != u.spec.space_dim:
        raise SpecMismatch("embedding needs the same basis family and dimension")
    src = u.coeffs.reshape(u.spec.theta)
    dst = np.zeros(spec.theta, dtype=u.coeffs.dtype)
    common = tuple(slice(0, min(a, b)) for a, b in zip(u.spec.theta, spec.theta))
    dst[common] = src[common]
    return Ultrafunction(spec, dst.reshape(-1))


@dataclass(frozen=True, eq=False)
class UltrafunNet:
    """One ultrafunction per level; level k uses ``schedule.dims[k]`` modes per axis."""

    schedule: LevelSchedule
    levels: tuple[Ultrafunction, ...]
    tag: str | None = None

    def __post_init__(self):
        levels = tuple(self.levels)
        object.__setattr__(self, "levels", levels)
        if len(levels) != len(self.schedule):
            raise ValueError("one ultrafunction per level required")
        for d, u in zip(self.schedule.dims, levels):
            if u.spec.theta != (d,) * u.spec.space_dim:
                raise ValueError(f"level with {d} modes per axis holds spec {u.spec.theta}")

    @classmethod
    def build(
        cls,
        schedule: LevelSchedule,
        make_level: Callable[[int], Ultrafunction],
        threads: int = 1,
    ) -> "UltrafunNet":
        """Evaluate ``make_level(theta_k)`` for every level, in parallel if asked."""
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                levels = list(pool.map(make_level, schedule.dims))
        else:
            levels = [make_level(d) for d in schedule.dims]
        return cls(schedule, tuple(levels))

    def __getitem__(self, k) -> Ultrafunction:
        return self.levels[k]

    def __len__(self):
        return len(self.levels)

    def with_tag(self, tag: str) -> "UltrafunNet":
        return UltrafunNet(self.schedule, self.levels, tag)

    def action(self, phi: PointFunction, oversample: float = 2) -> LambdaNet:
        """Net ``k -> (u_k, Phi_k phi)``, the action of the net on a test function."""

        def at(k):
            u = self.levels[k]
            return inner(u, project(phi, u.spec, make_quadrature(u.spec, oversample)))

        return LambdaNet(self.schedule, at, "action")

    def norm_net(self) -> LambdaNet:
        return LambdaNet(self.schedule, lambda k: self.levels[k].norm(), "l2 norm")

    def step_net(self) -> LambdaNet:
        """Net of l2 distances between consecutive levels (0 at the first level)."""

        def at(k):
            if k == 0:
                return 0.0
            u, prev = self.levels[k], self.levels[k - 1]
            return float(np.linalg.norm(u.coeffs - embed(prev, u.spec).coeffs))

        return LambdaNet(self.schedule, at, "level step")


def classify_diagnostic(un: UltrafunNet, tests: Sequence[PointFunction], tol: float = DEFAULT_TOL) -> str:
    """Tag a net standard-like, distributional-like or proper-like.

    * standard-like: the last level changes the coefficients by less than
      ``tol * max(1, |u_K|)`` in l2;
    * distributional-like: otherwise, if the action on every test function
      has a finite shadow;
    * proper-like: some action does not settle.
    """
    if len(un) < 2:
        raise ValueError("need at least two levels")
    last = un.levels[-1]
    step = un.step_net().at(len(un) - 1)
    if step < tol * max(1.0, last.norm()):
        return STANDARD_LIKE
    for phi in tests:
        if classify(un.action(phi), tol).tag not in (FINITE, INFINITESIMAL):
            return PROPER_LIKE
    return DISTRIBUTIONAL_LIKE


def delta_norm_sq(spec: BasisSpec, q) -> float:
    """``(delta_q, delta_q) = sum_j |e_j(q)|^2``."""
    d = delta(spec, q)
    return float(np.real(inner(d, d)))


def gaussian_bump(center, width: float) -> PointFunction:
    """exp(-|x-c|^2 / (2 w^2)), a smooth test function that is negligible far from c."""
    center = np.atleast_1d(np.asarray(center, dtype=float))

    def phi(*x):
        r2 = sum((xi - ci) ** 2 for xi, ci in zip(x, center))
        return np.exp(-0.5 * r2 / width**2)

    return phi


def smooth_bump(center, radius: float) -> PointFunction:
    """C-infinity bump ``exp(1 - 1/(1 - r^2/R^2))`` supported in the ball of radius R.

    Value 1 at the center; its projection converges faster than any power of
    theta when the ball lies inside the domain.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if radius <= 0:
        raise ValueError("radius must be positive")

    def phi(*x):
        r2 = sum((xi - ci) ** 2 for xi, ci in zip(x, center)) / radius**2
        inside = r2 < 1.0
        safe = np.where(inside, r2, 0.0)
        return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)

    return phi
