"""Orthonormal basis families and tensor quadrature rules.

Three one-dimensional families are provided and combined by tensor products
in up to three space dimensions:

``sine_box``
    sqrt(2) sin(j pi x) on [0, 1], j = 1, 2, ...; vanishes on the boundary.
``fourier_ring``
    exp(2 pi i m x) on the circle of length 1, with modes ordered
    m = 0, 1, -1, 2, -2, ...
``hermite_line``
    normalized Hermite functions on the real line, degree n = j - 1.

Basis indices ``j`` are 1-based, as in the mathematical notation; coefficient
arrays are ordinary 0-based numpy arrays, so ``coeffs[j - 1]`` multiplies
``e_j``.  Multi-indices are enumerated in C order (last axis fastest).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import roots_hermite

SINE_BOX = "sine_box"
FOURIER_RING = "fourier_ring"
HERMITE_LINE = "hermite_line"
KINDS = (SINE_BOX, FOURIER_RING, HERMITE_LINE)

# extra Gauss-Legendre nodes per axis; oversample * theta + 2 under-resolves
# sine products at small theta
GL_EXTRA_NODES = 12


class DomainError(ValueError):
    """A point lies outside the domain of a basis family."""


@dataclass(frozen=True)
class BasisSpec:
    """Description of a truncated orthonormal basis.

    ``theta`` is the per-axis mode count (an int is repeated over all axes);
    the total dimension is the product over axes.
    """

    kind: str
    theta: tuple[int, ...] | int
    space_dim: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}; expected one of {KINDS}")
        if self.space_dim not in (1, 2, 3):
            raise ValueError(f"space_dim must be 1, 2 or 3, got {self.space_dim}")
        theta = self.theta
        if isinstance(theta, (int, np.integer)):
            theta = (int(theta),) * self.space_dim
        theta = tuple(int(t) for t in theta)
        if len(theta) != self.space_dim:
            raise ValueError(f"theta {theta} does not match space_dim {self.space_dim}")
        if min(theta) < 1:
            raise ValueError(f"theta entries must be >= 1, got {theta}")
        object.__setattr__(self, "theta", theta)

    @property
    def dim(self) -> int:
        return math.prod(self.theta)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.theta

    @property
    def is_complex(self) -> bool:
        return self.kind == FOURIER_RING

    def with_theta(self, theta) -> "BasisSpec":
        return BasisSpec(self.kind, theta, self.space_dim)

    def multi_index(self, j: int) -> tuple[int, ...]:
        """1-based flat index -> tuple of 1-based per-axis indices."""
        if not 1 <= j <= self.dim:
            raise IndexError(f"basis index {j} outside 1..{self.dim}")
        return tuple(int(i) + 1 for i in np.unravel_index(j - 1, self.theta))

    def flat_index(self, multi: tuple[int, ...]) -> int:
        if len(multi) != self.space_dim or any(not 1 <= m <= t for m, t in zip(multi, self.theta)):
            raise IndexError(f"multi-index {multi} outside {self.theta}")
        return int(np.ravel_multi_index(tuple(m - 1 for m in multi), self.theta)) + 1

    def check_point(self, x) -> np.ndarray:
        """Validate one point or an ``(n, N)`` array of points; returns 2-D array."""
        pts = np.asarray(x, dtype=float)
        if pts.ndim == 0:
            pts = pts.reshape(1, 1)
        elif pts.ndim == 1:
            # for N > 1 a flat array is a single point
            pts = pts.reshape(1, -1) if self.space_dim > 1 else pts.reshape(-1, 1)
        if pts.shape[1] != self.space_dim:
            raise DomainError(f"points have {pts.shape[1]} coordinates, basis has {self.space_dim}")
        if not np.all(np.isfinite(pts)):
            raise DomainError("non-finite coordinate")
        if self.kind in (SINE_BOX, FOURIER_RING) and (np.any(pts < 0.0) or np.any(pts > 1.0)):
            bad = pts[np.any((pts < 0) | (pts > 1), axis=1)][0]
            raise DomainError(f"point {bad.tolist()} outside [0, 1]^{self.space_dim}")
        return pts


def fourier_mode(j: int) -> int:
    """Frequency m of the j-th ring function (j = 1, 2, 3, ... -> m = 0, 1, -1, ...)."""
    return j // 2 if j % 2 == 0 else -(j // 2)


def axis_values(kind: str, n: int, x: np.ndarray) -> np.ndarray:
    """Matrix ``(len(x), n)`` of the first n one-dimensional functions at x."""
    x = np.asarray(x, dtype=float)
    j = np.arange(1, n + 1)
    if kind == SINE_BOX:
        return math.sqrt(2.0) * np.sin(np.pi * np.outer(x, j))
    if kind == FOURIER_RING:
        m = np.array([fourier_mode(i) for i in j])
        return np.exp(2j * np.pi * np.outer(x, m))
    return _hermite_functions(n, x)[:, :n]


def axis_derivatives(kind: str, n: int, x: np.ndarray) -> np.ndarray:
    """Matrix ``(len(x), n)`` of first derivatives."""
    x = np.asarray(x, dtype=float)
    j = np.arange(1, n + 1)
    if kind == SINE_BOX:
        return math.sqrt(2.0) * np.pi * j * np.cos(np.pi * np.outer(x, j))
    if kind == FOURIER_RING:
        m = np.array([fourier_mode(i) for i in j])
        return 2j * np.pi * m * np.exp(2j * np.pi * np.outer(x, m))
    # psi_n' = sqrt(n/2) psi_{n-1} - sqrt((n+1)/2) psi_{n+1}
    psi = _hermite_functions(n + 1, x)
    deg = np.arange(n)
    out = -np.sqrt((deg + 1) / 2.0) * psi[:, 1 : n + 1]
    out[:, 1:] += np.sqrt(deg[1:] / 2.0) * psi[:, : n - 1]
    return out


def _hermite_functions(n: int, x: np.ndarray) -> np.ndarray:
    # three-term recurrence; stable where the explicit polynomial form overflows
    out = np.empty((x.size, n))
    out[:, 0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n > 1:
        out[:, 1] = math.sqrt(2.0) * x * out[:, 0]
    for k in range(1, n - 1):
        out[:, k + 1] = math.sqrt(2.0 / (k + 1)) * x * out[:, k] - math.sqrt(k / (k + 1)) * out[:, k - 1]
    return out


def basis_eval(spec: BasisSpec, j: int, x) -> complex | float:
    """Value of the basis function e_j at a single point x."""
    multi = spec.multi_index(j)
    pts = spec.check_point(x)
    if pts.shape[0] != 1:
        raise DomainError("basis_eval takes a single point")
    val = 1.0
    for axis, m in enumerate(multi):
        val = val * axis_values(spec.kind, m, pts[:, axis])[0, m - 1]
    return val


def basis_grad(spec: BasisSpec, j: int, x) -> np.ndarray:
    """Analytic gradient of e_j at a single point, shape ``(space_dim,)``."""
    multi = spec.multi_index(j)
    pts = spec.check_point(x)
    if pts.shape[0] != 1:
        raise DomainError("basis_grad takes a single point")
    vals = [axis_values(spec.kind, m, pts[:, a])[0, m - 1] for a, m in enumerate(multi)]
    ders = [axis_derivatives(spec.kind, m, pts[:, a])[0, m - 1] for a, m in enumerate(multi)]
    grad = []
    for d in range(spec.space_dim):
        g = ders[d]
        for a in range(spec.space_dim):
            if a != d:
                g = g * vals[a]
        grad.append(g)
    return np.array(grad)


def point_matrix(spec: BasisSpec, x, derivative: int | None = None) -> np.ndarray:
    """Matrix ``(npts, dim)`` of all basis functions (or one partial derivative) at points."""
    pts = spec.check_point(x)
    mats = []
    for a, n in enumerate(spec.theta):
        if derivative == a:
            mats.append(axis_derivatives(spec.kind, n, pts[:, a]))
        else:
            mats.append(axis_values(spec.kind, n, pts[:, a]))
    out = mats[0]
    for m in mats[1:]:
        out = (out[:, :, None] * m[:, None, :]).reshape(pts.shape[0], -1)
    return out


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Tensor-product quadrature rule.

    ``axis_nodes``/``axis_weights`` hold the one-dimensional factors; the full
    node list is their Cartesian product in C order.  For ``hermite_line`` the
    Gauss-Hermite weights are multiplied by exp(x^2), so plain weighted sums
    integrate products of Hermite functions.
    """

    kind: str
    axis_nodes: tuple[np.ndarray, ...]
    axis_weights: tuple[np.ndarray, ...]
    exactness_degree: int
    oversample: float

    @property
    def space_dim(self) -> int:
        return len(self.axis_nodes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(n) for n in self.axis_nodes)

    @cached_property
    def nodes(self) -> np.ndarray:
        grids = np.meshgrid(*self.axis_nodes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    @cached_property
    def weights(self) -> np.ndarray:
        w = self.axis_weights[0]
        for wa in self.axis_weights[1:]:
            w = np.multiply.outer(w, wa)
        return np.asarray(w).ravel()

    @property
    def grid_weights(self) -> np.ndarray:
        return self.weights.reshape(self.shape)

    def coordinate_grids(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axis_nodes, indexing="ij")

    def integrate(self, values) -> complex | float:
        """Weighted sum of values given on the node grid (flat or grid-shaped)."""
        return np.sum(self.weights * np.asarray(values).reshape(-1))


def make_quadrature(spec: BasisSpec, oversample: float = 2) -> QuadratureRule:
    """Quadrature adapted to ``spec``.

    * sine_box: Gauss-Legendre on [0, 1] with ``ceil(oversample*theta) + 12``
      nodes per axis;
    * fourier_ring: uniform trapezoid with ``2*oversample*theta + 1`` nodes,
      exact for trigonometric polynomials of degree below the node count;
    * hermite_line: Gauss-Hermite with ``oversample*theta`` nodes.
    """
    if oversample < 1:
        raise ValueError(f"oversample must be >= 1, got {oversample}")
    nodes, weights, degrees = [], [], []
    for n_modes in spec.theta:
        if spec.kind == SINE_BOX:
            n = int(math.ceil(oversample * n_modes)) + GL_EXTRA_NODES
            x, w = np.polynomial.legendre.leggauss(n)
            x, w = 0.5 * (x + 1.0), 0.5 * w
            degrees.append(2 * n - 1)
        elif spec.kind == FOURIER_RING:
            n = int(math.ceil(2 * oversample * n_modes)) + 1
            x = np.arange(n) / n
            w = np.full(n, 1.0 / n)
            degrees.append(n - 1)
        else:
            n = max(int(math.ceil(oversample * n_modes)), 1)
            x, _ = roots_hermite(n)
            # folded weight w*exp(x^2) = 1 / sum_k psi_k(x)^2 (Christoffel), no overflow
            w = 1.0 / np.sum(_hermite_functions(n, x) ** 2, axis=1)
            degrees.append(2 * n - 1)
        nodes.append(x)
        weights.append(w)
    return QuadratureRule(spec.kind, tuple(nodes), tuple(weights), min(degrees), float(oversample))


class TensorOperator:
    """Synthesis and analysis between coefficients and values on a quadrature grid.

    Values on the grid are ``sum_j c_j e_j(x_q)``; analysis returns
    ``sum_q w_q f(x_q) conj(e_j(x_q))``.  Both use the separable structure, so
    cost grows like ``nodes * theta`` per axis rather than their full product.
    """

    def __init__(self, spec: BasisSpec, quad: QuadratureRule):
        if quad.space_dim != spec.space_dim or quad.kind != spec.kind:
            raise ValueError("quadrature does not match basis spec")
        self.spec = spec
        self.quad = quad
        self.values = [axis_values(spec.kind, n, x) for n, x in zip(spec.theta, quad.axis_nodes)]
        self.derivs = [axis_derivatives(spec.kind, n, x) for n, x in zip(spec.theta, quad.axis_nodes)]
        self.weights = quad.grid_weights

    @staticmethod
    def _apply(tensor: np.ndarray, mats) -> np.ndarray:
        for axis, m in enumerate(mats):
            tensor = np.moveaxis(np.tensordot(m, tensor, axes=([1], [axis])), 0, axis)
        return tensor

    def synthesize(self, coeffs, derivative: int | None = None) -> np.ndarray:
        c = np.asarray(coeffs).reshape(self.spec.theta)
        mats = [self.derivs[a] if a == derivative else self.values[a] for a in range(self.spec.space_dim)]
        return self._apply(c, mats)

    def analyze(self, grid_values, derivative: int | None = None) -> np.ndarray:
        f = np.asarray(grid_values).reshape(self.quad.shape) * self.weights
        mats = [self.derivs[a] if a == derivative else self.values[a] for a in range(self.spec.space_dim)]
        mats = [np.conj(m).T for m in mats]
        return self._apply(f, mats).reshape(-1)


def gram_matrix(spec: BasisSpec, quad: QuadratureRule) -> np.ndarray:
    """``G_jk = sum_q w_q e_j(x_q) conj(e_k(x_q))``."""
    E = point_matrix(spec, quad.nodes)
    return (E.T * quad.weights) @ np.conj(E)
