"""Quantum mechanics with Hermitian matrices on one level of a basis.

Observables are matrices ``M_jk = (M e_k, e_j)`` in an orthonormal basis of
one level, so applying an observable to a state is the matrix-vector product
of its coefficients.  States evolve by ``i dpsi/dt = H psi``, i.e.
``psi_t = exp(-iHt) psi_0``.  Only one space dimension is supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.integrate

from .basis import SINE_BOX, BasisSpec, QuadratureRule, TensorOperator, make_quadrature
from .levels import LambdaNet, LevelSchedule
from .ultrafun import PointFunction, Ultrafunction, UltrafunNet, classify_diagnostic, gaussian_bump, project, unit

HERMITIAN_TOL = 1e-10
EIG_TOL = 1e-8


class NotHermitianError(ValueError):
    pass


def _as_coeffs(psi) -> np.ndarray:
    return np.asarray(psi.coeffs if isinstance(psi, Ultrafunction) else psi, dtype=complex)


@dataclass(frozen=True, eq=False)
class ObservableMatrix:
    """Hermitian matrix acting on coefficient vectors of ``spec``.

    The Hermiticity defect is checked on construction and the stored matrix
    is the exactly Hermitian part ``(M + M^H) / 2``.
    """

    spec: BasisSpec
    entries: np.ndarray
    label: str = ""

    def __post_init__(self):
        M = np.array(self.entries, dtype=complex)
        if M.shape != (self.spec.dim, self.spec.dim):
            raise ValueError(f"matrix shape {M.shape} does not match dim {self.spec.dim}")
        if not np.all(np.isfinite(M)):
            raise ValueError("matrix has non-finite entries")
        defect = float(np.max(np.abs(M - M.conj().T), initial=0.0))
        if defect > HERMITIAN_TOL:
            raise NotHermitianError(f"{self.label or 'matrix'} Hermiticity defect {defect:.3e}")
        M = 0.5 * (M + M.conj().T)
        M.setflags(write=False)
        object.__setattr__(self, "entries", M)

    def __matmul__(self, other):
        if isinstance(other, ObservableMatrix):
            return self.entries @ other.entries
        return self.entries @ _as_coeffs(other)

    def expectation(self, psi) -> float:
        c = _as_coeffs(psi)
        return float(np.vdot(c, self.entries @ c).real)


def _require_1d(spec: BasisSpec):
    if spec.space_dim != 1:
        raise ValueError("quantum observables are implemented for one space dimension")


def _axis_tables(spec: BasisSpec, quad: QuadratureRule | None):
    _require_1d(spec)
    quad = quad or make_quadrature(spec)
    op = TensorOperator(spec, quad)
    return op.values[0], op.derivs[0], quad.axis_weights[0], quad.axis_nodes[0]


def position_matrix(spec: BasisSpec, quad: QuadratureRule | None = None) -> ObservableMatrix:
    """``Q_jk = sum_q w_q x_q e_k(x_q) conj(e_j(x_q))``."""
    E, _, w, x = _axis_tables(spec, quad)
    return ObservableMatrix(spec, (E.conj().T * (w * x)) @ E, "Q")


def momentum_matrix(spec: BasisSpec, quad: QuadratureRule | None = None) -> ObservableMatrix:
    """Antisymmetrized weak form of ``-i d/dx``.

    ``P_jk = (-i/2) sum_q w_q (e_k' conj(e_j) - e_k conj(e_j'))``, Hermitian by
    construction whatever the quadrature error.
    """
    E, D, w, _ = _axis_tables(spec, quad)
    forward = (E.conj().T * w) @ D
    backward = (D.conj().T * w) @ E
    return ObservableMatrix(spec, -0.5j * (forward - backward), "P")


def hamiltonian(spec: BasisSpec, quad: QuadratureRule | None = None, mass: float = 1.0) -> ObservableMatrix:
    """Free Hamiltonian ``-(1/2m) d^2/dx^2`` in weak form ``(1/2m) sum_q w_q e_k' conj(e_j')``."""
    if not mass > 0:
        raise ValueError(f"mass must be positive, got {mass}")
    _, D, w, _ = _axis_tables(spec, quad)
    return ObservableMatrix(spec, (D.conj().T * w) @ D / (2.0 * mass), "H")


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Ascending eigenvalues with orthonormal eigenvectors.

    Each eigenvector's first coefficient of non-negligible size is real and
    positive, which fixes the phase deterministically.
    """

    spec: BasisSpec
    eigenvalues: np.ndarray
    vectors: np.ndarray  # columns are eigenvector coefficients

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def eigenvectors(self) -> list[Ultrafunction]:
        return [self.eigenvector(a) for a in range(len(self))]

    def eigenvector(self, a: int) -> Ultrafunction:
        v = self.vectors[:, a]
        if not self.spec.is_complex and np.all(v.imag == 0):
            v = v.real
        return Ultrafunction(self.spec, v)


def _fix_phase(V: np.ndarray) -> np.ndarray:
    V = V.copy()
    for a in range(V.shape[1]):
        col = V[:, a]
        big = np.flatnonzero(np.abs(col) > 1e-10 * np.max(np.abs(col)))
        z = col[big[0]]
        V[:, a] = col * (abs(z) / z)
        V[big[0], a] = abs(z)
    return V


def eigh(M: ObservableMatrix) -> SpectralDecomposition:
    """Full spectral decomposition with residual and orthonormality checks.

    Residuals are checked against ``1e-8 * max(1, ||M||)``; a failure signals a
    bug and raises :class:`numpy.linalg.LinAlgError`.
    """
    A = M.entries
    if np.all(A.imag == 0):
        lam, V = np.linalg.eigh(A.real)
        V = V.astype(complex)
    else:
        lam, V = np.linalg.eigh(A)
    V = _fix_phase(V)
    scale = max(1.0, float(np.linalg.norm(A, 2)))
    residual = float(np.max(np.linalg.norm(A @ V - V * lam, axis=0), initial=0.0))
    ortho = float(np.max(np.abs(V.conj().T @ V - np.eye(len(lam))), initial=0.0))
    if residual > EIG_TOL * scale or ortho > EIG_TOL:
        raise np.linalg.LinAlgError(f"eigendecomposition check failed: residual {residual:.2e}, ortho {ortho:.2e}")
    V.setflags(write=False)
    return SpectralDecomposition(M.spec, lam, V)


@dataclass(frozen=True)
class DeltaTypeResult:
    defect: float
    variance: float
    eigenvalue: float
    mass: complex


def delta_type_check(
    decomp: SpectralDecomposition,
    a: int,
    phi: PointFunction,
    quad: QuadratureRule | None = None,
) -> DeltaTypeResult:
    """How well the normalized position eigenvector ``psi_a`` samples ``phi`` at ``mu_a``.

    ``defect = |(Phi phi, psi_a) / s - phi(mu_a)|`` with ``s = sum_q w_q psi_a(x_q)``.
    ``variance = sum_q w_q (x_q - mu_a)^2 |psi_a(x_q)|^2`` measures localization.
    """
    spec = decomp.spec
    _require_1d(spec)
    quad = quad or make_quadrature(spec)
    mu = float(decomp.eigenvalues[a])
    psi = decomp.vectors[:, a]
    op = TensorOperator(spec, quad)
    x, w = quad.axis_nodes[0], quad.axis_weights[0]
    vals = op.synthesize(psi)
    s = complex(np.sum(w * vals))
    if abs(s) < 1e-300:
        raise ZeroDivisionError(f"eigenvector {a} has zero mass; sampling undefined")
    phi_c = project(phi, spec, quad).coeffs
    action = np.vdot(psi, phi_c)
    defect = abs(action / s - complex(phi(np.array([mu]))[0]))
    variance = float(np.sum(w * (x - mu) ** 2 * np.abs(vals) ** 2))
    return DeltaTypeResult(float(defect), variance, mu, s)


def commutator(P: ObservableMatrix, Q: ObservableMatrix) -> np.ndarray:
    """``PQ - QP`` (anti-Hermitian)."""
    if P.spec.dim != Q.spec.dim:
        raise ValueError("dimension mismatch")
    return P.entries @ Q.entries - Q.entries @ P.entries


def commutator_defect(P: ObservableMatrix, Q: ObservableMatrix, psi) -> complex:
    """``((PQ - QP) psi, psi)``."""
    c = _as_coeffs(psi)
    if c.shape != (P.spec.dim,):
        raise ValueError("state dimension mismatch")
    return complex(np.vdot(c, commutator(P, Q) @ c))


def evolve(H: ObservableMatrix, psi0, t: float, decomp: SpectralDecomposition | None = None) -> Ultrafunction:
    """Solution of ``i dpsi/dt = H psi``: ``psi_t = V exp(-i Lambda t) V^H psi_0``."""
    c = _as_coeffs(psi0)
    decomp = decomp or eigh(H)
    V = decomp.vectors
    ct = V @ (np.exp(-1j * decomp.eigenvalues * t) * (V.conj().T @ c))
    return Ultrafunction(H.spec, ct)


def fidelity(psi, phi) -> float:
    """``|(psi, phi)|``."""
    return float(abs(np.vdot(_as_coeffs(phi), _as_coeffs(psi))))


def transition_probability(psi, decomp: SpectralDecomposition) -> np.ndarray:
    """Measurement probabilities ``|(psi, psi_j)|^2`` over all eigenvectors."""
    c = _as_coeffs(psi)
    return np.abs(decomp.vectors.conj().T @ c) ** 2


def track_eigenvalues(spectra: Sequence[np.ndarray], start: Sequence[int]) -> list[list[float]]:
    """Follow eigenvalues across levels by nearest value.

    ``start`` lists indices at the first level.  At each later level every
    track moves to the closest unused eigenvalue; ties go to the lower index.
    """
    tracks = [[float(spectra[0][i])] for i in start]
    for lam in spectra[1:]:
        lam = np.asarray(lam, dtype=float)
        used: set[int] = set()
        for track in tracks:
            order = np.argsort(np.abs(lam - track[-1]), kind="stable")
            j = next(int(i) for i in order if int(i) not in used)
            used.add(j)
            track.append(float(lam[j]))
    return tracks


def eigenvalue_nets(
    schedule: LevelSchedule,
    make_matrix: Callable[[int], ObservableMatrix],
    start: Sequence[int],
) -> list[LambdaNet]:
    """One net per tracked eigenvalue, ready for :func:`levels.classify`."""
    spectra = [eigh(make_matrix(theta)).eigenvalues for theta in schedule.dims]
    return [LambdaNet.from_values(schedule, t, f"eigenvalue[{i}]") for i, t in zip(start, track_eigenvalues(spectra, start))]


def _ideal_coefficient(j: int, exponent: float) -> float:
    # sqrt2 * int_0^1 |x-1/2|^exponent sin(pi x) sin(j pi x) dx, split at 1/2 so the
    # algebraic weight carries the singularity; the integrand is even about 1/2
    if j % 2 == 0:
        return 0.0

    def f(t):
        x = 0.5 + t
        return np.sin(np.pi * x) * np.sin(j * np.pi * x)

    val, _ = scipy.integrate.quad(f, 0.0, 0.5, weight="alg", wvar=(exponent, 0.0), limit=400)
    return 2.0 * math.sqrt(2.0) * val


def ideal_state(theta: int, exponent: float = -0.25) -> Ultrafunction:
    """Normalized projection of ``|x - 1/2|^exponent sin(pi x)`` on the sine box.

    For ``-1/2 < exponent < 1/2`` the function is square integrable while its
    kinetic energy is infinite, so ``(psi, H psi)`` grows without bound across
    levels.
    """
    if not -0.5 < exponent:
        raise ValueError("exponent must exceed -1/2 for a square-integrable state")
    c = np.array([_ideal_coefficient(j, exponent) for j in range(1, theta + 1)])
    return Ultrafunction(BasisSpec(SINE_BOX, theta), c / np.linalg.norm(c))


@dataclass
class IdealStateDemo:
    net: UltrafunNet
    energy: LambdaNet
    standard_energy: LambdaNet = field(repr=False, default=None)


def ideal_state_demo(schedule: LevelSchedule, exponent: float = -0.25, mass: float = 1.0) -> IdealStateDemo:
    """Energy nets of the singular state and, for comparison, of the ground state."""
    net = UltrafunNet.build(schedule, lambda theta: ideal_state(theta, exponent))
    net = net.with_tag(classify_diagnostic(net, [gaussian_bump((0.3,), 0.1), gaussian_bump((0.5,), 0.1)]))

    def energy_at(k):
        u = net[k]
        return hamiltonian(u.spec, mass=mass).expectation(u)

    def ground_at(k):
        spec = BasisSpec(SINE_BOX, schedule.dims[k])
        return hamiltonian(spec, mass=mass).expectation(unit(spec, 1))

    return IdealStateDemo(net, LambdaNet(schedule, energy_at, "ideal energy"), LambdaNet(schedule, ground_at, "ground energy"))
