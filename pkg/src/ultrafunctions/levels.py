"""Level filtration and level-indexed nets.

A :class:`LambdaNet` is a scalar sequence indexed by the levels of a
:class:`LevelSchedule`.  It stands in for a Lambda-limit: arithmetic acts
level by level, and :func:`classify` reads the tail of the sequence to decide
whether the limit is infinitesimal, finite (with a shadow) or infinite.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_TOL = 1e-6

INFINITESIMAL = "infinitesimal"
FINITE = "finite"
INFINITE = "infinite"
UNDETERMINED = "undetermined"


class ScheduleMismatch(ValueError):
    """Raised when two nets defined on different schedules are combined."""


@dataclass(frozen=True)
class LevelSchedule:
    """Strictly increasing chain of subspace dimensions theta_1 < ... < theta_K."""

    dims: tuple[int, ...]
    description: str = ""

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) < 2:
            raise ValueError("a schedule needs at least two levels")
        if dims[0] < 1:
            raise ValueError("level dimensions must be >= 1")
        if any(b <= a for a, b in zip(dims, dims[1:])):
            raise ValueError(f"level dimensions must be strictly increasing: {dims}")

    def __len__(self):
        return len(self.dims)

    def __iter__(self):
        return iter(self.dims)

    def __getitem__(self, k):
        return self.dims[k]


def make_schedule(base: int, growth: float, levels: int) -> LevelSchedule:
    """Geometric schedule ``dims_k = floor(base * growth**(k-1))``.

    >>> make_schedule(4, 2, 4).dims
    (4, 8, 16, 32)
    """
    if levels < 2:
        raise ValueError(f"levels must be >= 2 (extrapolation needs two points), got {levels}")
    if base < 1:
        raise ValueError(f"base must be >= 1, got {base}")
    if growth < 2:
        raise ValueError(f"growth must be >= 2, got {growth}")
    dims = tuple(int(math.floor(base * growth ** k)) for k in range(levels))
    return LevelSchedule(dims, f"geometric base={base} growth={growth}")


class LambdaNet:
    """Lazily evaluated net ``k -> value`` over a schedule.

    ``fn`` receives the 0-based level index.  Values are cached write-once, so
    concurrent evaluation of the same level always yields the same object.
    """

    def __init__(self, schedule: LevelSchedule, fn: Callable[[int], complex], label: str = ""):
        self.schedule = schedule
        self._fn = fn
        self.label = label
        self._cache: dict[int, complex] = {}
        self._lock = threading.Lock()

    @classmethod
    def of_theta(cls, schedule: LevelSchedule, fn: Callable[[int], complex], label: str = "") -> "LambdaNet":
        """Net whose value at level k is ``fn(theta_k)``."""
        return cls(schedule, lambda k: fn(schedule.dims[k]), label)

    @classmethod
    def from_values(cls, schedule: LevelSchedule, values: Sequence[complex], label: str = "") -> "LambdaNet":
        if len(values) != len(schedule):
            raise ValueError(f"expected {len(schedule)} values, got {len(values)}")
        vals = list(values)
        return cls(schedule, lambda k: vals[k], label)

    def __len__(self):
        return len(self.schedule)

    def at(self, k: int):
        if not 0 <= k < len(self.schedule):
            raise IndexError(f"level {k} outside schedule of length {len(self.schedule)}")
        try:
            return self._cache[k]
        except KeyError:
            pass
        value = self._fn(k)
        with self._lock:
            return self._cache.setdefault(k, value)

    def values(self) -> np.ndarray:
        return np.array([self.at(k) for k in range(len(self.schedule))])

    def _check(self, other: "LambdaNet"):
        if not isinstance(other, LambdaNet):
            return net_const(other, self.schedule)
        if other.schedule.dims != self.schedule.dims:
            raise ScheduleMismatch(f"{self.schedule.dims} != {other.schedule.dims}")
        return other

    def __add__(self, other):
        return net_add(self, self._check(other))

    __radd__ = __add__

    def __mul__(self, other):
        return net_mul(self, self._check(other))

    __rmul__ = __mul__

    def __neg__(self):
        return LambdaNet(self.schedule, lambda k: -self.at(k), f"-{self.label}")

    def __sub__(self, other):
        other = self._check(other)
        return LambdaNet(self.schedule, lambda k: self.at(k) - other.at(k))

    def __rsub__(self, other):
        return (-self) + other

    def __repr__(self):
        return f"LambdaNet({self.label or 'anonymous'}, dims={self.schedule.dims})"


def net_const(r, schedule: LevelSchedule) -> LambdaNet:
    return LambdaNet(schedule, lambda k: r, f"const({r})")


def net_add(a: LambdaNet, b: LambdaNet) -> LambdaNet:
    if a.schedule.dims != b.schedule.dims:
        raise ScheduleMismatch(f"{a.schedule.dims} != {b.schedule.dims}")
    return LambdaNet(a.schedule, lambda k: a.at(k) + b.at(k))


def net_mul(a: LambdaNet, b: LambdaNet) -> LambdaNet:
    if a.schedule.dims != b.schedule.dims:
        raise ScheduleMismatch(f"{a.schedule.dims} != {b.schedule.dims}")
    return LambdaNet(a.schedule, lambda k: a.at(k) * b.at(k))


def hyperfinite_sum(schedule: LevelSchedule, terms: Callable[[int], Iterable[complex]], label: str = "") -> LambdaNet:
    """Net of exact per-level sums; ``terms(theta_k)`` yields the level-k list.

    Real lists are summed with :func:`math.fsum` (correctly rounded); complex
    lists are summed component-wise the same way.
    """

    def level_sum(k):
        items = list(terms(schedule.dims[k]))
        if any(isinstance(t, complex) or np.iscomplexobj(t) for t in items):
            return complex(math.fsum(complex(t).real for t in items), math.fsum(complex(t).imag for t in items))
        return math.fsum(items)

    return LambdaNet(schedule, level_sum, label)


@dataclass(frozen=True)
class NumClass:
    """Outcome of :func:`classify`.

    ``shadow`` is 0 for infinitesimals, +-inf for infinite nets, the
    extrapolated limit for finite nets and ``None`` when undetermined.
    ``error`` is the extrapolation error estimate used for the decision.
    """

    tag: str
    shadow: float | complex | None
    error: float = field(default=math.nan, compare=False)

    def __post_init__(self):
        if self.tag == INFINITESIMAL and self.shadow != 0:
            raise ValueError("infinitesimal class must have shadow 0")
        if self.tag == INFINITE and self.shadow not in (math.inf, -math.inf):
            raise ValueError("infinite class must have shadow +-inf")

    @property
    def is_finite(self) -> bool:
        return self.tag in (FINITE, INFINITESIMAL)


def aitken(v0: float, v1: float, v2: float) -> float | None:
    """Aitken delta-squared extrapolant of three consecutive values.

    Returns ``None`` when the second difference is numerically degenerate
    (below ``1e-14`` times the magnitude of the data).
    """
    d1 = v1 - v0
    d2 = v2 - v1
    denom = d2 - d1
    scale = max(abs(v0), abs(v1), abs(v2)) or 1.0
    if abs(denom) < 1e-14 * scale:
        return None
    return v2 - d2 * d2 / denom


def _classify_real(v: np.ndarray, tol: float) -> NumClass:
    if not np.all(np.isfinite(v)):
        return NumClass(UNDETERMINED, None)
    last, prev = float(v[-1]), float(v[-2])
    # eventually constant: the limit is that constant
    if last == prev:
        if last == 0.0:
            return NumClass(INFINITESIMAL, 0.0, 0.0)
        return NumClass(FINITE, last, 0.0)
    if abs(last) > 1.0 / tol and abs(last) > abs(prev):
        return NumClass(INFINITE, math.copysign(math.inf, last))

    if len(v) >= 3:
        d1 = prev - float(v[-3])
        d2 = last - prev
        if abs(d2) >= abs(d1) and abs(d2) > tol:
            # increments are not contracting
            if d1 * d2 > 0:
                return NumClass(INFINITE, math.copysign(math.inf, d2))
            return NumClass(UNDETERMINED, None)
        est = aitken(float(v[-3]), prev, last)
        if est is None:
            est, err = last, abs(d2)
        else:
            err = abs(last - est)
            if len(v) >= 4:
                prev_est = aitken(float(v[-4]), float(v[-3]), prev)
                if prev_est is not None:
                    err = min(err, abs(est - prev_est))
    else:
        est, err = last, abs(last - prev)

    if err >= tol:
        return NumClass(UNDETERMINED, None, err)
    if abs(est) <= tol:
        return NumClass(INFINITESIMAL, 0.0, err)
    return NumClass(FINITE, est, err)


def classify(a: LambdaNet, tol: float = DEFAULT_TOL) -> NumClass:
    """Classify a net as infinitesimal, finite, infinite or undetermined.

    The decision reads the tail of the net:

    * an exactly repeated last value is the limit (eventually constant net);
    * a last value beyond ``1/tol`` that is still growing, or increments that
      keep one sign without contracting, mark the net infinite;
    * otherwise the shadow is the Aitken extrapolant of the last three levels,
      accepted when either the Aitken correction or the change between
      successive extrapolants is below ``tol``.

    Complex nets are classified through their real and imaginary parts.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = a.values()
    if np.iscomplexobj(v):
        if np.all(v.imag == 0):
            return _classify_real(v.real.astype(float), tol)
        re = _classify_real(v.real.astype(float), tol)
        im = _classify_real(v.imag.astype(float), tol)
        tags = {re.tag, im.tag}
        if UNDETERMINED in tags:
            return NumClass(UNDETERMINED, None)
        if INFINITE in tags:
            return NumClass(INFINITE, math.inf)
        err = max(re.error, im.error)
        if tags == {INFINITESIMAL}:
            return NumClass(INFINITESIMAL, 0.0, err)
        return NumClass(FINITE, complex(re.shadow, im.shadow), err)
    return _classify_real(v.astype(float), tol)


def infinitely_close(a: LambdaNet, b: LambdaNet, tol: float = DEFAULT_TOL) -> bool:
    if a.schedule.dims != b.schedule.dims:
        raise ScheduleMismatch(f"{a.schedule.dims} != {b.schedule.dims}")
    return classify(a - b, tol).tag == INFINITESIMAL


def shadow(a: LambdaNet, tol: float = DEFAULT_TOL):
    """Shadow (standard part) of a net, or ``None`` if undetermined."""
    return classify(a, tol).shadow
