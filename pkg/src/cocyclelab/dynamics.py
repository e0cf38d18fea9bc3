"""Driving dynamics: Bernoulli shifts, circle rotations, periodic orbits.

Each system is an invertible map with a fully supported invariant measure
and a deterministic sampler.  Bernoulli points regenerate symbols from a
counter-based hash of (system seed, point stream, absolute position), so
stepping is exactly invertible and any coordinate of the two-sided sequence
is evaluable on demand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RejectedInputError

_U64 = np.uint64
_MIX_GAMMA = _U64(0x9E3779B97F4A7C15)
_MIX_M1 = _U64(0xBF58476D1CE4E5B9)
_MIX_M2 = _U64(0x94D049BB133111EB)

_SALT_SAMPLE = 0x53414D50
_SALT_STREAM = 0x53545245


def _mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer; bijective on uint64 (wraparound intended)."""
    with np.errstate(over="ignore"):
        z = (z + _MIX_GAMMA).astype(_U64)
        z = (z ^ (z >> _U64(30))) * _MIX_M1
        z = (z ^ (z >> _U64(27))) * _MIX_M2
        return z ^ (z >> _U64(31))


def _to_u64(part) -> np.ndarray:
    if isinstance(part, np.ndarray):
        return part.astype(np.int64).astype(_U64)
    return _U64(int(part) & 0xFFFFFFFFFFFFFFFF)


def _hash_u64(*parts) -> np.ndarray:
    """Combine integer parts (scalars or arrays) into uniform uint64 words."""
    acc = _U64(0)
    for part in parts:
        acc = _mix64(acc ^ _to_u64(part))
    return acc


def _uniform01(words: np.ndarray) -> np.ndarray:
    return (words >> _U64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


@dataclass(frozen=True)
class BernoulliPoint:
    """A point of the two-sided full shift: symbol stream id + window center."""

    stream: int
    center: int = 0


@dataclass(frozen=True)
class RotationPoint:
    """A circle point stored as (initial angle, iterate count).

    The realized angle is (angle0 + steps * alpha) mod 1, computed on demand;
    stepping is an exact bijection on representations.
    """

    angle0: float
    steps: int = 0


@dataclass(frozen=True)
class PeriodicPoint:
    index: int


BasePoint = BernoulliPoint | RotationPoint | PeriodicPoint


@dataclass(frozen=True)
class BaseSystem:
    """One of the three supported base families, with an invariant-measure sampler.

    Use the constructors `bernoulli_shift`, `circle_rotation`, `periodic_orbit`.
    """

    kind: str
    seed: int = 0
    probs: tuple = None
    alpha: float = None
    period: int = None
    window_radius: int = 64

    @staticmethod
    def bernoulli_shift(probs, seed: int = 0, window_radius: int = 64) -> "BaseSystem":
        q = tuple(float(p) for p in probs)
        if len(q) < 2:
            raise RejectedInputError("bernoulli shift needs at least two symbols")
        if any(p <= 0.0 for p in q):
            raise RejectedInputError("bernoulli probabilities must all be strictly positive")
        if abs(sum(q) - 1.0) > 1e-12:
            raise RejectedInputError(f"bernoulli probabilities must sum to 1 (got {sum(q)!r})")
        return BaseSystem(kind="bernoulli", seed=int(seed), probs=q, window_radius=int(window_radius))

    @staticmethod
    def circle_rotation(alpha: float, seed: int = 0) -> "BaseSystem":
        a = float(alpha)
        if not (0.0 < a < 1.0):
            raise RejectedInputError(f"rotation angle must lie in (0, 1), got {alpha}")
        return BaseSystem(kind="rotation", seed=int(seed), alpha=a)

    @staticmethod
    def periodic_orbit(period: int, seed: int = 0) -> "BaseSystem":
        r = int(period)
        if r < 1:
            raise RejectedInputError(f"period must be >= 1, got {period}")
        return BaseSystem(kind="periodic", seed=int(seed), period=r)

    # -- structure ---------------------------------------------------------

    @property
    def is_periodic(self) -> bool:
        return self.kind == "periodic"

    @property
    def num_symbols(self) -> int:
        if self.kind != "bernoulli":
            raise RejectedInputError("num_symbols is only defined for bernoulli shifts")
        return len(self.probs)

    def _check_point(self, x: BasePoint):
        ok = (
            (self.kind == "bernoulli" and isinstance(x, BernoulliPoint))
            or (self.kind == "rotation" and isinstance(x, RotationPoint))
            or (self.kind == "periodic" and isinstance(x, PeriodicPoint))
        )
        if not ok:
            raise RejectedInputError(f"point {x!r} does not belong to a {self.kind} system")
        if self.kind == "periodic" and not (0 <= x.index < self.period):
            raise RejectedInputError(f"periodic index {x.index} out of range [0, {self.period})")

    def origin(self) -> BasePoint:
        """A canonical starting point (stream 0 / angle 0 / index 0)."""
        if self.kind == "bernoulli":
            return BernoulliPoint(stream=int(_hash_u64(self.seed, _SALT_STREAM, 0)), center=0)
        if self.kind == "rotation":
            return RotationPoint(angle0=0.0, steps=0)
        return PeriodicPoint(index=0)

    # -- symbols (bernoulli only) ------------------------------------------

    def symbols(self, x: BernoulliPoint, positions) -> np.ndarray:
        """Symbols of x at absolute positions (array), regenerated deterministically."""
        self._check_point(x)
        pos = np.asarray(positions, dtype=np.int64)
        u = _uniform01(_hash_u64(self.seed, x.stream, pos))
        cum = np.cumsum(self.probs)
        return np.searchsorted(cum, u, side="right").astype(np.int64)

    def symbol_at(self, x: BernoulliPoint, offset: int = 0) -> int:
        """Symbol at the window position `offset` relative to the center."""
        return int(self.symbols(x, [x.center + offset])[0])

    def window(self, x: BernoulliPoint, radius: int = None) -> np.ndarray:
        """Two-sided symbol window of the given radius around the center."""
        w = self.window_radius if radius is None else int(radius)
        return self.symbols(x, np.arange(x.center - w, x.center + w + 1))

    def rotation_angle(self, x: RotationPoint) -> float:
        self._check_point(x)
        return (x.angle0 + x.steps * self.alpha) % 1.0

    # -- dynamics ----------------------------------------------------------

    def step(self, x: BasePoint) -> BasePoint:
        """One application of the homeomorphism f."""
        self._check_point(x)
        if self.kind == "bernoulli":
            return BernoulliPoint(stream=x.stream, center=x.center + 1)
        if self.kind == "rotation":
            return RotationPoint(angle0=x.angle0, steps=x.steps + 1)
        return PeriodicPoint(index=(x.index + 1) % self.period)

    def inverse_step(self, x: BasePoint) -> BasePoint:
        """One application of f^{-1}; exact inverse of `step`."""
        self._check_point(x)
        if self.kind == "bernoulli":
            return BernoulliPoint(stream=x.stream, center=x.center - 1)
        if self.kind == "rotation":
            return RotationPoint(angle0=x.angle0, steps=x.steps - 1)
        return PeriodicPoint(index=(x.index - 1) % self.period)

    def orbit(self, x: BasePoint, n: int) -> list:
        """[x, f(x), ..., f^n(x)] (n+1 points)."""
        if n < 0:
            raise RejectedInputError("orbit length must be nonnegative")
        pts = [x]
        for _ in range(n):
            pts.append(self.step(pts[-1]))
        return pts

    def sample_measure(self, count: int) -> list:
        """Deterministic i.i.d.-style sample from the invariant measure.

        Bernoulli product measure / Lebesgue on the circle / uniform on the
        periodic orbit.  Identical (seed, parameters, count) give bitwise
        identical samples.
        """
        if count < 1:
            raise RejectedInputError("sample count must be >= 1")
        if self.kind == "bernoulli":
            streams = _hash_u64(self.seed, _SALT_STREAM, np.arange(1, count + 1))
            return [BernoulliPoint(stream=int(s), center=0) for s in streams]
        if self.kind == "rotation":
            angles = _uniform01(_hash_u64(self.seed, _SALT_SAMPLE, np.arange(count)))
            return [RotationPoint(angle0=float(a), steps=0) for a in angles]
        idx = _hash_u64(self.seed, _SALT_SAMPLE, np.arange(count)) % _U64(self.period)
        return [PeriodicPoint(index=int(i)) for i in idx]

    def full_orbit_points(self) -> list:
        """All points of a periodic system (error for other kinds)."""
        if self.kind != "periodic":
            raise RejectedInputError("full_orbit_points is only defined for periodic systems")
        return [PeriodicPoint(index=i) for i in range(self.period)]
