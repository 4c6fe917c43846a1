"""Qubit states, measurement axes, the Born rule and Bell-pair collapse.

Phase convention for every eigenstate produced here: ``amp_up`` is real and
non-negative; when ``amp_up`` is zero, ``amp_down`` is real and positive.
With that convention fixed, a collapsed state is bit-identical to the
eigenstate returned by :func:`axis_eigenstates`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import lru_cache

import numpy as np

from .errors import InvalidAxisError, InvalidStateError

NORM_TOL = 1e-9
RENORM_TOL = 1e-6
# fidelity window inside which a computed post-measurement state is replaced
# by the exact eigenstate it approximates
SNAP_TOL = 1e-12


def _checked_norm(norm_sq, tol_error):
    dev = abs(norm_sq - 1.0)
    if dev <= NORM_TOL:
        return None
    if dev <= RENORM_TOL:
        return math.sqrt(norm_sq)
    raise tol_error


@dataclass(frozen=True)
class PureQubitState:
    amp_up: complex
    amp_down: complex

    def __post_init__(self):
        up, down = complex(self.amp_up), complex(self.amp_down)
        norm_sq = abs(up) ** 2 + abs(down) ** 2
        if not math.isfinite(norm_sq):
            raise InvalidStateError("amplitudes must be finite")
        scale = _checked_norm(
            norm_sq, InvalidStateError(f"state is not normalized (|psi|^2 = {norm_sq!r})")
        )
        if scale is not None:
            up, down = up / scale, down / scale
        object.__setattr__(self, "amp_up", up)
        object.__setattr__(self, "amp_down", down)

    @classmethod
    def from_array(cls, amps) -> "PureQubitState":
        return cls(complex(amps[0]), complex(amps[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.amp_up, self.amp_down], dtype=complex)

    def inner(self, other: "PureQubitState") -> complex:
        """<self|other>."""
        return self.amp_up.conjugate() * other.amp_up + self.amp_down.conjugate() * other.amp_down

    def projector(self) -> np.ndarray:
        v = self.as_array()
        return np.outer(v, v.conj())


@dataclass(frozen=True)
class TwoQubitState:
    """Two-qubit pure state; ``amps[2*a + b]`` is the (Alice a, Bob b) amplitude, 0 = up."""

    amps: tuple

    def __post_init__(self):
        amps = tuple(complex(a) for a in self.amps)
        if len(amps) != 4:
            raise InvalidStateError(f"two-qubit state needs 4 amplitudes, got {len(amps)}")
        norm_sq = sum(abs(a) ** 2 for a in amps)
        scale = _checked_norm(
            norm_sq, InvalidStateError(f"state is not normalized (|psi|^2 = {norm_sq!r})")
        )
        if scale is not None:
            amps = tuple(a / scale for a in amps)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def product(cls, alice: PureQubitState, bob: PureQubitState) -> "TwoQubitState":
        return cls(tuple(np.kron(alice.as_array(), bob.as_array())))

    def matrix(self) -> np.ndarray:
        """Amplitudes as a 2x2 array indexed [alice, bob]."""
        return np.array(self.amps, dtype=complex).reshape(2, 2)


@dataclass(frozen=True)
class MeasurementAxis:
    bloch: tuple

    def __post_init__(self):
        try:
            vec = tuple(float(c) for c in self.bloch)
        except (TypeError, ValueError) as exc:
            raise InvalidAxisError(f"axis must be three real numbers: {self.bloch!r}") from exc
        if len(vec) != 3 or not all(math.isfinite(c) for c in vec):
            raise InvalidAxisError(f"axis must be three finite reals: {self.bloch!r}")
        norm_sq = sum(c * c for c in vec)
        scale = _checked_norm(
            norm_sq, InvalidAxisError(f"axis is not a unit vector (|n|^2 = {norm_sq!r})")
        )
        if scale is not None:
            vec = tuple(c / scale for c in vec)
        object.__setattr__(self, "bloch", vec)

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "MeasurementAxis":
        """Polar angle ``theta`` from +z, azimuth ``phi`` from +x, both in radians."""
        return cls((math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)))

    def reversed(self) -> "MeasurementAxis":
        return MeasurementAxis(tuple(-c for c in self.bloch))

    def conjugate(self) -> "MeasurementAxis":
        """Axis whose eigenstates are the complex conjugates of this axis' eigenstates."""
        x, y, z = self.bloch
        return MeasurementAxis((x, -y, z))

    def __str__(self):
        for name, axis in (("z", Z_AXIS), ("x", X_AXIS), ("y", Y_AXIS)):
            if self.bloch == axis.bloch:
                return name
        return "bloch({:.6g},{:.6g},{:.6g})".format(*self.bloch)


X_AXIS = MeasurementAxis((1.0, 0.0, 0.0))
Y_AXIS = MeasurementAxis((0.0, 1.0, 0.0))
Z_AXIS = MeasurementAxis((0.0, 0.0, 1.0))


class Outcome(IntEnum):
    UP = 1
    DOWN = -1


def _as_axis(axis) -> MeasurementAxis:
    if isinstance(axis, MeasurementAxis):
        return axis
    return MeasurementAxis(tuple(axis))


def _as_state(state) -> PureQubitState:
    if isinstance(state, PureQubitState):
        return state
    try:
        return PureQubitState.from_array(state)
    except (TypeError, IndexError) as exc:
        raise InvalidStateError(f"not a qubit state: {state!r}") from exc


_EIGEN_CACHE: dict = {}


def axis_eigenstates(axis) -> tuple[PureQubitState, PureQubitState]:
    """Return ``(plus, minus)`` eigenstates of the spin component along ``axis``."""
    axis = _as_axis(axis)
    cached = _EIGEN_CACHE.get(axis.bloch)
    if cached is not None:
        return cached
    x, y, z = axis.bloch
    # half-angle forms keep the x and z eigenstates exactly symmetric
    cos_half = math.sqrt(max(0.0, (1.0 + z) / 2.0))
    sin_half = math.sqrt(max(0.0, (1.0 - z) / 2.0))
    rho = math.hypot(x, y)
    phase = complex(x / rho, y / rho) if rho > 0.0 else complex(1.0, 0.0)

    plus_down = phase * sin_half if cos_half > 0.0 else complex(1.0, 0.0)
    minus_down = -phase * cos_half if sin_half > 0.0 else complex(1.0, 0.0)
    pair = (
        PureQubitState(complex(cos_half, 0.0), plus_down),
        PureQubitState(complex(sin_half, 0.0), minus_down),
    )
    if len(_EIGEN_CACHE) < 4096:
        _EIGEN_CACHE[axis.bloch] = pair
    return pair


def eigenbasis_matrix(axis) -> np.ndarray:
    """Unitary whose columns are the (plus, minus) eigenstates of ``axis``."""
    plus, minus = axis_eigenstates(axis)
    return np.column_stack([plus.as_array(), minus.as_array()])


def born_single(state, axis) -> float:
    """Probability of the +1 outcome when measuring ``state`` along ``axis``."""
    state = _as_state(state)
    plus, _ = axis_eigenstates(axis)
    return min(1.0, max(0.0, abs(plus.inner(state)) ** 2))


def measure_single(state, axis, rng: "RandomSource") -> tuple[Outcome, PureQubitState]:
    """Projective measurement; consumes one uniform draw from ``rng``."""
    p_plus = born_single(state, axis)
    plus, minus = axis_eigenstates(axis)
    if rng.random() < p_plus:
        return Outcome.UP, plus
    return Outcome.DOWN, minus


def make_bell_phi_plus() -> TwoQubitState:
    s = 1.0 / math.sqrt(2.0)
    return TwoQubitState((s, 0.0, 0.0, s))


PHI_PLUS = make_bell_phi_plus()


def born_joint(pair: TwoQubitState, alice: PureQubitState, bob: PureQubitState) -> float:
    """|(<alice| x <bob|) pair|^2."""
    amp = np.vdot(np.kron(alice.as_array(), bob.as_array()), np.array(pair.amps, dtype=complex))
    return float(abs(amp) ** 2)


def _snap(candidate: np.ndarray, axis: MeasurementAxis) -> PureQubitState:
    """Canonical-phase state for ``candidate``, replaced by the exact eigenstate
    of ``axis`` when it matches one to within SNAP_TOL in fidelity."""
    for eig in axis_eigenstates(axis):
        if abs(abs(np.vdot(eig.as_array(), candidate)) ** 2 - 1.0) <= SNAP_TOL:
            return eig
    up, down = complex(candidate[0]), complex(candidate[1])
    ref = up if abs(up) > 0.0 else down
    phase = ref.conjugate() / abs(ref)
    return PureQubitState(up * phase, down * phase)


@lru_cache(maxsize=1024)
def bob_outcome_probability(pair: TwoQubitState, axis) -> float:
    """Marginal probability that Bob obtains +1 measuring his qubit along ``axis``."""
    plus, _ = axis_eigenstates(axis)
    alice_unnorm = pair.matrix() @ plus.as_array().conj()
    return float(min(1.0, max(0.0, np.vdot(alice_unnorm, alice_unnorm).real)))


def measure_pair_bob(pair: TwoQubitState, axis, rng: "RandomSource") -> tuple[Outcome, PureQubitState]:
    """Bob measures his half of ``pair`` along ``axis``.

    Returns Bob's outcome and Alice's conditional post-measurement state. One
    uniform draw is consumed from ``rng``.
    """
    axis = _as_axis(axis)
    outcome = Outcome.UP if rng.random() < bob_outcome_probability(pair, axis) else Outcome.DOWN
    return outcome, alice_conditional_state(pair, axis, outcome)


@lru_cache(maxsize=1024)
def alice_conditional_state(pair: TwoQubitState, axis, outcome) -> PureQubitState:
    """Alice's normalized state after Bob obtained ``outcome`` along ``axis``."""
    axis = _as_axis(axis)
    plus, minus = axis_eigenstates(axis)
    eig = plus if outcome == 1 else minus
    alice = pair.matrix() @ eig.as_array().conj()
    norm = np.linalg.norm(alice)
    if norm == 0.0:
        raise InvalidStateError(f"Bob outcome {int(outcome):+d} has zero probability for this pair")
    # for |Phi+> Alice's conditional state is the conjugate of Bob's eigenstate
    return _snap(alice / norm, axis.conjugate())


def plus_probabilities(amps: np.ndarray, axis) -> np.ndarray:
    """Vectorized :func:`born_single` over an ``(N, 2)`` amplitude array."""
    plus, _ = axis_eigenstates(axis)
    overlap = amps @ plus.as_array().conj()
    return np.clip(np.abs(overlap) ** 2, 0.0, 1.0)


def measure_many(amps: np.ndarray, axis, rng: "RandomSource") -> np.ndarray:
    """Measure each row of ``amps`` along ``axis``; returns an int8 array of +-1.

    Draw-for-draw identical to calling :func:`measure_single` on each row in order.
    """
    p = plus_probabilities(amps, axis)
    return np.where(rng.random(len(p)) < p, 1, -1).astype(np.int8)


def states_to_array(states) -> np.ndarray:
    """Stack a sequence of states (or an existing ``(N, 2)`` array) into an array."""
    if isinstance(states, np.ndarray):
        arr = np.asarray(states, dtype=complex)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise InvalidStateError(f"expected an (N, 2) amplitude array, got shape {arr.shape}")
        return arr
    rows = [_as_state(s) for s in states]
    if not rows:
        return np.zeros((0, 2), dtype=complex)
    return np.array([[s.amp_up, s.amp_down] for s in rows], dtype=complex)


@dataclass
class RandomSource:
    """Reproducible uniform stream keyed by ``(master_seed, stream_id)``.

    Streams are derived with numpy's SeedSequence spawn keys, so distinct
    stream ids (and distinct sub-stream offsets) give independent streams.
    """

    master_seed: int
    stream_id: int = 0
    path: tuple = ()
    _gen: np.random.Generator | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.stream_id < 0:
            raise ValueError("stream_id must be non-negative")
        self.master_seed = int(self.master_seed) & 0xFFFF_FFFF_FFFF_FFFF

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id, *self.path))
            self._gen = np.random.Generator(np.random.PCG64(seq))
        return self._gen

    def random(self, size=None):
        return self.generator.random(size)

    def substream(self, *offsets: int) -> "RandomSource":
        """Independent child stream at fixed offsets below this one."""
        return RandomSource(self.master_seed, self.stream_id, self.path + tuple(offsets))

