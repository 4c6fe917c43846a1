"""Alice's finite ensembles: preparation from Bell pairs, empirical density
matrices, the up/down imbalance, and balancing by discarding qubits.

Sign convention for the imbalance in the density matrix: ``+n_delta/N`` sits
on the diagonal entry of the +1 eigenstate of the preparation axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import AlignmentError, ConventionError, EmptyEnsembleError, EnsembleToolkitError
from .quantum import (
    PHI_PLUS,
    MeasurementAxis,
    PureQubitState,
    RandomSource,
    TwoQubitState,
    Z_AXIS,
    _as_axis,
    alice_conditional_state,
    axis_eigenstates,
    bob_outcome_probability,
    eigenbasis_matrix,
    states_to_array,
)

DM_TOL = 1e-12


@dataclass(frozen=True)
class PreparationLabel:
    basis_axis: MeasurementAxis
    pruned: bool = False


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Ordered qubits held by Alice.

    ``amplitudes`` is an ``(N, 2)`` read-only complex array; ``states`` gives
    the same qubits as :class:`PureQubitState` objects. ``label`` is ground
    truth for scoring and is never handed to a distinguisher.
    """

    amplitudes: np.ndarray
    label: PreparationLabel
    origin_indices: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        origin = np.array(self.origin_indices, dtype=np.int64)
        if amps.ndim != 2 or amps.shape[1] != 2 or len(amps) == 0:
            raise EmptyEnsembleError("an ensemble needs at least one qubit")
        if origin.shape != (len(amps),):
            raise AlignmentError(f"{len(origin)} origin indices for {len(amps)} qubits")
        if np.any(np.diff(origin) <= 0):
            raise EnsembleToolkitError("origin indices must be strictly increasing")
        norms = np.sum(np.abs(amps) ** 2, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise EnsembleToolkitError("every qubit state must be normalized")
        amps.flags.writeable = False
        origin.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "origin_indices", origin)

    @classmethod
    def from_states(cls, states, label: PreparationLabel, origin_indices=None) -> "Ensemble":
        amps = states_to_array(states)
        if origin_indices is None:
            origin_indices = np.arange(len(amps))
        return cls(amps, label, origin_indices)

    @property
    def n(self) -> int:
        return len(self.amplitudes)

    def __len__(self):
        return self.n

    @property
    def states(self) -> tuple[PureQubitState, ...]:
        return tuple(PureQubitState(complex(u), complex(d)) for u, d in self.amplitudes)

    def select(self, mask) -> "Ensemble":
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise EmptyEnsembleError("selection leaves no qubits")
        return _trusted(self.amplitudes[mask], self.label, self.origin_indices[mask])


def _trusted(amps, label, origin) -> Ensemble:
    """Build an Ensemble from arrays already known to satisfy its invariants."""
    e = object.__new__(Ensemble)
    amps.flags.writeable = False
    origin.flags.writeable = False
    object.__setattr__(e, "amplitudes", amps)
    object.__setattr__(e, "label", label)
    object.__setattr__(e, "origin_indices", origin)
    return e


@dataclass(frozen=True, eq=False)
class OutcomeRecord:
    """Bob's +-1 outcomes, aligned index-by-index with the ensemble he prepared."""

    outcomes: np.ndarray

    def __post_init__(self):
        arr = np.array(self.outcomes, dtype=np.int8).reshape(-1)
        if not np.all((arr == 1) | (arr == -1)):
            raise EnsembleToolkitError("outcomes must be +1 or -1")
        arr.flags.writeable = False
        object.__setattr__(self, "outcomes", arr)

    def __len__(self):
        return len(self.outcomes)

    def __eq__(self, other):
        return isinstance(other, OutcomeRecord) and np.array_equal(self.outcomes, other.outcomes)

    def select(self, mask) -> "OutcomeRecord":
        return OutcomeRecord(self.outcomes[np.asarray(mask, dtype=bool)])

    def to_list(self) -> list[int]:
        return [int(v) for v in self.outcomes]


@dataclass(frozen=True)
class Imbalance:
    n_delta: int
    n: int


@dataclass(frozen=True, eq=False)
class EmpiricalDensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.shape != (2, 2):
            raise EnsembleToolkitError(f"density matrix must be 2x2, got {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > DM_TOL:
            raise EnsembleToolkitError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > DM_TOL:
            raise EnsembleToolkitError(f"density matrix trace is {np.trace(m)}")
        if np.min(np.linalg.eigvalsh(m)) < -DM_TOL:
            raise EnsembleToolkitError("density matrix has a negative eigenvalue")
        m.flags.writeable = False
        object.__setattr__(self, "entries", m)

    def __getitem__(self, idx):
        return self.entries[idx]

    def __eq__(self, other):
        return isinstance(other, EmpiricalDensityMatrix) and np.array_equal(self.entries, other.entries)

    def allclose(self, other, atol=1e-12) -> bool:
        other = other.entries if isinstance(other, EmpiricalDensityMatrix) else np.asarray(other)
        return bool(np.allclose(self.entries, other, rtol=0.0, atol=atol))


def prepare_ensemble(
    n: int, bob_axis, rng: RandomSource, pair: TwoQubitState = PHI_PLUS
) -> tuple[Ensemble, OutcomeRecord]:
    """Bob measures his halves of ``n`` fresh pairs along ``bob_axis``.

    Equivalent, draw for draw, to ``n`` successive calls of
    :func:`~epr_ensembles.quantum.measure_pair_bob` on the same stream.
    """
    if n < 1:
        raise EmptyEnsembleError(f"cannot prepare an ensemble of {n} qubits")
    axis = _as_axis(bob_axis)
    p_plus = bob_outcome_probability(pair, axis)
    outcomes = np.where(rng.random(n) < p_plus, 1, -1).astype(np.int8)

    table = np.zeros((2, 2), dtype=complex)
    for row, outcome in ((0, 1), (1, -1)):
        if np.any(outcomes == outcome):
            table[row] = alice_conditional_state(pair, axis, outcome).as_array()
    amps = table[(outcomes == -1).astype(np.intp)]
    label = PreparationLabel(axis, pruned=False)
    return _trusted(amps, label, np.arange(n)), OutcomeRecord(outcomes)


def _coordinates(amps: np.ndarray, axis) -> np.ndarray:
    """Components of each row in the (plus, minus) eigenbasis of ``axis``.

    Rows that are bit-identical to an eigenstate get exact unit coordinates.
    """
    plus, minus = axis_eigenstates(axis)
    coords = amps @ eigenbasis_matrix(axis).conj()
    is_plus = np.all(amps == plus.as_array(), axis=1)
    is_minus = np.all(amps == minus.as_array(), axis=1)
    coords[is_plus] = (1.0, 0.0)
    coords[is_minus] = (0.0, 1.0)
    return coords


def empirical_density_matrix(e: Ensemble, basis=None) -> EmpiricalDensityMatrix:
    """(1/N) sum_i |psi_i><psi_i|.

    Expressed in the standard z basis by default, or in the (plus, minus)
    eigenbasis of ``basis`` when given.
    """
    amps = e.amplitudes if isinstance(e, Ensemble) else states_to_array(e)
    if len(amps) == 0:
        raise EmptyEnsembleError("density matrix of an empty ensemble")
    if basis is not None:
        amps = _coordinates(amps, basis)
    total = np.einsum("ni,nj->ij", amps, amps.conj())
    # complex / int is not correctly rounded in numpy; divide the parts separately
    rho = np.empty((2, 2), dtype=complex)
    rho.real = total.real / len(amps)
    rho.imag = total.imag / len(amps)
    return EmpiricalDensityMatrix(rho)


def imbalance(rec: OutcomeRecord) -> Imbalance:
    """Number of +1 outcomes minus N/2 (minus ceil(N/2) for odd N)."""
    outcomes = rec.outcomes if isinstance(rec, OutcomeRecord) else np.asarray(rec)
    n = len(outcomes)
    if n == 0:
        raise EmptyEnsembleError("imbalance of an empty record")
    ups = int(np.count_nonzero(outcomes == 1))
    return Imbalance(ups - (n + 1) // 2, n)


def _check_aligned(e: Ensemble, rec: OutcomeRecord):
    if len(e) != len(rec):
        raise AlignmentError(f"ensemble has {len(e)} qubits but record has {len(rec)} outcomes")


def prune_to_balance(e: Ensemble, rec: OutcomeRecord, size: int | None = None) -> tuple[Ensemble, list[int]]:
    """Drop qubits until +1 and -1 outcomes are equally represented.

    Surplus qubits are dropped highest origin index first. With ``size`` the
    result is cut down further to exactly ``size`` qubits (``size/2`` of each
    outcome). Returns the balanced ensemble and the sorted discarded origin
    indices, which is the content of the message Bob sends to Alice.
    """
    _check_aligned(e, rec)
    if e.label.pruned:
        raise EnsembleToolkitError("ensemble is already pruned")
    ups = np.flatnonzero(rec.outcomes == 1)
    downs = np.flatnonzero(rec.outcomes == -1)
    keep_each = min(len(ups), len(downs))
    if size is not None:
        if size < 2 or size % 2:
            raise ConventionError(f"balanced size must be even and >= 2, got {size}")
        if size // 2 > keep_each:
            raise EmptyEnsembleError(
                f"cannot balance to {size}: only {len(ups)} up and {len(downs)} down outcomes"
            )
        keep_each = size // 2
    if keep_each == 0:
        raise EmptyEnsembleError("balancing would leave fewer than 2 qubits")
    keep = np.zeros(len(e), dtype=bool)
    keep[ups[:keep_each]] = True
    keep[downs[:keep_each]] = True
    discard = [int(i) for i in e.origin_indices[~keep]]
    return _trusted(e.amplitudes[keep], replace(e.label, pruned=True), e.origin_indices[keep]), discard


def apply_discard(e: Ensemble, discard) -> Ensemble:
    """Alice's side of balancing: remove the qubits named in a discard list."""
    drop = np.isin(e.origin_indices, np.asarray(list(discard), dtype=np.int64))
    if drop.all():
        raise EmptyEnsembleError("discard list removes every qubit")
    return _trusted(e.amplitudes[~drop], replace(e.label, pruned=True), e.origin_indices[~drop])


def prepare_balanced(size: int, axis, rng: RandomSource) -> tuple[Ensemble, OutcomeRecord, list[int]]:
    """Prepare fresh pairs and prune to a balanced ensemble of exactly ``size`` qubits.

    Pairs are prepared in one batch sized to make a shortfall unlikely; on a
    shortfall a larger batch is drawn from the same stream. Returns the
    balanced ensemble, Bob's full record and the discard list.
    """
    if size < 2 or size % 2:
        raise ConventionError(f"balanced size must be even and >= 2, got {size}")
    n = size + max(16, 6 * math.isqrt(size) + 6)
    while True:
        e, rec = prepare_ensemble(n, axis, rng)
        ups = int(np.count_nonzero(rec.outcomes == 1))
        if min(ups, n - ups) >= size // 2:
            balanced, discard = prune_to_balance(e, rec, size=size)
            return balanced, rec, discard
        n *= 2


def ensemble_to_dict(e: Ensemble) -> dict:
    """Serialize as a header plus one record per qubit."""
    return {
        "N": e.n,
        "pruned": e.label.pruned,
        "qubits": [
            {
                "origin_index": int(i),
                "amp_up_re": float(u.real),
                "amp_up_im": float(u.imag),
                "amp_down_re": float(d.real),
                "amp_down_im": float(d.imag),
            }
            for i, (u, d) in zip(e.origin_indices, e.amplitudes)
        ],
    }


def ensemble_from_dict(data: dict, basis_axis=Z_AXIS) -> Ensemble:
    qubits = data["qubits"]
    if len(qubits) != data["N"]:
        raise AlignmentError(f"header says N={data['N']} but {len(qubits)} qubit records follow")
    amps = np.array(
        [[complex(q["amp_up_re"], q["amp_up_im"]), complex(q["amp_down_re"], q["amp_down_im"])] for q in qubits],
        dtype=complex,
    )
    origin = [q["origin_index"] for q in qubits]
    return Ensemble(amps, PreparationLabel(_as_axis(basis_axis), bool(data["pruned"])), origin)
