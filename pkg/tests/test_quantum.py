import math

import numpy as np
import pytest

from epr_ensembles import (
    PHI_PLUS,
    X_AXIS,
    Y_AXIS,
    Z_AXIS,
    MeasurementAxis,
    Outcome,
    PureQubitState,
    RandomSource,
    TwoQubitState,
    axis_eigenstates,
    born_single,
    make_bell_phi_plus,
    measure_pair_bob,
    measure_single,
)
from epr_ensembles.errors import InvalidAxisError, InvalidStateError
from epr_ensembles.quantum import born_joint, measure_many, states_to_array

from conftest import three_sigma_band

S = 1 / math.sqrt(2)
UP_Z, DOWN_Z = axis_eigenstates(Z_AXIS)
UP_X, DOWN_X = axis_eigenstates(X_AXIS)


def test_bell_state_amplitudes():
    amps = make_bell_phi_plus().amps
    assert amps[0] == pytest.approx(S) and amps[3] == pytest.approx(S)
    assert amps[1] == 0 and amps[2] == 0


def test_bell_joint_probabilities():
    assert born_joint(PHI_PLUS, UP_Z, UP_Z) == pytest.approx(0.5, abs=1e-15)
    assert born_joint(PHI_PLUS, UP_Z, DOWN_Z) == 0.0


@pytest.mark.parametrize(
    "axis, plus, minus",
    [
        ((0, 0, 1), (1, 0), (0, 1)),
        ((1, 0, 0), (S, S), (S, -S)),
        ((0, 0, -1), (0, 1), (1, 0)),
    ],
)
def test_axis_eigenstates_known_axes(axis, plus, minus):
    p, m = axis_eigenstates(axis)
    np.testing.assert_allclose(p.as_array(), plus, atol=1e-15)
    np.testing.assert_allclose(m.as_array(), minus, atol=1e-15)


@pytest.mark.parametrize("axis", [X_AXIS, Y_AXIS, Z_AXIS, Z_AXIS.reversed(), MeasurementAxis.from_angles(1.1, -2.3)])
def test_eigenstates_orthonormal_and_phase_convention(axis):
    p, m = axis_eigenstates(axis)
    assert abs(p.inner(m)) < 1e-15
    for st in (p, m):
        assert abs(st.amp_up) ** 2 + abs(st.amp_down) ** 2 == pytest.approx(1.0, abs=1e-15)
        if st.amp_up == 0:
            assert st.amp_down.imag == 0 and st.amp_down.real > 0
        else:
            assert st.amp_up.imag == 0 and st.amp_up.real > 0
    # expectation of sigma.n is +1 on the plus state
    sx = np.array([[0, 1], [1, 0]])
    sy = np.array([[0, -1j], [1j, 0]])
    sz = np.diag([1, -1])
    op = axis.bloch[0] * sx + axis.bloch[1] * sy + axis.bloch[2] * sz
    assert np.vdot(p.as_array(), op @ p.as_array()).real == pytest.approx(1.0, abs=1e-12)


def test_non_unit_axis_rejected():
    with pytest.raises(InvalidAxisError):
        axis_eigenstates((1.0, 1.0, 0.0))
    with pytest.raises(InvalidAxisError):
        MeasurementAxis((0.0, 0.0, 0.0))


def test_near_unit_inputs_renormalized():
    st = PureQubitState(1.0 + 1e-8, 0.0)
    assert st.amp_up == 1.0
    ax = MeasurementAxis((0.0, 0.0, 1.0 + 1e-8))
    assert ax.bloch[2] == 1.0
    with pytest.raises(InvalidStateError):
        PureQubitState(1.1, 0.0)


@pytest.mark.parametrize(
    "state, axis, expected",
    [(UP_Z, Z_AXIS, 1.0), (UP_Z, X_AXIS, 0.5), (UP_X, X_AXIS, 1.0), (DOWN_X, X_AXIS, 0.0)],
)
def test_born_single(state, axis, expected):
    assert born_single(state, axis) == pytest.approx(expected, abs=1e-15)


def test_born_single_rejects_unnormalized():
    with pytest.raises(InvalidStateError):
        born_single((1.0, 1.0), Z_AXIS)


def test_measure_single_eigenstates_are_deterministic():
    for seed in range(20):
        rng = RandomSource(seed)
        assert measure_single(UP_Z, Z_AXIS, rng) == (Outcome.UP, UP_Z)
        assert measure_single(DOWN_X, X_AXIS, rng) == (Outcome.DOWN, DOWN_X)


def test_measure_single_frequency_in_binomial_band():
    trials = 100_000
    rng = RandomSource(11)
    ups = sum(measure_single(UP_X, Z_AXIS, rng)[0] is Outcome.UP for _ in range(trials))
    lo, hi = three_sigma_band(0.5, trials)
    assert lo <= ups / trials <= hi


def test_measure_many_matches_sequential_single_measurements():
    amps = states_to_array([UP_X, DOWN_Z, UP_Z, DOWN_X] * 25)
    batch = measure_many(amps, Z_AXIS, RandomSource(5, 3))
    rng = RandomSource(5, 3)
    seq = [int(measure_single(PureQubitState.from_array(a), Z_AXIS, rng)[0]) for a in amps]
    assert batch.tolist() == seq


@pytest.mark.parametrize("axis, eig", [(Z_AXIS, (UP_Z, DOWN_Z)), (X_AXIS, (UP_X, DOWN_X))])
def test_bob_measurement_on_phi_plus(axis, eig):
    rng = RandomSource(3)
    seen = {Outcome.UP: 0, Outcome.DOWN: 0}
    for _ in range(2000):
        outcome, alice = measure_pair_bob(PHI_PLUS, axis, rng)
        # bit-exact collapse onto the eigenstate of Bob's outcome
        assert alice == (eig[0] if outcome is Outcome.UP else eig[1])
        seen[outcome] += 1
    assert 850 < seen[Outcome.UP] < 1150


def test_bob_measurement_on_product_state_is_deterministic():
    pair = TwoQubitState.product(UP_Z, UP_Z)
    for seed in range(10):
        assert measure_pair_bob(pair, Z_AXIS, RandomSource(seed)) == (Outcome.UP, UP_Z)


def test_bob_measurement_y_axis_gives_conjugate_state():
    # (<e|_B x I)|Phi+> is proportional to |e*>, and y eigenstates swap under conjugation
    up_y, down_y = axis_eigenstates(Y_AXIS)
    outcome, alice = measure_pair_bob(PHI_PLUS, Y_AXIS, RandomSource(1))
    assert alice == (down_y if outcome is Outcome.UP else up_y)


@pytest.mark.parametrize("axis", [X_AXIS, Z_AXIS])
def test_perfect_correlation_along_same_axis(axis):
    rng = RandomSource(99)
    for _ in range(500):
        bob, alice_state = measure_pair_bob(PHI_PLUS, axis, rng)
        alice, _ = measure_single(alice_state, axis, rng)
        assert alice is bob


def test_random_source_reproducible_and_independent():
    a = RandomSource(42, 7).random(1000)
    b = RandomSource(42, 7).random(1000)
    c = RandomSource(42, 8).random(1000)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.1
    np.testing.assert_array_equal(RandomSource(42, 7).substream(1).random(5), RandomSource(42, 7, (1,)).random(5))
