"""Finite Bell-pair ensembles, their density-matrix fluctuations, and the
classical messages needed to distinguish them."""

from .ensemble import (
    EmpiricalDensityMatrix,
    Ensemble,
    Imbalance,
    OutcomeRecord,
    PreparationLabel,
    apply_discard,
    empirical_density_matrix,
    imbalance,
    prepare_balanced,
    prepare_ensemble,
    prune_to_balance,
)
from .protocols import (
    BasisGuess,
    ClassicalMessage,
    DistinguisherVerdict,
    EventLog,
    Preparation,
    SigmaSum,
    blind_distinguish,
    despagnat_distinguish,
    preskill_signal_attempt,
    run_timeline,
    sigma_sum,
    telephone_compare,
)
from .quantum import (
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

__version__ = "0.1.0"
