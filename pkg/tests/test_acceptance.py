"""Exit criteria for the package, one test per criterion.

Each test records a PASS/FAIL line; the lines are printed in the terminal
summary (see conftest.py). Run just this module with::

    pytest tests/test_acceptance.py -v
"""

import math

import numpy as np
import pytest

from epr_ensembles import (
    X_AXIS,
    Z_AXIS,
    BasisGuess,
    ClassicalMessage,
    Preparation,
    RandomSource,
    despagnat_distinguish,
    imbalance,
    prepare_balanced,
    prepare_ensemble,
    run_timeline,
    sigma_sum,
    telephone_compare,
)
from epr_ensembles.cli import ExperimentConfig, run_experiment
from epr_ensembles.protocols import SCENARIOS as TIMELINE_SCENARIOS
from epr_ensembles.quantum import measure_many
from epr_ensembles import stats

RESULTS = []


def report(criterion, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_1_balanced_z_sum_is_exactly_zero():
    trials = 10_000
    sizes = (2, 10, 100, 1000)
    nonzero = 0
    for t in range(trials):
        rng = RandomSource(101, t)
        e, _, _ = prepare_balanced(sizes[t % len(sizes)], Z_AXIS, rng.substream(1))
        nonzero += sigma_sum(e.amplitudes, Z_AXIS, rng.substream(2)).value != 0
    report("1 balanced z sum exact", nonzero == 0, f"{nonzero}/{trials} nonzero sums (N' in {sizes})")


def test_2_balanced_x_sum_variance_and_law():
    trials, size = 10_000, 100
    sums = np.array([
        sigma_sum(prepare_balanced(size, X_AXIS, RandomSource(202, t).substream(1))[0].amplitudes,
                  Z_AXIS, RandomSource(202, t).substream(2)).value
        for t in range(trials)
    ])
    var = stats.variance_estimate(sums)
    tv = stats.tv_distance(stats.Histogram.from_samples(sums), stats.binomial_exact(size))
    ok = abs(var - size) <= 0.05 * size and tv < 0.03
    report("2 balanced x sum scale", ok, f"var={var:.2f} (target 100 +-5%), tv to binomial={tv:.4f} (< 0.03)")


def test_3_imbalance_law_and_sqrt_scaling():
    n, trials = 256, 100_000
    deltas = np.array([imbalance(prepare_ensemble(n, Z_AXIS, RandomSource(303, t))[1]).n_delta for t in range(trials)])
    # n_delta = sum / 2, so the exact law of n_delta is binomial_exact(n) with halved support
    law = {s // 2: p for s, p in stats.binomial_exact(n).items()}
    pvalue = stats.chi_square_pvalue(stats.Histogram.from_samples(deltas), law)

    rep = run_experiment(ExperimentConfig("scaling", trials=10_000, seed=304))
    exponent = rep.summary["exponent"]
    oracle_exponent = rep.oracle["exponent"]
    ok = pvalue > 0.001 and 0.45 <= exponent <= 0.55 and 0.48 <= oracle_exponent <= 0.52
    report(
        "3 imbalance law",
        ok,
        f"chi-square p={pvalue:.4f} (> 0.001), MC exponent={exponent:.4f} in [0.45,0.55], "
        f"oracle exponent={oracle_exponent:.4f} in [0.48,0.52]",
    )


def test_4_no_signaling():
    rep = run_experiment(ExperimentConfig("no-signal", n=100, trials=100_000, seed=404))
    acc = rep.summary["accuracy"]
    tv = rep.summary["tv_distance_x_vs_z"]
    mi = rep.summary["mutual_information_bits"]
    ok = 0.494 <= acc <= 0.506 and tv < 0.02 and mi < 0.01
    report("4 no-signaling", ok, f"accuracy={acc:.4f} in [0.494,0.506], tv={tv:.4f} (< 0.02), MI={mi:.2e} bits (< 0.01)")


def test_5_distinguisher_power():
    trials, copies, size = 1000, 10, 100
    wrong = {Preparation.Z: 0, Preparation.X: 0}
    for t in range(trials):
        for off, (axis, prep) in enumerate(((Z_AXIS, Preparation.Z), (X_AXIS, Preparation.X))):
            rng = RandomSource(505, t)
            lists = [prepare_balanced(size, axis, rng.substream(1, off, c))[0].amplitudes for c in range(copies)]
            wrong[prep] += despagnat_distinguish(lists, Z_AXIS, rng.substream(2, off)).guess is not prep
    exact = float(stats.prob_sum_zero(size) ** copies)
    ok = wrong[Preparation.Z] == 0 and wrong[Preparation.X] == 0
    report(
        "5 distinguisher power",
        ok,
        f"z errors={wrong[Preparation.Z]}/{trials}, x errors={wrong[Preparation.X]}/{trials} "
        f"(exact x error prob {exact:.3e}, expected count {exact * trials:.1e})",
    )


def test_6_telephone_protocol():
    n, trials = 20, 10_000
    misses_same, false_same = 0, 0
    for t in range(trials):
        for off, bob_axis in enumerate((X_AXIS, Z_AXIS)):
            rng = RandomSource(606, t)
            e, rec = prepare_ensemble(n, bob_axis, rng.substream(1, off))
            alice = measure_many(e.amplitudes, X_AXIS, rng.substream(2, off))
            msg = ClassicalMessage("outcome-record", rec, 0.0, 1.0)
            guess = telephone_compare(X_AXIS, alice, msg, now=1.0)
            if bob_axis is X_AXIS:
                misses_same += guess is not BasisGuess.SAME
            else:
                false_same += guess is BasisGuess.SAME
    ok = misses_same == 0 and false_same <= 1
    report(
        "6 telephone",
        ok,
        f"missed same-basis={misses_same}/{trials}, false 'same'={false_same}/{trials} "
        f"(rate 2^-20 = {2.0**-20:.2e}, expect 0 or 1)",
    )


def test_7_causality_audit():
    runs = 1000
    params = RandomSource(707, 10**6)
    latencies = params.random(runs) * 10.0
    sizes = 2 + (params.random(runs) * 49).astype(int)
    bad, early_signal = [], 0
    for t in range(runs):
        scenario = TIMELINE_SCENARIOS[t % 3]
        log = run_timeline(scenario, int(sizes[t]), float(latencies[t]), RandomSource(707, t), copies=3)
        bad.extend(log.violations())
        if scenario == "signal-attempt":
            first_arrival = min((m.arrival_time for m in log.messages.values()), default=math.inf)
            for d in log.decisions():
                if (d.consumes or d.detail["information_received"]) and d.timestamp < first_arrival:
                    early_signal += 1
    ok = not bad and early_signal == 0
    report("7 causality audit", ok, f"{len(bad)} violations in {runs} logs, {early_signal} informed early decisions")


def test_8_oracle_convergence():
    n = 100
    law = stats.binomial_exact(n)
    distances = []
    for m in (1_000, 10_000, 100_000):
        sums = np.array([
            sigma_sum(prepare_ensemble(n, Z_AXIS, RandomSource(808 + m, t).substream(1))[0].amplitudes,
                      Z_AXIS, RandomSource(808 + m, t).substream(2)).value
            for t in range(m)
        ])
        distances.append(stats.tv_distance(stats.Histogram.from_samples(sums), law))
    ratios = [a / b for a, b in zip(distances, distances[1:])]
    ok = all(2.0 <= r <= 4.5 for r in ratios)
    report(
        "8 oracle convergence",
        ok,
        "tv=" + ", ".join(f"{d:.4f}" for d in distances) + "; ratios=" + ", ".join(f"{r:.2f}" for r in ratios)
        + " (each in [2, 4.5])",
    )


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
