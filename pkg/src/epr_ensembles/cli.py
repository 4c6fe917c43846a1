"""Batch experiment runner.

Usage::

    epr-ensembles {prepare|no-signal|distinguish|scaling|timeline} [flags]

Trial ``t`` always draws from ``RandomSource(seed, stream_id=t)``; inside a
trial, sub-streams use fixed offsets (1 = pair preparation, 2 = Alice's
measurements, second offset = preparation basis, third = copy index). Trials
therefore give the same numbers whether run in order or in parallel.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import stats
from .ensemble import (
    empirical_density_matrix,
    ensemble_to_dict,
    imbalance,
    prepare_ensemble,
    prune_to_balance,
)
from .errors import CausalityError, ConfigError, EmptyEnsembleError
from .protocols import (
    SCENARIOS as TIMELINE_SCENARIOS,
    Preparation,
    despagnat_distinguish,
    preskill_signal_attempt,
    run_timeline,
    sigma_sum,
)
from .quantum import X_AXIS, Y_AXIS, Z_AXIS, MeasurementAxis, RandomSource

SCENARIOS = ("prepare", "no-signal", "distinguish", "scaling", "timeline")
FORMATS = ("json", "csv")
SCALING_GRID_MIN = 64
SCALING_GRID_MAX = 4096

DEFAULTS = {
    "n": 100,
    "trials": 10_000,
    "copies": 10,
    "basis": "z",
    "latency": 1.0,
    "seed": 0,
    "prune": False,
    "format": "json",
    "out": None,
    "workers": 1,
}

# scenario -> options that make no sense there when given explicitly
CONFLICTS = {
    "prepare": ("copies", "latency"),
    "no-signal": ("prune", "copies", "latency"),
    "distinguish": ("latency",),
    "scaling": ("prune", "copies", "latency"),
    "timeline": ("prune", "basis"),
}

PREP_AXES = {Preparation.Z: Z_AXIS, Preparation.X: X_AXIS}
PREP_OFFSETS = {Preparation.Z: 0, Preparation.X: 1}


class InvariantViolation(RuntimeError):
    """An internal consistency check failed during a run."""


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    n: int = 100
    trials: int = 10_000
    copies: int = 10
    basis: str = "z"
    latency: float = 1.0
    seed: int = 0
    prune: bool = False
    output_format: str = "json"
    out: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError("scenario", f"must be one of {', '.join(SCENARIOS)}, got {self.scenario!r}")
        for name in ("n", "trials", "copies", "workers"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(name, f"must be an integer >= 1, got {value!r}")
        if not isinstance(self.latency, (int, float)) or not math.isfinite(self.latency) or self.latency < 0:
            raise ConfigError("latency", f"must be a finite number >= 0, got {self.latency!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed", f"must be an integer in [0, 2^64), got {self.seed!r}")
        if self.output_format not in FORMATS:
            raise ConfigError("format", f"must be csv or json, got {self.output_format!r}")
        parse_basis(self.basis)

    @property
    def axis(self) -> MeasurementAxis:
        return parse_basis(self.basis)

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d.pop("workers")
        return d


def parse_basis(spec: str) -> MeasurementAxis:
    """``x``, ``y``, ``z`` or ``bloch:THETA,PHI`` (radians)."""
    named = {"x": X_AXIS, "y": Y_AXIS, "z": Z_AXIS}
    if not isinstance(spec, str):
        raise ConfigError("basis", f"must be a string, got {spec!r}")
    if spec in named:
        return named[spec]
    if spec.startswith("bloch:"):
        parts = spec[len("bloch:"):].split(",")
        try:
            theta, phi = (float(p) for p in parts)
        except ValueError:
            raise ConfigError("basis", f"expected bloch:THETA,PHI, got {spec!r}") from None
        if not (math.isfinite(theta) and math.isfinite(phi)):
            raise ConfigError("basis", f"angles must be finite, got {spec!r}")
        return MeasurementAxis.from_angles(theta, phi)
    raise ConfigError("basis", f"expected x, y, z or bloch:THETA,PHI, got {spec!r}")


def _to_int(name, raw):
    if isinstance(raw, bool):
        raise ConfigError(name, f"expected an integer, got {raw!r}")
    if isinstance(raw, int):
        return raw
    try:
        return int(str(raw), 0)
    except ValueError:
        raise ConfigError(name, f"expected an integer, got {raw!r}") from None


def _to_float(name, raw):
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected a number, got {raw!r}") from None
    return value


def _to_bool(name, raw):
    if isinstance(raw, bool):
        return raw
    text = str(raw).lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(name, f"expected a boolean, got {raw!r}")


CONVERTERS = {
    "n": _to_int,
    "trials": _to_int,
    "copies": _to_int,
    "seed": _to_int,
    "workers": _to_int,
    "latency": _to_float,
    "prune": _to_bool,
    "basis": lambda name, raw: str(raw),
    "format": lambda name, raw: str(raw),
    "out": lambda name, raw: None if raw is None else str(raw),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        match = re.search(r"argument (--?[\w-]+)", message)
        raise ConfigError(match.group(1).lstrip("-") if match else "arguments", message)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="epr-ensembles", description="Finite Bell-pair ensemble experiments.", add_help=True)
    p.add_argument("scenario", nargs="?", help=" | ".join(SCENARIOS))
    p.add_argument("--n", help="pairs per ensemble (default 100)")
    p.add_argument("--trials", help="number of trials (default 10000)")
    p.add_argument("--copies", help="balanced copies per distinguisher run (default 10)")
    p.add_argument("--basis", help="x | y | z | bloch:THETA,PHI (default z)")
    p.add_argument("--latency", help="classical channel delay in seconds (default 1.0)")
    p.add_argument("--seed", help="64-bit master seed (default 0)")
    p.add_argument("--prune", action="store_const", const=True, help="balance ensembles via discard lists")
    p.add_argument("--format", help="json | csv (default json)")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--config", help="flat JSON file of flag values")
    p.add_argument("--workers", help="threads for running trials (default 1)")
    return p


def parse_config(args, config_file=None) -> ExperimentConfig:
    """Build a config from command-line tokens, optionally over a JSON file.

    Command-line flags override file values; file values override defaults.
    """
    args = list(args)
    parser = _build_parser()
    ns, unknown = parser.parse_known_args(args)
    if unknown:
        raise ConfigError(unknown[0], "unknown flag or unexpected argument")

    given: dict = {}
    path = ns.config or config_file
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path} is not valid JSON: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "config file must hold a flat JSON object")
        for key, value in data.items():
            if key != "scenario" and key not in CONVERTERS:
                raise ConfigError(key, "unknown key in config file")
            given[key] = value

    for key in CONVERTERS:
        value = getattr(ns, key)
        if value is not None:
            given[key] = value
    if ns.scenario is not None:
        given["scenario"] = ns.scenario

    scenario = given.pop("scenario", None)
    if scenario is None:
        raise ConfigError("scenario", f"missing; expected one of {', '.join(SCENARIOS)}")
    if scenario not in SCENARIOS:
        raise ConfigError(str(scenario), f"unknown scenario; expected one of {', '.join(SCENARIOS)}")
    for key in CONFLICTS[scenario]:
        if key in given:
            raise ConfigError(key, f"option does not apply to the {scenario} scenario")

    values = dict(DEFAULTS)
    for key, raw in given.items():
        values[key] = CONVERTERS[key](key, raw)
    fmt = values.pop("format")
    return ExperimentConfig(scenario=scenario, output_format=fmt, **values)


def _map_trials(fn, trials: int, workers: int) -> list:
    if workers <= 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(trials), chunksize=max(1, trials // (workers * 8))))


def _balanced_copy(n, axis, rng, prune):
    """One copy of Alice's state list; with ``prune`` Bob retries until balancing succeeds."""
    while True:
        e, rec = prepare_ensemble(n, axis, rng)
        if not prune:
            return e.amplitudes
        try:
            return prune_to_balance(e, rec)[0].amplitudes
        except EmptyEnsembleError:
            continue


def _record(records, trial, cfg, name, value, n=None):
    records.append({"trial": trial, "scenario": cfg.scenario, "n": cfg.n if n is None else n,
                    "statistic": name, "value": value})


def _run_prepare(cfg: ExperimentConfig):
    axis = cfg.axis

    def trial(t):
        rng = RandomSource(cfg.seed, t).substream(1)
        e, rec = prepare_ensemble(cfg.n, axis, rng)
        out = {"n_delta": imbalance(rec).n_delta}
        if cfg.prune:
            try:
                e, _ = prune_to_balance(e, rec)
                out["balanced_size"] = e.n
            except EmptyEnsembleError:
                out["balanced_size"] = 0
                return out, None
        rho = empirical_density_matrix(e).entries
        out.update(rho_00=float(rho[0, 0].real), rho_11=float(rho[1, 1].real),
                   rho_01_re=float(rho[0, 1].real), rho_01_im=float(rho[0, 1].imag))
        return out, (e if t == 0 else None)

    results = _map_trials(trial, cfg.trials, cfg.workers)
    records = []
    for t, (out, _) in enumerate(results):
        for name, value in out.items():
            _record(records, t, cfg, name, value)
    abs_delta = [abs(out["n_delta"]) for out, _ in results]
    summary = {"mean_abs_n_delta": float(np.mean(abs_delta))}
    if cfg.prune:
        sizes = [out["balanced_size"] for out, _ in results]
        summary["mean_balanced_size"] = float(np.mean(sizes))
        summary["failed_balancing"] = sum(1 for s in sizes if s == 0)
    oracle = {}
    if cfg.n % 2 == 0 and cfg.n <= stats.ORACLE_MAX_N:
        oracle["expected_abs_n_delta"] = float(stats.expected_abs_imbalance(cfg.n))
    extra = {}
    first = results[0][1]
    if first is not None:
        extra["ensemble"] = ensemble_to_dict(first)
    return summary, oracle, records, extra


def _run_no_signal(cfg: ExperimentConfig):
    strategy = cfg.axis

    def trial(t):
        base = RandomSource(cfg.seed, t)
        row = {}
        for bit, prep in ((0, Preparation.X), (1, Preparation.Z)):
            e, _ = preskill_signal_attempt(bit, cfg.n, base.substream(1, PREP_OFFSETS[prep]))
            rng = base.substream(2, PREP_OFFSETS[prep])
            s = sigma_sum(e.amplitudes, strategy, rng).value
            guess = Preparation.Z if s == 0 else Preparation.X
            row[prep] = (s, guess is prep)
        return row

    rows = _map_trials(trial, cfg.trials, cfg.workers)
    records = []
    sums = {p: np.array([r[p][0] for r in rows]) for p in Preparation}
    correct = {p: np.array([r[p][1] for r in rows]) for p in Preparation}
    for t, r in enumerate(rows):
        for p in (Preparation.X, Preparation.Z):
            tag = "x" if p is Preparation.X else "z"
            _record(records, t, cfg, f"sigma_{tag}_prep", int(r[p][0]))
            _record(records, t, cfg, f"correct_{tag}_prep", int(r[p][1]))

    accuracy = float((correct[Preparation.X].sum() + correct[Preparation.Z].sum()) / (2 * cfg.trials))
    hx = stats.Histogram.from_samples(sums[Preparation.X])
    hz = stats.Histogram.from_samples(sums[Preparation.Z])
    bob_bits = np.concatenate([np.zeros(cfg.trials, dtype=int), np.ones(cfg.trials, dtype=int)])
    alice_sign = stats.sign_class(np.concatenate([sums[Preparation.X], sums[Preparation.Z]]))
    joint = stats.JointCounts.from_pairs(bob_bits, alice_sign, n_rows=2, col_values=(-1, 0, 1))
    summary = {
        "accuracy": accuracy,
        "tv_distance_x_vs_z": stats.tv_distance(hx, hz),
        "mutual_information_bits": stats.mutual_information_bits(joint),
    }
    oracle = {"accuracy": 0.5, "accuracy_3sigma": 3.0 * math.sqrt(0.25 / (2 * cfg.trials))}
    if cfg.n <= stats.ORACLE_MAX_N:
        law = stats.binomial_exact(cfg.n)
        oracle["p_sum_zero"] = float(stats.prob_sum_zero(cfg.n))
        summary["tv_x_prep_to_oracle"] = stats.tv_distance(hx, law)
        summary["tv_z_prep_to_oracle"] = stats.tv_distance(hz, law)
    return summary, oracle, records, {}


def _run_distinguish(cfg: ExperimentConfig):
    axis = cfg.axis

    def trial(t):
        base = RandomSource(cfg.seed, t)
        row = {}
        for prep in Preparation:
            off = PREP_OFFSETS[prep]
            copies = [_balanced_copy(cfg.n, PREP_AXES[prep], base.substream(1, off, c), cfg.prune)
                      for c in range(cfg.copies)]
            verdict = despagnat_distinguish(copies, axis, base.substream(2, off))
            err = None
            if cfg.prune and axis == Z_AXIS and prep is Preparation.X:
                # exact chance that every copy still sums to zero
                err = math.prod(float(stats.prob_sum_zero(len(c))) for c in copies)
            row[prep] = (verdict.guess is prep, err)
        return row

    rows = _map_trials(trial, cfg.trials, cfg.workers)
    records = []
    for t, r in enumerate(rows):
        _record(records, t, cfg, "correct_z_prep", int(r[Preparation.Z][0]))
        _record(records, t, cfg, "correct_x_prep", int(r[Preparation.X][0]))
    acc_z = float(np.mean([r[Preparation.Z][0] for r in rows]))
    acc_x = float(np.mean([r[Preparation.X][0] for r in rows]))
    summary = {"accuracy_z_prep": acc_z, "accuracy_x_prep": acc_x, "errors_x_prep": sum(not r[Preparation.X][0] for r in rows)}
    oracle = {}
    if cfg.prune and axis == Z_AXIS:
        errs = [r[Preparation.X][1] for r in rows]
        oracle = {
            "accuracy_z_prep": 1.0,
            "error_probability_x_prep": float(np.mean(errs)),
            "expected_errors_x_prep": float(np.sum(errs)),
        }
    return summary, oracle, records, {}


def scaling_grid(n: int) -> list[int]:
    """Powers of two from 64 up to max(4096, n)."""
    top = max(SCALING_GRID_MAX, n)
    grid, size = [], SCALING_GRID_MIN
    while size <= top:
        grid.append(size)
        size *= 2
    return grid


def _run_scaling(cfg: ExperimentConfig):
    axis = cfg.axis
    grid = scaling_grid(cfg.n)

    def trial(t):
        base = RandomSource(cfg.seed, t)
        return [abs(imbalance(prepare_ensemble(size, axis, base.substream(1, size))[1]).n_delta) for size in grid]

    rows = _map_trials(trial, cfg.trials, cfg.workers)
    records = []
    for t, r in enumerate(rows):
        for size, v in zip(grid, r):
            _record(records, t, cfg, "abs_n_delta", v, n=size)
    means = np.mean(np.array(rows, dtype=float), axis=0)
    empirical = stats.scaling_fit(list(zip(grid, means)))
    exact = [float(stats.expected_abs_imbalance(size)) for size in grid]
    oracle_fit = stats.scaling_fit(list(zip(grid, exact)))
    summary = {
        "grid": grid,
        "mean_abs_n_delta": [float(m) for m in means],
        "exponent": empirical.exponent,
        "r_squared": empirical.r_squared,
    }
    oracle = {"expected_abs_n_delta": exact, "exponent": oracle_fit.exponent}
    return summary, oracle, records, {}


def _run_timeline(cfg: ExperimentConfig):
    def trial(t):
        scenario = TIMELINE_SCENARIOS[t % len(TIMELINE_SCENARIOS)]
        try:
            log = run_timeline(scenario, cfg.n, cfg.latency, RandomSource(cfg.seed, t), copies=cfg.copies)
        except CausalityError as exc:
            raise InvariantViolation(f"trial {t}: {exc}") from exc
        return scenario, log

    results = _map_trials(trial, cfg.trials, cfg.workers)
    records = []
    correct = {s: [] for s in TIMELINE_SCENARIOS}
    for t, (scenario, log) in enumerate(results):
        decision = log.decisions()[-1]
        ok = decision.detail["guess"] == decision.detail["truth"]
        correct[scenario].append(ok)
        _record(records, t, cfg, f"{scenario}:decision_time", decision.timestamp)
        _record(records, t, cfg, f"{scenario}:correct", int(ok))
    summary = {
        "causality_violations": 0,
        "accuracy": {s: (float(np.mean(v)) if v else None) for s, v in correct.items()},
    }
    oracle = {"signal-attempt_accuracy": 0.5}
    extra = {"events": {s: [e.as_record() for e in log.events]
                        for s, log in (results[i] for i in range(min(3, len(results))))}}
    return summary, oracle, records, extra


RUNNERS = {
    "prepare": _run_prepare,
    "no-signal": _run_no_signal,
    "distinguish": _run_distinguish,
    "scaling": _run_scaling,
    "timeline": _run_timeline,
}


@dataclass
class ExperimentReport:
    config: dict
    summary: dict
    oracle: dict
    records: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        body = {"config": self.config, "summary": self.summary, "oracle": self.oracle, "records": self.records}
        body.update(self.extra)
        return json.dumps(body, sort_keys=True, indent=1) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, value in sorted(self.config.items()):
            buf.write(f"# config.{key}={json.dumps(value)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", "scenario", "n", "statistic", "value"])
        scenario, n = self.config["scenario"], self.config["n"]
        for prefix, block in (("summary", self.summary), ("oracle", self.oracle)):
            for key, value in sorted(block.items()):
                w.writerow([prefix, scenario, n, key, json.dumps(value, sort_keys=True)])
        for r in self.records:
            w.writerow([r["trial"], r["scenario"], r["n"], r["statistic"], r["value"]])
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        return self.to_csv() if fmt == "csv" else self.to_json()


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    summary, oracle, records, extra = RUNNERS[cfg.scenario](cfg)
    return ExperimentReport(cfg.echo(), summary, oracle, records, extra)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        report = run_experiment(cfg)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 2
    text = report.render(cfg.output_format)
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
