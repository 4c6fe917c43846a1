"""Two-party protocols on shared Bell pairs over a finite-latency classical channel.

Three interactions are modelled:

* the signalling attempt, where Bob encodes a bit in his measurement basis and
  Alice must guess it from her qubits alone;
* the telephone comparison, where Bob's outcome record is sent to Alice and
  she compares it with her own outcomes;
* the fluctuation distinguisher, where Bob balances each ensemble by sending a
  discard list and Alice inspects whether the z-sum is exactly zero on every
  copy.

Each run can be replayed as an :class:`EventLog` in which every Alice event
that uses message content is stamped no earlier than the message's arrival.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .ensemble import (
    Ensemble,
    OutcomeRecord,
    apply_discard,
    prepare_ensemble,
    prune_to_balance,
)
from .errors import AlignmentError, CausalityError, EmptyEnsembleError, EnsembleToolkitError
from .quantum import X_AXIS, Z_AXIS, MeasurementAxis, RandomSource, _as_axis, measure_many, states_to_array


class Preparation(str, Enum):
    Z = "z-prepared"
    X = "x-prepared"


class BasisGuess(str, Enum):
    SAME = "same-as-alice"
    OTHER = "other"


class Actor(str, Enum):
    ALICE = "Alice"
    BOB = "Bob"
    CHANNEL = "Channel"


SCENARIOS = ("signal-attempt", "telephone", "balanced-distinguish")

# The bit Bob encodes: 0 -> x measurement, 1 -> z measurement.
BIT_AXES = {0: X_AXIS, 1: Z_AXIS}


@dataclass(frozen=True)
class SigmaSum:
    value: int
    axis: MeasurementAxis
    n: int

    def __post_init__(self):
        if abs(self.value) > self.n or (self.value - self.n) % 2:
            raise EnsembleToolkitError(f"sum {self.value} impossible for {self.n} outcomes of +-1")


@dataclass(frozen=True)
class DistinguisherVerdict:
    guess: Preparation
    evidence: tuple


@dataclass(frozen=True)
class ClassicalMessage:
    kind: str
    payload: object
    send_time: float
    arrival_time: float
    msg_id: int = 0

    def __post_init__(self):
        if self.arrival_time < self.send_time:
            raise CausalityError("a message cannot arrive before it is sent")


@dataclass(frozen=True)
class Event:
    timestamp: float
    actor: Actor
    kind: str
    detail: dict = field(default_factory=dict)
    consumes: tuple = ()

    def as_record(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "actor": self.actor.value,
            "kind": self.kind,
            "detail": {**self.detail, "consumes": list(self.consumes)} if self.consumes else dict(self.detail),
        }


@dataclass
class Channel:
    """Classical line from Bob to Alice with a fixed delay in seconds."""

    latency: float
    sent: list = field(default_factory=list)

    def __post_init__(self):
        if not self.latency >= 0.0:
            raise EnsembleToolkitError(f"latency must be >= 0, got {self.latency}")

    def send(self, kind: str, payload, send_time: float) -> ClassicalMessage:
        msg = ClassicalMessage(kind, payload, send_time, send_time + self.latency, msg_id=len(self.sent))
        self.sent.append(msg)
        return msg


@dataclass
class EventLog:
    scenario: str = ""
    events: list = field(default_factory=list)
    messages: dict = field(default_factory=dict)

    def add(self, timestamp, actor, kind, detail=None, consumes=()) -> Event:
        ev = Event(float(timestamp), Actor(actor), kind, dict(detail or {}), tuple(m.msg_id for m in consumes))
        self.events.append(ev)
        return ev

    def register(self, msg: ClassicalMessage):
        self.messages[msg.msg_id] = msg

    def decisions(self) -> list:
        return [e for e in self.events if e.actor is Actor.ALICE and e.kind == "decision"]

    def violations(self) -> list[str]:
        """Every breach of time ordering or message-before-use, as messages."""
        problems = []
        for prev, cur in zip(self.events, self.events[1:]):
            if cur.timestamp < prev.timestamp:
                problems.append(f"timestamp goes backwards at {cur.kind} ({cur.timestamp} < {prev.timestamp})")
        for ev in self.events:
            for mid in ev.consumes:
                msg = self.messages.get(mid)
                if msg is None:
                    problems.append(f"{ev.kind} at {ev.timestamp} consumes unknown message {mid}")
                elif ev.timestamp < msg.arrival_time:
                    problems.append(
                        f"{ev.actor.value} {ev.kind} at {ev.timestamp} uses message {mid} "
                        f"arriving at {msg.arrival_time}"
                    )
        return problems

    def check_causality(self):
        problems = self.violations()
        if problems:
            raise CausalityError("; ".join(problems))

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.as_record(), sort_keys=True) + "\n" for e in self.events)


def preskill_signal_attempt(bit: int, n: int, rng: RandomSource) -> tuple[Ensemble, OutcomeRecord]:
    """Bob encodes ``bit`` by measuring all his halves along x (0) or z (1)."""
    if bit not in BIT_AXES:
        raise EnsembleToolkitError(f"bit must be 0 or 1, got {bit!r}")
    return prepare_ensemble(n, BIT_AXES[bit], rng)


def _amplitudes(states) -> np.ndarray:
    if isinstance(states, Ensemble):
        raise TypeError("pass the bare state list (ensemble.amplitudes), not a labelled Ensemble")
    return states_to_array(states)


def sigma_sum(states, axis, rng: RandomSource) -> SigmaSum:
    """Measure every state along ``axis`` and add up the +-1 outcomes."""
    amps = _amplitudes(states)
    if len(amps) == 0:
        raise EmptyEnsembleError("sigma sum of an empty state list")
    axis = _as_axis(axis)
    outcomes = measure_many(amps, axis, rng)
    return SigmaSum(int(outcomes.sum(dtype=np.int64)), axis, len(amps))


def despagnat_distinguish(copies, axis=Z_AXIS, rng: RandomSource | None = None) -> DistinguisherVerdict:
    """Guess z-prepared iff the sum along ``axis`` is exactly zero on every copy."""
    if rng is None:
        raise EnsembleToolkitError("a RandomSource is required")
    copies = list(copies)
    if not copies:
        raise EmptyEnsembleError("distinguisher needs at least one copy")
    evidence = tuple(sigma_sum(c, axis, rng) for c in copies)
    guess = Preparation.Z if all(s.value == 0 for s in evidence) else Preparation.X
    return DistinguisherVerdict(guess, evidence)


def blind_distinguish(states, strategy, rng: RandomSource) -> Preparation:
    """Guess the preparation from Alice's qubits alone, with the all-zero rule on one sum.

    On unpruned ensembles both preparations give the same outcome law, so the
    accuracy is 1/2 whatever ``strategy`` is. On pruned ensembles it succeeds
    far more often, but those only exist after Bob's discard message.
    """
    return Preparation.Z if sigma_sum(states, strategy, rng).value == 0 else Preparation.X


def telephone_compare(alice_axis, alice_outcomes, bob_record: ClassicalMessage, now: float | None = None) -> BasisGuess:
    """Compare Alice's outcomes with Bob's transmitted record.

    Perfect agreement on every pair means Bob measured along Alice's axis.
    ``now`` is the comparison time; it may not precede the record's arrival.
    """
    _as_axis(alice_axis)
    if now is not None and now < bob_record.arrival_time:
        raise CausalityError(f"comparison at t={now} before the record arrives at t={bob_record.arrival_time}")
    record = bob_record.payload
    bob = record.outcomes if isinstance(record, OutcomeRecord) else np.asarray(record)
    alice = np.asarray([int(o) for o in alice_outcomes], dtype=np.int8)
    if len(alice) == 0 or len(alice) != len(bob):
        raise AlignmentError(f"cannot compare {len(alice)} Alice outcomes with {len(bob)} Bob outcomes")
    return BasisGuess.SAME if np.array_equal(alice, bob) else BasisGuess.OTHER


def _timeline_signal_attempt(log: EventLog, n: int, rng: RandomSource):
    bit = int(rng.substream(0).random() < 0.5)
    ensemble, _ = preskill_signal_attempt(bit, n, rng.substream(1))
    log.add(0.0, Actor.BOB, "measure", {"basis": str(BIT_AXES[bit]), "n": n})
    guess = blind_distinguish(ensemble.amplitudes, Z_AXIS, rng.substream(2))
    log.add(0.0, Actor.ALICE, "measure", {"basis": "z", "n": n})
    log.add(
        0.0,
        Actor.ALICE,
        "decision",
        {
            "guess": guess.value,
            "truth": (Preparation.X if bit == 0 else Preparation.Z).value,
            "information_received": False,
            "expected_accuracy": 0.5,
        },
    )


def _timeline_telephone(log: EventLog, n: int, channel: Channel, rng: RandomSource):
    bit = int(rng.substream(0).random() < 0.5)
    bob_axis = BIT_AXES[bit]
    ensemble, record = prepare_ensemble(n, bob_axis, rng.substream(1))
    log.add(0.0, Actor.BOB, "measure", {"basis": str(bob_axis), "n": n})
    msg = channel.send("outcome-record", record, 0.0)
    log.register(msg)
    log.add(0.0, Actor.CHANNEL, "send", {"message": msg.msg_id, "payload": msg.kind, "arrival": msg.arrival_time})
    alice_outcomes = measure_many(ensemble.amplitudes, X_AXIS, rng.substream(2))
    log.add(0.0, Actor.ALICE, "measure", {"basis": "x", "n": n})
    log.add(msg.arrival_time, Actor.CHANNEL, "deliver", {"message": msg.msg_id})
    guess = telephone_compare(X_AXIS, alice_outcomes, msg, now=msg.arrival_time)
    log.add(
        msg.arrival_time,
        Actor.ALICE,
        "decision",
        {
            "guess": "x" if guess is BasisGuess.SAME else "z",
            "truth": str(bob_axis),
            "information_received": True,
        },
        consumes=(msg,),
    )


def _timeline_balanced(log: EventLog, n: int, copies: int, channel: Channel, rng: RandomSource):
    if n < 2:
        raise EmptyEnsembleError("balanced ensembles need at least 2 pairs per copy")
    bit = int(rng.substream(0).random() < 0.5)
    bob_axis = BIT_AXES[bit]
    prep_rng = rng.substream(1)
    held, messages = [], []
    for c in range(copies):
        while True:
            ensemble, record = prepare_ensemble(n, bob_axis, prep_rng)
            log.add(0.0, Actor.BOB, "measure", {"basis": str(bob_axis), "copy": c, "n": n})
            try:
                _, discard = prune_to_balance(ensemble, record)
                break
            except EmptyEnsembleError:
                log.add(0.0, Actor.BOB, "retry", {"copy": c, "reason": "all outcomes equal"})
        msg = channel.send("discard-list", discard, 0.0)
        log.register(msg)
        log.add(0.0, Actor.CHANNEL, "send", {"message": msg.msg_id, "payload": msg.kind, "copy": c})
        held.append(ensemble)
        messages.append(msg)
    arrival = max(m.arrival_time for m in messages)
    balanced = []
    for c, (ensemble, msg) in enumerate(zip(held, messages)):
        log.add(msg.arrival_time, Actor.CHANNEL, "deliver", {"message": msg.msg_id})
        kept = apply_discard(ensemble, msg.payload)
        log.add(msg.arrival_time, Actor.ALICE, "apply-discard", {"copy": c, "kept": kept.n}, consumes=(msg,))
        balanced.append(kept.amplitudes)
    verdict = despagnat_distinguish(balanced, Z_AXIS, rng.substream(2))
    log.add(
        arrival,
        Actor.ALICE,
        "decision",
        {
            "guess": verdict.guess.value,
            "truth": (Preparation.X if bit == 0 else Preparation.Z).value,
            "sums": [s.value for s in verdict.evidence],
            "information_received": True,
        },
        consumes=tuple(messages),
    )


def run_timeline(scenario: str, n: int, latency: float, rng: RandomSource, copies: int = 10) -> EventLog:
    """Play one protocol run and return its event log.

    Sub-stream offsets: 0 Bob's bit, 1 pair preparation, 2 Alice's measurements.
    """
    if scenario not in SCENARIOS:
        raise EnsembleToolkitError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    if n < 1:
        raise EmptyEnsembleError(f"n must be >= 1, got {n}")
    channel = Channel(float(latency))
    log = EventLog(scenario)
    if scenario == "signal-attempt":
        _timeline_signal_attempt(log, n, rng)
    elif scenario == "telephone":
        _timeline_telephone(log, n, channel, rng)
    else:
        _timeline_balanced(log, n, copies, channel, rng)
    log.check_causality()
    return log
