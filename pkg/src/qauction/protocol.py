"""Actor-level auction: an auctioneer and bidder groups exchanging registers.

The auctioneer pre-draws the kind of every combined step (main search,
null-check search on a separate register, or a probe of one bidder group)
and keeps a message log.  Bidders only see "apply your adjoint operator, then
your operator" requests and cannot tell which register a step serves.

Random streams: the seed feeds one ``SeedSequence`` spawned into three
children used for, in order, the step-kind draws, probe targets/unitaries/
measurements, and the final measurements.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from .allocation import (
    Allocation,
    AuctionConfig,
    EvaluationRule,
    Winner,
    decode_allocation,
    winner_of,
)
from .bidlang import BidLanguage, BidSuperposition, synthesize_joint_operator, synthesize_operator
from .search import (
    PackedStep,
    SearchSchedule,
    cost_phases,
    driver_phases,
    excluded_bidders,
    group_label,
    initial_state,
    is_degenerate,
    null_count_phases,
)
from .statevec import StateVector, UnitaryMatrix, measure, outcome_distribution


@lru_cache(maxsize=1024)
def operator_for(target: BidSuperposition, lang: BidLanguage) -> UnitaryMatrix:
    if len(target.owner) == 1:
        return synthesize_operator(target, lang)
    return synthesize_joint_operator(target, lang)


def _as_operator(source: Union[BidSuperposition, UnitaryMatrix], lang: BidLanguage) -> UnitaryMatrix:
    return source if isinstance(source, UnitaryMatrix) else operator_for(source, lang)


# --------------------------------------------------------------------------
# strategies

class BidderStrategy:
    """Base: what a bidder group applies at init and at each combined step."""

    acts_on: tuple[int, ...]

    def init_operator(self, lang: BidLanguage) -> UnitaryMatrix:
        raise NotImplementedError

    def step_operators(self, lang: BidLanguage, t: int) -> tuple[UnitaryMatrix, UnitaryMatrix]:
        """``(adjoint_side, forward_side)`` for combined step ``t >= 1``."""
        raise NotImplementedError

    @property
    def is_static(self) -> bool:
        return True


@dataclass(frozen=True)
class Honest(BidderStrategy):
    superposition: BidSuperposition

    def __post_init__(self):
        if not self.superposition.contains_null:
            raise ValueError("an honest superposition must include the null bid")

    @property
    def acts_on(self):
        return self.superposition.owner

    def init_operator(self, lang):
        return operator_for(self.superposition, lang)

    def step_operators(self, lang, t):
        op = operator_for(self.superposition, lang)
        return op, op


@dataclass(frozen=True)
class NullExcluder(BidderStrategy):
    superposition: BidSuperposition

    def __post_init__(self):
        if self.superposition.contains_null:
            raise ValueError("a null-excluding superposition must not include the null bid")

    @property
    def acts_on(self):
        return self.superposition.owner

    def init_operator(self, lang):
        return operator_for(self.superposition, lang)

    def step_operators(self, lang, t):
        op = operator_for(self.superposition, lang)
        return op, op


@dataclass(frozen=True)
class InitDeviator(BidderStrategy):
    """Prepares the register with one operator and searches with another."""

    init: Union[BidSuperposition, UnitaryMatrix]
    search: BidSuperposition

    def __post_init__(self):
        init_owner = self.init.acts_on if isinstance(self.init, UnitaryMatrix) else self.init.owner
        if tuple(init_owner) != self.search.owner:
            raise ValueError("init and search operators must act on the same bidders")

    @property
    def acts_on(self):
        return self.search.owner

    def init_operator(self, lang):
        return _as_operator(self.init, lang)

    def step_operators(self, lang, t):
        op = operator_for(self.search, lang)
        return op, op


@dataclass(frozen=True)
class OperatorSwitcher(BidderStrategy):
    """Follows a per-step operator timeline ``operators[min(t, len - 1)]``.

    At step ``t`` the bidder undoes its step ``t-1`` operator and applies its
    step ``t`` operator, so a change at step ``k`` shows up as
    ``U_k U_{k-1}^dagger`` within that one step.
    """

    operators: tuple[UnitaryMatrix, ...]

    def __post_init__(self):
        object.__setattr__(self, "operators", tuple(self.operators))
        if not self.operators:
            raise ValueError("operator timeline is empty")
        if len({op.acts_on for op in self.operators}) != 1:
            raise ValueError("all timeline operators must act on the same bidders")

    @classmethod
    def abrupt(cls, before: UnitaryMatrix, after: UnitaryMatrix, at: int = 1) -> "OperatorSwitcher":
        if at < 1:
            raise ValueError("the switch step must be at least 1")
        return cls(tuple([before] * at + [after]))

    @property
    def acts_on(self):
        return self.operators[0].acts_on

    @property
    def is_static(self):
        return False

    def _at(self, t):
        return self.operators[min(t, len(self.operators) - 1)]

    def init_operator(self, lang):
        return self._at(0)

    def step_operators(self, lang, t):
        return self._at(t - 1), self._at(t)


@dataclass(frozen=True)
class JointGroup(BidderStrategy):
    """Contiguous bidders acting jointly on their combined register."""

    superposition: BidSuperposition

    @property
    def acts_on(self):
        return self.superposition.owner

    @property
    def members(self):
        return self.superposition.owner

    def init_operator(self, lang):
        return operator_for(self.superposition, lang)

    def step_operators(self, lang, t):
        op = operator_for(self.superposition, lang)
        return op, op


def check_strategies(strategies: Sequence[BidderStrategy], config: AuctionConfig) -> None:
    owned = sorted(i for s in strategies for i in s.acts_on)
    if owned != list(range(config.n_bidders)):
        raise ValueError(f"strategies must cover each bidder exactly once, got {owned}")
    for s in strategies:
        a = tuple(s.acts_on)
        if a != tuple(range(a[0], a[0] + len(a))):
            raise ValueError(f"bidder group {a} is not contiguous")


def init_operators(strategies, config) -> list[UnitaryMatrix]:
    return [s.init_operator(config.language) for s in strategies]


def operators_at(strategies, config, t) -> tuple[list[UnitaryMatrix], list[UnitaryMatrix]]:
    pairs = [s.step_operators(config.language, t) for s in strategies]
    return [p[0] for p in pairs], [p[1] for p in pairs]


# --------------------------------------------------------------------------
# protocol

@dataclass(frozen=True)
class Policy:
    null_check_prob: float = 0.0
    probe_prob: float = 0.0

    def __post_init__(self):
        if self.null_check_prob < 0 or self.probe_prob < 0 or self.null_check_prob + self.probe_prob > 1:
            raise ValueError("step probabilities must be nonnegative and sum to at most 1")


MAIN, NULL, PROBE = "main", "null", "probe"


@dataclass
class ProbeRecord:
    step: int
    group: tuple[int, ...]
    analytic_pass_prob: float
    passed: bool


@dataclass
class AuctionResult:
    outcome_index: int
    allocation: Allocation
    winners: list[Winner]
    payments: dict[int, float]
    distribution: dict[int, float]
    flagged: dict[int, list[str]]
    voided: bool
    transcript: list[dict]
    seed: Optional[int]
    step_counts: dict[str, int]
    probes: list[ProbeRecord]
    null_check_outcome: Optional[int]
    null_check_distribution: Optional[dict[int, float]]
    degenerate: bool
    final_state: StateVector = field(repr=False)

    def to_dict(self) -> dict:
        """JSON-ready summary; bidders are numbered from 1 here."""
        return {
            "outcome_index": self.outcome_index,
            "allocation": [
                None if b.is_null else {"bundle": sorted(b.bundle), "price": b.price} for b in self.allocation.bids
            ],
            "winners": [{"bidder": w.bidder + 1, "bundle": sorted(w.bundle), "price": w.price} for w in self.winners],
            "payments": {str(j + 1): p for j, p in sorted(self.payments.items())},
            "voided": self.voided,
            "flagged": {str(j + 1): reasons for j, reasons in sorted(self.flagged.items())},
            "degenerate": self.degenerate,
            "seed": self.seed,
            "step_counts": self.step_counts,
            "probes": [
                {"step": p.step, "bidders": [j + 1 for j in p.group],
                 "analytic_pass_prob": p.analytic_pass_prob, "passed": p.passed}
                for p in self.probes
            ],
            "null_check_outcome": self.null_check_outcome,
            "distribution": {str(x): p for x, p in sorted(self.distribution.items())},
        }


class _Stream:
    """A named generator that counts its draws for the message log."""

    def __init__(self, name: str, gen: np.random.Generator):
        self.name, self.gen, self.draws = name, gen, 0

    def random(self) -> float:
        self.draws += 1
        return float(self.gen.random())

    def integers(self, high: int) -> int:
        self.draws += 1
        return int(self.gen.integers(high))

    def unitary(self, dim: int, acts_on) -> UnitaryMatrix:
        self.draws += 1
        return UnitaryMatrix.random(dim, self.gen, acts_on)

    def measure(self, state: StateVector) -> int:
        self.draws += 1
        return measure(state, self.gen)

    @property
    def state(self) -> str:
        return f"{self.name}:{self.draws}"


def _streams(rng: Union[int, np.random.Generator, None]):
    if isinstance(rng, np.random.Generator):
        children = rng.spawn(3)
        seed = None
    else:
        seed = rng
        children = [np.random.default_rng(s) for s in np.random.SeedSequence(rng).spawn(3)]
    return seed, [_Stream(name, g) for name, g in zip(("schedule", "probe", "measure"), children)]


def draw_step_kinds(steps: int, policy: Policy, stream: _Stream) -> list[str]:
    kinds = []
    for _ in range(steps):
        u = stream.random()
        if u < policy.probe_prob:
            kinds.append(PROBE)
        elif u < policy.probe_prob + policy.null_check_prob:
            kinds.append(NULL)
        else:
            kinds.append(MAIN)
    return kinds


def run_auction(
    config: AuctionConfig,
    strategies: Sequence[BidderStrategy],
    schedule: SearchSchedule,
    policy: Policy = Policy(),
    rng: Union[int, np.random.Generator, None] = 0,
    rule: EvaluationRule = EvaluationRule.FIRST_PRICE_REVENUE,
    record: bool = True,
) -> AuctionResult:
    """Run one auction end to end.

    ``schedule.steps`` counts combined steps.  The main and null-check
    searches advance their own ``f = s/S_k`` over the steps drawn for them;
    a search that drew no steps is measured straight from its initial state
    (the null check is skipped entirely).  Any flag voids the auction: it is
    reported with no winner.
    """
    check_strategies(strategies, config)
    layout = config.layout
    seed, (sched, probe_rng, meas) = _streams(rng)
    kinds = draw_step_kinds(schedule.steps, policy, sched)
    totals = {k: kinds.count(k) for k in (MAIN, NULL, PROBE)}

    log: list[dict] = []

    def emit(step, f, actor, action, register, stream=sched, **extra):
        if record:
            log.append(dict(step=step, f=f, actor=actor, action=action, register=register,
                            seedState=stream.state, **extra))

    emit(0, 0.0, "auctioneer", "announce", None, steps=schedule.steps, delta=schedule.delta,
         scheme=schedule.scheme.value, seed=seed)

    init_ops = init_operators(strategies, config)
    registers = {MAIN: initial_state(init_ops, layout)}
    if totals[NULL]:
        registers[NULL] = initial_state(init_ops, layout)
    psi = {k: v.amplitudes.copy() for k, v in registers.items()}
    for reg in registers:
        emit(0, 0.0, "auctioneer", "prepare", reg)
        for op in init_ops:
            emit(0, 0.0, group_label(op.acts_on), "init", reg)

    costs = {MAIN: cost_phases(config, rule), NULL: null_count_phases(config)}
    drive = driver_phases(layout, schedule.scheme)
    progress = {MAIN: 0, NULL: 0}
    probes: list[ProbeRecord] = []
    packed_cache: dict = {}

    for t, kind in enumerate(kinds, start=1):
        adj_ops, fwd_ops = operators_at(strategies, config, t)
        if kind == PROBE:
            g = probe_rng.integers(len(strategies))
            claimed, actual = adj_ops[g], fwd_ops[g]
            label = group_label(claimed.acts_on)
            v = probe_rng.unitary(claimed.dim, claimed.acts_on)
            phi = v.matrix[:, 0]
            emit(t, None, "auctioneer", "send_probe", PROBE, probe_rng)
            returned = actual.matrix @ (claimed.adjoint @ phi)
            emit(t, None, label, "apply_adjoint", PROBE, probe_rng)
            emit(t, None, label, "apply", PROBE, probe_rng)
            back = v.adjoint @ returned
            p = np.abs(back) ** 2
            cdf = np.cumsum(p)
            u = probe_rng.random() * cdf[-1]
            outcome = int(min(np.searchsorted(cdf, u, side="right"), len(p) - 1))
            rec = ProbeRecord(t, claimed.acts_on, float(p[0]), outcome == 0)
            probes.append(rec)
            emit(t, None, "auctioneer", "measure_probe", PROBE, probe_rng, passed=rec.passed)
            continue

        key = tuple((id(a), id(b)) for a, b in zip(adj_ops, fwd_ops))
        packed = packed_cache.get(key)
        if packed is None:
            packed = packed_cache[key] = PackedStep.build(adj_ops, fwd_ops, layout)
        progress[kind] += 1
        f = progress[kind] / totals[kind]
        psi[kind] = packed.step(psi[kind], costs[kind], drive, f, schedule.delta)
        if record:
            norm = float(np.linalg.norm(psi[kind]))
            emit(t, f, "auctioneer", "phase_cost", kind)
            for lab in packed.labels:
                emit(t, f, lab, "apply_adjoint", kind)
            emit(t, f, "auctioneer", "phase_driver", kind)
            for lab in packed.labels:
                emit(t, f, lab, "apply", kind)
            log[-1]["norm"] = norm

    final = StateVector(psi[MAIN], layout)
    outcome = meas.measure(final)
    emit(schedule.steps, 1.0, "auctioneer", "measure", MAIN, meas, outcome=outcome)

    flagged: dict[int, list[str]] = {}
    null_outcome, null_dist = None, None
    if totals[NULL]:
        null_state = StateVector(psi[NULL], layout)
        null_outcome = meas.measure(null_state)
        null_dist = outcome_distribution(null_state)
        emit(schedule.steps, 1.0, "auctioneer", "measure", NULL, meas, outcome=null_outcome)
        for j in sorted(excluded_bidders(null_outcome, config)):
            flagged.setdefault(j, []).append("null_check")
    for rec in probes:
        if not rec.passed:
            for j in rec.group:
                if "probe" not in flagged.setdefault(j, []):
                    flagged[j].append("probe")

    allocation = decode_allocation(outcome, config)
    winners = winner_of(allocation) or []
    voided = bool(flagged)
    if voided:
        winners = []
    emit(schedule.steps, 1.0, "auctioneer", "announce_result", None, meas,
         winners=[w.bidder + 1 for w in winners], voided=voided)

    return AuctionResult(
        outcome_index=outcome,
        allocation=allocation,
        winners=winners,
        payments={w.bidder: w.price for w in winners},
        distribution=outcome_distribution(final),
        flagged=flagged,
        voided=voided,
        transcript=log,
        seed=seed,
        step_counts=totals,
        probes=probes,
        null_check_outcome=null_outcome,
        null_check_distribution=null_dist,
        degenerate=is_degenerate(registers[MAIN], config),
        final_state=final,
    )


def probe_flag_probability(result: AuctionResult) -> float:
    """Exact chance, given the drawn probe steps, that some probe fails."""
    return 1.0 - float(np.prod([p.analytic_pass_prob for p in result.probes]))


def write_transcript(events: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")


def classical_ne_bid(value: float, n: int) -> float:
    """Symmetric first-price equilibrium bid for values uniform on ``[0, 1]``."""
    if n < 1:
        raise ValueError("need at least one bidder")
    if not 0.0 <= value <= 1.0:
        raise ValueError("value must lie in [0, 1]")
    return (n - 1) * value / n
