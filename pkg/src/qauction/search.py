"""Discrete adiabatic distributed search.

Each update is ``psi <- U D(f) U^dagger P(f) psi`` with ``f = s/S``,
``P(f)_xx = exp(-i f c(x) Delta)`` and ``D(f)_xx = exp(-i (1-f) d(x) Delta)``.
Costs are rescaled affinely into ``[0, 1]`` and driver values are divided by
their maximum over the register, so ``Delta`` alone sets the phase scale.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import _kernels
from .allocation import (
    AuctionConfig,
    EvaluationRule,
    allocation_tables,
    cost,
    decode_allocation,
    nonzero_digit_count,
)
from .bidlang import BidMode, bid_tables
from .statevec import (
    RegisterLayout,
    StateVector,
    UnitaryMatrix,
    apply_product,
    measure,
    outcome_distribution,
    pack_operators,
)

SUPPORT_TOL = 1e-12


class Scheme(str, enum.Enum):
    HAMMING = "hamming"
    PERMUTED = "permuted"
    DIGIT_COUNT = "digit_count"


@dataclass(frozen=True)
class SearchSchedule:
    steps: int
    delta: float = 1.0
    scheme: Scheme = Scheme.PERMUTED

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if int(self.steps) != self.steps or self.steps < 0:
            raise ValueError("steps must be a nonnegative integer")
        if not 0.0 < self.delta <= math.pi:
            raise ValueError("delta must lie in (0, pi]")

    def with_steps(self, steps: int) -> "SearchSchedule":
        return SearchSchedule(steps, self.delta, self.scheme)

    def with_scheme(self, scheme: Scheme) -> "SearchSchedule":
        return SearchSchedule(self.steps, self.delta, scheme)


# --------------------------------------------------------------------------
# driver eigenvalues

def d_hamming(x: int) -> int:
    return bin(x).count("1")


def _nonzero_digits(x: int, n: int, b: int) -> int:
    block = 2 ** b
    r = 0
    for _ in range(n):
        x, digit = divmod(x, block)
        r += digit != 0
    return r


def d_permuted(x: int, n: int, b: int) -> int:
    return (-_nonzero_digits(x, n, b)) % (n + 1)


def d_digit_count(x: int, n: int, b: int) -> int:
    return _nonzero_digits(x, n, b)


def weight_function(scheme: Scheme, n: int) -> Callable[[np.ndarray], np.ndarray]:
    """Driver value as a function of the nonzero-digit count, for schemes that have one."""
    if scheme is Scheme.PERMUTED:
        return lambda r: (-np.asarray(r)) % (n + 1)
    if scheme is Scheme.DIGIT_COUNT:
        return lambda r: np.asarray(r)
    raise ValueError(f"{scheme.value} driver values do not depend on the digit count alone")


def driver_values(layout: RegisterLayout, scheme: Scheme) -> np.ndarray:
    if scheme is Scheme.HAMMING:
        return np.bitwise_count(np.arange(layout.size, dtype=np.uint64)).astype(np.int64)
    return weight_function(scheme, layout.n_bidders)(nonzero_digit_count(layout)).astype(np.int64)


def driver_scale(layout: RegisterLayout, scheme: Scheme) -> float:
    return float(layout.n_qubits if scheme is Scheme.HAMMING else layout.n_bidders)


def driver_phases(layout: RegisterLayout, scheme: Scheme) -> np.ndarray:
    return driver_values(layout, scheme) / driver_scale(layout, scheme)


# --------------------------------------------------------------------------
# cost phases

def cost_bounds(config: AuctionConfig) -> tuple[float, float]:
    """``(min, max)`` of the cost over the whole register, in closed form."""
    winners = 1 if config.language.mode is BidMode.SINGLE_ITEM else min(config.n_bidders, config.language.n_items)
    return -winners * config.language.max_price, -EvaluationRule.FIRST_PRICE_REVENUE.infeasible_value


def _rescale(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if hi <= lo:
        return np.zeros_like(values, dtype=np.float64)
    return (np.asarray(values, dtype=np.float64) - lo) / (hi - lo)


def cost_phases(config: AuctionConfig, rule: EvaluationRule = EvaluationRule.FIRST_PRICE_REVENUE) -> np.ndarray:
    _, value, _ = allocation_tables(config)
    return _rescale(-value, *cost_bounds(config))


def null_count_phases(config: AuctionConfig) -> np.ndarray:
    """Null-check cost: number of non-null bids, rescaled by ``n``."""
    _, _, nonnull = allocation_tables(config)
    return _rescale(nonnull, 0.0, float(config.n_bidders))


# --------------------------------------------------------------------------
# operators

StepOperators = Callable[[int], tuple[Sequence[UnitaryMatrix], Sequence[UnitaryMatrix]]]
SearchOperators = Union[Sequence[UnitaryMatrix], StepOperators]


def check_cover(ops: Sequence[UnitaryMatrix], layout: RegisterLayout) -> None:
    owned = sorted(i for op in ops for i in op.acts_on)
    if owned != list(range(layout.n_bidders)):
        raise ValueError(f"operators must cover each bidder exactly once, got {owned}")
    for op in ops:
        op.check_layout(layout)


def group_label(acts_on: Sequence[int]) -> str:
    if len(acts_on) == 1:
        return f"bidder {acts_on[0] + 1}"
    return f"bidders {acts_on[0] + 1}-{acts_on[-1] + 1}"


@dataclass
class PackedStep:
    """Kernel-ready adjoint and forward operators for one update."""

    adj: np.ndarray
    fwd: np.ndarray
    dims: np.ndarray
    lefts: np.ndarray
    rights: np.ndarray
    labels: tuple[str, ...]

    @classmethod
    def build(cls, adj_ops: Sequence[UnitaryMatrix], fwd_ops: Sequence[UnitaryMatrix], layout: RegisterLayout):
        check_cover(adj_ops, layout)
        check_cover(fwd_ops, layout)
        if [op.acts_on for op in adj_ops] != [op.acts_on for op in fwd_ops]:
            raise ValueError("adjoint and forward operators must use the same bidder groups")
        adj, dims, lefts, rights = pack_operators(adj_ops, layout, adjoint=True)
        fwd, _, _, _ = pack_operators(fwd_ops, layout)
        return cls(adj, fwd, dims, lefts, rights, tuple(group_label(op.acts_on) for op in fwd_ops))

    def step(self, psi, cost, drive, f, delta):
        return _kernels.search_step(psi, self.adj, self.fwd, self.dims, self.lefts, self.rights, cost, drive, f, delta)


def step_events(step: int, f: float, labels: Sequence[str], register: str, norm: float) -> list[dict]:
    events = [dict(step=step, f=f, actor="auctioneer", action="phase_cost", register=register)]
    events += [dict(step=step, f=f, actor=lab, action="apply_adjoint", register=register) for lab in labels]
    events.append(dict(step=step, f=f, actor="auctioneer", action="phase_driver", register=register))
    events += [dict(step=step, f=f, actor=lab, action="apply", register=register) for lab in labels]
    events[-1]["norm"] = norm
    return events


def initial_state(init_ops: Sequence[UnitaryMatrix], layout: RegisterLayout) -> StateVector:
    check_cover(init_ops, layout)
    return apply_product(StateVector.basis(layout, 0), init_ops)


def is_degenerate(psi0: StateVector, config: AuctionConfig) -> bool:
    """True when the best feasible allocation in the initial support is tied."""
    feasible, value, _ = allocation_tables(config)
    support = (psi0.probabilities > SUPPORT_TOL) & feasible
    if not support.any():
        return False
    best = value[support].max()
    return int(np.sum(np.isclose(value[support], best))) > 1


# --------------------------------------------------------------------------
# main search

@dataclass
class SearchResult:
    initial_state: StateVector
    final_state: StateVector
    distribution: dict[int, float]
    norms: np.ndarray
    transcript: list[dict] = field(default_factory=list)
    degenerate: bool = False


def run_search(
    init_ops: Sequence[UnitaryMatrix],
    search_ops: SearchOperators,
    schedule: SearchSchedule,
    config: AuctionConfig,
    rule: EvaluationRule = EvaluationRule.FIRST_PRICE_REVENUE,
    *,
    cost_override: Optional[np.ndarray] = None,
    register: str = "main",
    observer: Optional[Callable[[int, np.ndarray], None]] = None,
    record: bool = True,
) -> SearchResult:
    """Prepare ``U_init |0...0>`` and run ``schedule.steps`` updates.

    ``search_ops`` is either a fixed operator list or a callable mapping the
    step number ``s >= 1`` to ``(adjoint_side_ops, forward_side_ops)``; the
    latter models bidders who change operators mid-search.  ``observer`` is
    called with ``(s, amplitudes)`` after every step (``s = 0`` for the
    initial state).
    """
    layout = config.layout
    psi0 = initial_state(init_ops, layout)
    cst = cost_phases(config, rule) if cost_override is None else np.asarray(cost_override, dtype=np.float64)
    drive = driver_phases(layout, schedule.scheme)
    S, delta = schedule.steps, schedule.delta

    transcript: list[dict] = []
    if record:
        transcript += [
            dict(step=0, f=0.0, actor=group_label(op.acts_on), action="init", register=register) for op in init_ops
        ]
    psi = psi0.amplitudes.copy()
    if observer is not None:
        observer(0, psi)

    static = not callable(search_ops)
    if static and observer is None and S > 0:
        packed = PackedStep.build(search_ops, search_ops, layout)
        psi, norms = _kernels.search_loop(
            psi, packed.adj, packed.fwd, packed.dims, packed.lefts, packed.rights, cst, drive, S, delta
        )
        if record:
            for s in range(1, S + 1):
                transcript += step_events(s, s / S, packed.labels, register, float(norms[s - 1]))
    else:
        norms = np.empty(S, dtype=np.float64)
        packed = PackedStep.build(search_ops, search_ops, layout) if static else None
        for s in range(1, S + 1):
            if not static:
                adj_ops, fwd_ops = search_ops(s)
                packed = PackedStep.build(adj_ops, fwd_ops, layout)
            f = s / S
            psi = packed.step(psi, cst, drive, f, delta)
            norms[s - 1] = float(np.linalg.norm(psi))
            if observer is not None:
                observer(s, psi)
            if record:
                transcript += step_events(s, f, packed.labels, register, float(norms[s - 1]))

    final = StateVector(psi, layout)
    return SearchResult(
        initial_state=psi0,
        final_state=final,
        distribution=outcome_distribution(final),
        norms=norms,
        transcript=transcript,
        degenerate=is_degenerate(psi0, config),
    )


# --------------------------------------------------------------------------
# null-set check

@dataclass
class NullCheckResult:
    outcome: int
    excluded: frozenset
    search: SearchResult
    flag_probabilities: dict[int, float]  # exact, per bidder


def flag_probabilities(state: StateVector, config: AuctionConfig) -> dict[int, float]:
    masks, _ = bid_tables(config.language)
    nonnull = masks[config.layout.digit_table] != 0
    p = state.probabilities
    return {j: float(p[nonnull[:, j]].sum()) for j in range(config.n_bidders)}


def excluded_bidders(x: int, config: AuctionConfig) -> frozenset:
    return frozenset(j for j, bid in enumerate(decode_allocation(x, config).bids) if not bid.is_null)


def run_null_check(
    search_ops: SearchOperators,
    schedule: SearchSchedule,
    config: AuctionConfig,
    rng: np.random.Generator,
    init_ops: Optional[Sequence[UnitaryMatrix]] = None,
    record: bool = True,
) -> NullCheckResult:
    """Search for the allocation with the most null bids and flag the rest.

    Any bidder whose bid in the measured outcome is not null is reported in
    ``excluded``: an honest bidder's subspace contains the null bid, so the
    search ends on ``|0...0>`` with high probability.
    """
    if init_ops is None:
        if callable(search_ops):
            raise ValueError("init_ops are required when search_ops is step-dependent")
        init_ops = search_ops
    res = run_search(
        init_ops, search_ops, schedule, config,
        cost_override=null_count_phases(config), register="null", record=record,
    )
    outcome = measure(res.final_state, rng)
    return NullCheckResult(
        outcome, excluded_bidders(outcome, config), res, flag_probabilities(res.final_state, config)
    )


# --------------------------------------------------------------------------
# probe test

@dataclass(frozen=True)
class ProbeOutcome:
    passed: bool
    analytic_pass_prob: float
    measured: int


def probe_pass_probability(claimed: np.ndarray, actual: np.ndarray, v: np.ndarray) -> float:
    phi = v[:, 0]
    returned = actual @ (claimed.conj().T @ phi)
    return float(abs(np.vdot(phi, returned)) ** 2)


def probe_test(
    claimed: UnitaryMatrix, actual: UnitaryMatrix, v: UnitaryMatrix, rng: np.random.Generator
) -> ProbeOutcome:
    """Send ``phi = V|0>``, get back ``actual claimed^dagger phi``, undo ``V`` and measure.

    Outcome 0 passes.  Uses one ``rng.random()`` draw.
    """
    if not claimed.dim == actual.dim == v.dim:
        raise ValueError("probe operators must share one dimension")
    phi = v.matrix[:, 0]
    back = v.adjoint @ (actual.matrix @ (claimed.adjoint @ phi))
    p = np.abs(back) ** 2
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    outcome = int(min(np.searchsorted(cdf, u, side="right"), len(p) - 1))
    return ProbeOutcome(outcome == 0, float(p[0]), outcome)


# --------------------------------------------------------------------------
# subspace reference

@dataclass
class SubspaceReference:
    indices: np.ndarray  # full-register index of each subspace state x_S
    amplitudes: np.ndarray
    weights: np.ndarray  # Hamming weight of each x_S

    @property
    def distribution(self) -> dict[int, float]:
        return {int(x): float(abs(a) ** 2) for x, a in zip(self.indices, self.amplitudes)}


def subspace_indices(layout: RegisterLayout, bid_indices: Sequence[int]) -> np.ndarray:
    """Full-register index of each ``x_S``; bit ``n-1-j`` of ``x_S`` is bidder ``j``."""
    n = layout.n_bidders
    out = np.empty(2 ** n, dtype=np.int64)
    for xs in range(2 ** n):
        digits = [bid_indices[j] if xs >> (n - 1 - j) & 1 else 0 for j in range(n)]
        out[xs] = layout.index(digits)
    return out


def two_level_block(op: UnitaryMatrix, bid_index: int) -> np.ndarray:
    """The ``{0, bid}`` block of a bidder operator that keeps that pair invariant."""
    m = op.matrix
    keep = [0, bid_index]
    others = [k for k in range(op.dim) if k not in keep]
    if bid_index <= 0 or bid_index >= op.dim:
        raise ValueError(f"bid index {bid_index} is not a non-null digit")
    if others and (np.abs(m[np.ix_(others, keep)]).max() > 1e-12 or np.abs(m[np.ix_(keep, others)]).max() > 1e-12):
        raise ValueError("operator mixes its {null, bid} pair with other digits")
    return m[np.ix_(keep, keep)]


def subspace_reference_search(
    ops: Sequence[UnitaryMatrix],
    bid_indices: Sequence[int],
    schedule: SearchSchedule,
    config: AuctionConfig,
    rule: EvaluationRule = EvaluationRule.FIRST_PRICE_REVENUE,
) -> SubspaceReference:
    """The same recurrence run directly on the ``2**n`` states ``{null, bid}^n``.

    Built from dense ``2**n`` matrices: the Kronecker product of each
    bidder's two-level block, driver values from the subspace Hamming
    weight, and costs evaluated one allocation at a time.
    """
    layout = config.layout
    n = layout.n_bidders
    if len(ops) != n or len(bid_indices) != n or any(op.acts_on != (j,) for j, op in enumerate(ops)):
        raise ValueError("need one single-bidder operator and one bid per bidder, in order")
    v = np.ones((1, 1), dtype=np.complex128)
    for op, b in zip(ops, bid_indices):
        v = np.kron(v, two_level_block(op, b))
    idx = subspace_indices(layout, bid_indices)
    weights = np.array([bin(xs).count("1") for xs in range(2 ** n)])
    lo, hi = cost_bounds(config)
    c = (np.array([cost(int(x), config, rule) for x in idx]) - lo) / (hi - lo)
    d = weight_function(schedule.scheme, n)(weights) / driver_scale(layout, schedule.scheme)

    psi = v[:, 0].copy()
    S, delta = schedule.steps, schedule.delta
    for s in range(1, S + 1):
        f = s / S
        p = np.diag(np.exp(-1j * f * delta * c))
        dm = np.diag(np.exp(-1j * (1 - f) * delta * d))
        psi = v @ dm @ v.conj().T @ p @ psi
    return SubspaceReference(idx, psi, weights)
