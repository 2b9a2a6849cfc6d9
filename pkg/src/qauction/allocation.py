"""Allocations, feasibility, revenue evaluation and state counting."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from math import comb
from typing import NamedTuple, Optional

import numpy as np

from .bidlang import Bid, BidLanguage, BidMode, bid_tables, decode_bid
from .statevec import RegisterLayout

INT64_MAX = 2 ** 63 - 1


@dataclass(frozen=True)
class AuctionConfig:
    n_bidders: int
    bits_per_bidder: int
    language: BidLanguage

    def __post_init__(self):
        if self.language.bits != self.bits_per_bidder:
            raise ValueError(
                f"item_bits + price_bits = {self.language.bits} but bits_per_bidder = {self.bits_per_bidder}"
            )

    @classmethod
    def single_item(cls, n_bidders: int, bits: int, price_scale: float = 1.0) -> "AuctionConfig":
        return cls(n_bidders, bits, BidLanguage.single_item(bits, price_scale))

    @cached_property
    def layout(self) -> RegisterLayout:
        return RegisterLayout(self.n_bidders, self.bits_per_bidder)

    @property
    def max_bid(self) -> float:
        """Largest expressible single-bid price (the value bound used by the gain test)."""
        return self.language.max_price


class EvaluationRule(str, enum.Enum):
    FIRST_PRICE_REVENUE = "first_price_revenue"

    @property
    def infeasible_value(self) -> float:
        return -1.0


@dataclass(frozen=True)
class Allocation:
    bids: tuple[Bid, ...]


class Winner(NamedTuple):
    bidder: int
    bundle: frozenset
    price: float


def decode_allocation(x: int, config: AuctionConfig) -> Allocation:
    return Allocation(tuple(decode_bid(d, config.language) for d in config.layout.digits(x)))


def is_feasible(a: Allocation, config: Optional[AuctionConfig] = None) -> bool:
    """Pairwise-disjoint bundles, not all empty.

    For single-item bids every non-null bundle is the one item, so this is
    the same as "exactly one non-null bid".
    """
    taken: set = set()
    any_bid = False
    for bid in a.bids:
        if bid.is_null:
            continue
        if taken & bid.bundle:
            return False
        taken |= bid.bundle
        any_bid = True
    return any_bid


def evaluate(a: Allocation, rule: EvaluationRule = EvaluationRule.FIRST_PRICE_REVENUE) -> float:
    if not is_feasible(a):
        return rule.infeasible_value
    return float(sum(b.price for b in a.bids if not b.is_null))


def cost(x: int, config: AuctionConfig, rule: EvaluationRule = EvaluationRule.FIRST_PRICE_REVENUE) -> float:
    return -evaluate(decode_allocation(x, config), rule)


def winner_of(a: Allocation) -> Optional[list[Winner]]:
    if not is_feasible(a):
        return None
    return [Winner(j, b.bundle, b.price) for j, b in enumerate(a.bids) if not b.is_null]


# --------------------------------------------------------------------------
# vectorized tables over the whole register

def allocation_tables(config: AuctionConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(feasible, value, nonnull_count)`` for every global index."""
    digits = config.layout.digit_table
    masks_t, prices_t = bid_tables(config.language)
    masks, prices = masks_t[digits], prices_t[digits]
    union = np.bitwise_or.reduce(masks, axis=1)
    feasible = (masks.sum(axis=1) == union) & (union != 0)
    value = np.where(feasible, prices.sum(axis=1), EvaluationRule.FIRST_PRICE_REVENUE.infeasible_value)
    return feasible, value, (masks != 0).sum(axis=1)


def cost_table(config: AuctionConfig, rule: EvaluationRule = EvaluationRule.FIRST_PRICE_REVENUE) -> np.ndarray:
    _, value, _ = allocation_tables(config)
    return -value


def nonzero_digit_count(layout: RegisterLayout) -> np.ndarray:
    """``r(x)``: how many raw per-bidder digits are nonzero."""
    return (layout.digit_table != 0).sum(axis=1)


# --------------------------------------------------------------------------
# closed-form counts and the inequalities built from them

def _guard(*values: int) -> None:
    for v in values:
        if abs(v) > INT64_MAX:
            raise OverflowError("count exceeds 64-bit range")


def count_feasible(config: AuctionConfig) -> int:
    n = config.n_bidders
    lang = config.language
    if lang.mode is BidMode.SINGLE_ITEM:
        out = n * (2 ** config.bits_per_bidder - 1)
    else:
        out = ((n + 1) ** lang.n_items - 1) * 2 ** (n * lang.price_bits)
    _guard(out)
    return out


def count_deviation(n: int, b: int, k: int) -> int:
    """Basis states in which exactly ``k`` bidders sit off the null digit."""
    out = comb(n, k) * (2 ** b - 1) ** k
    _guard(out)
    return out


def _total(n: int, b: int) -> int:
    total = 2 ** (n * b)
    _guard(total)
    return total


def condition_sides(n: int, b: int) -> tuple[int, int]:
    total, single = _total(n, b), n * (2 ** b - 1)
    return total - single, single


def check_condition(n: int, b: int) -> bool:
    """Enough infeasible states to absorb every single-bidder deviation state."""
    lhs, rhs = condition_sides(n, b)
    return lhs >= rhs


def collusion_sides(n: int, b: int) -> tuple[int, int]:
    lhs = _total(n, b) - n * (2 ** b - 1)
    rhs = sum(count_deviation(n, b, k) for k in range(1, n))
    return lhs, rhs


def check_collusion_condition(n: int, b: int) -> bool:
    """Enough infeasible states for every deviation by up to ``n - 1`` bidders."""
    lhs, rhs = collusion_sides(n, b)
    return lhs >= rhs


def multi_condition_sides(n: int, m: int, mp: int) -> tuple[int, int]:
    b = m + mp
    feasible = ((n + 1) ** m - 1) * 2 ** (n * mp)
    lhs = _total(n, b) - feasible
    _guard(feasible, lhs)
    return lhs, n * (2 ** b - 1)


def check_multi_condition(n: int, m: int, mp: int) -> bool:
    lhs, rhs = multi_condition_sides(n, m, mp)
    return lhs >= rhs


def multi_collusion_sides(n: int, m: int, mp: int) -> tuple[int, int]:
    b = m + mp
    lhs, _ = multi_condition_sides(n, m, mp)
    rhs = _total(n, b) - 1 - (2 ** b - 1) ** n
    return lhs, rhs


def check_multi_collusion(n: int, m: int, mp: int) -> bool:
    lhs, rhs = multi_collusion_sides(n, m, mp)
    return lhs >= rhs


# --------------------------------------------------------------------------
# exhaustive enumerators (independent of the closed forms above)

ENUMERATION_MAX_QUBITS = 16


def enumerate_feasible(config: AuctionConfig) -> int:
    if config.layout.n_qubits > ENUMERATION_MAX_QUBITS:
        raise ValueError(f"enumeration is capped at {ENUMERATION_MAX_QUBITS} qubits")
    feasible, _, _ = allocation_tables(config)
    return int(feasible.sum())


def enumerate_deviation_counts(n: int, b: int) -> dict[int, int]:
    """``k -> number of states with exactly k nonzero digits``."""
    if n * b > ENUMERATION_MAX_QUBITS:
        raise ValueError(f"enumeration is capped at {ENUMERATION_MAX_QUBITS} qubits")
    r = nonzero_digit_count(RegisterLayout(n, b))
    counts = np.bincount(r, minlength=n + 1)
    return {k: int(c) for k, c in enumerate(counts)}
