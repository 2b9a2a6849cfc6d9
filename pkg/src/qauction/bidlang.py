"""Bid encoding and operator synthesis.

A bidder's block index is ``bundle_mask * 2**price_bits + price_code``.  In
single-item mode there are no item bits, index 0 is the null bid and index
``k`` means price ``k * price_scale``.  In combinatorial mode item ``i`` of
``items`` is bit ``i`` of the mask (the first item is the low bit) and every
index with an empty mask decodes to the null bid.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .statevec import UnitaryMatrix

NORM_TOL = 1e-12


class BidMode(str, enum.Enum):
    SINGLE_ITEM = "single"
    COMBINATORIAL = "combinatorial"


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class Bid:
    bundle: frozenset = field(default_factory=frozenset)
    price: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "bundle", frozenset(self.bundle))
        if self.price < 0:
            raise ValueError("bid price must be nonnegative")
        if not self.bundle:
            object.__setattr__(self, "price", 0.0)
        else:
            object.__setattr__(self, "price", float(self.price))

    @property
    def is_null(self) -> bool:
        return not self.bundle

    def __repr__(self):
        if self.is_null:
            return "Bid(null)"
        return f"Bid({sorted(self.bundle)}, {self.price:g})"


NULL_BID = Bid()


@dataclass(frozen=True)
class BidLanguage:
    mode: BidMode
    item_bits: int
    price_bits: int
    price_scale: float = 1.0
    items: tuple[str, ...] = ("item",)

    def __post_init__(self):
        object.__setattr__(self, "mode", BidMode(self.mode))
        object.__setattr__(self, "items", tuple(self.items))
        if self.price_bits < 0 or self.item_bits < 0 or self.bits < 1:
            raise ValueError("bit counts must be nonnegative with at least one bit")
        if self.price_scale <= 0:
            raise ValueError("price_scale must be positive")
        if self.mode is BidMode.SINGLE_ITEM:
            if self.item_bits != 0:
                raise ValueError("single-item languages carry no item bits")
            if len(self.items) != 1:
                raise ValueError("single-item languages name exactly one item")
        elif len(self.items) != self.item_bits:
            raise ValueError("combinatorial languages need one item per item bit")
        if len(set(self.items)) != len(self.items):
            raise ValueError("item names must be distinct")

    @classmethod
    def single_item(cls, bits: int, price_scale: float = 1.0, item: str = "item") -> "BidLanguage":
        return cls(BidMode.SINGLE_ITEM, 0, bits, price_scale, (item,))

    @classmethod
    def combinatorial(cls, items: Sequence[str], price_bits: int, price_scale: float = 1.0) -> "BidLanguage":
        return cls(BidMode.COMBINATORIAL, len(items), price_bits, price_scale, tuple(items))

    @property
    def bits(self) -> int:
        return self.item_bits + self.price_bits

    @property
    def n_items(self) -> int:
        return len(self.items) if self.mode is BidMode.COMBINATORIAL else 1

    @property
    def max_price(self) -> float:
        return (2 ** self.price_bits - 1) * self.price_scale

    def bid(self, price: float, items: Iterable[str] | None = None) -> Bid:
        """Convenience constructor; single-item bids default to the one item."""
        if items is None:
            if self.mode is not BidMode.SINGLE_ITEM:
                raise ValueError("combinatorial bids need an explicit bundle")
            items = self.items
        return Bid(frozenset(items), price)

    def price_of(self, code: int) -> float:
        return code * self.price_scale


def _price_code(price: float, lang: BidLanguage) -> int:
    code = round(price / lang.price_scale)
    if not math.isclose(code * lang.price_scale, price, rel_tol=1e-9, abs_tol=1e-12):
        raise EncodingError(f"price {price} is not a multiple of the price scale {lang.price_scale}")
    if code >= 2 ** lang.price_bits:
        raise EncodingError(f"price {price} overflows {lang.price_bits} price bits")
    return code


def encode_bid(bid: Bid, lang: BidLanguage) -> int:
    if bid.is_null:
        return 0
    unknown = bid.bundle - set(lang.items)
    if unknown:
        raise EncodingError(f"unknown item(s) {sorted(unknown)}")
    code = _price_code(bid.price, lang)
    if lang.mode is BidMode.SINGLE_ITEM:
        if code == 0:
            raise EncodingError("a single-item price of zero collides with the null bid")
        return code
    mask = sum(1 << lang.items.index(item) for item in bid.bundle)
    return (mask << lang.price_bits) | code


def decode_bid(index: int, lang: BidLanguage) -> Bid:
    if not 0 <= index < 2 ** lang.bits:
        raise IndexError(f"index {index} outside 0..{2 ** lang.bits - 1}")
    if lang.mode is BidMode.SINGLE_ITEM:
        return NULL_BID if index == 0 else Bid(frozenset(lang.items), lang.price_of(index))
    mask, code = index >> lang.price_bits, index & (2 ** lang.price_bits - 1)
    if mask == 0:
        return NULL_BID
    bundle = frozenset(item for i, item in enumerate(lang.items) if mask >> i & 1)
    return Bid(bundle, lang.price_of(code))


def bid_tables(lang: BidLanguage) -> tuple[np.ndarray, np.ndarray]:
    """Per-block-index ``(bundle_mask, price)`` arrays; null bids have mask 0."""
    idx = np.arange(2 ** lang.bits)
    if lang.mode is BidMode.SINGLE_ITEM:
        masks = (idx != 0).astype(np.int64)
        prices = idx * lang.price_scale
    else:
        masks = (idx >> lang.price_bits).astype(np.int64)
        prices = np.where(masks != 0, (idx & (2 ** lang.price_bits - 1)) * lang.price_scale, 0.0)
    return masks, prices.astype(np.float64)


Term = Union[Bid, Sequence[Bid]]


@dataclass(frozen=True)
class BidSuperposition:
    """Amplitudes over distinct bids, owned by one bidder or a bidder group.

    For a group every term is a tuple with one bid per member, in member
    order.
    """

    terms: tuple[tuple[Term, complex], ...]
    owner: tuple[int, ...] = (0,)

    def __post_init__(self):
        terms = tuple((t if isinstance(t, Bid) else tuple(t), complex(a)) for t, a in self.terms)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "owner", tuple(self.owner))
        norm = math.sqrt(sum(abs(a) ** 2 for _, a in terms))
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"superposition norm {norm:.15f} is not 1")
        for t, _ in terms:
            width = 1 if isinstance(t, Bid) else len(t)
            if width != len(self.owner):
                raise ValueError("each term needs one bid per owning bidder")

    @classmethod
    def uniform(cls, bids: Sequence[Term], owner: Sequence[int] = (0,)) -> "BidSuperposition":
        a = 1 / math.sqrt(len(bids))
        return cls(tuple((b, a) for b in bids), tuple(owner))

    @classmethod
    def weighted(cls, pairs: Sequence[tuple[Term, complex]], owner: Sequence[int] = (0,)) -> "BidSuperposition":
        """Like the constructor but normalizes the amplitudes first."""
        norm = math.sqrt(sum(abs(a) ** 2 for _, a in pairs))
        return cls(tuple((b, a / norm) for b, a in pairs), tuple(owner))

    @property
    def contains_null(self) -> bool:
        for t, a in self.terms:
            bids = (t,) if isinstance(t, Bid) else t
            if abs(a) > 0 and all(b.is_null for b in bids):
                return True
        return False


def amplitude_vector(target: BidSuperposition, lang: BidLanguage) -> np.ndarray:
    """The state the owner's operator must produce from the all-zero block."""
    width = len(target.owner)
    block = 2 ** lang.bits
    vec = np.zeros(block ** width, dtype=np.complex128)
    seen = set()
    for t, a in target.terms:
        bids = (t,) if isinstance(t, Bid) else t
        x = 0
        for b in bids:
            x = x * block + encode_bid(b, lang)
        if x in seen:
            raise EncodingError(f"duplicate term {t!r} (basis index {x})")
        seen.add(x)
        vec[x] = a
    return vec


def householder_completion(psi: np.ndarray) -> np.ndarray:
    """Unitary whose first column is ``psi``.

    With ``theta = arg psi_0`` and ``p = exp(-i theta) psi`` the reflection
    ``H = I - 2 v v^dagger / |v|^2`` with ``v = e_0 + p`` sends ``e_0`` to
    ``-p``; negating column 0 and restoring the phase gives
    ``U = exp(i theta) H diag(-1, 1, ..., 1)``.  ``U`` is the identity on the
    orthogonal complement of ``span(e_0, psi)``, and ``psi = e_0`` gives
    exactly ``I``.
    """
    psi = np.asarray(psi, dtype=np.complex128)
    d = psi.shape[0]
    theta = float(np.angle(psi[0])) if abs(psi[0]) > 0 else 0.0
    phase = np.exp(1j * theta)
    p = psi * np.conj(phase)
    v = p.copy()
    v[0] += 1.0
    h = np.eye(d, dtype=np.complex128) - (2.0 / np.vdot(v, v).real) * np.outer(v, v.conj())
    h[:, 0] *= -1.0
    return phase * h


def synthesize_operator(target: BidSuperposition, lang: BidLanguage) -> UnitaryMatrix:
    if len(target.owner) != 1:
        raise ValueError("synthesize_operator is for a single bidder; use synthesize_joint_operator")
    return UnitaryMatrix(householder_completion(amplitude_vector(target, lang)), target.owner)


def product_factors(vec: np.ndarray, block: int, width: int, tol: float = 1e-12) -> list[np.ndarray] | None:
    """Split ``vec`` into ``width`` single-block factors, or ``None`` if entangled."""
    factors = []
    rest = np.asarray(vec, dtype=np.complex128)
    for _ in range(width - 1):
        u, s, vh = np.linalg.svd(rest.reshape(block, -1), full_matrices=False)
        if s.shape[0] > 1 and s[1] > tol:
            return None
        factors.append(u[:, 0])
        rest = s[0] * vh[0]
    factors.append(rest)
    return factors


def synthesize_joint_operator(target: BidSuperposition, lang: BidLanguage) -> UnitaryMatrix:
    """Operator on a contiguous bidder group whose first column is the joint state.

    A target that factors completely into per-member states gets the
    Kronecker product of the per-member completions, so a product "joint"
    bid searches exactly like independent bidders.  Entangled targets get a
    single Householder completion on the whole group block.
    """
    owner = target.owner
    if owner != tuple(range(owner[0], owner[0] + len(owner))):
        raise ValueError(f"bidder group {owner} is not contiguous")
    vec = amplitude_vector(target, lang)
    factors = product_factors(vec, 2 ** lang.bits, len(owner)) if len(owner) > 1 else None
    if factors is None:
        return UnitaryMatrix(householder_completion(vec), owner)
    m = np.ones((1, 1), dtype=np.complex128)
    for fac in factors:
        m = np.kron(m, householder_completion(fac))
    return UnitaryMatrix(m, owner)


def schmidt_rank(vec: np.ndarray, left_dim: int, tol: float = 1e-10) -> int:
    """Schmidt rank of a bipartite vector split after ``left_dim``."""
    s = np.linalg.svd(np.asarray(vec).reshape(left_dim, -1), compute_uv=False)
    return int(np.sum(s > tol))


def all_bids(lang: BidLanguage) -> list[Bid]:
    """Every canonical bid of the language (one null plus each encodable bid)."""
    out = [NULL_BID]
    codes = range(1, 2 ** lang.price_bits) if lang.mode is BidMode.SINGLE_ITEM else range(2 ** lang.price_bits)
    bundles = [lang.items] if lang.mode is BidMode.SINGLE_ITEM else [
        c for r in range(1, len(lang.items) + 1) for c in itertools.combinations(lang.items, r)
    ]
    for bundle in bundles:
        for code in codes:
            out.append(Bid(frozenset(bundle), lang.price_of(code)))
    return out
