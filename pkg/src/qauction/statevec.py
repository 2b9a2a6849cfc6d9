"""Dense state vectors over the joint bidder register.

Bidder ``0`` owns the most significant ``b`` bits of the global index, so an
index reads as base-``2**b`` digits ``x_0 x_1 ... x_{n-1}``.  Operators act on
contiguous groups of bidders and are applied block-wise without building the
full Kronecker product.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

from . import _kernels

DEFAULT_MAX_QUBITS = 20
UNITARY_TOL = 1e-9
MEASURE_NORM_TOL = 1e-6


def max_qubits() -> int:
    """State-size cap, overridable through ``QAUCTION_MAX_QUBITS``."""
    raw = os.environ.get("QAUCTION_MAX_QUBITS")
    return int(raw) if raw else DEFAULT_MAX_QUBITS


class NotUnitaryError(ValueError):
    pass


@dataclass(frozen=True)
class RegisterLayout:
    n_bidders: int
    bits_per_bidder: int

    def __post_init__(self):
        if self.n_bidders < 1 or self.bits_per_bidder < 1:
            raise ValueError("n_bidders and bits_per_bidder must be positive")
        cap = max_qubits()
        if self.n_qubits > cap:
            raise ValueError(f"{self.n_qubits} qubits exceeds the cap of {cap} (QAUCTION_MAX_QUBITS)")

    @property
    def n_qubits(self) -> int:
        return self.n_bidders * self.bits_per_bidder

    @property
    def block_dim(self) -> int:
        return 2 ** self.bits_per_bidder

    @property
    def size(self) -> int:
        return 2 ** self.n_qubits

    def digits(self, x: int) -> tuple[int, ...]:
        if not 0 <= x < self.size:
            raise IndexError(f"index {x} outside register of size {self.size}")
        out = []
        for _ in range(self.n_bidders):
            x, d = divmod(x, self.block_dim)
            out.append(d)
        return tuple(reversed(out))

    def index(self, digits: Sequence[int]) -> int:
        if len(digits) != self.n_bidders:
            raise ValueError("need one digit per bidder")
        x = 0
        for d in digits:
            if not 0 <= d < self.block_dim:
                raise ValueError(f"digit {d} outside 0..{self.block_dim - 1}")
            x = x * self.block_dim + int(d)
        return x

    @cached_property
    def digit_table(self) -> np.ndarray:
        """``(size, n_bidders)`` array of every index's digits."""
        idx = np.arange(self.size, dtype=np.int64)
        shifts = self.bits_per_bidder * np.arange(self.n_bidders - 1, -1, -1)
        return (idx[:, None] >> shifts[None, :]) & (self.block_dim - 1)

    def span(self, acts_on: Sequence[int]) -> tuple[int, int, int]:
        """``(dim, left, right)`` for a contiguous bidder group."""
        acts_on = tuple(acts_on)
        if not acts_on:
            raise ValueError("operator must act on at least one bidder")
        first, last = acts_on[0], acts_on[-1]
        if acts_on != tuple(range(first, last + 1)) or first < 0 or last >= self.n_bidders:
            raise ValueError(f"acts_on {acts_on} is not a contiguous bidder range of this layout")
        dim = self.block_dim ** len(acts_on)
        return dim, self.block_dim ** first, self.block_dim ** (self.n_bidders - 1 - last)


def unitarity_error(matrix: np.ndarray) -> float:
    d = matrix.shape[0]
    return float(np.max(np.abs(matrix @ matrix.conj().T - np.eye(d))))


@dataclass(frozen=True, eq=False)
class UnitaryMatrix:
    """A unitary on the combined block of the bidders in ``acts_on``."""

    matrix: np.ndarray
    acts_on: tuple[int, ...] = (0,)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("operator must be a square matrix")
        err = unitarity_error(m)
        if err > UNITARY_TOL:
            raise NotUnitaryError(f"|U U^dagger - I| = {err:.3g} exceeds {UNITARY_TOL}")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "acts_on", tuple(int(i) for i in self.acts_on))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def adjoint(self) -> np.ndarray:
        return self.matrix.conj().T

    def on(self, *acts_on: int) -> "UnitaryMatrix":
        """The same matrix placed on another bidder group."""
        return UnitaryMatrix(self.matrix, acts_on)

    @classmethod
    def identity(cls, dim: int, acts_on: Sequence[int] = (0,)) -> "UnitaryMatrix":
        return cls(np.eye(dim, dtype=np.complex128), tuple(acts_on))

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator, acts_on: Sequence[int] = (0,)) -> "UnitaryMatrix":
        """Haar-random unitary drawn from ``rng``."""
        from scipy.stats import unitary_group

        return cls(unitary_group.rvs(dim, random_state=rng), tuple(acts_on))

    def check_layout(self, layout: RegisterLayout) -> tuple[int, int, int]:
        dim, left, right = layout.span(self.acts_on)
        if dim != self.dim:
            raise ValueError(f"operator of dim {self.dim} on bidders {self.acts_on} needs dim {dim}")
        return dim, left, right


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray
    layout: RegisterLayout

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if a.shape[0] != self.layout.size:
            raise ValueError(f"expected {self.layout.size} amplitudes, got {a.shape[0]}")
        a.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def basis(cls, layout: RegisterLayout, x: int = 0) -> "StateVector":
        a = np.zeros(layout.size, dtype=np.complex128)
        a[x] = 1.0
        return cls(a, layout)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def pack_operators(ops: Sequence[UnitaryMatrix], layout: RegisterLayout, adjoint: bool = False):
    """Pack operators into the ``(ops, dims, lefts, rights)`` kernel form."""
    spans = [op.check_layout(layout) for op in ops]
    dmax = max((s[0] for s in spans), default=1)
    packed = np.zeros((len(ops), dmax, dmax), dtype=np.complex128)
    for g, op in enumerate(ops):
        packed[g, : op.dim, : op.dim] = op.adjoint if adjoint else op.matrix
    dims = np.array([s[0] for s in spans], dtype=np.int64)
    lefts = np.array([s[1] for s in spans], dtype=np.int64)
    rights = np.array([s[2] for s in spans], dtype=np.int64)
    return packed, dims, lefts, rights


def apply_local(state: StateVector, op: UnitaryMatrix, adjoint: bool = False) -> StateVector:
    """Apply ``I (x) ... (x) U (x) ... (x) I`` (or its adjoint)."""
    packed, dims, lefts, rights = pack_operators([op], state.layout, adjoint=adjoint)
    psi = _kernels.apply_groups(state.amplitudes.copy(), packed, dims, lefts, rights)
    return StateVector(psi, state.layout)


def apply_product(state: StateVector, ops: Sequence[UnitaryMatrix], adjoint: bool = False) -> StateVector:
    packed, dims, lefts, rights = pack_operators(ops, state.layout, adjoint=adjoint)
    psi = _kernels.apply_groups(state.amplitudes.copy(), packed, dims, lefts, rights)
    return StateVector(psi, state.layout)


PhaseSource = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


def phase_array(phase_of: PhaseSource, size: int) -> np.ndarray:
    if callable(phase_of):
        phases = phase_of(np.arange(size, dtype=np.int64))
    else:
        phases = phase_of
    return np.ascontiguousarray(np.broadcast_to(np.asarray(phases, dtype=np.float64), (size,)))


def apply_diagonal_phase(state: StateVector, phase_of: PhaseSource) -> StateVector:
    """Multiply amplitude ``x`` by ``exp(-i * phase_of(x))``.

    ``phase_of`` is either an array of radians or a callable receiving the
    full integer index array.
    """
    phases = phase_array(phase_of, state.layout.size)
    return StateVector(_kernels.apply_phase(state.amplitudes.copy(), phases, 1.0), state.layout)


def _checked_probabilities(state: StateVector) -> np.ndarray:
    p = state.probabilities
    total = float(p.sum())
    if abs(total - 1.0) > MEASURE_NORM_TOL:
        raise ValueError(f"state norm^2 {total:.9f} deviates from 1 by more than {MEASURE_NORM_TOL}")
    return p


def measure(state: StateVector, rng: np.random.Generator) -> int:
    """Projective measurement in the computational basis.

    Consumes exactly one ``rng.random()`` draw and inverts the cumulative
    distribution, so a fixed generator state gives a fixed outcome.
    """
    p = _checked_probabilities(state)
    cdf = np.cumsum(p)
    u = rng.random() * cdf[-1]
    return int(min(np.searchsorted(cdf, u, side="right"), len(p) - 1))


def outcome_distribution(state: StateVector, floor: float = 1e-15) -> dict[int, float]:
    p = state.probabilities
    return {int(x): float(p[x]) for x in np.flatnonzero(p >= floor)}
