"""Simulator for sealed-bid auctions run as a distributed adiabatic quantum search."""
from ._kernels import get_backend, set_backend
from .allocation import Allocation, AuctionConfig, EvaluationRule, Winner, decode_allocation, evaluate, is_feasible, winner_of
from .bidlang import NULL_BID, Bid, BidLanguage, BidMode, BidSuperposition, decode_bid, encode_bid, synthesize_joint_operator, synthesize_operator
from .protocol import (
    AuctionResult,
    Honest,
    InitDeviator,
    JointGroup,
    NullExcluder,
    OperatorSwitcher,
    Policy,
    classical_ne_bid,
    run_auction,
)
from .search import Scheme, SearchSchedule, probe_test, run_null_check, run_search, subspace_reference_search
from .statevec import RegisterLayout, StateVector, UnitaryMatrix, apply_diagonal_phase, apply_local, measure

__all__ = [
    "get_backend",
    "set_backend",
    "Allocation",
    "AuctionConfig",
    "EvaluationRule",
    "Winner",
    "decode_allocation",
    "evaluate",
    "is_feasible",
    "winner_of",
    "NULL_BID",
    "Bid",
    "BidLanguage",
    "BidMode",
    "BidSuperposition",
    "decode_bid",
    "encode_bid",
    "synthesize_joint_operator",
    "synthesize_operator",
    "AuctionResult",
    "Honest",
    "InitDeviator",
    "JointGroup",
    "NullExcluder",
    "OperatorSwitcher",
    "Policy",
    "classical_ne_bid",
    "run_auction",
    "Scheme",
    "SearchSchedule",
    "probe_test",
    "run_null_check",
    "run_search",
    "subspace_reference_search",
    "RegisterLayout",
    "StateVector",
    "UnitaryMatrix",
    "apply_diagonal_phase",
    "apply_local",
    "measure",
]

__version__ = "0.1.0"
