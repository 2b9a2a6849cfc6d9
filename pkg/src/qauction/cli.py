"""``qauction`` command line.

Exit codes: 0 success, 1 a verification verdict failed, 2 invalid input
(with the offending field path), 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

from .allocation import AuctionConfig
from .bidlang import NULL_BID, Bid, BidLanguage, BidSuperposition
from .protocol import (
    Honest,
    InitDeviator,
    JointGroup,
    NullExcluder,
    OperatorSwitcher,
    Policy,
    check_strategies,
    operator_for,
    run_auction,
    write_transcript,
)
from .search import SearchSchedule
from .statevec import max_qubits

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3
DEFAULT_SEED = 0


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class _Field:
    """Walks a JSON object while keeping the dotted path for error messages."""

    def __init__(self, value: Any, path: str = "$"):
        self.value, self.path = value, path

    def fail(self, message: str):
        raise ConfigError(self.path, message)

    def get(self, key: str, default: Any = ..., kind: type | tuple | None = None) -> "_Field":
        if not isinstance(self.value, dict):
            self.fail("expected an object")
        path = f"{self.path}.{key}"
        if key not in self.value:
            if default is ...:
                raise ConfigError(path, "required field is missing")
            return _Field(default, path)
        out = _Field(self.value[key], path)
        if kind is not None:
            out.expect(kind)
        return out

    def items(self) -> list["_Field"]:
        if not isinstance(self.value, list):
            self.fail("expected a list")
        return [_Field(v, f"{self.path}[{i}]") for i, v in enumerate(self.value)]

    def expect(self, kind):
        ok = isinstance(self.value, kind) and not (isinstance(self.value, bool) and kind in (int, float, (int, float)))
        if not ok:
            self.fail(f"expected {getattr(kind, '__name__', kind)}, got {type(self.value).__name__}")
        return self.value

    def build(self, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            self.fail(str(exc))


def _language(node: _Field, bits: int) -> BidLanguage:
    mode = node.get("mode", "single", str).value
    scale = node.get("price_scale", 1.0, (int, float)).value
    if mode == "single":
        item_bits = node.get("item_bits", 0, int).value
        price_bits = node.get("price_bits", bits, int).value
        items = tuple(node.get("items", ["item"], list).value)
        if item_bits + price_bits != bits:
            node.get("price_bits", bits).fail(f"item_bits + price_bits = {item_bits + price_bits} "
                                              f"but bits_per_bidder = {bits}")
        return node.build(BidLanguage, "single", item_bits, price_bits, float(scale), items)
    if mode == "combinatorial":
        items = tuple(node.get("items", kind=list).value)
        price_bits = node.get("price_bits", kind=int).value
        item_bits = node.get("item_bits", len(items), int).value
        if item_bits + price_bits != bits:
            node.get("price_bits").fail(f"item_bits + price_bits = {item_bits + price_bits} "
                                        f"but bits_per_bidder = {bits}")
        return node.build(BidLanguage, "combinatorial", item_bits, price_bits, float(scale), items)
    node.get("mode").fail(f"unknown mode {mode!r}")


def _bid(node: _Field, lang: BidLanguage) -> Bid:
    """``{"null": true}`` or ``{"bundle": [...], "price": p}``; single-item bids may omit the bundle."""
    if node.get("null", False, bool).value:
        return NULL_BID
    price = node.get("price", kind=(int, float)).value
    bundle = node.get("bundle", None, list).value
    if bundle is not None and not bundle:
        return NULL_BID
    return node.build(lang.bid, float(price), bundle)


def _amplitude(node: _Field) -> complex:
    if isinstance(node.value, dict):
        return complex(node.get("re", 0.0, (int, float)).value, node.get("im", 0.0, (int, float)).value)
    return complex(node.expect((int, float)))


def _superposition(node: _Field, owner: tuple[int, ...], lang: BidLanguage) -> BidSuperposition:
    """Terms are bids plus an optional ``amplitude``; group terms list their bids under ``bids``.

    Amplitudes default to 1 and are normalized together.
    """
    terms = node.items()
    if not terms:
        node.fail("needs at least one term")
    pairs = []
    for t in terms:
        if len(owner) > 1:
            members = t.get("bids").items()
            if len(members) != len(owner):
                t.get("bids").fail(f"needs one bid per group member ({len(owner)})")
            bid = tuple(_bid(b, lang) for b in members)
        else:
            bid = _bid(t, lang)
        amp = _amplitude(t.get("amplitude")) if "amplitude" in t.value else 1.0
        pairs.append((bid, amp))
    return node.build(BidSuperposition.weighted, pairs, owner)


def _strategy(node: _Field, config: AuctionConfig):
    lang = config.language
    kind = node.get("kind", kind=str).value
    bidders = node.get("bidders", kind=list)
    nums = [b.expect(int) for b in bidders.items()]
    if not nums or any(not 1 <= j <= config.n_bidders for j in nums):
        bidders.fail(f"bidders are numbered 1..{config.n_bidders}")
    owner = tuple(j - 1 for j in nums)
    if kind in ("honest", "null_excluder", "joint_group"):
        kinds = {"honest": Honest, "null_excluder": NullExcluder, "joint_group": JointGroup}
        strategy = node.build(kinds[kind], _superposition(node.get("terms"), owner, lang))
    elif kind == "init_deviator":
        strategy = node.build(InitDeviator, _superposition(node.get("init_terms"), owner, lang),
                              _superposition(node.get("terms"), owner, lang))
    elif kind == "operator_switcher":
        ops = []
        for seg in node.get("timeline").items():
            sup = _superposition(seg.get("terms"), owner, lang)
            ops += [seg.build(operator_for, sup, lang)] * seg.get("steps", 1, int).value
        strategy = node.build(OperatorSwitcher, tuple(ops))
    else:
        node.get("kind").fail(f"unknown strategy kind {kind!r}")
    # synthesize now so encoding errors surface as validation errors
    node.build(lambda: (strategy.init_operator(lang), strategy.step_operators(lang, 1)))
    return strategy


def load_run_config(data: Any) -> dict:
    """Validate a run config into ready-to-use objects."""
    root = _Field(data)
    auction = root.get("auction")
    n = auction.get("n_bidders", kind=int).value
    b = auction.get("bits_per_bidder", kind=int).value
    if n * b > max_qubits():
        auction.fail(f"n_bidders * bits_per_bidder = {n * b} exceeds the cap of {max_qubits()} qubits")
    lang = _language(auction.get("language", {}), b)
    config = auction.build(AuctionConfig, n, b, lang)
    strategies = [_strategy(s, config) for s in root.get("strategies").items()]
    root.get("strategies").build(check_strategies, strategies, config)
    sched = root.get("schedule")
    schedule = sched.build(
        SearchSchedule,
        sched.get("steps", kind=int).value,
        float(sched.get("delta", 1.0, (int, float)).value),
        sched.get("scheme", "permuted", str).value,
    )
    pol = root.get("policy", {})
    policy = pol.build(Policy, float(pol.get("null_check_prob", 0.0, (int, float)).value),
                       float(pol.get("probe_prob", 0.0, (int, float)).value))
    seed = root.get("seed", DEFAULT_SEED, int).value
    out = root.get("output", {})
    return dict(config=config, strategies=strategies, schedule=schedule, policy=policy, seed=seed,
                result=out.get("result", None).value, transcript=out.get("transcript", None).value)


def cmd_run(args) -> int:
    path = Path(args.config)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except json.JSONDecodeError as exc:
        print(f"error: {path}:{exc.lineno}:{exc.colno}: {exc.msg}", file=sys.stderr)
        return EXIT_INVALID
    try:
        run = load_run_config(data)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    seed = args.seed if args.seed is not None else run["seed"]
    out_dir = Path(args.out) if args.out else path.parent
    result_path = out_dir / (run["result"] or f"{path.stem}.result.json")
    transcript_path = out_dir / (run["transcript"] or f"{path.stem}.transcript.jsonl")
    try:
        result = run_auction(run["config"], run["strategies"], run["schedule"], run["policy"], rng=seed)
        out_dir.mkdir(parents=True, exist_ok=True)
        result_path.write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        write_transcript(result.transcript, transcript_path)
    except Exception as exc:  # noqa: BLE001 - any failure past validation is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    summary = ", ".join(f"bidder {w.bidder + 1} pays {w.price:g}" for w in result.winners) or "no winner"
    print(f"{summary}; result {result_path}; transcript {transcript_path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import experiments as ex

    try:
        if args.battery == "claims":
            if args.max_n * max(args.max_b, args.max_m + args.max_mp) > 62:
                raise ConfigError("--max-n", "grid exceeds the 64-bit counting range")
            report = ex.verify_counting_claims(args.max_n, args.max_b, args.max_m, args.max_mp)
        elif args.battery == "oracle":
            if args.max_n * args.max_b > ex.ORACLE_MAX_QUBITS:
                raise ConfigError("--max-n", f"n*b exceeds the oracle cap of {ex.ORACLE_MAX_QUBITS} qubits")
            steps = args.steps or [1, 50]
            report = ex.oracle_regression(args.max_n, args.max_b, steps, args.delta, args.seed)
        elif args.battery == "subspace":
            report = ex.subspace_equivalence((args.steps or [200])[-1], args.delta)
        else:
            config = AuctionConfig.single_item(2, 2)
            strategies = ex.canonical_deviation(config, [2, 3], deviator=0)
            report = ex.scheme_contrast(config, strategies, SearchSchedule((args.steps or [5000])[-1], args.delta))
            hamming, permuted = report.rows
            report.verdicts["permuted_at_most_0.05"] = permuted["p_o"] <= 0.05
            report.verdicts["hamming_strictly_greater"] = hamming["p_o"] > permuted["p_o"]
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{report.name}.json").write_text(report.to_json(include_runtime=False), encoding="utf-8")
        (out / f"{report.name}.csv").write_text(report.to_csv(), encoding="utf-8")
    for name, ok in report.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    for key in ("max_deviation", "passed", "condition_counterexamples"):
        if key in report.parameters:
            print(f"{key}: {report.parameters[key]}")
    return EXIT_OK if report.passed else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qauction", description="Quantum sealed-bid auction simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one auction from a JSON config")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=None, help="output directory (default: next to the config)")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run a verification battery")
    ver.add_argument("battery", choices=["claims", "oracle", "subspace", "contrast"])
    ver.add_argument("--max-n", type=int, default=None)
    ver.add_argument("--max-b", type=int, default=None)
    ver.add_argument("--max-m", type=int, default=3)
    ver.add_argument("--max-mp", type=int, default=3)
    ver.add_argument("--steps", type=int, nargs="+", default=None)
    ver.add_argument("--delta", type=float, default=1.0)
    ver.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ver.add_argument("--out", default=None, help="directory for <battery>.json and <battery>.csv")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        default_n, default_b = (6, 6) if args.battery == "claims" else (3, 3)
        args.max_n = args.max_n if args.max_n is not None else default_n
        args.max_b = args.max_b if args.max_b is not None else default_b
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
