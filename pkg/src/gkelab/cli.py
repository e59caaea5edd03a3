"""Command line: ``gkelab run|verify|classify``.

Exit codes: 0 expected outcome, 1 verification or classification failure,
2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys

from gkelab.adversary import AdversaryConfig
from gkelab.errors import InvalidScenario, MalformedTranscript
from gkelab.group import PRESETS
from gkelab.oracles import DIGEST_SIZE
from gkelab.protocol import GROUP_STAGE, SUBGROUP_STAGE
from gkelab.sim import (
    PROTOCOLS,
    Scenario,
    Transcript,
    check_agreement,
    expected_classification,
    random_rmask,
    simulate,
    verify_transcript,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _positions(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated positions, got {text!r}") from None


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _parse_rmask(text: str, seed: int) -> bytes:
    if text == "random":
        return random_rmask(seed)
    raw = bytes.fromhex(text.removeprefix("0x").rjust(2 * DIGEST_SIZE, "0"))
    if len(raw) != DIGEST_SIZE:
        raise ValueError(f"rmask longer than {DIGEST_SIZE} bytes")
    return raw


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gkelab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario and write its transcript")
    run.add_argument("--protocol", choices=sorted(PROTOCOLS), required=True)
    run.add_argument("--n", type=int, required=True)
    run.add_argument("--subgroup", type=_positions, help="1-based positions, e.g. 1,2,3 (mbd-s only)")
    run.add_argument("--attack", action="store_true", help="two neighbours of the victim collude")
    run.add_argument("--victim", type=int, help="1-based position of the victim")
    run.add_argument("--rmask", default="random", help="hex mask or 'random' (derived from the seed)")
    run.add_argument("--attack-stage", choices=[GROUP_STAGE, SUBGROUP_STAGE],
                     help="stage to attack; default subgroup for mbd-s, group otherwise")
    run.add_argument("--ssid-tokens", action="store_true",
                     help="hash subgroup edge tokens with ssid instead of sid")
    run.add_argument("--group", choices=sorted(PRESETS), default="toy")
    run.add_argument("--seed", type=_seed, default=0)
    run.add_argument("--out", required=True)

    for name, text in [("verify", "re-check signatures and XOR-sums"), ("classify", "classify the outcome")]:
        p = sub.add_parser(name, help=text)
        p.add_argument("transcript")
    return parser


def _cmd_run(args, parser) -> int:
    adversary = None
    if args.attack:
        if args.victim is None:
            parser.error("--attack needs --victim")
        try:
            rmask = _parse_rmask(args.rmask, args.seed)
        except ValueError as exc:
            parser.error(f"--rmask: {exc}")
        stage = args.attack_stage or (SUBGROUP_STAGE if PROTOCOLS[args.protocol][1] else GROUP_STAGE)
        try:
            adversary = AdversaryConfig(victim=args.victim, rmask=rmask, stage=stage)
        except ValueError as exc:
            parser.error(str(exc))
    scenario = Scenario(
        protocol=args.protocol, n=args.n, seed=args.seed, group=args.group, subgroup=args.subgroup,
        adversary=adversary, subgroup_tokens_use_ssid=args.ssid_tokens,
    )
    try:
        result = simulate(scenario)
    except InvalidScenario as exc:
        for problem in exc.problems:
            print(f"invalid scenario: {problem}", file=sys.stderr)
        return EXIT_USAGE
    result.transcript.save(args.out)
    report = check_agreement(result.transcript)
    expected = expected_classification(scenario)
    print(f"wrote {args.out}: {report.classification} (expected {expected})")
    return EXIT_OK if report.classification == expected else EXIT_FAIL


def _load(path: str) -> Transcript | None:
    try:
        return Transcript.load(path)
    except (OSError, MalformedTranscript) as exc:
        print(f"cannot read transcript: {exc}", file=sys.stderr)
        return None


def _cmd_verify(args) -> int:
    t = _load(args.transcript)
    if t is None:
        return EXIT_FAIL
    try:
        result = verify_transcript(t)
    except MalformedTranscript as exc:
        print(f"malformed transcript: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for line in result.diagnostics:
        print(line)
    print("valid" if result.ok else "INVALID")
    return EXIT_OK if result.ok else EXIT_FAIL


def _cmd_classify(args) -> int:
    t = _load(args.transcript)
    if t is None:
        return EXIT_FAIL
    try:
        report = check_agreement(t)
        expected = expected_classification(Scenario.from_dict(t.data["scenario"]))
    except (MalformedTranscript, KeyError, ValueError) as exc:
        print(f"malformed transcript: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(json.dumps({**report.to_dict(), "expected": expected}, indent=2))
    return EXIT_OK if report.classification == expected else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        return _cmd_run(args, parser)
    if args.command == "verify":
        return _cmd_verify(args)
    return _cmd_classify(args)


if __name__ == "__main__":
    sys.exit(main())
