"""Walk one attacked session step by step and show where the keys split.

    python scripts/attack_walkthrough.py --n 5 --victim 3 --seed 1 [--kc]
"""
import argparse

from gkelab.adversary import AdversaryConfig, predict_divergence
from gkelab.group import TOY
from gkelab.oracles import xor_all
from gkelab.protocol import key_fingerprint
from gkelab.sim import Scenario, random_rmask, simulate, verify_transcript


def short(b: bytes) -> str:
    return b.hex()[:16]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=5)
    parser.add_argument("--victim", type=int, default=3)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--kc", action="store_true", help="run the key-confirmation variant")
    args = parser.parse_args()

    cfg = AdversaryConfig(args.victim, random_rmask(args.seed))
    res = simulate(Scenario("mbd-p-kc" if args.kc else "mbd-p", args.n, args.seed, adversary=cfg))
    roster = res.scenario.roster
    left, right = cfg.insiders(roster)
    print(f"victim {cfg.victim_identity(roster)}, insiders {left} and {right}, r_M = {short(cfg.rmask)}...")

    zs = [bytes.fromhex(m["z"]) for m in res.transcript.data["stages"][0]["rounds"][1]["messages"]]
    print(f"XOR of broadcast z values: {short(xor_all(zs))}... (zero means the check passes)")
    print(f"transcript verifies: {verify_transcript(res.transcript).ok}")

    pred = predict_divergence(res.exponents, cfg, TOY)
    for u, s in res.group_states.items():
        role = "victim" if u == cfg.victim_identity(roster) else "insider" if u in (left, right) else "honest"
        if s.key is None:
            print(f"  {u:<4} {role:<8} {s.phase.label} ({s.abort_reason})")
        else:
            print(f"  {u:<4} {role:<8} {s.phase.label} key fingerprint {short(key_fingerprint(s.key))}")
    print(f"predicted majority key fp {short(key_fingerprint(pred.honest_key))}, "
          f"victim key fp {short(key_fingerprint(pred.victim_key))}")


if __name__ == "__main__":
    main()
