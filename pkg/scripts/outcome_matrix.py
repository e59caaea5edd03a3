"""Outcome classification counts for every protocol, honest and under attack.

    python scripts/outcome_matrix.py --seeds 200 --n 4 5 8
"""
import argparse
from collections import Counter

from gkelab.adversary import AdversaryConfig
from gkelab.sim import PROTOCOLS, Scenario, check_agreement, random_rmask, run_scenario


def scenarios(protocol, n, seed):
    yield "honest", Scenario(protocol, n, seed)
    victim = seed % n + 1
    yield "group-attack", Scenario(protocol, n, seed, adversary=AdversaryConfig(victim, random_rmask(seed)))
    if PROTOCOLS[protocol][1]:
        victim = seed % (n - 1) + 1
        yield "subgroup-attack", Scenario(
            protocol, n, seed, adversary=AdversaryConfig(victim, random_rmask(seed), "subgroup"))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=100)
    parser.add_argument("--n", type=int, nargs="+", default=[4, 5, 8])
    args = parser.parse_args()

    print(f"{'protocol':<10} {'n':>2} {'case':<16} outcomes")
    for protocol in PROTOCOLS:
        for n in args.n:
            rows: dict[str, Counter] = {}
            for seed in range(args.seeds):
                for case, sc in scenarios(protocol, n, seed):
                    rows.setdefault(case, Counter())[check_agreement(run_scenario(sc)).classification] += 1
            for case, counts in rows.items():
                summary = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
                print(f"{protocol:<10} {n:>2} {case:<16} {summary}")


if __name__ == "__main__":
    main()
