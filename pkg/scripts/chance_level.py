"""Untrained model accuracy on the synthetic test split against 1/V."""
import argparse
import json

from stepsrl import experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="runs/chance")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(json.dumps(experiments.chance_level(args.workdir, args.seed), indent=2))


if __name__ == "__main__":
    main()
