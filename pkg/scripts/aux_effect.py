"""Paired aux_mode=G vs none runs on the gender-shifted synthetic corpus."""
import argparse
import json

from stepsrl import experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="runs/aux_effect")
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--utterances", type=int, default=100)
    args = ap.parse_args()
    res = experiments.aux_effect(args.workdir, range(args.seeds), args.utterances,
                                 progress=lambda row: print(json.dumps(row)))
    print(json.dumps({k: v for k, v in res.items() if k != "rows"}, indent=2))


if __name__ == "__main__":
    main()
