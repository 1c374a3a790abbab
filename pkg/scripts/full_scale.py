"""Word2Vec-scale comparison of aux modes on a TIMIT-layout corpus."""
import argparse
import json

from stepsrl import experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--corpus", required=True)
    ap.add_argument("--embeddings", required=True, help="300-d Word2Vec .vec file")
    ap.add_argument("--workdir", default="runs/full_scale")
    ap.add_argument("--modes", nargs="+", default=["none", "DG"])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    res = experiments.full_scale(args.corpus, args.embeddings, args.workdir, args.modes, args.seed,
                                 progress=lambda row: print(json.dumps(row)))
    print(json.dumps(res, indent=2))


if __name__ == "__main__":
    main()
