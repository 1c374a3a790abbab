"""Train H=64 on 50 synthetic utterances and report training-split token accuracy."""
import argparse
import json

from stepsrl import experiments


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workdir", default="runs/overfit")
    ap.add_argument("--epochs", type=int, default=200)
    ap.add_argument("--l2", type=float, default=None, help="override the L2 penalty")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    res = experiments.overfit(args.workdir, args.epochs, args.l2, args.seed,
                              progress=lambda row: print(f"epoch {row['epoch']} loss {row['train_loss']:.3f}"))
    print(json.dumps({k: v for k, v in res.items() if k != "loss_curve"}, indent=2))


if __name__ == "__main__":
    main()
