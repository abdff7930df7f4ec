"""C1 accuracy on planted data as a function of the factor rank.

    python3 scripts/rank_sweep.py --ranks 2 4 8 16 32 64
"""
import argparse
import json
from pathlib import Path

from stnn_ddi import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/rank_sweep")
    ap.add_argument("--ranks", type=int, nargs="+", default=[2, 4, 8, 16, 32, 64])
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--folds", type=int, default=5)
    args = ap.parse_args()

    out = Path(args.out)
    data_dir = out / "data"
    cli.main(["gen-synth", "--n", "50", "--m", "120", "--f", "8", "--rank", "6",
              "--density", "0.08", "--out", str(data_dir)])
    inputs = ["--fingerprints", str(data_dir / "fingerprints.tsv"),
              "--triples", str(data_dir / "triples.tsv"),
              "--types", str(data_dir / "types.txt")]
    print("rank\tauc\taupr\tacc\tpre")
    for rank in args.ranks:
        report = out / f"c1_r{rank}.json"
        code = cli.main(["evaluate", *inputs, "--task", "c1", "--folds", str(args.folds),
                         "--rank", str(rank), "--epochs", str(args.epochs), "--out", str(report)])
        if code:
            raise SystemExit(code)
        mean = json.loads(report.read_text())["mean"]
        print(rank, *(f"{mean[k]:.4f}" for k in ("auc", "aupr", "acc", "pre")), sep="\t")


if __name__ == "__main__":
    main()
