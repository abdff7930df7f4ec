"""Generate planted data and run C1, C2 and C3 evaluation on it.

    python3 scripts/planted_recovery.py --out runs/planted
"""
import argparse
import json
from pathlib import Path

from stnn_ddi import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/planted")
    ap.add_argument("--rank", type=int, default=16)
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    data_dir = out / "data"
    cli.main(["gen-synth", "--n", "50", "--m", "120", "--f", "8", "--rank", "6",
              "--density", "0.08", "--seed", str(args.seed), "--out", str(data_dir)])
    inputs = ["--fingerprints", str(data_dir / "fingerprints.tsv"),
              "--triples", str(data_dir / "triples.tsv"),
              "--types", str(data_dir / "types.txt")]
    for task in ("c1", "c2", "c3"):
        report = out / f"{task}.json"
        code = cli.main(["evaluate", *inputs, "--task", task, "--folds", str(args.folds),
                         "--rank", str(args.rank), "--epochs", str(args.epochs),
                         "--seed", str(args.seed), "--out", str(report)])
        if code:
            raise SystemExit(code)
        mean = json.loads(report.read_text())["mean"]
        print(task.upper(), "  ".join(f"{k}={v:.4f}" for k, v in mean.items()))


if __name__ == "__main__":
    main()
