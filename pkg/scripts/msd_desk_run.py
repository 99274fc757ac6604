"""Train the desk-scale mass-spring-damper DD-PINN and evaluate it on the chirp test path."""
import argparse
import csv
from pathlib import Path

from ddpinn import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="runs/msd-desk")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--preset", default="msd-100-desk")
    args = ap.parse_args()
    out = Path(args.out_dir)
    common = ["--out-dir", str(out), "--seed", str(args.seed)]
    code = cli.main(["train", args.preset, "--name", "train", *common])
    if code:
        raise SystemExit(code)
    cli.main(["evaluate", str(out / "train" / "checkpoint.json"), "--name", "eval", *common])
    with open(out / "eval" / "metrics.csv", newline="") as fh:
        m = next(csv.DictReader(fh))
    with open(out / "train" / "train_log.csv", newline="") as fh:
        last = list(csv.DictReader(fh))[-1]
    print(f"epochs {last['epoch']}, validation physics loss {float(last['val_phys']):.3e}, "
          f"scaled MSE {float(m['scaled_mse']):.3e}")


if __name__ == "__main__":
    main()
