"""Per-epoch training time of the DD-PINN against the PINC at equal collocation budgets."""
import argparse
import csv
from pathlib import Path

from ddpinn import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="runs/speed")
    ap.add_argument("--presets", nargs="+", default=["msd-100-desk", "chain-50-desk", "twolink-5-desk"])
    ap.add_argument("--epochs", type=int, default=10)
    args = ap.parse_args()
    out = Path(args.out_dir)
    for preset in args.presets:
        name = f"bench-{preset}"
        cli.main(["benchmark", preset, f"{preset}:pinc", "--epochs", str(args.epochs),
                  "--latency-steps", "500", "--out-dir", str(out), "--name", name])
        with open(out / name / "benchmark.csv", newline="") as fh:
            dd, pinc = list(csv.DictReader(fh))
        speedup = float(pinc["median_epoch_ms"]) / float(dd["median_epoch_ms"])
        print(f"{preset}: DD-PINN {float(dd['median_epoch_ms']):.0f} ms/epoch, "
              f"PINC {float(pinc['median_epoch_ms']):.0f} ms/epoch, speed-up {speedup:.2f}x")


if __name__ == "__main__":
    main()
