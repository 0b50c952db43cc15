"""Annealing-schedule ablation on the reference data.

Runs fast (1.0->0.05), default (1.0->0.1), slow (1.0->0.2) and constant tau and
prints final usage and distortion per schedule.
"""
import argparse

from lgq.trainer import NAMED_SCHEDULES, DataConfig, TrainConfig, ablation_sweep, make_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--schedules", default=",".join(NAMED_SCHEDULES))
    args = ap.parse_args()

    ds = make_dataset(DataConfig(), 8, args.seed)[1]
    rows = ablation_sweep(TrainConfig(epochs=args.epochs, seed=args.seed), "schedule",
                          args.schedules.split(","), ds)
    print(f"{'schedule':>9} {'tau_end':>7} {'active':>6} {'k_eff':>7} {'bits':>6} {'mse':>9}")
    for row in rows:
        if row.error:
            print(f"{row.label:>9} failed: {row.error}")
            continue
        r = row.final
        print(f"{row.label:>9} {r.tau:7.3f} {r.active:6d} {r.k_eff:7.2f} {r.entropy_bits:6.3f} {r.mse:9.6f}")


if __name__ == "__main__":
    main()
