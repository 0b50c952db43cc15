"""Train the desk-scale reference configuration and print the per-epoch trace."""
import argparse
import time
from pathlib import Path

from lgq.cli import run_training
from lgq.config import load_config, with_seed

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=ROOT / "configs" / "reference.cfg")
    ap.add_argument("--out", default="runs/reference")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()

    text = Path(args.config).read_text()
    cfg = with_seed(load_config(args.config), args.seed)
    t0 = time.perf_counter()
    res = run_training(cfg, Path(args.out), text)
    dt = time.perf_counter() - t0

    print(f"{'epoch':>5} {'tau':>6} {'latent_match':>13} {'active':>6} {'k_eff':>7} {'step':>8}")
    for r in res.records:
        print(f"{r.epoch:5d} {r.tau:6.3f} {r.latent_match:13.6f} {r.active:6d} {r.k_eff:7.2f} "
              f"{r.mean_center_step:8.4f}")
    first, last = res.records[0], res.records[-1]
    print(f"\nlatent_match ratio {last.latent_match / first.latent_match:.4f}, "
          f"final active {last.active}/{cfg.train.K}, {dt:.1f}s -> {args.out}")


if __name__ == "__main__":
    main()
