"""Command line entry point: train, verify, sweep, export-latents."""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from contextlib import nullcontext
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .assignment import assign, tau_at_epoch
from .baselines import fsq_grid, fsq_quantize
from .codebook import CheckpointError, drift_report, load_checkpoint, save_checkpoint, write_drift_csv
from .config import ConfigError, RunConfig, format_config, load_config, with_seed
from .metrics import PSNR_CAP, RECORD_FIELDS, _fmt, write_latent_export, write_records_csv, write_records_json
from .oracles import SELECTORS, run_suite
from .quantizer import argmax_lowest
from .trainer import (SWEEP_AXES, Dataset, DivergenceError, GradientCheckError, ModelState, TrainResult,
                      ablation_sweep, evaluate, make_dataset, train)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_ORACLE = 4
EXIT_IO = 5

log = logging.getLogger("lgq")

SCHEDULE_NOTE = ("'constant' holds tau at tau_start for every epoch; the ablation table this mirrors "
                 "labels its fixed-temperature row '1.0 -> 0.1'")


def _thread_limit():
    n = os.environ.get("LGQ_THREADS")
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(int(n))


def split_validation(ds: Dataset, fraction: float) -> tuple[Dataset, Dataset | None]:
    if fraction <= 0:
        return ds, None
    n_val = int(round(len(ds.x) * fraction))
    cut = len(ds.x) - n_val
    part = lambda s: Dataset(ds.x[s], ds.latents[s], ds.labels[s], ds.mode)  # noqa: E731
    return part(slice(0, cut)), part(slice(cut, None))


def _usage_summary(ev) -> dict:
    u = ev.usage
    return {"mse": ev.mse, "psnr": min(ev.psnr, PSNR_CAP),
            "active": u.active, "utilization": u.utilization, "k_eff": u.k_eff, "entropy_bits": u.entropy_bits}


def run_training(cfg: RunConfig, out: Path, config_text: str | None = None) -> TrainResult:
    """Train one configuration and write every artifact into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    tc = cfg.train
    _, full = make_dataset(cfg.data, tc.C, tc.seed)
    train_ds, val_ds = split_validation(full, cfg.val_fraction)
    if config_text is not None:
        (out / "config.txt").write_text(config_text)
    (out / "resolved_config.txt").write_text(format_config(cfg))
    (out / "run_info.json").write_text(json.dumps({
        "lgq": __version__, "numpy": np.__version__, "python": platform.python_version(),
        "seed": tc.seed, "rng": "PCG64"}, indent=1) + "\n")

    result = train(tc, train_ds)
    if result.records:
        write_records_csv(result.records, out / "records.csv")
        write_records_json(result.records, out / "records.json")
    else:
        (out / "records.csv").write_text(",".join(RECORD_FIELDS) + "\n")
        (out / "records.json").write_text("[]\n")
    cb = result.codebook
    if cb is not None:
        save_checkpoint(cb, out / "codebook.lgqc")
        if cfg.export_drift:
            write_drift_csv(drift_report(cb), out / "drift_codes.csv", out / "drift_epochs.csv")
    if result.state.encoder is not None:
        np.savez(out / "linear_maps.npz", encoder=result.state.encoder, decoder=result.state.decoder)

    tau = tau_at_epoch(tc.schedule, max(tc.epochs, 1))
    summary = {"quantizer": tc.quantizer, "epochs": tc.epochs,
               "train": _usage_summary(evaluate(tc, result.state, train_ds.x, tau))}
    if val_ds is not None and len(val_ds.x):
        summary["validation"] = _usage_summary(evaluate(tc, result.state, val_ds.x, tau))
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    if cfg.export_latents:
        export_latents(tc, result.state, full.x, out / "latents.csv", tau)
    return result


def export_latents(tc, state, x, path, tau) -> int:
    z = state.encode(x)
    if tc.quantizer == "fsq":
        spec = tc.fsq_spec()
        q = fsq_quantize(z, spec) if len(z) else None
        return write_latent_export(path, z, [] if q is None else q.indices, fsq_grid(spec))
    centers = state.codebook.centers
    idx = argmax_lowest(assign(z, centers, tau, tc.kernel).probs) if len(z) else np.zeros(0, dtype=np.int64)
    return write_latent_export(path, z, idx, centers)


def cmd_train(args) -> int:
    try:
        text = Path(args.config).read_text()
        cfg = with_seed(load_config(args.config), args.seed)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        result = run_training(cfg, out, text)
    except (DivergenceError, GradientCheckError) as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if result.records:
        r = result.records[-1]
        print(f"final mse={r.mse:.6g} active={r.active} k_eff={r.k_eff:.4g} entropy_bits={r.entropy_bits:.4g}")
    else:
        print("no epochs run")
    return EXIT_OK


def cmd_verify(args) -> int:
    reports = run_suite(args.selector, args.seed)
    lines = [r.to_json() for r in reports]
    for line in lines:
        print(line)
    if args.out:
        Path(args.out).write_text("\n".join(lines) + "\n")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_ORACLE


def _safe_label(axis: str, value: str) -> str:
    return f"{axis}=" + "".join(ch if ch.isalnum() or ch in ".-_" else "_" for ch in value)


def cmd_sweep(args) -> int:
    try:
        cfg = with_seed(load_config(args.config), args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        print("no sweep values given", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tc = cfg.train
    _, ds = make_dataset(cfg.data, tc.C, tc.seed)
    rows = ablation_sweep(tc, args.axis, values, ds)
    with open(out / "comparison.csv", "w") as fh:
        fh.write(",".join(("label",) + RECORD_FIELDS + ("error",)) + "\n")
        for row in rows:
            sub = out / _safe_label(args.axis, row.label)
            sub.mkdir(exist_ok=True)
            rec = row.final
            if row.config is not None:
                (sub / "resolved_config.txt").write_text(format_config(replace(cfg, train=row.config)))
            if rec is not None:
                write_records_csv(row.result.records, sub / "records.csv")
                write_records_json(row.result.records, sub / "records.json")
                if row.result.codebook is not None:
                    save_checkpoint(row.result.codebook, sub / "codebook.lgqc")
                cells = [_fmt(n, getattr(rec, n)) for n in RECORD_FIELDS]
            else:
                cells = [""] * len(RECORD_FIELDS)
            err = (row.error or "").replace(",", ";")
            fh.write(",".join([row.label] + cells + [err]) + "\n")
    meta = {"axis": args.axis, "values": values, "seed": tc.seed}
    if args.axis == "schedule" and "constant" in values:
        meta["note"] = SCHEDULE_NOTE
    (out / "sweep_meta.json").write_text(json.dumps(meta, indent=1) + "\n")
    failed = sum(r.error is not None for r in rows)
    print(f"sweep {args.axis}: {len(rows) - failed} ok, {failed} failed")
    return EXIT_OK if failed == 0 else EXIT_DIVERGENCE


def cmd_export_latents(args) -> int:
    try:
        cfg = with_seed(load_config(args.config), args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    tc = cfg.train
    try:
        cb = load_checkpoint(args.checkpoint)
    except (OSError, CheckpointError) as exc:
        print(f"cannot load checkpoint {args.checkpoint}: {exc}", file=sys.stderr)
        return EXIT_IO
    state = ModelState(cb)
    if cfg.data.mode == "linear_autoencoder":
        maps = Path(args.maps) if args.maps else Path(args.checkpoint).with_name("linear_maps.npz")
        try:
            with np.load(maps) as npz:
                state = ModelState(cb, npz["encoder"], npz["decoder"])
        except OSError as exc:
            print(f"cannot load linear maps {maps}: {exc}", file=sys.stderr)
            return EXIT_IO
    _, ds = make_dataset(cfg.data, cb.C, tc.seed)
    tau = tau_at_epoch(tc.schedule, max(tc.epochs, 1))
    try:
        n = export_latents(replace(tc, K=cb.K, C=cb.C), state, ds.x, args.out, tau)
    except OSError as exc:
        print(f"I/O error writing {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {n} rows to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lgq", description="Soft-to-hard vector quantization experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one configuration")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("verify", help="run the theory oracles")
    v.add_argument("selector", nargs="?", default="all", choices=("all",) + SELECTORS)
    v.add_argument("--selector", dest="selector_flag", choices=("all",) + SELECTORS)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="ablation sweep along one axis")
    s.add_argument("--config", required=True)
    s.add_argument("--axis", required=True, choices=SWEEP_AXES)
    s.add_argument("--values", required=True, help="comma separated, e.g. fast,default,slow or 0:0,0.005:0.005")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("export-latents", help="dump latents with their codes and the active centers")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--maps", help="linear_maps.npz for linear_autoencoder runs")
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_export_latents)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "selector_flag", None):
        args.selector = args.selector_flag
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    with _thread_limit():
        return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
