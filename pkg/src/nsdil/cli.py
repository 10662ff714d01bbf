"""Command-line entry point: ``nsd <subcommand> ...``.

Results go to stdout as ``key=value`` lines; diagnostics go to stderr at
the verbosity chosen by ``NSD_LOG`` (quiet, info, debug). Failures exit
non-zero after printing a single ``error-code: message`` line.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import _accel
from .config import RunConfig
from .errors import ContractError, NsdError
from .evaluation import (METHODS, ablation_grid, ablation_to_csv, blur_sanity, crop, evaluate, load_corpus,
                         manifest_text, pairs_from_manifest, reports_to_csv, robustness_sweep,
                         simulate_pairs, sweep_to_csv)
from .gallery import generate_rkg, load_rkg, save_rkg
from .lcnn import extract_drk, init_model, load_model, save_model
from .metrics import psnr, ssim
from .objective import TrainingAborted, history_to_csv, train
from .restore import load_image, restore, save_image, super_resolve
from .signal import load_grid, save_grid

log = logging.getLogger("nsdil")


def _setup_logging() -> None:
    level = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("NSD_LOG", "quiet").strip().lower(), logging.ERROR)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")


def _emit(**items) -> None:
    for k, v in items.items():
        print(f"{k}={v}")


def _run_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ContractError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        cfg.set(k.strip(), v.strip())
    for key in ("count", "epochs", "learning_rate", "noise_amplitude"):
        val = getattr(args, key, None)
        if val is not None:
            cfg.set(key, val)
    return cfg


def _write_config(cfg: RunConfig, out: Path) -> None:
    cfg.save(out.with_name(out.name + ".config"))


def _restorer(args):
    """Model (when --use-network) or DRK from --checkpoint / --drk."""
    if getattr(args, "checkpoint", None):
        model = load_model(args.checkpoint)
        return model if getattr(args, "use_network", False) else extract_drk(model)
    if getattr(args, "drk", None):
        return load_grid(args.drk)
    raise ContractError("give --checkpoint or --drk")


# --------------------------------------------------------------------------
# subcommands


def cmd_gen_rkg(args) -> None:
    cfg = _run_config(args)
    ds = generate_rkg(int(cfg["count"]), int(cfg["size"]), cfg.sigma_range,
                      float(cfg["noise_amplitude"]), args.seed)
    out = Path(args.out)
    save_rkg(ds, out)
    _write_config(cfg, out)
    _emit(path=out, count=len(ds), size=ds.size)


def cmd_train(args) -> None:
    cfg = _run_config(args)
    rkg = load_rkg(args.rkg)
    tcfg = cfg.train_config(args.seed)
    model = init_model(np.random.default_rng(args.seed), tuple(cfg["topology"]),
                       str(cfg["init_scheme"]), float(cfg["init_noise"]))
    out = Path(args.out)
    loss_csv = Path(args.loss_csv) if args.loss_csv else out.with_name(out.name + ".loss.csv")
    try:
        model, history = train(model, rkg, tcfg)
    except TrainingAborted as exc:
        save_model(exc.model, out)
        loss_csv.write_text(history_to_csv(exc.history), encoding="utf-8")
        raise
    save_model(model, out)
    loss_csv.write_text(history_to_csv(history), encoding="utf-8")
    _write_config(cfg, out)
    final = history[-1] if history else None
    _emit(path=out, loss_csv=loss_csv, epochs=len(history),
          final_total=f"{final.total:.17g}" if final else "nan")


def cmd_extract_drk(args) -> None:
    drk = extract_drk(load_model(args.checkpoint))
    save_grid(drk, args.out)
    c = (drk.shape[0] - 1) // 2
    _emit(path=args.out, rows=drk.shape[0], cols=drk.shape[1], sum=f"{drk.sum():.17g}",
          min=f"{drk.min():.17g}", max=f"{drk.max():.17g}", center=f"{drk[c, c]:.17g}")


def cmd_deblur(args) -> None:
    img = load_image(args.input)
    out = restore(img, _restorer(args), args.pad)
    save_image(out, args.out)
    _emit(path=args.out, rows=out.shape[0], cols=out.shape[1])


def cmd_sr(args) -> None:
    img = load_image(args.input)
    out = super_resolve(img, args.scale, _restorer(args), args.pad)
    save_image(out, args.out)
    _emit(path=args.out, rows=out.shape[0], cols=out.shape[1])


def cmd_simulate(args) -> None:
    cfg = _run_config(args)
    corpus = load_corpus(args.sharp_dir)
    pairs = simulate_pairs(corpus, tuple(cfg["kernel_sizes"]), cfg.sigma_range,
                           float(cfg["noise_amplitude"]), args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.tsv"
    manifest.write_text(manifest_text(pairs, float(cfg["noise_amplitude"])), encoding="utf-8")
    border = int(cfg["metric_crop"])
    lines = ["image,kernel_size,sigma1,sigma2,theta,seed,psnr_blurred,ssim_blurred"]
    for i, p in enumerate(pairs):
        a, b = crop(p.blurred, border), crop(p.sharp, border)
        s = p.kernel.spec
        lines.append(f"{p.image_path},{p.kernel_size},{s.sigma1:.6f},{s.sigma2:.6f},{s.theta:.6f},"
                     f"{p.seed},{psnr(a, b):.6f},{ssim(a, b):.6f}")
        if args.write_images:
            save_image(p.blurred, out_dir / f"blurred_{i:04d}_k{p.kernel_size}.png")
    (out_dir / "simulate.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_config(cfg, manifest)
    mean_db, in_band = blur_sanity(pairs, border)
    _emit(manifest=manifest, pairs=len(pairs), blurred_psnr_mean=f"{mean_db:.4f}",
          in_band_fraction=f"{in_band:.4f}")


def cmd_eval(args) -> None:
    cfg = _run_config(args)
    pairs = pairs_from_manifest(args.manifest, args.sharp_dir)
    methods = args.method or ["identity"]
    ckpt = None
    if any(m in ("drk", "lcnn") for m in methods):
        if args.checkpoint:
            ckpt = load_model(args.checkpoint)
        elif args.drk:
            ckpt = load_grid(args.drk)
        else:
            raise ContractError("methods drk/lcnn need --checkpoint or --drk")
    reports = [evaluate(m, pairs, ckpt, float(cfg["nsr"]), int(cfg["metric_crop"])) for m in methods]
    out = Path(args.out)
    out.write_text(reports_to_csv(reports), encoding="utf-8")
    for rep in reports:
        log.info("%s: %.6f s/image", rep.method, rep.runtime_per_image)
        _emit(**{f"{rep.method}_psnr": f"{rep.aggregate.psnr_mean:.6f}",
                 f"{rep.method}_ssim": f"{rep.aggregate.ssim_mean:.6f}"})
    _emit(path=out)


def cmd_ablate(args) -> None:
    cfg = _run_config(args)
    rkg = load_rkg(args.rkg) if args.rkg else generate_rkg(
        int(cfg["count"]), int(cfg["size"]), cfg.sigma_range, float(cfg["noise_amplitude"]), args.seed)
    corpus = load_corpus(args.sharp_dir)
    pairs = simulate_pairs(corpus, tuple(cfg["kernel_sizes"]), cfg.sigma_range,
                           float(cfg["noise_amplitude"]), args.seed)
    rows = ablation_grid(rkg, cfg.train_config(args.seed), pairs, init_seed=args.seed,
                         learning_rates=tuple(cfg["learning_rates"]),
                         init_scheme=str(cfg["init_scheme"]), init_noise=float(cfg["init_noise"]),
                         topology=tuple(cfg["topology"]))
    out = Path(args.out)
    out.write_text(ablation_to_csv(rows), encoding="utf-8")
    _write_config(cfg, out)
    _emit(path=out, rows=len(rows))


def cmd_sweep(args) -> None:
    cfg = _run_config(args)
    ckpt = load_model(args.checkpoint) if args.checkpoint else load_grid(args.drk) if args.drk else None
    if ckpt is None:
        raise ContractError("give --checkpoint or --drk")
    corpus = load_corpus(args.sharp_dir)
    rows = robustness_sweep(ckpt, corpus, seed=args.seed, sizes=tuple(cfg["kernel_sizes"]),
                            noise_amplitude=float(cfg["noise_amplitude"]))
    out = Path(args.out)
    out.write_text(sweep_to_csv(rows), encoding="utf-8")
    _write_config(cfg, out)
    _emit(path=out, **{f"drop_pct_{r.band[0]:g}_{r.band[1]:g}": f"{r.psnr_drop_pct:.4f}" for r in rows})


# --------------------------------------------------------------------------
# parser


def _add_config(p) -> None:
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")


def _add_restorer(p) -> None:
    p.add_argument("--checkpoint", help="LCNN checkpoint")
    p.add_argument("--drk", help="GRD1 restoration kernel")
    p.add_argument("--use-network", action="store_true",
                   help="run the network itself instead of its extracted kernel")
    p.add_argument("--pad", choices=("reflect", "zero"), default="reflect")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nsd", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=1, help="cap on worker threads (1 = reference path)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-rkg", help="generate a random kernel gallery")
    p.add_argument("--out", default="rkg.bin")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--noise-amplitude", dest="noise_amplitude", type=float)
    _add_config(p)
    p.set_defaults(func=cmd_gen_rkg)

    p = sub.add_parser("train", help="train the network on a gallery")
    p.add_argument("--rkg", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--loss-csv")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    _add_config(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract-drk", help="write the network's restoration kernel")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_drk)

    p = sub.add_parser("deblur", help="deblur one image")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    _add_restorer(p)
    p.set_defaults(func=cmd_deblur)

    p = sub.add_parser("sr", help="bicubic upsample then deblur")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=float, default=2.0)
    _add_restorer(p)
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("simulate", help="build a simulated blur benchmark")
    p.add_argument("--sharp-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--noise-amplitude", dest="noise_amplitude", type=float)
    p.add_argument("--write-images", action="store_true")
    _add_config(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="score methods on a simulated benchmark")
    p.add_argument("--manifest", required=True)
    p.add_argument("--sharp-dir", required=True)
    p.add_argument("--method", action="append", choices=METHODS)
    p.add_argument("--checkpoint")
    p.add_argument("--drk")
    p.add_argument("--out", required=True)
    _add_config(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and score the seven loss configurations")
    p.add_argument("--rkg", help="gallery file (generated from --seed when omitted)")
    p.add_argument("--sharp-dir", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--epochs", type=int)
    _add_config(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="score one restorer across blur levels")
    p.add_argument("--checkpoint")
    p.add_argument("--drk")
    p.add_argument("--sharp-dir", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_config(p)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.threads < 1:
        ap.error("--threads must be at least 1")
    _accel.set_threads(args.threads)
    try:
        args.func(args)
    except NsdError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"io: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
