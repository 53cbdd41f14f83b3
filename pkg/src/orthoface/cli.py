"""Command-line interface.

Subcommands: synth, run, bench, dump-clusters, convert.
Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import METHODS, bench, rows_to_csv
from .config import load_config
from .errors import ConfigError, ImageIOError, OrthofaceError
from .fixtures import synth_fixture, truth_to_json
from .imgproc import Raster, Semantics, read_pnm, write_pnm
from .pipeline import run_pipeline

EXIT_CONFIG, EXIT_IO, EXIT_STAGE = 1, 2, 3


def _build_parser():
    p = argparse.ArgumentParser(prog="orthoface",
                                description="3D facial landmark reconstruction from a "
                                            "frontal/profile image pair")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic fixture")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--noise", type=float, default=0.0, help="profile jitter in pixels")
    sp.add_argument("--out-dir", required=True)

    rp = sub.add_parser("run", help="run the full reconstruction pipeline")
    rp.add_argument("--frontal", required=True)
    rp.add_argument("--profile", required=True)
    rp.add_argument("--config", default=None)
    rp.add_argument("--out-dir", required=True)
    rp.add_argument("--dump-clusters", action="store_true")
    rp.add_argument("--dump-windows", action="store_true")
    rp.add_argument("--dump-edges", action="store_true")
    rp.add_argument("--dump-mask", action="store_true")

    bp = sub.add_parser("bench", help="MSE / adaptation-time benchmark over fixtures")
    bp.add_argument("--seeds", type=int, default=10, help="use seeds 0..N-1")
    bp.add_argument("--seed-list", default=None, help="comma-separated explicit seeds")
    bp.add_argument("--counts", default="29,45,60")
    bp.add_argument("--methods", default=",".join(METHODS))
    bp.add_argument("--out", required=True, help="CSV output path")
    bp.add_argument("--no-timing", action="store_true",
                    help="write zero timings for byte-reproducible output")

    dp = sub.add_parser("dump-clusters", help="run micro-feature clustering on one image "
                                               "and dump the clusters")
    dp.add_argument("--image", required=True)
    dp.add_argument("--config", default=None)
    dp.add_argument("--out", required=True)

    cp = sub.add_parser("convert", help="convert PNG (or other formats) to PGM/PPM")
    cp.add_argument("--src", required=True)
    cp.add_argument("--dst", required=True)
    cp.add_argument("--mode", choices=("gray", "rgb"), default="gray")
    return p


def _cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fx = synth_fixture(args.seed, args.noise)
    write_pnm(fx.frontal, out / "frontal.pgm")
    write_pnm(fx.profile, out / "profile.pgm")
    (out / "truth.json").write_text(truth_to_json(fx))
    print(f"fixture seed={args.seed} noise={args.noise} -> {out}")
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    dumps = {name for name in ("clusters", "windows", "edges", "mask")
             if getattr(args, f"dump_{name}")}
    result = run_pipeline(args.frontal, args.profile, cfg, args.out_dir, dumps)
    r = result.report
    print(f"reconstructed {r.landmark_count} landmarks "
          f"({r.visible_count} visible / {r.hidden_count} hidden / {r.midline_count} midline), "
          f"method={r.method}, normalized MSE={r.normalized_mse:.3e}, "
          f"total {r.total_seconds:.2f}s -> {args.out_dir}")
    return 0


def _cmd_bench(args) -> int:
    if args.seed_list:
        seeds = [int(s) for s in args.seed_list.split(",") if s]
    else:
        seeds = list(range(args.seeds))
    counts = [int(c) for c in args.counts.split(",") if c]
    methods = [m for m in args.methods.split(",") if m]
    rows = bench(seeds, counts, methods, timing=not args.no_timing)
    Path(args.out).write_text(rows_to_csv(rows))
    print(f"wrote {len(rows)} rows -> {args.out}")
    return 0


def _cmd_dump_clusters(args) -> int:
    from .imgproc import StructuringElement, binarize, morph
    from .scda import clusters_to_json, micro_features_from_mask, scda_cluster

    cfg = load_config(args.config)
    img = read_pnm(args.image)
    if img.planes == 3:
        from .imgproc import rgb_to_ycbcr
        img = Raster.from_array(rgb_to_ycbcr(img).plane(2), Semantics.GRAY)
    pc = cfg.preprocess
    res = binarize(img, pc.binarize_method,
                   pc.fixed_threshold if pc.binarize_method == "fixed" else None,
                   pc.bright_foreground)
    mask = res.mask
    se = StructuringElement.box(pc.se_size)
    if pc.morph_open:
        mask = morph(mask, se, "open")
    if pc.morph_close:
        mask = morph(mask, se, "close")
    result = scda_cluster(micro_features_from_mask(mask), cfg.scda)
    Path(args.out).write_text(clusters_to_json(result))
    print(f"{len(result.clusters)} clusters, {len(result.noise)} noise points -> {args.out}")
    return 0


def _cmd_convert(args) -> int:
    try:
        from PIL import Image
    except ImportError as exc:
        raise ConfigError("convert requires Pillow (pip install orthoface[convert])") from exc
    try:
        img = Image.open(args.src)
        img = img.convert("L" if args.mode == "gray" else "RGB")
    except OSError as exc:
        raise ImageIOError(f"cannot decode {args.src}: {exc}") from exc
    import numpy as np

    arr = np.asarray(img)
    raster = Raster.from_array(arr, Semantics.GRAY if args.mode == "gray" else Semantics.RGB)
    write_pnm(raster, args.dst)
    print(f"{args.src} -> {args.dst} ({args.mode})")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "run": _cmd_run,
    "bench": _cmd_bench,
    "dump-clusters": _cmd_dump_clusters,
    "convert": _cmd_convert,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ImageIOError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OrthofaceError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
