"""Command-line entry point: ``darksight <subcommand> ...``.

Machine-readable output goes to stdout (or ``--out``); diagnostics go to
stderr. Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import curate as cur
from . import gdq, kernels
from .config import load_config
from .errors import NumericalError, StageError, ValidationError
from .lam import DEFAULT_MU_OUT, DEFAULT_UP, init_filter_net
from .pipeline import (SWEEP_PARAMS, build_model, enhance_clip, gradcheck_all,
                       illumination_losses, pipeline_run, rows_to_csv, sweep)
from .tcm import DEFAULT_GRID, l_tc
from .video_io import load_real_clip, write_dvt

log = logging.getLogger("darksight")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


def _dump(obj, out=None):
    text = json.dumps(obj, sort_keys=True) + "\n"
    _emit(text, out)


def _emit(text, out=None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _config(args):
    return load_config(getattr(args, "config", None))


# -- subcommands -----------------------------------------------------------

def cmd_gdq_scan(args):
    records = gdq.scan(args.dir, tau=args.tau, luma=args.luma, baseline=args.baseline,
                       jobs=args.jobs)
    _emit("".join(json.dumps(r, sort_keys=True) + "\n" for r in records), args.out)
    log.info("scanned %d videos", len(records))


def cmd_curate(args):
    entries = cur.curate(cur.read_manifest(args.manifest), args.min_count, args.seed)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            cur.write_manifest(entries, fh)
    else:
        cur.write_manifest(entries, sys.stdout)
    log.info("retained %d entries", len(entries))


def cmd_stats(args):
    s = cur.stats(cur.read_manifest(args.manifest), args.scenes)
    d = s.to_dict()
    d["table_row"] = s.table_row(args.name)
    d["config"] = _config(args).to_dict()
    _dump(d, args.out)


def cmd_enhance(args):
    config = _config(args)
    mu_out = args.mu_out if args.mu_out is not None else config.mu_out
    u_p = args.up if args.up is not None else config.u_p
    config = config.with_values(mu_out=mu_out, u_p=u_p)
    frames = load_real_clip(args.input)
    if frames.ndim != 4 or frames.shape[1] != 3:
        raise ValidationError(f"enhance expects T x 3 x H x W frames, got {frames.shape}")
    net = init_filter_net(np.random.default_rng(config.seed), 3, config.u_p)
    res = enhance_clip(frames, net, config.mu_out, args.filter_source,
                       args.raw_kernels or config.raw_kernels)
    write_dvt(res.enhanced, args.out)
    loss_over, loss_pix = illumination_losses(frames, res.enhanced)
    sidecar = {"gamma": res.gamma.gamma, "mu_in": res.gamma.mu_in, "mu_out": config.mu_out,
               "l_over": loss_over, "l_pix": loss_pix, "config": config.to_dict()}
    Path(str(args.out) + ".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n",
                                             encoding="utf-8")
    _dump(sidecar)


def cmd_losses_tc(args):
    config = _config(args)
    if args.grid is not None:
        config = config.with_values(grid=args.grid)
    enh, inp = load_real_clip(args.enhanced), load_real_clip(args.input)
    loss, _ = l_tc(enh, inp, config.grid)
    _dump({"l_tc": loss, "grid": config.grid, "config": config.to_dict()}, args.out)


def _read_labels(path):
    labels = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not labels:
        raise ValidationError(f"{path}: no class labels")
    return labels


def cmd_classify(args):
    config = _config(args)
    labels = None
    if args.classes:
        labels = _read_labels(args.classes)
        config = config.with_values(num_classes=len(labels))
    r = pipeline_run(args.input, config, args.label)
    out = {
        "top1": r["top1"],
        "probs": r["top5"],
        "l_total": r["l_total"],
        "losses": r["losses"],
        "config": r["config"],
    }
    if labels:
        out["top1_label"] = labels[r["top1"]]
        out["probs"] = [[i, labels[i], p] for i, p in r["top5"]]
    _dump(out, args.out)


def cmd_pipeline(args):
    t0 = time.perf_counter()
    r = pipeline_run(args.input, _config(args), args.label, timing=args.timing)
    log.info("pipeline finished in %.3f s", time.perf_counter() - t0)
    _dump(r, args.out)


def cmd_sweep(args):
    values = [v for v in args.values.split(",") if v.strip()]
    rows = sweep(args.param, values, args.input, _config(args), args.label)
    _emit(rows_to_csv(rows), args.out)


def cmd_gradcheck(args):
    report = gradcheck_all(args.seed, args.instances)
    report["config"] = _config(args).to_dict()
    _dump(report, args.out)
    if not report["passed"]:
        raise NumericalError("gradient check failed: " + json.dumps(report["max_rel_error"]))


def cmd_params(args):
    config = _config(args)
    counts = build_model(config).param_counts()
    counts["config"] = config.to_dict()
    _dump(counts, args.out)


# -- parser ----------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="darksight", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gdq", help="darkness quantification").add_subparsers(dest="gdq_cmd", required=True)
    s = g.add_parser("scan", help="darkness records for every video under a directory")
    s.add_argument("dir")
    s.add_argument("--tau", type=float, default=gdq.DEFAULT_TAU)
    s.add_argument("--out")
    s.add_argument("--luma", action="store_true", help="BT.601 luma instead of the RGB mean")
    s.add_argument("--baseline", choices=("video", "corpus"), default="video")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_gdq_scan)

    s = sub.add_parser("curate", help="filter classes and split 80/20")
    s.add_argument("--manifest", required=True)
    s.add_argument("--min-count", type=int, default=cur.DEFAULT_MIN_COUNT)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_curate)

    s = sub.add_parser("stats", help="corpus statistics of a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--scenes", type=int, help="scene count from external metadata")
    s.add_argument("--name", default="Dark-101")
    s.add_argument("--config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("enhance", help="luminance-adapt a clip")
    s.add_argument("--in", dest="input", required=True, help="DVT file or PPM directory")
    s.add_argument("--mu-out", type=float, default=None, help=f"target mean (default {DEFAULT_MU_OUT})")
    s.add_argument("--up", type=int, default=None, help=f"filter size (default {DEFAULT_UP})")
    s.add_argument("--filter-source", choices=("x", "y"), default="y")
    s.add_argument("--raw-kernels", action="store_true", help="skip per-pixel softmax")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_enhance)

    s = sub.add_parser("classify", help="classify a clip")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--config")
    s.add_argument("--classes")
    s.add_argument("--label", type=int, default=0, help="ground-truth class for the loss")
    s.add_argument("--out")
    s.set_defaults(func=cmd_classify)

    lp = sub.add_parser("losses", help="standalone losses").add_subparsers(dest="loss_cmd", required=True)
    s = lp.add_parser("tc", help="temporal consistency loss")
    s.add_argument("--enhanced", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--grid", type=int, default=None, help=f"region grid (default {DEFAULT_GRID})")
    s.add_argument("--config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_losses_tc)

    s = sub.add_parser("pipeline", help="end-to-end forward report")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--config")
    s.add_argument("--label", type=int, default=0)
    s.add_argument("--timing", action="store_true", help="include wall time in the report")
    s.add_argument("--out")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("sweep", help="parameter sweep to CSV")
    s.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--in", dest="input", required=True, nargs="+")
    s.add_argument("--config")
    s.add_argument("--label", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("gradcheck", help="finite-difference audit of every loss gradient")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--instances", type=int, default=20)
    s.add_argument("--config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("params", help="parameter counts per pathway")
    s.add_argument("--config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_params)
    return p


def _exit_code(exc):
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, (NumericalError, ArithmeticError)):
        return EXIT_NUMERICAL
    return EXIT_VALIDATION


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    log.debug("kernel backend: %s", kernels.BACKEND)
    try:
        args.func(args)
    except (StageError, ValidationError, NumericalError, ValueError, ArithmeticError, OSError) as exc:
        print(f"darksight: error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
