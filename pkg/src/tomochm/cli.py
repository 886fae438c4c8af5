"""Command line interface: one TOML config, one subcommand per stage.

Machine outputs go to files; logs go to stderr; stdout carries only
--dry-run plans and report summaries. Exit codes: 0 success, 2 invalid
configuration, 3 I/O failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import datapipe, evalkit, specest, stackio, tomoproc
from .config import (ConfigError, config_hash, dump_toml, load_config,
                     resolve_threads, set_override, validate_config)
from .model import HeightRaster, synthetic_geometry
from .simulate import SceneSpec, synthesize_slc_stack
from .specest import NumericalError, VerticalGrid

log = logging.getLogger("tomochm")

EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 2, 3, 4


def _plan(args, action, **details):
    """Honor --dry-run: print the resolved plan and skip the work."""
    if args.dry_run:
        print(json.dumps({"action": action, **details}, indent=2,
                         default=str))
        return True
    log.info("%s: %s", action, details)
    return False


def _load_dtm(path):
    return stackio.load_raster(path, kind="DTM")


def _grid_from_cfg(cfg):
    g = cfg["grid"]
    return VerticalGrid(g["z_min"], g["z_max"], g["dz"])


def cmd_simulate(cfg, args):
    sim = cfg["simulate"]
    out = Path(args.out or cfg["output"]["dir"])
    chash = config_hash(cfg)
    if _plan(args, "simulate", out=out, shape=sim["shape"],
             n_images=sim["n_images"], seed=sim["rng_seed"],
             config_hash=chash):
        return 0
    geometry = synthetic_geometry(
        sim["n_images"], sim["resolution_m"], sim["wavelength_m"],
        math.radians(sim["incidence_deg"]), sim["reference_range_m"],
        layout=sim["layout"], heading_label=cfg["stack"]["heading"],
        polarization=cfg["stack"]["polarization"])
    scene = SceneSpec.from_dict(sim)
    stack, dtm, chm = synthesize_slc_stack(scene, geometry)
    stackio.save_stack(stack, out, config_hash=chash)
    truth = out / "truth"
    truth.mkdir(exist_ok=True)
    stackio.save_raster(dtm, truth / "dtm.npy")
    stackio.save_raster(chm, truth / "chm.npy")
    dump_toml({"config_hash": chash, "scene": scene.to_dict()},
              out / "scene.toml")
    log.info("wrote stack (%d images, %s) to %s",
             stack.n_images, stack.shape, out)
    return 0


def cmd_steer(cfg, args):
    out = Path(args.out or cfg["output"]["dir"])
    if _plan(args, "steer", stack=args.stack, dtm=args.dtm, out=out):
        return 0
    stack = stackio.load_stack(args.stack)
    dtm = _load_dtm(args.dtm)
    steered = tomoproc.ground_steer(stack, dtm)
    stackio.save_stack(steered, out, config_hash=config_hash(cfg))
    return 0


def cmd_covariance(cfg, args):
    out = Path(args.out or cfg["output"]["dir"])
    window = tuple(cfg["tomoproc"]["window"])
    normalized = cfg["tomoproc"]["normalized"]
    threads = resolve_threads(cfg, args.threads)
    if _plan(args, "covariance", stack=args.stack, window=window,
             normalized=normalized, out=out, threads=threads):
        return 0
    stack = stackio.load_stack(args.stack)
    if args.dtm:
        stack = tomoproc.ground_steer(stack, _load_dtm(args.dtm))
    cov = tomoproc.estimate_covariance(stack, window, normalized, threads)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "cov.npy", "wb") as fh:
        np.save(fh, cov.data.astype(np.complex64), allow_pickle=False)
    meta = {"schema": 1, "window": list(window), "normalized": normalized,
            "shape": list(cov.data.shape), "config_hash": config_hash(cfg)}
    (out / "cov.json").write_text(json.dumps(meta, indent=2) + "\n")
    return 0


def _build_features(cfg, args, threads):
    stack = stackio.load_stack(args.stack)
    if args.dtm:
        stack = tomoproc.ground_steer(stack, _load_dtm(args.dtm))
    window = tuple(cfg["tomoproc"]["window"])
    cov = tomoproc.estimate_covariance(
        stack, window, cfg["tomoproc"]["normalized"], threads)
    features = tomoproc.extract_features(cov)
    n_slc = cfg["tomoproc"]["n_slc"]
    if n_slc and n_slc < stack.n_images:
        selection = tomoproc.select_subset(n_slc, stack.n_images,
                                           cfg["tomoproc"]["seed"])
        features = tomoproc.slice_features(features, selection)
    return stack, features


def cmd_features(cfg, args):
    out = Path(args.out or cfg["output"]["dir"])
    threads = resolve_threads(cfg, args.threads)
    if _plan(args, "features", stack=args.stack, dtm=args.dtm,
             window=cfg["tomoproc"]["window"], n_slc=cfg["tomoproc"]["n_slc"],
             seed=cfg["tomoproc"]["seed"], out=out, threads=threads):
        return 0
    stack, features = _build_features(cfg, args, threads)
    tomoproc.save_features(
        features, out, cfg["tomoproc"]["window"],
        cfg["tomoproc"]["normalized"],
        stack_hash=stackio.stack_digest(stack),
        config_hash=config_hash(cfg))
    log.info("wrote %d-channel features to %s", features.n_channels, out)
    return 0


def cmd_subset(cfg, args):
    total = args.total
    if total is None and args.stack:
        total = stackio.load_stack(args.stack).n_images
    if total is None:
        raise ConfigError("subset needs --total or --stack")
    n = args.n or cfg["tomoproc"]["n_slc"]
    seed = cfg["tomoproc"]["seed"] if args.seed is None else args.seed
    if not n:
        raise ConfigError("subset needs --n (or tomoproc.n_slc)")
    out = Path(args.out or Path(cfg["output"]["dir"]) / "subset.json")
    if _plan(args, "subset", n=n, total=total, seed=seed, out=out):
        return 0
    selection = tomoproc.select_subset(n, total, seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {"schema": 1, "n": selection.n, "total": total,
               "seed": selection.seed, "indices": list(selection.indices),
               "config_hash": config_hash(cfg)}
    out.write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def cmd_split(cfg, args):
    ds = cfg["dataset"]
    if args.shape:
        shape = tuple(args.shape)
    elif args.features:
        features, _ = tomoproc.load_features(args.features)
        shape = features.shape
    else:
        raise ConfigError("split needs --shape or --features")
    out = Path(args.out or Path(cfg["output"]["dir"]) / "split.json")
    if _plan(args, "split", shape=shape, patch=ds["patch_size"],
             fractions=ds["fractions"], out=out):
        return 0
    assignment = datapipe.quadrant_split(shape, ds["patch_size"],
                                         tuple(ds["fractions"]))
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {"schema": 1, "raster_shape": list(shape),
               "patch_size": assignment.patch_size,
               "fractions": list(assignment.fractions),
               "counts": assignment.counts(),
               "labels": assignment.labels.tolist(),
               "config_hash": config_hash(cfg)}
    out.write_text(json.dumps(payload, indent=2) + "\n")
    return 0


def _load_split(path):
    payload = json.loads(Path(path).read_text())
    return datapipe.SplitAssignment(
        tuple(payload["raster_shape"]), payload["patch_size"],
        np.asarray(payload["labels"], dtype=np.int8),
        tuple(payload["fractions"]))


def cmd_scale(cfg, args):
    out = Path(args.out or Path(cfg["output"]["dir"]) / "scaler.json")
    if _plan(args, "scale", features=args.features, split=args.split,
             out=out):
        return 0
    features, _ = tomoproc.load_features(args.features)
    assignment = _load_split(args.split)
    scaler = datapipe.fit_scaler(features, assignment)
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {"schema": 1, "mins": [float(v) for v in scaler.mins],
               "maxs": [float(v) for v in scaler.maxs],
               "fitted_on": scaler.fitted_on,
               "config_hash": config_hash(cfg)}
    out.write_text(json.dumps(payload, indent=2) + "\n")
    if args.apply:
        scaled = datapipe.apply_scaler(features, scaler)
        with open(args.apply, "wb") as fh:
            np.save(fh, scaled.astype(np.float32), allow_pickle=False)
    return 0


def _build_dataset(cfg, features, truth, assignment, scaler):
    ds = cfg["dataset"]
    scaled = datapipe.apply_scaler(features, scaler)
    mask = datapipe.height_mask(truth, ds["height_filter_m"])
    return datapipe.patchify(scaled, truth, mask, assignment,
                             ds["patch_size"], ds["stride"])


def cmd_export(cfg, args):
    ds = cfg["dataset"]
    out = Path(args.out or cfg["output"]["dir"])
    if _plan(args, "export", features=args.features, truth=args.truth,
             patch=ds["patch_size"], stride=ds["stride"],
             height_filter_m=ds["height_filter_m"], out=out):
        return 0
    features, meta = tomoproc.load_features(args.features)
    truth = stackio.load_raster(args.truth, kind="CHM")
    assignment = (_load_split(args.split) if args.split else
                  datapipe.quadrant_split(features.shape, ds["patch_size"],
                                          tuple(ds["fractions"])))
    scaler = (_load_scaler(args.scaler) if args.scaler else
              datapipe.fit_scaler(features, assignment))
    dataset = _build_dataset(cfg, features, truth, assignment, scaler)
    datapipe.export_dataset(dataset, out, scaler=scaler,
                            subset_indices=meta.get("subset_indices"),
                            config_hash=config_hash(cfg),
                            height_filter_m=ds["height_filter_m"])
    log.info("exported %d patches to %s", dataset.features.shape[0], out)
    return 0


def _load_scaler(path):
    payload = json.loads(Path(path).read_text())
    return datapipe.ScalerParams(np.asarray(payload["mins"]),
                                 np.asarray(payload["maxs"]),
                                 payload.get("fitted_on", "train"))


def cmd_patchify(cfg, args):
    if not args.split or not args.scaler:
        raise ConfigError("patchify needs --split and --scaler "
                          "(use export for the one-shot path)")
    return cmd_export(cfg, args)


def cmd_baseline(cfg, args):
    out = Path(args.out or cfg["output"]["dir"])
    bl = cfg["baseline"]
    threads = resolve_threads(cfg, args.threads)
    if _plan(args, "baseline", stack=args.stack, dtm=args.dtm,
             method=bl["method"], rel_threshold_db=bl["rel_threshold_db"],
             out=out, threads=threads):
        return 0
    stack = stackio.load_stack(args.stack)
    dtm = _load_dtm(args.dtm)
    grid = _grid_from_cfg(cfg)
    pred = specest.tomo_chm_baseline(
        stack, dtm, tuple(cfg["tomoproc"]["window"]), grid,
        bl["method"], bl["rel_threshold_db"], bl["loading_beta"], threads)
    out.mkdir(parents=True, exist_ok=True)
    stackio.save_raster(pred, out / "chm_pred.npy")

    r, c = args.sample_pixel if args.sample_pixel else \
        (stack.shape[0] // 2, stack.shape[1] // 2)
    steered = tomoproc.ground_steer(stack, dtm)
    cov = tomoproc.estimate_covariance(
        steered, tuple(cfg["tomoproc"]["window"]), threads=threads)
    kz = stack.geometry.kz
    if bl["method"] == "capon":
        profile = specest.capon_spectrum(cov.data[r, c], kz, grid,
                                         bl["loading_beta"])
    else:
        profile = specest.beamforming_spectrum(cov.data[r, c], kz, grid)
    lines = ["z_m,power"]
    lines += [f"{z:.6g},{p:.10g}"
              for z, p in zip(grid.values, profile.values)]
    (out / "profile_sample.csv").write_text("\n".join(lines) + "\n")
    return 0


def cmd_eval(cfg, args):
    out = Path(args.out or Path(cfg["output"]["dir"]) / "report.json")
    hf = (cfg["dataset"]["height_filter_m"] if args.height_filter is None
          else args.height_filter)
    if _plan(args, "eval", pred=args.pred, dataset=args.dataset,
             split=args.split, height_filter_m=hf, out=out):
        return 0
    dataset, index = datapipe.load_dataset(args.dataset)
    metrics = _evaluate_split(dataset, args.pred, args.split, hf,
                              out.parent, write_mosaics=True)
    subset = index.get("subset_indices")
    val_mae = None
    if args.pred_val:
        val = _evaluate_split(dataset, args.pred_val, "val", hf,
                              out.parent, write_mosaics=False)
        val_mae = val["mae"]
    report = evalkit.EvalReport(
        test_mae=metrics["mae"], test_rmse=metrics["rmse"],
        test_r2=metrics["r2"], val_mae=val_mae,
        n_slc=len(subset) if subset else index["n_channels"] // 3,
        polarization=cfg["stack"]["polarization"],
        heading=cfg["stack"]["heading"], height_filter_m=hf,
        model=args.model, config_hash=config_hash(cfg),
        border_excluded_px=metrics["border_excluded_px"])
    out.parent.mkdir(parents=True, exist_ok=True)
    evalkit.write_report(report, out, csv_path=args.csv)
    print(f"test_mae={report.test_mae:.4f} test_rmse={report.test_rmse:.4f} "
          f"test_r2={report.test_r2:.4f}")
    return 0


def _evaluate_split(dataset, pred_path, split, height_filter_m, out_dir,
                    write_mosaics):
    preds = np.load(pred_path, allow_pickle=False)
    _, targets, mask, positions = dataset.split_arrays(split)
    if preds.shape[0] != targets.shape[0]:
        raise ConfigError(
            f"prediction count {preds.shape[0]} != {split} patch count "
            f"{targets.shape[0]}")
    if preds.ndim == 3:
        preds = preds[:, None, :, :]
    p = dataset.patch_size
    eff_mask = mask
    if height_filter_m > 0:
        eff_mask = mask & (targets >= height_filter_m)
    crops_p, cpos = evalkit.central_crops(preds, positions, p)
    crops_t, _ = evalkit.central_crops(targets, positions, p)
    crops_m, _ = evalkit.central_crops(eff_mask, positions, p)
    mosaic_pred = evalkit.mosaic_reconstruction(crops_p, cpos,
                                                dataset.raster_shape)
    mosaic_truth = evalkit.mosaic_reconstruction(crops_t, cpos,
                                                 dataset.raster_shape)
    mosaic_mask = evalkit.mosaic_reconstruction(
        crops_m.astype(np.float64), cpos, dataset.raster_shape)
    valid = np.isfinite(mosaic_mask) & (mosaic_mask > 0)
    result = {
        "mae": evalkit.mae(mosaic_pred, mosaic_truth, valid),
        "rmse": evalkit.rmse(mosaic_pred, mosaic_truth, valid),
        "r2": evalkit.r2(mosaic_pred, mosaic_truth, valid),
        "border_excluded_px": int(np.isnan(mosaic_mask).sum()),
    }
    if write_mosaics:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, arr in (("mosaic_pred", mosaic_pred),
                          ("mosaic_truth", mosaic_truth)):
            with open(out_dir / f"{name}.npy", "wb") as fh:
                np.save(fh, arr.astype(np.float32), allow_pickle=False)
    return result


def cmd_report(cfg, args):
    report = evalkit.read_report(args.json)
    if _plan(args, "report", json=args.json, csv=args.csv):
        return 0
    if args.csv:
        evalkit.write_report(report, args.json, csv_path=args.csv)
    d = report.to_dict()
    print(", ".join(f"{k}={v}" for k, v in d.items() if v not in (None, "")))
    return 0


def _add_common(sub):
    sub.add_argument("--config", help="TOML run configuration")
    sub.add_argument("--dry-run", action="store_true",
                     help="print the resolved plan without writing")
    sub.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: TOMOCHM_THREADS or all "
                          "cores)")
    sub.add_argument("--out", help="output file or directory")
    sub.add_argument("--set", action="append", default=[],
                     metavar="SECTION.KEY=VALUE",
                     help="override a config value (repeatable; flags win)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tomochm",
        description="Partial-tomography canopy height pipeline")
    subs = parser.add_subparsers(dest="command", required=True)

    sp = subs.add_parser("simulate", help="synthesize an SLC stack + truth")
    _add_common(sp)

    sp = subs.add_parser("steer", help="remove terrain phase with a DTM")
    _add_common(sp)
    sp.add_argument("--stack", required=True, help="input stack directory")
    sp.add_argument("--dtm", required=True, help="DTM raster (.npy)")

    sp = subs.add_parser("covariance", help="multilooked covariance field")
    _add_common(sp)
    sp.add_argument("--stack", required=True)
    sp.add_argument("--dtm", help="steer with this DTM first")

    sp = subs.add_parser("features", help="covariance feature stack (3n ch)")
    _add_common(sp)
    sp.add_argument("--stack", required=True)
    sp.add_argument("--dtm", help="steer with this DTM first")

    sp = subs.add_parser("subset", help="deterministic image subset")
    _add_common(sp)
    sp.add_argument("--n", type=int, help="subset size")
    sp.add_argument("--total", type=int, help="stack size N")
    sp.add_argument("--stack", help="read N from this stack directory")
    sp.add_argument("--seed", type=int, help="selection seed")

    sp = subs.add_parser("split", help="train/val/test band assignment")
    _add_common(sp)
    sp.add_argument("--features", help="features directory (for the shape)")
    sp.add_argument("--shape", type=int, nargs=2, metavar=("H", "W"))

    sp = subs.add_parser("scale", help="fit the train-split min-max scaler")
    _add_common(sp)
    sp.add_argument("--features", required=True)
    sp.add_argument("--split", required=True, help="split.json path")
    sp.add_argument("--apply", help="also write scaled features here (.npy)")

    for name, hlp in (("patchify", "cut patches with existing split/scaler"),
                      ("export", "one-shot dataset build + export")):
        sp = subs.add_parser(name, help=hlp)
        _add_common(sp)
        sp.add_argument("--features", required=True)
        sp.add_argument("--truth", required=True, help="CHM truth (.npy)")
        sp.add_argument("--split", help="split.json (export: optional)")
        sp.add_argument("--scaler", help="scaler.json (export: optional)")

    sp = subs.add_parser("baseline", help="full-tomography CHM comparator")
    _add_common(sp)
    sp.add_argument("--stack", required=True)
    sp.add_argument("--dtm", required=True)
    sp.add_argument("--sample-pixel", type=int, nargs=2, metavar=("R", "C"),
                    help="pixel for profile_sample.csv (default: center)")

    sp = subs.add_parser("eval", help="strided center-crop evaluation")
    _add_common(sp)
    sp.add_argument("--pred", required=True, help="(num,1,P,P) predictions")
    sp.add_argument("--dataset", required=True, help="dataset directory")
    sp.add_argument("--split", default="test", choices=("train", "val",
                                                        "test"))
    sp.add_argument("--height-filter", type=float, default=None,
                    help="evaluate only where truth >= this height (m)")
    sp.add_argument("--pred-val", help="validation predictions for val_mae")
    sp.add_argument("--model", default="", help="model name for the report")
    sp.add_argument("--csv", help="append the report row to this CSV")

    sp = subs.add_parser("report", help="print/append a saved report")
    _add_common(sp)
    sp.add_argument("--json", required=True, help="report.json path")
    sp.add_argument("--csv", help="append the report row to this CSV")

    return parser


_HANDLERS = {
    "simulate": cmd_simulate,
    "steer": cmd_steer,
    "covariance": cmd_covariance,
    "features": cmd_features,
    "subset": cmd_subset,
    "split": cmd_split,
    "scale": cmd_scale,
    "patchify": cmd_patchify,
    "export": cmd_export,
    "baseline": cmd_baseline,
    "eval": cmd_eval,
    "report": cmd_report,
}


def _coerce(text):
    for parse in (int, float):
        try:
            return parse(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if text[:1] in "[{":
        try:
            return json.loads(text)
        except json.JSONDecodeError:
            pass
    return text


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        for override in args.set:
            if "=" not in override:
                raise ConfigError(f"--set expects KEY=VALUE, got {override!r}")
            key, _, value = override.partition("=")
            set_override(cfg, key.strip(), _coerce(value.strip()))
        validate_config(cfg)
        return _HANDLERS[args.command](cfg, args)
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError,
            OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
