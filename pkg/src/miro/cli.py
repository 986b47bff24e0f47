"""Command-line entry point: simulate, train, infer, evaluate, bench.

Every run writes a manifest.json (atomically, at the end) recording the
command, the resolved configuration, the seed, input/output paths and the
wall-clock duration. On failure all partial outputs are removed and the
exit code is non-zero. The MIRO_SEED environment variable overrides any
configured seed.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Optional

import numpy as np

from . import __version__
from .cluster import DbscanConfig, dbscan, run_pipeline
from .core import LabeledCloud, PointCloud, Rect, read_cloud, write_cloud
from .graph import GraphConfig
from .metrics import MetricConfig, evaluate_pair
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .render import write_svg
from .simulate import (AugmentSpec, Background, SeedCluster, apply_blinking,
                       augment_dataset, gen_pair_test, generate,
                       generate_preset_cloud, preset_names, spec_from_dict)
from .train import TrainConfig, fit

DEFAULT_CONFIG = {
    "seed": 0,
    "graph": {"delta_mode": "percentile", "delta": 0.0, "percentile": 95.0, "n_eigs": 5},
    "model": {"latent_dim": 256, "n_steps": 8, "n_classes": 0, "n_eigs": 5, "k_star": None},
    "train": {"epochs": 50, "batch_size": 8, "learning_rate": 1e-3, "optimizer": "adam",
              "momentum": 0.9, "beta1": 0.9, "beta2": 0.999, "eps_opt": 1e-8,
              "k_star": None, "alpha": 1.0, "seed": 0, "checkpoint_every": 10,
              "displacement_norm": "l1", "clip_norm": None,
              "class_weighting": "none"},
    "dbscan": {"eps": 12.5, "min_pts": 3},
    "dbscan_coarse": {"eps": 50.0, "min_pts": 3},
    "metric": {"xi": 50.0},
    "simulate": {"preset": "scenario8", "blinking": False, "scenario": None},
}


class CliError(RuntimeError):
    pass


def _validate_section(name: str, given: dict, defaults: dict) -> dict:
    out = dict(defaults)
    for key, val in given.items():
        if key not in defaults:
            raise CliError(f"config: unknown key {name}.{key}")
        ref = defaults[key]
        if ref is not None and val is not None and not isinstance(val, type(ref)) \
                and not (isinstance(ref, float) and isinstance(val, int)):
            raise CliError(f"config: {name}.{key} should be {type(ref).__name__}, "
                           f"got {type(val).__name__}")
        out[key] = val
    return out


def load_config(path: Optional[str]) -> dict:
    cfg = {k: (dict(v) if isinstance(v, dict) else v) for k, v in DEFAULT_CONFIG.items()}
    if path is None:
        return cfg
    with open(path, "r", encoding="utf-8") as fh:
        given = json.load(fh)
    if not isinstance(given, dict):
        raise CliError("config: top level must be a JSON object")
    for key, val in given.items():
        if key not in DEFAULT_CONFIG:
            raise CliError(f"config: unknown section {key!r}")
        if isinstance(DEFAULT_CONFIG[key], dict):
            if not isinstance(val, dict):
                raise CliError(f"config: section {key!r} must be an object")
            if key == "simulate":
                scen = val.pop("scenario", None)
                cfg[key] = _validate_section(key, val, {k: v for k, v in
                                                        DEFAULT_CONFIG[key].items()
                                                        if k != "scenario"})
                cfg[key]["scenario"] = scen
            else:
                cfg[key] = _validate_section(key, val, DEFAULT_CONFIG[key])
        else:
            cfg[key] = val
    return cfg


def resolve_seed(cfg_seed: int, arg_seed: Optional[int]) -> int:
    env = os.environ.get("MIRO_SEED")
    if env is not None:
        return int(env)
    if arg_seed is not None:
        return arg_seed
    return cfg_seed


class RunContext:
    """Tracks created outputs; removes them on failure, writes the manifest
    (atomically) on success. Use as a context manager."""

    def __init__(self, out_dir: str, command: str, config: dict, seed: int,
                 inputs: Optional[list[str]] = None):
        self.out_dir = out_dir
        self.command = command
        self.config = config
        self.seed = seed
        self.inputs = inputs or []
        self.created: list[str] = []
        self.globs: list[str] = []
        self.t0 = time.monotonic()
        os.makedirs(out_dir, exist_ok=True)

    def path(self, *parts: str) -> str:
        p = os.path.join(self.out_dir, *parts)
        parent = os.path.dirname(p)
        if parent:
            os.makedirs(parent, exist_ok=True)
        self.created.append(p)
        return p

    def register(self, path: str) -> str:
        self.created.append(path)
        return path

    def register_glob(self, pattern: str) -> None:
        self.globs.append(pattern)

    def __enter__(self) -> "RunContext":
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc_type is None:
            self._finish()
        else:
            self._cleanup()
        return False

    def _cleanup(self) -> None:
        targets = list(self.created)
        for pattern in self.globs:
            targets.extend(glob.glob(pattern))
        for p in reversed(targets):
            try:
                if os.path.isfile(p):
                    os.remove(p)
                elif os.path.isdir(p):
                    os.rmdir(p)
            except OSError:
                pass

    def _finish(self) -> None:
        for pattern in self.globs:
            self.created.extend(glob.glob(pattern))
        manifest = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "tool_version": __version__,
            "inputs": self.inputs,
            "outputs": sorted({os.path.relpath(p, self.out_dir)
                               for p in self.created if os.path.exists(p)}),
            "duration_s": round(time.monotonic() - self.t0, 3),
        }
        tmp = os.path.join(self.out_dir, "manifest.json.tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
        os.replace(tmp, os.path.join(self.out_dir, "manifest.json"))


def _print_config_and_exit() -> None:
    json.dump(DEFAULT_CONFIG, sys.stdout, indent=2)
    sys.stdout.write("\n")
    raise SystemExit(0)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> None:
    cfg = load_config(args.config)
    seed = resolve_seed(cfg["seed"], args.seed)
    sim = cfg["simulate"]
    preset = args.preset or sim.get("preset")
    scenario = sim.get("scenario")
    if args.preset is not None:
        scenario = None
    if preset is None and scenario is None:
        raise CliError("simulate needs --preset or a config with a scenario")
    if preset is not None and scenario is None and preset not in preset_names():
        raise CliError(f"unknown preset {preset!r}; available: "
                       f"{', '.join(preset_names())}")
    blinking = args.blinking or bool(sim.get("blinking"))

    with RunContext(args.out, "simulate", cfg, seed) as ctx:
        def one(i: int) -> str:
            if scenario is not None:
                spec = spec_from_dict(scenario)
                labeled = generate(spec, seed=[seed, i])
                if blinking:
                    from .simulate import DEFAULT_BLINK
                    labeled = apply_blinking(labeled, DEFAULT_BLINK, seed=[seed, i, 1])
            else:
                name = preset + ("_blinking" if blinking
                                 and not preset.endswith("_blinking") else "")
                labeled, _ = generate_preset_cloud(name, i, seed)
            path = ctx.path(f"cloud_{i:04d}.csv")
            write_cloud(path, labeled)
            return path

        indices = list(range(args.count))
        if args.threads > 1 and indices:
            with ThreadPoolExecutor(max_workers=args.threads) as pool:
                list(pool.map(one, indices))
        else:
            for i in indices:
                one(i)
    print(f"wrote {args.count} clouds to {args.out}")


def _labeled_from_file(path: str, need_truth: bool, need_classes: bool) -> LabeledCloud:
    labeled = read_cloud(path)
    if need_truth and labeled.truth is None:
        raise CliError(f"{path}: no cluster_id column; training data must be labeled")
    if need_classes and labeled.shape_class is None:
        raise CliError(f"{path}: no class_id column; classification training "
                       "requires class labels")
    return labeled


def cmd_train(args) -> None:
    cfg = load_config(args.config)
    seed = resolve_seed(cfg["seed"], args.seed)
    files = sorted(glob.glob(os.path.join(args.data, "*.csv")))
    if not files:
        raise CliError(f"no .csv clouds found in {args.data}")
    model_cfg = ModelConfig(**cfg["model"])
    train_cfg = TrainConfig(**{**cfg["train"], "seed": seed})
    graph_cfg = GraphConfig(**cfg["graph"])
    dataset = [_labeled_from_file(f, need_truth=True,
                                  need_classes=model_cfg.n_classes > 0)
               for f in files]
    with RunContext(args.out, "train", cfg, seed, inputs=files) as ctx:
        ctx.register(os.path.join(args.out, "config.json"))
        ctx.register(os.path.join(args.out, "loss.csv"))
        ctx.register_glob(os.path.join(args.out, "checkpoints", "*.json"))
        result = fit(dataset, model_cfg, train_cfg, graph_cfg,
                     run_dir=args.out, resume_from=args.resume)
        save_checkpoint(ctx.path("model.json"), result.params)
    final = result.history[-1].total if result.history else float("nan")
    print(f"trained {train_cfg.epochs} epochs on {len(dataset)} clouds; "
          f"final loss {final:.6g}; model at {os.path.join(args.out, 'model.json')}")


def cmd_infer(args) -> None:
    cfg = load_config(args.config)
    seed = resolve_seed(cfg["seed"], args.seed)
    labeled = read_cloud(args.input)
    cloud = labeled.cloud
    fine_cfg = DbscanConfig(eps=args.eps if args.eps else cfg["dbscan"]["eps"],
                            min_pts=args.min_pts if args.min_pts else cfg["dbscan"]["min_pts"])
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    inputs = [args.input] + ([args.checkpoint] if args.checkpoint else [])
    with RunContext(out_dir, "infer", cfg, seed, inputs=inputs) as ctx:
        coarse_part = None
        cluster_class = None
        collapsed = None
        if args.no_miro:
            fine_part = dbscan(cloud, fine_cfg)
        else:
            if not args.checkpoint:
                raise CliError("infer needs --checkpoint (or --no-miro)")
            params, _ = load_checkpoint(args.checkpoint)
            graph_cfg = GraphConfig(**cfg["graph"])
            coarse_cfg = None
            if args.coarse:
                coarse_cfg = DbscanConfig(eps=cfg["dbscan_coarse"]["eps"],
                                          min_pts=cfg["dbscan_coarse"]["min_pts"])
            result = run_pipeline(cloud, params, graph_cfg, fine_cfg, coarse_cfg,
                                  class_mode=args.classes)
            fine_part = result.fine
            coarse_part = result.coarse
            cluster_class = result.cluster_class
            collapsed = result.collapsed_fine

        class_arr = None
        if cluster_class is not None:
            class_arr = np.zeros(len(cloud), dtype=np.int64)
            for cid, cls in cluster_class.items():
                class_arr[fine_part.members(cid)] = cls
        out_labeled = LabeledCloud(cloud=cloud, truth=fine_part,
                                   shape_class=class_arr, coarse_truth=coarse_part)
        write_cloud(ctx.register(os.path.abspath(args.out)), out_labeled)
        if args.collapsed:
            if collapsed is None:
                raise CliError("--collapsed requires running with a model")
            write_cloud(ctx.register(os.path.abspath(args.collapsed)),
                        LabeledCloud(cloud=PointCloud(collapsed), truth=fine_part))
        if args.svg:
            write_svg(ctx.register(os.path.abspath(args.svg)), cloud.coords,
                      fine_part.labels, title=os.path.basename(args.input))
    print(f"clustered {len(cloud)} localizations into {fine_part.n_clusters} "
          f"clusters -> {args.out}")


_REPORT_COLS = ["ji_c", "rmsre_n", "rmse_xy", "iou", "ari", "ari_dagger",
                "ami", "ari_c", "n_clusters_gt", "n_clusters_pred"]


def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return f"{v:.6g}"


def cmd_evaluate(args) -> None:
    cfg = load_config(args.config)
    seed = resolve_seed(cfg["seed"], args.seed)
    xi = args.xi if args.xi else cfg["metric"]["xi"]
    gt_files = sorted(glob.glob(os.path.join(args.gt, "*.csv"))) \
        if os.path.isdir(args.gt) else [args.gt]
    pred_files = sorted(glob.glob(os.path.join(args.pred, "*.csv"))) \
        if os.path.isdir(args.pred) else [args.pred]
    by_name = {os.path.basename(p): p for p in pred_files}
    pairs = []
    for g in gt_files:
        name = os.path.basename(g)
        if name not in by_name:
            raise CliError(f"no prediction file matching {name}")
        pairs.append((g, by_name[name]))

    mcfg = MetricConfig(xi=xi)

    def one(pair):
        g, p = pair
        gt = read_cloud(g)
        pred = read_cloud(p)
        if gt.truth is None or pred.truth is None:
            raise CliError(f"{g} / {p}: both files need a cluster_id column")
        if len(gt) != len(pred):
            raise CliError(f"{g} / {p}: point counts differ")
        gt_part = gt.coarse_truth if args.coarse else gt.truth
        pred_part = pred.coarse_truth if args.coarse else pred.truth
        if gt_part is None or pred_part is None:
            raise CliError(f"{g} / {p}: missing coarse_id column")
        return os.path.basename(g), evaluate_pair(gt.cloud, gt_part, pred_part, mcfg)

    if args.threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(one, pairs))
    else:
        rows = [one(p) for p in pairs]

    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    with RunContext(out_dir, "evaluate", cfg, seed,
                    inputs=[p for pair in pairs for p in pair]) as ctx:
        with open(ctx.register(os.path.abspath(args.out)), "w",
                  encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["file"] + _REPORT_COLS)
            for name, rep in rows:
                w.writerow([name] + [_fmt_cell(getattr(rep, c)) for c in _REPORT_COLS])
            summary = ["mean ± sd"]
            for c in _REPORT_COLS:
                vals = [getattr(rep, c) for _, rep in rows if getattr(rep, c) is not None]
                if vals:
                    summary.append(f"{np.mean(vals):.3g} ± {np.std(vals):.2g}")
                else:
                    summary.append("")
            w.writerow(summary)
    print(f"evaluated {len(rows)} field(s) -> {args.out}")


def _quick_spot_model(cfg: dict, seed: int, sigma: float, epochs: int):
    """Train a small spot model for bench runs without a checkpoint."""
    rng = np.random.default_rng([seed, 77])
    seeds = [SeedCluster(rng.normal(0.0, sigma, size=(int(rng.integers(40, 90)), 2)))
             for _ in range(3)]
    spec = AugmentSpec(dropout_prob=0.1, addition_prob=0.1, jitter_sigma=2.0,
                       placements=(3, 8), background=Background(fraction=0.3))
    clouds = augment_dataset(seeds, spec, n_clouds=60,
                             extent=Rect(0, 0, 1000.0, 1000.0), seed=[seed, 78])
    model_cfg = ModelConfig(latent_dim=32, n_steps=4,
                            n_eigs=cfg["graph"]["n_eigs"])
    train_cfg = TrainConfig(epochs=epochs, batch_size=8, learning_rate=5e-3, seed=seed)
    graph_cfg = GraphConfig(**cfg["graph"])
    return fit(clouds, model_cfg, train_cfg, graph_cfg).params, graph_cfg


def _bench_pairtest(args, cfg, seed, ctx) -> None:
    sigma = args.sigma
    distances = [float(d) for d in args.distances.split(",")]
    distances_nm = [d * sigma for d in distances] if args.unit == "sigma" else distances
    if args.checkpoint:
        params, _ = load_checkpoint(args.checkpoint)
        graph_cfg = GraphConfig(**cfg["graph"])
    else:
        params, graph_cfg = _quick_spot_model(cfg, seed, sigma, args.train_epochs)
    plain_cfg = DbscanConfig(eps=2 * sigma, min_pts=5)
    miro_cfg = DbscanConfig(eps=0.5 * sigma, min_pts=3)
    mcfg = MetricConfig(xi=sigma)
    rows = []
    for di, (d, d_nm) in enumerate(zip(distances, distances_nm)):
        ji = {"dbscan": [], "miro": []}
        for s in range(args.pairs):
            labeled = gen_pair_test(sigma, d_nm, seed=[seed, di, s])
            plain = dbscan(labeled.cloud, plain_cfg)
            rep = evaluate_pair(labeled.cloud, labeled.truth, plain, mcfg)
            ji["dbscan"].append(rep.ji_c)
            res = run_pipeline(labeled.cloud, params, graph_cfg, miro_cfg)
            rep = evaluate_pair(labeled.cloud, labeled.truth, res.fine, mcfg)
            ji["miro"].append(rep.ji_c)
        for method in ("miro", "dbscan"):
            rows.append([d, args.unit, method,
                         f"{np.mean(ji[method]):.4f}", f"{np.std(ji[method]):.4f}"])
    with open(ctx.path("pairtest.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["distance", "unit", "method", "mean_ji_c", "sd_ji_c"])
        w.writerows(rows)


def _bench_scenario(args, cfg, seed, ctx) -> None:
    if args.preset not in preset_names():
        raise CliError(f"unknown preset {args.preset!r}; available: pairtest, "
                       f"{', '.join(preset_names())}")
    clouds = [generate_preset_cloud(args.preset, i, seed)[0] for i in range(args.count)]
    n_train = min(args.train_clouds, max(1, args.count - 1))
    train_set, test_set = clouds[:n_train], clouds[n_train:]
    graph_cfg = GraphConfig(**cfg["graph"])
    if args.checkpoint:
        params, _ = load_checkpoint(args.checkpoint)
    else:
        model_cfg = ModelConfig(latent_dim=32, n_steps=4, n_eigs=cfg["graph"]["n_eigs"])
        train_cfg = TrainConfig(epochs=args.train_epochs, batch_size=4,
                                learning_rate=5e-3, seed=seed)
        params = fit(train_set, model_cfg, train_cfg, graph_cfg).params
    plain_cfg = DbscanConfig(eps=cfg["dbscan"]["eps"] * 2, min_pts=cfg["dbscan"]["min_pts"])
    miro_cfg = DbscanConfig(eps=cfg["dbscan"]["eps"], min_pts=cfg["dbscan"]["min_pts"])
    mcfg = MetricConfig(xi=cfg["metric"]["xi"])
    reports = {"miro": [], "dbscan": []}
    for labeled in test_set:
        plain = dbscan(labeled.cloud, plain_cfg)
        reports["dbscan"].append(evaluate_pair(labeled.cloud, labeled.truth, plain, mcfg))
        res = run_pipeline(labeled.cloud, params, graph_cfg, miro_cfg)
        reports["miro"].append(evaluate_pair(labeled.cloud, labeled.truth, res.fine, mcfg))
    with open(ctx.path("comparison.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "method"] + _REPORT_COLS)
        for method in ("miro", "dbscan"):
            row = [args.preset, method]
            for c in _REPORT_COLS:
                vals = [getattr(r, c) for r in reports[method] if getattr(r, c) is not None]
                row.append(f"{np.mean(vals):.3g} ± {np.std(vals):.2g}" if vals else "")
            w.writerow(row)


def cmd_bench(args) -> None:
    cfg = load_config(args.config)
    seed = resolve_seed(cfg["seed"], args.seed)
    with RunContext(args.out, "bench", cfg, seed) as ctx:
        if args.preset == "pairtest":
            _bench_pairtest(args, cfg, seed, ctx)
            name = "pairtest.csv"
        else:
            _bench_scenario(args, cfg, seed, ctx)
            name = "comparison.csv"
    print(f"benchmark -> {os.path.join(args.out, name)}")


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="miro",
                                     description="Graph-network preprocessing for "
                                                 "density clustering of SMLM point clouds")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=1,
                       help="files processed in parallel (1 = reproducibility reference)")
        p.add_argument("--print-config", action="store_true",
                       help="print the default configuration and exit")

    p = sub.add_parser("simulate", help="generate labeled clouds")
    common(p)
    p.add_argument("--preset", help=f"one of: {', '.join(preset_names())}")
    p.add_argument("--blinking", action="store_true")
    p.add_argument("--count", type=int, required=False, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model on labeled clouds")
    common(p)
    p.add_argument("--data", required=True, help="directory of labeled cloud CSVs")
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint to resume from")

    p = sub.add_parser("infer", help="cluster one cloud")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--out", required=True)
    p.add_argument("--eps", type=float)
    p.add_argument("--min-pts", type=int, dest="min_pts")
    p.add_argument("--coarse", action="store_true", help="also cluster at the coarse scale")
    p.add_argument("--classes", action="store_true", help="classify clusters by shape")
    p.add_argument("--collapsed", help="write collapsed coordinates CSV here")
    p.add_argument("--svg", help="write an SVG scatter rendering here")
    p.add_argument("--no-miro", action="store_true", dest="no_miro",
                   help="plain DBSCAN on the raw coordinates")

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    common(p)
    p.add_argument("--gt", required=True, help="ground-truth CSV file or directory")
    p.add_argument("--pred", required=True, help="prediction CSV file or directory")
    p.add_argument("--out", required=True)
    p.add_argument("--xi", type=float, help="centroid pairing threshold (nm)")
    p.add_argument("--coarse", action="store_true", help="evaluate coarse_id columns")

    p = sub.add_parser("bench", help="end-to-end comparison with and without the model")
    common(p)
    p.add_argument("--preset", required=True,
                   help="'pairtest' or a scenario preset name")
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", help="reuse a trained model")
    p.add_argument("--distances", default="1,2,3,4", help="pairtest distances")
    p.add_argument("--unit", choices=("sigma", "nm"), default="sigma")
    p.add_argument("--sigma", type=float, default=25.0)
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--count", type=int, default=10, help="clouds for scenario bench")
    p.add_argument("--train-clouds", type=int, default=3, dest="train_clouds")
    p.add_argument("--train-epochs", type=int, default=12, dest="train_epochs")
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "infer": cmd_infer,
    "evaluate": cmd_evaluate,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "print_config", False):
        _print_config_and_exit()
    try:
        _COMMANDS[args.command](args)
        return 0
    except (CliError, OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
