"""Command-line entry point.

Subcommands: gen-data, pretrain, adapt, eval, sweep-delta, reproduce.
Heavy imports happen after argument parsing so --threads can pin the BLAS
thread count via environment variables before numpy loads.
"""

import argparse
import json
import os
import sys


def _add_common(p):
    p.add_argument("--config", help="experiment config JSON (defaults apply if omitted)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out-dir", help="run directory for artifacts")
    p.add_argument("--threads", type=int, help="BLAS/OpenMP thread count")


def build_parser():
    parser = argparse.ArgumentParser(prog="vidadapt",
                                     description="Self-supervised video adaptation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic video dataset on disk")
    _add_common(p)
    p.add_argument("--spec", help="config JSON holding the data spec (alias of --config)")
    p.add_argument("--out", required=True, help="output dataset directory")

    p = sub.add_parser("pretrain", help="self-distillation pretraining on the source domain")
    _add_common(p)

    p = sub.add_parser("adapt", help="two-phase adaptation of a pretrained checkpoint")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="pretrained checkpoint to start from")
    p.add_argument("--dataset", help="dataset directory (default: synthesize target domain)")
    p.add_argument("--static-baseline", action="store_true",
                   help="image-only variant: both views from the same frame")
    p.add_argument("--motion-sim", action="store_true",
                   help="with --static-baseline: apply motion-simulating transforms")

    p = sub.add_parser("eval", help="KNN evaluation of a checkpoint on a dataset")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--metric", default="euclidean", choices=["euclidean", "cosine"])
    p.add_argument("--out", default="report.json")

    p = sub.add_parser("sweep-delta", help="adapt+eval per temporal-offset spec")
    _add_common(p)
    p.add_argument("--deltas", help="comma list, e.g. '1,5,5:10' (default: config delta_specs)")

    p = sub.add_parser("reproduce", help="run a named experiment preset")
    _add_common(p)
    p.add_argument("preset", help="ablation-table1 | baselines-table3 | "
                                  "delta-sweep-table2 | forgetting-table6")
    return parser


def _set_threads(n):
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _load_cfg(args):
    from .config import ExperimentConfig, load_config, validate_experiment
    path = getattr(args, "config", None) or getattr(args, "spec", None)
    cfg = load_config(path) if path else validate_experiment(ExperimentConfig())
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "out_dir", None):
        cfg.out_dir = args.out_dir
    if args.threads is not None:
        cfg.threads = args.threads
    return cfg


def _require_out_dir(cfg):
    from .errors import ConfigError
    if not cfg.out_dir:
        raise ConfigError("an output directory is required (--out-dir or config out_dir)")
    return cfg.out_dir


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _set_threads(args.threads)

    from .errors import VidAdaptError
    try:
        return _dispatch(args)
    except VidAdaptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    from .config import save_resolved
    cfg = _load_cfg(args)

    if args.command == "gen-data":
        from .data import generate_dataset, save_dataset
        clips = generate_dataset(cfg.data)
        save_dataset(clips, args.out)
        print(f"wrote {len(clips)} clips to {args.out}")
        return 0

    if args.command == "pretrain":
        out_dir = _require_out_dir(cfg)
        from .data import generate_dataset, split_dataset
        from .experiments import domain_spec, write_run_manifest
        from .trainer import pretrain_source
        clips = generate_dataset(domain_spec(cfg, "source"))
        split = split_dataset(clips, cfg.eval.split_ratio, cfg.seed)
        write_run_manifest(out_dir, cfg, split.train)
        path = pretrain_source(cfg.model, cfg.freeze, cfg.loss, cfg.train, cfg.sampler,
                               cfg.augment, split.train, cfg.seed, out_dir)
        print(f"pretrained checkpoint: {path}")
        return 0

    if args.command == "adapt":
        out_dir = _require_out_dir(cfg)
        from .checkpoint import load_checkpoint
        from .data import generate_dataset, load_dataset, split_dataset
        from .experiments import domain_spec, write_run_manifest
        from .trainer import run_pipeline
        if args.static_baseline:
            cfg.augment.static_baseline = True
        if args.motion_sim:
            cfg.augment.motion_sim = True
        clips = (load_dataset(args.dataset) if args.dataset
                 else generate_dataset(domain_spec(cfg, "target")))
        split = split_dataset(clips, cfg.eval.split_ratio, cfg.seed)
        write_run_manifest(out_dir, cfg, split.train)
        init = load_checkpoint(args.checkpoint).params
        result = run_pipeline(cfg.model, cfg.freeze, cfg.loss, cfg.train, cfg.sampler,
                              cfg.augment, split.train, cfg.seed, out_dir,
                              init_params_dict=init)
        print(json.dumps(result, indent=2))
        return 0

    if args.command == "eval":
        from .checkpoint import load_checkpoint
        from .data import load_dataset, split_dataset
        from .evaluate import build_index, index_entries_from_split, knn_report
        from .model import ViTConfig, merge_adapters
        ck = load_checkpoint(args.checkpoint)
        vit = ViTConfig(**ck.config["vit"]) if "vit" in ck.config else cfg.model
        params = merge_adapters(ck.params, ck.adapters)
        clips = load_dataset(args.dataset)
        split = split_dataset(clips, cfg.eval.split_ratio, cfg.seed)
        train_e, test_e = index_entries_from_split(split)
        report = knn_report(build_index(params, train_e, vit),
                            build_index(params, test_e, vit), args.k, args.metric)
        with open(args.out, "w") as f:
            json.dump(report, f, indent=2, sort_keys=True)
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0

    if args.command == "sweep-delta":
        out_dir = _require_out_dir(cfg)
        from .experiments import sweep_delta
        specs = None
        if args.deltas:
            specs = [[int(x) for x in part.split(":")] if ":" in part else int(part)
                     for part in args.deltas.split(",")]
        table = sweep_delta(cfg, out_dir, specs)
        print(json.dumps(table, indent=2, sort_keys=True))
        return 0

    if args.command == "reproduce":
        out_dir = _require_out_dir(cfg)
        from .experiments import reproduce_experiment
        save_resolved(cfg, out_dir)
        table = reproduce_experiment(args.preset, cfg, out_dir)
        print(json.dumps(table, indent=2, sort_keys=True))
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
