"""End-to-end experiment arms and the named reproduction presets.

All presets share a common scaffold: a synthetic source corpus is used to
pretrain the backbone, a shifted target corpus is split 75/25 by video, the
arms adapt on the target training videos without labels, and 1-NN accuracy is
measured on the held-out frames. Preset tables carry machine-readable rows so
two invocations with the same seed compare bit-for-bit.
"""

import copy
import dataclasses
import json
from pathlib import Path

from .checkpoint import load_checkpoint
from .config import (ExperimentConfig, config_to_dict, normalize_delta_spec, save_resolved,
                     validate_experiment)
from .data import dataset_fingerprint, generate_dataset, split_dataset
from .errors import ConfigError
from .evaluate import build_index, forgetting_probe, index_entries_from_split, knn_report
from .model import merge_adapters
from .trainer import pretrain_source, run_pipeline

PRESETS = ("ablation-table1", "baselines-table3", "delta-sweep-table2", "forgetting-table6")


def override_config(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Copy of cfg with dotted-path overrides applied, then revalidated."""
    new = copy.deepcopy(cfg)
    for dotted, value in overrides.items():
        obj = new
        *head, last = dotted.split(".")
        for part in head:
            obj = getattr(obj, part)
        if not hasattr(obj, last):
            raise ConfigError(f"unknown override target: {dotted}")
        setattr(obj, last, value)
    return validate_experiment(new)


def domain_spec(cfg: ExperimentConfig, tag: str):
    return dataclasses.replace(cfg.data, domain_tag=tag)


def write_run_manifest(out_dir, cfg: ExperimentConfig, clips) -> None:
    out_dir = Path(out_dir)
    save_resolved(cfg, out_dir)
    manifest = {
        "data_fingerprint": dataset_fingerprint(clips),
        "num_clips": len(clips),
        "classes": sorted({c.class_id for c in clips}),
    }
    (out_dir / "data_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


class ExperimentContext:
    """Shared corpora, splits and the pretrained checkpoint for a config."""

    def __init__(self, cfg: ExperimentConfig, out_dir):
        self.cfg = cfg
        self.out_dir = Path(out_dir)
        self.source_clips = generate_dataset(domain_spec(cfg, "source"))
        self.target_clips = generate_dataset(domain_spec(cfg, "target"))
        self.source_split = split_dataset(self.source_clips, cfg.eval.split_ratio, cfg.seed)
        self.target_split = split_dataset(self.target_clips, cfg.eval.split_ratio, cfg.seed)
        self._pretrained = None

    def pretrained_params(self) -> dict:
        if self._pretrained is None:
            pre_dir = self.out_dir / "pretrain"
            ckpt_path = pre_dir / "checkpoints" / "pretrain.ckpt"
            if not ckpt_path.is_file():
                write_run_manifest(pre_dir, self.cfg, self.source_split.train)
                pretrain_source(self.cfg.model, self.cfg.freeze, self.cfg.loss, self.cfg.train,
                                self.cfg.sampler, self.cfg.augment, self.source_split.train,
                                self.cfg.seed, pre_dir)
            self._pretrained = load_checkpoint(ckpt_path).params
        return self._pretrained

    def evaluate_params(self, params, adapters=None, domain="target") -> dict:
        split = self.target_split if domain == "target" else self.source_split
        train_e, test_e = index_entries_from_split(split)
        eff = merge_adapters(params, adapters) if adapters else params
        tr = build_index(eff, train_e, self.cfg.model)
        te = build_index(eff, test_e, self.cfg.model)
        return knn_report(tr, te, self.cfg.eval.k, self.cfg.eval.metric)

    def adapt(self, arm_name: str, overrides: dict | None = None, seed: int | None = None):
        """Run a full two-phase adaptation arm on the target training videos;
        returns (params, adapters) of the final student."""
        cfg = override_config(self.cfg, overrides or {})
        seed = cfg.seed if seed is None else seed
        arm_dir = self.out_dir / "arms" / f"{arm_name}_seed{seed}"
        write_run_manifest(arm_dir, cfg, self.target_split.train)
        result = run_pipeline(cfg.model, cfg.freeze, cfg.loss, cfg.train, cfg.sampler,
                              cfg.augment, self.target_split.train, seed, arm_dir,
                              init_params_dict=self.pretrained_params())
        ck = load_checkpoint(result["final_checkpoint"])
        return ck.params, ck.adapters


ABLATION_ROWS = (
    {"label": "full", "uwsd": True, "unfrozen_last": 2, "local_crops": True,
     "train_head": True, "input": "video"},
    {"label": "no_local_crops", "local_crops": False},
    {"label": "no_uwsd", "uwsd": False},
    {"label": "unfrozen_last_1", "unfrozen_last": 1},
    {"label": "unfrozen_last_3", "unfrozen_last": 3},
    {"label": "unfrozen_last_4", "unfrozen_last": 4},
    {"label": "no_train_head", "train_head": False},
    {"label": "image_input", "input": "image"},
)


def _ablation_overrides(cfg: ExperimentConfig, row: dict) -> dict:
    base = {"uwsd": True, "unfrozen_last": cfg.freeze.full_layers, "local_crops": True,
            "train_head": True, "input": "video"}
    base.update(row)
    overrides = {}
    if not base["uwsd"]:
        overrides["loss.gamma"] = 0.0
    if not base["local_crops"]:
        overrides["augment.num_local_pairs"] = 0
    if not base["train_head"]:
        overrides["freeze.head_only_epochs"] = 0
    if base["input"] == "image":
        overrides["augment.static_baseline"] = True
    L = base["unfrozen_last"]
    overrides["freeze.full_layers"] = L
    overrides["freeze.lora_layers"] = min(cfg.freeze.lora_layers, cfg.model.depth - L)
    return overrides


def sweep_delta(cfg: ExperimentConfig, out_dir, delta_specs=None) -> dict:
    """Adapt + evaluate once per temporal-offset spec; rows mirror the offsets."""
    ctx = ExperimentContext(cfg, out_dir)
    specs = [normalize_delta_spec(e) for e in (delta_specs or cfg.delta_specs)]
    rows = []
    for spec in specs:
        params, adapters = ctx.adapt(
            f"delta_{spec['label']}",
            {"sampler.delta_min": spec["delta_min"], "sampler.delta_max": spec["delta_max"]})
        report = ctx.evaluate_params(params, adapters)
        rows.append({**spec, "accuracy": report["accuracy"]})
    table = {"preset": "delta-sweep-table2", "rows": rows}
    (Path(out_dir) / "table.json").write_text(json.dumps(table, indent=2, sort_keys=True))
    return table


def reproduce_experiment(name: str, cfg: ExperimentConfig, out_dir) -> dict:
    """Run a named experiment preset and emit its comparison table."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    out_dir = Path(out_dir)
    if name == "delta-sweep-table2":
        return sweep_delta(cfg, out_dir)

    ctx = ExperimentContext(cfg, out_dir)
    rows = []
    if name == "ablation-table1":
        for row in ABLATION_ROWS:
            params, adapters = ctx.adapt(row["label"], _ablation_overrides(cfg, row))
            report = ctx.evaluate_params(params, adapters)
            merged = {"label": row["label"], **_ablation_overrides(cfg, row),
                      "accuracy": report["accuracy"]}
            rows.append(merged)
    elif name == "baselines-table3":
        pretrained = ctx.pretrained_params()
        rows.append({"label": "pretrained",
                     "accuracy": ctx.evaluate_params(pretrained)["accuracy"]})
        params, adapters = ctx.adapt("static_baseline", {"augment.static_baseline": True})
        rows.append({"label": "static_baseline",
                     "accuracy": ctx.evaluate_params(params, adapters)["accuracy"]})
        params, adapters = ctx.adapt("video_adapt", {})
        rows.append({"label": "video_adapt",
                     "accuracy": ctx.evaluate_params(params, adapters)["accuracy"]})
    elif name == "forgetting-table6":
        pretrained = ctx.pretrained_params()
        src, tgt = forgetting_probe(pretrained, cfg.model, ctx.source_split, ctx.target_split,
                                    k=cfg.eval.k, metric=cfg.eval.metric)
        rows.append({"label": "pretrained", "source_acc": src, "target_acc": tgt})
        params, adapters = ctx.adapt("video_adapt", {})
        eff = merge_adapters(params, adapters)
        src, tgt = forgetting_probe(eff, cfg.model, ctx.source_split, ctx.target_split,
                                    k=cfg.eval.k, metric=cfg.eval.metric)
        rows.append({"label": "adapted", "source_acc": src, "target_acc": tgt})
    table = {"preset": name, "rows": rows}
    (out_dir / "table.json").write_text(json.dumps(table, indent=2, sort_keys=True))
    return table
