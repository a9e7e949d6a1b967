"""Stages of the membership-inference game, each persisting its artifacts.

Output directory layout::

    manifest.json            resolved config, seeds, timings, digests
    split.json               the SplitPlan index sets
    target.json              target classifier
    shadows/ensemble.json    ensemble index (mode, seeds, subset ids, files)
    shadows/shadow_NNN.json  one classifier per shadow
    shadows/shadow_NNN.csv   per-step training log
    scores.csv               one row per evaluated example
    metrics.json, roc.json, roc.csv

Stages read what earlier stages wrote, so any stage can be rerun alone.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .attack import ShadowEnsemble, ShadowModel, score_dataset
from .blackbox import reconstruction_report
from .config import config_hash, derive_seed, dump_config, with_overrides
from .data import load_idx_dataset, load_jsonl, make_synthetic, sample_shadow_subset, split_experiment
from .distill import DistillConfig, ModelOracle, distill
from .errors import ConfigError, MissingArtifact
from .metrics import metrics_report
from .model import (
    ArchitectureSpec,
    TrainConfig,
    accuracy,
    init_classifier,
    load_model,
    save_model,
    train,
)

log = logging.getLogger(__name__)

SCORE_COLUMNS = ["example_id", "true_membership", "score", "conf_obs", "mu_out", "var_out"]


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

def build_dataset(cfg):
    d = cfg["dataset"]
    if d["source"] == "synthetic":
        return make_synthetic(d["num_classes"], d["feature_dim"], d["per_class"], d["spread"],
                              d["seed"], separation=d["separation"])
    if d["source"] == "jsonl":
        return load_jsonl(d["path"])
    return load_idx_dataset(d["idx_images"], d["idx_labels"], limit=d["limit"])


def build_shift_pool(cfg):
    """Shadow data from a shifted copy of the blob distribution, or None."""
    s, d = cfg["shift"], cfg["dataset"]
    if not s["enabled"]:
        return None
    if d["source"] != "synthetic":
        raise ConfigError("[shift] is only supported for synthetic datasets")
    return make_synthetic(d["num_classes"], d["feature_dim"], s["per_class"], d["spread"],
                          d["seed"], separation=d["separation"], shift=s["shift"],
                          sample_seed=s["sample_seed"])


def build_plan(cfg, dataset):
    s = cfg["split"]
    return split_experiment(dataset, {"target": s["target"], "eval": s["eval"]}, s["seed"],
                            nonmembers_in_pool=s["nonmembers_in_pool"])


def target_spec(cfg, dataset):
    t = cfg["target"]
    widths = (dataset.feature_dim, *t["hidden"], dataset.num_classes)
    return ArchitectureSpec(widths, t["activation"], init_seed=t["init_seed"])


def target_train_config(cfg):
    t = cfg["target"]
    return TrainConfig(t["steps"], t["batch_size"], t["learning_rate"], t["momentum"],
                       t["weight_decay"], t["shuffle_seed"])


def shadow_seeds(cfg, index):
    base = cfg["shadows"]["seed"]
    return {"subset": derive_seed(base, "subset", index),
            "init": derive_seed(base, "init", index),
            "shuffle": derive_seed(base, "shuffle", index)}


def distill_config(cfg, mode, shuffle_seed, reconstruct=False):
    di = cfg["distill"]
    lr = di["kl_learning_rate"] if mode == "kl" else di["mse_learning_rate"]
    return DistillConfig(alpha=di["alpha"], temperature=di["temperature"], variant=mode,
                         steps=di["steps"], learning_rate=lr, batch_size=di["batch_size"],
                         seed=shuffle_seed, momentum=di["momentum"],
                         weight_decay=di["weight_decay"], reconstruct=reconstruct)


def needs_reconstruction(cfg):
    return cfg["shadows"]["training_mode"] == "mse" and cfg["target"]["oracle_mode"] == "probabilities"


def _train_one_shadow(job):
    """Train shadow ``index``; module-level so worker processes can run it."""
    cfg, dataset, plan, pool, target, index = job
    sh = cfg["shadows"]
    mode = sh["training_mode"]
    seeds = shadow_seeds(cfg, index)
    subset = sample_shadow_subset(plan, dataset, sh["subset_size"], seeds["subset"], pool=pool)
    widths = (dataset.feature_dim, *sh["hidden"], dataset.num_classes)
    spec = ArchitectureSpec(widths, sh["activation"], init_seed=seeds["init"])
    rows = []
    if mode == "plain":
        tc = TrainConfig(sh["steps"], sh["batch_size"], sh["learning_rate"], sh["momentum"],
                         sh["weight_decay"], seeds["shuffle"])
        model = train(init_classifier(spec), subset, tc,
                      log=lambda step, loss, extra: rows.append((step, loss, loss, 0.0)))
    else:
        oracle = ModelOracle(target, cfg["target"]["oracle_mode"])
        dc = distill_config(cfg, mode, seeds["shuffle"], reconstruct=needs_reconstruction(cfg))
        model = distill(oracle, subset, spec, dc,
                        log=lambda step, loss, t: rows.append((step, loss, t["ce_term"], t["distill_term"])))
    return model, seeds, subset.ids, rows


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

def _read_manifest(out):
    path = Path(out) / "manifest.json"
    if path.exists():
        return json.loads(path.read_text())
    return {}


def _update_manifest(out, cfg, stage, entry):
    manifest = _read_manifest(out)
    manifest["config_hash"] = config_hash(cfg)
    manifest["config"] = cfg
    manifest.setdefault("stages", {})[stage] = entry
    (Path(out) / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True,
                                                        default=list) + "\n")
    (Path(out) / "config.resolved.ini").write_text(dump_config(cfg))


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def run_target(cfg, out):
    """Train the target on its split and persist it. Returns the classifier."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    dataset = build_dataset(cfg)
    plan = build_plan(cfg, dataset)
    members = dataset.subset(plan.target_train_ids)
    members.check_training_ready()
    target = train(init_classifier(target_spec(cfg, dataset)), members, target_train_config(cfg))
    save_model(target, out / "target.json", role="target")
    (out / "split.json").write_text(json.dumps(plan.to_dict()) + "\n")
    entry = {
        "seeds": {"dataset": cfg["dataset"]["seed"], "split": cfg["split"]["seed"],
                  "init": cfg["target"]["init_seed"], "shuffle": cfg["target"]["shuffle_seed"]},
        "model_path": "target.json",
        "digest": target.digest(),
        "train_accuracy": accuracy(target, members),
        "nonmember_accuracy": accuracy(target, dataset.subset(plan.nonmember_eval_ids)),
        "wall_clock_s": time.perf_counter() - t0,
    }
    if cfg["target"]["oracle_mode"] == "probabilities":
        entry["reconstruction"] = reconstruction_report(target, members).to_dict()
    _update_manifest(out, cfg, "target", entry)
    log.info("target: train acc %.3f, non-member acc %.3f",
             entry["train_accuracy"], entry["nonmember_accuracy"])
    return target


def _load_target(out):
    path = Path(out) / "target.json"
    if not path.exists():
        raise MissingArtifact(f"{path} not found; run the run-target stage first")
    return load_model(path)


def audit_shadow_subsets(plan, ensemble, shifted=False):
    """Raise if any shadow training index falls inside the target's training set."""
    if shifted:
        return True
    target = set(plan.target_train_ids.tolist())
    for i, s in enumerate(ensemble.shadows):
        leaked = target.intersection(np.asarray(s.subset_ids).tolist())
        if leaked:
            raise ConfigError(f"shadow {i} trained on {len(leaked)} target-train examples")
    return True


def run_shadows(cfg, out, target=None):
    """Train the shadow ensemble (plain or distilled) and persist it."""
    out = Path(out)
    mode = cfg["shadows"]["training_mode"]
    if target is None and mode != "plain":
        target = _load_target(out)
    t0 = time.perf_counter()
    dataset = build_dataset(cfg)
    plan = build_plan(cfg, dataset)
    pool = build_shift_pool(cfg)
    jobs = [(cfg, dataset, plan, pool, target, i) for i in range(cfg["shadows"]["count"])]
    workers = cfg["experiment"]["workers"]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_train_one_shadow, jobs))
    else:
        results = [_train_one_shadow(j) for j in jobs]

    sdir = out / "shadows"
    sdir.mkdir(parents=True, exist_ok=True)
    shadows, index = [], []
    for i, (model, seeds, ids, rows) in enumerate(results):
        name = f"shadow_{i:03d}"
        save_model(model, sdir / f"{name}.json", role="shadow", index=i, mode=mode)
        with open(sdir / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "kd_loss", "ce_term", "distill_term"] if mode != "plain"
                       else ["step", "loss", "ce_term", "distill_term"])
            for r in rows:
                w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])
        shadows.append(ShadowModel(model, seeds["subset"], np.asarray(ids)))
        index.append({"index": i, "file": f"{name}.json", "log": f"{name}.csv", "seeds": seeds,
                      "subset_ids": np.asarray(ids).tolist(), "digest": model.digest()})
    reconstruct = mode != "plain" and needs_reconstruction(cfg)
    ensemble = ShadowEnsemble(shadows, mode, {"reconstruct": reconstruct})
    audit_shadow_subsets(plan, ensemble, shifted=pool is not None)
    (sdir / "ensemble.json").write_text(json.dumps(
        {"training_mode": mode, "count": len(shadows), "reconstruct": reconstruct,
         "shifted": pool is not None, "shadows": index}, indent=1) + "\n")
    entry = {"training_mode": mode, "count": len(shadows), "seed": cfg["shadows"]["seed"],
             "reconstruction_enabled": reconstruct, "shifted": pool is not None,
             "audit": "passed", "model_paths": [f"shadows/{s['file']}" for s in index],
             "wall_clock_s": time.perf_counter() - t0}
    _update_manifest(out, cfg, "shadows", entry)
    log.info("shadows: trained %d (%s) in %.1fs", len(shadows), mode, entry["wall_clock_s"])
    return ensemble


def load_ensemble(out):
    sdir = Path(out) / "shadows"
    path = sdir / "ensemble.json"
    if not path.exists():
        raise MissingArtifact(f"{path} not found; run the run-shadows stage first")
    meta = json.loads(path.read_text())
    shadows = []
    for s in meta["shadows"]:
        model = load_model(sdir / s["file"])
        shadows.append(ShadowModel(model, s["seeds"]["subset"], np.asarray(s["subset_ids"])))
    return ShadowEnsemble(shadows, meta["training_mode"], {"reconstruct": meta["reconstruct"]})


def evaluation_set(cfg, dataset, plan):
    ids = np.concatenate([plan.member_eval_ids, plan.nonmember_eval_ids])
    labels = np.r_[np.ones(len(plan.member_eval_ids), dtype=int),
                   np.zeros(len(plan.nonmember_eval_ids), dtype=int)]
    return dataset.subset(ids), labels


def write_scores(path, scores, labels):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCORE_COLUMNS)
        for s, y in zip(scores, labels):
            w.writerow([s.example_id, int(y), repr(s.score), repr(s.conf_obs),
                        repr(s.mu_out), repr(s.var_out)])


def attack_scores(cfg, target, ensemble):
    """Score the balanced evaluation set; returns (scores, labels)."""
    dataset = build_dataset(cfg)
    plan = build_plan(cfg, dataset)
    evalset, labels = evaluation_set(cfg, dataset, plan)
    spec = ensemble.shadows[0].model.spec
    if spec.feature_dim != evalset.feature_dim or target.spec.feature_dim != evalset.feature_dim:
        raise ConfigError("model input width does not match the dataset")
    if spec.num_classes != target.spec.num_classes:
        raise ConfigError("shadow and target models disagree on num_classes")
    a = cfg["attack"]
    oracle = ModelOracle(target, cfg["target"]["oracle_mode"])
    scores = score_dataset(oracle, evalset, ensemble, a["num_queries"], a["aug_seed"],
                           a["var_floor"], a["aug_sigma"])
    return scores, labels


def run_attack(cfg, out, target=None, ensemble=None):
    """Score members and non-members and write scores, ROC and metrics."""
    out = Path(out)
    if target is None:
        target = _load_target(out)
    if ensemble is None:
        ensemble = load_ensemble(out)
    t0 = time.perf_counter()
    scores, labels = attack_scores(cfg, target, ensemble)
    report, curve = metrics_report([s.score for s in scores], labels, cfg["attack"]["fpr_grid"])
    write_scores(out / "scores.csv", scores, labels)
    report.save_json(out / "metrics.json")
    curve.save_json(out / "roc.json")
    curve.save_csv(out / "roc.csv")
    _update_manifest(out, cfg, "attack", {
        "num_scores": len(scores), "auc": report.auc,
        "training_mode": ensemble.training_mode,
        "wall_clock_s": time.perf_counter() - t0})
    log.info("attack: AUC %.4f over %d examples", report.auc, len(scores))
    return scores, report


def run_all(cfg, out):
    target = run_target(cfg, out)
    ensemble = run_shadows(cfg, out, target)
    return run_attack(cfg, out, target, ensemble)


# ---------------------------------------------------------------------------
# Sweeps and the comparative report
# ---------------------------------------------------------------------------

SWEEP_PARAMETERS = {
    "alpha": ("distill", "alpha", float),
    "tau": ("distill", "temperature", float),
    "shadow_size": ("shadows", "subset_size", None),
    "N": ("shadows", "count", int),
}


def _sweep_value(cfg, parameter, raw):
    section, key, kind = SWEEP_PARAMETERS[parameter]
    text = str(raw).strip()
    if parameter == "shadow_size":
        if text.endswith("x"):
            value = int(round(float(text[:-1]) * cfg["split"]["target"]))
        else:
            value = int(text)
    else:
        value = kind(text)
    return section, key, value


def _report_row(report, fpr_grid):
    row = {"auc": report.auc}
    for f in fpr_grid:
        v = report.tpr_at[float(f)]
        row[f"tpr@{f:g}"] = "insufficient n" if v is None else v
    return row


def sweep(cfg, out, parameter, values):
    """One shadows+attack run per value, sharing the target and all base seeds.

    Failed runs are recorded in ``sweep.csv`` with their error and the sweep
    continues.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep parameter must be one of {sorted(SWEEP_PARAMETERS)}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    target = run_target(cfg, out)
    grid = cfg["attack"]["fpr_grid"]
    rows = []
    for raw in values:
        row = {"parameter": parameter, "value": raw, "mode": cfg["shadows"]["training_mode"]}
        try:
            section, key, value = _sweep_value(cfg, parameter, raw)
            run_cfg = with_overrides(cfg, **{section: {key: value}})
            run_dir = out / "sweep" / f"{parameter}={raw}"
            run_dir.mkdir(parents=True, exist_ok=True)
            save_model(target, run_dir / "target.json", role="target")
            ensemble = run_shadows(run_cfg, run_dir, target)
            _, report = run_attack(run_cfg, run_dir, target, ensemble)
            row.update(_report_row(report, grid), status="ok", error="")
        except Exception as exc:  # recorded per run; the sweep goes on
            log.warning("sweep %s=%s failed: %s", parameter, raw, exc)
            row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        rows.append(row)
    _write_table(out / "sweep.csv", rows)
    return rows


def _write_table(path, rows):
    columns = []
    for r in rows:
        for k in r:
            if k not in columns:
                columns.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


METHOD_LABELS = {"plain": "LiRA", "kl": "GLiRA(KL)", "mse": "GLiRA(MSE)"}


def comparative_report(cfg, out):
    """LiRA vs GLiRA(KL) vs GLiRA(MSE) with same and mismatched shadow architectures.

    Also adds GLiRA(MSE) against a probability-only target (logits
    reconstructed) and, if ``[shift] enabled``, a shifted-shadow-data block.
    Writes ``report.csv``, ``report.md`` and ``report.json``.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    target = run_target(cfg, out)
    grid = cfg["attack"]["fpr_grid"]
    settings = {
        "same-architecture": {},
        "mismatched-architecture": {"hidden": cfg["report"]["mismatch_hidden"],
                                    "activation": cfg["report"]["mismatch_activation"]},
    }
    no_shift = {"enabled": False}
    runs = []
    for setting, shadow_over in settings.items():
        for mode in ("plain", "kl", "mse"):
            runs.append((setting, METHOD_LABELS[mode],
                         with_overrides(cfg, shadows={**shadow_over, "training_mode": mode},
                                        target={"oracle_mode": "logits"}, shift=no_shift)))
        runs.append((setting, "GLiRA(MSE, reconstructed logits)",
                     with_overrides(cfg, shadows={**shadow_over, "training_mode": "mse"},
                                    target={"oracle_mode": "probabilities"}, shift=no_shift)))
    if cfg["shift"]["enabled"]:
        for mode in ("plain", "kl", "mse"):
            runs.append(("same-architecture, shifted", METHOD_LABELS[mode],
                         with_overrides(cfg, shadows={"training_mode": mode},
                                        target={"oracle_mode": "logits"})))
    rows = []
    for setting, method, run_cfg in runs:
        slug = f"{setting}__{method}".replace(" ", "_").replace(",", "").replace("(", "").replace(")", "")
        run_dir = out / "report" / slug
        run_dir.mkdir(parents=True, exist_ok=True)
        save_model(target, run_dir / "target.json", role="target")
        row = {"setting": setting, "method": method}
        try:
            ensemble = run_shadows(run_cfg, run_dir, target)
            _, report = run_attack(run_cfg, run_dir, target, ensemble)
            row.update(_report_row(report, grid), status="ok")
        except Exception as exc:  # keep the table well-formed
            log.warning("report run %s / %s failed: %s", setting, method, exc)
            row.update(status=f"failed: {type(exc).__name__}: {exc}")
        rows.append(row)
    _write_table(out / "report.csv", rows)
    dataset = build_dataset(cfg)
    plan = build_plan(cfg, dataset)
    recon = reconstruction_report(target, dataset.subset(plan.target_train_ids)).to_dict()
    (out / "report.json").write_text(json.dumps({"rows": rows, "reconstruction": recon,
                                                 "fpr_grid": list(grid)}, indent=1) + "\n")
    (out / "report.md").write_text(_markdown_table(rows, grid, recon))
    return rows


def _markdown_table(rows, grid, recon):
    cols = ["setting", "method", "auc"] + [f"tpr@{f:g}" for f in grid] + ["status"]
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for r in rows:
        cells = []
        for c in cols:
            v = r.get(c, "")
            cells.append(f"{v:.4f}" if isinstance(v, float) else str(v))
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")
    lines.append(f"Target logit reconstruction: mean |error| {recon['mean_abs_error']:.4g}, "
                 f"max |error| {recon['max_abs_error']:.4g}, "
                 f"mean |sum of logits| {recon['logit_sum_estimate']:.4g}.")
    return "\n".join(lines) + "\n"
