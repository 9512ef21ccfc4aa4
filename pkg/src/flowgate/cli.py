"""flowgate command line: ingest | select-features | train | classify |
evaluate | pipeline | compare.

Every stage reads and writes files so runs can be resumed and compared.
All randomness comes from explicit seeds; output artifacts embed a hash of
the config that produced them. Exit codes: 0 success, 2 config/validation
error, 3 runtime/data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .bat import BatConfig, run as run_bat, wrapper_fitness
from .dataset import (EncodedDataset, FlowClass, N_CLASSES, dataset_hash,
                      encode, load_dataset, parse_kdd_csv, save_dataset,
                      stratified_downsample)
from .metrics import KDD99_COST_MATRIX, evaluate as evaluate_metrics
from .wrf import (Forest, ForestConfig, TreeConfig, fit, load_forest,
                  predict_batch, save_forest)

MASK_FORMAT = "flowgate-mask-v1"


class ConfigError(Exception):
    """Invalid configuration or missing input; exit code 2."""


class DataError(Exception):
    """Runtime or data failure inside a stage; exit code 3."""


def _require_file(path, what):
    if not os.path.isfile(path):
        raise ConfigError(f"{what} not found: {path}")
    return path


def _config_hash(doc) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _load_json(path, what):
    _require_file(path, what)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path} is not valid JSON: {exc}") from exc


def _write_json(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------- configs

BAT_KEYS = {
    "n_bats", "n_subgroups", "n_iterations", "w_max", "w_min", "c_max",
    "c_min", "f_shrink_max", "f_shrink_min", "freq_min", "freq_max",
    "alpha", "gamma", "loudness_init", "pulse_rate_init", "penalty",
    "use_mutation", "use_self_learning",
}
PROBE_KEYS = {"probe_train_size", "probe_valid_size"}


def bat_config_from_doc(doc, seed) -> tuple:
    unknown = set(doc) - BAT_KEYS - PROBE_KEYS
    if unknown:
        raise ConfigError(f"unknown bat config keys: {sorted(unknown)}")
    cfg = BatConfig(seed=seed,
                    **{k: v for k, v in doc.items() if k in BAT_KEYS})
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(f"invalid bat config: {exc}") from exc
    probe = {"probe_train_size": doc.get("probe_train_size", 8000),
             "probe_valid_size": doc.get("probe_valid_size", 8000)}
    return cfg, probe


def rf_config_from_doc(doc) -> ForestConfig:
    if doc.get("baseline", False):
        return ForestConfig.baseline(
            n_trees=doc.get("n_trees", 100),
            tree=TreeConfig(max_depth=doc.get("max_depth", 20),
                            min_samples_leaf=doc.get("min_samples_leaf", 2),
                            max_features=doc.get("max_features", None)))
    cw = doc.get("class_weights", "default")
    if cw == "default":
        cfg = ForestConfig()
        cw = cfg.class_weights
    return ForestConfig(
        n_trees=doc.get("n_trees", 100),
        tree=TreeConfig(max_depth=doc.get("max_depth", 20),
                        min_samples_leaf=doc.get("min_samples_leaf", 2),
                        max_features=doc.get("max_features", None)),
        class_weights=tuple(cw) if cw is not None else None,
        use_weight_updates=doc.get("use_weight_updates", True),
        use_weighted_vote=doc.get("use_weighted_vote", True),
        invert_majority_beta=doc.get("invert_majority_beta", False),
    )


def load_cost_matrix(path) -> np.ndarray:
    _require_file(path, "cost matrix")
    try:
        matrix = np.loadtxt(path, delimiter=",", dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"cannot parse cost matrix {path}: {exc}") from exc
    if matrix.shape != (N_CLASSES, N_CLASSES):
        raise DataError(f"cost matrix {path} must be 5x5, "
                        f"got {matrix.shape}")
    return matrix


# ----------------------------------------------------------------- stages

def cmd_ingest(input_path, targets, seed, output):
    _require_file(input_path, "input dataset")
    try:
        records = parse_kdd_csv(input_path)
        if not records:
            raise DataError(f"{input_path}: no records")
        ds = stratified_downsample(encode(records), targets, seed)
        save_dataset(ds, output)
    except (ValueError, OSError) as exc:
        raise DataError(str(exc)) from exc
    return ds


def probe_split(ds: EncodedDataset, train_size, valid_size, seed):
    """Probe train/valid subsets for wrapper fitness.

    Class shares follow the square root of the class counts rather than the
    raw counts: under intrusion-scale imbalance a proportional probe would
    hold only a handful of rare-attack rows, and features that matter only
    for rare classes would never pay for themselves in probe accuracy. The
    square-root allocation keeps majority classes dominant while giving
    minority detectability a measurable weight in feature selection.
    """
    rng = np.random.default_rng(seed)
    n = ds.n_samples
    train_size = min(train_size, n // 2)
    valid_size = min(valid_size, n - train_size)
    counts = np.bincount(ds.y, minlength=N_CLASSES)
    shares = np.sqrt(counts, dtype=float)
    shares /= max(shares.sum(), 1.0)
    train_idx, valid_idx = [], []
    for j in range(N_CLASSES):
        idx = rng.permutation(np.flatnonzero(ds.y == j))
        k_train = max(1, round(shares[j] * train_size)) if idx.size else 0
        k_valid = max(1, round(shares[j] * valid_size)) if idx.size else 0
        k_train = min(k_train, max(1, idx.size // 2)) if idx.size else 0
        k_valid = min(k_valid, idx.size - k_train)
        train_idx.append(idx[:k_train])
        valid_idx.append(idx[k_train:k_train + k_valid])
    train_idx = np.sort(np.concatenate(train_idx))
    valid_idx = np.sort(np.concatenate(valid_idx))
    mk = lambda sel: EncodedDataset(X=ds.X[sel], y=ds.y[sel],
                                    feature_names=list(ds.feature_names),
                                    encoders=ds.encoders)
    return mk(train_idx), mk(valid_idx)


def cmd_select_features(data_path, config_doc, seed, out_path):
    ds = _load_dataset_checked(data_path)
    cfg, probe = bat_config_from_doc(config_doc, seed)
    train, valid = probe_split(ds, probe["probe_train_size"],
                               probe["probe_valid_size"], seed)

    def fitness(mask):
        return wrapper_fitness(mask, train, valid, eval_seed=seed,
                               penalty=cfg.penalty)

    try:
        result = run_bat(fitness, ds.n_features, cfg)
    except RuntimeError as exc:
        raise DataError(str(exc)) from exc
    doc = {
        "format": MASK_FORMAT,
        "bits": "".join(str(int(b)) for b in result.mask),
        "selected_features": [ds.feature_names[i]
                              for i in np.flatnonzero(result.mask)],
        "n_selected": int(result.mask.sum()),
        "fitness": float(result.fitness),
        "trace": [float(v) for v in result.trace],
        "seed": seed,
        "config_hash": _config_hash(config_doc),
    }
    _write_json(doc, out_path)
    return doc


def load_mask(path) -> np.ndarray:
    doc = _load_json(path, "feature mask")
    if doc.get("format") != MASK_FORMAT:
        raise DataError(f"{path}: not a flowgate mask file")
    return np.array([int(c) for c in doc["bits"]], dtype=np.uint8)


def _load_dataset_checked(path) -> EncodedDataset:
    _require_file(path, "ingested dataset")
    try:
        return load_dataset(path)
    except (ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load dataset {path}: {exc}") from exc


def cmd_train(data_path, mask_path, config_doc, seed, out_path):
    ds = _load_dataset_checked(data_path)
    mask = load_mask(mask_path)
    cfg = rf_config_from_doc(config_doc)
    try:
        forest = fit(ds, mask, cfg, seed)
    except (ValueError, RuntimeError) as exc:
        raise DataError(str(exc)) from exc
    save_forest(forest, out_path,
                extra={"seed": seed, "config_hash": _config_hash(config_doc)})
    return forest


def cmd_classify(model_path, data_path, out_path):
    _require_file(model_path, "model")
    forest = load_forest(model_path)
    ds = _load_dataset_checked(data_path)
    try:
        preds = predict_batch(forest, ds.X)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("index,true_class,predicted_class\n")
        for i, (t, p) in enumerate(zip(ds.y, preds)):
            fh.write(f"{i},{FlowClass(t).name},{FlowClass(p).name}\n")
    return preds


def cmd_evaluate(model_path, data_path, cost_path, out_path,
                 config_hash=None):
    _require_file(model_path, "model")
    forest = load_forest(model_path)
    ds = _load_dataset_checked(data_path)
    cost = load_cost_matrix(cost_path) if cost_path else KDD99_COST_MATRIX
    try:
        preds = predict_batch(forest, ds.X)
        rep = evaluate_metrics(ds.y, preds, cost)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    doc = rep.to_doc()
    doc["dataset_sha256"] = dataset_hash(data_path)
    doc["n_samples"] = int(ds.n_samples)
    if config_hash:
        doc["config_hash"] = config_hash
    _write_json(doc, out_path)
    return doc


# --------------------------------------------------------------- pipeline

def _pipeline_variant(bat_cfg: BatConfig, rf_cfg: ForestConfig) -> str:
    bat_base = (bat_cfg.n_subgroups == 1 and not bat_cfg.use_mutation
                and not bat_cfg.use_self_learning)
    rf_base = (rf_cfg.class_weights is None
               and not rf_cfg.use_weight_updates
               and not rf_cfg.use_weighted_vote)
    bat_full = (bat_cfg.n_subgroups > 1 and bat_cfg.use_mutation
                and bat_cfg.use_self_learning)
    rf_full = (rf_cfg.use_weight_updates and rf_cfg.use_weighted_vote
               and rf_cfg.class_weights is not None)
    if bat_base and rf_base:
        return "baseline"
    if bat_full and rf_full:
        return "improved"
    return "custom"


def cmd_pipeline(config_path):
    doc = _load_json(config_path, "pipeline config")
    for key in ("train_input", "test_input", "train_targets", "test_targets",
                "seed", "output_dir"):
        if key not in doc:
            raise ConfigError(f"pipeline config missing key {key!r}")
    _require_file(doc["train_input"], "training dataset")
    _require_file(doc["test_input"], "test dataset")
    if doc.get("cost_matrix"):
        _require_file(doc["cost_matrix"], "cost matrix")
    out_dir = doc["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    seed = int(doc["seed"])
    bat_doc = doc.get("bat", {})
    rf_doc = doc.get("rf", {})
    bat_cfg, _ = bat_config_from_doc(bat_doc, seed)
    rf_cfg = rf_config_from_doc(rf_doc)
    # hash only result-affecting keys so identical experiments agree
    # regardless of where their inputs and artifacts live
    cfg_hash = _config_hash({k: v for k, v in doc.items()
                             if k not in ("train_input", "test_input",
                                          "output_dir")})

    manifest = {
        "version": __version__,
        "config_hash": cfg_hash,
        "seed": seed,
        "variant": _pipeline_variant(bat_cfg, rf_cfg),
        "stages": {},
        "status": "running",
    }
    paths = {
        "train": os.path.join(out_dir, "train.json"),
        "test": os.path.join(out_dir, "test.json"),
        "mask": os.path.join(out_dir, "mask.json"),
        "model": os.path.join(out_dir, "model.json"),
        "report": os.path.join(out_dir, "report.json"),
    }
    manifest_path = os.path.join(out_dir, "manifest.json")

    def stage(name, fn):
        start = time.monotonic()
        try:
            fn()
        except Exception:
            manifest["stages"][name] = {
                "status": "failed",
                "seconds": round(time.monotonic() - start, 3)}
            manifest["status"] = f"failed at {name}"
            _write_json(manifest, manifest_path)
            raise
        manifest["stages"][name] = {
            "status": "ok", "seconds": round(time.monotonic() - start, 3)}

    stage("ingest", lambda: (
        cmd_ingest(doc["train_input"], doc["train_targets"], seed,
                   paths["train"]),
        cmd_ingest(doc["test_input"], doc["test_targets"], seed + 1,
                   paths["test"])))
    stage("select-features", lambda: cmd_select_features(
        paths["train"], bat_doc, seed, paths["mask"]))
    stage("train", lambda: cmd_train(
        paths["train"], paths["mask"], rf_doc, seed, paths["model"]))
    stage("evaluate", lambda: cmd_evaluate(
        paths["model"], paths["test"], doc.get("cost_matrix"),
        paths["report"], config_hash=cfg_hash))

    manifest["status"] = "ok"
    manifest["dataset_sha256"] = {
        "train": dataset_hash(paths["train"]),
        "test": dataset_hash(paths["test"]),
    }
    _write_json(manifest, manifest_path)
    return manifest


# ---------------------------------------------------------------- compare

COMPARE_METRICS = ("accuracy", "false_alarm_rate", "cost")


def cmd_compare(dir_a, dir_b, out_path=None):
    rows = []
    reports = []
    for d in (dir_a, dir_b):
        rp = os.path.join(d, "report.json")
        if not os.path.isfile(rp):
            raise DataError(f"run {d}: missing report.json")
        reports.append(_load_json(rp, "report"))
    if reports[0].get("dataset_sha256") != reports[1].get("dataset_sha256"):
        raise DataError(
            "runs were evaluated on different test sets "
            f"({dir_a} vs {dir_b}); refusing to compare")
    rows.append(("metric", dir_a, dir_b, "delta"))
    for key in COMPARE_METRICS:
        a, b = reports[0][key], reports[1][key]
        rows.append((key, f"{a:.6f}", f"{b:.6f}", f"{a - b:+.6f}"))
    for j in range(N_CLASSES):
        name = FlowClass(j).name
        a = reports[0]["per_class"][name]["recall"]
        b = reports[1]["per_class"][name]["recall"]
        rows.append((f"recall_{name}", f"{a:.6f}", f"{b:.6f}",
                     f"{a - b:+.6f}"))
    csv_text = "\n".join(",".join(r) for r in rows) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    table = "\n".join(
        "  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in rows)
    return csv_text, table


# ------------------------------------------------------------------ main

def _parse_targets(text):
    try:
        targets = [int(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"targets must be 5 comma-separated integers, "
                          f"got {text!r}") from None
    if len(targets) != N_CLASSES or any(t < 0 for t in targets):
        raise ConfigError(f"targets must be 5 non-negative integers, "
                          f"got {text!r}")
    return targets


def build_parser():
    parser = argparse.ArgumentParser(
        prog="flowgate",
        description="Two-stage intrusion detection: bat-algorithm feature "
                    "selection plus a cost-sensitive weighted random forest")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse, encode and down-sample a "
                                      "KDD-format file")
    p.add_argument("--input", required=True)
    p.add_argument("--targets", required=True,
                   help="per-class sample counts n0,n1,n2,n3,n4")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("select-features", help="run the bat algorithm")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="JSON file with bat parameters")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train the weighted random forest")
    p.add_argument("--data", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--config", help="JSON file with forest parameters")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("classify", help="predict classes for a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--cost", help="5x5 cost matrix CSV "
                                  "(default: KDD-99 competition matrix)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="run ingest, select-features, "
                                        "train and evaluate")
    p.add_argument("--config", required=True)

    p = sub.add_parser("compare", help="side-by-side metrics of two runs")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.add_argument("--out", help="write the comparison CSV here")

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if args.command == "ingest":
            cmd_ingest(args.input, _parse_targets(args.targets), args.seed,
                       args.output)
        elif args.command == "select-features":
            cfg = _load_json(args.config, "bat config") if args.config else {}
            doc = cmd_select_features(args.data, cfg, args.seed, args.out)
            print(f"selected {doc['n_selected']} features, "
                  f"fitness {doc['fitness']:.4f}")
        elif args.command == "train":
            cfg = _load_json(args.config, "rf config") if args.config else {}
            cmd_train(args.data, args.mask, cfg, args.seed, args.out)
        elif args.command == "classify":
            cmd_classify(args.model, args.data, args.out)
        elif args.command == "evaluate":
            doc = cmd_evaluate(args.model, args.data, args.cost, args.out)
            print(f"accuracy {doc['accuracy']:.4f}  "
                  f"FA {doc['false_alarm_rate']:.4f}  "
                  f"cost {doc['cost']:.4f}")
        elif args.command == "pipeline":
            manifest = cmd_pipeline(args.config)
            print(f"pipeline ok ({manifest['variant']}), "
                  f"artifacts in place")
        elif args.command == "compare":
            _, table = cmd_compare(args.run_a, args.run_b, args.out)
            print(table)
    except ConfigError as exc:
        print(f"flowgate: {exc}", file=sys.stderr)
        return 2
    except (DataError, OSError) as exc:
        print(f"flowgate: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
