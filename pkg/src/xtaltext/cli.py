"""Command-line entry point wiring generation, training, and evaluation.

Every subcommand validates its inputs, writes its outputs under one output
directory, and drops a manifest (normalized config, config hash, seed, format
versions) sufficient to reproduce the run bit-exactly. Exit codes: 0 success,
1 validation error, 2 runtime failure. Errors print as `error[code]: message`.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .augment import AugmentConfig
from .datasynth import (
    APPLICATION_PHRASES, SynthConfig, dataset_summary, gen_dataset,
    load_dataset, write_dataset,
)
from .encoders import GraphEncoderConfig, build_model
from .evaluation import (
    CHOICE_SUBJECTS, cluster_metrics, embed_graphs, embed_texts,
    embed_token_sequences, gen_multiple_choice, retrieval_report,
    zero_shot_classify,
)
from .objective import LossWeights
from .structures import FeaturizerConfig, StructureError, structure_to_cif_lite
from .textproc import build_vocab, load_vocab, save_vocab, tokenize, detokenize
from .trainer import (
    CheckpointError, ModelConfig, TrainConfig, derive_seed, load_checkpoint,
    model_config_from_dict, prepare_pairs, save_checkpoint, split_dataset,
    train, train_config_from_dict,
)

FORMAT_VERSIONS = {
    "checkpoint": 1,
    "structures": 1,
    "corpus": 1,
    "vocab": 1,
    "metrics": 1,
    "reports": 1,
}

APPLICATION_PHRASE_LIST = list(APPLICATION_PHRASES.values())


class CliError(Exception):
    """Validation-level failure; maps to exit code 1."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


# -- config handling ----------------------------------------------------------

def default_config() -> dict:
    synth = asdict(SynthConfig())
    synth["element_pool"] = list(synth["element_pool"])
    synth["system_weights"] = list(synth["system_weights"])
    model = asdict(ModelConfig())
    train_cfg = asdict(TrainConfig())
    train_cfg["split_ratios"] = list(train_cfg["split_ratios"])
    train_cfg["augment"]["op_weights"] = list(train_cfg["augment"]["op_weights"])
    return {
        "seed": 0,
        "synth": synth,
        "model": model,
        "train": train_cfg,
        "vocab": {"min_freq": 2, "max_size": 4096},
    }


def _merge(base: dict, override: dict, path: str, errors: list) -> dict:
    out = dict(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            errors.append(("config-unknown-key", f"unknown config key {where!r}"))
            continue
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, where, errors)
        else:
            out[key] = value
    return out


def _range_checks(cfg: dict, errors: list) -> None:
    def bad(field, message):
        errors.append(("config-range", f"{field}: {message}"))

    train_cfg = cfg["train"]
    if not isinstance(train_cfg["batch_size"], int) or train_cfg["batch_size"] < 2:
        bad("train.batch_size", "must be an integer >= 2 (pair losses need negatives)")
    ratios = train_cfg["split_ratios"]
    if len(ratios) != 3 or min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
        bad("train.split_ratios", "must be three positive ratios summing to 1")
    if not 0.0 <= train_cfg["p_keep"] <= 1.0:
        bad("train.p_keep", "must lie in [0, 1]")
    if train_cfg["steps"] < 0 or train_cfg["learning_rate"] < 0:
        bad("train.steps/learning_rate", "must be nonnegative")
    aug = train_cfg["augment"]
    if not 0.0 <= aug["edge_removal_rate"] < 1.0:
        bad("train.augment.edge_removal_rate", "must lie in [0, 1)")
    if not 0.0 <= aug["node_drop_rate"] < 1.0:
        bad("train.augment.node_drop_rate", "must lie in [0, 1)")
    if not 0.0 < aug["subgraph_ratio"] <= 1.0:
        bad("train.augment.subgraph_ratio", "must lie in (0, 1]")
    if len(aug["op_weights"]) != 4 or min(aug["op_weights"]) < 0 or sum(aug["op_weights"]) == 0:
        bad("train.augment.op_weights", "must be 4 nonnegative weights, not all zero")
    model = cfg["model"]
    if model["text_hidden"] % model["text_heads"] != 0:
        bad("model.text_hidden", "must be divisible by model.text_heads")
    if model["graph"]["element_vocab_size"] < 104:
        bad("model.graph.element_vocab_size", "must be >= 104")
    if model["graph"]["variant"] not in ("cgcnn", "painn"):
        bad("model.graph.variant", "must be 'cgcnn' or 'painn'")
    if model["featurizer"]["cutoff"] <= 0 or model["featurizer"]["k_rbf"] < 2 \
            or model["featurizer"]["max_neighbors"] < 1:
        bad("model.featurizer", "cutoff > 0, k_rbf >= 2, max_neighbors >= 1 required")
    if model["d_joint"] < 1:
        bad("model.d_joint", "must be positive")
    synth = cfg["synth"]
    if synth["n_pairs"] < 1:
        bad("synth.n_pairs", "must be >= 1")
    if not synth["element_pool"]:
        bad("synth.element_pool", "must be non-empty")
    if len(synth["system_weights"]) != 7 or min(synth["system_weights"]) < 0 \
            or sum(synth["system_weights"]) == 0:
        bad("synth.system_weights", "must be 7 nonnegative weights, not all zero")
    if not 1 <= synth["sites_min"] <= synth["sites_max"]:
        bad("synth.sites_min/sites_max", "need 1 <= sites_min <= sites_max")
    vocab = cfg["vocab"]
    if vocab["min_freq"] < 1 or vocab["max_size"] < 1:
        bad("vocab.min_freq/max_size", "must be >= 1")


def validate_config(path: str | Path | None) -> dict:
    """Load, default-fill, and range-check a JSON run config.

    All violations are collected and reported together, not fail-fast.
    """
    raw: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise CliError("config-missing", f"config file {p} does not exist")
        text = p.read_text(encoding="utf-8").strip()
        if text:
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as exc:
                raise CliError("config-parse", f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise CliError("config-parse", "config root must be a JSON object")
    errors: list[tuple[str, str]] = []
    cfg = _merge(default_config(), raw, "", errors)
    # the top-level seed feeds both generation and training unless overridden
    if "seed" in raw:
        if "synth" not in raw or "seed" not in raw.get("synth", {}):
            cfg["synth"]["seed"] = cfg["seed"]
        if "train" not in raw or "seed" not in raw.get("train", {}):
            cfg["train"]["seed"] = cfg["seed"]
    try:
        _range_checks(cfg, errors)
    except (KeyError, TypeError) as exc:
        errors.append(("config-type", f"malformed config structure: {exc!r}"))
    if errors:
        lines = "; ".join(f"[{code}] {msg}" for code, msg in errors)
        raise CliError("config-invalid", lines)
    return cfg


def _configs_from_normalized(cfg: dict) -> tuple[SynthConfig, ModelConfig, TrainConfig, dict]:
    synth = dict(cfg["synth"])
    synth["element_pool"] = tuple(synth["element_pool"])
    synth["system_weights"] = tuple(synth["system_weights"])
    return (
        SynthConfig(**synth),
        model_config_from_dict(cfg["model"]),
        train_config_from_dict(cfg["train"]),
        cfg["vocab"],
    )


def write_manifest(out_dir: Path, command: str, cfg: dict, seed: int) -> None:
    blob = json.dumps(cfg, sort_keys=True).encode("utf-8")
    manifest = {
        "command": command,
        "package_version": __version__,
        "seed": seed,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "format_versions": FORMAT_VERSIONS,
        "normalized_config": cfg,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- run/data loading ---------------------------------------------------------

def _load_run(run_dir: str, data_dir: str):
    run = Path(run_dir)
    ckpt_path = run / "checkpoint.bin"
    vocab_path = run / "vocab.txt"
    for p in (ckpt_path, vocab_path):
        if not p.exists():
            raise CliError("missing-input", f"expected {p} from a train run")
    ckpt = load_checkpoint(ckpt_path)
    vocab = load_vocab(vocab_path)
    if vocab.size != ckpt.vocab_size:
        raise CliError("vocab-mismatch",
                       f"vocab size {vocab.size} does not match checkpoint {ckpt.vocab_size}")
    records = load_dataset(Path(data_dir))
    splits = split_dataset(records, ckpt.train_cfg.split_ratios, ckpt.train_cfg.seed)
    return ckpt, vocab, records, splits


def _prepare_split(split_records, vocab, model_cfg):
    return prepare_pairs(split_records, vocab, model_cfg)


# -- subcommand handlers ------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = validate_config(args.config)
    if args.n is not None:
        cfg["synth"]["n_pairs"] = args.n
    if args.seed is not None:
        cfg["seed"] = args.seed
        cfg["synth"]["seed"] = args.seed
        cfg["train"]["seed"] = args.seed
    synth_cfg, _, _, _ = _configs_from_normalized(cfg)
    records = gen_dataset(synth_cfg)
    out = Path(args.out)
    write_dataset(records, out)
    write_manifest(out, "gen-data", cfg, synth_cfg.seed)
    print(f"wrote {len(records)} pairs to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = validate_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
        cfg["train"]["seed"] = args.seed
    if args.steps is not None:
        cfg["train"]["steps"] = args.steps
    _, model_cfg, train_cfg, vocab_cfg = _configs_from_normalized(cfg)

    records = load_dataset(Path(args.data))
    train_records, val_records, test_records = split_dataset(
        records, train_cfg.split_ratios, train_cfg.seed)
    vocab = build_vocab([r.text for r in train_records],
                        min_freq=vocab_cfg["min_freq"], max_size=vocab_cfg["max_size"])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_vocab(vocab, out / "vocab.txt")

    train_pairs = prepare_pairs(train_records, vocab, model_cfg)
    val_pairs = prepare_pairs(val_records, vocab, model_cfg)
    model = build_model(
        model_cfg.graph, model_cfg.text_config(vocab.size),
        edge_dim=model_cfg.featurizer.k_rbf, d_joint=model_cfg.d_joint,
        shared_projector=model_cfg.shared_projector, seed=train_cfg.seed)
    result = train(train_pairs, val_pairs, model, train_cfg)

    with open(out / "metrics.jsonl", "w", encoding="utf-8") as fh:
        for row in result.metrics:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    save_checkpoint(out / "checkpoint.bin", result.model, model_cfg, train_cfg,
                    vocab.size, step=result.step)
    write_manifest(out, "train", cfg, train_cfg.seed)
    last = result.metrics[-1]["total"] if result.metrics else float("nan")
    print(f"trained {result.step} steps ({len(train_records)}/{len(val_records)}/"
          f"{len(test_records)} split); final loss {last:.4f}; checkpoint at "
          f"{out / 'checkpoint.bin'}")
    return 0


def _retrieval_reports(model, pairs, pool_size, ks, seed, directions):
    reports = []
    for direction in directions:
        from .evaluation import retrieval_accuracy
        reports.append(retrieval_accuracy(model, pairs, pool_size, ks, direction, seed))
    return reports


def cmd_eval_retrieval(args) -> int:
    ckpt, vocab, _, (train_r, _, test_r) = _load_run(args.run, args.data)
    pairs = _prepare_split(test_r, vocab, ckpt.model_cfg)
    pool = args.pool or len(pairs)
    ks = tuple(args.ks)
    directions = ("text->graph", "graph->text") if args.direction == "both" else (args.direction,)
    reports = _retrieval_reports(ckpt.model, pairs, pool, ks, args.seed, directions)
    out = Path(args.out or Path(args.run) / "eval-retrieval")
    _write_json(out / "retrieval_report.json",
                {"reports": [r.as_dict() for r in reports], "checkpoint_step": ckpt.step})
    with open(out / "ranks.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["direction", "query_id", "rank"])
        for report in reports:
            for qid, rank in zip(report.query_ids, report.ranks):
                writer.writerow([report.direction, qid, rank])
    write_manifest(out, "eval-retrieval", {"pool": pool, "ks": list(ks),
                                           "seed": args.seed,
                                           "direction": args.direction}, args.seed)
    for report in reports:
        tops = ", ".join(f"top-{k}: {v:.4f}" for k, v in sorted(report.topk.items()))
        print(f"{report.direction} (pool {report.pool_size}, {report.n_queries} queries): {tops}")
    return 0


def cmd_eval_zeroshot(args) -> int:
    import warnings as _warnings

    ckpt, vocab, _, (_, _, test_r) = _load_run(args.run, args.data)
    pairs = _prepare_split(test_r, vocab, ckpt.model_cfg)
    by_id = {p.pair_id: p for p in pairs}
    subjects = args.subjects or list(CHOICE_SUBJECTS)
    results = {}
    rows = []
    for subject in subjects:
        if subject not in CHOICE_SUBJECTS:
            raise CliError("bad-subject", f"unknown subject {subject!r}")
        n_correct = 0
        n_used = None
        for record in test_r:
            problem_seed = derive_seed(args.seed, "zeroshot", subject, record.record_id)
            with _warnings.catch_warnings():
                _warnings.simplefilter("ignore")
                problem = gen_multiple_choice(record.structure, subject,
                                              args.n_options, problem_seed)
            n_used = len(problem.options)
            choice = zero_shot_classify(ckpt.model, by_id[record.record_id].graph,
                                        problem.options, vocab, ckpt.model_cfg.max_len)
            n_correct += int(choice == problem.answer)
            rows.append({"id": record.record_id, "subject": subject,
                         "answer": problem.answer, "chosen": choice})
        results[subject] = {
            "accuracy": n_correct / len(test_r),
            "n_problems": len(test_r),
            "n_options": n_used,
        }
    out = Path(args.out or Path(args.run) / "eval-zeroshot")
    _write_json(out / "zeroshot_report.json",
                {"subjects": results, "problems": rows, "checkpoint_step": ckpt.step})
    write_manifest(out, "eval-zeroshot",
                   {"subjects": subjects, "n_options": args.n_options, "seed": args.seed},
                   args.seed)
    for subject, r in results.items():
        print(f"{subject}: accuracy {r['accuracy']:.4f} over {r['n_problems']} problems "
              f"({r['n_options']} options)")
    return 0


def cmd_app_matrix(args) -> int:
    from .evaluation import application_matrix

    ckpt, vocab, _, (_, _, test_r) = _load_run(args.run, args.data)
    pairs = _prepare_split(test_r, vocab, ckpt.model_cfg)
    phrases = args.apps or APPLICATION_PHRASE_LIST
    matrix = application_matrix(ckpt.model, [p.graph for p in pairs], phrases,
                                vocab, ckpt.model_cfg.max_len)
    materials = [{
        "id": r.record_id,
        "formula": r.labels.formula,
        "elements": sorted(set(r.structure.elements())),
        "li_bearing": "Li" in r.structure.elements(),
    } for r in test_r]
    out = Path(args.out or Path(args.run) / "app-matrix")
    _write_json(out / "app_matrix.json", {
        "applications": phrases,
        "materials": materials,
        "matrix": [[float(x) for x in row] for row in matrix],
    })
    with open(out / "app_matrix.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + phrases)
        for mat, row in zip(materials, matrix):
            writer.writerow([mat["id"]] + [f"{x:.10f}" for x in row])
    write_manifest(out, "app-matrix", {"apps": phrases, "seed": args.seed}, args.seed)
    print(f"wrote {matrix.shape[0]}x{matrix.shape[1]} similarity matrix to {out}")
    return 0


def cmd_cluster_metrics(args) -> int:
    ckpt, vocab, _, (_, _, test_r) = _load_run(args.run, args.data)
    pairs = _prepare_split(test_r, vocab, ckpt.model_cfg)
    z_graph = embed_graphs(ckpt.model, [p.graph for p in pairs])
    z_text = embed_token_sequences(ckpt.model, [p.seq.ids for p in pairs])
    label_sets = {
        "crystal_system": [r.labels.crystal_system for r in test_r],
        "oxide_type": [r.labels.oxide_type for r in test_r],
    }
    reports = []
    for emb_name, embs in (("graph", z_graph), ("text", z_text)):
        for label_name, labels in label_sets.items():
            if len(set(labels)) < 2:
                continue
            report = cluster_metrics(embs, labels, f"{emb_name}:{label_name}")
            reports.append(report.as_dict())
    out = Path(args.out or Path(args.run) / "cluster-metrics")
    _write_json(out / "cluster_metrics.json", {"reports": reports, "n_points": len(pairs)})
    write_manifest(out, "cluster-metrics", {"seed": args.seed}, args.seed)
    for r in reports:
        print(f"{r['label_name']}: DB {r['davies_bouldin']:.4f} "
              f"CH {r['calinski_harabasz']:.4f} silhouette {r['silhouette']:.4f}")
    return 0


def cmd_embed(args) -> int:
    from .evaluation import pca2d

    ckpt, vocab, records, splits = _load_run(args.run, args.data)
    chosen = {"train": splits[0], "val": splits[1], "test": splits[2],
              "all": records}[args.split]
    pairs = _prepare_split(chosen, vocab, ckpt.model_cfg)
    z_graph = embed_graphs(ckpt.model, [p.graph for p in pairs])
    z_text = embed_token_sequences(ckpt.model, [p.seq.ids for p in pairs])
    out = Path(args.out or Path(args.run) / "embed")
    out.mkdir(parents=True, exist_ok=True)
    for name, embs in (("graph", z_graph), ("text", z_text)):
        with open(out / f"embeddings_{name}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id"] + [f"d{i}" for i in range(embs.shape[1])])
            for pair, row in zip(pairs, embs):
                writer.writerow([pair.pair_id] + [f"{x:.12g}" for x in row])
        coords = pca2d(embs)
        with open(out / f"pca2d_{name}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "x", "y"])
            for pair, (x, y) in zip(pairs, coords):
                writer.writerow([pair.pair_id, f"{x:.12g}", f"{y:.12g}"])
    write_manifest(out, "embed", {"split": args.split, "seed": args.seed}, args.seed)
    print(f"exported {len(pairs)} graph/text embeddings to {out}")
    return 0


def cmd_attn(args) -> int:
    ckpt, vocab, records, _ = _load_run(args.run, args.data)
    if args.pair_id:
        matches = [r for r in records if r.record_id == args.pair_id]
        if not matches:
            raise CliError("missing-input", f"pair id {args.pair_id!r} not in dataset")
        text = matches[0].text
        tag = args.pair_id
    elif args.text:
        text, tag = args.text, "text"
    else:
        raise CliError("usage", "attn requires --pair-id or --text")
    seq = tokenize(text, vocab, ckpt.model_cfg.max_len)
    amap = ckpt.model.cls_attention_map(seq.ids)
    tokens = detokenize(seq.ids, vocab)
    out = Path(args.out or Path(args.run) / "attn")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"attention_{tag}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer"] + tokens)
        for layer, row in enumerate(amap):
            writer.writerow([layer] + [f"{x:.10f}" for x in row])
    write_manifest(out, "attn", {"target": tag, "seed": args.seed}, args.seed)
    print(f"wrote {amap.shape[0]}x{amap.shape[1]} CLS attention map to {path}")
    return 0


def cmd_baseline(args) -> int:
    ckpt, vocab, _, (_, _, test_r) = _load_run(args.run, args.data)
    pairs = _prepare_split(test_r, vocab, ckpt.model_cfg)
    pool = args.pool or len(pairs)
    out = Path(args.out or Path(args.run) / f"baseline-{args.mode}")
    if args.mode == "random-graph":
        fresh = build_model(
            ckpt.model_cfg.graph, ckpt.model_cfg.text_config(vocab.size),
            edge_dim=ckpt.model_cfg.featurizer.k_rbf, d_joint=ckpt.model_cfg.d_joint,
            shared_projector=ckpt.model_cfg.shared_projector, seed=args.seed)
        model = ckpt.model
        with torch.no_grad():
            model.graph_encoder.load_state_dict(fresh.graph_encoder.state_dict())
            model.graph_projector.load_state_dict(fresh.graph_projector.state_dict())
        reports = _retrieval_reports(model, pairs, pool, tuple(args.ks), args.seed,
                                     ("text->graph", "graph->text"))
        payload = {"mode": "random-graph",
                   "note": "graph encoder and graph projector re-randomized",
                   "reports": [r.as_dict() for r in reports]}
    else:  # cif-text
        z_text = embed_token_sequences(ckpt.model, [p.seq.ids for p in pairs])
        cif_texts = [structure_to_cif_lite(r.structure) for r in test_r]
        z_cif = embed_texts(ckpt.model, cif_texts, vocab, ckpt.model_cfg.max_len)
        reports = [
            retrieval_report(z_text, z_cif, pool, tuple(args.ks), args.seed,
                             "text->cif-text", ids=[p.pair_id for p in pairs]),
            retrieval_report(z_cif, z_text, pool, tuple(args.ks), args.seed,
                             "cif-text->text", ids=[p.pair_id for p in pairs]),
        ]
        payload = {"mode": "cif-text", "approximation": True,
                   "note": "graph branch replaced by the trained text branch "
                           "reading serialized CIF; approximates a text-only dual encoder",
                   "reports": [r.as_dict() for r in reports]}
    _write_json(out / "baseline_report.json", payload)
    write_manifest(out, "baseline", {"mode": args.mode, "pool": pool,
                                     "ks": list(args.ks), "seed": args.seed}, args.seed)
    for report in reports:
        tops = ", ".join(f"top-{k}: {v:.4f}" for k, v in sorted(report.topk.items()))
        print(f"[{args.mode}] {report.direction}: {tops}")
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="xtaltext", description=__doc__)
    parser.add_argument("--deterministic", action="store_true",
                        help="force single-threaded, bit-reproducible execution")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic pair dataset")
    p.add_argument("--n", type=int, default=None, help="number of pairs")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("train", help="train the joint model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(handler=cmd_train)

    def eval_common(p):
        p.add_argument("--run", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval-retrieval", help="zero-shot cross-modal retrieval")
    eval_common(p)
    p.add_argument("--pool", type=int, default=None, help="candidate pool size")
    p.add_argument("--ks", type=int, nargs="+", default=[1, 3, 10])
    p.add_argument("--direction", choices=["text->graph", "graph->text", "both"],
                   default="both")
    p.set_defaults(handler=cmd_eval_retrieval)

    p = sub.add_parser("eval-zeroshot", help="multiple-choice zero-shot classification")
    eval_common(p)
    p.add_argument("--subjects", nargs="+", default=None,
                   help=f"subset of {CHOICE_SUBJECTS}")
    p.add_argument("--n-options", type=int, default=10)
    p.set_defaults(handler=cmd_eval_zeroshot)

    p = sub.add_parser("app-matrix", help="material x application similarity matrix")
    eval_common(p)
    p.add_argument("--apps", nargs="+", default=None)
    p.set_defaults(handler=cmd_app_matrix)

    p = sub.add_parser("cluster-metrics", help="clustering indices over embeddings")
    eval_common(p)
    p.set_defaults(handler=cmd_cluster_metrics)

    p = sub.add_parser("embed", help="export joint embeddings as CSV")
    eval_common(p)
    p.add_argument("--split", choices=["train", "val", "test", "all"], default="test")
    p.set_defaults(handler=cmd_embed)

    p = sub.add_parser("attn", help="export a CLS attention map")
    eval_common(p)
    p.add_argument("--pair-id", default=None)
    p.add_argument("--text", default=None)
    p.set_defaults(handler=cmd_attn)

    p = sub.add_parser("baseline", help="reference baselines for retrieval")
    eval_common(p)
    p.add_argument("--mode", choices=["random-graph", "cif-text"], required=True)
    p.add_argument("--pool", type=int, default=None)
    p.add_argument("--ks", type=int, nargs="+", default=[1, 3, 10])
    p.set_defaults(handler=cmd_baseline)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.deterministic:
            torch.set_num_threads(1)
        return args.handler(args)
    except CliError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except (StructureError, CheckpointError) as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error[missing-input]: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error[runtime]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
