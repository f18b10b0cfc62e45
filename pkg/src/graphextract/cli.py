"""Command-line entry points.

Commands: train-target, serve, attack, reconstruct-graph, grid, sweep,
report.  A JSON --config file provides defaults; explicit flags win.  Exit
codes: 0 success, 2 config error, 3 runtime failure, 4 budget refusal.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from graphextract import graphs
from graphextract.attack import (
    AttackBudgetError,
    AttackConfig,
    AttackError,
    AttackInputError,
    run_attack,
)
from graphextract.config import ConfigError, load_config, section
from graphextract.harness import (
    Experiment,
    HarnessConfig,
    MetricsReport,
    RunRecord,
    budget_sweep,
    defense_sweep,
    emit_report,
    hyper_sweep,
    run_grid,
)
from graphextract.metrics import accuracy, fidelity
from graphextract.nn import checkpoint as ckpt
from graphextract.nn.models import build_model, target_config
from graphextract.nn.train import TrainConfig, train_model
from graphextract.oracle import BudgetExceededError, Oracle, OracleConfig
from graphextract.service import OracleServer, RemoteQueryError
from graphextract.structure import StructureLearnConfig, export_adjacency, learn_structure
from graphextract.tsne import TsneConfig

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_BUDGET = 0, 2, 3, 4


def _merged(cfg, name, flags):
    """Config-file section with non-None flag overrides applied."""
    out = section(cfg, name)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _split_spec(cfg, seed):
    s = section(cfg, "split")
    return graphs.SplitSpec(s.get("target_train_fraction", 0.2),
                            s.get("query_fraction", 0.3),
                            s.get("test_fraction", 0.5), seed=seed)


def _load_graph(cfg, args):
    ds = _merged(cfg, "dataset", {"path": getattr(args, "dataset", None)})
    if not ds.get("path"):
        raise ConfigError("no dataset path given (flag --dataset or config dataset.path)")
    return graphs.load_dataset(ds["path"], name=ds.get("name"))


def _structure_config(cfg):
    return StructureLearnConfig(**section(cfg, "structure"))


def _tsne_config(cfg, seed):
    t = section(cfg, "oracle").get("tsne", {})
    t.setdefault("seed", seed)
    return TsneConfig(**t)


def cmd_train_target(args):
    cfg = load_config(args.config) if args.config else {}
    graph = _load_graph(cfg, args)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    tsec = _merged(cfg, "target", {"kind": args.kind,
                                   "embedding_size": args.embedding_size,
                                   "epochs": args.epochs,
                                   "batch_size": args.batch_size})
    kind = tsec.get("kind", "sage")
    train, query, test = graphs.split_inductive(graph, _split_spec(cfg, seed))
    model = build_model(target_config(kind, graph.d, graph.class_count,
                                      embedding_size=tsec.get("embedding_size", 256)),
                        seed)
    tcfg = TrainConfig(epochs=tsec.get("epochs", 200),
                       batch_size=tsec.get("batch_size", 512),
                       lr=tsec.get("lr", 1e-3),
                       val_fraction=tsec.get("val_fraction", 0.1), seed=seed)
    model = train_model(model, train, tcfg)
    out = Path(args.out or cfg.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    path = ckpt.save_model(model, out / ("target_%s_%s_seed%d.json" % (graph.name, kind, seed)))
    test_acc = accuracy(model, test)
    manifest = {"dataset": graph.name, "kind": kind, "seed": seed,
                "split": {"train": train.n, "query": query.n, "test": test.n},
                "best_val_acc": model.metadata.get("best_val_acc"),
                "test_accuracy": test_acc, "checkpoint": str(path)}
    (out / ("split_%s_seed%d.json" % (graph.name, seed))).write_text(
        json.dumps(manifest, indent=2) + "\n")
    print("checkpoint: %s" % path)
    print("test accuracy: %.4f" % test_acc)
    return EXIT_OK


def cmd_serve(args):
    cfg = load_config(args.config) if args.config else {}
    osec = _merged(cfg, "oracle", {"response_type": args.response_type,
                                   "noise_sigma": args.sigma,
                                   "budget": args.budget})
    model = ckpt.load_model(args.checkpoint)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    oracle = Oracle(model, OracleConfig(
        response_type=osec.get("response_type", "prediction"),
        noise_sigma=osec.get("noise_sigma", 0.0),
        budget=osec.get("budget"),
        tsne=_tsne_config(cfg, seed), noise_seed=seed))
    try:
        server = OracleServer(oracle, port=args.port)
    except OSError as exc:
        print("cannot bind port %d: %s" % (args.port, exc), file=sys.stderr)
        return EXIT_RUNTIME
    print("serving %s oracle on %s" % (oracle.config.response_type, server.address),
          flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return EXIT_OK


def cmd_attack(args):
    cfg = load_config(args.config) if args.config else {}
    graph = _load_graph(cfg, args)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    asec = _merged(cfg, "attack", {"scenario": args.scenario,
                                   "surrogate_kind": args.surrogate,
                                   "encoder_epochs": args.encoder_epochs,
                                   "classifier_epochs": args.classifier_epochs,
                                   "batch_size": args.batch_size,
                                   "budget_fraction": args.budget_fraction})
    scenario = asec.pop("scenario", None)
    if scenario is None:
        raise ConfigError("no attack scenario given")
    acfg = AttackConfig(scenario=scenario, seed=seed,
                        structure=_structure_config(cfg) if scenario.startswith("II") else None,
                        **asec)
    train, query, test = graphs.split_inductive(graph, _split_spec(cfg, seed))

    target_model = None
    if args.target_checkpoint:
        target_model = ckpt.load_model(args.target_checkpoint)
    if args.target:
        oracle = args.target   # served address
    elif target_model is not None:
        osec = section(cfg, "oracle")
        oracle = Oracle(target_model, OracleConfig(
            response_type=acfg.response_type,
            noise_sigma=osec.get("noise_sigma", 0.0),
            budget=osec.get("budget"),
            tsne=_tsne_config(cfg, seed), noise_seed=seed))
    else:
        raise ConfigError("need --target address or --target-checkpoint file")
    if acfg.scenario.startswith("I") and not acfg.scenario.startswith("II") \
            and query.edges.size == 0 and query.n > 1:
        raise ConfigError("scenario %s needs query-graph structure; the query "
                          "partition has no edges" % acfg.scenario)

    surrogate = run_attack(acfg, oracle, query)
    out = Path(args.out or cfg.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    doc = ckpt.model_to_dict(surrogate.encoder)
    doc["classifier"] = {"widths": list(surrogate.classifier.widths),
                         "params": {p: ckpt._encode_array(a)
                                    for p, a in surrogate.classifier.param_items()}}
    doc["provenance"] = surrogate.provenance
    spath = out / ("surrogate_%s_%s_seed%d.json" % (graph.name, acfg.surrogate_kind, seed))
    spath.write_text(json.dumps(doc) + "\n")
    print("surrogate checkpoint: %s" % spath)

    row = {"dataset": graph.name, "scenario": acfg.scenario,
           "response": acfg.response_type, "surrogate_kind": acfg.surrogate_kind,
           "seed": seed, "queries_used": surrogate.provenance["query_ledger"]["nodes_queried"],
           "surrogate_acc": accuracy(surrogate, test)}
    if target_model is not None:
        row["target_kind"] = target_model.config.kind
        row["target_acc"] = accuracy(target_model, test)
        row["fidelity"] = fidelity(surrogate, target_model, test)
    (out / ("attack_metrics_%s_seed%d.json" % (graph.name, seed))).write_text(
        json.dumps(row, indent=2) + "\n")
    for key in ("surrogate_acc", "target_acc", "fidelity"):
        if key in row:
            print("%s: %.4f" % (key, row[key]))
    return EXIT_OK


def cmd_reconstruct_graph(args):
    cfg = load_config(args.config) if args.config else {}
    graph = _load_graph(cfg, args)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    scfg = _structure_config(cfg)
    if args.cutoff is not None:
        scfg = replace(scfg, edge_cutoff=args.cutoff)
    if args.initial_k is not None:
        scfg = replace(scfg, initial_k=args.initial_k)
    train, query, test = graphs.split_inductive(graph, _split_spec(cfg, seed))
    result = learn_structure(query.features, query.labels, scfg, seed)
    out = Path(args.out or cfg.get("out_dir", "."))
    path = export_adjacency(result.adjacency, out / "edges.csv")
    print("learned %d edges over %d query nodes in %d iterations"
          % (int(result.adjacency.sum()) // 2, query.n, result.iterations))
    print("edge list: %s" % path)
    return EXIT_OK


def _experiment(cfg, args, seed):
    graph = _load_graph(cfg, args)
    tsec = section(cfg, "target")
    asec = section(cfg, "attack")
    ssec = section(cfg, "split")
    hcfg = HarnessConfig(
        train_fraction=ssec.get("target_train_fraction", 0.2),
        query_fraction=ssec.get("query_fraction", 0.3),
        test_fraction=ssec.get("test_fraction", 0.5),
        embedding_size=tsec.get("embedding_size", 256),
        target_epochs=tsec.get("epochs", 200),
        target_batch=tsec.get("batch_size", 512),
        encoder_epochs=asec.get("encoder_epochs", 200),
        classifier_epochs=asec.get("classifier_epochs", 300),
        attack_batch=asec.get("batch_size", 512),
        encoder_hidden=asec.get("encoder_hidden", 256),
        structure=_structure_config(cfg),
        tsne=_tsne_config(cfg, seed))
    return Experiment(graph, config=hcfg)


def cmd_grid(args):
    cfg = load_config(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    gsec = section(cfg, "grid")
    exp = _experiment(cfg, args, seed)
    reps = gsec.get("repetitions", 5)
    report = run_grid([exp],
                      targets=gsec.get("targets", ["gin", "gat", "sage"]),
                      surrogates=gsec.get("surrogates", ["gin", "gat", "sage"]),
                      responses=gsec.get("responses",
                                         ["projection", "prediction", "embedding"]),
                      scenario_type=gsec.get("scenario_type", "I"),
                      repetitions=reps,
                      seeds=gsec.get("seeds", [seed + i for i in range(reps)]))
    out = args.out or cfg.get("out_dir", "grid_out")
    paths = emit_report(report, out)
    print("grid: %d records (%d failed), results at %s"
          % (len(report.records), sum(1 for r in report.records if r.error),
             paths["results"]))
    return EXIT_RUNTIME if report.partial else EXIT_OK


def cmd_sweep(args):
    cfg = load_config(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    ssec = _merged(cfg, "sweep", {"axis": args.axis})
    axis = ssec.get("axis")
    values = [float(v) for v in (args.values or ssec.get("values", []))]
    reps = ssec.get("repetitions", 1)
    seeds = [seed + i for i in range(reps)]
    tk = ssec.get("target_kind", "sage")
    sk = ssec.get("surrogate_kind", "sage")
    scenario = ssec.get("scenario", "I.1")
    exp = _experiment(cfg, args, seed)
    if axis == "budget":
        records = budget_sweep(exp, tk, sk, scenario, values, reps, seeds)
    elif axis == "sigma":
        records = defense_sweep(exp, tk, sk, scenario, values, reps, seeds)
    elif axis in ("hidden", "epochs", "batch"):
        records = hyper_sweep(exp, tk, sk, scenario, axis, values, reps, seeds)
    else:
        raise ConfigError("unknown sweep axis %r" % axis)
    report = MetricsReport(records=list(records), repetitions=reps)
    out = args.out or cfg.get("out_dir", "sweep_out")
    paths = emit_report(report, out, sweeps={axis: records})
    print("sweep over %s: %d records, results at %s"
          % (axis, len(records), paths["sweep_%s" % axis]))
    return EXIT_OK


def cmd_report(args):
    """Rebuild aggregates and plots from a stored results.csv."""
    src = Path(args.results)
    if not src.is_file():
        raise ConfigError("results file not found: %s" % src)
    import csv as _csv
    records = []
    with src.open() as fh:
        for row in _csv.DictReader(fh):
            records.append(RunRecord(
                row["dataset"], row["scenario"], row["response"],
                row["target_kind"], row["surrogate_kind"], int(row["seed"]),
                float(row["target_acc"]), float(row["surrogate_acc"]),
                float(row["fidelity"]), int(row["queries_used"]),
                float(row["wall_seconds"])))
    report = MetricsReport(records=records)
    paths = emit_report(report, args.out or src.parent)
    print("aggregates: %s" % paths["aggregates"])
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="graphextract",
        description="Train inductive GNN targets, serve them as black-box "
                    "oracles, and extract surrogate models.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train-target", help="train a target model on a dataset split")
    t.add_argument("--dataset", help="dataset directory")
    t.add_argument("--kind", choices=["sage", "gat", "gin"])
    t.add_argument("--embedding-size", type=int, dest="embedding_size")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int, dest="batch_size")
    t.set_defaults(func=cmd_train_target)

    s = sub.add_parser("serve", help="serve a checkpoint as a black-box oracle")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--response-type", dest="response_type",
                   choices=["prediction", "embedding", "projection"])
    s.add_argument("--port", type=int, default=8180)
    s.add_argument("--sigma", type=float, help="gaussian noise level")
    s.add_argument("--budget", type=int, help="max distinct query nodes")
    s.set_defaults(func=cmd_serve)

    a = sub.add_parser("attack", help="run one extraction attack")
    a.add_argument("--scenario", choices=list("I.1 I.2 I.3 II.1 II.2 II.3".split()))
    a.add_argument("--dataset", help="dataset directory")
    a.add_argument("--surrogate", choices=["sage", "gat", "gin"])
    a.add_argument("--target", help="served oracle address (http://host:port)")
    a.add_argument("--target-checkpoint", dest="target_checkpoint",
                   help="local target checkpoint (in-process oracle + metrics)")
    a.add_argument("--encoder-epochs", type=int, dest="encoder_epochs")
    a.add_argument("--classifier-epochs", type=int, dest="classifier_epochs")
    a.add_argument("--batch-size", type=int, dest="batch_size")
    a.add_argument("--budget-fraction", type=float, dest="budget_fraction")
    a.set_defaults(func=cmd_attack)

    r = sub.add_parser("reconstruct-graph",
                       help="learn query-graph structure from features only")
    r.add_argument("--dataset", help="dataset directory")
    r.add_argument("--cutoff", type=float, help="edge cutoff on the similarity")
    r.add_argument("--initial-k", type=int, dest="initial_k")
    r.set_defaults(func=cmd_reconstruct_graph)

    g = sub.add_parser("grid", help="run the target x surrogate x response grid")
    g.add_argument("--dataset", help="dataset directory")
    g.set_defaults(func=cmd_grid)

    w = sub.add_parser("sweep", help="budget / defense / hyperparameter sweeps")
    w.add_argument("--dataset", help="dataset directory")
    w.add_argument("--axis", choices=["budget", "sigma", "hidden", "epochs", "batch"])
    w.add_argument("--values", nargs="+")
    w.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("report", help="rebuild aggregates and plots from results.csv")
    rp.add_argument("--results", required=True, help="path to results.csv")
    rp.set_defaults(func=cmd_report)

    for cmd in (t, s, a, r, g, w, rp):
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--out", help="output directory")
        cmd.add_argument("--config", help="JSON run configuration")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, graphs.DatasetError, AttackInputError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except (BudgetExceededError, AttackBudgetError) as exc:
        print("budget refusal: %s" % exc, file=sys.stderr)
        return EXIT_BUDGET
    except RemoteQueryError as exc:
        if exc.code == 429:
            print("budget refusal: %s" % exc, file=sys.stderr)
            return EXIT_BUDGET
        print("runtime failure: %s" % exc, file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError, AttackError) as exc:
        print("runtime failure: %s" % exc, file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
