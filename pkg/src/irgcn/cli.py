"""``irgcn`` command line: split, train, evaluate, repurpose, synth, transform, gradcheck.

Every subcommand accepts ``--config FILE`` (flat ``key=value``; the keys
and defaults are listed by :func:`irgcn.config.describe`), ``--seed`` and
``--threads``. Explicit flags override the file. Exit status is 0 on
success, 1 on data or runtime errors and 2 on usage errors.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import checkpoint as ckpt_io
from . import config as cfgmod
from .datasets import (
    SynthSpec,
    kshot_split,
    percent_split,
    read_labels,
    synth_generate,
    transform_label_relations,
    write_labels,
    write_split,
)
from .estimator import RGCNLinkPredictor
from .evaluation import evaluate
from .exceptions import (
    CheckpointError,
    ConfigError,
    ContractError,
    DivergenceError,
    ParseError,
    ResolutionError,
    SamplingExhaustedError,
    SchemaError,
    SpecError,
    TransformError,
)
from .graph import load_triples, read_node_map, read_relations
from .model import FeatureStore, load_features, write_features
from .numerics import grad_check
from .repurpose import RepurposeSpec, rank_drugs
from .training import toy_loss, write_loss_trace

log = logging.getLogger("irgcn")

DATA_ERRORS = (
    CheckpointError, ContractError, DivergenceError, ParseError, ResolutionError,
    SamplingExhaustedError, SchemaError, SpecError, TransformError, OSError, ValueError,
)


# -- argument parsing ---------------------------------------------------------

def _typed(key):
    parse = cfgmod.SCHEMA[key][0]

    def convert(text):
        try:
            return parse(text)
        except ValueError as err:
            raise argparse.ArgumentTypeError(str(err)) from None

    convert.__name__ = key
    return convert


def _opt(p, key, *flags, **kw):
    flags = flags or ("--" + key.replace("_", "-"),)
    help_text = kw.pop("help", cfgmod.SCHEMA[key][2])
    if cfgmod.SCHEMA[key][0] is cfgmod._bool:
        p.add_argument(*flags, dest=key, default=None, action=argparse.BooleanOptionalAction,
                       help=help_text)
    else:
        p.add_argument(*flags, dest=key, default=None, type=_typed(key), help=help_text, **kw)


def _data_args(p, test=False):
    p.add_argument("--train", required=True, help="training triples TSV")
    p.add_argument("--background", help="extra training triples TSV (k-shot splits)")
    if test:
        p.add_argument("--test", required=True, help="test triples TSV")
    p.add_argument("--nodes", help="node map TSV fixing node ids")
    p.add_argument("--relations", help="relation schema TSV fixing relation ids")
    p.add_argument("--features", help="directory of <type>.csv feature files")


def _model_args(p):
    for key in cfgmod.MODEL_KEYS:
        _opt(p, key)


def _train_args(p):
    for key in cfgmod.TRAIN_KEYS:
        if key != "seed":
            _opt(p, key)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value run config file")
    _opt(common, "seed")
    _opt(common, "threads")

    parser = argparse.ArgumentParser(prog="irgcn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"irgcn {__version__} (checkpoint format {ckpt_io.FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic typed graph")
    p.add_argument("--out-dir", required=True)
    for key in ("n_types", "nodes_per_type", "n_relations", "edges_per_relation", "rare_edges",
                "feature_dim", "noise", "n_labels", "sharpness"):
        _opt(p, key)

    p = sub.add_parser("transform", parents=[common], help="refine relations by node labels")
    p.add_argument("--graph", required=True)
    p.add_argument("--nodes")
    p.add_argument("--relations")
    p.add_argument("--labels", required=True, help="type<TAB>name<TAB>label TSV")
    p.add_argument("--refine", required=True, help="comma list of relations to refine")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("split", parents=[common], help="k-shot or percentage edge split")
    p.add_argument("--graph", required=True)
    p.add_argument("--nodes")
    p.add_argument("--relations")
    _opt(p, "split_mode", "--mode", choices=("kshot", "percent"))
    _opt(p, "relation")
    _opt(p, "k")
    _opt(p, "p")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("train", parents=[common], help="train and write a checkpoint")
    _data_args(p)
    _model_args(p)
    _train_args(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--loss", help="loss trace CSV (default: loss.csv beside the checkpoint)")

    p = sub.add_parser("evaluate", parents=[common], help="rank test tails")
    p.add_argument("--checkpoint", required=True)
    _data_args(p, test=True)
    _opt(p, "candidates", choices=("all", "sampled"))
    _opt(p, "n_candidates")
    _opt(p, "filtered")
    p.add_argument("--raw", dest="filtered", action="store_false", default=None, help="same as --no-filtered")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("repurpose", parents=[common], help="rank candidate drugs per gene")
    p.add_argument("--checkpoint", required=True)
    _data_args(p)
    p.add_argument("--genes", required=True, help="file of target gene names, one per line")
    p.add_argument("--drugs", required=True, help="file of candidate drug names")
    p.add_argument("--validation", help="file of validation drug names")
    _opt(p, "target_relation")
    _opt(p, "top_k")
    _opt(p, "gene_as_head")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the loss")
    _opt(p, "mode")
    _opt(p, "scorer")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-5)
    return parser


def resolve_config(args):
    """Merge defaults, the ``--config`` file and explicit flags."""
    file_values = cfgmod.read_config(args.config) if args.config else {}
    cli_values = {k: getattr(args, k) for k in cfgmod.SCHEMA if hasattr(args, k)}
    cfg = cfgmod.merge(file_values, cli_values)
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    return cfg


# -- shared loading -------------------------------------------------------

def load_bundle(files, nodes=None, relations=None):
    """Load triple files against one node map and schema.

    Returns the combined graph and the triples of each file. Without a node
    map, ids follow first appearance across ``files`` in order.
    """
    files = [f for f in files if f]
    node_map = read_node_map(nodes) if nodes else None
    if node_map is None:
        g = load_triples(files)
        node_map = (g.node_types, g.node_names)
    schema = read_relations(relations, node_map[0]) if relations else \
        load_triples(files, None, node_map).relations
    graph = load_triples(files, schema, node_map)
    parts = [load_triples(f, schema, node_map).triples() for f in files]
    return graph, parts


def _features(graph, directory, width):
    if directory:
        return load_features(graph, directory, default_width=width)
    return FeatureStore.learned(graph, width)


def _estimator(values):
    keys = cfgmod.MODEL_KEYS + cfgmod.TRAIN_KEYS
    return RGCNLinkPredictor(**{k: values[k] for k in keys})


def _restore(path, graph, features_dir, train):
    ck = ckpt_io.load(path)
    values = cfgmod.defaults()
    values.update(cfgmod.from_echo(ck.config))
    est = _estimator(values)
    feats = _features(graph, features_dir, est.embedding_dim)
    est.set_fitted_params(graph, feats, train, ck.params)
    return est, values


def _read_names(path):
    return [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()
            if ln.strip() and not ln.startswith("#")]


def _write_kv(path, values):
    Path(path).write_text("".join(f"{k}={v}\n" for k, v in values.items()), encoding="utf-8")


# -- subcommands ------------------------------------------------------------

def cmd_synth(args, cfg):
    keys = ("n_types", "nodes_per_type", "n_relations", "edges_per_relation", "rare_edges",
            "feature_dim", "noise", "n_labels", "sharpness", "seed")
    spec = SynthSpec(**{k: cfg[k] for k in keys})
    data = synth_generate(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = data.graph
    g.write_triples(out / "graph.tsv")
    g.write_node_map(out / "nodes.tsv")
    g.write_relations(out / "relations.tsv")
    write_features(g, data.features, out / "features")
    write_labels(g, data.labels, out / "labels.tsv")
    meta = {k: cfg[k] for k in keys}
    meta.update(rare_relation=g.relations[data.rare_relation].name,
                rare_threshold=repr(data.rare_threshold), threads=cfg["threads"])
    _write_kv(out / "manifest.txt", meta)
    print(f"{g!r} -> {out}")


def cmd_transform(args, cfg):
    graph, _ = load_bundle([args.graph], args.nodes, args.relations)
    labels = read_labels(graph, args.labels)
    refine = [r.strip() for r in args.refine.split(",") if r.strip()]
    new = transform_label_relations(graph, refine, labels)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    new.write_triples(out / "graph.tsv")
    new.write_node_map(out / "nodes.tsv")
    new.write_relations(out / "relations.tsv")
    print(f"{graph.num_relations} relations -> {new.num_relations}, {new.num_edges} edges")


def cmd_split(args, cfg):
    graph, _ = load_bundle([args.graph], args.nodes, args.relations)
    if cfg["split_mode"] == "kshot":
        if not cfg["relation"]:
            raise ConfigError("kshot split needs --relation")
        split = kshot_split(graph, cfg["relation"], cfg["k"], seed=cfg["seed"])
        for w in split.warnings:
            print(f"warning: {w}", file=sys.stderr)
    elif cfg["split_mode"] == "percent":
        split = percent_split(graph, cfg["p"], seed=cfg["seed"])
    else:
        raise ConfigError(f"unknown split mode {cfg['split_mode']!r}")
    write_split(graph, split, args.out_dir)
    print(f"train={len(split.train)} test={len(split.test)} -> {args.out_dir}")


def cmd_train(args, cfg):
    graph, parts = load_bundle([args.train, args.background], args.nodes, args.relations)
    train = np.concatenate(parts)
    est = _estimator(cfg)
    feats = _features(graph, args.features, est.embedding_dim)
    est.fit(graph, feats, train)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    keys = cfgmod.MODEL_KEYS + cfgmod.TRAIN_KEYS
    ckpt_io.save(out, ckpt_io.Checkpoint(est.params_, cfgmod.echo(cfg, keys), cfg["seed"], cfg["epochs"]))
    loss_path = Path(args.loss) if args.loss else out.parent / "loss.csv"
    write_loss_trace(est.loss_curve_, loss_path)
    print(f"final loss {est.loss_curve_[-1]!r}")


def cmd_evaluate(args, cfg):
    graph, parts = load_bundle([args.train, args.background, args.test], args.nodes, args.relations)
    test = parts[-1]
    train = np.concatenate(parts[:-1])
    est, model_cfg = _restore(args.checkpoint, graph, args.features, train)
    report = evaluate(est, test, graph.with_triples(train), known=np.concatenate(parts),
                      policy=cfg["candidates"], n_candidates=cfg["n_candidates"],
                      filtered=cfg["filtered"], seed=cfg["seed"])
    report.metadata.update(mode=model_cfg["mode"], scorer=model_cfg["scorer"],
                           checkpoint=Path(args.checkpoint).name, threads=cfg["threads"])
    report.write(args.out_dir, graph)
    print(" ".join(f"{k}={v:.4f}" for k, v in report.metrics.items()))


def cmd_repurpose(args, cfg):
    graph, parts = load_bundle([args.train, args.background], args.nodes, args.relations)
    train = np.concatenate(parts)
    est, model_cfg = _restore(args.checkpoint, graph, args.features, train)
    relation = cfg["target_relation"] or 0
    validation = _read_names(args.validation) if args.validation else ()
    spec = RepurposeSpec.from_names(graph, _read_names(args.genes), _read_names(args.drugs),
                                    validation, relation=relation, k=cfg["top_k"],
                                    drug_as_head=not cfg["gene_as_head"])
    for w in spec.warnings:
        print(f"warning: {w}", file=sys.stderr)
    report = rank_drugs(est, spec)
    rel = graph.relations[spec.relation]
    drug_type, gene_type = (rel.head_type, rel.tail_type) if spec.drug_as_head \
        else (rel.tail_type, rel.head_type)
    report.metadata.update(relation=rel.name, mode=model_cfg["mode"], seed=cfg["seed"],
                           candidate_policy=f"given:{len(spec.drugs)}", threads=cfg["threads"])
    report.write(args.out_dir, graph, drug_type, gene_type)
    print(f"random baseline {report.random_baseline:.4f} hits per drug")
    for d, h in report.ranked_hits()[:10]:
        print(f"{graph.node_names[drug_type][d]}\t{h}")


def cmd_gradcheck(args, cfg):
    root = toy_loss(cfg["seed"], cfg["mode"], cfg["scorer"])
    report = grad_check(root, eps=args.eps, tol=args.tol)
    for name, err in report.max_rel_error.items():
        print(f"{name}\t{err:.3e}")
    print(("PASS" if report.passed else "FAIL") + f" max relative error {max(report.max_rel_error.values()):.3e}")
    return 0 if report.passed else 1


COMMANDS = {
    "synth": cmd_synth,
    "transform": cmd_transform,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "repurpose": cmd_repurpose,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
    except ConfigError as err:
        print(f"irgcn {args.command}: {err}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args, cfg) or 0
    except ConfigError as err:
        print(f"irgcn {args.command}: {err}", file=sys.stderr)
        return 2
    except DATA_ERRORS as err:
        print(f"irgcn {args.command}: error: {err}", file=sys.stderr)
        return 1
    except KeyError as err:
        print(f"irgcn {args.command}: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
