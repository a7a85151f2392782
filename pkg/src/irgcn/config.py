"""Flat ``key=value`` run configuration shared by every subcommand.

Each key has a type, a default and a one-line description; ``describe()``
renders the documented defaults. Values given on the command line override
values read from a file, which override the defaults.
"""

from pathlib import Path

from .exceptions import ConfigError


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _names(text):
    if text is None or text == "" or text == "None":
        return None
    if isinstance(text, (list, tuple)):
        return tuple(text)
    return tuple(s.strip() for s in str(text).split(",") if s.strip())


def _opt_int(text):
    return None if text in (None, "", "None") else int(text)


# key -> (parser, default, description)
SCHEMA = {
    # model
    "mode": (str, "inductive", "inductive (relation MLP) or transductive (relation table)"),
    "scorer": (str, "distmult", "distmult, complex or rotate"),
    "n_layers": (int, 1, "RGCN layers"),
    "hidden_dim": (int, 32, "RGCN output width per layer"),
    "self_loop": (_bool, True, "per-type self term in each layer"),
    "normalize": (_bool, True, "average neighbor messages per relation"),
    "inductive_relations": (_names, None, "comma list of relations using the MLP (default all)"),
    "embedding_dim": (int, 16, "learned embedding width for featureless node types"),
    # training
    "epochs": (int, 300, "full-batch epochs"),
    "lr": (float, 0.01, "Adam step size"),
    "k_neg": (int, 1, "negatives per positive"),
    "beta1": (float, 0.9, "Adam first-moment decay"),
    "beta2": (float, 0.999, "Adam second-moment decay"),
    "adam_eps": (float, 1e-8, "Adam denominator constant"),
    # evaluation
    "candidates": (str, "all", "candidate policy, all or sampled"),
    "n_candidates": (_opt_int, None, "candidate count for the sampled policy"),
    "filtered": (_bool, True, "drop known true tails from candidates"),
    # datasets
    "split_mode": (str, "kshot", "kshot or percent"),
    "relation": (str, "", "few-shot relation name for kshot splits"),
    "k": (int, 5, "training edges of the few-shot relation"),
    "p": (float, 0.8, "training fraction for percent splits"),
    "n_types": (int, 3, "synthetic node types"),
    "nodes_per_type": (int, 100, "synthetic nodes per type"),
    "n_relations": (int, 8, "synthetic relations including the rare one"),
    "edges_per_relation": (int, 300, "edges of each common synthetic relation"),
    "rare_edges": (int, 60, "edges of the planted rare relation"),
    "feature_dim": (int, 8, "synthetic latent factor and feature width"),
    "noise": (float, 0.1, "feature noise scale"),
    "n_labels": (int, 3, "synthetic label count on type0"),
    "sharpness": (float, 2.0, "edge sampling temperature"),
    # repurposing
    "target_relation": (str, "", "relation scored for repurposing (default first)"),
    "top_k": (int, 100, "top-k cutoff per gene"),
    "gene_as_head": (_bool, False, "score (gene, relation, drug) instead of (drug, relation, gene)"),
    # run
    "seed": (int, 0, "root seed of every random stream"),
    "threads": (int, 1, "worker cap; computation is single-threaded"),
}

MODEL_KEYS = ("mode", "scorer", "n_layers", "hidden_dim", "self_loop", "normalize",
              "inductive_relations", "embedding_dim")
TRAIN_KEYS = ("epochs", "lr", "k_neg", "beta1", "beta2", "adam_eps", "seed")


def defaults():
    return {k: v[1] for k, v in SCHEMA.items()}


def parse_value(key, text):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return SCHEMA[key][0](text)
    except ValueError as err:
        raise ConfigError(f"bad value for {key}: {err}") from None


def read_config(path):
    """Parse a config file; unknown keys and malformed lines raise ConfigError."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = parse_value(key, value.strip())
    return out


def merge(file_values, cli_values):
    """Defaults, then file values, then explicitly given CLI values."""
    cfg = defaults()
    cfg.update(file_values)
    cfg.update({k: v for k, v in cli_values.items() if v is not None})
    return cfg


def format_value(value):
    if isinstance(value, tuple):
        return ",".join(map(str, value))
    return str(value)


def echo(cfg, keys):
    """String form of ``keys`` for a checkpoint header."""
    return {k: format_value(cfg[k]) for k in keys}


def from_echo(echoed):
    """Typed values back from a checkpoint header; unknown keys are rejected."""
    return {k: parse_value(k, v) for k, v in echoed.items()}


def describe():
    lines = []
    for key, (_, default, text) in SCHEMA.items():
        lines.append(f"{key}={format_value(default) if default is not None else ''}  # {text}")
    return "\n".join(lines)
