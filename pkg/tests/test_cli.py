import numpy as np
import pytest

from irgcn import checkpoint as ck
from irgcn.cli import load_bundle, main
from irgcn.estimator import RGCNLinkPredictor
from irgcn.model import load_features

SYNTH = ["--nodes-per-type", "20", "--edges-per-relation", "40", "--rare-edges", "12"]
FAST = ["--epochs", "5", "--hidden-dim", "4"]


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out-dir", str(root / "syn"), "--seed", "1"] + SYNTH) == 0
    assert main(["split", "--graph", str(root / "syn/graph.tsv"), "--nodes", str(root / "syn/nodes.tsv"),
                 "--relations", str(root / "syn/relations.tsv"), "--mode", "kshot", "--relation", "rare",
                 "--k", "3", "--seed", "2", "--out-dir", str(root / "sp")]) == 0
    return root


def split_args(root, test=False):
    sp = root / "sp"
    args = ["--train", str(sp / "train.tsv"), "--background", str(sp / "background.tsv"),
            "--nodes", str(sp / "nodes.tsv"), "--relations", str(sp / "relations.tsv"),
            "--features", str(root / "syn/features")]
    if test:
        args += ["--test", str(sp / "test.tsv")]
    return args


def lines(path):
    return path.read_text().splitlines()


def test_version(capsys):
    assert main(["--version"]) == 0
    out = capsys.readouterr().out
    assert "0.1.0" in out and "checkpoint format 1" in out


def test_usage_errors(capsys):
    assert main([]) == 2
    assert main(["train"]) == 2
    assert main(["split", "--graph", "g.tsv", "--out-dir", "x", "--k", "many"]) == 2


def test_unknown_config_key_aborts_first(tmp_path):
    (tmp_path / "bad.conf").write_text("lr=0.1\nwarp=9\n")
    assert main(["synth", "--config", str(tmp_path / "bad.conf"), "--out-dir", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_missing_input_is_a_data_error(tmp_path, capsys):
    assert main(["split", "--graph", str(tmp_path / "none.tsv"), "--relation", "r",
                 "--out-dir", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err


def test_kshot_split_files(data, tmp_path):
    assert len(lines(data / "sp/train.tsv")) == 3
    assert len(lines(data / "sp/test.tsv")) == 9
    args = ["split", "--graph", str(data / "syn/graph.tsv"), "--mode", "kshot", "--relation", "rare",
            "--k", "10", "--seed", "7"]
    assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
    assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
    assert len(lines(tmp_path / "a/train.tsv")) == 10
    for name in ("train.tsv", "background.tsv", "test.tsv", "manifest.txt", "nodes.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_percent_split_counts(data, tmp_path):
    assert main(["split", "--graph", str(data / "syn/graph.tsv"), "--mode", "percent", "--p", "0.8",
                 "--out-dir", str(tmp_path)]) == 0
    n = len(lines(data / "syn/graph.tsv"))
    assert len(lines(tmp_path / "train.tsv")) == round(0.8 * n)
    assert len(lines(tmp_path / "test.tsv")) == n - round(0.8 * n)


def test_train_outputs_and_block_names(data, tmp_path, capsys):
    for mode in ("inductive", "transductive"):
        out = tmp_path / mode / "m.ckpt"
        assert main(["train"] + split_args(data) + FAST + ["--mode", mode, "--out", str(out)]) == 0
        assert "final loss" in capsys.readouterr().out
        trace = lines(out.parent / "loss.csv")
        assert trace[0] == "epoch,loss" and len(trace) == 6
    ind = ck.load(tmp_path / "inductive/m.ckpt").params
    tra = ck.load(tmp_path / "transductive/m.ckpt").params
    assert "reltable" not in ind and "relmlp/W1" in ind
    assert "reltable" in tra and "relmlp/W1" not in tra


def test_config_file_and_override(data, tmp_path):
    (tmp_path / "run.conf").write_text("epochs=3\nhidden_dim=4\n")
    base = ["train"] + split_args(data) + ["--config", str(tmp_path / "run.conf")]
    assert main(base + ["--out", str(tmp_path / "a/m.ckpt")]) == 0
    assert len(lines(tmp_path / "a/loss.csv")) == 4
    assert main(base + ["--epochs", "2", "--out", str(tmp_path / "b/m.ckpt")]) == 0
    assert len(lines(tmp_path / "b/loss.csv")) == 3
    assert ck.load(tmp_path / "b/m.ckpt").config["epochs"] == "2"


def test_checkpoint_matches_in_memory_model(data, tmp_path):
    assert main(["train"] + split_args(data) + FAST + ["--out", str(tmp_path / "m.ckpt")]) == 0
    sp = data / "sp"
    graph, parts = load_bundle([sp / "train.tsv", sp / "background.tsv", sp / "test.tsv"],
                               sp / "nodes.tsv", sp / "relations.tsv")
    train = np.concatenate(parts[:2])
    feats = load_features(graph, data / "syn/features", default_width=16)
    est = RGCNLinkPredictor(epochs=5, hidden_dim=4).fit(graph, feats, train)
    saved = ck.load(tmp_path / "m.ckpt").params
    assert all(saved[k].tobytes() == est.params_[k].tobytes() for k in est.params_)

    assert main(["evaluate", "--checkpoint", str(tmp_path / "m.ckpt")] + split_args(data, test=True)
                + ["--out-dir", str(tmp_path / "ev")]) == 0
    ranks = lines(tmp_path / "ev/ranks.tsv")[1:]
    assert len(ranks) == len(parts[2])
    meta = lines(tmp_path / "ev/metadata.txt")
    assert "mode=inductive" in meta and "seed=0" in meta and "candidate_policy=all" in meta


def test_evaluate_three_queries(data, tmp_path):
    assert main(["train"] + split_args(data) + FAST + ["--out", str(tmp_path / "m.ckpt")]) == 0
    test = tmp_path / "test3.tsv"
    test.write_text("\n".join(lines(data / "sp/test.tsv")[:3]) + "\n")
    args = split_args(data)
    args += ["--test", str(test), "--raw", "--out-dir", str(tmp_path / "ev")]
    assert main(["evaluate", "--checkpoint", str(tmp_path / "m.ckpt")] + args) == 0
    assert len(lines(tmp_path / "ev/ranks.tsv")) == 4
    assert "filter=raw" in lines(tmp_path / "ev/metadata.txt")


def test_repurpose(data, tmp_path):
    assert main(["train"] + split_args(data) + FAST + ["--out", str(tmp_path / "m.ckpt")]) == 0
    (tmp_path / "genes.txt").write_text("\n".join(f"n{i}" for i in range(8)) + "\n")
    (tmp_path / "drugs.txt").write_text("\n".join(f"n{i}" for i in range(20)) + "\n")
    (tmp_path / "validation.txt").write_text("n1\nn2\nn3\nn4\n")
    assert main(["repurpose", "--checkpoint", str(tmp_path / "m.ckpt")] + split_args(data)
                + ["--genes", str(tmp_path / "genes.txt"), "--drugs", str(tmp_path / "drugs.txt"),
                   "--validation", str(tmp_path / "validation.txt"), "--target-relation", "rare",
                   "--top-k", "5", "--out-dir", str(tmp_path / "rp")]) == 0
    hits = lines(tmp_path / "rp/hits.tsv")
    assert hits[0] == "drug\thits"
    counts = [int(l.split("\t")[1]) for l in hits[1:]]
    assert len(counts) == 4 and counts == sorted(counts, reverse=True)
    assert len(lines(tmp_path / "rp/topk.tsv")) == 1 + 8 * 5


def test_repurpose_unknown_gene(data, tmp_path, capsys):
    assert main(["train"] + split_args(data) + FAST + ["--out", str(tmp_path / "m.ckpt")]) == 0
    (tmp_path / "genes.txt").write_text("ghost\n")
    (tmp_path / "drugs.txt").write_text("n0\n")
    assert main(["repurpose", "--checkpoint", str(tmp_path / "m.ckpt")] + split_args(data)
                + ["--genes", str(tmp_path / "genes.txt"), "--drugs", str(tmp_path / "drugs.txt"),
                   "--target-relation", "rare", "--top-k", "1", "--out-dir", str(tmp_path / "rp")]) == 1
    assert "ghost" in capsys.readouterr().err


def test_transform_four_by_three(tmp_path, capsys):
    rows = []
    for r in range(4):
        for m in range(6):
            rows.append(f"person::p{m % 2}\tr{r}\tmovie::m{m}" if r % 2 else f"movie::m{m}\tr{r}\tperson::p{m % 2}")
    (tmp_path / "g.tsv").write_text("\n".join(rows) + "\n")
    (tmp_path / "labels.tsv").write_text("".join(f"movie\tm{m}\tgenre{m % 3}\n" for m in range(6)))
    assert main(["transform", "--graph", str(tmp_path / "g.tsv"), "--labels", str(tmp_path / "labels.tsv"),
                 "--refine", "r0,r1,r2,r3", "--out-dir", str(tmp_path / "out")]) == 0
    assert len(lines(tmp_path / "out/relations.tsv")) == 12
    assert len(lines(tmp_path / "out/graph.tsv")) == 24


def test_gradcheck(capsys):
    assert main(["gradcheck", "--seed", "2"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_divergence_exit_code(data, tmp_path, capsys):
    feats = tmp_path / "feats"
    feats.mkdir()
    src = lines(data / "syn/features/type0.csv")
    src[1] = src[1].split(",")[0] + ",inf" * (len(src[0].split(",")) - 1)
    (feats / "type0.csv").write_text("\n".join(src) + "\n")
    args = [a if a != str(data / "syn/features") else str(feats) for a in split_args(data)]
    with np.errstate(all="ignore"):
        code = main(["train"] + args + FAST + ["--out", str(tmp_path / "m.ckpt")])
    assert code == 1
    assert "epoch 1" in capsys.readouterr().err
