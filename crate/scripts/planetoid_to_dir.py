#!/usr/bin/env python3
"""Convert the raw Planetoid files (ind.<name>.x, .y, .tx, .ty, .allx, .ally,
.graph, .test.index) into the text dataset directory read by `pown`.

The node split is the public Planetoid one: the first 20 labeled nodes per
class for training, the next 500 nodes for validation, the listed 1000 test
nodes for testing.

    python3 scripts/planetoid_to_dir.py --raw planetoid/data --name cora --out data/cora
"""

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def load(raw: Path, name: str, suffix: str):
    with open(raw / f"ind.{name}.{suffix}", "rb") as f:
        return pickle.load(f, encoding="latin1")


def convert(raw: Path, name: str, out: Path, normalize: bool) -> None:
    x, y, tx, ty, allx, ally, graph = (load(raw, name, s) for s in ("x", "y", "tx", "ty", "allx", "ally", "graph"))
    test_index = [int(line) for line in (raw / f"ind.{name}.test.index").read_text().split()]
    test_sorted = np.sort(test_index)

    if name == "citeseer":
        # some test nodes are isolated and missing from tx/ty; give them zero rows
        full = range(min(test_index), max(test_index) + 1)
        tx_ext = sp.lil_matrix((len(full), tx.shape[1]))
        tx_ext[test_sorted - min(test_sorted), :] = tx
        tx = tx_ext
        ty_ext = np.zeros((len(full), y.shape[1]))
        ty_ext[test_sorted - min(test_sorted), :] = ty
        ty = ty_ext

    features = sp.vstack((allx, tx)).tolil()
    features[test_index, :] = features[test_sorted, :]
    labels_onehot = np.vstack((ally, ty))
    labels_onehot[test_index, :] = labels_onehot[test_sorted, :]
    features = features.toarray().astype(np.float64)
    if normalize:
        sums = features.sum(axis=1, keepdims=True)
        features = np.divide(features, sums, out=np.zeros_like(features), where=sums > 0)
    labels = labels_onehot.argmax(axis=1)
    n, d = features.shape

    edges = set()
    for u, nbrs in graph.items():
        for v in nbrs:
            if u != v and u < n and v < n:
                edges.add((min(u, v), max(u, v)))

    train = list(range(len(y)))
    val = list(range(len(y), len(y) + 500))
    test = sorted(int(i) for i in test_sorted if i < n)

    out.mkdir(parents=True, exist_ok=True)
    (out / "meta.txt").write_text(f"num_nodes={n}\nnum_classes={labels_onehot.shape[1]}\nfeature_dim={d}\n")
    with open(out / "features.csv", "w") as f:
        for row in features:
            f.write(",".join(repr(float(v)) if v else "0" for v in row) + "\n")
    (out / "labels.txt").write_text("".join(f"{c}\n" for c in labels))
    (out / "edges.txt").write_text("".join(f"{u} {v}\n" for u, v in sorted(edges)))
    (out / "masks.txt").write_text(
        "".join(f"{k}: {' '.join(map(str, ids))}\n" for k, ids in (("train", train), ("val", val), ("test", test)))
    )
    print(f"{name}: {n} nodes, {len(edges)} edges, {d} features, {labels_onehot.shape[1]} classes -> {out}")


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--raw", type=Path, required=True, help="directory holding ind.<name>.* files")
    p.add_argument("--name", default="cora", choices=["cora", "citeseer", "pubmed"])
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--normalize", action="store_true", help="row-normalize features")
    args = p.parse_args()
    convert(args.raw, args.name, args.out, args.normalize)
    return 0


if __name__ == "__main__":
    sys.exit(main())
