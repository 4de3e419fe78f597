#!/usr/bin/env python3
"""Convert the LINQS Cora release (cora.content, cora.cites) to the
simulator's dataset directory layout."""

import argparse
import pathlib
import sys

import numpy as np


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("src", type=pathlib.Path, help="directory with cora.content and cora.cites")
    ap.add_argument("out", type=pathlib.Path, help="output dataset directory")
    ap.add_argument("--name", default="cora")
    args = ap.parse_args()

    ids, rows, labels = [], [], []
    with open(args.src / "cora.content") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:-1]])
            labels.append(parts[-1])
    index = {pid: i for i, pid in enumerate(ids)}
    classes = sorted(set(labels))
    class_of = {c: k for k, c in enumerate(classes)}
    x = np.asarray(rows, dtype="<f8")

    records = 0
    edges = set()
    with open(args.src / "cora.cites") as f:
        for line in f:
            parts = line.split()
            if len(parts) != 2:
                continue
            records += 1
            if parts[0] not in index or parts[1] not in index:
                continue
            u, v = index[parts[0]], index[parts[1]]
            if u != v:
                edges.add((min(u, v), max(u, v)))

    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "manifest.txt", "w") as f:
        f.write(f"name={args.name}\nn_nodes={len(ids)}\nn_features={x.shape[1]}\n"
                f"n_classes={len(classes)}\n")
    with open(args.out / "edges.tsv", "w") as f:
        for u, v in sorted(edges):
            f.write(f"{u}\t{v}\n")
    x.tofile(args.out / "features.bin")
    with open(args.out / "labels.tsv", "w") as f:
        for i, c in enumerate(labels):
            f.write(f"{i}\t{class_of[c]}\n")
    print(f"{len(ids)} nodes, {x.shape[1]} features, {len(classes)} classes, "
          f"{records} citation records -> {len(edges)} undirected edges", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
