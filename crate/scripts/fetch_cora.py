#!/usr/bin/env python3
"""Write the Cora citation graph in LINQS text format (cora.content / cora.cites).

The graph ships inside the `graphdatascience` wheel on PyPI as two parquet
files; this script downloads that wheel, reads them, and writes the classic
LINQS layout that `graphtricks import-linqs` understands.

    python3 scripts/fetch_cora.py raw/cora
    graphtricks import-linqs --content raw/cora/cora.content \
        --cites raw/cora/cora.cites --name cora --out data/cora --seed 0

Requires pandas and pyarrow.
"""
import glob
import io
import os
import subprocess
import sys
import tempfile
import zipfile

import pandas as pd

SUBJECTS = [
    "Neural_Networks",
    "Rule_Learning",
    "Reinforcement_Learning",
    "Probabilistic_Methods",
    "Theory",
    "Genetic_Algorithms",
    "Case_Based",
]


def main(out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.check_call(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
             "graphdatascience==2.1", "-d", tmp]
        )
        wheel = zipfile.ZipFile(glob.glob(os.path.join(tmp, "*.whl"))[0])
        prefix = "graphdatascience/resources/cora/"
        nodes = pd.read_parquet(io.BytesIO(wheel.read(prefix + "cora_nodes.parquet.gzip")))
        rels = pd.read_parquet(io.BytesIO(wheel.read(prefix + "cora_rels.parquet.gzip")))

    with open(os.path.join(out_dir, "cora.content"), "w") as f:
        for node_id, subject, feats in zip(nodes.nodeId, nodes.subject, nodes.features):
            words = "\t".join(str(int(v)) for v in feats)
            f.write(f"{node_id}\t{words}\t{SUBJECTS[int(subject)]}\n")
    with open(os.path.join(out_dir, "cora.cites"), "w") as f:
        for src, dst in zip(rels.sourceNodeId, rels.targetNodeId):
            f.write(f"{src}\t{dst}\n")
    print(f"wrote {len(nodes)} nodes, {len(rels)} citations to {out_dir}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "raw/cora")
