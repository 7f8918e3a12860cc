#!/usr/bin/env python3
"""Materialize the raw LINQS Cora files (cora.content, cora.cites).

The sandbox used to develop this package has no route to the LINQS host, but
the ``graphdatascience`` wheel on PyPI bundles the complete Cora tables as
parquet. This script pulls that wheel with pip and writes the two raw,
tab-separated files in their original node order.

    python scripts/fetch_cora.py --out data/cora
"""

import argparse
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import pandas as pd

WHEEL_REQ = "graphdatascience==2.2"
RESOURCE = "graphdatascience/resources/cora/"

# inverse of the mapping used when the parquet tables were serialized
ID_TO_SUBJECT = [
    "Neural_Networks",
    "Rule_Learning",
    "Reinforcement_Learning",
    "Probabilistic_Methods",
    "Theory",
    "Genetic_Algorithms",
    "Case_Based",
]


def _download_wheel(dest: Path) -> Path:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", WHEEL_REQ, "-d", str(dest)],
        check=True,
    )
    wheels = sorted(dest.glob("graphdatascience-*.whl"))
    if not wheels:
        raise SystemExit("pip did not produce a graphdatascience wheel")
    return wheels[0]


def write_raw_files(wheel: Path, out: Path) -> None:
    with zipfile.ZipFile(wheel) as zf:
        nodes = pd.read_parquet(io.BytesIO(zf.read(RESOURCE + "cora_nodes.parquet.gzip")))
        rels = pd.read_parquet(io.BytesIO(zf.read(RESOURCE + "cora_rels.parquet.gzip")))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "cora.content", "w", encoding="utf-8", newline="\n") as fh:
        for pid, subject, feats in zip(nodes["nodeId"], nodes["subject"], nodes["features"]):
            fields = [str(int(pid))] + [str(int(v)) for v in feats] + [ID_TO_SUBJECT[int(subject)]]
            fh.write("\t".join(fields) + "\n")
    with open(out / "cora.cites", "w", encoding="utf-8", newline="\n") as fh:
        for cited, citing in zip(rels["sourceNodeId"], rels["targetNodeId"]):
            fh.write(f"{int(cited)}\t{int(citing)}\n")
    print(f"wrote {len(nodes)} nodes, {len(rels)} citations to {out}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/cora", help="output directory")
    parser.add_argument("--wheel", default=None, help="use an already-downloaded wheel")
    args = parser.parse_args()
    if args.wheel:
        write_raw_files(Path(args.wheel), Path(args.out))
        return
    with tempfile.TemporaryDirectory() as tmp:
        write_raw_files(_download_wheel(Path(tmp)), Path(args.out))


if __name__ == "__main__":
    main()
