# Copyright 2026 The CGE Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Converts the LINQS Cora release (cora.content, cora.cites) to cge input files.

Writes edges.txt, features.csv, labels.txt and config.txt into the output
directory. Paper ids are renumbered 0..n-1 in cora.content order; class
names are numbered in sorted order. Citations that name an unknown paper
are dropped and counted.
"""

import argparse
import pathlib
import sys


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("cora_dir", type=pathlib.Path, help="directory holding cora.content and cora.cites")
    ap.add_argument("out_dir", type=pathlib.Path)
    args = ap.parse_args()

    rows = [line.split() for line in (args.cora_dir / "cora.content").read_text().splitlines() if line.strip()]
    index = {r[0]: i for i, r in enumerate(rows)}
    classes = {name: k for k, name in enumerate(sorted({r[-1] for r in rows}))}

    edges, dropped = set(), 0
    for line in (args.cora_dir / "cora.cites").read_text().splitlines():
        parts = line.split()
        if len(parts) != 2:
            continue
        a, b = (index.get(p) for p in parts)
        if a is None or b is None:
            dropped += 1
            continue
        if a != b:
            edges.add((min(a, b), max(a, b)))

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "edges.txt").write_text("".join(f"{a} {b}\n" for a, b in sorted(edges)))
    (out / "features.csv").write_text("".join(",".join(r[1:-1]) + "\n" for r in rows))
    (out / "labels.txt").write_text("".join(f"{classes[r[-1]]}\n" for r in rows))
    (out / "config.txt").write_text("edges = edges.txt\nfeatures = features.csv\nlabels = labels.txt\n")
    print(f"nodes={len(rows)} edges={len(edges)} classes={len(classes)} dropped_citations={dropped}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
