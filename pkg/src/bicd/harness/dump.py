"""CSV dumps of per-sample representations and per-skeleton edge probabilities.

Files, for skeleton ``m`` and sample ``s``:

- ``<tag>_<m>_<s>.csv`` for tag in xhat, e, c, l: one row per node, header
  ``node,d0,...,d<D-1>``;
- ``edges_<m>.csv``: one row per strictly-lower pair, header
  ``i,j,probability``, where the entry scores the edge ``x_j -> x_i`` (j < i).
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from bicd.errors import UsageError

DUMP_TAGS = ("xhat", "e", "c", "l", "edges")
_FIELDS = {"xhat": "xhat", "e": "E", "c": "C", "l": "L"}


def parse_tags(what: str | list[str]) -> list[str]:
    tags = [t.strip().lower() for t in (what.split(",") if isinstance(what, str) else what) if t.strip()]
    unknown = [t for t in tags if t not in DUMP_TAGS]
    if unknown or not tags:
        raise UsageError(f"unknown dump tag(s) {unknown or what!r}; choose from {', '.join(DUMP_TAGS)}")
    return tags


def _fmt(x: float) -> str:
    return repr(float(x))


def dump_representations(inferred: dict[int, dict], what, out_dir: str | Path) -> list[Path]:
    """Write the requested tensors from :func:`bicd.harness.evaluate.infer_split` output."""
    tags = parse_tags(what)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for m, res in inferred.items():
        for tag in tags:
            if tag == "edges":
                path = out / f"edges_{m}.csv"
                ii, jj = np.nonzero(res["support"])
                with path.open("w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["i", "j", "probability"])
                    for i, j in zip(ii, jj):
                        w.writerow([int(i), int(j), _fmt(res["prob"][i, j])])
                written.append(path)
                continue
            stack = np.asarray(res[_FIELDS[tag]])
            for s, mat in enumerate(stack):
                path = out / f"{tag}_{m}_{s}.csv"
                with path.open("w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["node"] + [f"d{d}" for d in range(mat.shape[1])])
                    for node, row in enumerate(mat):
                        w.writerow([node] + [_fmt(x) for x in row])
                written.append(path)
    return written
