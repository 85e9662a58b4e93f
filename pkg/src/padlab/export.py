"""CSV, PGM and JSON writers.

CSV follows RFC 4180 via :mod:`csv`; floats are written with ``repr`` so they
round-trip exactly.  PGM files are plain-text P2 with ``maxval`` 65535; the
affine map from values to grey levels is stored in a sidecar JSON next to
each image.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .tensor import FeatureMap

PGM_MAXVAL = 65535


def _fmt(v) -> str:
    return repr(float(v))


def write_json(obj, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    return path


def write_map_csv(fmap: FeatureMap, path) -> Path:
    """One row per ``(channel, row)``: ``channel, row, v_0, ..., v_{W-1}``."""
    path = Path(path)
    v = fmap.values
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["channel", "row"] + [str(j) for j in range(v.shape[2])])
        for c in range(v.shape[0]):
            for y in range(v.shape[1]):
                w.writerow([c, y] + [_fmt(x) for x in v[c, y]])
    return path


def read_map_csv(path) -> FeatureMap:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    chans = max(int(r[0]) for r in body) + 1
    height = max(int(r[1]) for r in body) + 1
    width = len(body[0]) - 2
    out = np.empty((chans, height, width))
    for r in body:
        out[int(r[0]), int(r[1])] = [float(x) for x in r[2:]]
    return FeatureMap(out)


def write_table_csv(header, rows, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])
    return path


def pgm_levels(values: np.ndarray):
    """Grey levels for a 2-D array plus the ``(lo, hi)`` used for the mapping."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    if hi > lo:
        levels = np.rint((v - lo) / (hi - lo) * PGM_MAXVAL).astype(np.int64)
    else:
        levels = np.zeros(v.shape, dtype=np.int64)
    return levels, lo, hi


def write_pgm(values: np.ndarray, path) -> list[Path]:
    """Write a P2 heatmap and its ``.json`` sidecar; returns both paths."""
    path = Path(path)
    levels, lo, hi = pgm_levels(values)
    h, w = levels.shape
    lines = ["P2", f"{w} {h}", str(PGM_MAXVAL)]
    lines += [" ".join(str(int(x)) for x in row) for row in levels]
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    side = path.with_suffix(path.suffix + ".json")
    write_json({
        "min": lo,
        "max": hi,
        "maxval": PGM_MAXVAL,
        "mapping": "level = round((value - min) / (max - min) * maxval); all zero when max == min",
    }, side)
    return [path, side]


def read_pgm(path) -> np.ndarray:
    tokens = Path(path).read_text(encoding="ascii").split()
    if tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain PGM")
    w, h = int(tokens[1]), int(tokens[2])
    return np.array([int(t) for t in tokens[4:4 + w * h]]).reshape(h, w)


def write_map_pgms(fmap: FeatureMap, stem) -> list[Path]:
    """One heatmap per channel: ``<stem>_c<k>.pgm``."""
    stem = Path(stem)
    out = []
    for c in range(fmap.channels):
        out += write_pgm(fmap.values[c], stem.parent / f"{stem.name}_c{c}.pgm")
    return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sha256_json(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
