"""Plain-text checkpoints of fitted point estimates (and ComFP hyperparameters)."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mmsb import PointEstimates
from .network import DataError

VERSION = "comfp-checkpoint v1"


@dataclass
class Checkpoint:
    model: str
    estimates: PointEstimates
    config: dict
    x: Optional[np.ndarray] = None
    lam: Optional[list] = None

    @property
    def layer_names(self) -> list:
        return self.estimates.layer_names


def _put(fh, tag, mat):
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    fh.write(f"{tag} {mat.shape[0]} {mat.shape[1]}\n")
    for row in mat:
        fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def write_checkpoint(ckpt: Checkpoint, path) -> None:
    est = ckpt.estimates
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {VERSION}\n")
        fh.write("model " + ckpt.model + "\n")
        fh.write("config " + json.dumps(ckpt.config, sort_keys=True) + "\n")
        fh.write(f"n {len(est.pi[0]) if est.pi else 0}\n")
        fh.write("K " + " ".join(str(p.shape[1]) for p in est.pi) + "\n")
        fh.write("layers " + json.dumps(list(est.layer_names)) + "\n")
        for d in range(len(est.pi)):
            _put(fh, f"pi {d}", est.pi[d])
            _put(fh, f"B {d}", est.B[d])
        if ckpt.x is not None:
            _put(fh, "x 0", ckpt.x)
            for d, l in enumerate(ckpt.lam):
                _put(fh, f"lambda {d}", l)


def read_checkpoint(path) -> Checkpoint:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != f"# {VERSION}":
        raise DataError(f"{path}: not a {VERSION} file")
    pos = 1

    def take(prefix):
        nonlocal pos
        if pos >= len(lines) or not lines[pos].startswith(prefix + " "):
            raise DataError(f"{path}:{pos + 1}: expected '{prefix}'")
        val = lines[pos][len(prefix) + 1:]
        pos += 1
        return val

    model = take("model")
    config = json.loads(take("config"))
    n = int(take("n"))
    Ks = [int(k) for k in take("K").split()]
    names = json.loads(take("layers"))
    mats: dict = {}
    while pos < len(lines):
        head = lines[pos].split()
        if len(head) != 4:
            raise DataError(f"{path}:{pos + 1}: malformed matrix header")
        tag, idx, r, c = head[0], int(head[1]), int(head[2]), int(head[3])
        rows = lines[pos + 1: pos + 1 + r]
        if len(rows) != r:
            raise DataError(f"{path}: truncated matrix {tag} {idx}")
        mat = np.array([[float(v) for v in row.split()] for row in rows], dtype=float).reshape(r, c)
        mats[(tag, idx)] = mat
        pos += 1 + r
    N = len(names)
    try:
        est = PointEstimates([mats[("pi", d)] for d in range(N)], [mats[("B", d)] for d in range(N)], names)
    except KeyError as exc:
        raise DataError(f"{path}: missing matrix {exc}") from None
    for d in range(N):
        if est.pi[d].shape != (n, Ks[d]) or est.B[d].shape != (Ks[d], Ks[d]):
            raise DataError(f"{path}: matrix shapes disagree with header for layer {d}")
    x = mats.get(("x", 0))
    lam = [mats[("lambda", d)] for d in range(N)] if x is not None else None
    return Checkpoint(model, est, config, x, lam)
