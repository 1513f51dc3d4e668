"""Dataset persistence: ``EDN1`` binary container plus a JSON sidecar.

Layout of the container (all little-endian)::

    b"EDN1"  u32 m  u32 n  u32 p  then m row-major float64 blocks

The block of machine ``j`` depends on the problem kind recorded in the
sidecar:

* ``lasso``: ``n x (p + 1)`` rows ``[x_ji, y_ji]``;
* ``spca``:  ``n x p x q`` dense ``B_ji`` stacked over ``i``;
* ``quad``:  ``p x (p + 1)`` rows ``[A_j, b_j]`` (``n`` is stored as ``p``).

The sidecar holds the kind, the generating spec and the block shape so a
dataset can be reloaded without regeneration.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import problems as pb

MAGIC = b"EDN1"
_HEADER = struct.Struct("<4sIII")

_SPECS = {"lasso": pb.LassoGenSpec, "spca": pb.SpcaGenSpec, "quad": pb.QuadGenSpec}


class DatasetFormatError(ValueError):
    pass


def spec_from_dict(kind, fields):
    try:
        cls = _SPECS[kind]
    except KeyError:
        raise pb.InvalidSpecError(f"unknown problem kind {kind!r}") from None
    try:
        spec = cls(**fields)
    except TypeError as exc:
        raise pb.InvalidSpecError(f"{kind} spec: {exc}") from None
    spec.validate()
    return spec


def generate_blocks(kind, spec):
    """Generate ``(header_n, blocks, extra)`` for a validated spec."""
    if kind == "lasso":
        X, y, w_star = pb.lasso_data(spec)
        blocks = [np.concatenate([X[j], y[j][:, None]], axis=1) for j in range(spec.m)]
        return spec.n, blocks, {"ground_truth": w_star.tolist()}
    if kind == "spca":
        blocks = []
        for C in pb.spca_blocks(spec):
            dense = C.toarray().reshape(spec.p, spec.n, spec.q).transpose(1, 0, 2)
            blocks.append(np.ascontiguousarray(dense))
        return spec.n, blocks, {}
    As, bs = pb.quadratic_data(spec)
    blocks = [np.concatenate([As[j], bs[j][:, None]], axis=1) for j in range(spec.m)]
    return spec.p, blocks, {}


def write_dataset(path, kind, spec):
    """Generate the dataset for ``spec`` and write ``path`` plus ``path.json``.

    Returns the pair of written paths.  Output bytes depend only on the spec.
    """
    path = Path(path)
    n, blocks, extra = generate_blocks(kind, spec)
    p = spec.p
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, spec.m, n, p))
        for block in blocks:
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())
    sidecar = {
        "format": "EDN1",
        "kind": kind,
        "spec": spec.to_dict(),
        "block_shape": list(blocks[0].shape),
        **extra,
    }
    side = sidecar_path(path)
    side.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path, side


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_dataset(path):
    """Load a container and its sidecar back into a :class:`~edanni.problems.Problem`."""
    path = Path(path)
    meta = json.loads(sidecar_path(path).read_text())
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError(f"{path}: truncated header")
    magic, m, n, p = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    shape = tuple(meta["block_shape"])
    size = int(np.prod(shape))
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != m * size:
        raise DatasetFormatError(f"{path}: expected {m * size} values, found {data.size}")
    blocks = data.reshape((m,) + shape).astype(np.float64)
    kind = meta["kind"]
    spec = spec_from_dict(kind, meta["spec"])
    if kind == "lasso":
        X, y = blocks[:, :, :p], blocks[:, :, p]
        w_star = np.asarray(meta.get("ground_truth"), dtype=np.float64)
        return pb.lasso_problem(X, y, spec.theta, w_star, spec)
    if kind == "spca":
        q = shape[2]
        mats = [sp.csr_matrix(b.transpose(1, 0, 2).reshape(p, n * q)) for b in blocks]
        return pb.spca_problem(mats, n, spec.theta, spec)
    return pb.quadratic_problem(blocks[:, :, :p], blocks[:, :, p], spec.theta, spec)


def build_problem(kind, spec):
    """Generate the :class:`~edanni.problems.Problem` for ``spec`` in memory."""
    if kind == "lasso":
        return pb.generate_lasso(spec)
    if kind == "spca":
        return pb.generate_spca(spec)
    As, bs = pb.quadratic_data(spec)
    return pb.quadratic_problem(As, bs, spec.theta, spec)
