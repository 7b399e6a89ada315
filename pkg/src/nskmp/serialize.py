"""Versioned model container: a JSON header followed by raw array bytes.

Layout: 8-byte magic, u32 header length, UTF-8 JSON header, then the arrays
concatenated in header order as little-endian C-contiguous buffers.  Writing
is deterministic (no timestamps), so retraining with the same seed produces
byte-identical files.  Kernel models store only the reference distribution
and hyperparameters; the factorization is recomputed on load.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from . import kmp as kmp_mod
from .kernel import KernelConfig
from .promp import PrompModel
from .refdist import GaussianMixture, ReferenceTrajectoryDistribution

MAGIC = b"NSKMPv01"
SCHEMA_VERSION = 1


def _pack(kind: str, meta: dict, arrays: dict) -> bytes:
    entries = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(np.asarray(arr, dtype=float))
        raw = arr.astype("<f8").tobytes()
        entries.append(
            {"name": name, "dtype": "<f8", "shape": list(arr.shape), "offset": offset}
        )
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"schema": SCHEMA_VERSION, "kind": kind, "meta": meta, "arrays": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    return MAGIC + struct.pack("<I", len(header)) + header + b"".join(blobs)


def _unpack(blob: bytes) -> tuple[str, dict, dict]:
    if blob[:8] != MAGIC:
        raise ValueError("not a model file (bad magic)")
    (hlen,) = struct.unpack("<I", blob[8:12])
    header = json.loads(blob[12 : 12 + hlen].decode())
    if header["schema"] != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {header['schema']}")
    body = blob[12 + hlen :]
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(
            body, dtype=entry["dtype"], count=count, offset=entry["offset"]
        )
        arrays[entry["name"]] = arr.reshape(shape).copy()
    return header["kind"], header["meta"], arrays


def dumps_kmp(model: kmp_mod.KmpModel) -> bytes:
    if model.kernel_cfg.feature_map is not None:
        raise ValueError("models with custom feature-map kernels are not serializable")
    ref = model.reference
    meta = {
        "lambda": model.lam,
        "length_scale": model.kernel_cfg.length_scale,
        "output_dim": model.output_dim,
    }
    arrays = {"inputs": ref.inputs, "means": ref.means, "covariances": ref.covariances}
    return _pack("kmp", meta, arrays)


def dumps_promp(model: PrompModel) -> bytes:
    meta = {
        "basis_count": model.basis_count,
        "bandwidth": model.bandwidth,
        "output_dim": model.output_dim,
    }
    arrays = {"centers": model.centers, "mu_w": model.mu_w, "sigma_w": model.sigma_w}
    return _pack("promp", meta, arrays)


def dumps_gmm(gmm: GaussianMixture, input_dim: int) -> bytes:
    meta = {"input_dim": input_dim}
    arrays = {"priors": gmm.priors, "means": gmm.means, "covariances": gmm.covariances}
    return _pack("gmm", meta, arrays)


def loads(blob: bytes):
    """Load any model kind; returns (kind, model) with kind in {kmp, promp, gmm}.

    For gmm the model is (GaussianMixture, input_dim).
    """
    kind, meta, arrays = _unpack(blob)
    if kind == "kmp":
        ref = ReferenceTrajectoryDistribution(
            arrays["inputs"], arrays["means"], arrays["covariances"]
        )
        cfg = KernelConfig(meta["length_scale"], int(meta["output_dim"]))
        return kind, kmp_mod.fit(ref, meta["lambda"], cfg)
    if kind == "promp":
        return kind, PrompModel(
            int(meta["basis_count"]),
            arrays["centers"],
            meta["bandwidth"],
            arrays["mu_w"],
            arrays["sigma_w"],
            int(meta["output_dim"]),
        )
    if kind == "gmm":
        gmm = GaussianMixture(arrays["priors"], arrays["means"], arrays["covariances"])
        return kind, (gmm, int(meta["input_dim"]))
    raise ValueError(f"unknown model kind {kind!r}")


def save(path, blob: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(blob)


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
