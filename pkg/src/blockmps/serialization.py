"""Portable JSON container for full and block-sparse MPS.

The header is plain JSON (kind, K, N, bond tables, endianness, version).
Every array is stored as base64 of its row-major little-endian float64
bytes, so a round trip reproduces the cores bit for bit.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from ._validation import ValidationError
from .block_mps import BlockCore, BlockMPS
from .mps_full import FullMPS

FORMAT = "blockmps-container"
VERSION = 1
_DTYPE = np.dtype("<f8")


class ContainerError(ValidationError):
    """Malformed or inconsistent container contents."""


def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype=_DTYPE)
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes(order="C")).decode("ascii")}


def _decode(item: dict) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in item["shape"])
        raw = base64.b64decode(item["data"], validate=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise ContainerError(f"bad array record: {exc}") from None
    count = int(np.prod(shape)) if shape else 1
    if len(raw) != count * _DTYPE.itemsize:
        raise ContainerError(f"payload of {len(raw)} bytes does not fit shape {shape}")
    return np.frombuffer(raw, dtype=_DTYPE).reshape(shape).astype(float)


def _header(kind: str) -> dict:
    return {"format": FORMAT, "version": VERSION, "kind": kind, "endianness": "little", "dtype": "float64"}


def dumps(x) -> str:
    if isinstance(x, BlockMPS):
        doc = _header("block")
        doc.update(K=x.K, N=x.N, rho=[{str(n): s for n, s in sorted(t.items())} for t in x.rho])
        doc["cores"] = [
            [
                dict(occupied=occ, n=n, **_encode(blk))
                for occ in (0, 1)
                for n, blk in sorted(core.blocks(occ).items())
            ]
            for core in x.cores
        ]
    elif isinstance(x, FullMPS):
        doc = _header("full")
        doc.update(K=x.order, ranks=x.ranks, cores=[_encode(c) for c in x.cores])
    else:
        raise ValidationError(f"cannot serialize {type(x).__name__}")
    return json.dumps(doc, indent=1, sort_keys=True)


def loads(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContainerError(f"not JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ContainerError("missing container format tag")
    if doc.get("version") != VERSION:
        raise ContainerError(f"unsupported container version {doc.get('version')!r}")
    if doc.get("endianness") != "little" or doc.get("dtype") != "float64":
        raise ContainerError("only little-endian float64 payloads are supported")
    kind = doc.get("kind")
    try:
        if kind == "full":
            return FullMPS([_decode(c) for c in doc["cores"]])
        if kind == "block":
            rho = [{int(n): int(s) for n, s in t.items()} for t in doc["rho"]]
            cores = []
            for records in doc["cores"]:
                core = BlockCore()
                for rec in records:
                    core.blocks(int(rec["occupied"]))[int(rec["n"])] = _decode(rec)
                cores.append(core)
            return BlockMPS(int(doc["K"]), int(doc["N"]), rho, cores)
    except KeyError as exc:
        raise ContainerError(f"missing field {exc}") from None
    raise ContainerError(f"unknown container kind {kind!r}")


def save(x, path) -> None:
    Path(path).write_text(dumps(x) + "\n")


def load(path):
    return loads(Path(path).read_text())
