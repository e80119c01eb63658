"""Embedding interchange format: JSON-lines, one record per line.

    {"id": str, "alg": str, "tag": str, "dim": int, "v": [numbers]}

"alg" names the producer (wavelet, cnn_classification, ...), "tag" the
variant (color mode, layer, ...).  All records in a file must share alg and
dim, and ids must be unique.  Values round-trip at full float64 precision
(shortest-repr decimal serialization).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .scattering import Embedding


def write_embeddings(records, path, alg: str | None = None) -> Path:
    """Write embeddings as JSONL; validates shared alg/dim and unique ids."""
    records = list(records)
    if not records:
        raise DataError("no embedding records to write")
    alg = alg or records[0].algorithm
    dim = records[0].dim
    seen = set()
    path = Path(path)
    with open(path, "w") as fh:
        for rec in records:
            if rec.algorithm != alg:
                raise DataError(f"{rec.image_id}: algorithm {rec.algorithm!r} != {alg!r}")
            if rec.dim != dim:
                raise DataError(f"{rec.image_id}: dim {rec.dim} != {dim}")
            if rec.image_id in seen:
                raise DataError(f"duplicate id {rec.image_id!r}")
            seen.add(rec.image_id)
            fh.write(json.dumps({
                "id": rec.image_id,
                "alg": rec.algorithm,
                "tag": rec.color_mode,
                "dim": rec.dim,
                "v": [float(v) for v in rec.vector],
            }) + "\n")
    return path


def iter_embeddings(path):
    """Stream embedding records from a JSONL file, one at a time.

    Validates per record: well-formed JSON, required fields, dim matching
    the vector length, uniform alg/dim across the file, unique ids.
    Problems are reported with their line number.
    """
    seen = set()
    file_alg = None
    file_dim = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON ({exc})") from exc
            try:
                rid, alg, tag, dim, vec = (obj["id"], obj["alg"], obj["tag"],
                                           obj["dim"], obj["v"])
            except (KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: missing field ({exc})") from exc
            if len(vec) != dim:
                raise DataError(f"{path}:{lineno}: dim {dim} but vector length {len(vec)}")
            if file_alg is None:
                file_alg, file_dim = alg, dim
            elif alg != file_alg or dim != file_dim:
                raise DataError(f"{path}:{lineno}: mixed alg/dim "
                                f"({alg!r}/{dim} vs {file_alg!r}/{file_dim})")
            if rid in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {rid!r}")
            seen.add(rid)
            yield Embedding(vector=np.asarray(vec, dtype=np.float64),
                            algorithm=alg, color_mode=tag, image_id=rid)


def read_embeddings(path) -> list[Embedding]:
    """Read and validate a whole embedding file."""
    records = list(iter_embeddings(path))
    if not records:
        raise DataError(f"no embedding records in {path}")
    return records
