"""On-disk pipeline artifacts with provenance headers.

JSONL artifacts (candidate store, score matrix) start with one meta record
``{"_meta": {...}}``; CSV artifacts start with a ``# sumeta {...}`` comment
line. Both carry the config hash and seed, and readers reject artifacts whose
hash disagrees with the active configuration. All floats are serialized via
their shortest round-trip repr, so identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from . import SumetaError
from .generator import Candidate, CandidateStore
from .metrics import ScoreMatrix


class ArtifactError(SumetaError):
    pass


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def fmt_value(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


# ---------------------------------------------------------------------------
# generic readers/writers
# ---------------------------------------------------------------------------

def write_jsonl(path, meta: dict, records) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps({"_meta": meta}) + "\n")
        for rec in records:
            fh.write(_dumps(rec) + "\n")


def read_jsonl(path, expected_artifact: str):
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first:
            raise ArtifactError(f"{path}: empty artifact")
        head = json.loads(first)
        meta = head.get("_meta")
        if meta is None or meta.get("artifact") != expected_artifact:
            raise ArtifactError(f"{path}: not a {expected_artifact!r} artifact")
        records = [json.loads(line) for line in fh if line.strip()]
    return meta, records


def write_csv(path, meta: dict, header, rows) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"# sumeta {_dumps(meta)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt_value(v) for v in row])


def read_csv(path):
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith("# sumeta "):
            raise ArtifactError(f"{path}: missing provenance header")
        meta = json.loads(first[len("# sumeta "):])
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = list(reader)
    return meta, header, rows


def check_hash(meta: dict, config_hash: str, path) -> None:
    got = meta.get("config_hash")
    if got != config_hash:
        raise ArtifactError(
            f"{path}: config hash {got} does not match the active config "
            f"{config_hash}; rerun the upstream stage with this configuration"
        )


# ---------------------------------------------------------------------------
# candidate store
# ---------------------------------------------------------------------------

def write_store(path, store: CandidateStore, meta: dict) -> None:
    meta = dict(meta, artifact="candidates", metrics=list(store.metrics),
                skipped=dict(sorted(store.skipped.items())))

    def records():
        for doc_id, cands in store.candidates.items():
            prov = store.provenance[doc_id]
            for c in cands:
                yield {
                    "doc_id": doc_id,
                    "candidate_id": c.candidate_id,
                    "sentence_indices": list(c.sentence_indices),
                    "token_count": c.token_count,
                    "provenance": prov[c.candidate_id],
                }

    write_jsonl(path, meta, records())


def read_store(path):
    meta, records = read_jsonl(path, "candidates")
    store = CandidateStore(metrics=list(meta.get("metrics", [])), candidates={},
                           provenance={}, skipped=dict(meta.get("skipped", {})))
    for rec in records:
        doc_id = rec["doc_id"]
        indices = tuple(rec["sentence_indices"])
        cand = Candidate(
            doc_id=doc_id,
            sentence_indices=indices,
            candidate_id=rec["candidate_id"],
            token_count=rec["token_count"],
        )
        store.candidates.setdefault(doc_id, []).append(cand)
        store.provenance.setdefault(doc_id, {})[cand.candidate_id] = list(rec["provenance"])
    return meta, store


# ---------------------------------------------------------------------------
# score matrix
# ---------------------------------------------------------------------------

def write_matrix(path, matrix: ScoreMatrix, meta: dict) -> None:
    if not matrix.is_normalized:
        raise ArtifactError("refusing to write an un-normalized matrix")
    meta = dict(meta, artifact="scores", metrics=list(matrix.metrics))

    def records():
        for d in matrix.docs.values():
            yield {
                "doc_id": d.doc_id,
                "candidates": list(d.candidate_ids),
                "raw": [[float(v) for v in row] for row in d.raw],
                "normalized": [[float(v) for v in row] for row in d.normalized],
                "mean_normalized": [float(v) for v in d.mean_normalized],
            }

    write_jsonl(path, meta, records())


def read_matrix(path):
    meta, records = read_jsonl(path, "scores")
    matrix = ScoreMatrix(meta["metrics"])
    for rec in records:
        matrix.add_document(rec["doc_id"], rec["candidates"], np.array(rec["raw"], dtype=float))
        d = matrix.docs[rec["doc_id"]]
        d.normalized = np.array(rec["normalized"], dtype=float)
        d.mean_normalized = np.array(rec["mean_normalized"], dtype=float)
    matrix.validate_rectangular()
    return meta, matrix
