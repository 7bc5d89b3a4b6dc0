"""
Versioned artifact persistence.

Embedding binary layout (little-endian):
    b"VGCL" | u32 version=1 | u64 rows | u32 dim | rows*dim float32 row-major

Augmented edges TSV:
    user_id \\t item_id \\t rrf_score \\t votes   (header line first)

Split directory:
    train.tsv (interactions format), validation.tsv / test.tsv (user_id \\t item_id)
"""

import logging
import struct
from pathlib import Path
from typing import Dict, Iterable, Union

import numpy as np

from augmentation.models import AugmentedEdge, AugmentedEdgeSet, SkipRecord
from embeddings.models import EmbeddingMatrix

from .loaders import InteractionFormatError, load_interactions
from .models import DataIOError, IdTable, SplitDataset

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

EMBEDDING_MAGIC = b"VGCL"
EMBEDDING_VERSION = 1
EMBEDDING_HEADER = struct.Struct("<4sIQI")
EMBEDDING_DTYPE = np.dtype("<f4")

EDGE_HEADER = ("user_id", "item_id", "rrf_score", "votes")
SKIP_HEADER = ("user_id", "reason")
# Nine decimal places, not nine significant digits: scores >= 0.1 keep at least
# nine significant digits, the smallest single-vote score 1/26 keeps eight.
SCORE_FORMAT = "{:.9f}"

TRAIN_FILE = "train.tsv"
VALIDATION_FILE = "validation.tsv"
TEST_FILE = "test.tsv"


class EmbeddingFormatError(DataIOError):
    """Raised when an embedding file is corrupt or of an unknown version"""

    pass


# ==============================================================================
# EMBEDDINGS
# ==============================================================================


def save_embeddings(matrix: EmbeddingMatrix, path: PathLike) -> None:
    """
    Write an embedding matrix in the VGCL binary format.

    Values are stored as float32; float32 matrices round-trip bit-exactly.
    """
    values = np.asarray(matrix.values)
    if values.ndim != 2:
        raise EmbeddingFormatError(f"Expected a 2-D matrix, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise EmbeddingFormatError("Refusing to save non-finite embeddings")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows, dim = values.shape
    payload = np.ascontiguousarray(values, dtype=EMBEDDING_DTYPE).tobytes(order="C")

    with path.open("wb") as handle:
        handle.write(EMBEDDING_HEADER.pack(EMBEDDING_MAGIC, EMBEDDING_VERSION, rows, dim))
        handle.write(payload)

    logger.info(f"Saved {rows}x{dim} embeddings to {path}")


def load_embeddings(path: PathLike, n_users: int = 0) -> EmbeddingMatrix:
    """
    Read a VGCL embedding file.

    Raises:
        EmbeddingFormatError: bad magic, version mismatch, truncated file or a
            dimension header inconsistent with the payload length
    """
    path = Path(path)
    data = path.read_bytes()

    if data[:4] != EMBEDDING_MAGIC:
        raise EmbeddingFormatError(f"bad magic in {path}: {data[:4]!r}")
    if len(data) < EMBEDDING_HEADER.size:
        raise EmbeddingFormatError(f"truncated header in {path}")

    _, version, rows, dim = EMBEDDING_HEADER.unpack_from(data, 0)
    if version != EMBEDDING_VERSION:
        raise EmbeddingFormatError(
            f"version mismatch in {path}: file v{version}, expected v{EMBEDDING_VERSION}"
        )

    payload = data[EMBEDDING_HEADER.size :]
    expected = rows * dim * EMBEDDING_DTYPE.itemsize
    if len(payload) < expected:
        raise EmbeddingFormatError(
            f"truncated payload in {path}: {len(payload)} bytes, expected {expected}"
        )
    if len(payload) > expected:
        raise EmbeddingFormatError(
            f"dimension header ({rows}x{dim}) inconsistent with payload length "
            f"{len(payload)} in {path}"
        )

    values = np.frombuffer(payload, dtype=EMBEDDING_DTYPE).reshape(rows, dim).copy()
    return EmbeddingMatrix(values=values, n_users=n_users)


# ==============================================================================
# AUGMENTED EDGES
# ==============================================================================


def write_augmented_edges(edges: AugmentedEdgeSet, path: PathLike, ids: IdTable) -> None:
    """
    Write E_new as TSV with external ids.

    Scores are written with nine decimal places (SCORE_FORMAT), so 1.333333333
    reads back unchanged; values below 0.1 carry fewer than nine significant digits.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with path.open("w", encoding="utf-8") as handle:
        handle.write("\t".join(EDGE_HEADER) + "\n")
        for edge in edges:
            handle.write(
                "\t".join(
                    [
                        ids.user_id(edge.user_index),
                        ids.item_id(edge.item_index),
                        SCORE_FORMAT.format(edge.rrf_score),
                        str(edge.votes),
                    ]
                )
                + "\n"
            )

    logger.info(f"Wrote {len(edges)} augmented edges to {path}")


def read_augmented_edges(path: PathLike, ids: IdTable) -> AugmentedEdgeSet:
    """
    Read an augmented-edges TSV; every id must resolve against `ids`.

    Raises:
        UnknownIdentifierError: unknown user or item id
        InteractionFormatError: malformed line
    """
    path = Path(path)
    edges = []

    with path.open("r", encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if line_number == 1 and tuple(fields) == EDGE_HEADER:
                continue
            if len(fields) != 4:
                raise InteractionFormatError(
                    f"expected 4 tab-separated edge fields, got {len(fields)}",
                    line_number,
                )
            user_id, item_id, score_text, votes_text = fields
            try:
                score = float(score_text)
                votes = int(votes_text)
            except ValueError:
                raise InteractionFormatError(
                    f"bad score/votes: {score_text!r}, {votes_text!r}", line_number
                ) from None

            edges.append(
                AugmentedEdge(
                    user_index=ids.user_index(user_id),
                    item_index=ids.item_index(item_id),
                    rrf_score=score,
                    votes=votes,
                )
            )

    logger.info(f"Read {len(edges)} augmented edges from {path}")
    return AugmentedEdgeSet(edges)


def write_skip_report(skipped: Iterable[SkipRecord], path: PathLike, ids: IdTable) -> None:
    """user_id \\t reason, one line per skipped target user."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    skipped = sorted(skipped, key=lambda record: record.user_index)

    with path.open("w", encoding="utf-8") as handle:
        handle.write("\t".join(SKIP_HEADER) + "\n")
        for record in skipped:
            # Reasons are free text; keep the file two-column
            reason = " ".join(record.reason.split())
            handle.write(f"{ids.user_id(record.user_index)}\t{reason}\n")

    logger.info(f"Wrote skip report ({len(skipped)} users) to {path}")


# ==============================================================================
# SPLIT ARTIFACTS
# ==============================================================================


def _write_map(mapping: Dict[str, str], path: Path) -> None:
    with path.open("w", encoding="utf-8") as handle:
        handle.write("# user_id\titem_id\n")
        for user_id in sorted(mapping):
            handle.write(f"{user_id}\t{mapping[user_id]}\n")


def _read_map(path: Path, ids: IdTable) -> Dict[str, str]:
    mapping = {}
    with path.open("r", encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise InteractionFormatError(
                    f"expected 2 tab-separated fields, got {len(fields)}", line_number
                )
            user_id, item_id = (f.strip() for f in fields)
            ids.intern_user(user_id)
            ids.intern_item(item_id)
            mapping[user_id] = item_id
    return mapping


def save_split(split: SplitDataset, out_dir: PathLike) -> Dict[str, Path]:
    """Write train/validation/test artifacts; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_path = out_dir / TRAIN_FILE
    with train_path.open("w", encoding="utf-8") as handle:
        handle.write("# user_id\titem_id\trating\ttimestamp\n")
        for record in split.train:
            handle.write(
                f"{record.user_id}\t{record.item_id}\t{record.rating!r}\t{record.timestamp}\n"
            )

    validation_path = out_dir / VALIDATION_FILE
    test_path = out_dir / TEST_FILE
    _write_map(split.validation, validation_path)
    _write_map(split.test, test_path)

    logger.info(f"Saved split artifacts to {out_dir}")
    return {"train": train_path, "validation": validation_path, "test": test_path}


def load_split(split_dir: PathLike) -> SplitDataset:
    """
    Rebuild a SplitDataset from its artifacts.

    The id table is interned from train, then validation, then test, so every
    command loading the same directory sees the same indices.
    """
    split_dir = Path(split_dir)
    ids = IdTable()
    train = load_interactions(split_dir / TRAIN_FILE, ids=ids)
    validation = _read_map(split_dir / VALIDATION_FILE, ids)
    test = _read_map(split_dir / TEST_FILE, ids)

    if set(validation) != set(test):
        raise DataIOError(
            f"Validation and test users differ in {split_dir} "
            f"({len(validation)} vs {len(test)})"
        )

    return SplitDataset(
        train=train, validation=validation, test=test, eval_users=set(test)
    )
