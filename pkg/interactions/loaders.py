"""
Interaction and catalog ingestion.

Interactions TSV: user_id \\t item_id \\t rating \\t timestamp ('#' comments)
Metadata TSV:     item_id \\t title \\t year \\t genres (pipe-separated)
"""

import logging
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

from .models import (
    MAX_RATING,
    MIN_RATING,
    Catalog,
    CatalogEntry,
    DataIOError,
    IdTable,
    InteractionLog,
    InteractionRecord,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class InteractionFormatError(DataIOError):
    """Raised when a line does not have the expected tab-separated fields"""

    def __init__(self, message, line_number=None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class RatingOutOfRangeError(InteractionFormatError):
    """Raised when a rating falls outside [1.0, 5.0]"""

    pass


class EmptyInteractionFileError(DataIOError):
    """Raised when an interaction file holds no records"""

    pass


def _data_lines(path: Path):
    """Yield (line_number, stripped_line) for non-blank, non-comment lines."""
    with path.open("r", encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield line_number, line


def parse_interaction_line(line: str, line_number: int) -> Tuple[str, str, float, int]:
    fields = line.split("\t")
    if len(fields) != 4:
        raise InteractionFormatError(
            f"expected 4 tab-separated fields, got {len(fields)}", line_number
        )

    user_id, item_id, rating_text, timestamp_text = (f.strip() for f in fields)
    if not user_id or not item_id:
        raise InteractionFormatError("empty user or item id", line_number)

    try:
        rating = float(rating_text)
    except ValueError:
        raise InteractionFormatError(
            f"rating is not a number: {rating_text!r}", line_number
        ) from None
    if not MIN_RATING <= rating <= MAX_RATING:
        raise RatingOutOfRangeError(
            f"rating out of range [{MIN_RATING}, {MAX_RATING}]: {rating}", line_number
        )

    try:
        timestamp = int(timestamp_text)
    except ValueError:
        raise InteractionFormatError(
            f"timestamp is not an integer: {timestamp_text!r}", line_number
        ) from None
    if timestamp < 0:
        raise InteractionFormatError(f"negative timestamp: {timestamp}", line_number)

    return user_id, item_id, rating, timestamp


def load_interactions(path: PathLike, ids: Optional[IdTable] = None) -> InteractionLog:
    """
    Load an interactions TSV into a deduplicated InteractionLog.

    Duplicate (user, item) pairs keep the record with the latest timestamp;
    equal timestamps keep the later line. Ids are interned in first-seen
    order into `ids` (a fresh table when omitted).

    Raises:
        InteractionFormatError: malformed line (carries the line number)
        RatingOutOfRangeError: rating outside [1.0, 5.0]
        EmptyInteractionFileError: no data lines
    """
    path = Path(path)
    ids = ids if ids is not None else IdTable()

    latest: Dict[Tuple[str, str], InteractionRecord] = {}
    n_lines = 0
    for line_number, line in _data_lines(path):
        user_id, item_id, rating, timestamp = parse_interaction_line(line, line_number)
        n_lines += 1
        ids.intern_user(user_id)
        ids.intern_item(item_id)

        record = InteractionRecord(user_id, item_id, rating, timestamp, line_number)
        previous = latest.get((user_id, item_id))
        if previous is None or timestamp >= previous.timestamp:
            latest[(user_id, item_id)] = record

    if n_lines == 0:
        error_msg = f"Interaction file is empty: {path}"
        logger.error(error_msg)
        raise EmptyInteractionFileError(error_msg)

    records = sorted(latest.values(), key=lambda r: r.sequence)
    if len(records) < n_lines:
        logger.info(
            f"Dropped {n_lines - len(records)} duplicate (user, item) lines from {path}"
        )

    logger.info(
        f"Loaded {len(records)} interactions "
        f"({ids.n_users} users, {ids.n_items} items) from {path}"
    )
    return InteractionLog(records=records, ids=ids)


def load_catalog(path: PathLike) -> Catalog:
    """
    Load item metadata (item_id, title, year, pipe-separated genres).

    An empty year field is read as 0 (unknown release year).
    """
    path = Path(path)
    entries: Dict[str, CatalogEntry] = {}

    for line_number, line in _data_lines(path):
        fields = line.split("\t")
        if len(fields) != 4:
            raise InteractionFormatError(
                f"expected 4 tab-separated metadata fields, got {len(fields)}",
                line_number,
            )
        item_id, title, year_text, genres_text = (f.strip() for f in fields)
        if not item_id:
            raise InteractionFormatError("empty item id", line_number)

        try:
            year = int(year_text) if year_text else 0
        except ValueError:
            raise InteractionFormatError(
                f"year is not an integer: {year_text!r}", line_number
            ) from None

        genres = tuple(g.strip() for g in genres_text.split("|") if g.strip())
        entries[item_id] = CatalogEntry(title=title, year=year, genres=genres)

    logger.info(f"Loaded catalog with {len(entries)} items from {path}")
    return Catalog(entries=entries)
