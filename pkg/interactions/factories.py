"""
factory-boy factories for interaction fixtures used across the app tests.
"""

import factory

from .models import Catalog, CatalogEntry, IdTable, InteractionLog, InteractionRecord


class InteractionRecordFactory(factory.Factory):
    class Meta:
        model = InteractionRecord

    user_id = factory.Sequence(lambda n: f"u{n}")
    item_id = factory.Sequence(lambda n: f"i{n}")
    rating = 4.0
    timestamp = factory.Sequence(lambda n: 100 + n)
    sequence = factory.Sequence(lambda n: n + 1)


class CatalogEntryFactory(factory.Factory):
    class Meta:
        model = CatalogEntry

    title = factory.Sequence(lambda n: f"Title {n}")
    year = factory.Sequence(lambda n: 1990 + n % 30)
    genres = ("Drama",)


def make_log(rows, ids=None) -> InteractionLog:
    """
    InteractionLog from (user_id, item_id[, rating[, timestamp]]) tuples.

    Missing timestamps follow row order; ids are interned in row order.
    """
    ids = ids if ids is not None else IdTable()
    records = []
    for position, row in enumerate(rows, start=1):
        user_id, item_id = row[0], row[1]
        rating = row[2] if len(row) > 2 else 4.0
        timestamp = row[3] if len(row) > 3 else position
        ids.intern_user(user_id)
        ids.intern_item(item_id)
        records.append(
            InteractionRecordFactory(
                user_id=user_id,
                item_id=item_id,
                rating=rating,
                timestamp=timestamp,
                sequence=position,
            )
        )
    return InteractionLog(records=records, ids=ids)


def make_catalog(item_ids) -> Catalog:
    return Catalog(entries={item_id: CatalogEntryFactory() for item_id in item_ids})


def write_tsv(path, rows):
    """Write tab-separated rows (each row a sequence of values)."""
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write("\t".join(str(value) for value in row) + "\n")
    return path
