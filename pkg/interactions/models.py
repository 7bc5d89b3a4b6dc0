"""
Interaction data models.

Plain in-memory records (no database tables): interaction logs, the item
catalog, the id table shared by every artifact, and the leave-one-out split.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set, Tuple


MIN_RATING = 1.0
MAX_RATING = 5.0


class DataIOError(Exception):
    """Base class for interaction / artifact I/O failures"""

    pass


class UnknownIdentifierError(DataIOError):
    """Raised when a user or item id does not resolve against the id table"""

    pass


# ==============================================================================
# ID TABLE
# ==============================================================================


class IdTable:
    """
    Stable id <-> dense index table for users and items.

    Ids are interned in first-seen order; users and items have separate
    index spaces (graph node layout puts users first, then items).
    """

    def __init__(self, user_ids: Iterable[str] = (), item_ids: Iterable[str] = ()):
        self._users: List[str] = []
        self._items: List[str] = []
        self._user_index: Dict[str, int] = {}
        self._item_index: Dict[str, int] = {}
        for user_id in user_ids:
            self.intern_user(user_id)
        for item_id in item_ids:
            self.intern_item(item_id)

    def intern_user(self, user_id: str) -> int:
        index = self._user_index.get(user_id)
        if index is None:
            index = len(self._users)
            self._users.append(user_id)
            self._user_index[user_id] = index
        return index

    def intern_item(self, item_id: str) -> int:
        index = self._item_index.get(item_id)
        if index is None:
            index = len(self._items)
            self._items.append(item_id)
            self._item_index[item_id] = index
        return index

    def user_index(self, user_id: str) -> int:
        try:
            return self._user_index[user_id]
        except KeyError:
            raise UnknownIdentifierError(f"Unknown user id: {user_id!r}") from None

    def item_index(self, item_id: str) -> int:
        try:
            return self._item_index[item_id]
        except KeyError:
            raise UnknownIdentifierError(f"Unknown item id: {item_id!r}") from None

    def user_id(self, index: int) -> str:
        if not 0 <= index < len(self._users):
            raise UnknownIdentifierError(f"Unknown user index: {index}")
        return self._users[index]

    def item_id(self, index: int) -> str:
        if not 0 <= index < len(self._items):
            raise UnknownIdentifierError(f"Unknown item index: {index}")
        return self._items[index]

    @property
    def user_ids(self) -> Tuple[str, ...]:
        return tuple(self._users)

    @property
    def item_ids(self) -> Tuple[str, ...]:
        return tuple(self._items)

    @property
    def n_users(self) -> int:
        return len(self._users)

    @property
    def n_items(self) -> int:
        return len(self._items)

    def __eq__(self, other):
        if not isinstance(other, IdTable):
            return NotImplemented
        return self._users == other._users and self._items == other._items

    def __repr__(self):
        return f"IdTable(users={self.n_users}, items={self.n_items})"


# ==============================================================================
# INTERACTIONS
# ==============================================================================


@dataclass(frozen=True)
class InteractionRecord:
    """
    One observed interaction.

    `sequence` is the input line order of the record that survived
    deduplication; it breaks timestamp ties ("later line = later").
    """

    user_id: str
    item_id: str
    rating: float
    timestamp: int
    sequence: int = 0

    @property
    def chronological_key(self) -> Tuple[int, int]:
        return (self.timestamp, self.sequence)


@dataclass
class InteractionLog:
    """
    Deduplicated interaction records plus the id table they are interned in.

    Invariants (enforced by the loader):
    - no duplicate (user_id, item_id) pairs
    - ratings within [1.0, 5.0]; timestamps non-negative
    """

    records: List[InteractionRecord]
    ids: IdTable

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def index_pairs(self) -> List[Tuple[int, int]]:
        """(user_index, item_index) for every record, in record order."""
        return [
            (self.ids.user_index(r.user_id), self.ids.item_index(r.item_id))
            for r in self.records
        ]

    def by_user(self) -> Dict[str, List[InteractionRecord]]:
        """Records grouped per user, each group in chronological order."""
        grouped: Dict[str, List[InteractionRecord]] = {}
        for record in self.records:
            grouped.setdefault(record.user_id, []).append(record)
        for history in grouped.values():
            history.sort(key=lambda r: r.chronological_key)
        return grouped


# ==============================================================================
# CATALOG
# ==============================================================================


@dataclass(frozen=True)
class CatalogEntry:
    """Item metadata used to flatten histories and candidates into prompts"""

    title: str
    year: int
    genres: Tuple[str, ...] = ()


@dataclass
class Catalog:
    entries: Dict[str, CatalogEntry] = field(default_factory=dict)

    def __contains__(self, item_id):
        return item_id in self.entries

    def __len__(self):
        return len(self.entries)

    def get(self, item_id: str) -> Optional[CatalogEntry]:
        return self.entries.get(item_id)

    def require(self, item_id: str) -> CatalogEntry:
        entry = self.entries.get(item_id)
        if entry is None:
            raise UnknownIdentifierError(f"Item {item_id!r} missing from catalog")
        return entry


# ==============================================================================
# LEAVE-ONE-OUT SPLIT
# ==============================================================================


@dataclass
class SplitDataset:
    """
    Per-user chronological split.

    validation/test map user_id -> item_id for eval users only; users with
    fewer than 3 interactions keep everything in train.
    """

    train: InteractionLog
    validation: Dict[str, str]
    test: Dict[str, str]
    eval_users: Set[str]

    @property
    def ids(self) -> IdTable:
        return self.train.ids
