"""
Evaluation data models: recommendation lists, the long-tail item set and
the per-cutoff report.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Sequence


class EvaluationError(Exception):
    """Raised when an evaluation cannot be set up (bad cutoffs, shapes, target)"""

    pass


@dataclass
class RecommendationList:
    """
    Ordered top-K item indices per eval user (train items excluded).

    Lists are built once at the largest cutoff; `at(u, K)` slices them.
    """

    lists: Dict[int, List[int]]
    K: int

    def __len__(self):
        return len(self.lists)

    def at(self, user_index: int, K: int) -> Sequence[int]:
        return self.lists.get(user_index, [])[:K]

    def truncated(self, K: int) -> Dict[int, List[int]]:
        return {u: items[:K] for u, items in self.lists.items()}


@dataclass(frozen=True)
class LongTailSet:
    """Gamma: items outside the most popular head_fraction of the catalog"""

    items: FrozenSet[int]
    head_fraction: float = 0.2

    def __contains__(self, item_index):
        return item_index in self.items

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class CutoffMetrics:
    recall: float
    ndcg: float
    aplt: float

    def to_dict(self):
        return {"recall": self.recall, "ndcg": self.ndcg, "aplt": self.aplt}


@dataclass
class EvalReport:
    """
    Metrics per cutoff K plus the number of evaluated users.

    Serialized as {"10": {"recall", "ndcg", "aplt"}, ..., "n_eval_users": n}.
    """

    cutoffs: Dict[int, CutoffMetrics] = field(default_factory=dict)
    n_eval_users: int = 0
    target: str = "test"

    def __getitem__(self, K):
        return self.cutoffs[K]

    def to_dict(self):
        report = {str(K): self.cutoffs[K].to_dict() for K in sorted(self.cutoffs)}
        report["n_eval_users"] = self.n_eval_users
        return report

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json() + "\n", encoding="utf-8")
        return path
