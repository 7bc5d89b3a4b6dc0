"""
Augmentation Service Layer

Per target user (low-degree users at quantile Q_alpha):
1. Retrieve K candidates from the retrieval embeddings
2. Pick a few-shot reference user by cosine similarity
3. Run N independent rerankings (failed ones are dropped)
4. Require ceil(N/2) successful permutations
5. Aggregate with RRF and emit the top-p candidates as new edges

Users run concurrently up to `parallelism`, votes concurrently beneath that;
the final edge set is sorted by (user, item) regardless of completion order.
"""

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from django.conf import settings

from embeddings.algorithms import similar_users, top_k_candidates
from embeddings.models import EmbeddingMatrix
from ensembles.algorithms import rrf_scores, select_top_p
from graphs.models import InteractionGraph
from graphs.services import build_graph, low_degree_users
from interactions.loaders import load_catalog
from interactions.models import (
    Catalog,
    CatalogEntry,
    DataIOError,
    IdTable,
    InteractionLog,
    SplitDataset,
)
from interactions.persistence import (
    load_embeddings,
    load_split,
    write_augmented_edges,
    write_skip_report,
)
from rerankers.models import (
    MODE_FEW_SHOT,
    MODE_ZERO_SHOT,
    SLOT_LETTERS,
    CandidateEntry,
    FewShotExample,
    HistoryEntry,
    RerankError,
    RerankRequest,
    SimulatorBackend,
)
from rerankers.services import rerank_once

from .models import (
    AugmentationConfig,
    AugmentationError,
    AugmentationResult,
    AugmentedEdge,
    AugmentedEdgeSet,
    SkipRecord,
)

logger = logging.getLogger(__name__)

EDGES_FILE = "augmented_edges.tsv"
SKIP_REPORT_FILE = "skip_report.tsv"

# A reference user needs more history than the graded answer it donates
MIN_REFERENCE_HISTORY = 3


class UserSkippedError(AugmentationError):
    """Raised when a target user yields no edges; carries the reason"""

    def __init__(self, user_index, reason):
        self.user_index = user_index
        self.reason = reason
        super().__init__(f"user {user_index} skipped: {reason}")


class UserHistories:
    """Chronological train histories by user index."""

    def __init__(self, log: InteractionLog):
        self.ids: IdTable = log.ids
        self._histories = {
            self.ids.user_index(user_id): records for user_id, records in log.by_user().items()
        }

    def records(self, user_index: int):
        return self._histories.get(user_index, [])


def catalog_entry(catalog: Optional[Catalog], item_id: str) -> CatalogEntry:
    """Catalog metadata; without a catalog the item id stands in as title."""
    if catalog is None:
        return CatalogEntry(title=item_id, year=0, genres=())
    return catalog.require(item_id)


def history_entries(records, catalog: Optional[Catalog]) -> tuple:
    entries = []
    for record in records:
        meta = catalog_entry(catalog, record.item_id)
        entries.append(HistoryEntry(meta.title, meta.year, meta.genres, record.rating))
    return tuple(entries)


def vote_generators(seed: int, user_index: int, n_votes: int) -> List[np.random.Generator]:
    """Independent per-vote streams keyed by (seed, user, vote)."""
    return [
        np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(user_index, vote)))
        for vote in range(n_votes)
    ]


def build_fewshot(
    u: int,
    E_retrieval: EmbeddingMatrix,
    histories: UserHistories,
    catalog: Optional[Catalog],
    cfg: AugmentationConfig,
) -> Optional[FewShotExample]:
    """
    The most similar user with more than three train interactions: their
    last `fewshot_items` rated items, sorted by rating (best first), are the
    graded answer and the rest of their history is shown as context.
    """
    if E_retrieval.n_users < 2:
        return None

    pool = min(cfg.similar_user_pool, E_retrieval.n_users - 1)
    for v in similar_users(E_retrieval, u, pool):
        records = histories.records(v)
        if len(records) <= MIN_REFERENCE_HISTORY:
            continue
        context, answer = records[: -cfg.fewshot_items], records[-cfg.fewshot_items :]
        graded = sorted(answer, key=lambda r: -r.rating)
        return FewShotExample(
            history=history_entries(context, catalog),
            candidate_ratings=history_entries(graded, catalog),
        )
    return None


def build_request(
    u: int,
    candidates,
    E_retrieval: EmbeddingMatrix,
    histories: UserHistories,
    catalog: Optional[Catalog],
    cfg: AugmentationConfig,
) -> RerankRequest:
    ids = histories.ids
    candidate_entries = []
    for slot, item_index in enumerate(candidates.items):
        meta = catalog_entry(catalog, ids.item_id(item_index))
        candidate_entries.append(
            CandidateEntry(SLOT_LETTERS[slot], meta.title, meta.year, meta.genres)
        )

    mode = cfg.prompt_mode
    fewshot = None
    if mode == MODE_FEW_SHOT:
        fewshot = build_fewshot(u, E_retrieval, histories, catalog, cfg)
        if fewshot is None:
            logger.info(f"User {u}: no qualifying similar user, falling back to zero-shot")
            mode = MODE_ZERO_SHOT

    return RerankRequest(
        user_history=history_entries(histories.records(u), catalog),
        candidates=tuple(candidate_entries),
        fewshot=fewshot,
        mode=mode,
        include_reasoning=cfg.include_reasoning,
        item_noun=settings.VGCL_ITEM_NOUN,
        user_index=u,
        candidate_items=tuple(candidates.items),
    )


def augment_user(
    u: int,
    E_retrieval: EmbeddingMatrix,
    graph: InteractionGraph,
    catalog: Optional[Catalog],
    cfg: AugmentationConfig,
    histories: UserHistories,
    rng: Optional[np.random.Generator] = None,
) -> List[AugmentedEdge]:
    """
    Synthesize up to p edges for user u.

    Vote streams come from `rng` when given, otherwise from (cfg.seed, u).

    Raises:
        UserSkippedError: fewer than 2 candidates, missing metadata, or fewer
            than ceil(N/2) successful reranks
    """
    if cfg.backend is None:
        raise AugmentationError("AugmentationConfig has no reranker backend")
    candidates = top_k_candidates(E_retrieval, graph, u, cfg.n_candidates)
    if len(candidates) < 2:
        raise UserSkippedError(u, f"only {len(candidates)} eligible candidates")

    try:
        request = build_request(u, candidates, E_retrieval, histories, catalog, cfg)
    except (RerankError, AugmentationError) as exc:
        raise UserSkippedError(u, f"cannot build request: {exc}") from exc
    except DataIOError as exc:
        raise UserSkippedError(u, f"missing metadata: {exc}") from exc

    if rng is not None:
        seeds = rng.integers(0, 2**63 - 1, size=cfg.n_votes)
        generators = [np.random.default_rng(int(s)) for s in seeds]
    else:
        generators = vote_generators(cfg.seed, u, cfg.n_votes)

    def vote(index):
        try:
            return rerank_once(cfg.backend, request, generators[index], vote_index=index), None
        except RerankError as exc:
            return None, exc

    workers = min(cfg.parallelism, cfg.n_votes)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            outcomes = list(executor.map(vote, range(cfg.n_votes)))
    else:
        outcomes = [vote(index) for index in range(cfg.n_votes)]

    permutations = [perm for perm, _ in outcomes if perm is not None]
    errors = [err for _, err in outcomes if err is not None]
    if len(permutations) < cfg.vote_quorum:
        last = f": {errors[-1]}" if errors else ""
        raise UserSkippedError(
            u,
            f"{len(permutations)}/{cfg.n_votes} reranks succeeded "
            f"(quorum {cfg.vote_quorum}){last}",
        )
    if errors:
        logger.info(f"User {u}: dropped {len(errors)} failed reranks")

    scores = rrf_scores(permutations)
    p = min(cfg.edges_per_user, len(candidates))
    chosen = select_top_p(scores, p, candidate_order=range(len(candidates)))
    return [
        AugmentedEdge(
            user_index=u,
            item_index=candidates.items[slot],
            rrf_score=scores[slot],
            votes=len(permutations),
        )
        for slot in chosen
    ]


def run_augmentation(
    graph: InteractionGraph,
    E_retrieval: EmbeddingMatrix,
    catalog: Optional[Catalog],
    cfg: AugmentationConfig,
    histories: UserHistories,
) -> AugmentationResult:
    """
    Apply augment_user to exactly low_degree_users(graph, Q_alpha).

    Per-user failures become SkipRecords; nothing here is fatal.
    """
    targets = sorted(low_degree_users(graph, cfg.quantile))
    logger.info(
        f"Augmenting {len(targets)} users: K={cfg.n_candidates}, N={cfg.n_votes}, "
        f"p={cfg.edges_per_user}, mode={cfg.prompt_mode}, backend={cfg.backend.kind}"
    )

    def process(u):
        try:
            return augment_user(u, E_retrieval, graph, catalog, cfg, histories), None
        except UserSkippedError as exc:
            return [], SkipRecord(user_index=u, reason=exc.reason)

    if cfg.parallelism > 1:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as executor:
            outcomes = list(executor.map(process, targets))
    else:
        outcomes = [process(u) for u in targets]

    edges, skipped = [], []
    for user_edges, skip in outcomes:
        edges.extend(user_edges)
        if skip is not None:
            logger.warning(f"Skipped user {skip.user_index}: {skip.reason}")
            skipped.append(skip)

    result = AugmentationResult(edges=AugmentedEdgeSet(edges), skipped=skipped, targets=targets)
    logger.info(
        f"Augmentation produced {len(result.edges)} edges for {len(targets)} targets "
        f"({len(skipped)} skipped)"
    )
    return result


def oracle_preferences(split: SplitDataset, target: str = "validation") -> Dict[int, Sequence[int]]:
    """
    Held-out item per eval user, as simulator preferences (an information
    leak used to stand in for a strong reranker).
    """
    mapping = split.validation if target == "validation" else split.test
    ids = split.ids
    return {
        ids.user_index(user_id): [ids.item_index(item_id)] for user_id, item_id in mapping.items()
    }


def run_augmentation_job(
    split_dir,
    embeddings_path,
    out_dir,
    cfg: AugmentationConfig,
    catalog_path=None,
    oracle: Optional[str] = None,
):
    """
    Load split + retrieval embeddings, augment, and write the edges TSV and
    the skip report under out_dir. Returns a JSON-friendly summary.

    With `oracle` ("validation" or "test") a simulator backend is centred on
    each user's held-out item of that split.
    """
    split = load_split(split_dir)
    if oracle is not None:
        if not isinstance(cfg.backend, SimulatorBackend):
            raise AugmentationError("An oracle needs the simulator backend")
        cfg = dataclasses.replace(
            cfg,
            backend=dataclasses.replace(cfg.backend, preferences=oracle_preferences(split, oracle)),
        )
        logger.info(f"Simulator centred on held-out {oracle} items")
    graph = build_graph(split.train)
    E_retrieval = load_embeddings(embeddings_path, n_users=graph.n_users)
    if E_retrieval.n_nodes != graph.n_nodes:
        raise AugmentationError(
            f"Embeddings have {E_retrieval.n_nodes} rows, graph has {graph.n_nodes} nodes"
        )
    catalog = load_catalog(catalog_path) if catalog_path else None
    histories = UserHistories(split.train)

    result = run_augmentation(graph, E_retrieval, catalog, cfg, histories)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    edges_path = out_dir / EDGES_FILE
    skip_path = out_dir / SKIP_REPORT_FILE
    write_augmented_edges(result.edges, edges_path, split.ids)
    write_skip_report(result.skipped, skip_path, split.ids)

    return {
        "edges_path": str(edges_path),
        "skip_report_path": str(skip_path),
        "n_targets": len(result.targets),
        "n_edges": len(result.edges),
        "n_skipped": len(result.skipped),
        "oracle": oracle,
    }
