"""
Reranker gateway models: requests, backends and the typed errors of a
reranking call.
"""

import math
import string
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

MODE_ZERO_SHOT = "zero_shot"
MODE_FEW_SHOT = "few_shot"
PROMPT_MODES = (MODE_ZERO_SHOT, MODE_FEW_SHOT)

SLOT_LETTERS = string.ascii_uppercase
MAX_CANDIDATES = len(SLOT_LETTERS)

DEFAULT_RESPONSE_PATH = ("choices", 0, "message", "content")


class RerankError(Exception):
    """Base class for reranker-gateway failures"""

    pass


class RerankConfigError(RerankError):
    """Raised when a backend configuration is invalid"""

    pass


class PromptError(RerankError):
    """Raised when a request cannot be rendered into a prompt"""

    pass


class PermutationParseError(RerankError):
    """
    Raised when reranker output cannot be turned into a permutation.

    `code` is one of: missing_output_tag, invalid_letter, duplicate_letter,
    wrong_length.
    """

    MISSING_OUTPUT_TAG = "missing_output_tag"
    INVALID_LETTER = "invalid_letter"
    DUPLICATE_LETTER = "duplicate_letter"
    WRONG_LENGTH = "wrong_length"

    def __init__(self, code, message):
        self.code = code
        super().__init__(f"{code}: {message}")


class RerankTransportError(RerankError):
    """Raised when the remote reranker cannot be reached or answers badly"""

    pass


class RerankTimeoutError(RerankTransportError):
    """Raised when the remote reranker does not answer in time"""

    pass


class RetriesExhaustedError(RerankError):
    """Raised when every attempt produced unparseable output"""

    def __init__(self, message, last_error=None):
        self.last_error = last_error
        super().__init__(message)


# ==============================================================================
# REQUEST
# ==============================================================================


@dataclass(frozen=True)
class HistoryEntry:
    """One rated item, rendered as '[n]. Title (Year) [G1|G2] - Rating: r'"""

    title: str
    year: int
    genres: Tuple[str, ...]
    rating: float


@dataclass(frozen=True)
class CandidateEntry:
    letter: str
    title: str
    year: int
    genres: Tuple[str, ...]


@dataclass(frozen=True)
class FewShotExample:
    """
    A similar user's history plus their graded answer (items sorted by
    rating, best first).
    """

    history: Tuple[HistoryEntry, ...]
    candidate_ratings: Tuple[HistoryEntry, ...]


@dataclass(frozen=True)
class RerankRequest:
    """
    Everything a backend needs to rerank one user's shortlist.

    candidate_items holds the item index behind each slot (retrieval order);
    the simulator backend uses it, prompts do not.
    """

    user_history: Tuple[HistoryEntry, ...]
    candidates: Tuple[CandidateEntry, ...]
    fewshot: Optional[FewShotExample] = None
    mode: str = MODE_ZERO_SHOT
    include_reasoning: bool = True
    item_noun: str = "movie"
    user_index: int = -1
    candidate_items: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.mode not in PROMPT_MODES:
            raise PromptError(f"Unknown prompt mode: {self.mode!r}")
        if len(self.candidates) > MAX_CANDIDATES:
            raise PromptError(
                f"{len(self.candidates)} candidates exceed the {MAX_CANDIDATES}-letter alphabet"
            )
        expected = tuple(SLOT_LETTERS[: len(self.candidates)])
        if tuple(c.letter for c in self.candidates) != expected:
            raise PromptError("Candidate letters must be A, B, C, ... in candidate order")
        if self.mode == MODE_FEW_SHOT and self.fewshot is None:
            raise PromptError("few_shot mode requires a reference example")
        if self.candidate_items and len(self.candidate_items) != len(self.candidates):
            raise PromptError("candidate_items must align with candidates")

    @property
    def K(self) -> int:
        return len(self.candidates)


# ==============================================================================
# BACKENDS
# ==============================================================================


@dataclass(frozen=True)
class RemoteLLMBackend:
    """
    Chat-completion style HTTP endpoint.

    The API key comes from settings (VGCL_API_KEY) when not given.
    """

    endpoint: str
    model_name: str
    temperature: float = 1.0
    timeout: float = 60.0
    max_retries: int = 3
    response_path: Tuple = DEFAULT_RESPONSE_PATH
    api_key: Optional[str] = None
    use_cache: bool = True

    kind = "remote_llm"

    def __post_init__(self):
        if not self.endpoint or not self.endpoint.strip():
            raise RerankConfigError("remote_llm backend needs a non-empty endpoint")
        if not self.model_name or not self.model_name.strip():
            raise RerankConfigError("remote_llm backend needs a non-empty model name")
        if self.temperature < 0:
            raise RerankConfigError("temperature must be >= 0")
        if self.timeout <= 0:
            raise RerankConfigError("timeout must be > 0")
        if self.max_retries < 0:
            raise RerankConfigError("max_retries must be >= 0")

    @property
    def attempts(self) -> int:
        return 1 + self.max_retries


@dataclass(frozen=True)
class SimulatorBackend:
    """
    Local Mallows reranker.

    The ideal order of a request puts the user's preferred candidates first
    (in preference order), then the remaining slots in retrieval order.
    """

    theta: float = 1.0
    preferences: Dict[int, Sequence[int]] = field(default_factory=dict)

    kind = "simulator"

    def __post_init__(self):
        if not math.isfinite(self.theta) or self.theta < 0:
            raise RerankConfigError(f"theta must be finite and >= 0, got {self.theta}")

    def ideal_order(self, request: RerankRequest) -> Tuple[int, ...]:
        preferred = list(self.preferences.get(request.user_index, ()))
        slot_of = {item: slot for slot, item in enumerate(request.candidate_items)}
        head = [slot_of[item] for item in preferred if item in slot_of]
        head = list(dict.fromkeys(head))
        tail = [slot for slot in range(request.K) if slot not in set(head)]
        return tuple(head + tail)
