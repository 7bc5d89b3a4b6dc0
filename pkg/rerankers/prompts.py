"""
Reranking prompt template.

Histories are flattened to "[Position]. [Title] ([Year]) [G1|G2] - Rating: r"
and candidates to "[Letter]. [Title] ([Year]) [G1|G2]". Identical requests
render byte-identical prompts.
"""

from typing import Iterable

from .models import (
    MODE_FEW_SHOT,
    CandidateEntry,
    HistoryEntry,
    PromptError,
    RerankRequest,
)


def format_genres(genres: Iterable[str]) -> str:
    return "[" + "|".join(genres) + "]"


def format_history_line(position: int, entry: HistoryEntry) -> str:
    return (
        f"{position}. {entry.title} ({entry.year}) {format_genres(entry.genres)}"
        f" - Rating: {entry.rating:.1f}"
    )


def format_candidate_line(entry: CandidateEntry) -> str:
    return f"{entry.letter}. {entry.title} ({entry.year}) {format_genres(entry.genres)}"


def format_history(entries: Iterable[HistoryEntry]) -> str:
    return "\n".join(
        format_history_line(position, entry) for position, entry in enumerate(entries, start=1)
    )


def build_prompt(req: RerankRequest) -> str:
    """
    Raises:
        PromptError: empty history, fewer than 2 candidates, or more
            candidates than letters
    """
    if not req.user_history:
        raise PromptError("Cannot build a prompt for an empty user history")
    if req.K < 2:
        raise PromptError(f"Reranking needs at least 2 candidates, got {req.K}")

    noun = req.item_noun
    K = req.K
    letters = [c.letter for c in req.candidates]

    sections = [
        f"You are a {noun} recommendation system. Given the user history in "
        f"chronological order, recommend an item from the candidate pool with "
        f"its index letter.",
        "USER HISTORY:\n"
        + format_history(req.user_history)
        + f"\nThe user history shows the {noun}s the user has watched in chronological "
        f"order. The first {noun} is the oldest one the user watched, and the last "
        f"{noun} is the most recent one. Each entry follows this format: "
        f"[Position]. [{noun.title()} Title] ([Release Year]) [Genres] - Rating: "
        f"[User Rating]\nThe user rating ranges from 1.0 to 5.0, with 5.0 being the "
        f"highest level of enjoyment.",
        f"TOP {K} CANDIDATE {noun.upper()} LIST:\n"
        + "\n".join(format_candidate_line(c) for c in req.candidates)
        + f"\nEach candidate {noun} is listed with an index letter (A, B, etc.) "
        f"followed by the {noun} title, release year, and genres.",
    ]

    if req.mode == MODE_FEW_SHOT:
        sections.append(
            "REFERENCE EXAMPLE: A similar user had the following history:\n"
            + format_history(req.fewshot.history)
            + f"\nThis user rated the candidate {noun}s as:\n"
            + format_history(req.fewshot.candidate_ratings)
        )

    task = (
        f"Your task is to reorder these candidates based on the user's preferences, "
        f"where the first {noun} should be the one the user would most likely enjoy, "
        f"and subsequent {noun}s represent decreasing levels of preference"
    )
    task += ", and based on the reference example, too." if req.mode == MODE_FEW_SHOT else "."
    example = "-".join(letters)
    if req.include_reasoning:
        task += (
            f" Please analyze and summarize the user's preferences in paragraph form, "
            f"and write it in <think></think> tags at the beginning of your response. "
            f"Then, explain your reasoning for the ordering of the candidate {noun}s "
            f"and write it in <reasoning></reasoning> tags. Finally, provide your "
            f"recommended ordering of ALL candidate {noun}s as a hyphen-separated list "
            f"of indices (e.g., {example}) and place it in <output></output> tags."
        )
    else:
        task += (
            f" Provide only your recommended ordering of ALL candidate {noun}s as a "
            f"hyphen-separated list of indices (e.g., {example}) placed in "
            f"<output></output> tags, without any explanation."
        )
    sections.append(task)

    sections.append(
        f"Make sure to include ALL {K} {noun} indices in your response. The first "
        f"index should represent the {noun} you believe the user would enjoy most, "
        f"with subsequent indices representing decreasing levels of preference."
    )
    return "\n\n".join(sections) + "\n"
