"""
Reranker output parsing.

The first <output>...</output> span holds hyphen-separated slot letters,
best first. Any other text (think/reasoning sections) is ignored.
"""

import re

from ensembles.models import Permutation

from .models import MAX_CANDIDATES, SLOT_LETTERS, PermutationParseError, PromptError

OUTPUT_PATTERN = re.compile(r"<output>(.*?)</output>", re.DOTALL)


def parse_permutation(text, K: int) -> Permutation:
    """
    Map the output letters to a Permutation (list position = 0-indexed rank).

    Checks run in order: output tag, token count, letter validity, duplicates.
    An empty span counts as one empty token.

    Raises:
        PermutationParseError: with code missing_output_tag, invalid_letter,
            duplicate_letter or wrong_length
    """
    if not 1 <= K <= MAX_CANDIDATES:
        raise PromptError(f"K must be in [1, {MAX_CANDIDATES}], got {K}")

    match = OUTPUT_PATTERN.search(text) if isinstance(text, str) else None
    if match is None:
        raise PermutationParseError(
            PermutationParseError.MISSING_OUTPUT_TAG, "no <output></output> span found"
        )

    valid = {letter: slot for slot, letter in enumerate(SLOT_LETTERS[:K])}
    tokens = [token.strip() for token in match.group(1).split("-")]
    if len(tokens) != K:
        raise PermutationParseError(
            PermutationParseError.WRONG_LENGTH, f"expected {K} letters, got {len(tokens)}"
        )

    slots = []
    for token in tokens:
        if token not in valid:
            raise PermutationParseError(
                PermutationParseError.INVALID_LETTER,
                f"{token!r} is not one of {SLOT_LETTERS[0]}-{SLOT_LETTERS[K - 1]}",
            )
        slots.append(valid[token])

    if len(set(slots)) != len(slots):
        repeated = sorted({SLOT_LETTERS[s] for s in slots if slots.count(s) > 1})
        raise PermutationParseError(
            PermutationParseError.DUPLICATE_LETTER, f"repeated letters: {', '.join(repeated)}"
        )

    return Permutation.from_order(slots)


def render_permutation(perm: Permutation) -> str:
    """Canonical '<output>L0-L1-...</output>' rendering (best first)."""
    return "<output>" + "-".join(SLOT_LETTERS[slot] for slot in perm.order) + "</output>"
