"""Token-count estimation used for chunking and context budgets.

The estimator is deliberately tokenizer-free: whitespace word count scaled
by a words-to-tokens ratio. Callers that need exact counts can plug in
their own estimator wherever a ``token_estimator`` argument is accepted.
"""

from __future__ import annotations

import math
from typing import Callable

TokenEstimator = Callable[[str], int]

WORDS_TO_TOKENS = 1.3


def estimate_tokens(text: str, ratio: float = WORDS_TO_TOKENS) -> int:
    """Estimate the token count of ``text`` from its whitespace word count."""
    if not text:
        return 0
    return math.ceil(len(text.split()) * ratio)


def truncate_to_tokens(text: str, limit: int, ratio: float = WORDS_TO_TOKENS) -> str:
    """Truncate ``text`` at a word boundary so its estimate fits ``limit``."""
    if limit <= 0:
        return ""
    words = text.split()
    keep = int(limit / ratio)
    if len(words) <= keep:
        return text
    return " ".join(words[:keep])
