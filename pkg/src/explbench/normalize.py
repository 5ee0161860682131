"""Canonical text normalizer shared by every module that compares text.

One rule everywhere: lowercase, split on any run of non-alphanumeric
characters, drop empty tokens.  No stemming or lemmatization is performed,
so two cells unify only when their alphanumeric token sequences match
exactly.
"""

from __future__ import annotations

import re

# Unicode-aware "alphanumeric run": word characters minus the underscore.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokens(text: str) -> tuple[str, ...]:
    """Normalize ``text`` to its canonical token sequence."""
    return tuple(_TOKEN_RE.findall(text.lower()))


def key(text: str) -> str:
    """Normalized tokens joined with single spaces; handy as a dict key."""
    return " ".join(tokens(text))
