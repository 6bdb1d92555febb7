"""Word-level tokenization and response-set ingestion.

Responses are split into full-word tokens: whitespace-delimited chunks with
leading/trailing sentence punctuation detached into their own tokens.
Intra-word punctuation (hyphens, apostrophes, decimal points) stays attached,
and case is preserved. Whitespace runs are normalized to single spaces before
tokenization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import EmptyResponse

SENTENCE_PUNCT = ".,;:!?"

# Embedded English stopword list. Single-letter words ("a", "i") are
# deliberately omitted: single letters frequently carry meaning in math and
# names, and the offline equivalence heuristic compares word sets after
# stopword removal.
STOPWORDS = frozenset(
    """
    an and are as at be been but by did do does for from had has have he her
    hers him his in into is it its of on or she that the their them they this
    those to was were will with would
    """.split()
)


def _split_chunk(chunk: str) -> list[str]:
    """Split one whitespace-delimited chunk into word and punctuation tokens."""
    leading: list[str] = []
    trailing: list[str] = []
    while chunk and chunk[0] in SENTENCE_PUNCT:
        leading.append(chunk[0])
        chunk = chunk[1:]
    while chunk and chunk[-1] in SENTENCE_PUNCT:
        trailing.append(chunk[-1])
        chunk = chunk[:-1]
    trailing.reverse()
    middle = [chunk] if chunk else []
    return leading + middle + trailing


def tokenize_words(text: str) -> list[str]:
    """Tokenize text without the non-empty check; '' yields []."""
    tokens: list[str] = []
    for chunk in text.split():
        tokens.extend(_split_chunk(chunk))
    return tokens


def tokenize(text: str) -> list[str]:
    """Split a response into word tokens.

    Raises EmptyResponse if the text is empty after trimming.
    """
    tokens = tokenize_words(text)
    if not tokens:
        raise EmptyResponse("response is empty after trimming")
    return tokens


def is_punct_token(token: str) -> bool:
    return bool(token) and all(c in SENTENCE_PUNCT for c in token)


def detokenize(tokens: Iterable[str]) -> str:
    """Join tokens with spaces, reattaching sentence punctuation.

    A token made purely of sentence punctuation is glued to the previous
    token without a space.
    """
    parts: list[str] = []
    for tok in tokens:
        if parts and not is_punct_token(tok):
            parts.append(" ")
        parts.append(tok)
    return "".join(parts)


def normalize_ws(text: str) -> str:
    """Collapse whitespace runs to single spaces and trim."""
    return " ".join(text.split())


@dataclass
class ResponseSet:
    """A prompt plus its sampled responses and their token sequences."""

    prompt_id: str
    prompt: str
    responses: list[str]
    token_seqs: list[list[str]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.responses:
            raise EmptyResponse(f"{self.prompt_id}: no responses")
        if not self.token_seqs:
            self.token_seqs = [tokenize(r) for r in self.responses]

    @property
    def m(self) -> int:
        return len(self.responses)


def load_response_sets(path: str | Path) -> Iterator[ResponseSet]:
    """Read JSON-lines records {prompt_id, prompt, responses} as ResponseSets."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            yield ResponseSet(
                prompt_id=str(rec["prompt_id"]),
                prompt=rec.get("prompt", ""),
                responses=list(rec["responses"]),
            )
