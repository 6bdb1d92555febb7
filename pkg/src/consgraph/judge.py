"""Secondary-LM judge: equivalence, edit/abstain, verification, synthesis.

Two providers share one interface: a remote chat-completions client and a
deterministic offline stand-in for hermetic runs. All verdicts go through an
append-only JSON-lines cache keyed by a content fingerprint, so replaying a
pipeline against a warm cache issues no remote traffic.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import requests

from . import prompts
from .corpus import STOPWORDS, tokenize_words, is_punct_token
from .errors import JudgeParseError, JudgeTransportError

API_KEY_ENV = "CONGR_API_KEY"
DEFAULT_RETRIES = 3
JACCARD_THRESHOLD = 0.6
MIN_EDIT_TOKENS = 5


class Abstain:
    """Sentinel for an explicit abstention."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Abstain"


ABSTAIN = Abstain()


@dataclass
class JudgeVerdict:
    kind: str  # equivalence | edit | verify | synthesize
    request_fingerprint: str
    payload: Any
    provider: str  # remote | offline
    timestamp: float


def fingerprint(kind: str, template_id: str, inputs: tuple[str, ...]) -> str:
    """Content hash of one judge request. Equivalence callers pass the pair
    in canonical (sorted) order so (a,b) and (b,a) collide."""
    h = hashlib.sha256()
    h.update(json.dumps([kind, template_id, list(inputs)], ensure_ascii=False).encode())
    return h.hexdigest()


class VerdictCache:
    """Append-only JSONL verdict store; survives interrupted runs."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._verdicts: dict[str, JudgeVerdict] = {}
        if self.path and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    self._verdicts[rec["fingerprint"]] = JudgeVerdict(
                        kind=rec["kind"],
                        request_fingerprint=rec["fingerprint"],
                        payload=rec["payload"],
                        provider=rec["provider"],
                        timestamp=rec["timestamp"],
                    )

    def __len__(self) -> int:
        return len(self._verdicts)

    def get(self, fp: str) -> JudgeVerdict | None:
        with self._lock:
            return self._verdicts.get(fp)

    def put(self, verdict: JudgeVerdict) -> None:
        with self._lock:
            self._verdicts[verdict.request_fingerprint] = verdict
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(
                        json.dumps(
                            {
                                "fingerprint": verdict.request_fingerprint,
                                "kind": verdict.kind,
                                "payload": verdict.payload,
                                "provider": verdict.provider,
                                "timestamp": verdict.timestamp,
                            },
                            ensure_ascii=False,
                        )
                        + "\n"
                    )

    def counts_by_kind(self) -> dict[str, int]:
        with self._lock:
            counts: dict[str, int] = {}
            for v in self._verdicts.values():
                counts[v.kind] = counts.get(v.kind, 0) + 1
            return counts


def _jaccard(a: set[str], b: set[str]) -> float:
    if not a and not b:
        return 1.0
    union = a | b
    return len(a & b) / len(union) if union else 1.0


def _word_set(text: str) -> set[str]:
    words = {
        t.lower() for t in tokenize_words(text) if not is_punct_token(t)
    }
    kept = words - STOPWORDS
    return kept or words


class OfflineProvider:
    """Deterministic heuristic judge for hermetic testing and dry runs."""

    name = "offline"

    def __init__(self) -> None:
        self.calls = 0

    def equivalence(self, text_a: str, text_b: str, task_kind: str) -> bool:
        self.calls += 1
        return _jaccard(_word_set(text_a), _word_set(text_b)) >= JACCARD_THRESHOLD

    def edit(self, draft: str, task_label: str):
        self.calls += 1
        words = [t for t in tokenize_words(draft) if not is_punct_token(t)]
        if len(words) < MIN_EDIT_TOKENS:
            return ABSTAIN
        if draft.rstrip().rstrip("\"')]}")[-1:] not in (".", "!", "?"):
            return ABSTAIN
        return draft

    def verify(self, problem: str, partial_a: str, partial_b: str) -> tuple[int, int]:
        self.calls += 1
        return (1, 1)

    def synthesize(self, problem: str, masked_candidates: list[str]) -> str:
        self.calls += 1
        return prompts.strip_markers(masked_candidates[0])

    def describe(self) -> dict[str, Any]:
        return {"provider": self.name}


class RemoteProvider:
    """Chat-completions HTTP client (configurable base URL and model).

    Sends {model, messages, temperature} and reads
    choices[0].message.content. Judge calls run at temperature 0 and each
    request is retried up to 3 times on transport or parse failures.
    """

    name = "remote"

    def __init__(
        self,
        url: str,
        model: str,
        api_key: str | None = None,
        retries: int = DEFAULT_RETRIES,
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ):
        self.url = url
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.retries = retries
        self.timeout = timeout
        self.session = session or requests.Session()
        self.calls = 0

    def _complete(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        last_exc: Exception | None = None
        for _ in range(self.retries):
            self.calls += 1
            try:
                resp = self.session.post(
                    self.url, json=body, headers=headers, timeout=self.timeout
                )
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_exc = exc
        raise JudgeTransportError(f"judge request failed after {self.retries} tries: {last_exc}")

    def _complete_parsed(self, prompt: str, parse):
        """Run a completion, re-asking when the reply does not parse."""
        last_exc: Exception | None = None
        for _ in range(self.retries):
            reply = self._complete(prompt)
            try:
                return parse(reply)
            except JudgeParseError as exc:
                last_exc = exc
        raise last_exc  # type: ignore[misc]

    def equivalence(self, text_a: str, text_b: str, task_kind: str) -> bool:
        _, prompt = prompts.render_equivalence(text_a, text_b, task_kind)

        def parse(reply: str) -> bool:
            for line in reversed(reply.strip().splitlines()):
                line = line.strip().strip("-* ").lower()
                if not line:
                    continue
                if "not equivalent" in line:
                    return False
                if "equivalent" in line:
                    return True
            raise JudgeParseError(f"no equivalence verdict in reply: {reply!r}")

        return self._complete_parsed(prompt, parse)

    def edit(self, draft: str, task_label: str):
        _, prompt = prompts.render_edit(draft, task_label)
        reply = self._complete(prompt).strip()
        if reply.strip("\"'").strip().lower() == "abstain":
            return ABSTAIN
        return reply

    def verify(self, problem: str, partial_a: str, partial_b: str) -> tuple[int, int]:
        _, prompt = prompts.render_verify(problem, partial_a, partial_b)

        def parse(reply: str) -> tuple[int, int]:
            matches = re.findall(
                r"Final score:\s*\(?\s*([01])\s*,\s*([01])\s*\)?", reply
            )
            if not matches:
                matches = re.findall(r"\(\s*([01])\s*,\s*([01])\s*\)\s*$", reply.strip())
            if not matches:
                raise JudgeParseError(f"no score tuple in reply: {reply!r}")
            a, b = matches[-1]
            return (int(a), int(b))

        return self._complete_parsed(prompt, parse)

    def synthesize(self, problem: str, masked_candidates: list[str]) -> str:
        _, prompt = prompts.render_synthesize(problem, masked_candidates)
        return self._complete(prompt).strip()

    def describe(self) -> dict[str, Any]:
        return {"provider": self.name, "url": self.url, "model": self.model}


_ABSTAIN_PAYLOAD = {"__abstain__": True}


class Judge:
    """Cache-fronted judge facade over a provider.

    Identity inputs short-circuit before the cache (equivalence of a text
    with itself, verification of identical partials), and concurrent
    identical requests collapse into a single provider call.
    """

    def __init__(self, provider, cache: VerdictCache | None = None):
        self.provider = provider
        self.cache = cache if cache is not None else VerdictCache(None)
        self._inflight_lock = threading.Lock()
        self._inflight: dict[str, threading.Lock] = {}
        self.call_counts: dict[str, int] = {}

    def describe(self) -> dict[str, Any]:
        return self.provider.describe()

    def _count(self, kind: str) -> None:
        self.call_counts[kind] = self.call_counts.get(kind, 0) + 1

    def _key_lock(self, fp: str) -> threading.Lock:
        with self._inflight_lock:
            lock = self._inflight.get(fp)
            if lock is None:
                lock = self._inflight[fp] = threading.Lock()
            return lock

    def _cached(self, kind: str, template_id: str, inputs: tuple[str, ...], compute):
        fp = fingerprint(kind, template_id, inputs)
        with self._key_lock(fp):
            hit = self.cache.get(fp)
            if hit is not None:
                return hit.payload
            payload = compute()
            self.cache.put(
                JudgeVerdict(
                    kind=kind,
                    request_fingerprint=fp,
                    payload=payload,
                    provider=self.provider.name,
                    timestamp=time.time(),
                )
            )
            return payload

    def judge_equivalent(self, text_a: str, text_b: str, task_kind: str = "text") -> bool:
        if not text_a or not text_b:
            raise ValueError("equivalence judging requires non-empty texts")
        self._count("equivalence")
        if text_a == text_b:
            return True
        a, b = sorted((text_a, text_b))
        template_id = (
            prompts.EQUIVALENCE_MATH_ID if task_kind == "math" else prompts.EQUIVALENCE_TEXT_ID
        )
        return bool(
            self._cached(
                "equivalence",
                template_id,
                (a, b),
                lambda: bool(self.provider.equivalence(a, b, task_kind)),
            )
        )

    def edit_and_finalize(self, draft: str, task_label: str = "response"):
        self._count("edit")
        payload = self._cached(
            "edit",
            prompts.EDIT_ID,
            (task_label, draft),
            lambda: self._encode_edit(self.provider.edit(draft, task_label)),
        )
        if payload == _ABSTAIN_PAYLOAD:
            return ABSTAIN
        return payload

    @staticmethod
    def _encode_edit(result):
        return _ABSTAIN_PAYLOAD if result is ABSTAIN else result

    def verify_pair(self, problem: str, partial_a: str, partial_b: str) -> tuple[int, int]:
        if not partial_a or not partial_b:
            raise ValueError("verify_pair requires non-empty partial solutions")
        self._count("verify")
        if partial_a == partial_b:
            return (1, 1)
        payload = self._cached(
            "verify",
            prompts.VERIFY_ID,
            (problem, partial_a, partial_b),
            lambda: list(self.provider.verify(problem, partial_a, partial_b)),
        )
        return (int(payload[0]), int(payload[1]))

    def synthesize_final(self, problem: str, masked_candidates: list[str]) -> str:
        if not masked_candidates:
            raise ValueError("synthesize_final requires at least one candidate")
        self._count("synthesize")
        return self._cached(
            "synthesize",
            prompts.SYNTHESIZE_ID,
            (problem, *masked_candidates),
            lambda: self.provider.synthesize(problem, masked_candidates),
        )


class FailingProvider:
    """Provider that refuses every call; used to prove warm-cache replays."""

    name = "remote"

    def __init__(self) -> None:
        self.calls = 0

    def _fail(self, *args, **kwargs):
        self.calls += 1
        raise JudgeTransportError("transport disabled")

    equivalence = _fail
    edit = _fail
    verify = _fail
    synthesize = _fail

    def describe(self) -> dict[str, Any]:
        return {"provider": "failing"}
