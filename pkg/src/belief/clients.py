"""Client interfaces for text generation and literature retrieval.

Replay clients serve responses from a JSONL fixture file keyed by
``(stage, question_id, item_index)``.  A key may appear several times; the
``n``-th line answers attempt ``n`` (the last line repeats for later
attempts), which is how fixtures script retries.  A line with an ``"error"``
field makes that attempt fail with :class:`ClientError`.

Live clients talk to an OpenAI-compatible chat endpoint and to NCBI
E-utilities.  They are optional and never used by the test suite.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import urllib.parse
import urllib.request
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

from .errors import ClientError, ConfigurationError, ParseError

log = logging.getLogger(__name__)

CLIENT_MODE_ENV = "BELIEF_CLIENT_MODE"


@dataclass(frozen=True)
class RawDocument:
    id: str
    text: str
    title: str | None = None

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title, "text": self.text}


@runtime_checkable
class TextClient(Protocol):
    def complete(self, prompt: str, *, stage: str, question_id: str, item_index: int, attempt: int = 0) -> str: ...


@runtime_checkable
class RetrievalClient(Protocol):
    def search(self, query: str, k: int, *, question_id: str, attempt: int = 0) -> list[RawDocument]: ...


@dataclass(frozen=True)
class FixtureEntry:
    response: str | None
    error: str | None = None


class ReplayStore:
    """In-memory index over a replay fixture file."""

    def __init__(self, entries: dict[tuple[str, str, int], list[FixtureEntry]]) -> None:
        self._entries = entries

    @classmethod
    def from_lines(cls, lines, source: str = "<fixtures>") -> ReplayStore:
        entries: dict[tuple[str, str, int], list[FixtureEntry]] = {}
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, f"{source}: line {lineno}, column {exc.colno}") from None
            try:
                key = (str(rec["stage"]), str(rec["question_id"]), int(rec["item_index"]))
            except (KeyError, TypeError, ValueError):
                raise ParseError("fixture needs stage, question_id and item_index", f"{source}: line {lineno}") from None
            response = rec.get("response")
            if response is not None and not isinstance(response, str):
                response = json.dumps(response)
            entries.setdefault(key, []).append(FixtureEntry(response, rec.get("error")))
        return cls(entries)

    @classmethod
    def load(cls, path: str | Path) -> ReplayStore:
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            return cls.from_lines(fh, str(path))

    def has(self, stage: str, question_id: str, item_index: int) -> bool:
        return (stage, question_id, item_index) in self._entries

    def get(self, stage: str, question_id: str, item_index: int, attempt: int = 0) -> str:
        try:
            seq = self._entries[(stage, question_id, item_index)]
        except KeyError:
            raise ClientError(f"no fixture for {stage}/{question_id}/{item_index}") from None
        entry = seq[min(attempt, len(seq) - 1)]
        if entry.error is not None or entry.response is None:
            raise ClientError(entry.error or f"fixture {stage}/{question_id}/{item_index} has no response")
        return entry.response


class ReplayTextClient:
    """Serves generation responses from a :class:`ReplayStore`."""

    def __init__(self, store: ReplayStore) -> None:
        self.store = store

    def complete(self, prompt: str, *, stage: str, question_id: str, item_index: int, attempt: int = 0) -> str:
        return self.store.get(stage, question_id, item_index, attempt)


class ReplayRetriever:
    """Serves retrieval results stored under stage ``retrieve``, item 0."""

    def __init__(self, store: ReplayStore) -> None:
        self.store = store

    def search(self, query: str, k: int, *, question_id: str, attempt: int = 0) -> list[RawDocument]:
        text = self.store.get("retrieve", question_id, 0, attempt)
        try:
            docs = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ClientError(f"retrieval fixture for {question_id} is not JSON: {exc.msg}") from None
        if not isinstance(docs, list):
            raise ClientError(f"retrieval fixture for {question_id} must be a JSON array")
        out = []
        for i, doc in enumerate(docs):
            if isinstance(doc, str):
                out.append(RawDocument(f"{question_id}-d{i}", doc))
            elif isinstance(doc, dict) and isinstance(doc.get("text"), str):
                out.append(RawDocument(str(doc.get("id", f"{question_id}-d{i}")), doc["text"], doc.get("title")))
            else:
                raise ClientError(f"retrieval fixture for {question_id} has a malformed document at {i}")
        return out


class RecordingTextClient:
    """Wraps a text client and keeps every prompt it was sent."""

    def __init__(self, inner: TextClient) -> None:
        self.inner = inner
        self.prompts: list[tuple[str, str, int, str]] = []
        self._lock = threading.Lock()

    def complete(self, prompt: str, *, stage: str, question_id: str, item_index: int, attempt: int = 0) -> str:
        with self._lock:
            self.prompts.append((stage, question_id, item_index, prompt))
        return self.inner.complete(prompt, stage=stage, question_id=question_id, item_index=item_index, attempt=attempt)


class ChatCompletionsClient:
    """Minimal OpenAI-compatible chat client (live mode only).

    Configured from ``BELIEF_LLM_BASE_URL``, ``BELIEF_LLM_MODEL`` and
    ``BELIEF_LLM_API_KEY``.
    """

    def __init__(self, base_url: str, model: str, api_key: str | None = None, timeout: float = 120.0) -> None:
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key
        self.timeout = timeout

    @classmethod
    def from_env(cls) -> ChatCompletionsClient:
        base = os.environ.get("BELIEF_LLM_BASE_URL")
        model = os.environ.get("BELIEF_LLM_MODEL")
        if not base or not model:
            raise ConfigurationError("live mode needs BELIEF_LLM_BASE_URL and BELIEF_LLM_MODEL")
        return cls(base, model, os.environ.get("BELIEF_LLM_API_KEY"))

    def build_request(self, prompt: str) -> urllib.request.Request:
        body = {"model": self.model, "temperature": 0.0, "messages": [{"role": "user", "content": prompt}]}
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return urllib.request.Request(self.url, data=json.dumps(body).encode(), headers=headers, method="POST")

    def complete(self, prompt: str, *, stage: str, question_id: str, item_index: int, attempt: int = 0) -> str:
        try:
            with urllib.request.urlopen(self.build_request(prompt), timeout=self.timeout) as resp:
                data = json.load(resp)
            return data["choices"][0]["message"]["content"]
        except (OSError, KeyError, IndexError, ValueError) as exc:
            raise ClientError(f"chat completion failed: {exc}") from exc


class PubMedRetriever:
    """Live literature search via NCBI E-utilities (esearch + efetch)."""

    BASE = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/"

    def __init__(self, api_key: str | None = None, timeout: float = 30.0) -> None:
        self.api_key = api_key or os.environ.get("NCBI_API_KEY")
        self.timeout = timeout

    def search_url(self, query: str, k: int) -> str:
        params = {"db": "pubmed", "term": query, "retmax": str(k), "retmode": "json", "sort": "relevance"}
        if self.api_key:
            params["api_key"] = self.api_key
        return self.BASE + "esearch.fcgi?" + urllib.parse.urlencode(params)

    def fetch_url(self, pmids: list[str]) -> str:
        params = {"db": "pubmed", "id": ",".join(pmids), "retmode": "xml", "rettype": "abstract"}
        if self.api_key:
            params["api_key"] = self.api_key
        return self.BASE + "efetch.fcgi?" + urllib.parse.urlencode(params)

    @staticmethod
    def parse_articles(xml_text: str) -> list[RawDocument]:
        root = ET.fromstring(xml_text)
        docs = []
        for art in root.iter("PubmedArticle"):
            pmid = art.findtext(".//PMID") or ""
            title = "".join(art.find(".//ArticleTitle").itertext()) if art.find(".//ArticleTitle") is not None else None
            abstract = " ".join("".join(node.itertext()) for node in art.iter("AbstractText")).strip()
            text = abstract or title or ""
            if text:
                docs.append(RawDocument(pmid, text, title))
        return docs

    def search(self, query: str, k: int, *, question_id: str, attempt: int = 0) -> list[RawDocument]:
        try:
            with urllib.request.urlopen(self.search_url(query, k), timeout=self.timeout) as resp:
                pmids = json.load(resp)["esearchresult"]["idlist"]
            if not pmids:
                return []
            with urllib.request.urlopen(self.fetch_url(pmids), timeout=self.timeout) as resp:
                docs = self.parse_articles(resp.read().decode("utf-8"))
        except (OSError, KeyError, ValueError, ET.ParseError) as exc:
            raise ClientError(f"PubMed search failed: {exc}") from exc
        order = {pmid: i for i, pmid in enumerate(pmids)}
        return sorted(docs, key=lambda d: order.get(d.id, len(order)))[:k]


def client_mode(explicit: str | None = None) -> str:
    mode = (explicit or os.environ.get(CLIENT_MODE_ENV) or "replay").strip().lower()
    if mode not in ("replay", "live"):
        raise ConfigurationError(f"{CLIENT_MODE_ENV} must be 'replay' or 'live', got {mode!r}")
    return mode
