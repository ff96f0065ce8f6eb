from __future__ import annotations

import json

import pytest

from belief.arbitration import ArbitrationInput
from belief.clients import (
    ChatCompletionsClient,
    PubMedRetriever,
    RawDocument,
    RecordingTextClient,
    ReplayRetriever,
    ReplayStore,
    ReplayTextClient,
    client_mode,
)
from belief.errors import ClientError, ConfigurationError, ParseError
from belief.evidence import EvidenceObject, Picos
from belief.frame import make_frame
from belief.prompts import STAGES, PromptLibrary, PromptTemplate, format_evidence, format_options


def store_of(*records):
    return ReplayStore.from_lines([json.dumps(r) for r in records])


class TestReplayStore:
    def test_lookup_by_key(self):
        store = store_of({"stage": "neural", "question_id": "q1", "item_index": 0, "response": "yes"})
        assert store.has("neural", "q1", 0)
        assert store.get("neural", "q1", 0) == "yes"
        assert not store.has("neural", "q1", 1)

    def test_missing_key(self):
        with pytest.raises(ClientError, match="neural/q9/0"):
            store_of().get("neural", "q9", 0)

    def test_attempts_follow_line_order_and_last_repeats(self):
        store = store_of(
            {"stage": "s", "question_id": "q", "item_index": 0, "response": "first"},
            {"stage": "s", "question_id": "q", "item_index": 0, "response": "second"},
        )
        assert [store.get("s", "q", 0, a) for a in range(3)] == ["first", "second", "second"]

    def test_error_entry(self):
        store = store_of(
            {"stage": "s", "question_id": "q", "item_index": 0, "error": "HTTP 503"},
            {"stage": "s", "question_id": "q", "item_index": 0, "response": "ok"},
        )
        with pytest.raises(ClientError, match="503"):
            store.get("s", "q", 0)
        assert store.get("s", "q", 0, attempt=1) == "ok"

    def test_structured_response_is_serialized(self):
        store = store_of({"stage": "s", "question_id": "q", "item_index": 0, "response": {"answer": "A"}})
        assert json.loads(store.get("s", "q", 0)) == {"answer": "A"}

    def test_bad_lines(self):
        with pytest.raises(ParseError, match="line 2"):
            ReplayStore.from_lines(['{"stage": "s", "question_id": "q", "item_index": 0, "response": ""}', "{nope"])
        with pytest.raises(ParseError):
            ReplayStore.from_lines(['{"stage": "s"}'])

    def test_load_bundled(self, store, records):
        for q in records:
            assert store.has("analyze", q.id, 0)
            assert store.has("retrieve", q.id, 0)


class TestReplayClients:
    def test_text_client(self):
        client = ReplayTextClient(store_of({"stage": "neural", "question_id": "q1", "item_index": 2, "response": "B"}))
        assert client.complete("ignored", stage="neural", question_id="q1", item_index=2) == "B"

    def test_prompt_does_not_affect_replay(self):
        client = ReplayTextClient(store_of({"stage": "neural", "question_id": "q1", "item_index": 0, "response": "B"}))
        a = client.complete("one", stage="neural", question_id="q1", item_index=0)
        b = client.complete("two", stage="neural", question_id="q1", item_index=0)
        assert a == b

    def test_retriever_documents(self):
        docs = [{"id": "P1", "text": "t1", "title": "T"}, "plain text"]
        r = ReplayRetriever(store_of({"stage": "retrieve", "question_id": "q1", "item_index": 0, "response": docs}))
        got = r.search("query", 5, question_id="q1")
        assert got == [RawDocument("P1", "t1", "T"), RawDocument("q1-d1", "plain text")]

    @pytest.mark.parametrize("response", ["not json", '{"a": 1}', "[3]"])
    def test_retriever_malformed(self, response):
        r = ReplayRetriever(store_of({"stage": "retrieve", "question_id": "q", "item_index": 0, "response": response}))
        with pytest.raises(ClientError):
            r.search("x", 5, question_id="q")

    def test_recording_client(self):
        inner = ReplayTextClient(store_of({"stage": "neural", "question_id": "q", "item_index": 0, "response": "A"}))
        rec = RecordingTextClient(inner)
        rec.complete("the prompt", stage="neural", question_id="q", item_index=0)
        assert rec.prompts == [("neural", "q", 0, "the prompt")]


class TestClientMode:
    def test_default_replay(self, monkeypatch):
        monkeypatch.delenv("BELIEF_CLIENT_MODE", raising=False)
        assert client_mode() == "replay"

    def test_env(self, monkeypatch):
        monkeypatch.setenv("BELIEF_CLIENT_MODE", "LIVE")
        assert client_mode() == "live"
        assert client_mode("replay") == "replay"

    def test_invalid(self, monkeypatch):
        monkeypatch.setenv("BELIEF_CLIENT_MODE", "offline")
        with pytest.raises(ConfigurationError):
            client_mode()


class TestLiveClientsOffline:
    def test_chat_from_env_requires_settings(self, monkeypatch):
        monkeypatch.delenv("BELIEF_LLM_BASE_URL", raising=False)
        monkeypatch.delenv("BELIEF_LLM_MODEL", raising=False)
        with pytest.raises(ConfigurationError):
            ChatCompletionsClient.from_env()

    def test_chat_request(self):
        client = ChatCompletionsClient("http://localhost:9/v1/", "m", api_key="k")
        req = client.build_request("hello")
        assert req.full_url == "http://localhost:9/v1/chat/completions"
        assert json.loads(req.data)["messages"][0]["content"] == "hello"
        assert req.get_header("Authorization") == "Bearer k"

    def test_pubmed_urls(self):
        r = PubMedRetriever(api_key=None)
        url = r.search_url("(aspirin AND stroke)", 5)
        assert "esearch.fcgi" in url and "retmax=5" in url and "term=%28aspirin+AND+stroke%29" in url
        assert "id=1%2C2" in r.fetch_url(["1", "2"])

    def test_pubmed_parse(self):
        xml = """<PubmedArticleSet>
          <PubmedArticle><MedlineCitation><PMID>11</PMID><Article>
            <ArticleTitle>Title <i>one</i></ArticleTitle>
            <Abstract><AbstractText Label="A">First.</AbstractText><AbstractText>Second.</AbstractText></Abstract>
          </Article></MedlineCitation></PubmedArticle>
          <PubmedArticle><MedlineCitation><PMID>12</PMID><Article><ArticleTitle>Only title</ArticleTitle></Article></MedlineCitation></PubmedArticle>
        </PubmedArticleSet>"""
        docs = PubMedRetriever.parse_articles(xml)
        assert docs[0] == RawDocument("11", "First. Second.", "Title one")
        assert docs[1].text == "Only title"


class TestPrompts:
    def test_all_stages_load_with_versions(self):
        lib = PromptLibrary.default()
        assert set(lib.versions()) == set(STAGES)
        assert all(v == "1" for v in lib.versions().values())

    def test_missing_placeholder_raises(self):
        t = PromptTemplate.parse("x", "## version: 2\nHello $name")
        assert t.version == "2"
        assert t.render(name="A") == "Hello A\n"
        with pytest.raises(KeyError):
            t.render()

    def test_library_needs_every_stage(self, tmp_path):
        (tmp_path / "analyze.txt").write_text("x")
        with pytest.raises(FileNotFoundError):
            PromptLibrary.from_directory(tmp_path)

    def test_format_options(self):
        assert format_options({"A": "Thiamine", "B": "B"}) == "A. Thiamine\nB"

    def test_format_evidence(self):
        obj = EvidenceObject("e", "snip", Picos(population="adults"), ("c1",))
        text = format_evidence([obj])
        assert text.startswith("[1] Snippet: snip") and "population=adults" in text and "c1" in text
        assert format_evidence([]) == "(no evidence retrieved)"

    def test_render_each_stage(self):
        lib = PromptLibrary.default()
        opts = {"yes": "yes", "no": "no"}
        obj = EvidenceObject("e", "Aspirin helps.")
        frame = make_frame(["yes", "no"])
        rendered = [
            lib.render_analysis("Q?", opts),
            lib.render_structure("Q?", "doc text"),
            lib.render_annotation("Q?", opts, obj),
            lib.render_support_only("Q?", opts, obj),
            lib.render_neural("Q?", opts, [obj]),
            lib.render_arbitration(
                ArbitrationInput("Q?", frame, (obj,), "yes", [0.7, 0.1], 0.2, 0.8, "no", "because", 0.6)
            ),
        ]
        for text in rendered:
            assert "Q?" in text and "$" not in text
        assert '"yes": 0.7' in rendered[-1] and "0.600" in rendered[-1]
