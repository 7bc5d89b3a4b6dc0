from unittest import mock

import numpy as np
import requests
from django.core.cache import cache
from django.test import SimpleTestCase, override_settings

from ensembles.models import Permutation

from .models import (
    MODE_FEW_SHOT,
    MODE_ZERO_SHOT,
    SLOT_LETTERS,
    CandidateEntry,
    FewShotExample,
    HistoryEntry,
    PermutationParseError,
    PromptError,
    RemoteLLMBackend,
    RerankConfigError,
    RerankRequest,
    RerankTimeoutError,
    RerankTransportError,
    RetriesExhaustedError,
    SimulatorBackend,
)
from .parsers import parse_permutation, render_permutation
from .prompts import build_prompt, format_history_line
from .serializers import RerankBackendSerializer
from .services import RemoteReranker, extract_text, rerank_once

ENDPOINT = "https://llm.example.org/v1/chat/completions"


def history(n=3):
    return tuple(
        HistoryEntry(title=f"Seen {k}", year=1990 + k, genres=("Drama",), rating=3.0 + k % 3)
        for k in range(n)
    )


def candidates(K):
    return tuple(
        CandidateEntry(letter=SLOT_LETTERS[slot], title=f"Film {slot}", year=2000 + slot,
                       genres=("Action", "Crime"))
        for slot in range(K)
    )


def request_for(K=3, mode=MODE_ZERO_SHOT, **kwargs):
    fewshot = None
    if mode == MODE_FEW_SHOT:
        fewshot = FewShotExample(history=history(2), candidate_ratings=history(3))
    kwargs.setdefault("candidate_items", tuple(range(10, 10 + K)))
    return RerankRequest(
        user_history=history(), candidates=candidates(K), fewshot=fewshot, mode=mode, **kwargs
    )


def fake_response(text=None, payload=None, status=200):
    response = mock.Mock()
    response.status_code = status
    response.json.return_value = (
        payload if payload is not None else {"choices": [{"message": {"content": text}}]}
    )
    if status >= 400:
        response.raise_for_status.side_effect = requests.exceptions.HTTPError(f"{status} Error")
    else:
        response.raise_for_status.return_value = None
    return response


class BuildPromptTests(SimpleTestCase):
    def test_history_line_format(self):
        entry = HistoryEntry(title="Heat", year=1995, genres=("Action", "Crime"), rating=4.5)
        self.assertEqual(format_history_line(1, entry), "1. Heat (1995) [Action|Crime] - Rating: 4.5")

    def test_few_shot_lists_each_letter_once(self):
        prompt = build_prompt(request_for(K=10, mode=MODE_FEW_SHOT))
        start = prompt.index("CANDIDATE MOVIE LIST:")
        end = prompt.index("Each candidate movie")
        section = prompt[start:end]
        for letter in "ABCDEFGHIJ":
            self.assertEqual(section.count(f"\n{letter}. "), 1)
        self.assertNotIn("\nK. ", section)
        self.assertIn("<output>", prompt)
        self.assertIn("REFERENCE EXAMPLE", prompt)
        self.assertIn("ALL 10 movie indices", prompt)

    def test_zero_shot_has_no_reference_block(self):
        self.assertNotIn("REFERENCE EXAMPLE", build_prompt(request_for()))

    def test_deterministic(self):
        self.assertEqual(
            build_prompt(request_for(K=5, mode=MODE_FEW_SHOT)),
            build_prompt(request_for(K=5, mode=MODE_FEW_SHOT)),
        )

    def test_reasoning_sections_optional(self):
        with_reasoning = build_prompt(request_for())
        without = build_prompt(request_for(include_reasoning=False))
        self.assertIn("<think></think>", with_reasoning)
        self.assertIn("<reasoning></reasoning>", with_reasoning)
        self.assertNotIn("<think>", without)
        self.assertIn("<output></output>", without)

    def test_item_noun(self):
        prompt = build_prompt(request_for(item_noun="book"))
        self.assertIn("book recommendation system", prompt)
        self.assertNotIn("movie", prompt)

    def test_history_is_chronological(self):
        prompt = build_prompt(request_for())
        self.assertLess(prompt.index("1. Seen 0"), prompt.index("3. Seen 2"))

    def test_empty_history(self):
        req = RerankRequest(user_history=(), candidates=candidates(3))
        with self.assertRaises(PromptError):
            build_prompt(req)

    def test_single_candidate(self):
        with self.assertRaises(PromptError):
            build_prompt(request_for(K=1))

    def test_request_validation(self):
        with self.assertRaises(PromptError):
            too_many = tuple(
                CandidateEntry(letter=str(k), title="x", year=2000, genres=()) for k in range(27)
            )
            RerankRequest(user_history=history(), candidates=too_many)
        with self.assertRaises(PromptError):
            RerankRequest(user_history=history(), candidates=candidates(3)[::-1])
        with self.assertRaises(PromptError):
            RerankRequest(user_history=history(), candidates=candidates(3), mode=MODE_FEW_SHOT)
        with self.assertRaises(PromptError):
            RerankRequest(user_history=history(), candidates=candidates(3), mode="one_shot")


class ParsePermutationTests(SimpleTestCase):
    def test_direct_parse(self):
        perm = parse_permutation("<think>x</think><output>B-A-C</output>", 3)
        self.assertEqual(perm.ranks, (1, 0, 2))

    def test_whitespace_is_trimmed(self):
        perm = parse_permutation("<output>\n C - A -B \n</output>", 3)
        self.assertEqual(perm.order, (2, 0, 1))

    def test_first_output_span_wins(self):
        perm = parse_permutation("<output>A-B</output> <output>B-A</output>", 2)
        self.assertEqual(perm.order, (0, 1))

    def assertParseCode(self, text, K, code):
        with self.assertRaises(PermutationParseError) as ctx:
            parse_permutation(text, K)
        self.assertEqual(ctx.exception.code, code)

    def test_error_codes(self):
        self.assertParseCode("B-A-C", 3, PermutationParseError.MISSING_OUTPUT_TAG)
        self.assertParseCode("<output>A-B-D</output>", 3, PermutationParseError.INVALID_LETTER)
        self.assertParseCode("<output>a-b-c</output>", 3, PermutationParseError.INVALID_LETTER)
        self.assertParseCode("<output>A-A-B</output>", 3, PermutationParseError.DUPLICATE_LETTER)
        self.assertParseCode("<output>A-B</output>", 3, PermutationParseError.WRONG_LENGTH)

    def test_token_count_is_checked_before_letters(self):
        self.assertParseCode("<output>A-B-C-D</output>", 3, PermutationParseError.WRONG_LENGTH)
        self.assertParseCode("<output></output>", 3, PermutationParseError.WRONG_LENGTH)
        self.assertParseCode("<output>A-A-A-A</output>", 3, PermutationParseError.WRONG_LENGTH)
        self.assertParseCode("<output></output>", 1, PermutationParseError.INVALID_LETTER)

    def test_never_raises_untyped(self):
        rng = np.random.default_rng(0)
        alphabet = list("ABCDabc-- \n/<>") + list("ÄÉßλжあ한😀​") + [
            "<output>",
            "</output>",
            "<output",
            "</outp",
            "<outpu>",
            "output>",
            "<think>",
        ]
        outcomes = {"ok": 0, "typed": 0}
        for _ in range(10_000):
            K = int(rng.integers(1, 5))
            pieces = rng.choice(alphabet, size=int(rng.integers(0, 24)))
            text = "".join(pieces)
            if rng.random() < 0.3:
                # well-formed span, possibly with repeated letters
                letters = rng.choice(list("ABCD"), size=K)
                text = text + "<output>" + "-".join(letters) + "</output>"
            try:
                perm = parse_permutation(text, K)
            except PermutationParseError:
                outcomes["typed"] += 1
            else:
                self.assertEqual(len(perm), K)
                outcomes["ok"] += 1
        self.assertGreater(outcomes["ok"], 0)
        self.assertGreater(outcomes["typed"], 0)
        with self.assertRaises(PermutationParseError):
            parse_permutation(None, 3)

    def test_canonical_rendering_parses_back(self):
        rng = np.random.default_rng(1)
        for K in range(1, 27):
            order = rng.permutation(K).tolist()
            perm = Permutation.from_order(order)
            self.assertEqual(parse_permutation(render_permutation(perm), K), perm)

    def test_K_out_of_range(self):
        with self.assertRaises(PromptError):
            parse_permutation("<output>A</output>", 27)


class SimulatorBackendTests(SimpleTestCase):
    def test_large_dispersion_returns_ideal_order(self):
        backend = SimulatorBackend(theta=80.0)
        rng = np.random.default_rng(0)
        for _ in range(20):
            self.assertEqual(rerank_once(backend, request_for(K=4), rng), Permutation.identity(4))

    def test_preferences_lead_the_ideal_order(self):
        backend = SimulatorBackend(theta=80.0, preferences={5: [12, 99, 10]})
        req = request_for(K=4, user_index=5)
        self.assertEqual(backend.ideal_order(req), (2, 0, 1, 3))
        self.assertEqual(rerank_once(backend, req, np.random.default_rng(1)).order, (2, 0, 1, 3))

    def test_invalid_theta(self):
        with self.assertRaises(RerankConfigError):
            SimulatorBackend(theta=-1.0)

    def test_unknown_backend(self):
        with self.assertRaises(RerankConfigError):
            rerank_once(object(), request_for())


class RemoteRerankerTests(SimpleTestCase):
    def setUp(self):
        cache.clear()
        self.backend = RemoteLLMBackend(endpoint=ENDPOINT, model_name="test-model", api_key="k")

    @mock.patch("rerankers.services.requests.post")
    def test_fixed_answer(self, post):
        post.return_value = fake_response("<think>t</think><output>C-B-A</output>")
        perm = rerank_once(self.backend, request_for())
        self.assertEqual(perm.order, (2, 1, 0))

        _, kwargs = post.call_args
        body = kwargs["json"]
        self.assertEqual(body["model"], "test-model")
        self.assertEqual(body["temperature"], 1.0)
        self.assertEqual(body["messages"][0]["role"], "user")
        self.assertEqual(body["messages"][0]["content"], build_prompt(request_for()))
        self.assertEqual(kwargs["headers"]["Authorization"], "Bearer k")
        self.assertEqual(kwargs["timeout"], 60.0)

    @mock.patch("rerankers.services.requests.post")
    def test_retries_garbage(self, post):
        post.side_effect = [
            fake_response("I like them all"),
            fake_response("<output>A-A-B</output>"),
            fake_response("<output>B-C-A</output>"),
        ]
        backend = RemoteLLMBackend(endpoint=ENDPOINT, model_name="m", max_retries=3)
        with self.assertLogs("rerankers.services", level="WARNING"):
            perm = rerank_once(backend, request_for())
        self.assertEqual(perm.order, (1, 2, 0))
        self.assertEqual(post.call_count, 3)

    @mock.patch("rerankers.services.requests.post")
    def test_retries_exhausted_carries_last_error(self, post):
        post.return_value = fake_response("<output>A-B</output>")
        backend = RemoteLLMBackend(endpoint=ENDPOINT, model_name="m", max_retries=1)
        with self.assertLogs("rerankers.services", level="WARNING"):
            with self.assertRaises(RetriesExhaustedError) as ctx:
                rerank_once(backend, request_for())
        self.assertEqual(ctx.exception.last_error.code, PermutationParseError.WRONG_LENGTH)
        self.assertEqual(post.call_count, 2)

    @mock.patch("rerankers.services.requests.post")
    def test_timeout(self, post):
        post.side_effect = requests.exceptions.Timeout("slow")
        with self.assertLogs("rerankers.services", level="ERROR"):
            with self.assertRaises(RerankTimeoutError):
                rerank_once(self.backend, request_for())
        self.assertEqual(post.call_count, 1)

    @mock.patch("rerankers.services.requests.post")
    def test_http_error_is_transport_failure(self, post):
        post.return_value = fake_response(status=503, payload={})
        with self.assertLogs("rerankers.services", level="ERROR"):
            with self.assertRaises(RerankTransportError):
                rerank_once(self.backend, request_for())

    @mock.patch("rerankers.services.requests.post")
    def test_answers_are_cached_per_vote(self, post):
        post.return_value = fake_response("<output>B-A-C</output>")
        rerank_once(self.backend, request_for(), vote_index=0)
        rerank_once(self.backend, request_for(), vote_index=0)
        self.assertEqual(post.call_count, 1)
        rerank_once(self.backend, request_for(), vote_index=1)
        self.assertEqual(post.call_count, 2)

    @mock.patch("rerankers.services.requests.post")
    def test_cache_can_be_disabled(self, post):
        post.return_value = fake_response("<output>B-A-C</output>")
        backend = RemoteLLMBackend(endpoint=ENDPOINT, model_name="m", use_cache=False)
        rerank_once(backend, request_for())
        rerank_once(backend, request_for())
        self.assertEqual(post.call_count, 2)

    @override_settings(VGCL_API_KEY="from-settings")
    def test_api_key_falls_back_to_settings(self):
        backend = RemoteLLMBackend(endpoint=ENDPOINT, model_name="m")
        self.assertEqual(RemoteReranker(backend).headers()["Authorization"], "Bearer from-settings")

    @override_settings(VGCL_API_KEY="")
    def test_no_key_no_header(self):
        backend = RemoteLLMBackend(endpoint=ENDPOINT, model_name="m")
        self.assertNotIn("Authorization", RemoteReranker(backend).headers())

    def test_extract_text(self):
        payload = {"output": [{"text": "<output>A</output>"}]}
        self.assertEqual(extract_text(payload, ("output", 0, "text")), "<output>A</output>")
        with self.assertRaises(RerankTransportError):
            extract_text(payload, ("choices", 0))
        with self.assertRaises(RerankTransportError):
            extract_text({"choices": [1]}, ("choices", 0))

    def test_backend_validation(self):
        with self.assertRaises(RerankConfigError):
            RemoteLLMBackend(endpoint=" ", model_name="m")
        with self.assertRaises(RerankConfigError):
            RemoteLLMBackend(endpoint=ENDPOINT, model_name="")
        with self.assertRaises(RerankConfigError):
            RemoteLLMBackend(endpoint=ENDPOINT, model_name="m", timeout=0)


class RerankBackendSerializerTests(SimpleTestCase):
    def test_simulator(self):
        serializer = RerankBackendSerializer(data={"simulator": {"theta": 2.5}})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        backend = serializer.to_backend(preferences={0: [3]})
        self.assertIsInstance(backend, SimulatorBackend)
        self.assertEqual(backend.theta, 2.5)
        self.assertEqual(backend.preferences, {0: [3]})
        self.assertIsNone(serializer.oracle)

    def test_simulator_oracle(self):
        serializer = RerankBackendSerializer(data={"simulator": {"oracle": "test"}})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.oracle, "test")

    @override_settings(VGCL_REMOTE_TIMEOUT=12, VGCL_REMOTE_MAX_RETRIES=5)
    def test_remote_defaults_from_settings(self):
        serializer = RerankBackendSerializer(
            data={"remote_llm": {"endpoint": ENDPOINT, "model_name": "m"}}
        )
        self.assertTrue(serializer.is_valid(), serializer.errors)
        backend = serializer.to_backend()
        self.assertIsInstance(backend, RemoteLLMBackend)
        self.assertEqual((backend.timeout, backend.max_retries), (12, 5))
        self.assertEqual(backend.temperature, 1.0)
        self.assertIsNone(backend.api_key)

    @mock.patch.dict("os.environ", {"MY_RERANK_KEY": "secret"})
    def test_api_key_from_named_variable(self):
        serializer = RerankBackendSerializer(
            data={"remote_llm": {"endpoint": ENDPOINT, "model_name": "m", "api_key_env": "MY_RERANK_KEY"}}
        )
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.to_backend().api_key, "secret")

    def test_exactly_one_kind(self):
        both = RerankBackendSerializer(
            data={"simulator": {}, "remote_llm": {"endpoint": ENDPOINT, "model_name": "m"}}
        )
        self.assertFalse(both.is_valid())
        self.assertFalse(RerankBackendSerializer(data={}).is_valid())

    def test_field_errors(self):
        serializer = RerankBackendSerializer(
            data={"remote_llm": {"endpoint": "not a url", "model_name": "m", "timeout": 0}}
        )
        self.assertFalse(serializer.is_valid())
        self.assertIn("endpoint", serializer.errors["remote_llm"])
        self.assertIn("timeout", serializer.errors["remote_llm"])
        negative = RerankBackendSerializer(data={"simulator": {"theta": -1}})
        self.assertFalse(negative.is_valid())
