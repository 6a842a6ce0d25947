import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prefdistill import (LMM, AnnotationError, Constant, GaussianMixture, Linear,
                         MixtureLikelihood, ParameterError, ParseError, Proximity, compare,
                         lmm_annotate, lmm_format_query, lmm_parse_response, reward)
from prefdistill.ranker import (BrightnessTransport, ConstantTransport, HttpTransport,
                                RecordingTransport, ReplayTransport, ScriptedTransport,
                                encode_png, image_checksum, make_transport, to_uint8,
                                verdict_from_rewards)

GOLDEN = Path(__file__).parent / "golden"


def test_proximity_reward_max_at_reference():
    ref = np.array([1.0, -2.0])
    assert reward(ref, Proximity(ref)) == 0.0
    assert reward(ref + 0.1, Proximity(ref)) < 0.0


def test_linear_reward():
    assert reward(np.array([2.0, 0.5]), Linear(np.array([1.0, -1.0]))) == 1.5


def test_mixture_likelihood_reward(sched):
    g = GaussianMixture.from_arrays([0.4, 0.6], [[0.0, 0.0, 0.0], [5.0, 5.0, 5.0]], [1.0, 1.0],
                                    [1, 0])
    r = reward(np.zeros(3), MixtureLikelihood(g, sched, label=1))
    assert r == pytest.approx(-1.5 * math.log(2 * math.pi), rel=1e-14)


def test_compare_examples():
    v = verdict_from_rewards(0.7, 0.7)
    assert (v.win_index, v.lose_index, v.s_gap) == (1, 2, 0.0)
    v = verdict_from_rewards(0.5, 0.2)
    assert v.win_index == 1 and v.s_gap == pytest.approx(0.3)
    ref = np.array([3.0, 1.0])
    v = compare(np.array([0.0, 0.0]), ref, Proximity(ref))
    assert (v.win_index, v.reward_win) == (2, 0.0)
    v = compare(ref, np.array([0.0, 0.0]), Proximity(ref))
    assert v.win_index == 1
    v = compare(np.zeros(2), np.ones(2), Constant(3.0))
    assert (v.win_index, v.s_gap) == (1, 0.0)


vec2 = st.lists(st.floats(-100, 100), min_size=3, max_size=3).map(np.array)


@settings(max_examples=100, deadline=None)
@given(a=vec2, b=vec2, g=vec2)
def test_compare_antisymmetric(a, b, g):
    spec = Linear(g)
    v1, v2 = compare(a, b, spec), compare(b, a, spec)
    assert v1.s_gap == v2.s_gap >= 0
    assert v1.s_gap == v1.reward_win - v1.reward_lose
    if v1.s_gap > 0:
        assert v1.win_index == v2.lose_index


@settings(max_examples=100, deadline=None)
@given(a=vec2, b=vec2, ref=vec2, slope=st.floats(1e-3, 1e3), shift=st.floats(-1e3, 1e3))
def test_verdict_invariant_under_increasing_affine_map(a, b, ref, slope, shift):
    ra, rb = reward(a, Proximity(ref)), reward(b, Proximity(ref))
    v = verdict_from_rewards(ra, rb)
    ta, tb = slope * ra + shift, slope * rb + shift
    if ra != rb and ta != tb:  # transformed values can round into a tie
        assert verdict_from_rewards(ta, tb).win_index == v.win_index


# -- LMM protocol ------------------------------------------------------------

def test_format_query_contains_leaf_question():
    text = lmm_format_query(["Is the leaf shouting?"])
    assert "Q1: Is the leaf shouting?\n" in text
    assert "A1: [Yes/No]" in text


def test_format_query_orders_questions():
    text = lmm_format_query(["first?", "second?"])
    assert text.index("Q1: first?") < text.index("Q2: second?") < text.index("A1:") < text.index("A2:")


def test_format_query_rejects_empty():
    with pytest.raises(ParameterError):
        lmm_format_query([])
    with pytest.raises(ParameterError):
        lmm_format_query(["ok?", "   "])


def test_format_query_golden():
    assert lmm_format_query(["Is the leaf shouting?"]) == (GOLDEN / "query_leaf.txt").read_text()


def test_parse_examples():
    assert lmm_parse_response("A1: Yes\nA2: No", 2) == 1
    assert lmm_parse_response("A1: Yes\nA2: yes\nA3: YES", 3) == 3
    with pytest.raises(ParseError) as exc:
        lmm_parse_response("A1: Maybe", 1)
    assert exc.value.index == 1
    with pytest.raises(ParameterError):
        lmm_parse_response("A1: Yes", 0)


@settings(max_examples=60, deadline=None)
@given(answers=st.lists(st.booleans(), min_size=1, max_size=12))
def test_format_then_parse_is_total(answers):
    n = len(answers)
    prompt = lmm_format_query([f"question {k}?" for k in range(n)])
    assert prompt.count("[Yes/No]") == n
    reply = "\n".join(f"A{k}: {'Yes' if a else 'No'}" for k, a in enumerate(answers, 1))
    assert lmm_parse_response(reply, n) == sum(answers)


def _spec(transport, questions=("a?", "b?", "c?", "d?")):
    return LMM(list(questions), transport, (1, 2, 1), (-1.0, 1.0))


def test_mock_all_yes():
    t = ConstantTransport("Yes")
    assert lmm_annotate(np.zeros(2), _spec(t)) == 4
    assert reward(np.zeros(2), _spec(t)) == 4.0
    assert t.calls == 2


def test_compare_queries_sequentially():
    seen = []

    def fn(prompt, png):
        seen.append(png)
        return "A1: Yes"

    compare(np.array([0.5, 0.5]), np.array([-0.5, -0.5]), _spec(ScriptedTransport(fn), ["q?"]))
    assert len(seen) == 2 and seen[0] != seen[1]


def test_record_then_replay(tmp_path):
    rec = RecordingTransport(BrightnessTransport())
    spec = _spec(rec)
    images = [np.array([a, b]) for a in np.linspace(-1, 1, 5) for b in (-0.5, 0.9)]
    live = [lmm_annotate(x, spec) for x in images]
    path = tmp_path / "session.json"
    rec.save(path)
    replay = _spec(ReplayTransport.load(path))
    assert [lmm_annotate(x, replay) for x in images] == live
    assert len(set(live)) > 1
    with pytest.raises(AnnotationError):
        lmm_annotate(np.array([0.123, 0.456]), replay)


def test_unreachable_endpoint():
    spec = _spec(HttpTransport("http://127.0.0.1:9/never", timeout=0.5))
    with pytest.raises(AnnotationError):
        lmm_annotate(np.zeros(2), spec)


def test_transport_exceptions_become_annotation_errors():
    def boom(prompt, png):
        raise RuntimeError("socket closed")

    with pytest.raises(AnnotationError, match="socket closed"):
        lmm_annotate(np.zeros(2), _spec(ScriptedTransport(boom)))


def test_bad_reply_is_annotation_error():
    spec = _spec(ScriptedTransport(lambda p, i: "I think yes"), ["q?"])
    with pytest.raises(AnnotationError):
        reward(np.zeros(2), spec)


def test_make_transport(tmp_path):
    assert isinstance(make_transport("mock:yes"), ConstantTransport)
    assert make_transport("mock:no").answer == "No"
    assert isinstance(make_transport("mock:brightness"), BrightnessTransport)
    assert isinstance(make_transport("http://example.invalid/x"), HttpTransport)
    (tmp_path / "t.json").write_text(json.dumps({"abc": "A1: Yes"}))
    assert isinstance(make_transport(f"replay:{tmp_path / 't.json'}"), ReplayTransport)
    with pytest.raises(ParameterError):
        make_transport("carrier-pigeon")


def test_http_transport_roundtrip():
    import base64
    import threading
    from http.server import BaseHTTPRequestHandler, HTTPServer

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
            png = base64.b64decode(body["image_png_base64"])
            ok = png.startswith(b"\x89PNG") and "Q2:" in body["prompt"]
            out = json.dumps({"text": "A1: Yes\nA2: " + ("Yes" if ok else "No")}).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(out)))
            self.end_headers()
            self.wfile.write(out)

        def log_message(self, *args):
            pass

    server = HTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        url = f"http://127.0.0.1:{server.server_address[1]}/annotate"
        assert lmm_annotate(np.zeros(2), _spec(HttpTransport(url), ["a?", "b?"])) == 2
    finally:
        server.shutdown()


def test_image_encoding():
    arr = to_uint8(np.array([-1.0, 0.0, 1.0, 5.0]), (1, 4, 1))
    assert arr.ravel().tolist() == [0, 128, 255, 255]
    png = encode_png(np.linspace(0, 1, 12), (2, 2, 3), (0.0, 1.0))
    assert png.startswith(b"\x89PNG")
    assert image_checksum(png) == image_checksum(encode_png(np.linspace(0, 1, 12), (2, 2, 3), (0.0, 1.0)))
